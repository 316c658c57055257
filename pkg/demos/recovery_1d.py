"""On-grid spike recovery from 40 of 65 samples, then a noisy off-grid run on a finer grid."""

import numpy as np

from linespec.gridlab import GridDictionary, GridSpec, default_eta, solve_l1_equality, solve_l1_err
from linespec.sensing import subsampled_orthogonal

N, M = 32, 40
L = 2 * N + 1
rng = np.random.default_rng(0)
op = subsampled_orthogonal(N, M, seed=1)

locs = np.array([[5 / L], [20 / L], [47 / L]])
amps = np.exp(2j * np.pi * rng.random(3))
y = op.atoms(locs) @ amps
sol = solve_l1_equality(GridDictionary(op, GridSpec.from_srf(1, (L,))), y)
print("true grid indices :", np.rint(locs[:, 0] * L).astype(int))
print("recovered indices :", sorted(sol.support))
print("amplitude error   :", np.abs(np.sort_complex(sol.amplitudes) - np.sort_complex(amps)).max())

# off-grid targets, 20 dB noise, grid four times finer
locs = np.array([[0.113], [0.402], [0.771]])
y0 = op.atoms(locs) @ amps
noise = rng.standard_normal(M) + 1j * rng.standard_normal(M)
noise *= np.linalg.norm(y0) / np.linalg.norm(noise) / 10
dic = GridDictionary(op, GridSpec.from_srf(4, (L,)))
sol = solve_l1_err(dic, y0 + noise, default_eta(M, np.vdot(noise, noise).real / M))
print("true locations     :", locs[:, 0])
print("estimated locations:", np.sort(sol.locations[:, 0]).round(4))
