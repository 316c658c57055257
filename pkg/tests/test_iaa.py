import json

import numpy as np
import pytest

from linespec.gridlab import GridDictionary, GridSpec
from linespec.iaa import IaaConfig, SingularCovarianceError, iaa_solve
from linespec.sensing import gabor_radar_operator, mimo_radar_operator, subsampled_orthogonal


def _cplx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_config_validation():
    with pytest.raises(ValueError):
        IaaConfig(iterations=0)
    with pytest.raises(ValueError):
        IaaConfig(loading=-1.0)
    with pytest.raises(ValueError):
        IaaConfig(loading_mode="weird")
    with pytest.raises(ValueError):
        IaaConfig.from_dict({"iters": 3})
    assert IaaConfig.from_dict({"iterations": 3}).iterations == 3


def test_zero_data():
    dic = GridDictionary(subsampled_orthogonal(8, 17, seed=0, replace=False), GridSpec((17,)))
    res = iaa_solve(dic, np.zeros(17))
    assert not np.any(res.power) and res.support == []


def test_single_atom_one_iteration():
    # full sampling on the natural grid: B is a scaled DFT, columns orthogonal
    N = 8
    dic = GridDictionary(subsampled_orthogonal(N, 17, seed=0, replace=False), GridSpec((17,)))
    y = dic.columns([6])[:, 0] * (0.5 - 0.2j)
    res = iaa_solve(dic, y, IaaConfig(iterations=1, max_peaks=1))
    assert int(np.argmax(res.power)) == 6
    assert res.support == [6]
    assert res.amplitudes[6] == pytest.approx(0.5 - 0.2j, abs=1e-6)


def test_large_loading_gives_matched_filter():
    op = gabor_radar_operator(N=4, seed=3)
    dic = GridDictionary(op, GridSpec.from_srf(2, (9, 9)))
    y = _cplx(np.random.default_rng(0), 9)
    lam = 1e6 * np.vdot(y, y).real
    res = iaa_solve(dic, y, IaaConfig(iterations=3, loading=lam, loading_mode="absolute", structured=False))
    B = dic.dense()
    mf = B.conj().T @ y / np.sum(np.abs(B) ** 2, axis=0)
    np.testing.assert_allclose(res.amplitudes, mf, rtol=1e-4, atol=1e-8 * np.abs(mf).max())


@pytest.mark.parametrize("ensemble", ["gabor", "mimo"])
def test_structured_path_matches_dense(ensemble):
    if ensemble == "gabor":
        op = gabor_radar_operator(N=4, seed=1)
        spec = GridSpec.from_srf(2, (9, 9))
    else:
        op = mimo_radar_operator(3, 3, 4, seed=1)
        spec = GridSpec.from_srf(2, (9, 9, 9))
    dic = GridDictionary(op, spec)
    y = _cplx(np.random.default_rng(2), op.M)
    fast = iaa_solve(dic, y, IaaConfig(iterations=4))
    slow = iaa_solve(dic, y, IaaConfig(iterations=4, structured=False, chunk=500))
    assert fast.diagnostics["path"] == "radar" and slow.diagnostics["path"] == "dense"
    np.testing.assert_allclose(fast.power, slow.power, rtol=1e-7, atol=1e-10 * slow.power.max())


def test_powers_nonnegative_every_iteration():
    op = mimo_radar_operator(3, 3, 4, seed=4)
    dic = GridDictionary(op, GridSpec.from_srf(1, (9, 9, 9)))
    y = _cplx(np.random.default_rng(3), op.M)
    for it in range(1, 6):
        assert np.all(iaa_solve(dic, y, IaaConfig(iterations=it)).power >= 0)


def test_singular_covariance_without_loading():
    # eight samples drawn from five rows: R has rank five at most
    dic = GridDictionary(subsampled_orthogonal(2, 8, seed=0), GridSpec((10,)))
    y = dic.columns([3])[:, 0]
    with pytest.raises(SingularCovarianceError):
        iaa_solve(dic, y, IaaConfig(loading=0.0))
    assert iaa_solve(dic, y).iterations == 15


def test_recovers_on_grid_targets():
    op = mimo_radar_operator(3, 3, 6, seed=7)
    spec = GridSpec.from_srf(1, (9, 13, 13))
    dic = GridDictionary(op, spec)
    idx = spec.nearest_index(np.array([[1 / 9, 2 / 13, 3 / 13], [5 / 9, 8 / 13, 1 / 13]]))
    y = dic.columns(idx) @ np.array([1.0, 0.7j])
    res = iaa_solve(dic, y, IaaConfig(max_peaks=2))
    assert sorted(res.support) == sorted(idx.tolist())


def test_result_json():
    dic = GridDictionary(subsampled_orthogonal(8, 17, seed=0, replace=False), GridSpec((34,)))
    y = dic.columns([6, 20]) @ np.array([1.0, -1.0])
    out = json.loads(iaa_solve(dic, y, IaaConfig(max_peaks=2)).to_json())
    assert out["method"] == "iaa" and out["config"]["iterations"] == 15
    assert len(out["amplitudes"]) == 2 and "loading_value" in out["diagnostics"]
