"""One MIMO radar scene (3 x 3 antennas, L = 41): L1-ERR against IAA at 5 dB."""

from linespec.experiments import preset, run_trial

sc = preset("fig3").replace(snr_db=(5.0,), trials=1)
for rec in run_trial(sc, 0):
    print(f"{rec.method:7s} resolution error {rec.resolution_error:.3f}  ({rec.seconds:.1f} s)")
