"""BER of the joint detector against the separate-hop baselines.

Runs a small sweep with SNR2 three dB below SNR1 and prints one BER column
per detector.  The joint detector should lead everywhere; EP on the LS
relay estimate comes second once SNR1 is moderate, and the two linear
detectors trail.

    python demos/ber_sweep.py            # about a minute
    python demos/ber_sweep.py 400        # more trials
"""

import sys

from afrelay.harness import ExperimentConfig, run_experiment

trials = int(sys.argv[1]) if len(sys.argv) > 1 else 100
cfg = ExperimentConfig(L=64, M=128, N=256, snr1=[6.0, 8.0, 10.0, 12.0], snr2_offset_db=-3.0,
                       algos=["proposed", "ep_ls", "single_lmmse", "lmmse_ls"], trials=trials, iters=10)
rows = run_experiment(cfg)

table = {}
for r in rows:
    table.setdefault((r.snr1_db, r.snr2_db), {})[r.algorithm] = r.ber

print(f"L={cfg.L} M={cfg.M} N={cfg.N}, {trials} trials per point")
print("snr1  snr2  " + "".join(f"{a:>14}" for a in cfg.algos))
for (s1, s2), bers in sorted(table.items()):
    print(f"{s1:4g}  {s2:4g}  " + "".join(f"{bers[a]:14.2e}" for a in cfg.algos))
