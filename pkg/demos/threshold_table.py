"""Sign-flip thresholds next to the inverted run-length approximation.

Run: python3 demos/threshold_table.py   (about a minute)
"""
import numpy as np

from corrdetect import DetectorConfig, build_reference
from corrdetect.calibrate import signflip_sequences, theoretical_threshold, threshold_from_sequences

p, w, H, gammas = 50, 20, 100, (5000, 10000)
rng = np.random.default_rng(1)
reference = build_reference(rng.standard_normal((H + 1, p)))
data = rng.standard_normal((1000, p))

print(f"{'statistic':<14}{'gamma':>7}{'sign-flip':>12}{'theory':>12}")
for kind in ("sum", "max"):
    for variant in ("window", "shewhart"):
        cfg = DetectorConfig(kind=kind, variant=variant, w=w, H=H)
        trials = signflip_sequences(data, reference, cfg, 1000, rng)
        extra = {} if kind == "sum" else {"n_mc": 4000, "rng": rng}
        for g in gammas:
            sim = threshold_from_sequences(trials, g, w).threshold
            th = theoretical_threshold(kind, variant, g, p, w, H, **extra).threshold
            print(f"{variant + '-' + kind:<14}{g:>7}{sim:>12.4f}{th:>12.4f}")
