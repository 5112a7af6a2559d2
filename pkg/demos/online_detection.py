"""Calibrate WL-Sum by sign flips, then watch a stream whose correlation changes.

Run: python3 demos/online_detection.py
"""
import numpy as np

from corrdetect import Detector, DetectorConfig, build_reference
from corrdetect.calibrate import signflip_sequences, threshold_from_sequences
from corrdetect.simlab import ScenarioSpec, gen_stream

rng = np.random.default_rng(7)
spec = ScenarioSpec.case(1, 50, r=0.5)
reference = build_reference(spec.sample(101, rng))

cfg = DetectorConfig(kind="sum", variant="window", w=20, H=100)
trials = signflip_sequences(spec.sample(1000, rng), reference, cfg, q=300, rng=rng)
cal = threshold_from_sequences(trials, gamma=1000, w=cfg.w)
print(f"threshold {cal.threshold:.1f} ({cal.method}) for ARL 1000")

change_at = 200
stream = gen_stream(spec, nu=change_at, length=400, rng=rng)
det = Detector(reference, cfg.replace(threshold_sum=cal.threshold), rng)
for state in det.run(stream):
    pass
print(f"change at t={change_at}; alarm at t={det.alarm_time}, "
      f"estimated start t'={state.argmax_candidate}")
