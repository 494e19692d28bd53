"""Confidence scores from a posterior matrix and the fusion rule."""
import numpy as np

from selective_asr import ConfidenceLevel, FusionThresholds, entropy, fuse, posterior_probability
from selective_asr.confidence import ConfidenceSummary, level_from_probability

# %%
# A 2-step posterior over 3 classes. The probability score averages the
# per-step maxima; entropy is averaged over every cell.
m = np.array([[0.5, 0.3, 0.2],
              [0.1, 0.8, 0.1]])
print("probability:", posterior_probability(m))
print("entropy:    ", round(entropy(m), 5))

# %%
# Peaked rows score near 1 with tiny entropy; flat rows do the opposite.
peaked = np.array([[0.999, 0.0005, 0.0005]] * 4)
flat = np.full((4, 3), 1 / 3)
for name, mat in [("peaked", peaked), ("flat", flat)]:
    print(f"{name:7s} p={posterior_probability(mat):.4f} e={entropy(mat):.5f}")

# %%
# Fluency grades come from the language posterior. A wrong language guess is
# always graded D.
for p, ok in [(0.999, True), (0.97, True), (0.93, True), (0.5, True), (0.999, False)]:
    print(f"p={p:<6} lid_correct={ok!s:5s} -> {level_from_probability(p, ok).name}")

# %%
# Invoke only when all three signals look bad.
t = FusionThresholds(0.96, 0.0015, ConfidenceLevel.B)
cases = [
    (0.90, 0.0020, ConfidenceLevel.C),
    (0.99, 0.0020, ConfidenceLevel.D),
    (0.90, 0.0010, ConfidenceLevel.D),
    (0.90, 0.0020, ConfidenceLevel.B),
]
for p, e, level in cases:
    verdict = fuse(ConfidenceSummary(p, e, level), t)
    print(f"p={p:.2f} e={e:.4f} level={level.name} -> {verdict.value}")
