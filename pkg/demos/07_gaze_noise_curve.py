"""The irrelevant-gaze ratio curve R(t) over query time.

Relevance labels are external input; here we synthesize fixations whose
noise rate rises toward the end of the query window, a pattern typical of
natural gaze behavior, and bin them.
"""
import numpy as np

from glarify import LabeledFixation, irrelevant_ratio
from glarify.analysis import curve_table

rng = np.random.default_rng(0)

# 4000 fixations; probability of being irrelevant grows from 20% to 50%
# across the query window.
fixations = []
for _ in range(4000):
    t = float(rng.uniform())
    p_irrelevant = 0.2 + 0.3 * t
    fixations.append(LabeledFixation(t=t, relevant=bool(rng.uniform() > p_irrelevant)))

curve = irrelevant_ratio(fixations, n_bins=20)
print(curve_table(curve))

ratios = [b.ratio for b in curve.bins if b.ratio is not None]
print(f"\nfirst-bin ratio ~0.2: {ratios[0]:.3f}; last-bin ratio ~0.5: {ratios[-1]:.3f}")
print(f"bins partition all fixations: {curve.total_fixations == len(fixations)}")
