"""
Certifying a smoothed linear classifier
=======================================

For a halfspace the smoothed classifier keeps the same decision boundary
and the exact robust radius is the distance to it. That makes it a good
first check: certified radii should sit just below the true distance.
"""

import numpy as np

from smoothcert import smoothing
from smoothcert.oracle import Halfspace, halfspace_true_radius
from smoothcert.stats import RngStream

h = Halfspace.from_normal([1.0, 2.0], 0.5)
sc = smoothing.SmoothedClassifier(h.to_network(steepness=1e6), sigma=0.5)

rng = np.random.default_rng(0)
for i in range(6):
    x = rng.normal(size=2)
    res = smoothing.certify(sc, x, n0=64, n=10_000, alpha=0.001, rng=RngStream(0, i))
    verdict = "abstain" if res.abstained else f"class {res.prediction}"
    print(f"x={np.round(x, 3)}  {verdict:8s}  certified {res.radius:.4f}  "
          f"exact {halfspace_true_radius(h, x):.4f}")

# prediction alone uses a two-sided test and may abstain near the boundary
x_edge = h.b * h.u + 0.01 * h.u
print(smoothing.predict(sc, x_edge, 1000, 0.001, RngStream(1)))

# the radius formula and its l-infinity translation
print(smoothing.certified_radius(0.9, 0.1, 0.25))
print(smoothing.l2_to_linf_radius(0.435, 3 * 32 * 32) * 255, "/ 255")
