"""
Deterministic oracles
=====================

Gauss-Hermite quadrature gives the smoothed probabilities of a small
network exactly enough to check Monte Carlo estimates, and the probes
measure how close a smoothed network comes to the two Lipschitz bounds
of Gaussian smoothing.
"""

import numpy as np

from smoothcert import nn, smoothing
from smoothcert.oracle import gradient_bound_probe, lipschitz_probe, quad_smoothed_prob
from smoothcert.stats import RngStream

net = nn.init_network([2, 16, 3], "tanh", seed=3)
x, sigma = np.array([0.2, -0.4]), 0.5

exact = quad_smoothed_prob(net, x, sigma)
mc = smoothing.smoothed_soft_forward(smoothing.SmoothedClassifier(net, sigma), x, 200_000, RngStream(0))
print("quadrature:", exact)
print("monte carlo:", mc)

rng = np.random.default_rng(0)
pairs = [(rng.normal(size=2), rng.normal(size=2)) for _ in range(100)]
print("quantile-Lipschitz ratio (bound 1):", lipschitz_probe(net, sigma, pairs, 0).max_ratio)
pts, dirs = rng.normal(size=(100, 2)), rng.normal(size=(100, 2))
print("gradient ratio to sqrt(2/pi)/sigma (bound 1):", gradient_bound_probe(net, sigma, pts, dirs, 0).max_ratio)
