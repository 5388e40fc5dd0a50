"""
Attacking the smoothed classifier
=================================

The attacks maximize the cross-entropy of the smoothed soft classifier,
estimated on one fixed block of noise samples. Here a point 0.25 away
from a halfspace boundary is pushed across it by PGD and DDN, and the
Stein estimator is compared with the exact gradient.
"""

import numpy as np

from smoothcert import attacks
from smoothcert.attacks import AttackConfig, NoiseBlock
from smoothcert.oracle import Halfspace, halfspace_smoothed_prob, quad_smoothed_grad
from smoothcert.stats import RngStream

sigma = 0.25
h = Halfspace(np.array([0.0, 1.0]), 0.0)
net = h.to_network(steepness=4.0)
x = np.array([0.3, 0.25])

for kind in ("smoothadv_pgd", "smoothadv_ddn"):
    cfg = AttackConfig(epsilon=0.5, steps=20, m=64, sigma=sigma, kind=kind)
    x_adv = attacks.run_attack(net, x, 1, cfg, RngStream(0))
    print(f"{kind}: moved {np.linalg.norm(x_adv - x):.3f}, "
          f"smoothed P(class 1) {halfspace_smoothed_prob(h, x, sigma):.3f} -> "
          f"{halfspace_smoothed_prob(h, x_adv, sigma):.3f}")

# the plug-in estimator differentiates -log of the sample mean, so it points
# against grad G(x)_1 and is scaled by 1/G; Stein estimates grad G(x)_1 itself
noise = NoiseBlock.draw(RngStream(1), 200_000, 2, sigma)
print("plug-in:", attacks.grad_plugin(net, x, 1, noise))
print("stein:  ", attacks.grad_stein(net, x, 1, noise, sigma))
print("exact grad G(x)_1:", quad_smoothed_grad(net, x, sigma, 1))
