"""Deterministic reference values used to check the Monte Carlo machinery.

Tensor-product Gauss-Hermite quadrature gives smoothed probabilities of
small networks in up to three dimensions; halfspaces have closed-form
smoothed probabilities and robust radii. The probes measure how close
smoothed networks come to the two Lipschitz bounds for Gaussian
convolutions: ``sqrt(2/pi)/sigma`` for the probability itself and
``1/sigma`` for its normal-quantile transform.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_hermitenorm

from smoothcert import nn
from smoothcert.stats import std_normal_cdf, std_normal_quantile

MAX_QUAD_DIM = 3
CLIP = 1e-9


@dataclass(frozen=True)
class QuadratureSpec:
    nodes_per_dim: int = 64
    dim: int = 2

    def __post_init__(self):
        if self.dim > MAX_QUAD_DIM:
            raise ValueError(f"quadrature supports dim <= {MAX_QUAD_DIM}, got {self.dim}")
        if self.nodes_per_dim < 1:
            raise ValueError("nodes_per_dim must be positive")


@lru_cache(maxsize=32)
def _grid(nodes_per_dim: int, dim: int):
    z, w = roots_hermitenorm(nodes_per_dim)
    w = w / w.sum()
    nodes = np.array(list(itertools.product(z, repeat=dim)))
    weights = np.prod(np.array(list(itertools.product(w, repeat=dim))), axis=1)
    return nodes, weights


def gauss_hermite_grid(spec: QuadratureSpec):
    """Standard-normal nodes ``(K, dim)`` and weights summing to one."""
    return _grid(spec.nodes_per_dim, spec.dim)


def quad_expectation(fn, x, sigma: float, nodes_per_dim: int = 64):
    """``E[fn(x + sigma * Z)]`` for ``Z ~ N(0, I)``; ``fn`` maps ``(K, d)`` rows to ``(K, ...)``."""
    x = np.asarray(x, dtype=float)
    spec = QuadratureSpec(nodes_per_dim, x.shape[0])
    nodes, weights = gauss_hermite_grid(spec)
    values = np.asarray(fn(x + sigma * nodes))
    return np.tensordot(weights, values, axes=(0, 0))


def quad_smoothed_prob(net: nn.Network, x, sigma: float, nodes_per_dim: int = 64) -> np.ndarray:
    """Quadrature estimate of the smoothed soft classifier at ``x``."""
    return quad_expectation(lambda pts: nn.soft_forward(net, pts), x, sigma, nodes_per_dim)


def quad_smoothed_grad(net: nn.Network, x, sigma: float, y: int, nodes_per_dim: int = 64,
                       h: float = 1e-5) -> np.ndarray:
    """Central differences of the quadrature value of ``G(x)_y``."""
    return fd_gradient(lambda p: quad_smoothed_prob(net, p, sigma, nodes_per_dim)[y], x, h)


@dataclass(frozen=True)
class Halfspace:
    """The region ``u . x >= b`` with unit normal ``u``."""

    u: np.ndarray
    b: float

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if abs(np.linalg.norm(u) - 1.0) > 1e-12:
            raise ValueError("halfspace normal must have unit norm")
        object.__setattr__(self, "u", u)

    @classmethod
    def from_normal(cls, w, b: float) -> "Halfspace":
        w = np.asarray(w, dtype=float)
        norm = np.linalg.norm(w)
        return cls(w / norm, b / norm)

    def margin(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.u - self.b

    def label(self, x):
        """Class 1 strictly inside the halfspace, class 0 otherwise."""
        return (self.margin(x) > 0).astype(int)

    def to_network(self, steepness: float = 1.0) -> nn.Network:
        """Single affine layer whose hard output is :meth:`label`."""
        d = self.u.shape[0]
        W = np.vstack([np.zeros(d), steepness * self.u])
        return nn.Network([nn.Layer(W, [0.0, -steepness * self.b], "identity")])


def halfspace_smoothed_prob(h: Halfspace, x, sigma: float) -> float:
    """Probability that ``x + N(0, sigma^2 I)`` lands in the halfspace."""
    return std_normal_cdf(h.margin(x) / sigma)


def halfspace_true_radius(h: Halfspace, x) -> float:
    """Distance to the boundary; smoothing leaves the boundary in place, so
    this is also the exact robust radius of the smoothed classifier."""
    return float(np.abs(h.margin(x)))


def fd_gradient(fn, x, h: float = 1e-5) -> np.ndarray:
    if h <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = h
        grad[i] = (fn(x + e) - fn(x - e)) / (2 * h)
    return grad


@dataclass
class ProbeResult:
    max_ratio: float
    ratios: np.ndarray
    clip_count: int = 0


def _clipped_quantile(p):
    p = np.asarray(p, dtype=float)
    clipped = int(np.count_nonzero((p < CLIP) | (p > 1 - CLIP)))
    return std_normal_quantile(np.clip(p, CLIP, 1 - CLIP)), clipped


def lipschitz_probe(net: nn.Network, sigma: float, pairs, y: int,
                    nodes_per_dim: int = 64) -> ProbeResult:
    """Largest ``sigma * |Q(G(x1)_y) - Q(G(x2)_y)| / |x1 - x2|`` over pairs,
    ``Q`` the normal quantile. Smoothing theory caps this at one."""
    ratios = []
    clips = 0
    for x1, x2 in pairs:
        g = [quad_smoothed_prob(net, p, sigma, nodes_per_dim)[y] for p in (x1, x2)]
        q, c = _clipped_quantile(g)
        clips += c
        dist = np.linalg.norm(np.asarray(x1, float) - np.asarray(x2, float))
        ratios.append(sigma * abs(q[0] - q[1]) / dist)
    ratios = np.array(ratios)
    return ProbeResult(float(ratios.max()) if ratios.size else 0.0, ratios, clips)


def gradient_bound_probe(net: nn.Network, sigma: float, points, directions, y: int,
                         nodes_per_dim: int = 64, h: float = 1e-4) -> ProbeResult:
    """Largest directional derivative of ``G(.)_y`` relative to ``sqrt(2/pi)/sigma``."""
    bound = math.sqrt(2.0 / math.pi) / sigma
    ratios = []
    for x, u in zip(points, directions):
        x = np.asarray(x, float)
        u = np.asarray(u, float) / np.linalg.norm(u)
        gp = quad_smoothed_prob(net, x + h * u, sigma, nodes_per_dim)[y]
        gm = quad_smoothed_prob(net, x - h * u, sigma, nodes_per_dim)[y]
        ratios.append(abs(gp - gm) / (2 * h) / bound)
    ratios = np.array(ratios)
    return ProbeResult(float(ratios.max()) if ratios.size else 0.0, ratios)
