"""Gaussian-smoothed classifiers: Monte Carlo prediction and certification."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from smoothcert import nn
from smoothcert.stats import (RngStream, binom_lower_bound, binom_two_sided_pvalue,
                              std_normal_quantile)

ABSTAIN = -1


@dataclass(frozen=True)
class SmoothedClassifier:
    base: nn.Network
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @property
    def num_classes(self) -> int:
        return self.base.num_classes

    @property
    def input_dim(self) -> int:
        return self.base.input_dim


@dataclass
class PredictionResult:
    prediction: int
    counts: np.ndarray
    alpha: float
    pvalue: float = 1.0

    @property
    def abstained(self) -> bool:
        return self.prediction == ABSTAIN


@dataclass
class CertificationResult:
    prediction: int
    radius: float
    n0_counts: np.ndarray
    n_counts: np.ndarray
    pa_lower: float
    alpha: float

    @property
    def abstained(self) -> bool:
        return self.prediction == ABSTAIN


def certified_radius(pa_lower: float, pb_upper: float, sigma: float) -> float:
    """``sigma/2 * (Phi^-1(pa_lower) - Phi^-1(pb_upper))``.

    ``pa_lower == 1`` (only reachable from an exact oracle) returns +inf.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if not (0.0 < pa_lower <= 1.0 and 0.0 <= pb_upper < 1.0):
        raise ValueError(f"probabilities must lie in (0, 1): pa={pa_lower}, pb={pb_upper}")
    if pa_lower < pb_upper:
        raise ValueError(f"pa_lower {pa_lower} is below pb_upper {pb_upper}")
    if pa_lower == 1.0 or pb_upper == 0.0:
        return math.inf
    if pa_lower == pb_upper:
        return 0.0
    return 0.5 * sigma * (std_normal_quantile(pa_lower) - std_normal_quantile(pb_upper))


def _noisy_points(sc: SmoothedClassifier, x, num: int, rng: RngStream):
    x = np.asarray(x, dtype=float)
    if x.shape != (sc.input_dim,):
        raise nn.DimensionError(sc.input_dim, x.shape[-1] if x.ndim else 0)
    return x + sc.sigma * rng.standard_normal((num, x.shape[0]))


def sample_counts(sc: SmoothedClassifier, x, num: int, rng: RngStream,
                  batch_size: int = 10_000) -> np.ndarray:
    """Class histogram of the base classifier over ``num`` noisy copies of ``x``."""
    counts = np.zeros(sc.num_classes, dtype=np.int64)
    remaining = num
    while remaining > 0:
        this_batch = min(batch_size, remaining)
        labels = nn.hard_forward(sc.base, _noisy_points(sc, x, this_batch, rng))
        counts += np.bincount(labels, minlength=sc.num_classes)
        remaining -= this_batch
    return counts


def smoothed_soft_forward(sc: SmoothedClassifier, x, m: int, rng: RngStream,
                          batch_size: int = 10_000) -> np.ndarray:
    """Monte Carlo estimate of the smoothed soft classifier ``E[F(x + delta)]``."""
    if m < 1:
        raise ValueError("m must be at least 1")
    total = np.zeros(sc.num_classes)
    remaining = m
    while remaining > 0:
        this_batch = min(batch_size, remaining)
        total += nn.soft_forward(sc.base, _noisy_points(sc, x, this_batch, rng)).sum(axis=0)
        remaining -= this_batch
    return total / m


def _top_two(counts):
    order = np.argsort(-counts, kind="stable")
    return int(order[0]), int(order[1])


def predict(sc: SmoothedClassifier, x, n: int, alpha: float, rng: RngStream) -> PredictionResult:
    """Majority vote over ``n`` noisy samples, abstaining unless the top class
    beats the runner-up under an exact two-sided binomial test."""
    if n < 2:
        raise ValueError("predict needs n >= 2")
    counts = sample_counts(sc, x, n, rng)
    top, runner = _top_two(counts)
    n_a, n_b = int(counts[top]), int(counts[runner])
    pvalue = binom_two_sided_pvalue(n_a, n_a + n_b)
    prediction = top if pvalue <= alpha else ABSTAIN
    return PredictionResult(prediction, counts, alpha, pvalue)


def certify(sc: SmoothedClassifier, x, n0: int, n: int, alpha: float,
            rng: RngStream) -> CertificationResult:
    """Two-phase certification: select with ``n0`` samples, estimate with ``n``.

    The phases draw from disjoint child streams of ``rng``. The radius uses
    the single-bound specialization ``pb_upper = 1 - pa_lower``.
    """
    if n0 < 1 or n < 1:
        raise ValueError("n0 and n must be positive")
    counts0 = sample_counts(sc, x, n0, rng.spawn("certify", "select"))
    candidate = int(np.argmax(counts0))
    counts = sample_counts(sc, x, n, rng.spawn("certify", "estimate"))
    pa_lower = binom_lower_bound(int(counts[candidate]), n, alpha).lower
    if pa_lower <= 0.5:
        return CertificationResult(ABSTAIN, 0.0, counts0, counts, pa_lower, alpha)
    radius = sc.sigma * std_normal_quantile(pa_lower)
    return CertificationResult(candidate, float(radius), counts0, counts, pa_lower, alpha)


def l2_to_linf_radius(r: float, d: int) -> float:
    """Largest l-inf radius whose ball fits in the l2 ball of radius ``r`` in R^d."""
    if d < 1:
        raise ValueError("dimension must be positive")
    if r < 0:
        raise ValueError("radius must be nonnegative")
    return r / math.sqrt(d)
