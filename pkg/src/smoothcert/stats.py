"""Scalar statistics behind Predict and Certify.

Standard normal CDF and quantile, the one-sided Clopper-Pearson lower
bound, the exact two-sided binomial test, and a counter-based Gaussian
stream whose draws are a pure function of ``(seed, stream_id, position)``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats as _sps

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)

# Acklam's rational approximation, relative error 1.15e-9 before refinement.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549671010115819e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def std_normal_cdf(z):
    """Standard normal CDF, accepts scalars or arrays (max abs error ~1e-16)."""
    z_arr = np.asarray(z, dtype=float)
    if np.isnan(z_arr).any():
        raise ValueError("std_normal_cdf: NaN input")
    out = 0.5 * special.erfc(-z_arr / _SQRT2)
    return float(out) if out.ndim == 0 else out


def _initial_quantile(p):
    # p is an array in (0, 0.5]; returns the lower-tail rational guess
    q = np.empty_like(p)
    tail = p < _P_LOW
    if tail.any():
        t = np.sqrt(-2.0 * np.log(p[tail]))
        num = ((((_C[0] * t + _C[1]) * t + _C[2]) * t + _C[3]) * t + _C[4]) * t + _C[5]
        den = (((_D[0] * t + _D[1]) * t + _D[2]) * t + _D[3]) * t + 1.0
        q[tail] = num / den
    mid = ~tail
    if mid.any():
        s = p[mid] - 0.5
        r = s * s
        num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * s
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        q[mid] = num / den
    return q


def std_normal_quantile(p):
    """Inverse of :func:`std_normal_cdf` on the open interval (0, 1).

    A rational initial guess is refined by two Newton steps on the CDF.
    Values above 1/2 are reflected so the refinement always works in the
    lower tail, where the CDF is computed without cancellation.
    """
    p_arr = np.asarray(p, dtype=float)
    if np.isnan(p_arr).any() or (p_arr <= 0.0).any() or (p_arr >= 1.0).any():
        raise ValueError(f"std_normal_quantile: p must lie in (0, 1), got {p!r}")
    flat = np.atleast_1d(p_arr).ravel()
    upper = flat > 0.5
    lower_p = np.where(upper, 1.0 - flat, flat)
    x = _initial_quantile(lower_p)
    for _ in range(2):
        err = 0.5 * special.erfc(-x / _SQRT2) - lower_p
        x = x - err * _SQRT2PI * np.exp(0.5 * x * x)
    x = np.where(upper, -x, x)
    if p_arr.ndim == 0:
        return float(x[0])
    return x.reshape(p_arr.shape)


@dataclass(frozen=True)
class ConfidenceBound:
    count: int
    trials: int
    alpha: float
    lower: float


def binom_upper_tail(k: int, n: int, p: float) -> float:
    """P[Binomial(n, p) >= k] via the regularized incomplete Beta."""
    if k <= 0:
        return 1.0
    if k > n:
        return 0.0
    return float(special.betainc(k, n - k + 1, p))


def binom_lower_bound(k: int, n: int, alpha: float, tol: float = 1e-12) -> ConfidenceBound:
    """One-sided Clopper-Pearson lower bound at level ``1 - alpha``.

    The bound is the ``p`` at which ``P[Binomial(n, p) >= k]`` equals
    ``alpha``, located by bisection (the tail is increasing in ``p``).
    """
    if n <= 0:
        raise ValueError(f"trials must be positive, got n={n}")
    if k < 0 or k > n:
        raise ValueError(f"count must satisfy 0 <= k <= n, got k={k}, n={n}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if k == 0:
        return ConfidenceBound(k, n, alpha, 0.0)
    lo, hi = 0.0, k / n
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if binom_upper_tail(k, n, mid) < alpha:
            lo = mid
        else:
            hi = mid
    # lo is the last point known to sit below the root, so coverage holds
    return ConfidenceBound(k, n, alpha, lo)


def binom_two_sided_pvalue(k: int, n: int) -> float:
    """Exact two-sided p-value of ``k`` successes under Binomial(n, 1/2)."""
    if n <= 0 or k < 0 or k > n:
        raise ValueError(f"need 0 <= k <= n and n > 0, got k={k}, n={n}")
    return float(_sps.binomtest(k, n, 0.5, alternative="two-sided").pvalue)


def binom_two_sided_test(k: int, n: int, alpha: float) -> bool:
    """True when the null ``p = 1/2`` is rejected at level ``alpha``."""
    return binom_two_sided_pvalue(k, n) <= alpha


def derive_stream_id(*parts) -> int:
    """Deterministic 64-bit stream id from a tuple of labels and indices."""
    text = "\x1f".join(repr(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


class RngStream:
    """Counter-based Gaussian source built on Philox4x64.

    The key is ``(seed, stream_id)``; ``counter`` is the number of 64-bit
    words consumed so far. Word ``i`` of a stream never depends on how the
    preceding draws were chunked, so a stream can be replayed or split
    without coordination between workers.
    """

    def __init__(self, seed: int, stream_id: int = 0, counter: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_id = int(stream_id) & 0xFFFFFFFFFFFFFFFF
        self.counter = int(counter)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, counter={self.counter})"

    def spawn(self, *parts) -> "RngStream":
        """Child stream keyed by this stream's id and ``parts``; position 0."""
        return RngStream(self.seed, derive_stream_id(self.stream_id, *parts))

    def raw(self, k: int) -> np.ndarray:
        block, skip = divmod(self.counter, 4)
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        gen = np.random.Philox(key=key, counter=np.array([block, 0, 0, 0], dtype=np.uint64))
        words = gen.random_raw(skip + k)[skip:]
        self.counter += k
        return words

    def uniform(self, size) -> np.ndarray:
        """Uniform draws on the open interval (0, 1)."""
        shape = (size,) if np.isscalar(size) else tuple(size)
        k = int(np.prod(shape, dtype=np.int64))
        words = self.raw(k)
        return (((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53).reshape(shape)

    def standard_normal(self, size) -> np.ndarray:
        return std_normal_quantile(self.uniform(size))


def sample_gaussian(rng: RngStream, dim: int, sigma: float, count: int | None = None) -> np.ndarray:
    """I.i.d. N(0, sigma^2) coordinates: shape ``(dim,)`` or ``(count, dim)``."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    shape = (dim,) if count is None else (count, dim)
    return sigma * rng.standard_normal(shape)
