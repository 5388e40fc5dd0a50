"""l2 attacks on smoothed soft classifiers.

The objective is the cross-entropy of the smoothed soft classifier,
``-log E[F(x' + delta)_y]``, estimated on a fixed block of noise samples.
Two gradient estimators are available: ``plugin`` differentiates the log
of the Monte Carlo mean exactly; ``stein`` estimates the gradient of the
smoothed probability itself from function values only.

Every attack has a batched core operating on ``X (B, d)``, ``Y (B,)`` and
``noise (B, m, d)``; the single-input functions wrap it with ``B = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from smoothcert import nn
from smoothcert.stats import RngStream

KINDS = ("smoothadv_pgd", "smoothadv_ddn", "vanilla_pgd")
ESTIMATORS = ("plugin", "stein")


@dataclass
class AttackConfig:
    epsilon: float
    steps: int = 10
    m: int = 1
    sigma: float = 0.25
    kind: str = "smoothadv_pgd"
    estimator: str = "plugin"
    box: tuple[float, float] | None = None
    # DDN schedule; defaults are the published DDN settings
    ddn_init_norm: float = 1.0
    ddn_gamma: float = 0.05
    ddn_step_init: float = 1.0
    ddn_step_final: float = 0.01

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.steps < 1 or self.m < 1:
            raise ValueError("steps and m must be at least 1")
        if self.kind not in KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.kind != "vanilla_pgd" and not self.sigma > 0:
            raise ValueError("sigma must be positive")


@dataclass
class NoiseBlock:
    """``m`` Gaussian perturbations reused by every step of one attack run."""

    samples: np.ndarray

    @classmethod
    def draw(cls, rng: RngStream, m: int, dim: int, sigma: float) -> "NoiseBlock":
        return cls(sigma * rng.standard_normal((m, dim)))

    @property
    def m(self) -> int:
        return self.samples.shape[0]


def _samples(noise) -> np.ndarray:
    samples = noise.samples if isinstance(noise, NoiseBlock) else np.asarray(noise, dtype=float)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise ValueError("noise block must be a nonempty (m, d) array")
    return samples


def project_l2_ball(x_cand, x_center, epsilon):
    """Project rows of ``x_cand`` onto the l2 ball of radius ``epsilon`` around ``x_center``."""
    x_cand = np.asarray(x_cand, dtype=float)
    x_center = np.asarray(x_center, dtype=float)
    diff = x_cand - x_center
    norm = np.linalg.norm(diff, axis=-1, keepdims=True)
    eps = np.asarray(epsilon, dtype=float)
    if eps.ndim == 1:
        eps = eps[:, None]
    scale = np.where(norm > eps, eps / np.where(norm > 0, norm, 1.0), 1.0)
    return x_center + diff * scale


def _clip(X, box):
    return X if box is None else np.clip(X, box[0], box[1])


# batched estimators --------------------------------------------------------

def _noisy_rows(X, noise):
    B, m, d = noise.shape
    return (X[:, None, :] + noise).reshape(B * m, d)


def plugin_batch(net: nn.Network, X, Y, noise):
    """Objective values ``(B,)`` and exact surrogate gradients ``(B, d)``."""
    B, m, d = noise.shape
    py, dpy = nn.class_prob_input_grad(net, _noisy_rows(X, noise), np.repeat(Y, m))
    mean_p = py.reshape(B, m).mean(axis=1)
    mean_g = dpy.reshape(B, m, d).mean(axis=1)
    denom = np.maximum(mean_p, nn.P_FLOOR)
    return -np.log(denom), -mean_g / denom[:, None]


def stein_batch(net: nn.Network, X, Y, noise, sigma: float):
    """Function-value-only estimate of the gradient of ``G(x)_y``; ``(B, d)``."""
    B, m, d = noise.shape
    P = nn.soft_forward(net, _noisy_rows(X, noise))
    py = P[np.arange(B * m), np.repeat(Y, m)].reshape(B, m)
    return (noise * py[:, :, None]).mean(axis=1) / sigma**2


def smoothed_argmax_batch(net: nn.Network, X, noise):
    B, m, _ = noise.shape
    P = nn.soft_forward(net, _noisy_rows(X, noise)).reshape(B, m, -1)
    return np.argmax(P.mean(axis=1), axis=1)


def _ascent(net, X, Y, noise, estimator, sigma):
    if estimator == "plugin":
        return plugin_batch(net, X, Y, noise)[1]
    return -stein_batch(net, X, Y, noise, sigma)


def _unit_rows(G):
    norms = np.linalg.norm(G, axis=1, keepdims=True)
    return np.where(norms > 0, G / np.where(norms > 0, norms, 1.0), 0.0)


# single-input estimators ---------------------------------------------------

def smoothadv_objective(net: nn.Network, x_cand, y, noise) -> float:
    samples = _samples(noise)
    return float(plugin_batch(net, np.asarray(x_cand, float)[None], np.array([y]), samples[None])[0][0])


def grad_plugin(net: nn.Network, x_cand, y, noise) -> np.ndarray:
    samples = _samples(noise)
    return plugin_batch(net, np.asarray(x_cand, float)[None], np.array([y]), samples[None])[1][0]


def grad_stein(net: nn.Network, x_cand, y, noise, sigma: float) -> np.ndarray:
    samples = _samples(noise)
    return stein_batch(net, np.asarray(x_cand, float)[None], np.array([y]), samples[None], sigma)[0]


# attacks -------------------------------------------------------------------

def pgd_batch(net, X, Y, noise, epsilon, steps, estimator="plugin", sigma=1.0, box=None):
    """SmoothAdv PGD: ``steps`` normalized ascent steps of size ``2*eps/steps``."""
    X = np.asarray(X, dtype=float)
    if epsilon == 0:
        return X.copy()
    gamma = 2.0 * epsilon / steps
    X_adv = X.copy()
    for _ in range(steps):
        X_adv = X_adv + gamma * _unit_rows(_ascent(net, X_adv, Y, noise, estimator, sigma))
        X_adv = _clip(project_l2_ball(X_adv, X, epsilon), box)
    return X_adv


def ddn_batch(net, X, Y, noise, epsilon, steps, estimator="plugin", sigma=1.0, box=None,
              init_norm=1.0, gamma=0.05, step_init=1.0, step_final=0.01):
    """SmoothAdv DDN with the norm capped at ``epsilon``.

    Adversarial status is judged by the argmax of the soft mean over the
    noise block. Returns the smallest-norm adversarial iterate seen, or the
    last iterate when none was adversarial.
    """
    X = np.asarray(X, dtype=float)
    if epsilon == 0:
        return X.copy()
    B = X.shape[0]
    delta = np.zeros_like(X)
    radius = np.full(B, min(init_norm, epsilon))
    best = X.copy()
    best_norm = np.full(B, np.inf)

    def record(cur):
        adv = smoothed_argmax_batch(net, cur, noise) != Y
        norms = np.linalg.norm(cur - X, axis=1)
        better = adv & (norms < best_norm)
        best[better] = cur[better]
        best_norm[better] = norms[better]
        return adv

    for k in range(steps):
        if steps > 1:
            step = step_final + 0.5 * (step_init - step_final) * (1 + math.cos(math.pi * k / (steps - 1)))
        else:
            step = step_init
        cur = X + delta
        adv = record(cur)
        delta = delta + step * _unit_rows(_ascent(net, cur, Y, noise, estimator, sigma))
        radius = np.minimum(np.where(adv, radius * (1 - gamma), radius * (1 + gamma)), epsilon)
        delta = radius[:, None] * _unit_rows(delta)
        delta = _clip(X + delta, box) - X
    cur = X + delta
    record(cur)
    out = np.where(np.isfinite(best_norm)[:, None], best, cur)
    return _clip(project_l2_ball(out, X, epsilon), box)


def vanilla_pgd_batch(net, X, Y, epsilon, steps, box=None):
    """l2 PGD on the base classifier's cross-entropy; no smoothing."""
    X = np.asarray(X, dtype=float)
    if epsilon == 0:
        return X.copy()
    gamma = 2.0 * epsilon / steps
    X_adv = X.copy()
    for _ in range(steps):
        grad = nn.backward(net, X_adv, Y)[1].input_grad
        X_adv = X_adv + gamma * _unit_rows(grad)
        X_adv = _clip(project_l2_ball(X_adv, X, epsilon), box)
    return X_adv


def _single(x, y, noise):
    x = np.asarray(x, dtype=float)
    return x[None], np.array([int(y)]), None if noise is None else _samples(noise)[None]


def _noise_for(cfg, rng, noise, dim):
    if noise is not None:
        return noise
    if rng is None:
        raise ValueError("either rng or noise must be given")
    return NoiseBlock.draw(rng, cfg.m, dim, cfg.sigma)


def smoothadv_pgd(net, x, y, cfg: AttackConfig, rng: RngStream | None = None, noise=None):
    noise = _noise_for(cfg, rng, noise, len(x))
    X, Y, N = _single(x, y, noise)
    return pgd_batch(net, X, Y, N, cfg.epsilon, cfg.steps, cfg.estimator, cfg.sigma, cfg.box)[0]


def smoothadv_ddn(net, x, y, cfg: AttackConfig, rng: RngStream | None = None, noise=None):
    noise = _noise_for(cfg, rng, noise, len(x))
    X, Y, N = _single(x, y, noise)
    return ddn_batch(net, X, Y, N, cfg.epsilon, cfg.steps, cfg.estimator, cfg.sigma, cfg.box,
                     cfg.ddn_init_norm, cfg.ddn_gamma, cfg.ddn_step_init, cfg.ddn_step_final)[0]


def vanilla_pgd(net, x, y, epsilon, steps, box=None):
    X, Y, _ = _single(x, y, None)
    return vanilla_pgd_batch(net, X, Y, epsilon, steps, box)[0]


def run_attack(net, x, y, cfg: AttackConfig, rng: RngStream | None = None, noise=None):
    """Dispatch on ``cfg.kind``."""
    if cfg.kind == "vanilla_pgd":
        return vanilla_pgd(net, x, y, cfg.epsilon, cfg.steps, cfg.box)
    if cfg.kind == "smoothadv_ddn":
        return smoothadv_ddn(net, x, y, cfg, rng, noise)
    return smoothadv_pgd(net, x, y, cfg, rng, noise)
