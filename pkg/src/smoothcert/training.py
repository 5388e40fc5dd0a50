"""Adversarial training of smoothed classifiers and its baselines.

Modes:

``smoothadv``
    attack the smoothed soft classifier with a per-example noise block,
    then train on the adversarial point plus each noise sample in the block.
``gaussian_only``
    the same noise-augmented batch without the attack.
``vanilla_pgd``
    PGD on the base classifier, train on the clean adversarial points.
``vanilla_pgd_noise``
    as ``vanilla_pgd`` with one Gaussian draw added to each adversarial point.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from smoothcert import attacks, nn
from smoothcert.datasets import Dataset
from smoothcert.stats import RngStream

logger = logging.getLogger(__name__)

MODES = ("smoothadv", "gaussian_only", "vanilla_pgd", "vanilla_pgd_noise")


@dataclass
class TrainConfig:
    attack: attacks.AttackConfig
    epochs: int = 150
    batch_size: int = 64
    lr_schedule: list = field(default_factory=lambda: [(0, 0.1), (50, 0.01), (100, 0.001)])
    warmup_epochs: int = 10
    mode: str = "smoothadv"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown training mode {self.mode!r}")
        if self.epochs < 0 or self.batch_size < 1 or self.warmup_epochs < 0:
            raise ValueError("epochs/warmup must be >= 0 and batch_size >= 1")
        self.lr_schedule = [(int(e), float(lr)) for e, lr in self.lr_schedule]
        starts = [e for e, _ in self.lr_schedule]
        if not starts or starts[0] != 0 or any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("lr_schedule epochs must start at 0 and strictly increase")
        if self.mode == "smoothadv" and self.attack.kind == "vanilla_pgd":
            raise ValueError("smoothadv mode needs a smoothadv_* attack kind")


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    epsilon: float
    lr: float


@dataclass
class TrainReport:
    network: nn.Network
    records: list[EpochRecord]
    wall_time: float


def epsilon_at_epoch(epsilon: float, epoch: int, warmup_epochs: int) -> float:
    """Zero on the first epoch, then a linear ramp reaching ``epsilon`` at ``warmup_epochs``."""
    if epoch == 0:
        return 0.0
    if warmup_epochs == 0:
        return epsilon
    return epsilon * min(1.0, epoch / warmup_epochs)


def lr_at_epoch(schedule, epoch: int) -> float:
    lr = schedule[0][1]
    for start, value in schedule:
        if epoch >= start:
            lr = value
    return lr


def shuffle_epoch(n: int, rng: RngStream) -> np.ndarray:
    """Fisher-Yates permutation of ``range(n)`` driven by ``rng``."""
    perm = np.arange(n)
    if n < 2:
        return perm
    u = rng.uniform(n - 1)
    for step, i in enumerate(range(n - 1, 0, -1)):
        j = min(int(u[step] * (i + 1)), i)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def training_points(net: nn.Network, X, Y, cfg: TrainConfig, rng: RngStream, epsilon: float):
    """Build the list of (input, label) pairs one minibatch trains on."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=int)
    B, d = X.shape
    acfg = cfg.attack
    if cfg.mode in ("smoothadv", "gaussian_only"):
        m = acfg.m
        noise = acfg.sigma * rng.standard_normal((B, m, d))
        if cfg.mode == "gaussian_only" or epsilon == 0:
            X_adv = X
        elif acfg.kind == "smoothadv_ddn":
            X_adv = attacks.ddn_batch(net, X, Y, noise, epsilon, acfg.steps, acfg.estimator,
                                      acfg.sigma, acfg.box, acfg.ddn_init_norm, acfg.ddn_gamma,
                                      acfg.ddn_step_init, acfg.ddn_step_final)
        else:
            X_adv = attacks.pgd_batch(net, X, Y, noise, epsilon, acfg.steps, acfg.estimator,
                                      acfg.sigma, acfg.box)
        return (X_adv[:, None, :] + noise).reshape(B * m, d), np.repeat(Y, m)
    X_adv = attacks.vanilla_pgd_batch(net, X, Y, epsilon, acfg.steps, acfg.box)
    if cfg.mode == "vanilla_pgd_noise":
        X_adv = X_adv + acfg.sigma * rng.standard_normal((B, d))
    return X_adv, Y


def train_minibatch(net: nn.Network, X, Y, cfg: TrainConfig, rng: RngStream,
                    epsilon: float | None = None, lr: float | None = None):
    """One SGD step on the augmented minibatch; returns ``(net, mean loss)``.

    ``epsilon`` and ``lr`` default to the full attack radius and the first
    scheduled learning rate.
    """
    if len(X) == 0:
        raise ValueError("empty minibatch")
    epsilon = cfg.attack.epsilon if epsilon is None else epsilon
    lr = cfg.lr_schedule[0][1] if lr is None else lr
    X_train, Y_train = training_points(net, X, Y, cfg, rng, epsilon)
    loss, grads = nn.backward(net, X_train, Y_train)
    return nn.sgd_step(net, grads, lr), loss


def train(net: nn.Network, dataset: Dataset, cfg: TrainConfig, rng: RngStream | None = None,
          on_epoch=None) -> TrainReport:
    """Full training loop. ``on_epoch(record, net)`` is called after each epoch."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    rng = RngStream(cfg.seed) if rng is None else rng
    start = time.perf_counter()
    records = []
    for epoch in range(cfg.epochs):
        eps = epsilon_at_epoch(cfg.attack.epsilon, epoch, cfg.warmup_epochs)
        lr = lr_at_epoch(cfg.lr_schedule, epoch)
        order = shuffle_epoch(len(dataset), rng.spawn("shuffle", epoch))
        losses, weights = [], []
        for b, lo in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[lo:lo + cfg.batch_size]
            net, loss = train_minibatch(net, dataset.X[idx], dataset.y[idx], cfg,
                                        rng.spawn("batch", epoch, b), eps, lr)
            losses.append(loss)
            weights.append(len(idx))
        record = EpochRecord(epoch, float(np.average(losses, weights=weights)), eps, lr)
        if not np.isfinite(record.loss):
            raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
        records.append(record)
        logger.debug("epoch %d loss %.4f eps %.3f lr %g", epoch, record.loss, eps, lr)
        if on_epoch is not None:
            on_epoch(record, net)
    return TrainReport(net, records, time.perf_counter() - start)


def accuracy(net: nn.Network, dataset: Dataset) -> float:
    """Noise-free base-classifier accuracy."""
    return float(np.mean(nn.hard_forward(net, dataset.X) == dataset.y))
