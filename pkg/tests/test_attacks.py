import math

import numpy as np
import pytest

from conftest import constant_net, random_net
from smoothcert import attacks, nn
from smoothcert.attacks import AttackConfig, NoiseBlock
from smoothcert.oracle import Halfspace, fd_gradient, halfspace_smoothed_prob, quad_smoothed_grad, quad_smoothed_prob
from smoothcert.stats import RngStream


def test_project_examples():
    assert np.allclose(attacks.project_l2_ball([3.0, 4.0], [0.0, 0.0], 1.0), [0.6, 0.8])
    inside = np.array([0.1, -0.2])
    assert np.array_equal(attacks.project_l2_ball(inside, [0.0, 0.0], 1.0), inside)


def test_project_property():
    rng = np.random.default_rng(0)
    cand = rng.normal(size=(10_000, 3)) * rng.uniform(0.01, 10, size=(10_000, 1))
    center = rng.normal(size=(10_000, 3))
    eps = rng.uniform(0, 2, size=10_000)
    out = attacks.project_l2_ball(cand + center, center, eps)
    assert np.all(np.linalg.norm(out - center, axis=1) <= eps + 1e-9)


def test_config_validation():
    with pytest.raises(ValueError):
        AttackConfig(epsilon=-0.1)
    with pytest.raises(ValueError):
        AttackConfig(epsilon=0.1, steps=0)
    with pytest.raises(ValueError):
        AttackConfig(epsilon=0.1, kind="fgsm")
    AttackConfig(epsilon=0.1, kind="vanilla_pgd", sigma=0.0)


def test_objective_constant_nets():
    noise = np.zeros((5, 2))
    assert attacks.smoothadv_objective(constant_net([0.0, 1.0]), [0.3, 0.1], 1, noise) == 0.0
    assert attacks.smoothadv_objective(constant_net([0.5, 0.5]), [0.3, 0.1], 0, noise) == pytest.approx(math.log(2))
    assert np.array_equal(attacks.grad_plugin(constant_net([0.5, 0.5]), [0.3, 0.1], 0, noise), np.zeros(2))


def test_objective_matches_halfspace_closed_form():
    h = Halfspace(np.array([0.6, -0.8]), 0.1)
    sigma, m = 0.4, 100_000
    x = np.array([0.3, 0.0])
    noise = NoiseBlock.draw(RngStream(7), m, 2, sigma)
    got = attacks.smoothadv_objective(h.to_network(steepness=1e6), x, 1, noise)
    p = halfspace_smoothed_prob(h, x, sigma)
    se = math.sqrt(p * (1 - p) / m) / p  # delta method for -log
    assert abs(got + math.log(p)) <= 3 * se


@pytest.mark.parametrize("seed", range(10))
def test_grad_plugin_is_exact_surrogate_gradient(seed):
    rng = np.random.default_rng(seed)
    net = random_net(seed, sizes=(2, 6, 3), activation="tanh")
    noise = 0.3 * rng.normal(size=(8, 2))
    x, y = rng.normal(size=2), int(rng.integers(3))
    g = attacks.grad_plugin(net, x, y, noise)
    fd = fd_gradient(lambda v: attacks.smoothadv_objective(net, v, y, noise), x, 1e-6)
    assert np.all(np.abs(g - fd) <= 1e-5 * np.maximum(1.0, np.abs(fd)))


def test_grad_plugin_aligns_with_quadrature():
    net = random_net(4, sizes=(2, 8, 2), activation="tanh")
    sigma, x, y = 0.5, np.array([0.2, -0.1]), 0
    g = attacks.grad_plugin(net, x, y, NoiseBlock.draw(RngStream(1), 100_000, 2, sigma))
    p = quad_smoothed_prob(net, x, sigma)[y]
    exact = -quad_smoothed_grad(net, x, sigma, y) / p
    assert g @ exact / (np.linalg.norm(g) * np.linalg.norm(exact)) >= 0.99


def _stein_terms(net, x, y, noise, sigma):
    p = nn.soft_forward(net, x + noise)[:, y]
    return noise * p[:, None] / sigma**2


def test_stein_constant_net_within_clt_band():
    sigma = 0.5
    net = constant_net([0.3, 0.7])
    noise = NoiseBlock.draw(RngStream(2), 1_000_000, 2, sigma).samples
    est = attacks.grad_stein(net, [0.0, 0.0], 1, noise, sigma)
    se = _stein_terms(net, np.zeros(2), 1, noise, sigma).std(axis=0) / math.sqrt(len(noise))
    assert np.all(np.abs(est) <= 4 * se)


def test_stein_never_calls_backward(monkeypatch):
    def boom(*a, **k):
        raise AssertionError("backward pass invoked")

    monkeypatch.setattr(nn, "backward", boom)
    monkeypatch.setattr(nn, "_backprop", boom)
    monkeypatch.setattr(nn, "class_prob_input_grad", boom)
    net = random_net(0)
    noise = NoiseBlock.draw(RngStream(0), 16, 2, 0.5)
    attacks.grad_stein(net, [0.1, 0.2], 0, noise, 0.5)
    cfg = AttackConfig(epsilon=0.5, steps=3, m=16, sigma=0.5, estimator="stein")
    attacks.smoothadv_pgd(net, np.array([0.1, 0.2]), 0, cfg, noise=noise)


@pytest.mark.parametrize("seed", range(2))
def test_stein_unbiased_against_quadrature(seed):
    sigma = 0.5
    net = random_net(20 + seed, sizes=(2, 8, 2), activation="tanh")
    x = np.random.default_rng(seed).normal(size=2) * 0.5
    noise = NoiseBlock.draw(RngStream(seed, 1), 1_000_000, 2, sigma).samples
    est = attacks.grad_stein(net, x, 1, noise, sigma)
    se = _stein_terms(net, x, 1, noise, sigma).std(axis=0) / math.sqrt(len(noise))
    assert np.all(np.abs(est - quad_smoothed_grad(net, x, sigma, 1)) <= 3 * se)


def test_pgd_zero_epsilon_is_identity(tiny_net):
    x = np.array([0.4, -0.3])
    cfg = AttackConfig(epsilon=0.0, m=4, sigma=0.5)
    assert np.array_equal(attacks.smoothadv_pgd(tiny_net, x, 0, cfg, RngStream(0)), x)
    assert np.array_equal(attacks.smoothadv_ddn(tiny_net, x, 0, AttackConfig(0.0, kind="smoothadv_ddn"),
                                                RngStream(0)), x)
    assert np.array_equal(attacks.vanilla_pgd(tiny_net, x, 0, 0.0, 5), x)


def test_pgd_crosses_nearby_halfspace_boundary():
    h = Halfspace.from_normal([1.0, 2.0], 0.3)
    eps, sigma = 1.0, 0.25
    net = h.to_network(steepness=4.0)
    x = h.b * h.u + 0.5 * eps * h.u + np.array([-2.0, 1.0]) / math.sqrt(5)
    cfg = AttackConfig(epsilon=eps, steps=10, m=64, sigma=sigma)
    for seed in range(100):
        x_adv = attacks.smoothadv_pgd(net, x, 1, cfg, RngStream(seed))
        assert halfspace_smoothed_prob(h, x_adv, sigma) < 0.5


def test_pgd_zero_gradient_skips_step():
    net = constant_net([0.5, 0.5])
    x = np.array([1.0, 2.0])
    cfg = AttackConfig(epsilon=1.0, steps=4, m=3, sigma=0.5)
    assert np.array_equal(attacks.smoothadv_pgd(net, x, 0, cfg, RngStream(0)), x)


def test_box_clamp_applies():
    net = random_net(3)
    x = np.array([0.95, 0.05])
    cfg = AttackConfig(epsilon=1.0, steps=5, m=8, sigma=0.3, box=(0.0, 1.0))
    out = attacks.smoothadv_pgd(net, x, 0, cfg, RngStream(1))
    assert np.all((out >= 0) & (out <= 1))


@pytest.mark.parametrize("kind", attacks.KINDS)
@pytest.mark.parametrize("estimator", attacks.ESTIMATORS)
def test_attacks_stay_in_ball(kind, estimator):
    rng = np.random.default_rng(5)
    for s in range(100):
        net = random_net(s, sizes=(2, 5, 3), activation="relu", scale=2.0)
        eps = float(rng.uniform(0.01, 2.0))
        cfg = AttackConfig(epsilon=eps, steps=int(rng.integers(1, 8)), m=4, sigma=0.3,
                           kind=kind, estimator=estimator)
        x = rng.normal(size=2)
        out = attacks.run_attack(net, x, int(rng.integers(3)), cfg, RngStream(s))
        assert np.linalg.norm(out - x) <= eps + 1e-9


def test_ddn_norm_approaches_boundary_distance():
    h = Halfspace(np.array([0.0, 1.0]), 0.0)
    dist, sigma = 0.5, 0.25
    net = h.to_network(steepness=4.0)
    x = np.array([0.3, dist])
    cfg = AttackConfig(epsilon=1.0, steps=20, m=64, sigma=sigma, kind="smoothadv_ddn")
    norms = [np.linalg.norm(attacks.smoothadv_ddn(net, x, 1, cfg, RngStream(s)) - x) for s in range(50)]
    assert abs(np.median(norms) - dist) <= 0.1 * dist
    assert max(norms) <= 1.0 + 1e-9


def test_vanilla_pgd_increases_loss():
    rng = np.random.default_rng(2)
    wins, total = 0, 200
    for s in range(total):
        net = random_net(100 + s, sizes=(2, 6, 3), activation="tanh")
        x, y = rng.normal(size=2), int(rng.integers(3))
        x_adv = attacks.vanilla_pgd(net, x, y, 0.5, 10)
        wins += nn.loss_ce(nn.soft_forward(net, x_adv), y) > nn.loss_ce(nn.soft_forward(net, x), y)
    assert wins >= 0.95 * total


def test_attack_is_deterministic(tiny_net):
    x = np.array([0.2, 0.2])
    for kind in ("smoothadv_pgd", "smoothadv_ddn"):
        cfg = AttackConfig(epsilon=0.7, steps=6, m=8, sigma=0.4, kind=kind)
        a = attacks.run_attack(tiny_net, x, 1, cfg, RngStream(11, 3))
        b = attacks.run_attack(tiny_net, x, 1, cfg, RngStream(11, 3))
        assert a.tobytes() == b.tobytes()


def test_batch_matches_single(tiny_net):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(5, 2))
    Y = rng.integers(0, 3, size=5)
    noise = 0.3 * rng.normal(size=(5, 4, 2))
    batch = attacks.pgd_batch(tiny_net, X, Y, noise, 0.5, 5)
    cfg = AttackConfig(epsilon=0.5, steps=5, m=4, sigma=0.3)
    for i in range(5):
        single = attacks.smoothadv_pgd(tiny_net, X[i], Y[i], cfg, noise=noise[i])
        assert np.allclose(batch[i], single, atol=1e-14)


def test_noise_block_reused_across_steps(monkeypatch, tiny_net):
    seen = []
    real = attacks.plugin_batch

    def spy(net, X, Y, noise):
        seen.append(noise.copy())
        return real(net, X, Y, noise)

    monkeypatch.setattr(attacks, "plugin_batch", spy)
    cfg = AttackConfig(epsilon=0.5, steps=4, m=6, sigma=0.3)
    attacks.smoothadv_pgd(tiny_net, np.zeros(2), 0, cfg, RngStream(0))
    assert len(seen) == 4 and all(np.array_equal(seen[0], s) for s in seen)
