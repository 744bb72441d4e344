import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from advattr.attacks import (
    AttackConfig, attack, fgsm, ifgsm, linf_dist, pgd, pgd_start, project_ball, sign_vec,
)
from advattr.numeric import DimensionError, cross_entropy, grad_input, init_mlp, logits
from conftest import logistic_model, random_linear, random_model


def test_sign_vec():
    assert np.array_equal(sign_vec([0.0, 0.0, 0.0]), [0, 0, 0])
    assert np.array_equal(sign_vec([-2.5, 3.1]), [-1, 1])


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=10))
def test_sign_is_odd(v):
    v = np.array(v)
    assert np.array_equal(sign_vec(-v), -sign_vec(v))


def test_project_ball_examples():
    cfg = AttackConfig(epsilon=0.1)
    assert project_ball([0.9], [0.5], cfg) == pytest.approx([0.6])
    assert np.array_equal(project_ball([1.2], [0.98], cfg), [1.0])
    x = np.array([0.2, 0.7])
    assert np.array_equal(project_ball([0.9, -3.0], x, AttackConfig(epsilon=0.0)), x)
    with pytest.raises(DimensionError):
        project_ball([0.1, 0.2], [0.1], cfg)


def test_linf_examples():
    a, b = np.array([0.0, 0.0]), np.array([0.3, -0.5])
    assert linf_dist(a, a) == 0.0
    assert linf_dist(a, b) == 0.5 == linf_dist(b, a)
    with pytest.raises(DimensionError):
        linf_dist([0.0], [0.0, 1.0])


def test_steps_zero_is_identity():
    m = init_mlp([4, 5, 3], 0)
    x = np.full(4, 0.5)
    res = ifgsm(m, x, 1, AttackConfig(epsilon=0.1, steps=0))
    assert np.array_equal(res.x_hat, x) and res.linf == 0.0


def test_zero_gradient_model_leaves_input():
    m = logistic_model([0.2, 0.4], [0.2, 0.4])
    x = np.array([0.3, 0.6])
    assert np.array_equal(ifgsm(m, x, 0, AttackConfig(epsilon=0.1, steps=5)).x_hat, x)


def test_linear_closed_form(rng):
    for _ in range(50):
        m = random_linear(rng, 8)
        x = rng.uniform(size=8)
        y = int(rng.integers(2))
        cfg = AttackConfig(epsilon=float(rng.uniform(0, 0.3)), alpha=float(rng.uniform(0.005, 0.1)),
                           steps=int(rng.integers(1, 8)))
        s = sign_vec(grad_input(m, x, y))
        expect = np.clip(x + min(cfg.steps * cfg.alpha, cfg.epsilon) * s, 0, 1)
        assert np.max(np.abs(ifgsm(m, x, y, cfg).x_hat - expect)) <= 1e-9


def test_fgsm_is_one_full_step():
    m = random_model([5, 6, 3], 3)
    x = np.linspace(0.1, 0.9, 5)
    cfg = AttackConfig(epsilon=0.05)
    ref = project_ball(x + 0.05 * sign_vec(grad_input(m, x, 2)), x, cfg)
    assert np.array_equal(fgsm(m, x, 2, cfg).x_hat, ref)
    assert np.array_equal(ifgsm(m, x, 2, AttackConfig(epsilon=0.05, alpha=0.05, steps=1)).x_hat, ref)


def test_pgd_saturates_on_linear(rng):
    m = random_linear(rng, 10)
    x = rng.uniform(0.2, 0.8, size=10)
    cfg = AttackConfig(epsilon=0.1, steps=40, random_start=True, seed=9)
    x_hat = pgd(m, x, 0, cfg).x_hat
    s = sign_vec(grad_input(m, x, 0))
    assert np.allclose(x_hat, x + 0.1 * s, atol=1e-12)


def test_pgd_zero_budget_and_determinism():
    m = random_model([6, 4, 3], 2)
    x = np.full(6, 0.5)
    for seed in (0, 1, 99):
        assert np.array_equal(pgd(m, x, 0, AttackConfig(0.0, random_start=True, seed=seed)).x_hat, x)
    cfg = AttackConfig(0.1, random_start=True, seed=4)
    assert np.array_equal(pgd(m, x, 0, cfg).x_hat, pgd(m, x, 0, cfg).x_hat)
    start = pgd_start(x, cfg)
    assert np.max(np.abs(start - x)) <= 0.1
    assert not np.array_equal(start, pgd_start(x, AttackConfig(0.1, random_start=True, seed=5)))


def test_pgd_batch_matches_per_sample(rng):
    m = random_model([4, 5, 3], 6)
    X = rng.uniform(size=(5, 4))
    y = np.array([0, 1, 2, 0, 1])
    cfg = AttackConfig(0.08, random_start=True, seed=2)
    ids = np.array([10, 3, 7, 0, 42])
    batch = pgd(m, X, y, cfg, sample_ids=ids).x_hat
    for i in range(5):
        single = pgd(m, X[i:i + 1], y[i:i + 1], cfg, sample_ids=ids[i:i + 1]).x_hat[0]
        assert np.array_equal(batch[i], single)


def test_ifgsm_rejects_random_start():
    with pytest.raises(ValueError):
        ifgsm(init_mlp([2, 2], 0), [0.5, 0.5], 0, AttackConfig(random_start=True))


def test_loss_monotone_on_linear_without_clamp(rng):
    for _ in range(20):
        m = random_linear(rng, 6, C=3)
        x = rng.uniform(0.4, 0.6, size=6)
        y = int(rng.integers(3))
        prev = cross_entropy(logits(m, x), y)
        for steps in range(1, 6):
            # budget keeps every iterate inside [0, 1]
            x_hat = ifgsm(m, x, y, AttackConfig(epsilon=0.1, alpha=0.02, steps=steps)).x_hat
            cur = cross_entropy(logits(m, x_hat), y)
            assert cur >= prev - 1e-12
            prev = cur


def test_attack_leaves_model_untouched():
    m = random_model([5, 4, 3], 8)
    before = [(w.tobytes(), b.tobytes()) for w, b in m.params()]
    attack(m, np.full((2, 5), 0.5), np.array([0, 1]), AttackConfig(0.1, random_start=True))
    attack(m, np.full(5, 0.5), 2, AttackConfig(0.1))
    assert [(w.tobytes(), b.tobytes()) for w, b in m.params()] == before


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0, 0.5), st.integers(0, 12), st.booleans())
def test_containment(seed, eps, steps, random_start):
    g = np.random.Generator(np.random.Philox(seed))
    m = random_model([6, 5, 3], seed)
    x = g.uniform(size=(4, 6))
    y = g.integers(3, size=4)
    res = attack(m, x, y, AttackConfig(eps, steps=steps, random_start=random_start, seed=seed))
    assert np.all(res.linf <= eps + 1e-12)
    assert np.all((res.x_hat >= 0) & (res.x_hat <= 1))
    assert np.array_equal(res.success, res.pred_adv != y)


def test_config_validation():
    with pytest.raises(ValueError):
        AttackConfig(epsilon=-0.1)
    with pytest.raises(ValueError):
        AttackConfig(clamp_lo=1.0, clamp_hi=1.0)
    assert AttackConfig(epsilon=0.06, steps=10).step_size == pytest.approx(0.015)
