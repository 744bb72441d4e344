import numpy as np
import pytest

from advattr.attacks import AttackConfig, pgd
from advattr.dataio import SyntheticConfig, gen_synthetic
from advattr.numeric import cross_entropy, init_mlp, logits, predict
from advattr.training import (
    TrainConfig, adv_loss, dataset_loss, mixed_grad, train_adversarial, train_standard,
)
from conftest import random_model


def separable(n=100, seed=0):
    g = np.random.Generator(np.random.Philox(seed))
    y = g.integers(2, size=n)
    x = g.uniform(0.0, 0.4, size=(n, 2)) + 0.6 * y[:, None]
    return x, y


def same_params(a, b):
    return all(np.array_equal(wa, wb) and np.array_equal(ba, bb)
               for (wa, ba), (wb, bb) in zip(a.params(), b.params()))


def test_zero_epochs_returns_init():
    m = train_standard(separable(), [2, 4, 2], TrainConfig(epochs=0, seed=3))
    assert same_params(m, init_mlp([2, 4, 2], 3))


def test_separable_fixture():
    x, y = separable()
    m = train_standard((x, y), [2, 8, 2], TrainConfig(epochs=50, learning_rate=0.5, seed=1))
    assert np.mean(predict(m, x) == y) >= 0.99


def test_standard_is_deterministic():
    cfg = TrainConfig(epochs=5, seed=7)
    assert same_params(train_standard(separable(), [2, 6, 2], cfg),
                       train_standard(separable(), [2, 6, 2], cfg))


def test_degenerate_adversarial_equals_standard():
    data = separable(60, 2)
    base = TrainConfig(epochs=6, seed=4, batch_size=16)
    std = train_standard(data, [2, 5, 2], base)
    no_budget = TrainConfig(epochs=6, seed=4, batch_size=16, mix_alpha=0.3,
                            attack=AttackConfig(0.0, steps=7, random_start=True))
    clean_only = TrainConfig(epochs=6, seed=4, batch_size=16, mix_alpha=1.0,
                             attack=AttackConfig(0.2, steps=7, random_start=True))
    assert same_params(train_adversarial(data, [2, 5, 2], no_budget), std)
    assert same_params(train_adversarial(data, [2, 5, 2], clean_only), std)


def test_adv_loss_mixing():
    m = random_model([3, 4, 3], 1)
    x = np.array([0.2, 0.5, 0.8])
    att = AttackConfig(0.1, steps=3, random_start=True, seed=2)
    clean = cross_entropy(logits(m, x), 1)
    adv = cross_entropy(logits(m, pgd(m, x, 1, att).x_hat), 1)
    assert adv_loss(m, x, 1, TrainConfig(mix_alpha=1.0, attack=att)) == clean
    assert adv_loss(m, x, 1, TrainConfig(mix_alpha=0.0, attack=att)) == adv
    assert adv_loss(m, x, 1, TrainConfig(mix_alpha=0.5, attack=att)) == pytest.approx(
        0.5 * clean + 0.5 * adv, abs=1e-15)
    assert 0.5 * 1.0 + 0.5 * 3.0 == 2.0


def test_mixed_grad_matches_finite_differences():
    m = random_model([4, 5, 3], 9)
    g = np.random.Generator(np.random.Philox(3))
    x = g.uniform(size=(3, 4))
    x_hat = np.clip(x + g.uniform(-0.1, 0.1, size=x.shape), 0, 1)
    y = np.array([0, 2, 1])
    a = 0.3

    def objective(model):
        return float(np.mean(a * cross_entropy(logits(model, x), y)
                             + (1 - a) * cross_entropy(logits(model, x_hat), y)))

    grads = mixed_grad(m, x, x_hat, y, a)
    params = m.params()
    h = 1e-6
    for li, (w, b) in enumerate(params):
        for idx in [(0, 0), (w.shape[0] - 1, w.shape[1] - 1)]:
            plus = [(pw.copy(), pb) for pw, pb in params]
            minus = [(pw.copy(), pb) for pw, pb in params]
            plus[li][0][idx] += h
            minus[li][0][idx] -= h
            fd = (objective(m.with_params(plus)) - objective(m.with_params(minus))) / (2 * h)
            assert fd == pytest.approx(grads[li][0][idx], rel=1e-5, abs=1e-9)


@pytest.fixture(scope="module")
def synthetic_models():
    bundle = gen_synthetic(SyntheticConfig())
    x_tr, y_tr, _ = bundle.split("train")
    x_te, y_te, _ = bundle.split("test")
    shape = [x_tr.shape[1], 32, 10]
    std = train_standard((x_tr, y_tr), shape, TrainConfig(mix_alpha=1.0, seed=0))
    rob = train_adversarial((x_tr, y_tr), shape, TrainConfig(seed=0))
    return x_tr, y_tr, x_te, y_te, shape, std, rob


def test_adversarial_training_beats_standard_under_pgd(synthetic_models):
    x_tr, y_tr, x_te, y_te, shape, std, rob = synthetic_models
    cfg = AttackConfig(0.06, steps=10, random_start=True, seed=11)
    ids = np.arange(len(y_te))
    acc_std = np.mean(pgd(std, x_te, y_te, cfg, sample_ids=ids).pred_adv == y_te)
    acc_rob = np.mean(pgd(rob, x_te, y_te, cfg, sample_ids=ids).pred_adv == y_te)
    print(f"pgd eps=0.06 accuracy: standard {acc_std:.4f}, adversarial {acc_rob:.4f}")
    assert acc_rob - acc_std >= 0.20


def test_training_loss_decreases(synthetic_models):
    x_tr, y_tr, _, _, shape, std, rob = synthetic_models
    start = dataset_loss(init_mlp(shape, 0), x_tr, y_tr)
    assert dataset_loss(std, x_tr, y_tr) < start
    assert dataset_loss(rob, x_tr, y_tr) < start


def test_training_validates_input():
    with pytest.raises(ValueError):
        train_standard((np.zeros((0, 2)), np.zeros(0, int)), [2, 3, 2], TrainConfig())
    with pytest.raises(ValueError):
        train_standard(separable(), [3, 3, 2], TrainConfig())
    with pytest.raises(ValueError):
        TrainConfig(mix_alpha=1.5)
