import numpy as np
import pytest

from advattr.numeric import Layer, MLPParams


def logistic_model(w_pos, w_neg, b=(0.0, 0.0)):
    """Single identity layer with two class rows."""
    W = np.vstack([np.asarray(w_pos, float), np.asarray(w_neg, float)])
    return MLPParams((Layer(W, np.asarray(b, float), "identity"),))


def random_linear(rng, d, C=2):
    W = rng.uniform(-1, 1, size=(C, d))
    b = rng.uniform(-0.5, 0.5, size=C)
    return MLPParams((Layer(W, b, "identity"),))


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(1234))


def random_model(dims, seed):
    """Glorot weights plus uniform biases, so no pre-activation sits exactly on a relu kink."""
    from advattr.numeric import init_mlp

    m = init_mlp(dims, seed)
    g = np.random.Generator(np.random.Philox(seed + 7))
    return m.with_params([(w, g.uniform(-0.5, 0.5, size=b.shape)) for w, b in m.params()])


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
