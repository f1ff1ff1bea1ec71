import numpy as np
import pytest

from multihop_ser.data import Utterance
from multihop_ser.optim import derive_rng


def finite_difference(f, x, step=1e-5):
    """Central differences of scalar f() w.r.t. array x, perturbing x in place."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + step
        up = f()
        x[i] = orig - step
        down = f()
        x[i] = orig
        grad[i] = (up - down) / (2 * step)
    return grad


def assert_grad_close(analytic, numeric, tol=1e-4, floor=1e-6):
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    rel = np.abs(analytic - numeric) / scale
    assert rel.max() < tol, f"max relative error {rel.max():.3e}"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_utterance(rng, uid, T_a, n_words, d_audio=5, d_p=2, label="sad"):
    words = ["yes", "no", "maybe", "fine", "great", "oh", "!", "."]
    return Utterance(
        uid,
        rng.standard_normal((T_a, d_audio)),
        rng.standard_normal(d_p),
        " ".join(rng.choice(words, size=n_words)),
        label,
    )


@pytest.fixture
def make_utterance():
    return random_utterance


@pytest.fixture
def seeded():
    return lambda *keys: derive_rng(7, *keys)
