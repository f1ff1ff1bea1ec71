import numpy as np
import pytest

from multihop_ser import autodiff as ad
from multihop_ser.autodiff import Tensor
from multihop_ser.optim import Adam, ClipConfig, OptimizerState, adam_step, clip_global_norm, derive_rng


def _with_grad(values):
    t = Tensor(np.zeros(len(values)), requires_grad=True)
    t.grad = np.array(values, dtype=float)
    return t


class TestClip:
    def test_scales_down(self):
        t = _with_grad([3.0, 4.0])
        assert clip_global_norm([t], ClipConfig(1.0)) == 5.0
        np.testing.assert_allclose(t.grad, [0.6, 0.8], atol=1e-15)

    def test_under_threshold(self):
        t = _with_grad([0.3, 0.4])
        assert clip_global_norm([t], ClipConfig(1.0)) == pytest.approx(0.5, abs=1e-15)
        np.testing.assert_array_equal(t.grad, [0.3, 0.4])

    def test_zero(self):
        t = _with_grad([0.0, 0.0])
        assert clip_global_norm([t]) == 0.0
        np.testing.assert_array_equal(t.grad, [0.0, 0.0])

    def test_norm_is_joint_over_tensors(self):
        a, b = _with_grad([3.0]), _with_grad([4.0])
        assert clip_global_norm([a, b], 1.0) == 5.0
        np.testing.assert_allclose([a.grad[0], b.grad[0]], [0.6, 0.8])

    def test_idempotent(self, rng):
        ts = [_with_grad(rng.standard_normal(5) * 3) for _ in range(3)]
        clip_global_norm(ts, 1.0)
        once = [t.grad.copy() for t in ts]
        clip_global_norm(ts, 1.0)
        for t, g in zip(ts, once):
            np.testing.assert_allclose(t.grad, g, atol=1e-15)

    def test_rejects_non_positive(self):
        with pytest.raises(ValueError):
            ClipConfig(0.0)


def reference_adam(grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8, x0=0.0):
    """Scalar Adam written out step by step."""
    x, m, v, xs = x0, 0.0, 0.0, []
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        x = x - lr * mhat / (vhat**0.5 + eps)
        xs.append(x)
    return xs


class TestAdam:
    def test_zero_grad_leaves_params(self, rng):
        p = Tensor(rng.standard_normal(4), requires_grad=True)
        before = p.data.copy()
        opt = Adam({"p": p})
        for _ in range(5):
            p.grad = np.zeros(4)
            opt.step()
        np.testing.assert_array_equal(p.data, before)
        assert opt.state.step_count == 5

    def test_first_step(self):
        p = Tensor([0.0], requires_grad=True)
        p.grad = np.array([1.0])
        Adam({"p": p}).step()
        assert p.data[0] == pytest.approx(-1e-3, rel=1e-6)

    def test_constant_grad_monotone_and_matches_reference(self):
        p = Tensor([0.0], requires_grad=True)
        opt = Adam({"p": p})
        trace = []
        for _ in range(100):
            p.grad = np.array([1.0])
            opt.step()
            trace.append(p.data[0])
        assert np.all(np.diff([0.0] + trace) < 0)
        np.testing.assert_allclose(trace, reference_adam([1.0] * 100), rtol=1e-12)

    def test_random_grads_match_reference(self, rng):
        grads = rng.standard_normal(50)
        p = Tensor([0.3], requires_grad=True)
        state = OptimizerState(learning_rate=0.01, beta1=0.8, beta2=0.99, epsilon=1e-6)
        out = []
        for g in grads:
            adam_step({"p": p}, state, {"p": np.array([g])})
            out.append(p.data[0])
        np.testing.assert_allclose(out, reference_adam(grads, 0.01, 0.8, 0.99, 1e-6, 0.3), rtol=1e-12)
        assert state.step_count == 50
        assert state.first_moment["p"].shape == p.shape

    def test_shape_mismatch(self):
        p = Tensor(np.zeros(3), requires_grad=True)
        with pytest.raises(ValueError):
            adam_step({"p": p}, OptimizerState(), {"p": np.zeros(2)})


class TestDropout:
    def test_rate_zero_identity(self, rng):
        x = Tensor(rng.standard_normal(10))
        assert ad.dropout(x, 0.0, True, rng) is x
        assert ad.dropout(x, 0.0, False, rng) is x

    def test_inference_identity(self, rng):
        x = Tensor(rng.standard_normal(10))
        np.testing.assert_array_equal(ad.dropout(x, 0.3, False, rng).data, x.data)

    def test_expectation_preserved(self):
        out = ad.dropout(Tensor(np.ones(10**5)), 0.3, True, derive_rng(0, "mc")).data
        assert abs(out.mean() - 1.0) < 0.02
        survivors = out[out != 0]
        np.testing.assert_allclose(survivors, 1 / 0.7)
        assert abs((out == 0).mean() - 0.3) < 0.01

    def test_rate_one_rejected(self, rng):
        with pytest.raises(ValueError):
            ad.dropout(Tensor(np.ones(3)), 1.0, True, rng)


class TestRng:
    def test_named_streams_reproducible(self):
        a = derive_rng(3, "dropout", "audio", 7).random(5)
        b = derive_rng(3, "dropout", "audio", 7).random(5)
        np.testing.assert_array_equal(a, b)

    def test_streams_independent_of_draw_order(self):
        first = derive_rng(3, "x").random(3)
        derive_rng(3, "y").random(100)
        np.testing.assert_array_equal(derive_rng(3, "x").random(3), first)

    def test_distinct_keys_differ(self):
        assert not np.array_equal(derive_rng(3, "a").random(3), derive_rng(3, "b").random(3))
