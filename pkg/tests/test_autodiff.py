import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multihop_ser import autodiff as ad
from multihop_ser.autodiff import ContractError, InvalidMaskError, ShapeError, Tensor

from conftest import assert_grad_close, finite_difference


class TestMatmul:
    def test_identity(self):
        out = ad.matmul(Tensor([[1, 0], [0, 1]]), Tensor([[3], [4]]))
        np.testing.assert_array_equal(out.data, [[3], [4]])

    def test_row_times_column(self):
        out = ad.matmul(Tensor([[1, 2]]), Tensor([[3], [4]]))
        np.testing.assert_array_equal(out.data, [[11]])

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
            ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))

    @pytest.mark.parametrize(
        "a_shape,b_shape",
        [((3, 4), (4, 2)), ((2, 3, 4), (4, 5)), ((4,), (4, 3)), ((3, 4), (4,)), ((2, 3, 4), (2, 4, 2))],
    )
    def test_gradients(self, rng, a_shape, b_shape):
        a = Tensor(rng.standard_normal(a_shape), requires_grad=True)
        b = Tensor(rng.standard_normal(b_shape), requires_grad=True)
        w = rng.standard_normal(np.matmul(a.data, b.data).shape)

        def f():
            return float(np.sum(np.matmul(a.data, b.data) * w))

        (ad.matmul(a, b) * w).sum().backward()
        assert_grad_close(a.grad, finite_difference(f, a.data))
        assert_grad_close(b.grad, finite_difference(f, b.data))


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(ad.softmax(Tensor([0.0, 0, 0])).data, [1 / 3] * 3, atol=1e-15)

    def test_two_way(self):
        e = math.e
        np.testing.assert_allclose(ad.softmax(Tensor([1.0, 0])).data, [e / (e + 1), 1 / (e + 1)], atol=1e-15)
        np.testing.assert_allclose(ad.softmax(Tensor([1.0, 0])).data, [0.73106, 0.26894], atol=1e-5)

    def test_masked(self):
        out = ad.softmax(Tensor([5.0, 100, 7]), mask=[True, False, True]).data
        assert out[1] == 0.0
        denom = math.exp(5) + math.exp(7)
        np.testing.assert_allclose(out, [math.exp(5) / denom, 0, math.exp(7) / denom], atol=1e-15)
        np.testing.assert_allclose(out, [0.11920, 0, 0.88080], atol=1e-5)

    def test_all_masked(self):
        with pytest.raises(InvalidMaskError):
            ad.softmax(Tensor([1.0, 2.0]), mask=[False, False])

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(st.floats(-50, 50), min_size=1, max_size=12),
        st.floats(-1e3, 1e3),
        st.data(),
    )
    def test_normalised_and_shift_invariant(self, logits, shift, data):
        mask = data.draw(st.lists(st.booleans(), min_size=len(logits), max_size=len(logits)))
        if not any(mask):
            mask[0] = True
        x = np.array(logits)
        y = ad.softmax(Tensor(x), mask=mask).data
        assert abs(y.sum() - 1.0) <= 1e-12
        assert np.all(y[~np.array(mask)] == 0.0)
        y_shift = ad.softmax(Tensor(x + shift), mask=mask).data
        np.testing.assert_allclose(y_shift, y, atol=1e-12)

    def test_gradient(self, rng):
        x = Tensor(rng.standard_normal((3, 5)), requires_grad=True)
        mask = rng.random((3, 5)) > 0.3
        mask[:, 0] = True
        w = rng.standard_normal((3, 5))

        def f():
            z = np.where(mask, x.data, -np.inf)
            e = np.exp(z - z.max(axis=1, keepdims=True))
            return float(np.sum(e / e.sum(axis=1, keepdims=True) * w))

        (ad.softmax(x, mask=mask) * w).sum().backward()
        assert_grad_close(x.grad, finite_difference(f, x.data))
        assert np.all(x.grad[~mask] == 0.0)


class TestElementwise:
    def test_sigmoid_zero(self):
        assert ad.sigmoid(Tensor(0.0)).data == 0.5

    def test_concat(self):
        np.testing.assert_array_equal(ad.concat([Tensor([1.0, 2]), Tensor([3.0])]).data, [1, 2, 3])

    def test_tanh_one(self):
        assert ad.tanh(Tensor(1.0)).data == pytest.approx(0.76159, abs=1e-5)
        assert ad.tanh(Tensor(1.0)).data == pytest.approx(math.tanh(1.0), abs=1e-15)

    def test_add_shape_mismatch(self):
        with pytest.raises(ShapeError):
            Tensor(np.ones(3)) + Tensor(np.ones(4))

    def test_mul_shape_mismatch(self):
        with pytest.raises(ShapeError):
            Tensor(np.ones((2, 3))) * Tensor(np.ones((3, 2)))

    def test_concat_mismatch(self):
        with pytest.raises(ShapeError):
            ad.concat([Tensor(np.ones((2, 3))), Tensor(np.ones((3, 1)))])

    def test_concat_width(self, rng):
        parts = [Tensor(rng.standard_normal((2, k))) for k in (1, 4, 2)]
        assert ad.concat(parts).shape == (2, 7)

    @pytest.mark.parametrize("op", ["tanh", "sigmoid", "exp"])
    def test_unary_gradients(self, rng, op):
        x = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
        ref = {"tanh": np.tanh, "sigmoid": lambda v: 1 / (1 + np.exp(-v)), "exp": np.exp}[op]
        getattr(x, op)().sum().backward()
        assert_grad_close(x.grad, finite_difference(lambda: float(ref(x.data).sum()), x.data))

    def test_log_floor_blocks_gradient(self):
        x = Tensor([1e-20, 0.5], requires_grad=True)
        y = ad.log(x, floor=1e-12)
        np.testing.assert_allclose(y.data, [math.log(1e-12), math.log(0.5)])
        y.sum().backward()
        np.testing.assert_allclose(x.grad, [0.0, 2.0])

    def test_concat_and_slice_gradients(self, rng):
        a = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
        b = Tensor(rng.standard_normal((2, 2)), requires_grad=True)
        w = rng.standard_normal((2, 4))

        def f():
            return float(np.sum(np.concatenate([a.data, b.data], axis=1)[:, 1:] * w))

        (ad.concat([a, b])[:, 1:] * w).sum().backward()
        assert_grad_close(a.grad, finite_difference(f, a.data))
        assert_grad_close(b.grad, finite_difference(f, b.data))


class TestBackward:
    def test_sum_gives_ones(self, rng):
        w = Tensor(rng.standard_normal((3, 2)), requires_grad=True)
        w.sum().backward()
        np.testing.assert_array_equal(w.grad, np.ones((3, 2)))

    def test_square(self):
        w = Tensor([3.0], requires_grad=True)
        (w * w).sum().backward()
        np.testing.assert_array_equal(w.grad, [6.0])

    def test_reuse_accumulates(self):
        w = Tensor([1.0, -2.0, 5.0], requires_grad=True)
        (w + w).sum().backward()
        np.testing.assert_array_equal(w.grad, [2.0, 2.0, 2.0])

    def test_grads_accumulate_until_zeroed(self):
        w = Tensor([1.0, 2.0], requires_grad=True)
        w.sum().backward()
        w.sum().backward()
        np.testing.assert_array_equal(w.grad, [2.0, 2.0])
        w.zero_grad()
        w.sum().backward()
        np.testing.assert_array_equal(w.grad, [1.0, 1.0])

    def test_non_scalar_loss(self):
        w = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ContractError):
            (w * 2.0).backward()

    def test_grad_shape_matches(self, rng):
        w = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
        b = Tensor(rng.standard_normal(3), requires_grad=True)
        (ad.tanh(w + b) * w).sum().backward()
        assert w.grad.shape == w.shape and b.grad.shape == b.shape
        assert w.values.size == int(np.prod(w.shape))

    def test_deep_chain_does_not_recurse(self):
        w = Tensor([0.5], requires_grad=True)
        h = w
        for _ in range(5000):
            h = h * 1.0 + 0.0
        h.sum().backward()
        np.testing.assert_allclose(w.grad, [1.0])

    def test_take_rows_gradient_only_on_used_rows(self, rng):
        table = Tensor(rng.standard_normal((6, 3)), requires_grad=True)
        ids = np.array([[2, 3, 0], [3, 5, 0]])
        w = rng.standard_normal((2, 3, 3))

        def f():
            rows = table.data[ids] * (ids != 0)[..., None]
            return float(np.sum(rows * w))

        (ad.take_rows(table, ids, skip=0) * w).sum().backward()
        numeric = finite_difference(f, table.data)
        assert_grad_close(table.grad, numeric)
        np.testing.assert_array_equal(table.grad[[0, 1, 4]], 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_random_composite_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    W = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    v = Tensor(rng.standard_normal(3), requires_grad=True)
    mask = rng.random(4) > 0.4
    mask[rng.integers(4)] = True

    def build():
        z = ad.matmul(v, W)
        s = ad.softmax(ad.tanh(z) * 2.0, mask=mask)
        g = ad.sigmoid(z) * s + ad.concat([v, v[:1]])
        return (g * g).sum() + ad.log(s + 1.0).sum()

    build().backward()
    f = lambda: float(build().data)
    assert_grad_close(W.grad, finite_difference(f, W.data))
    assert_grad_close(v.grad, finite_difference(f, v.data))
