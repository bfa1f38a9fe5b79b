import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdad import autodiff as ad


def finite_diff(fn, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        lp = fn()
        flat[i] = old - h
        lm = fn()
        flat[i] = old
        gf[i] = (lp - lm) / (2 * h)
    return g


def check_grad(make_loss, *params, tol=1e-4):
    ad.zero_gradients(params)
    ad.backward(make_loss())
    for p in params:
        fd = finite_diff(lambda: float(make_loss().data), p.data)
        rel = np.abs(fd - p.grad) / np.maximum.reduce([np.abs(fd), np.abs(p.grad), np.full_like(fd, 1e-6)])
        assert rel.max() <= tol, f"{p.name}: worst rel error {rel.max()}"


class TestPrimitives:
    def test_relu(self):
        out = ad.relu(ad.constant([-1.0, 0.0, 2.0]))
        assert np.array_equal(out.data, [0.0, 0.0, 2.0])

    def test_leaky_relu(self):
        out = ad.leaky_relu(ad.constant([-2.0, 3.0]), 0.2)
        assert np.allclose(out.data, [-0.4, 3.0])

    def test_softmax_symmetry(self):
        out = ad.softmax(ad.constant([0.0, 0.0]))
        assert np.allclose(out.data, [0.5, 0.5])

    def test_mae(self):
        out = ad.mean_absolute_error(ad.constant([1.0, 2.0]), ad.constant([1.0, 4.0]))
        assert out.data == pytest.approx(1.0)

    def test_mae_shape_mismatch(self):
        with pytest.raises(ValueError):
            ad.mean_absolute_error(ad.constant([1.0]), ad.constant([1.0, 2.0]))

    def test_matmul_shape_mismatch(self):
        with pytest.raises(ValueError):
            ad.matmul(ad.constant(np.ones((2, 3))), ad.constant(np.ones((2, 3))))

    def test_non_finite_trips(self):
        with pytest.raises(ad.NonFiniteError):
            ad.div(ad.constant(1.0), ad.constant(0.0))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_softmax_rows_sum_to_one(self, seed):
        rng = np.random.default_rng(seed)
        x = ad.constant(rng.normal(0, 5, (4, 7)))
        out = ad.softmax(x, axis=-1)
        assert np.all(out.data >= 0)
        assert np.allclose(out.data.sum(axis=-1), 1.0, atol=1e-9)

    def test_dropout_identities(self):
        x = ad.constant(np.arange(6.0).reshape(2, 3))
        rng = np.random.default_rng(0)
        assert ad.dropout(x, 0.0, rng, train=True) is x
        assert ad.dropout(x, 0.5, rng, train=False) is x

    def test_dropout_scales(self):
        rng = np.random.default_rng(0)
        x = ad.constant(np.ones(10000))
        out = ad.dropout(x, 0.4, rng, train=True)
        kept = out.data[out.data > 0]
        assert np.allclose(kept, 1 / 0.6)
        assert abs(out.data.mean() - 1.0) < 0.05


class TestBatchNorm:
    def test_train_normalizes(self):
        bn = ad.BatchNorm("bn", 3)
        rng = np.random.default_rng(1)
        x = ad.constant(rng.normal(3.0, 2.0, (64, 3)))
        out = bn(x, train=True)
        # gamma=1, beta=0 at init, so output is the normalized activations
        assert np.allclose(out.data.mean(axis=0), 0.0, atol=1e-6)
        assert np.allclose(out.data.var(axis=0), 1.0, atol=1e-3)

    def test_inference_uses_running_stats(self):
        bn = ad.BatchNorm("bn", 2)
        x = ad.constant(np.array([[1.0, 2.0], [3.0, 4.0]]))
        bn(x, train=True)
        out1 = bn(x, train=False)
        out2 = bn(x, train=False)
        assert np.array_equal(out1.data, out2.data)


class TestBackward:
    def test_square(self):
        x = ad.Parameter("x", 3.0)
        ad.backward(ad.mul(x, x))
        assert x.grad == pytest.approx(6.0)

    def test_mae_at_zero_residual(self):
        x = ad.Parameter("x", np.array([1.0, 2.0]))
        loss = ad.mean_absolute_error(x, ad.constant([1.0, 2.0]))
        ad.backward(loss)
        assert np.array_equal(x.grad, [0.0, 0.0])

    def test_accumulates_until_zeroed(self):
        x = ad.Parameter("x", 2.0)
        ad.backward(ad.mul(x, x))
        ad.backward(ad.mul(x, x))
        assert x.grad == pytest.approx(8.0)
        ad.zero_gradients([x])
        assert x.grad == 0.0

    def test_non_scalar_loss_rejected(self):
        x = ad.Parameter("x", np.ones(3))
        with pytest.raises(ValueError):
            ad.backward(x)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_two_layer_composition_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        W1 = ad.Parameter("W1", rng.normal(0, 0.5, (4, 5)))
        b1 = ad.Parameter("b1", rng.normal(0, 0.5, 5))
        W2 = ad.Parameter("W2", rng.normal(0, 0.5, (5, 2)))
        x = rng.normal(size=(3, 4))
        target = rng.normal(size=(3, 2))

        def make_loss():
            h = ad.leaky_relu(ad.add(ad.matmul(ad.constant(x), W1), b1), 0.2)
            return ad.mean_absolute_error(ad.matmul(h, W2), ad.constant(target))

        check_grad(make_loss, W1, b1, W2)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=10, deadline=None)
    def test_softmax_concat_narrow_grads(self, seed):
        rng = np.random.default_rng(seed)
        a = ad.Parameter("a", rng.normal(0, 1, (3, 4)))
        b = ad.Parameter("b", rng.normal(0, 1, (3, 2)))

        def make_loss():
            cat = ad.concat([a, b], axis=-1)
            sm = ad.softmax(cat, axis=-1)
            piece = ad.narrow(sm, -1, 1, 3)
            return ad.mean(ad.mul(piece, piece))

        check_grad(make_loss, a, b)


class TestSgd:
    def test_plain_step(self):
        p = ad.Parameter("p", 0.0)
        opt = ad.SGDMomentum([p], lr=0.1, momentum=0.0)
        p.grad[...] = 1.0
        opt.step()
        assert p.data == pytest.approx(-0.1)
        assert p.grad == 0.0

    def test_momentum_two_step_recurrence(self):
        # buffer: 1 then 0.9*1+1=1.9; value: -0.1 then -0.1-0.19
        p = ad.Parameter("p", 0.0)
        opt = ad.SGDMomentum([p], lr=0.1, momentum=0.9)
        for _ in range(2):
            p.grad[...] = 1.0
            opt.step()
        assert p.data == pytest.approx(-0.29)

    def test_zero_grad_decays_buffer(self):
        p = ad.Parameter("p", 1.0)
        opt = ad.SGDMomentum([p], lr=0.1, momentum=0.9)
        p.grad[...] = 1.0
        opt.step()
        buf_before = opt.buffers["p"].copy()
        opt.step()  # zero grad
        assert opt.buffers["p"] == pytest.approx(0.9 * buf_before)

    def test_momentum_zero_equals_vanilla(self):
        rng = np.random.default_rng(0)
        p1 = ad.Parameter("p", rng.normal(size=4))
        p2 = ad.Parameter("p", p1.data.copy())
        opt = ad.SGDMomentum([p1], lr=0.05, momentum=0.0)
        for _ in range(5):
            g = rng.normal(size=4)
            p1.grad[...] = g
            opt.step()
            p2.data -= 0.05 * g
        assert np.array_equal(p1.data, p2.data)

    def test_invalid_hyperparameters(self):
        p = ad.Parameter("p", 0.0)
        with pytest.raises(ValueError):
            ad.SGDMomentum([p], lr=0.0)
        with pytest.raises(ValueError):
            ad.SGDMomentum([p], lr=0.1, momentum=1.0)


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(42)
        params = [
            ad.Parameter("w", rng.normal(size=(3, 4)) * 1e-7),
            ad.Parameter("b", rng.normal(size=5) * 1e12),
            ad.Parameter("s", 0.1 + 0.2),
        ]
        path = tmp_path / "ckpt.txt"
        ad.save_params(path, params)
        loaded = ad.load_params(path)
        for p in params:
            assert loaded[p.name].shape == p.data.shape
            assert np.array_equal(loaded[p.name], p.data)

    def test_header_checked(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("something else\n")
        with pytest.raises(ValueError):
            ad.load_params(path)
