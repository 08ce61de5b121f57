import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from emufleet.errors import DomainError, NumericError, ShapeError
from emufleet.netcore import (
    Activation,
    PoolMode,
    PoolSpec,
    apply_activation,
    conv2d_backward,
    conv2d_valid,
    dense_forward,
    finite_diff_gradient,
    pool,
    pool_backward,
)

TABLE4_DENSE = [-0.1831, 2.0049, -0.2069]


def _conv_by_definition(x, k):
    # direct index arithmetic, independent of the slicing used in the module
    r, c = x.shape[0], k.shape[0]
    out = np.zeros((r - c + 1, r - c + 1))
    for i in range(r - c + 1):
        for j in range(r - c + 1):
            for u in range(c):
                for v in range(c):
                    out[i, j] += x[i + u, j + v] * k[u, v]
    return out


class TestConv:
    def test_3x3_with_2x2(self):
        assert conv2d_valid(np.zeros((3, 3)), np.zeros((2, 2))).shape == (2, 2)

    def test_shape_law_exhaustive(self):
        rng = np.random.default_rng(0)
        for r in range(1, 9):
            for c in range(1, r + 1):
                out = conv2d_valid(rng.normal(size=(r, r)), rng.normal(size=(c, c)))
                assert out.shape == (r - c + 1, r - c + 1)

    def test_zero_kernel(self):
        x = np.arange(9.0).reshape(3, 3)
        np.testing.assert_array_equal(conv2d_valid(x, np.zeros((2, 2))), np.zeros((2, 2)))

    def test_ones(self):
        np.testing.assert_array_equal(conv2d_valid(np.ones((3, 3)), np.ones((2, 2))), np.full((2, 2), 4.0))

    def test_no_flip(self):
        x = np.arange(9.0).reshape(3, 3)
        k = np.array([[1.0, 0.0], [0.0, 0.0]])
        # correlation picks the top-left of each window; a flipped kernel would pick bottom-right
        np.testing.assert_array_equal(conv2d_valid(x, k), [[0, 1], [3, 4]])

    def test_bias_added_everywhere(self):
        out = conv2d_valid(np.zeros((3, 3)), np.ones((2, 2)), bias=-0.25)
        np.testing.assert_array_equal(out, np.full((2, 2), -0.25))

    def test_matches_definition(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            r = rng.integers(2, 7)
            c = rng.integers(1, r + 1)
            x, k = rng.normal(size=(r, r)), rng.normal(size=(c, c))
            np.testing.assert_allclose(conv2d_valid(x, k), _conv_by_definition(x, k), rtol=1e-12, atol=1e-12)

    @settings(max_examples=50)
    @given(arrays(float, (4, 4), elements=st.floats(-10, 10)),
           arrays(float, (4, 4), elements=st.floats(-10, 10)),
           st.floats(-5, 5), st.floats(-5, 5))
    def test_linearity(self, x, y, a, b):
        k = np.array([[0.3, -1.2, 0.5], [2.0, 0.1, -0.7], [0.0, 1.5, 0.9]])
        lhs = conv2d_valid(a * x + b * y, k)
        rhs = a * conv2d_valid(x, k) + b * conv2d_valid(y, k)
        scale = 1.0 + np.abs(a * x).max() + np.abs(b * y).max()
        np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12 * scale)

    def test_kernel_too_large(self):
        with pytest.raises(ShapeError):
            conv2d_valid(np.ones((2, 2)), np.ones((3, 3)))

    def test_not_2d(self):
        with pytest.raises(ShapeError):
            conv2d_valid(np.ones(9), np.ones((2, 2)))

    def test_non_finite_input(self):
        x = np.ones((3, 3))
        x[1, 1] = np.nan
        with pytest.raises(NumericError):
            conv2d_valid(x, np.ones((2, 2)))

    def test_backward_against_finite_differences(self):
        rng = np.random.default_rng(2)
        x, k, g = rng.normal(size=(3, 3)), rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
        grad_x, grad_k, grad_b = conv2d_backward(x, k, g)

        def loss_x(v):
            return float(np.sum(conv2d_valid(v.reshape(3, 3), k) * g))

        def loss_k(v):
            return float(np.sum(conv2d_valid(x, v.reshape(2, 2)) * g))

        np.testing.assert_allclose(grad_x.ravel(), finite_diff_gradient(loss_x, x), rtol=1e-7, atol=1e-9)
        np.testing.assert_allclose(grad_k.ravel(), finite_diff_gradient(loss_k, k), rtol=1e-7, atol=1e-9)
        assert grad_b == pytest.approx(g.sum(), rel=1e-15)


class TestActivation:
    def test_sigmoid_values(self):
        assert float(Activation.SIGMOID(0.0)) == 0.5
        assert float(Activation.SIGMOID(4.0)) == pytest.approx(0.9820138, abs=5e-8)
        assert 1 / (1 + np.exp(-4.0)) == pytest.approx(0.9820138, abs=5e-8)

    def test_linear_is_identity(self):
        m = np.array([[1.5, -2.0], [0.0, 7.25]])
        np.testing.assert_array_equal(apply_activation(m, "linear"), m)

    def test_sigmoid_range(self):
        x = np.linspace(-30, 30, 601)
        y = Activation.SIGMOID(x)
        assert np.all((y > 0) & (y < 1))

    def test_saturation_is_legal(self):
        y = apply_activation(np.array([[-1000.0, 1000.0]]), Activation.SIGMOID)
        np.testing.assert_array_equal(y, [[0.0, 1.0]])

    def test_sigmoid_derivative_random_points(self):
        rng = np.random.default_rng(3)
        for x in rng.uniform(-6, 6, size=100):
            y = float(Activation.SIGMOID(x))
            fd = finite_diff_gradient(lambda p: float(Activation.SIGMOID(p[0])), [x])[0]
            assert y * (1 - y) == pytest.approx(fd, rel=1e-6)
            assert float(Activation.SIGMOID.derivative(x)) == pytest.approx(y * (1 - y), rel=1e-14)

    @pytest.mark.parametrize("act", list(Activation))
    def test_derivative_every_activation(self, act):
        rng = np.random.default_rng(4)
        xs = rng.uniform(-4, 4, size=200)
        xs = xs[np.abs(xs) > 1e-3]
        for x in xs:
            fd = finite_diff_gradient(lambda p: float(act(p[0])), [x])[0]
            d = float(act.derivative(x))
            assert d == pytest.approx(fd, rel=1e-6, abs=1e-12)
            assert float(act.derivative_from_output(act(x))) == pytest.approx(d, rel=1e-12, abs=1e-15)

    def test_relu_kink_convention(self):
        assert float(Activation.RELU.derivative(0.0)) == 0.0

    def test_unknown_activation(self):
        with pytest.raises(ValueError):
            Activation("softplus")


class TestPool:
    def test_average(self):
        np.testing.assert_array_equal(pool([[1, 2], [3, 4]]), [[2.5]])

    def test_max(self):
        np.testing.assert_array_equal(pool([[1, 2], [3, 4]], PoolSpec(mode=PoolMode.MAX)), [[4.0]])

    def test_constant_map(self):
        np.testing.assert_array_equal(pool(np.full((4, 6), 0.7)), np.full((2, 3), 0.7))

    def test_bias(self):
        np.testing.assert_array_equal(pool([[1, 2], [3, 4]], PoolSpec(bias=0.5)), [[3.0]])

    @settings(max_examples=50)
    @given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 3), st.data())
    def test_average_preserves_mean(self, h, w, win, data):
        x = data.draw(arrays(float, (h * win, w * win), elements=st.floats(-100, 100)))
        assert pool(x, PoolSpec(window=win)).mean() == pytest.approx(x.mean(), rel=1e-12, abs=1e-12)

    def test_non_tiling(self):
        with pytest.raises(ShapeError):
            pool(np.ones((3, 3)))

    def test_bad_window(self):
        with pytest.raises(DomainError):
            PoolSpec(window=0)

    def test_backward_average(self):
        np.testing.assert_array_equal(pool_backward(np.ones((2, 2)), [[1.0]]), np.full((2, 2), 0.25))

    def test_backward_max_routes_to_argmax(self):
        g = pool_backward([[1, 5], [3, 4]], [[2.0]], PoolSpec(mode="max"))
        np.testing.assert_array_equal(g, [[0, 2.0], [0, 0]])

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(4, 4))
        go = rng.normal(size=(2, 2))
        for spec in (PoolSpec(), PoolSpec(mode="max")):
            fd = finite_diff_gradient(lambda v: float(np.sum(pool(v.reshape(4, 4), spec) * go)), x)
            np.testing.assert_allclose(pool_backward(x, go, spec).ravel(), fd, rtol=1e-7, atol=1e-9)


class TestDense:
    def test_table4_first_unit(self):
        assert dense_forward([1, 0, 0], TABLE4_DENSE, -0.2678) == pytest.approx(-0.4509, abs=1e-12)

    def test_zero_input_gives_bias(self):
        assert dense_forward([0, 0, 0], TABLE4_DENSE, 0.123) == 0.123

    def test_zero_weights_sigmoid(self):
        assert dense_forward([3, -1, 2], [0, 0, 0], 0.0, "sigmoid") == 0.5

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            dense_forward([1, 2], [1, 2, 3], 0.0)


class TestFiniteDiff:
    def test_constant_loss(self):
        np.testing.assert_array_equal(finite_diff_gradient(lambda p: 4.2, [1.0, -2.0, 3.0]), np.zeros(3))

    def test_square(self):
        assert finite_diff_gradient(lambda p: p[0] ** 2, [3.0])[0] == pytest.approx(6.0, abs=1e-8)

    def test_quadratic_form(self):
        rng = np.random.default_rng(6)
        a = rng.normal(size=(5, 5))
        q = a @ a.T + np.eye(5)
        b = rng.normal(size=5)
        p = rng.normal(size=5)
        fd = finite_diff_gradient(lambda v: 0.5 * v @ q @ v + b @ v, p)
        np.testing.assert_allclose(fd, q @ p + b, rtol=1e-10, atol=1e-10)

    def test_input_not_mutated(self):
        p = np.array([1.0, 2.0])
        finite_diff_gradient(lambda v: float(v @ v), p)
        np.testing.assert_array_equal(p, [1.0, 2.0])

    @pytest.mark.parametrize("eps", [0.0, -1e-5])
    def test_bad_eps(self, eps):
        with pytest.raises(DomainError):
            finite_diff_gradient(lambda p: 0.0, [1.0], eps)

    def test_non_finite_loss(self):
        with pytest.raises(NumericError):
            finite_diff_gradient(lambda p: np.inf, [1.0])
