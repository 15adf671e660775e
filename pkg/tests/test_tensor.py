import numpy as np
import pytest

from genresig import tensor as T
from genresig.errors import LabelOutOfRange, NonFiniteValue, NotScalar, ShapeMismatch
from genresig.gradcheck import grad_check
from genresig.optim import Parameter, adam_step
from genresig.tensor import Tape, Tensor, backward


def run_backward(build):
    with Tape() as tape:
        loss = build()
    backward(loss, tape)


class TestMatmul:
    def test_identity(self):
        out = T.matmul(Tensor(np.eye(2)), Tensor([[1.0, 2.0], [3.0, 4.0]]))
        assert np.array_equal(out.data, [[1.0, 2.0], [3.0, 4.0]])

    def test_hand_computed(self):
        out = T.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[5.0], [6.0]]))
        assert np.array_equal(out.data, [[17.0], [39.0]])

    def test_grad_of_sum_is_ones_times_bt(self):
        a = Tensor(np.random.default_rng(0).normal(size=(3, 4)), requires_grad=True)
        b = np.random.default_rng(1).normal(size=(4, 2))
        run_backward(lambda: T.sum_all(T.matmul(a, Tensor(b))))
        assert np.allclose(a.grad, np.ones((3, 2)) @ b.T)

    def test_finite_difference(self):
        rng = np.random.default_rng(2)
        b = Tensor(rng.normal(size=(4, 3)))
        w = Tensor(rng.normal(size=6))
        fn = lambda a: T.sum_all(T.mul(T.reshape(T.matmul(a, b), (-1,)), w))
        assert grad_check(fn, rng.normal(size=(2, 4))) < 1e-6

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


class TestConv2d:
    def test_identity_kernel(self):
        kernel = np.zeros((1, 1, 3, 3))
        kernel[0, 0, 1, 1] = 1.0
        x = np.arange(20.0).reshape(1, 4, 5)
        out = T.conv2d(Tensor(x), Tensor(kernel), Tensor(np.zeros(1)))
        assert np.array_equal(out.data, x)

    def test_padded_sums(self):
        out = T.conv2d(Tensor(np.ones((1, 5, 5))), Tensor(np.ones((1, 1, 3, 3))),
                       Tensor(np.zeros(1)))
        assert out.data[0, 2, 2] == 9.0  # interior sees the full window
        assert out.data[0, 0, 0] == 4.0  # corner sees a 2x2 patch
        assert out.data[0, 0, 2] == 6.0  # edge sees a 2x3 patch

    def test_kernel_gradient_finite_difference(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.normal(size=(2, 4, 6, 5)))
        bias = Tensor(rng.normal(size=3))
        w = Tensor(rng.normal(size=2 * 3 * 6 * 5))
        fn = lambda k: T.sum_all(T.mul(T.reshape(T.conv2d(x, k, bias), (-1,)), w))
        assert grad_check(fn, rng.normal(size=(3, 4, 3, 3))) < 1e-4

    def test_bias_gradient(self):
        rng = np.random.default_rng(4)
        x = Tensor(rng.normal(size=(2, 3, 4)))
        k = Tensor(rng.normal(size=(3, 2, 3, 3)))
        fn = lambda b: T.sum_all(T.conv2d(x, k, b))
        assert grad_check(fn, rng.normal(size=3)) < 1e-6

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            T.conv2d(Tensor(np.ones((2, 4, 4))), Tensor(np.ones((3, 1, 3, 3))),
                     Tensor(np.zeros(3)))


class TestMaxPool:
    def test_single_window(self):
        out = T.maxpool2d(Tensor([[[1.0, 2.0], [3.0, 4.0]]]))
        assert out.data.tolist() == [[[4.0]]]

    def test_token_geometry(self):
        out = T.maxpool2d(Tensor(np.zeros((1, 217, 45))))
        assert out.data.shape == (1, 108, 22)

    def test_odd_trailing_dropped(self):
        x = np.arange(15.0).reshape(1, 3, 5)
        out = T.maxpool2d(Tensor(x))
        assert out.data.shape == (1, 1, 2)
        assert out.data[0, 0, 0] == 6.0

    def test_tie_routes_to_first_row_major(self):
        x = Tensor(np.ones((1, 2, 2)), requires_grad=True)
        run_backward(lambda: T.sum_all(T.maxpool2d(x)))
        assert np.array_equal(x.grad, [[[1.0, 0.0], [0.0, 0.0]]])

    def test_gradient_finite_difference(self):
        rng = np.random.default_rng(5)
        w = Tensor(rng.normal(size=4))
        fn = lambda x: T.sum_all(T.mul(T.reshape(T.maxpool2d(x), (-1,)), w))
        # continuous random input: ties have probability zero
        assert grad_check(fn, rng.normal(size=(2, 3, 4))) < 1e-6


class TestRelu:
    def test_values(self):
        out = T.relu(Tensor([-1.0, 0.0, 2.0]))
        assert out.data.tolist() == [0.0, 0.0, 2.0]

    def test_subgradient(self):
        x = Tensor([1.0, -1.0, 0.0], requires_grad=True)
        run_backward(lambda: T.sum_all(T.relu(x)))
        assert x.grad.tolist() == [1.0, 0.0, 0.0]

    def test_finite_difference_away_from_kink(self):
        fn = lambda x: T.sum_all(T.relu(x))
        assert grad_check(fn, np.array([0.5, -0.7, 1.3, -2.0])) < 1e-6


class TestAffine:
    def test_identity(self):
        x = np.array([1.0, -2.0, 3.0])
        out = T.affine(Tensor(x), Tensor(np.eye(3)), Tensor(np.zeros(3)))
        assert np.array_equal(out.data, x)

    def test_hand_sum(self):
        out = T.affine(Tensor([2.0, 3.0]), Tensor([[1.0, 1.0]]), Tensor([1.0]))
        assert out.data.tolist() == [6.0]

    def test_finite_difference(self):
        rng = np.random.default_rng(6)
        weight = Tensor(rng.normal(size=(3, 5)))
        bias = Tensor(rng.normal(size=3))
        w = Tensor(rng.normal(size=3))
        fn = lambda x: T.sum_all(T.mul(T.affine(x, weight, bias), w))
        assert grad_check(fn, rng.normal(size=5)) < 1e-6

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            T.affine(Tensor(np.ones(4)), Tensor(np.ones((3, 5))), Tensor(np.zeros(3)))


class TestSoftmax:
    def test_uniform(self):
        out = T.softmax(Tensor(np.full(7, 2.5)))
        assert np.allclose(out.data, 1.0 / 7.0)

    def test_closed_form(self):
        out = T.softmax(Tensor([0.0, np.log(3.0)]))
        assert np.allclose(out.data, [0.25, 0.75], atol=1e-15)

    def test_shift_invariance_bitwise(self):
        # dyadic inputs and shift: x + c is exact, so stabilization cancels c
        x = np.array([0.5, 1.0, -2.5, 0.25])
        for c in (3.0, -7.5, 37.25):
            assert np.array_equal(T.softmax(Tensor(x)).data, T.softmax(Tensor(x + c)).data)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(7)
        out = T.softmax(Tensor(rng.normal(scale=5.0, size=(20, 9))))
        assert np.max(np.abs(out.data.sum(axis=1) - 1.0)) < 1e-12
        assert np.all(out.data > 0)


class TestCrossEntropy:
    def test_uniform_logits(self):
        loss = T.cross_entropy(Tensor(np.zeros(10)), 4)
        assert abs(loss.item() - np.log(10)) < 1e-15

    def test_saturated(self):
        logits = np.zeros(10)
        logits[2] = 50.0
        assert T.cross_entropy(Tensor(logits), 2).item() < 1e-20

    def test_gradient_is_p_minus_y(self):
        rng = np.random.default_rng(8)
        logits = Tensor(rng.normal(size=10), requires_grad=True)
        run_backward(lambda: T.cross_entropy(logits, 3))
        probs = T.softmax(Tensor(logits.data)).data
        expected = probs.copy()
        expected[3] -= 1.0
        assert np.allclose(logits.grad, expected, atol=1e-15)
        assert grad_check(lambda x: T.cross_entropy(x, 3), logits.data) < 1e-6

    def test_label_out_of_range(self):
        with pytest.raises(LabelOutOfRange):
            T.cross_entropy(Tensor(np.zeros(10)), 10)


class TestBackward:
    def test_sum_gives_ones(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        run_backward(lambda: T.sum_all(x))
        assert np.array_equal(x.grad, np.ones((2, 3)))

    def test_power_rule(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        run_backward(lambda: T.sum_all(T.mul(x, x)))
        assert x.grad.tolist() == [2.0, 4.0]

    def test_fanout_accumulates(self):
        # y = x + x, loss = sum(y * y) = 4 sum(x^2), so dloss/dx = 8x
        x = Tensor([1.0, -2.0, 3.0], requires_grad=True)

        def build():
            y = T.add(x, x)
            return T.sum_all(T.mul(y, y))

        run_backward(build)
        assert np.allclose(x.grad, 8.0 * x.data)

    def test_not_scalar(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = T.mul(x, x)
        with pytest.raises(NotScalar):
            backward(y, tape)

    def test_deterministic_ops(self):
        rng = np.random.default_rng(9)
        x, k, b = rng.normal(size=(2, 3, 8, 9)), rng.normal(size=(4, 3, 3, 3)), rng.normal(size=4)
        a = T.conv2d(Tensor(x), Tensor(k), Tensor(b)).data
        bb = T.conv2d(Tensor(x), Tensor(k), Tensor(b)).data
        assert np.array_equal(a, bb)


class TestFiniteCheck:
    def test_debug_mode_flags_inf(self):
        T.CHECK_FINITE = True
        try:
            with np.errstate(over="ignore"), pytest.raises(NonFiniteValue):
                T.scale(T.scale(Tensor([1e200]), 1e200), 1e200)
        finally:
            T.CHECK_FINITE = False


class TestAdam:
    def test_zero_gradient_is_noop(self):
        p = Parameter("w", np.array([1.0, -2.0]))
        p.tensor.grad = np.zeros(2)
        adam_step([p], lr=0.1, t=1)
        assert np.array_equal(p.data, [1.0, -2.0])

    def test_first_step_is_signed_lr(self):
        p = Parameter("w", np.array([0.0, 0.0]))
        p.tensor.grad = np.array([100.0, -50.0])
        adam_step([p], lr=0.01, t=1)
        assert np.allclose(p.data, [-0.01, 0.01], rtol=1e-6)

    def test_converges_on_quadratic(self):
        # oracle: run the scalar recurrence itself
        p = Parameter("w", np.array([0.0]))
        for t in range(1, 201):
            p.tensor.grad = 2.0 * (p.data - 3.0)
            adam_step([p], lr=0.1, t=t)
        assert abs(p.data[0] - 3.0) < 0.1

    def test_grads_zeroed_after_step(self):
        p = Parameter("w", np.array([1.0]))
        p.tensor.grad = np.array([1.0])
        adam_step([p], lr=0.1, t=1)
        assert p.grad is None


class TestGradCheckHarness:
    def test_linear_function_is_exact(self):
        w = Tensor(np.array([2.0, -3.0, 0.5]))
        fn = lambda x: T.sum_all(T.mul(x, w))
        assert grad_check(fn, np.array([1.0, 1.0, 1.0])) < 1e-10

    def test_composite_chain(self):
        rng = np.random.default_rng(10)
        kernels = Tensor(rng.normal(size=(2, 1, 3, 3)))
        bias = Tensor(rng.normal(size=2))
        weight = Tensor(rng.normal(size=(3, 2 * 3 * 2)))

        def fn(x):
            y = T.maxpool2d(T.relu(T.conv2d(x, kernels, bias)))
            return T.sum_all(T.affine(T.reshape(y, (1, -1)), weight, None))

        assert grad_check(fn, rng.normal(size=(1, 6, 5))) < 1e-4
