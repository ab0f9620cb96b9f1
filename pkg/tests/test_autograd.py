"""Tests for the reverse-mode autodiff engine."""

import math

import numpy as np
import pytest

from summer import autograd as ag
from summer.autograd import Tensor, backward, finite_difference_check, no_grad
from summer.errors import ContractError, DimensionError, ParameterError


class TestMatmul:
    def test_identity(self):
        a = Tensor(np.eye(2))
        b = Tensor([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal((a @ b).values, b.values)

    def test_1x1(self):
        out = Tensor([[2.0]]) @ Tensor([[3.0]])
        assert out.values[0, 0] == 6.0

    def test_2x2_hand_oracle(self):
        # hand-computed: rows of A dotted with columns of B
        out = Tensor([[1.0, 2.0], [3.0, 4.0]]) @ Tensor([[5.0, 6.0], [7.0, 8.0]])
        np.testing.assert_array_equal(out.values, [[19.0, 22.0], [43.0, 50.0]])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
            Tensor(np.zeros((2, 3))) @ Tensor(np.zeros((2, 2)))

    def test_gradients_flow_to_both_inputs(self):
        a = Tensor([[1.0, 2.0]], requires_grad=True)
        b = Tensor([[3.0], [4.0]], requires_grad=True)
        backward(a @ b)
        np.testing.assert_array_equal(a.grad, [[3.0, 4.0]])
        np.testing.assert_array_equal(b.grad, [[1.0], [2.0]])

    def test_associativity_property(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            a = rng.standard_normal((3, 4))
            b = rng.standard_normal((4, 5))
            c = rng.standard_normal((5, 2))
            left = ((Tensor(a) @ Tensor(b)) @ Tensor(c)).values
            right = (Tensor(a) @ (Tensor(b) @ Tensor(c))).values
            np.testing.assert_allclose(left, right, rtol=1e-9, atol=1e-12)


class TestSoftmax:
    def test_symmetry(self):
        out = ag.softmax(Tensor([0.0, 0.0]), temperature=0.5)
        np.testing.assert_allclose(out.values, [0.5, 0.5], atol=1e-15)

    def test_analytic_two_to_one(self):
        out = ag.softmax(Tensor([math.log(2.0), 0.0]), temperature=1.0)
        np.testing.assert_allclose(out.values, [2.0 / 3.0, 1.0 / 3.0], atol=1e-15)

    def test_scalar_exponential_oracle(self):
        # independent recomputation with math.exp at temperature 0.5
        logits = [10.0, 0.0, 0.0]
        tau = 0.5
        exps = [math.exp(x / tau - 20.0) for x in logits]  # max-subtracted like the impl
        total = sum(exps)
        expected = [e / total for e in exps]
        out = ag.softmax(Tensor(logits), temperature=tau)
        np.testing.assert_allclose(out.values, expected, rtol=1e-12)

    def test_nonpositive_temperature_rejected(self):
        with pytest.raises(ParameterError):
            ag.softmax(Tensor([1.0, 2.0]), temperature=0.0)
        with pytest.raises(ParameterError):
            ag.softmax(Tensor([1.0, 2.0]), temperature=-1.0)

    def test_rows_sum_to_one_property(self):
        # any finite input, tau in (0, 10]
        rng = np.random.default_rng(11)
        for _ in range(100):
            x = rng.uniform(-50.0, 50.0, size=(4, 6))
            tau = rng.uniform(1e-3, 10.0)
            out = ag.softmax(Tensor(x), axis=1, temperature=tau)
            assert np.all(out.values >= 0.0)
            assert np.all(np.isfinite(out.values))
            np.testing.assert_allclose(out.values.sum(axis=1), 1.0, atol=1e-9)


class TestBackward:
    def test_product_rule(self):
        x = Tensor(3.0, requires_grad=True)
        y = Tensor(5.0, requires_grad=True)
        backward(x * y)
        assert x.grad == 5.0
        assert y.grad == 3.0

    def test_quadratic(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        backward(ag.tsum(x * x))
        np.testing.assert_array_equal(x.grad, [2.0, 4.0])

    def test_non_scalar_loss_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ContractError):
            backward(x * x)

    def test_empty_tape_rejected(self):
        with pytest.raises(ContractError, match="tape"):
            backward(Tensor(1.0, requires_grad=True))

    def test_second_backward_raises(self):
        x = Tensor(2.0, requires_grad=True)
        loss = x * x
        backward(loss)
        with pytest.raises(ContractError):
            backward(loss)

    def test_rerecording_allows_fresh_backward(self):
        x = Tensor(2.0, requires_grad=True)
        backward(x * x)
        x.zero_grad()
        backward(x * x)
        assert x.grad == 4.0

    def test_grad_accumulates_by_summation(self):
        x = Tensor(2.0, requires_grad=True)
        backward(x * x)
        backward(x * Tensor(3.0))
        assert x.grad == 4.0 + 3.0

    def test_shared_subexpression(self):
        x = Tensor(3.0, requires_grad=True)
        y = x * x
        backward(y * x)  # x**3 -> 3 x**2
        assert x.grad == 27.0

    def test_tape_visits_each_op_once(self):
        x = Tensor(1.0, requires_grad=True)
        y = x * x
        loss = y + y
        tape = ag.Tape.trace(loss)
        assert len(tape) == 2  # mul and add, each recorded once

    def test_no_grad_suppresses_recording(self):
        x = Tensor(2.0, requires_grad=True)
        with no_grad():
            out = x * x
        assert out._vjp is None and not out.requires_grad


class TestOps:
    def test_broadcast_add_unbroadcasts_grad(self):
        a = Tensor(np.ones((3, 2)), requires_grad=True)
        b = Tensor(np.ones(2), requires_grad=True)
        backward(ag.tsum(a + b))
        np.testing.assert_array_equal(a.grad, np.ones((3, 2)))
        np.testing.assert_array_equal(b.grad, [3.0, 3.0])

    def test_take_row_scatter(self):
        table = Tensor(np.arange(12.0).reshape(4, 3), requires_grad=True)
        row = table[np.array([1, 1, 3])]
        backward(ag.tsum(row))
        expected = np.zeros((4, 3))
        expected[1] = 2.0
        expected[3] = 1.0
        np.testing.assert_array_equal(table.grad, expected)

    def test_concat_and_flip(self):
        a = Tensor([[1.0, 2.0]], requires_grad=True)
        b = Tensor([[3.0, 4.0]], requires_grad=True)
        out = ag.flip(ag.concat([a, b], axis=0), axis=0)
        np.testing.assert_array_equal(out.values, [[3.0, 4.0], [1.0, 2.0]])
        backward(ag.tsum(out * Tensor([[1.0, 1.0], [2.0, 2.0]])))
        np.testing.assert_array_equal(a.grad, [[2.0, 2.0]])
        np.testing.assert_array_equal(b.grad, [[1.0, 1.0]])

    def test_mean_axis(self):
        x = Tensor([[1.0, 3.0], [5.0, 7.0]], requires_grad=True)
        out = ag.tmean(x, axis=0)
        np.testing.assert_array_equal(out.values, [3.0, 5.0])
        backward(ag.tsum(out))
        np.testing.assert_array_equal(x.grad, 0.5 * np.ones((2, 2)))

    def test_clip_min_blocks_gradient_below_floor(self):
        x = Tensor([1e-20, 0.5], requires_grad=True)
        out = ag.clip_min(x, 1e-12)
        np.testing.assert_array_equal(out.values, [1e-12, 0.5])
        backward(ag.tsum(ag.log(out)))
        assert x.grad[0] == 0.0
        assert x.grad[1] == pytest.approx(2.0)


class TestFiniteDifferenceCheck:
    def test_quadratic_near_exact(self):
        x = Tensor(3.0, requires_grad=True)
        err = finite_difference_check(lambda: x * x, [x], eps=1e-5)
        assert err < 1e-6

    def test_softmax_cross_entropy(self):
        rng = np.random.default_rng(3)
        logits = Tensor(rng.standard_normal((4, 5)), requires_grad=True)
        onehot = Tensor(np.eye(5)[rng.integers(0, 5, size=4)])

        def f():
            p = ag.softmax(logits, axis=1)
            return -ag.tsum(onehot * ag.log(ag.clip_min(p, 1e-12))) / 4.0

        assert finite_difference_check(f, [logits], eps=1e-5) < 1e-5

    def test_eps_bounds_enforced(self):
        x = Tensor(1.0, requires_grad=True)
        with pytest.raises(ParameterError):
            finite_difference_check(lambda: x * x, [x], eps=1e-2)

    def test_nondeterministic_f_rejected(self):
        x = Tensor(1.0, requires_grad=True)
        rng = np.random.default_rng(0)

        def f():
            return x * Tensor(rng.standard_normal())

        with pytest.raises(ContractError):
            finite_difference_check(f, [x], eps=1e-5)

    def test_randomized_composite_property(self):
        # analytic matches central differences within 1e-4 relative, many seeds
        for seed in range(100):
            rng = np.random.default_rng(seed)
            w = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
            b = Tensor(rng.standard_normal(3), requires_grad=True)
            x = Tensor(rng.standard_normal((2, 3)))

            def f():
                h = ag.tanh(x @ w + b)
                p = ag.softmax(h, axis=1, temperature=0.7)
                return ag.tsum(p * p) + ag.tmean(ag.sigmoid(h))

            assert finite_difference_check(f, [w, b], eps=1e-5) < 1e-4
