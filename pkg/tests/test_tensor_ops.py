"""Tensor-engine op contracts: hand values, closed forms, FD oracles."""

import math

import numpy as np
import pytest

from latentplan import tensor as T
from helpers import check_grads, op_gradient_cases

rng = np.random.default_rng(42)


class TestMatmul:
    def test_identity(self):
        a = T.Tensor([[1.0, 2.0], [3.0, 4.0]])
        out = T.matmul(a, T.Tensor(np.eye(2)))
        np.testing.assert_allclose(out.data, [[1, 2], [3, 4]])

    def test_hand_arithmetic(self):
        out = T.matmul(T.Tensor([[1.0, 2.0]]), T.Tensor([[3.0], [4.0]]))
        np.testing.assert_allclose(out.data, [[11.0]])

    def test_shape_error(self):
        with pytest.raises(ValueError):
            T.matmul(T.Tensor(np.ones((2, 3))), T.Tensor(np.ones((2, 3))))

    def test_gradient_vs_finite_differences(self):
        """random 3×4 · 4×2, grads of sum(out) vs central differences in 64-bit"""
        err = check_grads(
            lambda ts: T.tsum(T.matmul(ts[0], ts[1])),
            [rng.normal(size=(3, 4)), rng.normal(size=(4, 2))],
        )
        assert err < 1e-4


class TestSoftmax:
    def test_symmetry(self):
        np.testing.assert_allclose(T.softmax(T.Tensor([0.0, 0.0])).data, [0.5, 0.5])

    def test_closed_form(self):
        np.testing.assert_allclose(T.softmax(T.Tensor([0.0, math.log(2.0)])).data, [1 / 3, 2 / 3], atol=1e-7)

    def test_shift_invariance(self):
        x = rng.normal(size=7)
        a = T.softmax(T.Tensor(x, dtype=np.float64)).data
        b = T.softmax(T.Tensor(x + 123.456, dtype=np.float64)).data
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_nan_input_rejected(self):
        with pytest.raises(ValueError):
            T.softmax(T.Tensor([0.0, float("nan")]))


class TestLayerNorm:
    def test_constant_row_is_zero(self):
        dim = 5
        g, b = T.Tensor(np.ones(dim)), T.Tensor(np.zeros(dim))
        out = T.layer_norm(T.Tensor(np.full((2, dim), 3.3)), g, b)
        np.testing.assert_allclose(out.data, 0.0, atol=1e-3)

    def test_unit_variance_input(self):
        g, b = T.Tensor(np.ones(2)), T.Tensor(np.zeros(2))
        out = T.layer_norm(T.Tensor([1.0, -1.0], dtype=np.float64), g, b, eps=1e-12)
        np.testing.assert_allclose(out.data, [1.0, -1.0], atol=1e-5)

    def test_gradient_vs_finite_differences(self):
        w = rng.normal(size=(3, 6))
        err = check_grads(
            lambda ts: T.tsum(T.mul(T.layer_norm(ts[0], ts[1], ts[2], eps=1e-6), w)),
            [rng.normal(size=(3, 6)), rng.uniform(0.5, 1.5, 6), rng.normal(size=6)],
        )
        assert err < 1e-4


class TestActivations:
    def test_gelu_odd_point(self):
        assert T.activation(T.Tensor([0.0]), "gelu").data[0] == 0.0

    def test_gelu_at_one(self):
        """tanh-approximation value at x=1 ≈ 0.8412"""
        assert abs(T.activation(T.Tensor([1.0], dtype=np.float64), "gelu").data[0] - 0.8412) < 5e-4

    def test_leaky_relu_slope(self):
        assert T.activation(T.Tensor([-2.0]), "leaky_relu").data[0] == pytest.approx(-0.02)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            T.activation(T.Tensor([1.0]), "swish")


class TestCrossEntropy:
    def test_uniform_two_logits(self):
        out = T.cross_entropy_from_logits(T.Tensor([0.0, 0.0]), np.array([1.0, 0.0]))
        assert out.item() == pytest.approx(math.log(2.0), abs=1e-6)

    def test_uniform_logits_any_target(self):
        k = 7
        tgt = rng.dirichlet(np.ones(k))
        out = T.cross_entropy_from_logits(T.Tensor(np.zeros(k), dtype=np.float64), tgt)
        assert out.item() == pytest.approx(math.log(k), abs=1e-9)

    def test_gradient_is_softmax_minus_target(self):
        logits = T.Tensor(rng.normal(size=5), requires_grad=True, dtype=np.float64)
        tgt = rng.dirichlet(np.ones(5))
        T.cross_entropy_from_logits(logits, tgt).backward()
        expected = T.softmax(T.Tensor(logits.data, dtype=np.float64)).data - tgt
        np.testing.assert_allclose(logits.grad, expected, atol=1e-10)

    def test_invalid_target_rejected(self):
        with pytest.raises(ValueError):
            T.cross_entropy_from_logits(T.Tensor([0.0, 0.0]), np.array([0.7, 0.7]))


class TestBackward:
    def test_square(self):
        x = T.Tensor([3.0], requires_grad=True)
        T.tsum(T.pow_scalar(x, 2.0)).backward()
        np.testing.assert_allclose(x.grad, [6.0])

    def test_ce_softmax_composite(self):
        """CE built from -Σ y·log(softmax) has the p − y gradient"""
        x = T.Tensor(rng.normal(size=4), requires_grad=True, dtype=np.float64)
        y = rng.dirichlet(np.ones(4))
        loss = T.tsum(T.mul(T.tlog(T.softmax(x)), T.Tensor(-y, dtype=np.float64)))
        loss.backward()
        np.testing.assert_allclose(x.grad, T.softmax(T.Tensor(x.data, dtype=np.float64)).data - y, atol=1e-8)

    def test_two_layer_network_fd(self):
        err = op_gradient_cases(np.random.default_rng(7))["two_layer_net"]()
        assert err < 1e-3

    def test_non_scalar_root_rejected(self):
        x = T.Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ValueError):
            x.backward()

    def test_stop_gradient_blocks_flow(self):
        x = T.Tensor([2.0], requires_grad=True)
        y = T.mul(x, 3.0)
        T.tsum(T.mul(y.detach(), x)).backward()
        np.testing.assert_allclose(x.grad, [6.0])  # only the direct factor, not through y

    def test_gradient_accumulates_over_fanout(self):
        x = T.Tensor([1.5], requires_grad=True)
        T.tsum(T.add(T.mul(x, x), x)).backward()
        np.testing.assert_allclose(x.grad, [2 * 1.5 + 1])


class TestComputationRecord:
    def test_topological_order(self):
        """every op appears after the ops that produced its inputs"""
        x = T.Tensor(rng.normal(size=(3, 3)), requires_grad=True)
        out = T.tsum(T.softmax(T.matmul(x, x), axis=-1))
        rec = T.ComputationRecord.from_root(out)
        pos = {out_id: i for i, (_, _, out_id) in enumerate(rec.entries())}
        for _, input_ids, out_id in rec.entries():
            for pid in input_ids:
                if pid in pos:
                    assert pos[pid] < pos[out_id]

    def test_no_grad_builds_no_graph(self):
        x = T.Tensor([1.0], requires_grad=True)
        with T.no_grad():
            y = T.mul(x, 2.0)
        assert y._parents == () and not y.requires_grad


class TestOpGradientSweep:
    @pytest.mark.parametrize("name", sorted(op_gradient_cases(np.random.default_rng(0)).keys()))
    def test_op_matches_finite_differences(self, name):
        cases = op_gradient_cases(np.random.default_rng(hash(name) % 2**32))
        assert cases[name]() < 1e-4
