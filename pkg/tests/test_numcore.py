import numpy as np
import pytest

from irkit.errors import NumericFault, ShapeError
from irkit.numcore import Rng, Tensor, backward, concat, fd_check, matmul


class TestMatmul:
    def test_identity(self):
        m = np.arange(9, dtype=float).reshape(3, 3)
        assert np.array_equal(matmul(np.eye(3), m), m)

    def test_hand_product(self):
        out = matmul([[1, 2], [3, 4]], [[1], [1]])
        assert np.array_equal(out, [[3], [7]])

    def test_shape_error_reports_both_shapes(self):
        with pytest.raises(ShapeError) as exc:
            matmul(np.zeros((2, 3)), np.zeros((2, 3)))
        assert "(2, 3)" in str(exc.value)

    def test_nonfinite_result_rejected(self):
        with pytest.raises(NumericFault):
            matmul(np.full((2, 2), 1e308), np.full((2, 2), 1e308))

    def test_associativity_on_well_conditioned_triples(self):
        rng = Rng(7)
        for _ in range(20):
            a = rng.normal(size=(4, 5))
            b = rng.normal(size=(5, 6))
            c = rng.normal(size=(6, 3))
            left = matmul(matmul(a, b), c)
            right = matmul(a, matmul(b, c))
            assert np.allclose(left, right, rtol=1e-9, atol=1e-9)


class TestBackward:
    def test_square_at_three(self):
        x = Tensor(np.array(3.0), requires_grad=True)
        y = x * x
        backward(y)
        assert x.grad == pytest.approx(6.0)

    def test_product_rule(self):
        x = Tensor(np.array(2.0), requires_grad=True)
        y = Tensor(np.array(5.0), requires_grad=True)
        backward(x * y)
        assert x.grad == pytest.approx(5.0)
        assert y.grad == pytest.approx(2.0)

    def test_nonscalar_output_rejected(self):
        x = Tensor(np.zeros(3), requires_grad=True)
        with pytest.raises(ShapeError):
            backward(x * 2.0)

    def test_grad_accumulates_over_reuse(self):
        x = Tensor(np.array(3.0), requires_grad=True)
        backward(x * x + x)  # d/dx = 2x + 1
        assert x.grad == pytest.approx(7.0)

    def test_two_layer_composition_matches_fd(self):
        rng = Rng(11)
        w1 = rng.normal(size=(4, 5))
        w2 = rng.normal(size=(5, 1))
        x = rng.normal(size=(3, 4))

        def f(p: Tensor) -> Tensor:
            a = p[0:20].reshape(4, 5)
            b = p[20:25].reshape(5, 1)
            h = (Tensor(x) @ a).silu()
            return (h @ b).sum()

        point = np.concatenate([w1.ravel(), w2.ravel()])
        assert fd_check(f, point) < 1e-4

    def test_matmul_broadcast_gradient(self):
        # (B, T, D) @ (D, D) exercises batch-dim unbroadcasting on the weight
        rng = Rng(3)
        x = rng.normal(size=(2, 3, 4))

        def f(p: Tensor) -> Tensor:
            w = p.reshape(4, 4)
            return (Tensor(x) @ w).sum()

        assert fd_check(f, rng.normal(size=16)) < 1e-6

    def test_take_rows_scatter(self):
        w = Tensor(np.arange(6, dtype=float).reshape(3, 2), requires_grad=True)
        idx = np.array([0, 2, 0])
        out = w.take_rows(idx).sum()
        backward(out)
        assert np.array_equal(w.grad, [[2, 2], [0, 0], [1, 1]])

    def test_concat_splits_gradient(self):
        a = Tensor(np.ones((2, 2)), requires_grad=True)
        b = Tensor(np.ones((2, 3)), requires_grad=True)
        out = concat([a, b], axis=1)
        backward((out * out).sum())
        assert a.grad.shape == (2, 2)
        assert b.grad.shape == (2, 3)
        assert np.allclose(a.grad, 2.0)


class TestFdCheck:
    def test_linear_is_exact(self):
        c = np.array([1.5, -2.0, 0.5])

        def f(p: Tensor) -> Tensor:
            return (p * Tensor(c)).sum()

        assert fd_check(f, np.array([0.3, 0.7, -1.2])) < 1e-9

    def test_softmax_cross_entropy(self):
        rng = Rng(5)
        labels = np.array([0, 1, 1, 0])

        def f(p: Tensor) -> Tensor:
            logits = p.reshape(4, 2)
            lse = logits.logsumexp(axis=1)
            picked = concat(
                [logits[i : i + 1, labels[i] : labels[i] + 1].reshape(1) for i in range(4)],
                axis=0,
            )
            return (lse.reshape(4) - picked).mean()

        assert fd_check(f, rng.normal(size=8)) < 1e-5

    def test_softmax_rows_sum_to_one(self):
        rng = Rng(9)
        t = Tensor(rng.normal(size=(5, 7)))
        s = t.softmax(axis=-1)
        assert np.allclose(s.value.sum(axis=-1), 1.0, atol=1e-12)


class TestRng:
    def test_same_seed_same_stream(self):
        a = Rng(42).normal(size=1000)
        b = Rng(42).normal(size=1000)
        assert np.array_equal(a, b)

    def test_pinned_values(self):
        # PCG64 stream values frozen at development time; a change here means
        # the platform no longer reproduces stored experiments.
        draws = Rng(20240817).uniform(size=3)
        assert draws == pytest.approx(
            [0.5427709237464297, 0.2529864184077171, 0.2809319884322955], abs=0
        )

    def test_children_are_independent_and_stable(self):
        r = Rng(1)
        c1 = r.child(0).normal(size=4)
        c2 = r.child(1).normal(size=4)
        assert not np.array_equal(c1, c2)
        assert np.array_equal(Rng(1).child(0).normal(size=4), c1)
