import numpy as np
import pytest

from satgraph.linalg import (Rng, glorot_uniform, leaky_relu, leaky_relu_grad,
                             matmul, softmax_row)


class TestMatmul:
    def test_identity(self, rng):
        A = rng.uniform(-5, 5, (4, 4))
        assert np.array_equal(matmul(A, np.eye(4)), A)

    def test_zero(self, rng):
        A = rng.uniform(-5, 5, (3, 5))
        assert np.array_equal(matmul(A, np.zeros((5, 2))), np.zeros((3, 2)))

    def test_hand_product(self):
        out = matmul([[1, 2], [3, 4]], [[5], [6]])
        assert np.array_equal(out, [[17], [39]])

    def test_mismatch_reports_both_shapes(self):
        with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 2\)"):
            matmul(np.zeros((2, 3)), np.zeros((2, 2)))

    def test_associativity(self, rng):
        for _ in range(20):
            A = rng.uniform(-1, 1, (4, 5))
            B = rng.uniform(-1, 1, (5, 3))
            C = rng.uniform(-1, 1, (3, 6))
            left = matmul(matmul(A, B), C)
            right = matmul(A, matmul(B, C))
            assert np.abs(left - right).max() < 1e-9


class TestLeakyRelu:
    def test_nonnegative_passthrough(self):
        assert leaky_relu(np.array([3.0]), 0.2)[0] == 3.0

    def test_negative_scaled(self):
        assert leaky_relu(np.array([-1.0]), 0.2)[0] == pytest.approx(-0.2)

    def test_derivative_at_negative(self):
        assert leaky_relu_grad(np.array([-1.0]), 0.2)[0] == 0.2

    def test_slope_zero_is_relu(self, rng):
        x = rng.uniform(-2, 2, (5, 5))
        assert np.array_equal(leaky_relu(x, 0.0), np.maximum(x, 0.0))

    def test_slope_one_is_identity(self, rng):
        x = rng.uniform(-2, 2, (5, 5))
        assert np.array_equal(leaky_relu(x, 1.0), x)

    def test_slope_domain(self):
        with pytest.raises(ValueError):
            leaky_relu(np.zeros(2), -0.1)
        with pytest.raises(ValueError):
            leaky_relu(np.zeros(2), 1.5)


class TestSoftmaxRow:
    def test_symmetry(self):
        assert np.array_equal(softmax_row([0.0, 0.0]), [0.5, 0.5])

    def test_shift_invariance(self, rng):
        x = rng.uniform(-3, 3, 7)
        base = softmax_row(x)
        for c in (-100.0, 1.0, 250.0):
            assert np.abs(softmax_row(x + c) - base).max() < 1e-12

    def test_forced_quarters(self):
        out = softmax_row([np.log(1.0), np.log(3.0)])
        assert out == pytest.approx([0.25, 0.75], abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            softmax_row([])

    def test_sums_to_one_large_magnitudes(self, rng):
        # includes logits out at +-1e3, where the naive form overflows;
        # at such spreads the small entries legitimately underflow to 0
        for _ in range(1000):
            scale = 10.0 ** rng.uniform(-2, 3)
            x = rng.uniform(-scale, scale, int(rng.integers(1, 12)))
            out = softmax_row(x)
            assert np.isfinite(out).all()
            assert abs(out.sum() - 1.0) < 1e-12
            assert (out >= 0).all() and (out <= 1).all()
            if scale < 100:
                assert (out > 0).all()


class TestGlorot:
    def test_bound(self):
        W = glorot_uniform(30, 50, Rng(3, 0))
        assert np.abs(W).max() <= np.sqrt(6.0 / 80.0)

    def test_same_seed_identical(self):
        a = glorot_uniform(7, 9, Rng(99, 4))
        b = glorot_uniform(7, 9, Rng(99, 4))
        assert np.array_equal(a, b)

    def test_sample_mean_near_zero(self):
        W = glorot_uniform(100, 100, Rng(12, 0))
        # 3 sigma of the mean of 10k uniforms on +-sqrt(6/200)
        assert abs(W.mean()) < 0.02

    def test_positive_dims_required(self):
        with pytest.raises(ValueError):
            glorot_uniform(0, 3, Rng(1, 0))


class TestRng:
    def test_streams_differ(self):
        a = Rng(5, 0).random(8)
        b = Rng(5, 1).random(8)
        assert not np.array_equal(a, b)

    def test_split_matches_direct_construction(self):
        assert np.array_equal(Rng(5, 0).split(3).random(8), Rng(5, 3).random(8))

    def test_draw_sequence_reproducible(self):
        r1 = Rng(123, 7)
        seq1 = [r1.integers(0, 1000) for _ in range(20)]
        r2 = Rng(123, 7)
        seq2 = [r2.integers(0, 1000) for _ in range(20)]
        assert seq1 == seq2
