"""Factorization correctness: divergence identities, monotone updates,
fixed points, and projection optimality against an active-set oracle."""

import itertools
import math

import numpy as np
import pytest

from pnmf import nnmf
from pnmf.errors import DegenerateInput, ShapeError, ZeroVector


def nnls_active_set_oracle(W, v):
    """Exhaustive NNLS: try every support set, solve the restricted
    least-squares system, keep the best feasible objective."""
    R = W.shape[1]
    best = float(v @ v)  # h = 0
    for size in range(1, R + 1):
        for support in itertools.combinations(range(R), size):
            Ws = W[:, support]
            h_s, *_ = np.linalg.lstsq(Ws, v, rcond=None)
            if (h_s < 0).any():
                continue
            r = v - Ws @ h_s
            best = min(best, float(r @ r))
    return best


class TestKLDivergence:
    def test_exact_factorization_is_zero(self):
        rng = np.random.default_rng(0)
        W = 0.1 + rng.random((6, 3))
        H = 0.1 + rng.random((3, 8))
        assert nnmf.kl_divergence(W @ H, W, H) == pytest.approx(0.0, abs=1e-9)

    def test_scalar_value(self):
        # V=2, WH=1: 2*ln2 - 2 + 1
        val = nnmf.kl_divergence([[2.0]], [[1.0]], [[1.0]])
        assert val == pytest.approx(2.0 * math.log(2.0) - 1.0, rel=1e-12)
        assert val == pytest.approx(0.3863, abs=1e-4)

    @pytest.mark.parametrize("seed", range(8))
    def test_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        V = rng.random((5, 7))
        W = rng.random((5, 2))
        H = rng.random((2, 7))
        assert nnmf.kl_divergence(V, W, H) >= 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            nnmf.kl_divergence(np.ones((2, 2)), np.ones((2, 3)), np.ones((2, 2)))


class TestFit:
    def test_fixed_point_of_exact_factorization(self):
        rng = np.random.default_rng(1)
        W0 = 0.2 + rng.random((10, 3))
        H0 = 0.2 + rng.random((3, 12))
        V = np.ascontiguousarray(W0 @ H0)
        from pnmf import _kernels

        W1, H1 = _kernels.kl_update(V, np.ascontiguousarray(W0), np.ascontiguousarray(H0), 1e-9)
        np.testing.assert_allclose(W1, W0, rtol=1e-6)
        np.testing.assert_allclose(H1, H0, rtol=1e-6)

    @pytest.mark.parametrize("seed", range(3))
    def test_objective_monotone(self, seed):
        rng = np.random.default_rng(seed)
        V = rng.random((20, 30))
        model = nnmf.fit(V, rank=4, iters=200, seed=seed, tol=0.0)
        log = np.asarray(model.iter_log)
        assert len(log) == 200
        assert (log[1:] <= log[:-1] * (1 + 1e-6) + 1e-12).all()

    def test_exactly_factorable_reaches_near_zero(self):
        rng = np.random.default_rng(5)
        W0 = 0.2 + rng.random((8, 2))
        H0 = 0.2 + rng.random((2, 9))
        V = W0 @ H0
        model = nnmf.fit(V, rank=2, iters=3000, seed=0, tol=0.0)
        assert model.iter_log[-1] <= 1e-3

    def test_nonnegative_outputs(self):
        rng = np.random.default_rng(9)
        model = nnmf.fit(rng.random((12, 10)), rank=3, iters=50, seed=3)
        assert (model.W >= 0).all()
        assert (model.H_train >= 0).all()

    def test_all_zero_rejected(self):
        with pytest.raises(DegenerateInput):
            nnmf.fit(np.zeros((4, 4)), rank=2, iters=10, seed=0)

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        V = rng.random((15, 11))
        m1 = nnmf.fit(V, rank=3, iters=40, seed=7)
        m2 = nnmf.fit(V, rank=3, iters=40, seed=7)
        np.testing.assert_array_equal(m1.W, m2.W)
        np.testing.assert_array_equal(m1.H_train, m2.H_train)


class TestProject:
    def test_recovers_exactly_representable(self):
        rng = np.random.default_rng(3)
        W = 0.1 + rng.random((20, 4))
        h_true = 0.1 + rng.random(4)
        v = W @ h_true
        h = nnmf.project(W, v)
        np.testing.assert_allclose(h, h_true, rtol=1e-4)

    def test_zero_input_gives_zero(self):
        rng = np.random.default_rng(4)
        W = 0.1 + rng.random((10, 3))
        h = nnmf.project(W, np.zeros(10))
        np.testing.assert_array_equal(h, np.zeros(3))

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_active_set_oracle(self, seed):
        rng = np.random.default_rng(seed)
        W = rng.random((10, 3))
        v = rng.random(10) * 2 - 0.5  # not necessarily representable
        v = np.abs(v)
        h = nnmf.project(W, v)
        assert (h >= 0).all()
        obj = float(np.sum((v - W @ h) ** 2))
        oracle = nnls_active_set_oracle(W, v)
        assert obj <= oracle + 1e-6

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            nnmf.project(np.ones((5, 2)), np.ones(4))


class TestL2Normalize:
    def test_three_four_five(self):
        out = nnmf.l2_normalize(np.array([[3.0], [4.0]]))
        np.testing.assert_allclose(out[:, 0], [0.6, 0.8], rtol=1e-12)

    def test_idempotent(self):
        x = nnmf.l2_normalize(np.random.default_rng(0).random((5, 4)) + 0.1)
        np.testing.assert_allclose(nnmf.l2_normalize(x), x, rtol=1e-12)

    def test_unit_norms(self):
        x = np.random.default_rng(1).random((6, 9)) + 0.01
        norms = np.linalg.norm(nnmf.l2_normalize(x), axis=0)
        np.testing.assert_allclose(norms, 1.0, atol=1e-6)

    def test_zero_column_named(self):
        x = np.ones((3, 4))
        x[:, 2] = 0.0
        with pytest.raises(ZeroVector, match="column 2"):
            nnmf.l2_normalize(x)
