import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_orthonormal
from oracles import leverage, mu_inf2_brute, mu_inf_brute, principal_angles_sorted, tangent_projection, truncation_residual
from priormc.linalg import (
    DimensionError,
    InvariantError,
    LeverageProfile,
    TangentSpace,
    UndefinedWeightError,
    coherence,
    leverage_scores,
    mu_inf2_norm,
    mu_inf_norm,
    principal_angles,
    project_tangent,
    project_tangent_perp,
    subspace_leverage,
    thin_svd,
)

seeds = st.integers(0, 2**32 - 1)


def hadamard4():
    H = np.array([[1, 1, 1, 1], [1, -1, 1, -1], [1, 1, -1, -1], [1, -1, -1, 1]], float) / 2
    return H[:, :2]


class TestThinSVD:
    def test_identity_ties(self):
        svd = thin_svd(np.eye(4), 2)
        np.testing.assert_allclose(svd.S, [1, 1])
        np.testing.assert_allclose(svd.U.T @ svd.U, np.eye(2), atol=1e-12)

    def test_rank_one(self, rng):
        u = rng.standard_normal(5)
        v = rng.standard_normal(5)
        u /= np.linalg.norm(u)
        v /= np.linalg.norm(v)
        svd = thin_svd(np.outer(u, v), 1)
        assert svd.S[0] == pytest.approx(1.0)
        assert abs(abs(svd.U[:, 0] @ u) - 1) < 1e-12
        assert abs(abs(svd.V[:, 0] @ v) - 1) < 1e-12

    def test_residual_matches_full_svd(self, rng):
        X = rng.standard_normal((8, 8))
        svd = thin_svd(X, 3)
        assert np.linalg.norm(X - svd.matrix()) == pytest.approx(truncation_residual(X, 3), rel=1e-12)

    def test_sign_convention(self, rng):
        svd = thin_svd(rng.standard_normal((6, 6)), 3)
        for k in range(3):
            assert svd.U[np.argmax(np.abs(svd.U[:, k])), k] > 0

    def test_sorted_orthonormal(self, rng):
        svd = thin_svd(rng.standard_normal((7, 7)), 4)
        assert np.all(np.diff(svd.S) <= 0) and np.all(svd.S >= 0)
        np.testing.assert_allclose(svd.V.T @ svd.V, np.eye(4), atol=1e-10)

    def test_rank_too_large(self):
        with pytest.raises(DimensionError):
            thin_svd(np.eye(3), 4)

    def test_nonfinite(self):
        X = np.eye(3)
        X[0, 0] = np.nan
        with pytest.raises(InvariantError):
            thin_svd(X, 1)


class TestTangent:
    def test_fixed_on_T(self, rng):
        U, V = random_orthonormal(rng, 6, 2), random_orthonormal(rng, 6, 2)
        T = TangentSpace(U, V)
        X = U @ rng.standard_normal((2, 2)) @ V.T
        np.testing.assert_allclose(project_tangent(T, X), X, atol=1e-12)
        np.testing.assert_allclose(project_tangent_perp(T, X), 0, atol=1e-12)

    def test_complement_killed(self, rng):
        U, V = random_orthonormal(rng, 6, 2), random_orthonormal(rng, 6, 2)
        T = TangentSpace(U, V)
        W = (np.eye(6) - U @ U.T) @ rng.standard_normal((6, 6)) @ (np.eye(6) - V @ V.T)
        np.testing.assert_allclose(project_tangent(T, W), 0, atol=1e-12)
        np.testing.assert_allclose(project_tangent_perp(T, W), W, atol=1e-12)

    def test_matches_oracle(self, rng):
        U, V = random_orthonormal(rng, 7, 3), random_orthonormal(rng, 7, 3)
        X = rng.standard_normal((7, 7))
        np.testing.assert_allclose(project_tangent(TangentSpace(U, V), X), tangent_projection(U, V, X), atol=1e-12)

    def test_shape_mismatch(self, rng):
        T = TangentSpace(random_orthonormal(rng, 6, 2), random_orthonormal(rng, 6, 2))
        with pytest.raises(DimensionError):
            project_tangent(T, np.zeros((5, 6)))

    @given(seeds, st.integers(1, 4))
    def test_idempotent_and_pythagoras(self, seed, r):
        rng = np.random.default_rng(seed)
        U, V = random_orthonormal(rng, 6, r), random_orthonormal(rng, 6, r)
        T = TangentSpace(U, V)
        X = rng.standard_normal((6, 6))
        P = project_tangent(T, X)
        Q = project_tangent_perp(T, X)
        assert np.linalg.norm(project_tangent(T, P) - P) <= 1e-10 * np.linalg.norm(X)
        assert abs(np.sum(P * Q)) <= 1e-10 * np.linalg.norm(X) ** 2
        assert np.linalg.norm(P) ** 2 + np.linalg.norm(Q) ** 2 == pytest.approx(np.linalg.norm(X) ** 2, rel=1e-8)


class TestLeverage:
    def test_flat(self):
        H = hadamard4()
        svd = thin_svd(H @ H.T, 2)
        prof = leverage_scores(svd)
        np.testing.assert_allclose(prof.mu, 1.0)
        assert coherence(prof) == pytest.approx(1.0)

    def test_spiky(self):
        U = np.eye(8)[:, :2]
        mu = subspace_leverage(U)
        np.testing.assert_allclose(mu, [4, 4, 0, 0, 0, 0, 0, 0])
        assert coherence(LeverageProfile(mu, mu, 2, 8)) == 4

    def test_matches_loop_oracle(self, rng):
        U = random_orthonormal(rng, 16, 4)
        np.testing.assert_allclose(subspace_leverage(U), leverage(U), atol=1e-12)
        assert subspace_leverage(U).sum() == pytest.approx(16, abs=1e-8)

    @given(seeds, st.integers(2, 20), st.data())
    def test_bounds(self, seed, n, data):
        r = data.draw(st.integers(1, n))
        rng = np.random.default_rng(seed)
        svd = thin_svd(rng.standard_normal((n, n)), r)
        prof = leverage_scores(svd)
        assert prof.mu.sum() == pytest.approx(n, abs=1e-8)
        assert prof.nu.sum() == pytest.approx(n, abs=1e-8)
        assert np.all(prof.mu >= -1e-12) and np.all(prof.mu <= n / r + 1e-9)
        eta = coherence(prof)
        assert 1 - 1e-9 <= eta <= n / r + 1e-9
        assert eta == max(prof.mu.max(), prof.nu.max())


class TestWeightedNorms:
    def test_flat_scores(self):
        H = hadamard4()
        X = H @ H.T
        prof = LeverageProfile(np.ones(4), np.ones(4), 2, 4)
        assert mu_inf_norm(X, prof) == pytest.approx(2 * np.abs(X).max())

    def test_zero(self):
        prof = LeverageProfile(np.ones(4), np.ones(4), 2, 4)
        assert mu_inf_norm(np.zeros((4, 4)), prof) == 0
        assert mu_inf2_norm(np.zeros((4, 4)), prof) == 0

    def test_mu_inf2_of_UVt_is_one(self, rng):
        svd = thin_svd(rng.standard_normal((10, 10)), 3)
        assert mu_inf2_norm(svd.U @ svd.V.T, leverage_scores(svd)) == pytest.approx(1.0, abs=1e-12)

    def test_brute_force(self, rng):
        svd = thin_svd(rng.standard_normal((8, 8)), 2)
        prof = leverage_scores(svd)
        X = svd.U @ rng.standard_normal((2, 2)) @ svd.V.T
        assert mu_inf_norm(X, prof) == pytest.approx(mu_inf_brute(X, prof.mu, prof.nu, 2), rel=1e-12)
        assert mu_inf2_norm(X, prof) == pytest.approx(mu_inf2_brute(X, prof.mu, prof.nu, 2), rel=1e-12)

    def test_zero_score_rules(self):
        U = np.eye(4)[:, :1]
        prof = LeverageProfile(subspace_leverage(U), subspace_leverage(U), 1, 4)
        X = np.zeros((4, 4))
        X[0, 0] = 1.0
        assert mu_inf_norm(X, prof) == pytest.approx(1.0)
        X[1, 0] = 1.0
        with pytest.raises(UndefinedWeightError):
            mu_inf_norm(X, prof)
        with pytest.raises(UndefinedWeightError):
            mu_inf2_norm(X, prof)

    @given(seeds, st.floats(-5, 5))
    def test_homogeneous(self, seed, c):
        rng = np.random.default_rng(seed)
        svd = thin_svd(rng.standard_normal((6, 6)), 2)
        prof = leverage_scores(svd)
        X = svd.U @ rng.standard_normal((2, 2)) @ svd.V.T
        for f in (mu_inf_norm, mu_inf2_norm):
            assert f(c * X, prof) == pytest.approx(abs(c) * f(X, prof), rel=1e-9, abs=1e-12)


class TestPrincipalAngles:
    def test_identical(self, rng):
        U = random_orthonormal(rng, 8, 3)
        d = principal_angles(U, U)
        np.testing.assert_allclose(d.gamma, 0, atol=1e-7)
        np.testing.assert_allclose(d.A_cc, np.eye(3), atol=1e-12)

    def test_orthogonal(self):
        I = np.eye(8)
        d = principal_angles(I[:, :2], I[:, 2:4])
        np.testing.assert_allclose(d.gamma, math.pi / 2)

    def test_planar_rotation(self):
        theta = 0.3
        I = np.eye(8)
        U = I[:, :2]
        Ut = np.column_stack([math.cos(theta) * I[:, 0] + math.sin(theta) * I[:, 5], I[:, 1]])
        d = principal_angles(U, Ut)
        np.testing.assert_allclose(d.gamma, [theta, 0.0], atol=1e-7)

    def test_non_orthonormal(self):
        with pytest.raises(InvariantError):
            principal_angles(np.ones((4, 1)), np.eye(4)[:, :1])

    @given(seeds, st.integers(1, 4))
    def test_cosines_and_contractions(self, seed, r):
        rng = np.random.default_rng(seed)
        U, Ut = random_orthonormal(rng, 10, r), random_orthonormal(rng, 10, r)
        V, Vt = random_orthonormal(rng, 10, r), random_orthonormal(rng, 10, r)
        d = principal_angles(U, Ut, V, Vt)
        sv = np.linalg.svd(U.T @ Ut, compute_uv=False)
        np.testing.assert_allclose(np.sort(np.cos(d.gamma)), np.sort(np.clip(sv, 0, 1)), atol=1e-10)
        np.testing.assert_allclose(d.gamma, principal_angles_sorted(U, Ut), atol=1e-7)
        assert np.all(np.diff(d.gamma) <= 1e-15) and np.all(np.diff(d.eta) <= 1e-15)
        for A in (d.A_cc, d.A_cs, d.A_sc, d.A_ss):
            assert np.linalg.norm(A, 2) <= 1 + 1e-10
        # Rotation factors reproduce the SVD they came from.
        np.testing.assert_allclose(d.L_left @ np.diag(np.cos(d.gamma)) @ d.R_left.T, U.T @ Ut, atol=1e-10)
