"""Dense linear-algebra building blocks.

Thin SVDs with a deterministic sign convention, tangent-space projections
of a rank-r matrix, leverage scores, the leverage-weighted max norms, and
principal angles between r-dimensional subspaces.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

# Defaults for the module's checks; callers may pass their own.
ATOL = 1e-10
RTOL = 1e-8


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class InvariantError(ValueError):
    """An input violates a structural invariant (orthonormality, finiteness)."""


class UndefinedWeightError(ValueError):
    """A weighted norm needs 1/mu_i for a zero leverage score."""


def as_dense(X, name: str = "X") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvariantError(f"{name} has non-finite entries")
    return X


def check_orthonormal(U, name: str = "U", atol: float = ATOL) -> np.ndarray:
    U = as_dense(U, name)
    r = U.shape[1]
    if r > U.shape[0]:
        raise DimensionError(f"{name} has more columns than rows: {U.shape}")
    err = np.abs(U.T @ U - np.eye(r)).max(initial=0.0)
    # Orthonormal bases built from SVD/QR of n~100 matrices sit near 1e-14.
    if err > max(atol, 100 * U.shape[0] * np.finfo(float).eps):
        raise InvariantError(f"{name} is not column-orthonormal (max deviation {err:.2e})")
    return U


def _fix_signs(U: np.ndarray, V: np.ndarray):
    """Flip singular pairs so the largest-|.| entry of each left vector is positive."""
    if U.shape[1] == 0:
        return U, V
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, V * signs


@dataclass(frozen=True)
class ThinSVD:
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    @property
    def rank(self) -> int:
        return self.S.shape[0]

    @property
    def n(self) -> int:
        return self.U.shape[0]

    def matrix(self) -> np.ndarray:
        return (self.U * self.S) @ self.V.T

    def tangent(self) -> "TangentSpace":
        return TangentSpace(self.U, self.V)


def thin_svd(X, r: int) -> ThinSVD:
    """Best rank-``r`` factors of ``X`` with reproducible signs.

    Singular vectors are normalised so that the largest-magnitude entry of
    each left singular vector is positive.
    """
    X = as_dense(X)
    if not 1 <= r <= min(X.shape):
        raise DimensionError(f"rank {r} out of range for a {X.shape} matrix")
    U, S, Vt = np.linalg.svd(X, full_matrices=False)
    U, V = _fix_signs(U[:, :r], Vt[:r].T)
    return ThinSVD(U, S[:r].copy(), V)


@dataclass(frozen=True)
class TangentSpace:
    """Tangent space {U A^T + B V^T} of a rank-r matrix with factors U, V."""

    U: np.ndarray
    V: np.ndarray

    def _check(self, X) -> np.ndarray:
        X = as_dense(X)
        if X.shape != (self.U.shape[0], self.V.shape[0]):
            raise DimensionError(
                f"matrix of shape {X.shape} does not match tangent space "
                f"({self.U.shape[0]}, {self.V.shape[0]})"
            )
        return X


def project_tangent(T: TangentSpace, X) -> np.ndarray:
    X = T._check(X)
    UtX = T.U.T @ X
    XV = X @ T.V
    return T.U @ UtX + XV @ T.V.T - T.U @ (UtX @ T.V) @ T.V.T


def project_tangent_perp(T: TangentSpace, X) -> np.ndarray:
    X = T._check(X)
    return X - project_tangent(T, X)


@dataclass(frozen=True)
class LeverageProfile:
    mu: np.ndarray
    nu: np.ndarray
    r: int
    n: int


def subspace_leverage(U) -> np.ndarray:
    """(n/r) ||U^T e_i||^2 for an n x r orthonormal basis."""
    U = np.asarray(U, dtype=float)
    n, r = U.shape
    return (n / r) * np.sum(U * U, axis=1)


def leverage_scores(svd: ThinSVD) -> LeverageProfile:
    return LeverageProfile(
        mu=subspace_leverage(svd.U),
        nu=subspace_leverage(svd.V),
        r=svd.rank,
        n=svd.n,
    )


def coherence(profile: LeverageProfile) -> float:
    return float(max(profile.mu.max(), profile.nu.max()))


def _inverse_root_weights(scores: np.ndarray, r: int, n: int, support: np.ndarray, side: str):
    """sqrt(n / (score * r)), with 0 where the score is 0 and the data row is empty."""
    scores = np.asarray(scores, dtype=float)
    zero = scores <= 0
    if np.any(zero & support):
        bad = np.flatnonzero(zero & support)[:5]
        raise UndefinedWeightError(f"zero {side} leverage score at nonzero {side}s {bad.tolist()}")
    w = np.zeros_like(scores)
    w[~zero] = np.sqrt(n / (scores[~zero] * r))
    return w


def mu_inf_norm(X, profile: LeverageProfile) -> float:
    """Leverage-weighted largest entry: max_ij sqrt(n/(mu_i r)) |X_ij| sqrt(n/(nu_j r))."""
    X = as_dense(X)
    nz = X != 0
    wr = _inverse_root_weights(profile.mu, profile.r, profile.n, nz.any(axis=1), "row")
    wc = _inverse_root_weights(profile.nu, profile.r, profile.n, nz.any(axis=0), "column")
    if X.size == 0:
        return 0.0
    return float(np.max(np.abs(X) * wr[:, None] * wc[None, :]))


def mu_inf2_norm(X, profile: LeverageProfile) -> float:
    """Leverage-weighted largest row or column l2 norm."""
    X = as_dense(X)
    row_norms = np.linalg.norm(X, axis=1)
    col_norms = np.linalg.norm(X, axis=0)
    wr = _inverse_root_weights(profile.mu, profile.r, profile.n, row_norms > 0, "row")
    wc = _inverse_root_weights(profile.nu, profile.r, profile.n, col_norms > 0, "column")
    return float(max(np.max(wr * row_norms, initial=0.0), np.max(wc * col_norms, initial=0.0)))


def operator_norm(X) -> float:
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return 0.0
    return float(np.linalg.norm(X, 2))


def nuclear_norm(X) -> float:
    return float(np.sum(np.linalg.svd(np.asarray(X, dtype=float), compute_uv=False)))


def _angle_factors(U: np.ndarray, Ut: np.ndarray):
    # SVD of U^T Ut reordered so the angles come out nonincreasing.
    L, c, Rt = np.linalg.svd(U.T @ Ut)
    L, c, R = L[:, ::-1], c[::-1], Rt[::-1].T
    c = np.clip(c, 0.0, 1.0)
    return L, np.arccos(c), R


@dataclass(frozen=True)
class PrincipalAngleDecomposition:
    """Canonical angles and alignment rotations between true and prior subspaces.

    ``gamma`` are the column-side angles, ``eta`` the row-side angles, both
    nonincreasing.  The four r x r blocks are

        A_cc = L_L cos(G) R_L^T R_R cos(H) L_R^T
        A_cs = L_L cos(G) R_L^T R_R sin(H) L_R^T
        A_sc = L_L sin(G) R_L^T R_R cos(H) L_R^T
        A_ss = L_L sin(G) R_L^T R_R sin(H) L_R^T
    """

    gamma: np.ndarray
    eta: np.ndarray
    L_left: np.ndarray
    R_left: np.ndarray
    L_right: np.ndarray
    R_right: np.ndarray
    A_cc: np.ndarray
    A_cs: np.ndarray
    A_sc: np.ndarray
    A_ss: np.ndarray
    symmetric: bool = False

    @property
    def r(self) -> int:
        return self.gamma.shape[0]

    @property
    def max_angle(self) -> float:
        return float(max(self.gamma.max(initial=0.0), self.eta.max(initial=0.0)))


def principal_angles(
    U,
    U_tilde,
    V: Optional[np.ndarray] = None,
    V_tilde: Optional[np.ndarray] = None,
    atol: float = ATOL,
) -> PrincipalAngleDecomposition:
    """Principal angles between span(U) and span(U_tilde) (and the row side).

    Without ``V``/``V_tilde`` the symmetric setting V = U, V_tilde = U_tilde
    is assumed, so ``eta == gamma`` and the A-blocks reduce accordingly.
    """
    U = check_orthonormal(U, "U", atol)
    U_tilde = check_orthonormal(U_tilde, "U_tilde", atol)
    if U.shape != U_tilde.shape:
        raise DimensionError(f"U {U.shape} and U_tilde {U_tilde.shape} differ in shape")
    symmetric = V is None and V_tilde is None
    if symmetric:
        V, V_tilde = U, U_tilde
    elif V is None or V_tilde is None:
        raise ValueError("row-side bases must be given together")
    else:
        V = check_orthonormal(V, "V", atol)
        V_tilde = check_orthonormal(V_tilde, "V_tilde", atol)
        if V.shape != V_tilde.shape or V.shape[1] != U.shape[1]:
            raise DimensionError("row-side bases must be n x r with the same r as the column side")

    LL, gamma, RL = _angle_factors(U, U_tilde)
    if symmetric:
        LR, eta, RR = LL, gamma, RL
    else:
        LR, eta, RR = _angle_factors(V, V_tilde)

    mid = RL.T @ RR
    cg, sg = np.cos(gamma), np.sin(gamma)
    ch, sh = np.cos(eta), np.sin(eta)

    def block(left, right):
        return (LL * left) @ mid @ (LR * right).T

    return PrincipalAngleDecomposition(
        gamma=gamma,
        eta=eta,
        L_left=LL,
        R_left=RL,
        L_right=LR,
        R_right=RR,
        A_cc=block(cg, ch),
        A_cs=block(cg, sh),
        A_sc=block(sg, ch),
        A_ss=block(sg, sh),
        symmetric=symmetric,
    )


def orthonormal_basis(A, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis for the column span of ``A`` (numerical rank via SVD)."""
    A = as_dense(A, "A")
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    if s.size == 0:
        return U[:, :0]
    k = int(np.sum(s > tol * max(s[0], 1.0)))
    return U[:, :k]
