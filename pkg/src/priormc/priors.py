"""Prior matrices and the tuning weights of the prior-aware programs."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .linalg import (
    LeverageProfile,
    PrincipalAngleDecomposition,
    as_dense,
    check_orthonormal,
    thin_svd,
)

log = logging.getLogger(__name__)

# Smallest WMC weight; tau = 0 makes Q singular.
WMC_WEIGHT_MIN = 1e-3


class DegeneratePriorError(ValueError):
    pass


@dataclass(frozen=True)
class Prior:
    phi: np.ndarray
    lam: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        object.__setattr__(self, "phi", as_dense(self.phi, "phi"))


@dataclass(frozen=True)
class WmcWeights:
    tau: float
    rho: float
    U_tilde: np.ndarray
    V_tilde: np.ndarray

    def __post_init__(self):
        if not (0 < self.tau <= 1 and 0 < self.rho <= 1):
            raise ValueError(f"WMC weights must lie in (0, 1], got tau={self.tau}, rho={self.rho}")


@dataclass(frozen=True)
class DwmcWeights:
    R_diag: np.ndarray
    C_diag: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.R_diag) <= 0) or np.any(np.asarray(self.C_diag) <= 0):
            raise ValueError("DWMC weights must be strictly positive")


class LambdaChoice(NamedTuple):
    lam: float
    alpha1_sq: float


def noisy_copy_subspaces(X_star, sigma: float, r: int, seed):
    """Rank-r singular subspaces of ``X_star + sigma * Z`` with Gaussian ``Z``."""
    X_star = as_dense(X_star, "X_star")
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal(X_star.shape)
    svd = thin_svd(X_star + sigma * Z, r)
    return svd.U, svd.V


def noisy_copy_prior(X_star, sigma: float, r: int, seed) -> np.ndarray:
    U_hat, V_hat = noisy_copy_subspaces(X_star, sigma, r, seed)
    return U_hat @ V_hat.T


def subspace_prior(U_tilde, V_tilde) -> np.ndarray:
    U_tilde = check_orthonormal(U_tilde, "U_tilde")
    V_tilde = check_orthonormal(V_tilde, "V_tilde")
    if U_tilde.shape[1] != V_tilde.shape[1]:
        raise ValueError("prior bases must have the same number of columns")
    return U_tilde @ V_tilde.T


def alpha1_sq_symmetric(gamma, lam: float) -> float:
    """lam^2 (r - sum sin^4) - 2 lam sum cos^2 + r."""
    gamma = np.asarray(gamma, dtype=float)
    r = gamma.size
    return float(lam**2 * (r - np.sum(np.sin(gamma) ** 4)) - 2 * lam * np.sum(np.cos(gamma) ** 2) + r)


def lambda_star_symmetric(gamma, tol: float = 1e-12) -> LambdaChoice:
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < -1e-12) or np.any(gamma > math.pi / 2 + 1e-12):
        raise ValueError("principal angles must lie in [0, pi/2]")
    r = gamma.size
    num = float(np.sum(np.cos(gamma) ** 2))
    den = float(r - np.sum(np.sin(gamma) ** 4))
    # den >= num, so a vanishing denominator means every angle is pi/2.
    if den <= tol:
        return LambdaChoice(0.0, float(r))
    return LambdaChoice(num / den, r - num**2 / den)


def alpha1_sq_general(decomp: PrincipalAngleDecomposition, lam: float) -> float:
    r = decomp.r
    return float(
        np.linalg.norm(np.eye(r) - lam * decomp.A_cc) ** 2
        + lam**2 * np.linalg.norm(decomp.A_cs) ** 2
        + lam**2 * np.linalg.norm(decomp.A_sc) ** 2
    )


def lambda_star_general(decomp: PrincipalAngleDecomposition, tol: float = 1e-12) -> LambdaChoice:
    """tr(A_cc) / (||A_cc||_F^2 + ||A_cs||_F^2 + ||A_sc||_F^2), unclipped."""
    tr = float(np.trace(decomp.A_cc))
    den = float(
        np.linalg.norm(decomp.A_cc) ** 2
        + np.linalg.norm(decomp.A_cs) ** 2
        + np.linalg.norm(decomp.A_sc) ** 2
    )
    if den <= tol:
        return LambdaChoice(0.0, float(decomp.r))
    lam = tr / den
    if not 0.0 <= lam <= 1.0:
        log.info("optimal lambda %.6g lies outside [0, 1]", lam)
    return LambdaChoice(lam, decomp.r - tr**2 / den)


def wmc_weight(theta_max: float, w_min: float = WMC_WEIGHT_MIN) -> float:
    """w with w^2 = sqrt(tan^4 t + tan^2 t) - tan^2 t, clamped to [w_min, 1]."""
    if not 0 <= theta_max < math.pi / 2:
        raise ValueError(f"largest principal angle must lie in [0, pi/2), got {theta_max}")
    t = math.tan(theta_max) ** 2
    # Same quantity as sqrt(t^2 + t) - t, rewritten to avoid cancellation.
    w2 = 0.0 if t == 0 else 1.0 / (1.0 + math.sqrt(1.0 + 1.0 / t))
    return min(max(math.sqrt(w2), w_min), 1.0)


def dwmc_weights(prior_profile: LeverageProfile) -> DwmcWeights:
    """r_i = sqrt(mu_i r / n + 1/n) and likewise for columns."""
    n, r = prior_profile.n, prior_profile.r
    c0 = 1.0 / n
    return DwmcWeights(
        R_diag=np.sqrt(prior_profile.mu * r / n + c0),
        C_diag=np.sqrt(prior_profile.nu * r / n + c0),
    )
