"""Augmented-Lagrangian solvers for nuclear-norm completion programs.

Every program here has the form

    minimize  ||Z||_* - lam <Phi, Z>   subject to  Z in C

for an affine set (or ball) ``C`` that is cheap to project onto.  We split
``Z = X`` with ``X in C`` and run inexact ALM:

    Z   <- svt(X + Lam/rho + (lam/rho) Phi, 1/rho)
    X   <- proj_C(Z - Lam/rho)
    Lam <- Lam + rho (X - Z)

With ``C = {X : X_ij = M_ij on the mask}`` this is the classical inexact
ALM for matrix completion.  Weighted variants are solved in a transformed
variable whose constraint set is still affine.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq
from scipy.sparse.linalg import LinearOperator, cg

from .linalg import DimensionError, as_dense, nuclear_norm, operator_norm
from .priors import DegeneratePriorError, DwmcWeights, Prior, WmcWeights
from .sampling import Mask, SamplingPlan

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    """ALM stopping rule and penalty schedule.

    The penalty ``rho`` is rebalanced every iteration: multiplied by
    ``rho_factor`` when the primal residual exceeds ``balance`` times the
    dual residual, divided by it in the opposite case.  After
    ``max_rho_updates`` changes rho is frozen; unbounded rebalancing can
    cycle instead of converging.  Iteration stops when both residuals,
    relative to the data norm, fall below ``tol``.  ``rho0=None`` picks
    ``1 / ||P_Omega(M)||_2``.
    """

    rho0: Optional[float] = None
    tol: float = 1e-7
    max_iters: int = 5000
    balance: float = 10.0
    rho_factor: float = 2.0
    max_rho_updates: int = 50

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rho0 is not None and self.rho0 <= 0:
            raise ValueError("rho0 must be positive")
        if self.balance <= 1 or self.rho_factor <= 1:
            raise ValueError("balance and rho_factor must exceed 1")
        if self.max_rho_updates < 0:
            raise ValueError("max_rho_updates must be nonnegative")


@dataclass
class Solution:
    X_hat: np.ndarray
    iters: int
    final_feasibility: float
    converged: bool


def svt(X, tau: float) -> np.ndarray:
    """Singular value soft-thresholding U max(S - tau, 0) V^T."""
    if tau < 0:
        raise ValueError("threshold must be nonnegative")
    X = np.asarray(X, dtype=float)
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    k = int(np.count_nonzero(s))
    return (U[:, :k] * s[:k]) @ Vt[:k]


def corr_objective(X, phi=None, lam: float = 0.0) -> float:
    """||X||_* - lam <Phi, X>."""
    val = nuclear_norm(X)
    if phi is not None and lam:
        val -= lam * float(np.sum(phi * X))
    return val


def _check_inputs(mask: Mask, observed) -> np.ndarray:
    observed = as_dense(np.where(mask.delta, observed, 0.0), "observed")
    if observed.shape != mask.delta.shape:
        raise DimensionError(f"observed {observed.shape} vs mask {mask.delta.shape}")
    return observed


def _alm(
    X0: np.ndarray,
    project: Callable[[np.ndarray], np.ndarray],
    feasibility: Callable[[np.ndarray], float],
    cfg: SolverConfig,
    shift: Optional[np.ndarray] = None,
    rho0: float = 1.0,
    scale: float = 1.0,
):
    X = X0.copy()
    Lam = np.zeros_like(X)
    rho = cfg.rho0 if cfg.rho0 is not None else rho0
    Z = X
    updates = 0
    for it in range(1, cfg.max_iters + 1):
        Z_prev = Z
        A = X + Lam / rho
        if shift is not None:
            A = A + shift / rho
        Z = svt(A, 1.0 / rho)
        X = project(Z - Lam / rho)
        Lam = Lam + rho * (X - Z)
        r_primal = np.linalg.norm(X - Z) / scale
        r_dual = rho * np.linalg.norm(Z - Z_prev) / scale
        if r_primal <= cfg.tol and r_dual <= cfg.tol:
            return Z, it, feasibility(Z), True
        if updates < cfg.max_rho_updates:
            if r_primal > cfg.balance * r_dual:
                rho *= cfg.rho_factor
                updates += 1
            elif r_dual > cfg.balance * r_primal:
                rho /= cfg.rho_factor
                updates += 1
    return Z, cfg.max_iters, feasibility(Z), False


def _default_rho0(M: np.ndarray) -> float:
    s = operator_norm(M)
    return 1.0 / s if s > 0 else 1.0


def _empty_mask_solution(n_shape, phi, lam) -> Solution:
    # With no constraints the objective is bounded below only if lam ||Phi|| <= 1,
    # and then 0 is a minimiser.
    if phi is not None and lam * operator_norm(phi) > 1:
        raise DegeneratePriorError("no observations and lam * ||Phi|| > 1: objective is unbounded")
    return Solution(np.zeros(n_shape), 0, 0.0, True)


def _mask_program(mask: Mask, M: np.ndarray, cfg: SolverConfig, shift=None) -> Solution:
    delta = mask.delta
    scale = np.linalg.norm(M)
    scale = scale if scale > 0 else 1.0

    def project(V):
        return np.where(delta, M, V)

    def feasibility(Z):
        return float(np.linalg.norm(np.where(delta, Z - M, 0.0)) / scale)

    Z, it, feas, ok = _alm(M, project, feasibility, cfg, shift=shift, rho0=_default_rho0(M), scale=scale)
    if not ok:
        log.debug("ALM stopped at max_iters=%d with feasibility %.2e", it, feas)
    return Solution(Z, it, feas, ok)


def solve_mc(mask: Mask, observed, cfg: SolverConfig = SolverConfig()) -> Solution:
    """min ||X||_* subject to agreement with ``observed`` on the mask."""
    M = _check_inputs(mask, observed)
    if mask.count == 0:
        return _empty_mask_solution(M.shape, None, 0.0)
    return _mask_program(mask, M, cfg)


def solve_corr_mc(mask: Mask, observed, prior: Prior, cfg: SolverConfig = SolverConfig()) -> Solution:
    """min ||X||_* - lam <Phi, X> subject to agreement on the mask."""
    M = _check_inputs(mask, observed)
    if prior.phi.shape != M.shape:
        raise DimensionError(f"prior {prior.phi.shape} vs data {M.shape}")
    if mask.count == 0:
        return _empty_mask_solution(M.shape, prior.phi, prior.lam)
    shift = prior.lam * prior.phi if prior.lam else None
    return _mask_program(mask, M, cfg, shift=shift)


def solve_dwmc(mask: Mask, observed, weights: DwmcWeights, cfg: SolverConfig = SolverConfig()) -> Solution:
    """min ||R X C||_* on the mask, via the substitution X' = R X C."""
    M = _check_inputs(mask, observed)
    rw = np.asarray(weights.R_diag, dtype=float)
    cw = np.asarray(weights.C_diag, dtype=float)
    if rw.shape != (M.shape[0],) or cw.shape != (M.shape[1],):
        raise DimensionError("DWMC weight vectors do not match the data shape")
    if mask.count == 0:
        return _empty_mask_solution(M.shape, None, 0.0)
    sol = _mask_program(mask, rw[:, None] * M * cw[None, :], cfg)
    X_hat = sol.X_hat / rw[:, None] / cw[None, :]
    scale = np.linalg.norm(M) or 1.0
    feas = float(np.linalg.norm(np.where(mask.delta, X_hat - M, 0.0)) / scale)
    return Solution(X_hat, sol.iters, feas, sol.converged)


class _ProjectionWeight:
    """Q = w P_B + P_B^perp for an orthonormal basis B, applied without forming Q."""

    def __init__(self, B: np.ndarray, w: float):
        self.B = B
        self.w = w

    def apply_left(self, X, power: float = 1.0):
        # Q^power X = X + (w^power - 1) B B^T X
        c = self.w**power - 1.0
        return X if c == 0 else X + c * (self.B @ (self.B.T @ X))

    def apply_right(self, X, power: float = 1.0):
        c = self.w**power - 1.0
        return X if c == 0 else X + c * ((X @ self.B) @ self.B.T)


def solve_wmc(mask: Mask, observed, w: WmcWeights, cfg: SolverConfig = SolverConfig(), cg_tol: float = 1e-12) -> Solution:
    """min ||Q_U X Q_V||_* subject to agreement on the mask.

    Solved in X' = Q_U X Q_V, where the constraint set
    ``{X' : P_Omega(Q_U^-1 X' Q_V^-1) = P_Omega(M)}`` is affine; its
    projection needs one SPD solve on the observed entries, done by
    warm-started conjugate gradients.
    """
    M = _check_inputs(mask, observed)
    Ut = np.asarray(w.U_tilde, dtype=float)
    Vt = np.asarray(w.V_tilde, dtype=float)
    if Ut.shape[0] != M.shape[0] or Vt.shape[0] != M.shape[1]:
        raise DimensionError("WMC prior bases do not match the data shape")
    if mask.count == 0:
        return _empty_mask_solution(M.shape, None, 0.0)
    QU = _ProjectionWeight(Ut, w.tau)
    QV = _ProjectionWeight(Vt, w.rho)
    delta = mask.delta
    idx = np.nonzero(delta)
    b = M[idx]

    def to_orig(Xp):
        return QV.apply_right(QU.apply_left(Xp, -1.0), -1.0)

    def gram(y):
        Y = np.zeros(M.shape)
        Y[idx] = y
        return QV.apply_right(QU.apply_left(Y, -2.0), -2.0)[idx]

    op = LinearOperator((b.size, b.size), matvec=gram, dtype=float)
    y_warm = np.zeros(b.size)

    def project(V):
        nonlocal y_warm
        resid = to_orig(V)[idx] - b
        if not np.any(resid):
            return V
        y, info = cg(op, resid, x0=y_warm, rtol=cg_tol, atol=0.0, maxiter=10 * b.size)
        if info > 0:
            log.debug("WMC projection CG stopped after %d iterations", info)
        y_warm = y
        Y = np.zeros(M.shape)
        Y[idx] = y
        return V - QV.apply_right(QU.apply_left(Y, -1.0), -1.0)

    scale = np.linalg.norm(M) or 1.0

    def feasibility(Z):
        return float(np.linalg.norm(to_orig(Z)[idx] - b) / scale)

    X0 = QV.apply_right(QU.apply_left(M))
    Z, it, feas, ok = _alm(X0, project, feasibility, cfg, rho0=_default_rho0(X0), scale=np.linalg.norm(X0) or 1.0)
    return Solution(to_orig(Z), it, feas, ok)


def _weighted_ball_projection(d: np.ndarray, wt: np.ndarray, eps: float) -> np.ndarray:
    """Closest x to d (Euclidean) with ||wt * x|| <= eps."""
    norm = np.linalg.norm(wt * d)
    if norm <= eps:
        return d
    if eps == 0:
        return np.zeros_like(d)
    w2 = wt * wt
    if np.ptp(w2) == 0:
        return d * (eps / norm)

    def excess(t):
        return np.linalg.norm(wt * d / (1.0 + t * w2)) - eps

    hi = norm / (eps * w2.min())
    t = brentq(excess, 0.0, hi, xtol=1e-15 * max(hi, 1.0), rtol=1e-15)
    return d / (1.0 + t * w2)


def solve_noisy_corr_mc(
    mask: Mask,
    observed_noisy,
    prior: Prior,
    epsilon: float,
    cfg: SolverConfig = SolverConfig(),
    plan: Optional[SamplingPlan] = None,
) -> Solution:
    """min ||X||_* - lam <Phi, X> subject to ||R_p(Y - X)||_F <= epsilon.

    ``epsilon`` bounds the rescaled residual, including the 1/p_ij factors
    of ``plan``.  Without a plan, p_ij = 1 is assumed.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    Y = _check_inputs(mask, observed_noisy)
    if prior.phi.shape != Y.shape:
        raise DimensionError(f"prior {prior.phi.shape} vs data {Y.shape}")
    if mask.count == 0:
        return _empty_mask_solution(Y.shape, prior.phi, prior.lam)
    delta = mask.delta
    idx = np.nonzero(delta)
    wt = 1.0 / plan.p[idx] if plan is not None else np.ones(idx[0].size)
    y = Y[idx]
    scale = np.linalg.norm(wt * y) or 1.0

    def project(V):
        X = V.copy()
        X[idx] = y + _weighted_ball_projection(V[idx] - y, wt, epsilon)
        return X

    def feasibility(Z):
        return max(0.0, float(np.linalg.norm(wt * (Z[idx] - y))) - epsilon) / scale

    shift = prior.lam * prior.phi if prior.lam else None
    Z, it, feas, ok = _alm(Y, project, feasibility, cfg, shift=shift, rho0=_default_rho0(Y), scale=np.linalg.norm(Y) or 1.0)
    return Solution(Z, it, feas, ok)
