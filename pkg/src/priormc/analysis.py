"""Recovery-theory calculators and a numerical dual-certificate check.

The quantities mirror the sufficient conditions for exact recovery by
correlation-maximising completion:

* ``alpha1 = ||U V^T - lam P_T(Phi)||_F`` and its leverage-weighted sizes
  ``xi1`` (max entry) and ``xi2`` (max row/column),
* ``alpha2 = ||lam P_T^perp(Phi)||`` (operator norm),
* closed forms of the same quantities in terms of principal angles when
  ``Phi`` is a subspace prior.

Logarithms of ``n`` are natural; the golfing round count uses base 2.
Probability lower bounds are shape-only: every universal constant is 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .linalg import (
    LeverageProfile,
    PrincipalAngleDecomposition,
    ThinSVD,
    as_dense,
    leverage_scores,
    mu_inf2_norm,
    mu_inf_norm,
    nuclear_norm,
    operator_norm,
    orthonormal_basis,
    project_tangent,
    project_tangent_perp,
    subspace_leverage,
)
from .sampling import Mask, SamplingPlan, draw_mask, golfing_iteration_count, golfing_split
from .solvers import corr_objective

RECOVERY_ALPHA2_MAX = 15 / 16
NOISY_ALPHA2_MAX = 7 / 8
P_LOWER_NOTE = "shape-only lower bound, universal constant set to 1; log n natural, K base 2"


@dataclass
class TheoryReport:
    alpha1: float
    alpha2: float
    alpha3: Optional[float] = None
    beta: Optional[float] = None
    xi1: Optional[float] = None
    xi2: Optional[float] = None
    l: Optional[float] = None
    K: Optional[int] = None
    p_lower: Optional[np.ndarray] = None
    note: str = P_LOWER_NOTE

    @property
    def recovery_condition_alpha2(self) -> bool:
        return self.alpha2 < RECOVERY_ALPHA2_MAX

    @property
    def noisy_condition_alpha2(self) -> bool:
        return self.alpha2 < NOISY_ALPHA2_MAX

    def summary(self) -> dict:
        out = {
            k: getattr(self, k)
            for k in ("alpha1", "alpha2", "alpha3", "beta", "xi1", "xi2", "l", "K")
        }
        out["recovery_condition_alpha2"] = self.recovery_condition_alpha2
        out["noisy_condition_alpha2"] = self.noisy_condition_alpha2
        if self.p_lower is not None:
            out["p_lower_max"] = float(self.p_lower.max())
            out["p_lower_mean"] = float(self.p_lower.mean())
        out["note"] = self.note
        return out


def golfing_scale(n: int, r: int) -> float:
    """l with l^2 = r log(n) / n."""
    return math.sqrt(r * math.log(n) / n)


def residual_W0(svd: ThinSVD, phi, lam: float) -> np.ndarray:
    """W0 = U V^T - lam P_T(Phi)."""
    W0 = svd.U @ svd.V.T
    if lam:
        W0 = W0 - lam * project_tangent(svd.tangent(), phi)
    return W0


def sampling_lower_bound(alpha1: float, profile: LeverageProfile, quality: float) -> np.ndarray:
    """max{log2(alpha1^2 n/(r log n)), 1} (mu_i+nu_j) r log n / n max{quality, 1}, capped at 1."""
    n, r = profile.n, profile.r
    logn = math.log(n)
    if alpha1 > 0:
        lead = max(math.log2(alpha1**2 * n / (r * logn)), 1.0)
    else:
        lead = 1.0
    base = (profile.mu[:, None] + profile.nu[None, :]) * r * logn / n
    return np.minimum(lead * base * max(quality, 1.0), 1.0)


def theory_report_direct(svd: ThinSVD, phi, lam: float) -> TheoryReport:
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    phi = as_dense(phi, "phi")
    n, r = svd.n, svd.rank
    W0 = residual_W0(svd, phi, lam)
    profile = leverage_scores(svd)
    alpha1 = float(np.linalg.norm(W0))
    alpha2 = lam * operator_norm(project_tangent_perp(svd.tangent(), phi))
    xi1 = mu_inf_norm(W0, profile)
    xi2 = mu_inf2_norm(W0, profile)
    l = golfing_scale(n, r) if n > 1 else None
    return TheoryReport(
        alpha1=alpha1,
        alpha2=alpha2,
        xi1=xi1,
        xi2=xi2,
        l=l,
        K=golfing_iteration_count(alpha1, l) if l else None,
        p_lower=sampling_lower_bound(alpha1, profile, (2 * xi1 + xi2) ** 2) if n > 1 else None,
    )


def leverage_ratio_max(U, U_tilde) -> float:
    """max_i mu_i(span[U, U_tilde]) / mu_i(span U), inf where mu_i = 0 < combined score."""
    U = np.asarray(U, dtype=float)
    joint = subspace_leverage(orthonormal_basis(np.hstack([U, U_tilde])))
    own = subspace_leverage(U)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(own > 0, joint / np.where(own > 0, own, 1.0), np.where(joint > 0, np.inf, 0.0))
    return float(ratio.max())


def beta_from_subspaces(U, U_tilde, V=None, V_tilde=None) -> float:
    """beta = 1 v sqrt(2 max mu_breve/mu) v sqrt(2 max nu_breve/nu)."""
    b = max(1.0, math.sqrt(2 * leverage_ratio_max(U, U_tilde)))
    if V is not None:
        b = max(b, math.sqrt(2 * leverage_ratio_max(V, V_tilde)))
    return b


def theory_report_angles_symmetric(
    gamma,
    lam: float,
    leverage_ratio_max: float,
    profile: Optional[LeverageProfile] = None,
) -> TheoryReport:
    gamma = np.asarray(gamma, dtype=float)
    r = gamma.size
    c, s = np.cos(gamma), np.sin(gamma)
    alpha1_sq = lam**2 * (r - np.sum(s**4)) - 2 * lam * np.sum(c**2) + r
    alpha1 = math.sqrt(max(alpha1_sq, 0.0))
    alpha3 = float(np.max(1 - lam * c**2) + 2 * lam * np.max(c * s))
    beta = max(1.0, math.sqrt(2 * leverage_ratio_max))
    rep = TheoryReport(alpha1=alpha1, alpha2=float(lam * np.max(s**2)), alpha3=alpha3, beta=beta)
    _fill_sampling(rep, profile)
    return rep


def theory_report_angles_general(
    decomp: PrincipalAngleDecomposition,
    lam: float,
    beta: float,
    profile: Optional[LeverageProfile] = None,
) -> TheoryReport:
    I = np.eye(decomp.r)
    resid = I - lam * decomp.A_cc
    alpha1_sq = (
        np.linalg.norm(resid) ** 2
        + np.linalg.norm(lam * decomp.A_cs) ** 2
        + np.linalg.norm(lam * decomp.A_sc) ** 2
    )
    alpha3 = operator_norm(resid) + lam * operator_norm(decomp.A_sc) + lam * operator_norm(decomp.A_cs)
    rep = TheoryReport(
        alpha1=math.sqrt(alpha1_sq),
        alpha2=lam * operator_norm(decomp.A_ss),
        alpha3=alpha3,
        beta=beta,
    )
    _fill_sampling(rep, profile)
    return rep


def _fill_sampling(rep: TheoryReport, profile: Optional[LeverageProfile]) -> None:
    if profile is None or profile.n < 2:
        return
    rep.l = golfing_scale(profile.n, profile.r)
    rep.K = golfing_iteration_count(rep.alpha1, rep.l)
    rep.p_lower = sampling_lower_bound(rep.alpha1, profile, (rep.alpha3 * rep.beta) ** 2)


@dataclass
class CertificateReport:
    Y: np.ndarray
    K_used: int
    residual_T: float
    spectral_Tperp: float
    decay: List[float]
    conditions_met: bool
    mask: Mask
    l: float
    alpha1: float
    alpha2: float
    round_masks: List[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def decay_ratios(self) -> np.ndarray:
        d = np.asarray(self.decay)
        with np.errstate(divide="ignore", invalid="ignore"):
            return d[1:] / d[:-1]


def golfing_certificate(
    svd: ThinSVD,
    phi,
    lam: float,
    plan: SamplingPlan,
    seed,
    K: Optional[int] = None,
) -> CertificateReport:
    """Build Y by the golfing scheme and test the two certificate inequalities.

    Sampling with probability p is split into K independent rounds with
    per-round probability q, (1-q)^K = 1-p.  Round k adds R_q(W_{k-1}) to Y
    and sets W_k = W_{k-1} - P_T(R_q(W_{k-1})).  The union of the rounds is
    returned as ``mask``; Y vanishes off it.
    """
    phi = as_dense(phi, "phi")
    T = svd.tangent()
    n, r = svd.n, svd.rank
    W0 = residual_W0(svd, phi, lam)
    alpha1 = float(np.linalg.norm(W0))
    alpha2 = lam * operator_norm(project_tangent_perp(T, phi))
    l = golfing_scale(n, r)
    if K is None:
        K = golfing_iteration_count(alpha1, l)
    q = golfing_split(plan.p, K)
    round_plan = SamplingPlan(np.asarray(q, dtype=float), symmetric=plan.symmetric)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seeds = ss.spawn(K)

    W = W0
    Y = np.zeros_like(W0)
    union = np.zeros(W0.shape, dtype=bool)
    decay = [alpha1]
    rounds = []
    for k in range(K):
        delta = draw_mask(round_plan, seeds[k]).delta
        RW = np.where(delta, W / round_plan.p, 0.0)
        Y += RW
        W = W - project_tangent(T, RW)
        decay.append(float(np.linalg.norm(W)))
        union |= delta
        rounds.append(delta)

    residual = float(np.linalg.norm(W0 - project_tangent(T, Y)))
    spectral = operator_norm(lam * project_tangent_perp(T, phi) + project_tangent_perp(T, Y))
    met = residual <= l / (32 * math.sqrt(2)) and spectral < 1 / 32 + alpha2
    return CertificateReport(
        Y=Y,
        K_used=K,
        residual_T=residual,
        spectral_Tperp=spectral,
        decay=decay,
        conditions_met=bool(met),
        mask=Mask(union),
        l=l,
        alpha1=alpha1,
        alpha2=alpha2,
        round_masks=rounds,
    )


def certificate_bound(svd: ThinSVD, cert: CertificateReport, Z) -> float:
    """Lower bound on the directional slope of the objective along a kernel direction Z.

    For Z vanishing on the certificate's support,
    slope >= -residual_T ||P_T Z||_F + (1 - spectral_Tperp) ||P_T^perp Z||_F.
    """
    T = svd.tangent()
    PZ = project_tangent(T, Z)
    return float(
        -cert.residual_T * np.linalg.norm(PZ)
        + (1 - cert.spectral_Tperp) * np.linalg.norm(np.asarray(Z) - PZ)
    )


def noisy_error_bound(n: int, r: int, lam: float, phi, epsilon: float) -> float:
    """[2 + 32 sqrt(1 + 2n/(r log n)) (sqrt n + ||lam Phi||_F)] epsilon."""
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    if n < 2:
        raise ValueError("n must be at least 2")
    lam_phi = lam * float(np.linalg.norm(phi))
    return (2 + 32 * math.sqrt(1 + 2 * n / (r * math.log(n))) * (math.sqrt(n) + lam_phi)) * epsilon


def recovery_margin(
    svd: ThinSVD,
    phi,
    lam: float,
    mask: Mask,
    cert: Optional[CertificateReport] = None,
    trials: int = 200,
    seed=0,
    step: float = 1e-3,
) -> float:
    """Smallest sampled objective slope away from X* along unobserved directions.

    Draws Gaussian Z vanishing on the mask, normalised to unit Frobenius
    norm, and returns min (f(X* + step Z) - f(X*)) / step for
    f = ||.||_* - lam <Phi, .>.  ``step=1`` gives the raw increase for unit
    Z.  A positive value is consistent with X* being the unique minimiser
    on the tested directions; it is evidence, not proof.  Returns +inf when
    every entry is observed.
    """
    free = ~mask.delta
    if not free.any():
        return math.inf
    if cert is not None and np.any(cert.Y[free] != 0):
        raise ValueError("certificate is not supported on the given mask")
    phi = as_dense(phi, "phi")
    X = svd.matrix()
    f0 = corr_objective(X, phi, lam)
    rng = np.random.default_rng(seed)
    best = math.inf
    for _ in range(trials):
        Z = np.where(free, rng.standard_normal(X.shape), 0.0)
        Z /= np.linalg.norm(Z)
        best = min(best, (corr_objective(X + step * Z, phi, lam) - f0) / step)
    return best


def objective_gap(X, X_ref, phi, lam: float) -> float:
    """f(X) - f(X_ref) for the correlation objective."""
    return corr_objective(X, phi, lam) - corr_objective(X_ref, phi, lam)


__all__ = [
    "TheoryReport",
    "CertificateReport",
    "theory_report_direct",
    "theory_report_angles_symmetric",
    "theory_report_angles_general",
    "golfing_certificate",
    "certificate_bound",
    "noisy_error_bound",
    "recovery_margin",
    "beta_from_subspaces",
    "leverage_ratio_max",
    "residual_W0",
    "sampling_lower_bound",
    "golfing_scale",
    "nuclear_norm",
]
