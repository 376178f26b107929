"""Bernoulli observation models.

A :class:`SamplingPlan` holds per-entry probabilities; :func:`draw_mask`
realises it with a seeded generator.  :func:`apply_Rp` is the rescaled
sampling operator ``(delta_ij / p_ij) X_ij``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linalg import DimensionError, TangentSpace, as_dense, project_tangent


@dataclass(frozen=True)
class SamplingPlan:
    p: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise DimensionError(f"probability matrix must be square, got {p.shape}")
        if not np.all((p > 0) & (p <= 1)):
            raise ValueError("sampling probabilities must lie in (0, 1]")
        if self.symmetric and not np.array_equal(p, p.T):
            raise ValueError("a symmetric plan needs a symmetric probability matrix")
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return self.p.shape[0]

    @property
    def expected_samples(self) -> float:
        """m = sum_ij p_ij."""
        return float(self.p.sum())


@dataclass(frozen=True)
class Mask:
    delta: np.ndarray
    seed: Optional[int] = None

    @property
    def n(self) -> int:
        return self.delta.shape[0]

    @property
    def count(self) -> int:
        return int(self.delta.sum())


def uniform_plan(n: int, p: float, symmetric: bool = False) -> SamplingPlan:
    if n < 1:
        raise ValueError("n must be positive")
    if not 0 < p <= 1:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    return SamplingPlan(np.full((n, n), float(p)), symmetric=symmetric)


def draw_mask(plan: SamplingPlan, seed) -> Mask:
    """Independent Bernoulli(p_ij) draws; symmetric plans share one draw per pair."""
    rng = np.random.default_rng(seed)
    u = rng.random(plan.p.shape)
    if plan.symmetric:
        u = np.triu(u) + np.triu(u, 1).T
    delta = u < plan.p
    return Mask(delta, seed if isinstance(seed, (int, np.integer)) else None)


def apply_Rp(X, plan: SamplingPlan, mask: Mask) -> np.ndarray:
    X = as_dense(X)
    if X.shape != plan.p.shape or mask.delta.shape != plan.p.shape:
        raise DimensionError(
            f"shapes disagree: X {X.shape}, plan {plan.p.shape}, mask {mask.delta.shape}"
        )
    return np.where(mask.delta, X / plan.p, 0.0)


def golfing_split(p, K: int):
    """Per-round probability q with (1 - q)^K = 1 - p.

    Works elementwise on arrays.  ``p == 1`` gives ``q == 1``.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p > 1)):
        raise ValueError("p must lie in (0, 1]")
    # -expm1(log1p(-p)/K) is 1 - (1-p)^(1/K) without cancellation for small p.
    with np.errstate(divide="ignore"):
        q = np.where(p >= 1, 1.0, -np.expm1(np.log1p(-np.minimum(p, 1 - 1e-300)) / K))
    return float(q) if q.ndim == 0 else q


def golfing_iteration_count(alpha1: float, l: float) -> int:
    """K = max(ceil(log2(32 sqrt(2) alpha1 / l)), 1).

    Base 2 makes ``2**-K * alpha1 <= l / (32 sqrt 2)`` hold exactly.
    """
    if alpha1 < 0 or l <= 0:
        raise ValueError("need alpha1 >= 0 and l > 0")
    if alpha1 == 0:
        return 1
    arg = 32 * math.sqrt(2) * alpha1 / l
    return max(math.ceil(math.log2(arg) - 1e-12), 1)


def near_isometry_deviation(
    T: TangentSpace,
    plan: SamplingPlan,
    trials: int,
    seed,
    mask: Optional[Mask] = None,
) -> float:
    """Lower estimate of ||P_T - P_T R_p P_T||_{F->F} for one mask realisation.

    Evaluates the deviation on ``trials`` random unit-norm matrices in T and
    returns the largest ratio.  Diagnostic only.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    if mask is None:
        mask = draw_mask(plan, rng.integers(2**63))
    n1, n2 = T.U.shape[0], T.V.shape[0]
    worst = 0.0
    for _ in range(trials):
        W = project_tangent(T, rng.standard_normal((n1, n2)))
        W /= np.linalg.norm(W)
        D = W - project_tangent(T, apply_Rp(W, plan, mask))
        worst = max(worst, float(np.linalg.norm(D)))
    return worst
