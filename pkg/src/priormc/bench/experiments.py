"""Synthetic phase-transition experiments.

Every (p, trial) pair gets its own seed sequence built from
``(seed0, p_index, trial)``; the instance, prior noise and mask are drawn
from its children, so all methods and lambda values at that pair see the
same data regardless of worker count.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .. import __version__
from ..linalg import LeverageProfile, ThinSVD, principal_angles, subspace_leverage
from ..priors import Prior, WmcWeights, dwmc_weights, lambda_star_general, noisy_copy_subspaces, wmc_weight
from ..sampling import draw_mask, uniform_plan
from ..solvers import SolverConfig, solve_corr_mc, solve_dwmc, solve_mc, solve_wmc
from .report import ExperimentReport, TrialRecord, aggregate

log = logging.getLogger(__name__)

METHODS = ("mc", "corr", "wmc", "dwmc")


def default_p_grid(n: int) -> List[float]:
    """{1/n, 2/n, ..., 1}."""
    return [k / n for k in range(1, n + 1)]


@dataclass
class ExperimentConfig:
    n: int = 32
    r: int = 4
    sigma: float = 0.01
    p_grid: Optional[List[float]] = None
    trials: int = 50
    tol: float = 1e-3
    methods: Tuple[str, ...] = METHODS
    lambda_grid: Optional[List[float]] = None
    seed0: int = 0
    symmetric: bool = False
    workers: int = 1
    solver_tol: float = 1e-6
    solver_max_iters: int = 5000

    def __post_init__(self):
        if self.p_grid is None:
            self.p_grid = default_p_grid(self.n)
        self.p_grid = [float(p) for p in self.p_grid]
        self.methods = tuple(self.methods)
        if not 1 <= self.r <= self.n:
            raise ValueError(f"need 1 <= r <= n, got r={self.r}, n={self.n}")
        if any(not 0 < p <= 1 for p in self.p_grid):
            raise ValueError("p_grid entries must lie in (0, 1]")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        bad = set(self.methods) - set(METHODS)
        if bad or not self.methods:
            raise ValueError(f"methods must be a nonempty subset of {METHODS}, got {self.methods}")
        if self.lambda_grid is not None:
            self.lambda_grid = [float(v) for v in self.lambda_grid]
            if any(v < 0 for v in self.lambda_grid):
                raise ValueError("lambda_grid entries must be nonnegative")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def solver_config(self) -> SolverConfig:
        return SolverConfig(tol=self.solver_tol, max_iters=self.solver_max_iters)


def gen_instance(n: int, r: int, seed) -> Tuple[np.ndarray, ThinSVD]:
    """X* = U diag(1/sqrt r) V^T with U, V orthonormal bases of Gaussian spans."""
    if not 1 <= r <= n:
        raise ValueError(f"need 1 <= r <= n, got r={r}, n={n}")
    rng = np.random.default_rng(seed)
    U, _ = np.linalg.qr(rng.standard_normal((n, r)))
    V, _ = np.linalg.qr(rng.standard_normal((n, r)))
    S = np.full(r, 1.0 / np.sqrt(r))
    svd = ThinSVD(U, S, V)
    return svd.matrix(), svd


def trial_seeds(seed0: int, p_index: int, trial: int):
    """(instance, prior, mask) child seeds for one (p, trial) pair."""
    return np.random.SeedSequence([seed0, p_index, trial]).spawn(3)


def rel_error(X_hat: np.ndarray, X_star: np.ndarray) -> float:
    return float(np.linalg.norm(X_hat - X_star) / np.linalg.norm(X_star))


def _lambda_slots(cfg: ExperimentConfig, method: str) -> List[Optional[float]]:
    if method == "corr" and cfg.lambda_grid is not None:
        return list(cfg.lambda_grid)
    return [None]


def _run_pair(args) -> List[TrialRecord]:
    cfg, p_index, trial = args
    p = cfg.p_grid[p_index]
    s_inst, s_prior, s_mask = trial_seeds(cfg.seed0, p_index, trial)
    X_star, svd = gen_instance(cfg.n, cfg.r, s_inst)
    Ut, Vt = noisy_copy_subspaces(X_star, cfg.sigma, cfg.r, s_prior)
    phi = Ut @ Vt.T
    plan = uniform_plan(cfg.n, p, symmetric=cfg.symmetric)
    mask = draw_mask(plan, s_mask)
    scfg = cfg.solver_config()
    decomp = principal_angles(svd.U, Ut, svd.V, Vt)

    out = []
    for method in cfg.methods:
        for slot in _lambda_slots(cfg, method):
            lam = None
            if method == "mc":
                sol = solve_mc(mask, X_star, scfg)
            elif method == "corr":
                # lambda > 1 can leave the program unbounded, so the optimum is clipped.
                lam = slot if slot is not None else min(max(lambda_star_general(decomp).lam, 0.0), 1.0)
                sol = solve_corr_mc(mask, X_star, Prior(phi, lam), scfg)
            elif method == "wmc":
                # At a right angle the weight tends to sqrt(1/2); step just inside.
                w = wmc_weight(min(decomp.max_angle, np.nextafter(np.pi / 2, 0)))
                sol = solve_wmc(mask, X_star, WmcWeights(w, w, Ut, Vt), scfg)
            else:
                prof = LeverageProfile(subspace_leverage(Ut), subspace_leverage(Vt), cfg.r, cfg.n)
                sol = solve_dwmc(mask, X_star, dwmc_weights(prof), scfg)
            err = rel_error(sol.X_hat, X_star)
            if not sol.converged:
                log.debug("%s p=%.3f trial %d did not converge (err %.2e)", method, p, trial, err)
            out.append(
                TrialRecord(
                    method=method,
                    p=p,
                    lam=None if lam is None else float(lam),
                    lam_grid=slot,
                    p_index=p_index,
                    trial=trial,
                    error=err,
                    iterations=sol.iters,
                    # Non-convergence is recorded and counted as failure.
                    converged=bool(sol.converged),
                    success=bool(sol.converged and err < cfg.tol),
                )
            )
    return out


def _map(fn, jobs: Sequence, workers: int):
    if workers == 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, os.cpu_count() or 1)) as ex:
        return list(ex.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def _group_keys(cfg: ExperimentConfig):
    return [
        (m, i, slot)
        for m in cfg.methods
        for slot in _lambda_slots(cfg, m)
        for i in range(len(cfg.p_grid))
    ]


def run_phase_transition(cfg: ExperimentConfig) -> ExperimentReport:
    t0 = time.perf_counter()
    jobs = [(cfg, i, t) for i in range(len(cfg.p_grid)) for t in range(cfg.trials)]
    records = [rec for batch in _map(_run_pair, jobs, cfg.workers) for rec in batch]
    report = ExperimentReport(
        aggregates=aggregate(records, _group_keys(cfg)),
        records=records,
        provenance={
            "kind": "phase_transition",
            "config": asdict(cfg),
            "version": __version__,
        },
    )
    report.provenance["wall_time_s"] = time.perf_counter() - t0
    return report
