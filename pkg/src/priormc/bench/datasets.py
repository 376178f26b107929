"""Similarity-matrix completion on labelled feature tables.

The ground truth is the label similarity ``S_ij = 1`` iff items i and j
share a class; its rank equals the number of classes.  The prior is
``Phi = U_hat U_hat^T`` where ``U_hat`` spans the top-r left singular
vectors of the (scaled) feature matrix.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .. import __version__
from ..linalg import LeverageProfile, principal_angles, subspace_leverage, thin_svd
from ..priors import Prior, WmcWeights, dwmc_weights, lambda_star_symmetric, wmc_weight
from ..sampling import Mask, draw_mask, uniform_plan
from ..solvers import SolverConfig, solve_corr_mc, solve_dwmc, solve_mc, solve_wmc
from .experiments import METHODS, _map, rel_error
from .report import ExperimentReport, TrialRecord, aggregate

log = logging.getLogger(__name__)

PREPROCESSING = ("minmax", "zscore", "none")

# Items, features and classes of the two reference tables.
KNOWN_SHAPES = {"wine": (178, 13, 3), "iris": (150, 4, 3)}


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    """A delimited numeric table with one label column.

    ``preprocessing`` scales feature columns before the SVD: ``minmax``
    maps each to [0, 1], ``zscore`` to zero mean and unit variance.
    Expected sizes, when given, are checked on load.
    """

    path: str
    label_column: int = -1
    n_items: Optional[int] = None
    n_features: Optional[int] = None
    n_classes: Optional[int] = None
    preprocessing: str = "minmax"
    skip_header: bool = False

    def __post_init__(self):
        if self.preprocessing not in PREPROCESSING:
            raise ValueError(f"preprocessing must be one of {PREPROCESSING}")

    @classmethod
    def reference(cls, name: str, path, **kw) -> "DatasetSpec":
        """Dataset description for a wine/iris table written with the label in the last column."""
        items, feats, classes = KNOWN_SHAPES[name]
        return cls(str(path), -1, items, feats, classes, **kw)


@dataclass
class RealDataConfig:
    methods: Tuple[str, ...] = ("mc", "corr")
    seed0: int = 0
    tol: float = 1e-3
    workers: int = 1
    observe_diagonal: bool = False
    solver_tol: float = 1e-6
    solver_max_iters: int = 5000

    def __post_init__(self):
        self.methods = tuple(self.methods)
        if not self.methods or set(self.methods) - set(METHODS):
            raise ValueError(f"methods must be a nonempty subset of {METHODS}")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


def _read_table(path: Path, skip_header: bool) -> np.ndarray:
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    rows = [ln.strip() for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    if skip_header:
        rows = rows[1:]
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    sep = "," if "," in rows[0] else None
    try:
        table = [[float(tok) for tok in row.split(sep)] for row in rows]
    except ValueError as exc:
        raise DatasetError(f"{path}: non-numeric entry ({exc})") from exc
    widths = {len(r) for r in table}
    if len(widths) != 1:
        raise DatasetError(f"{path}: ragged rows with widths {sorted(widths)}")
    return np.asarray(table)


def scale_features(Z: np.ndarray, how: str) -> np.ndarray:
    if how == "none":
        return Z
    if how == "zscore":
        sd = Z.std(axis=0)
        return (Z - Z.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    lo, hi = Z.min(axis=0), Z.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (Z - lo) / span


def similarity_from_labels(labels) -> np.ndarray:
    labels = np.asarray(labels)
    return (labels[:, None] == labels[None, :]).astype(float)


def load_dataset(spec: DatasetSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(S_star, Z)``: label similarity and scaled features."""
    table = _read_table(Path(spec.path), spec.skip_header)
    n_items, width = table.shape
    col = spec.label_column % width
    labels = table[:, col]
    Z = np.delete(table, col, axis=1)
    n_classes = np.unique(labels).size
    for name, want, got in (
        ("items", spec.n_items, n_items),
        ("features", spec.n_features, Z.shape[1]),
        ("classes", spec.n_classes, n_classes),
    ):
        if want is not None and want != got:
            raise DatasetError(f"{spec.path}: expected {want} {name}, found {got}")
    return similarity_from_labels(labels), scale_features(Z, spec.preprocessing)


def builtin_table(name: str) -> np.ndarray:
    """Wine or iris from scikit-learn's bundled copies, label in the last column."""
    try:
        from sklearn import datasets as skd
    except ImportError as exc:  # pragma: no cover - optional dependency
        raise DatasetError("built-in tables need scikit-learn (install the 'datasets' extra)") from exc
    loaders = {"wine": skd.load_wine, "iris": skd.load_iris}
    if name not in loaders:
        raise DatasetError(f"unknown built-in table {name!r}; choose from {sorted(loaders)}")
    d = loaders[name]()
    return np.column_stack([d.data, d.target])


def write_table(table: np.ndarray, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, table, delimiter=",", fmt="%.17g")
    except OSError as exc:
        raise DatasetError(f"cannot write {path}: {exc}") from exc
    return path


@dataclass
class RealDataSetup:
    S_star: np.ndarray
    U: np.ndarray
    U_hat: np.ndarray
    r: int
    angles: np.ndarray
    lam: float
    wmc_w: float


def prepare(spec: DatasetSpec, r: Optional[int] = None) -> RealDataSetup:
    """Truth, prior basis, principal angles (ascending) and tuned weights."""
    S, Z = load_dataset(spec)
    if r is None:
        r = int(round(np.linalg.matrix_rank(S)))
    if not 1 <= r <= min(Z.shape):
        raise DatasetError(f"rank {r} exceeds the feature matrix size {Z.shape}")
    U = thin_svd(S, r).U
    U_hat = np.linalg.svd(Z, full_matrices=False)[0][:, :r]
    decomp = principal_angles(U, U_hat)
    lam = min(max(lambda_star_symmetric(decomp.gamma).lam, 0.0), 1.0)
    w = wmc_weight(min(decomp.max_angle, np.nextafter(np.pi / 2, 0)))
    return RealDataSetup(S, U, U_hat, r, np.sort(decomp.gamma), lam, w)


def _real_trial(args) -> List[TrialRecord]:
    setup, cfg, p_grid, p_index, trial = args
    p = p_grid[p_index]
    n = setup.S_star.shape[0]
    seed = np.random.SeedSequence([cfg.seed0, p_index, trial])
    mask = draw_mask(uniform_plan(n, p, symmetric=True), seed)
    if cfg.observe_diagonal:
        delta = mask.delta.copy()
        np.fill_diagonal(delta, True)
        mask = Mask(delta)
    scfg = SolverConfig(tol=cfg.solver_tol, max_iters=cfg.solver_max_iters)
    S, Uh = setup.S_star, setup.U_hat
    out = []
    for method in cfg.methods:
        lam = None
        if method == "mc":
            sol = solve_mc(mask, S, scfg)
        elif method == "corr":
            lam = setup.lam
            sol = solve_corr_mc(mask, S, Prior(Uh @ Uh.T, lam), scfg)
        elif method == "wmc":
            sol = solve_wmc(mask, S, WmcWeights(setup.wmc_w, setup.wmc_w, Uh, Uh), scfg)
        else:
            lev = subspace_leverage(Uh)
            sol = solve_dwmc(mask, S, dwmc_weights(LeverageProfile(lev, lev, setup.r, n)), scfg)
        err = rel_error(sol.X_hat, S)
        out.append(
            TrialRecord(method, p, lam, None, p_index, trial, err, sol.iters,
                        bool(sol.converged), bool(sol.converged and err < cfg.tol))
        )
    return out


def run_real_dataset(
    spec: DatasetSpec,
    r: Optional[int],
    p_grid: Sequence[float],
    trials: int,
    cfg: RealDataConfig = RealDataConfig(),
) -> ExperimentReport:
    """Mean relative error per (method, p) under symmetric sampling."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    p_grid = [float(p) for p in p_grid]
    if any(not 0 < p <= 1 for p in p_grid):
        raise ValueError("p_grid entries must lie in (0, 1]")
    t0 = time.perf_counter()
    setup = prepare(spec, r)
    jobs = [(setup, cfg, p_grid, i, t) for i in range(len(p_grid)) for t in range(trials)]
    records = [rec for batch in _map(_real_trial, jobs, cfg.workers) for rec in batch]
    keys = [(m, i, None) for m in cfg.methods for i in range(len(p_grid))]
    report = ExperimentReport(
        aggregates=aggregate(records, keys),
        records=records,
        provenance={
            "kind": "real_dataset",
            "dataset": asdict(spec),
            "config": asdict(cfg),
            "r": setup.r,
            "p_grid": p_grid,
            "trials": trials,
            "principal_angles": setup.angles.tolist(),
            "lambda": setup.lam,
            "wmc_weight": setup.wmc_w,
            "version": __version__,
        },
    )
    report.provenance["wall_time_s"] = time.perf_counter() - t0
    return report
