"""``priormc`` command line.

Subcommands
-----------
phase    synthetic phase-transition sweep
dataset  similarity completion on a labelled table
certify  theory report and golfing certificate for one synthetic instance
report   summarise a saved JSON report, optionally re-emitting CSV

Any flag may also come from a ``key = value`` file passed with
``--config``; flags given on the command line win.  Output goes to
``--out-dir``, defaulting to ``$PRIORMC_OUTPUT_DIR`` or the current
directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from ..analysis import golfing_certificate, theory_report_direct
from ..priors import Prior, noisy_copy_prior
from ..sampling import uniform_plan
from ..solvers import SolverConfig, solve_corr_mc
from .datasets import DatasetError, DatasetSpec, KNOWN_SHAPES, RealDataConfig, builtin_table, run_real_dataset, write_table
from .experiments import METHODS, ExperimentConfig, gen_instance, rel_error, run_phase_transition
from .report import ExperimentReport, ReportIOError, emit_report, load_report

OUTPUT_ENV = "PRIORMC_OUTPUT_DIR"

log = logging.getLogger("priormc")


class ConfigError(ValueError):
    pass


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _methods(text: str):
    ms = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = set(ms) - set(METHODS)
    if bad or not ms:
        raise argparse.ArgumentTypeError(f"methods must come from {METHODS}, got {text!r}")
    return ms


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def read_config_file(path) -> Dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for no, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{no}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = val
    return out


def _common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", help="key = value file supplying defaults for any flag")
    sp.add_argument("--out-dir", default=None, help=f"output directory (default ${OUTPUT_ENV} or .)")
    sp.add_argument("--tag", default=None, help="file name stem for outputs")
    sp.add_argument("--seed0", type=int, default=0)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--tol", type=float, default=1e-3, help="success threshold on relative error")
    sp.add_argument("--solver-tol", type=float, default=1e-6)
    sp.add_argument("--solver-max-iters", type=int, default=5000)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="priormc", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    ph = sub.add_parser("phase", help="synthetic phase-transition sweep")
    _common(ph)
    ph.add_argument("--n", type=int, default=32)
    ph.add_argument("--r", type=int, default=4)
    ph.add_argument("--sigma", type=float, default=0.01)
    ph.add_argument("--p-grid", type=_floats, default=None, help="comma list; default 1/n, 2/n, ..., 1")
    ph.add_argument("--trials", type=int, default=50)
    ph.add_argument("--methods", type=_methods, default=METHODS)
    ph.add_argument("--lambda-grid", type=_floats, default=None)
    ph.add_argument("--symmetric", type=_bool, default=False)

    ds = sub.add_parser("dataset", help="similarity completion on a labelled table")
    _common(ds)
    src = ds.add_mutually_exclusive_group()
    src.add_argument("--path", help="delimited numeric table")
    src.add_argument("--builtin", choices=sorted(KNOWN_SHAPES), help="use a bundled reference table")
    ds.add_argument("--label-column", type=int, default=-1)
    ds.add_argument("--n-classes", type=int, default=None)
    ds.add_argument("--skip-header", type=_bool, default=False)
    ds.add_argument("--preprocessing", choices=("minmax", "zscore", "none"), default="minmax")
    ds.add_argument("--r", type=int, default=None, help="default: rank of the label similarity")
    ds.add_argument("--p-grid", type=_floats, default=[k / 10 for k in range(1, 11)])
    ds.add_argument("--trials", type=int, default=50)
    ds.add_argument("--methods", type=_methods, default=METHODS)
    ds.add_argument("--observe-diagonal", type=_bool, default=False)

    ce = sub.add_parser("certify", help="theory report and golfing certificate")
    _common(ce)
    ce.add_argument("--n", type=int, default=32)
    ce.add_argument("--r", type=int, default=2)
    ce.add_argument("--p", type=float, default=0.8)
    ce.add_argument("--lam", type=float, default=0.0)
    ce.add_argument("--sigma", type=float, default=0.01)

    rp = sub.add_parser("report", help="summarise a saved JSON report")
    rp.add_argument("input", help="JSON report written by phase or dataset")
    rp.add_argument("--csv", default=None, help="also write aggregates to this CSV path")
    ap.set_defaults(_subparsers={"phase": ph, "dataset": ds, "certify": ce, "report": rp})
    return ap


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    ap = build_parser()
    args = ap.parse_args(argv)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        values = read_config_file(cfg_path)
        sp = args._subparsers[args.command]
        known = {a.dest: a for a in sp._actions}
        extra = set(values) - set(known)
        if extra:
            raise ConfigError(f"{cfg_path}: unknown keys {sorted(extra)}")
        # File values become defaults, so explicit flags still override them.
        defaults = {}
        for key, raw in values.items():
            act = known[key]
            try:
                defaults[key] = act.type(raw) if act.type else raw
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise ConfigError(f"{cfg_path}: bad value for {key}: {exc}") from exc
        sp.set_defaults(**defaults)
        args = ap.parse_args(argv)
    return args


def _out_dir(args) -> Path:
    return Path(args.out_dir or os.environ.get(OUTPUT_ENV) or ".")


def _write(report: ExperimentReport, out: Path, stem: str) -> None:
    emit_report(report, "csv", out / f"{stem}.csv")
    emit_report(report, "json", out / f"{stem}.json")
    print(f"wrote {out / stem}.csv and {out / stem}.json")


def _print_table(report: ExperimentReport) -> None:
    print(f"{'method':<6} {'p':>7} {'lambda':>8} {'success':>8} {'mean_err':>10} {'trials':>6}")
    for a in report.aggregates:
        lam = "-" if a.lam is None else f"{a.lam:.4f}"
        print(f"{a.method:<6} {a.p:7.4f} {lam:>8} {a.success_rate:8.3f} {a.mean_rel_error:10.3e} {a.trials:6d}")


def cmd_phase(args) -> int:
    cfg = ExperimentConfig(
        n=args.n, r=args.r, sigma=args.sigma, p_grid=args.p_grid, trials=args.trials,
        tol=args.tol, methods=args.methods, lambda_grid=args.lambda_grid, seed0=args.seed0,
        symmetric=args.symmetric, workers=args.workers, solver_tol=args.solver_tol,
        solver_max_iters=args.solver_max_iters,
    )
    report = run_phase_transition(cfg)
    _print_table(report)
    _write(report, _out_dir(args), args.tag or "phase")
    return 0


def cmd_dataset(args) -> int:
    out = _out_dir(args)
    if args.builtin:
        path = write_table(builtin_table(args.builtin), out / f"{args.builtin}.csv")
        spec = DatasetSpec.reference(args.builtin, path, preprocessing=args.preprocessing)
    elif args.path:
        spec = DatasetSpec(args.path, args.label_column, n_classes=args.n_classes,
                           preprocessing=args.preprocessing, skip_header=args.skip_header)
    else:
        raise ConfigError("dataset needs --path or --builtin")
    cfg = RealDataConfig(methods=args.methods, seed0=args.seed0, tol=args.tol, workers=args.workers,
                         observe_diagonal=args.observe_diagonal, solver_tol=args.solver_tol,
                         solver_max_iters=args.solver_max_iters)
    report = run_real_dataset(spec, args.r, args.p_grid, args.trials, cfg)
    angles = ", ".join(f"{a:.3f}" for a in report.provenance["principal_angles"])
    print(f"principal angles: ({angles}); lambda = {report.provenance['lambda']:.4f}")
    _print_table(report)
    _write(report, out, args.tag or f"dataset_{args.builtin or Path(args.path).stem}")
    return 0


def cmd_certify(args) -> int:
    X_star, svd = gen_instance(args.n, args.r, np.random.SeedSequence([args.seed0, 0]))
    phi = noisy_copy_prior(X_star, args.sigma, args.r, np.random.SeedSequence([args.seed0, 1]))
    theory = theory_report_direct(svd, phi, args.lam)
    cert = golfing_certificate(svd, phi, args.lam, uniform_plan(args.n, args.p), np.random.SeedSequence([args.seed0, 2]))
    sol = solve_corr_mc(cert.mask, X_star, Prior(phi, args.lam),
                        SolverConfig(tol=args.solver_tol, max_iters=args.solver_max_iters))
    doc = {
        "theory": theory.summary(),
        "certificate": {
            "K": cert.K_used,
            "residual_T": cert.residual_T,
            "spectral_Tperp": cert.spectral_Tperp,
            "threshold_T": cert.l / (32 * np.sqrt(2)),
            "threshold_Tperp": 1 / 32 + cert.alpha2,
            "decay": cert.decay,
            "conditions_met": cert.conditions_met,
            "observed_fraction": cert.mask.count / args.n**2,
        },
        "recovery_rel_error": rel_error(sol.X_hat, X_star),
    }
    text = json.dumps(doc, indent=1)
    print(text)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{args.tag or 'certify'}.json").write_text(text)
    return 0


def cmd_report(args) -> int:
    report = load_report(args.input)
    _print_table(report)
    if args.csv:
        emit_report(report, "csv", args.csv)
        print(f"wrote {args.csv}")
    return 0


COMMANDS = {"phase": cmd_phase, "dataset": cmd_dataset, "certify": cmd_certify, "report": cmd_report}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except ConfigError as exc:
        print(f"priormc: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DatasetError, ReportIOError, ValueError, OSError) as exc:
        print(f"priormc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
