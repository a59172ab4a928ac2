"""Command-line interface: ``mfm {simulate,fit,ranks,infer,validate,bench}``.

Exit codes: 0 success, 2 invalid input or config, 3 numerical failure,
4 non-convergence (outputs and diagnostics are still written).
Set ``MFM_LOG`` (e.g. ``DEBUG``) to change the log level.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import io
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .baselines import alpha_pca_fit, ls_alternating_fit
from .config import METHODS, PROFILES, RunConfig, load_config
from .core import FactorFit, MatrixSeries
from .errors import MFMError, NonConvergenceError, ValidationError
from .io import (fmt_float, read_fit, read_matrix_csv, read_series, tensor_bytes, long_csv_text,
                 write_factors_csv, write_fit, write_matrix_csv)

logger = logging.getLogger("robust_mfm")

# (reps, T values) per profile for the Monte Carlo tables
BENCH_PROFILES = {
    "smoke": dict(reps=3, table1_T=(10,), table3_T=(20,), normality_reps=20),
    "desk": dict(reps=100, table1_T=(20, 50), table3_T=(20, 50), normality_reps=500),
    "full": dict(reps=500, table1_T=(20, 50, 100, 150, 200), table3_T=(20, 50, 100, 150, 200),
                 normality_reps=2000),
}


def _dump_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _write(path: Path, text: str) -> None:
    try:
        path.write_bytes(text.encode("utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot write {path}: {exc}") from exc


def _outdir(args, cfg: RunConfig) -> Path:
    d = args.output_dir or cfg.output_dir or "."
    p = Path(d)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"cannot create output directory {p}: {exc}") from exc
    return p


def _rows_csv(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: fmt_float(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def _manifest(command: str, cfg: RunConfig, extra: dict | None = None) -> dict:
    return {
        "command": command,
        "package_version": __version__,
        "config": cfg.to_dict(),
        **(extra or {}),
        # the only non-deterministic field in any output
        "created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def _apply_overrides(args, cfg: RunConfig) -> RunConfig:
    if getattr(args, "method", None):
        cfg = dataclasses.replace(cfg, method=args.method).validate()
    cfg = cfg.with_section("ihr", k1=getattr(args, "k1", None), k2=getattr(args, "k2", None),
                           seed=getattr(args, "seed", None))
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_section("dgp", seed=args.seed)
    return cfg


def _fit_series(series: MatrixSeries, cfg: RunConfig) -> FactorFit:
    s = cfg.ihr
    if cfg.method == "ihr":
        from .ihr import fit

        return fit(series, s.options())
    if cfg.method == "ls":
        return ls_alternating_fit(series, s.k1, s.k2, s.options())
    return alpha_pca_fit(series, s.k1, s.k2)


# -- commands -------------------------------------------------------------------

def cmd_simulate(args, cfg: RunConfig) -> int:
    from .simulation import generate

    out = _outdir(args, cfg)
    data = generate(cfg.dgp.params())
    (out / "series.mfm").write_bytes(tensor_bytes(data.series))
    if args.csv:
        _write(out / "series.csv", long_csv_text(data.series))
    write_matrix_csv(out / "R0.csv", data.R0, "r")
    write_matrix_csv(out / "C0.csv", data.C0, "c")
    write_factors_csv(out / "F0.csv", data.F0)
    _write(out / "manifest.json", _dump_json(_manifest("simulate", cfg)))
    return 0


def cmd_fit(args, cfg: RunConfig) -> int:
    series = read_series(args.input)
    out = _outdir(args, cfg)
    f = _fit_series(series, cfg)
    write_fit(out, f)
    diag = dict(f.diagnostics, method=cfg.method, objective=f.objective_value,
                sweeps=f.iterations, converged=f.converged, k1=f.k1, k2=f.k2,
                shape=list(series.shape))
    _write(out / "diagnostics.json", _dump_json(diag))
    if not f.converged:
        raise NonConvergenceError(f"fit stopped after {f.iterations} sweeps without converging")
    return 0


def cmd_ranks(args, cfg: RunConfig) -> int:
    from .ranks import estimate_ranks

    series = read_series(args.input)
    out = _outdir(args, cfg)
    r = cfg.ranks
    rm, er, over = estimate_ranks(series, r.m1, r.m2, cfg.ihr.options(),
                                  rm_exponent=r.rm_exponent, er_c=r.er_c)
    report = dict(RM=rm.to_dict(), ER=er.to_dict(), over_fit_converged=over.converged,
                  over_fit_sweeps=over.iterations)
    _write(out / "ranks.json", _dump_json(report))
    if not over.converged:
        raise NonConvergenceError("over-fitted IHR run did not converge; selections are tentative")
    return 0


def cmd_infer(args, cfg: RunConfig) -> int:
    from .baselines import ls_alternating_fit as _prelim
    from .inference import infer, select_tau

    series = read_series(args.input)
    if not args.fit:
        raise ValidationError("infer needs --fit DIR with R.csv, C.csv and F.csv")
    f = read_fit(args.fit)
    out = _outdir(args, cfg)
    tau = cfg.inference.tau
    if tau is None:
        tau = select_tau(series, _prelim(series, f.k1, f.k2))
    R0 = C0 = None
    if args.truth:
        from .normalization import normalize_fit

        t = Path(args.truth)
        from .io import read_factors_csv

        R0, C0, _, _ = normalize_fit(read_matrix_csv(t / "R0.csv"), read_matrix_csv(t / "C0.csv"),
                                     read_factors_csv(t / "F0.csv"))
    rep = infer(series, f, tau, alpha=cfg.inference.alpha, R0=R0, C0=C0)
    rows = []
    for side, recs in (("row", rep.rows), ("col", rep.cols)):
        for r in recs:
            if r.interval is None:
                continue
            est = (f.R if side == "row" else f.C)[r.index]
            for c in range(r.interval.shape[0]):
                row = dict(side=side, index=r.index + 1, coord=c + 1, estimate=float(est[c]),
                           lower=float(r.interval[c, 0]), upper=float(r.interval[c, 1]),
                           se=float(np.sqrt(r.cov[c, c])))
                if r.standardized is not None:
                    row["standardized"] = float(r.standardized[c])
                rows.append(row)
    _write(out / "intervals.csv", _rows_csv(rows))
    _write(out / "inference.json", _dump_json(rep.to_dict()))
    failed = [r.error for r in rep.rows + rep.cols if r.error]
    if failed and len(failed) == len(rep.rows) + len(rep.cols):
        from .errors import SingularCovarianceError

        raise SingularCovarianceError(failed[0])
    return 0


def cmd_validate(args, cfg: RunConfig) -> int:
    from .validation import rolling_validate

    series = read_series(args.input)
    out = _outdir(args, cfg)
    r = cfg.rolling
    opts = cfg.ihr.options() if cfg.method != "alpha_pca" else None
    rep = rolling_validate(series, r.bandwidth, r.horizon, cfg.ihr.k1, cfg.ihr.k2, cfg.method, opts)
    rows = [dict(window=w.window_index + 1, train_start=w.train_start + 1, train_stop=w.train_stop,
                 MSE=w.MSE, rho=w.rho, v="" if w.v is None else fmt_float(w.v)) for w in rep.windows]
    _write(out / "rolling.csv", _rows_csv(rows))
    _write(out / "rolling.json", _dump_json(rep.summary()))
    return 0


def cmd_bench(args, cfg: RunConfig) -> int:
    from .simulation import DgpParams, run_normality_study, run_table1, run_table3

    prof = BENCH_PROFILES[args.profile]
    reps = cfg.bench.reps or prof["reps"]
    seed = cfg.bench.master_seed if args.seed is None else args.seed
    threads = args.threads
    out = _outdir(args, cfg)
    t1 = []
    for setting in ("A", "B"):
        for dist in ("normal", "t5", "t3"):
            t1 += run_table1(setting, dist, max(reps, 2), ("ihr", "ls", "alpha_pca"),
                             prof["table1_T"], master_seed=seed, threads=threads)
    _write(out / "table1.csv", _rows_csv(t1))
    t3 = []
    for dist in ("normal", "t5", "t3"):
        t3 += run_table3("A", dist, reps, ("ihr_rm", "ihr_er", "alpha_pca_er"), prof["table3_T"],
                         master_seed=seed, threads=threads)
    _write(out / "table3.csv", _rows_csv(t3))
    summary = []
    for dist in ("normal", "t5", "t3"):
        res = run_normality_study(DgpParams(T=10, p1=100, p2=10, psi=0.0, error_dist=dist),
                                  reps=cfg.bench.reps or prof["normality_reps"], side="row",
                                  master_seed=seed, threads=threads)
        summary.append(dict(dist=dist, mean=res.mean, variance=res.variance,
                            ks_distance=res.ks_distance, dropped=res.dropped))
        _write(out / f"normality_{dist}_hist.csv", _rows_csv(res.histogram))
    _write(out / "normality.csv", _rows_csv(summary))
    _write(out / "manifest.json", _dump_json(_manifest("bench", cfg, {"profile": args.profile})))
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "ranks": cmd_ranks,
    "infer": cmd_infer,
    "validate": cmd_validate,
    "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfm", description="Robust matrix factor models via Iterative Huber Regression.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_input: bool):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--output-dir", dest="output_dir", help="directory for output files")
        sp.add_argument("--seed", type=int, help="overrides every seed in the config")
        sp.add_argument("--threads", type=int, default=1, help="worker processes for Monte Carlo loops")
        if needs_input:
            sp.add_argument("--input", required=True, help="MFM1 tensor or long CSV (t,i,j,value)")
            sp.add_argument("--method", choices=METHODS)
            sp.add_argument("--k1", type=int)
            sp.add_argument("--k2", type=int)

    sp = sub.add_parser("simulate", help="draw a data set from the simulation model")
    common(sp, False)
    sp.add_argument("--csv", action="store_true", help="also write the long CSV")
    for name, text in (("fit", "estimate loadings and factors"),
                       ("ranks", "select the numbers of row and column factors"),
                       ("validate", "rolling out-of-sample validation")):
        common(sub.add_parser(name, help=text), True)
    sp = sub.add_parser("infer", help="confidence intervals for loading rows and columns")
    common(sp, True)
    sp.add_argument("--fit", help="directory holding R.csv, C.csv and F.csv")
    sp.add_argument("--truth", help="directory holding R0.csv, C0.csv and F0.csv")
    sp = sub.add_parser("bench", help="Monte Carlo tables")
    common(sp, False)
    sp.add_argument("--profile", choices=PROFILES, default="smoke")
    return p


def _setup_logging() -> None:
    level = os.environ.get("MFM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        if args.threads < 1:
            raise ValidationError("--threads must be >= 1")
        cfg = _apply_overrides(args, load_config(args.config))
        return COMMANDS[args.command](args, cfg)
    except MFMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
