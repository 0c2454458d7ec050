"""Command-line entry point: ``tomadjust analyze | simulate | diagnose``.

Every command prints a JSON document (or writes it with ``--output``). Data
and estimator errors exit with status 1 and a structured ``errors`` record;
usage errors exit with status 2.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .diagnostics import diagnose
from .errors import BadConfig, TomAdjustError
from .estimators import DESIGN_ESTIMATORS
from .estimators.stratified import ANTI_CONSERVATIVE_NOTE
from .io import AnalysisConfig, ReportDocument, estimate_to_dict, file_digest, load_csv
from .simlab import long_csv, parse_preset, run_sweep
from .simlab.harness import DEFAULT_ESTIMATORS, canonical_flavor
from .simlab.presets import DESK_SEEDS

FLAVOR_CHOICES = ("hc0", "hc1", "hc2", "hc3", "neyman", "plugin", "pooled-residual")


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _names(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _data_arguments(p: argparse.ArgumentParser) -> None:
    p.add_argument("data", help="CSV file with a header row")
    p.add_argument("--config", help="JSON file with analysis settings; flags override it")
    p.add_argument("--design", choices=("CRE", "Stratified", "Survey", "Cluster"))
    p.add_argument("--outcome", help="outcome column (default y)")
    p.add_argument("--treatment", help="0/1 treatment column (default z)")
    p.add_argument("--covariates", type=_names, help="comma-separated covariate columns")
    p.add_argument("--x-prefix", dest="covariate_prefix", help="select covariates by name prefix (default x)")
    p.add_argument("--strata", help="stratum label column")
    p.add_argument("--cluster", help="cluster label column")
    p.add_argument("--cluster-covariates", type=_names, help="comma-separated cluster-level covariate columns")
    p.add_argument("--v", dest="v_columns", type=_names, help="comma-separated sampling-stage covariate columns")
    p.add_argument("--v-prefix", help="select sampling-stage covariates by name prefix")
    p.add_argument("--vbar", dest="v_bar", type=_floats, help="population means of the sampling covariates")
    p.add_argument("--vbar-file", dest="v_bar_file", help="CSV with one row of population means")
    p.add_argument("--f", type=float, help="sampling fraction for survey designs")
    p.add_argument("--alpha", type=float)
    p.add_argument("--output", "-o", help="write the JSON document here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tomadjust", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="estimate the average treatment effect from a CSV file")
    _data_arguments(a)
    a.add_argument("--estimator", action="append", dest="estimators", help="repeatable; default tom")
    a.add_argument("--se", action="append", dest="flavors", type=str.lower, choices=FLAVOR_CHOICES,
                   help="repeatable variance flavor; default all")

    d = sub.add_parser("diagnose", help="calibration-weight and leverage diagnostics")
    _data_arguments(d)

    s = sub.add_parser("simulate", help="run a Monte Carlo scenario")
    s.add_argument("--preset", required=True, help="scenario name such as cre:p0.3:k29:snr1=0.25:snr0=2")
    s.add_argument("--reps", type=int, help="replications per seed (default 1000)")
    seeds = s.add_mutually_exclusive_group()
    seeds.add_argument("--seed", type=int, help="single seed (default 1)")
    seeds.add_argument("--seeds", type=_ints, help="comma-separated seeds")
    seeds.add_argument("--seed-sweep", type=int, metavar="COUNT",
                       help=f"seeds 1..COUNT; desk default {len(DESK_SEEDS)}")
    s.add_argument("--estimator", action="append", dest="estimators")
    s.add_argument("--se", action="append", dest="flavors", type=str.lower, choices=FLAVOR_CHOICES)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--mode", choices=("random", "enumerate"), default="random")
    s.add_argument("--threads", type=int, help="worker threads (default TOMADJUST_THREADS or 1)")
    s.add_argument("--csv", help="write the long-format metrics table here")
    s.add_argument("--output", "-o", help="write the JSON document here instead of stdout")
    return parser


def _config(args, parser) -> AnalysisConfig:
    data = {}
    if args.config:
        try:
            data = AnalysisConfig.from_json(args.config).to_dict()
        except (OSError, BadConfig) as exc:
            parser.error(str(exc))
    for key in ("design", "outcome", "treatment", "covariates", "covariate_prefix", "strata", "cluster",
                "cluster_covariates", "v_columns", "v_prefix", "v_bar", "v_bar_file", "f", "alpha"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    if getattr(args, "covariates", None) is not None:
        data["covariate_prefix"] = None
    for key in ("estimators", "flavors"):
        val = getattr(args, key, None)
        if val:
            data[key] = val
    try:
        cfg = AnalysisConfig.from_dict(data)
    except BadConfig as exc:
        parser.error(str(exc))
    table = DESIGN_ESTIMATORS[cfg.design]
    unknown = [e for e in cfg.estimators if e not in table]
    if unknown:
        parser.error(f"unknown estimator(s) {unknown} for design {cfg.design}; choose from {sorted(table)}")
    bad = [f for f in cfg.flavors if f.lower() not in FLAVOR_CHOICES]
    if bad:
        parser.error(f"unknown variance flavor(s) {bad}; choose from {list(FLAVOR_CHOICES)}")
    return cfg


def _error_record(exc: Exception) -> dict:
    rec = {"type": type(exc).__name__, "message": str(exc)}
    for attr in ("row", "column"):
        if getattr(exc, attr, None) is not None:
            rec[attr] = getattr(exc, attr)
    return rec


def _emit(doc: ReportDocument, output: str | None) -> None:
    text = doc.to_json()
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _filter(report, flavors):
    """Keep only the requested flavors; return the ones the estimator does not offer."""
    if not flavors:
        return []
    want = [canonical_flavor(f) for f in flavors]
    for store in (report.variances, report.ci):
        for fl in list(store):
            if fl not in want:
                del store[fl]
    return [f for f in want if f not in report.variances]


def cmd_analyze(args, parser) -> int:
    cfg = _config(args, parser)
    doc = ReportDocument(kind="analysis", config=cfg.to_dict())
    try:
        doc.inputs = {"data": str(args.data), "digest": file_digest(args.data)}
        ds = load_csv(args.data, cfg)
    except (OSError, TomAdjustError) as exc:
        doc.errors.append(_error_record(exc))
        _emit(doc, args.output)
        print(f"tomadjust: {exc}", file=sys.stderr)
        return 1
    doc.inputs.update({"n": ds.n, "k": ds.k})
    status = 0
    for name in cfg.estimators:
        try:
            report = DESIGN_ESTIMATORS[cfg.design][name](ds, cfg.alpha)
        except TomAdjustError as exc:
            doc.errors.append({"estimator": name, **_error_record(exc)})
            print(f"tomadjust: {name}: {exc}", file=sys.stderr)
            status = 1
            continue
        for missing in _filter(report, cfg.flavors):
            doc.warnings.append(f"{name}: variance flavor {missing} is not available")
        if cfg.design == "Stratified" and {"HC0", "HC1"} & set(report.variances):
            doc.warnings.append(f"{name}: {ANTI_CONSERVATIVE_NOTE}")
        doc.estimates[name] = estimate_to_dict(report)
    _emit(doc, args.output)
    return status


def cmd_diagnose(args, parser) -> int:
    cfg = _config(args, parser)
    doc = ReportDocument(kind="diagnostics", config=cfg.to_dict())
    try:
        doc.inputs = {"data": str(args.data), "digest": file_digest(args.data)}
        ds = load_csv(args.data, cfg)
        rep = diagnose(ds, cfg.design)
    except (OSError, TomAdjustError) as exc:
        doc.errors.append(_error_record(exc))
        _emit(doc, args.output)
        print(f"tomadjust: {exc}", file=sys.stderr)
        return 1
    doc.inputs.update({"n": ds.n, "k": ds.k})
    doc.diagnostics = {
        "design": rep.design,
        "checks": rep.checks,
        "passed": rep.passed,
        "distance_tom": rep.distance_tom,
        "distance_lin": rep.distance_lin,
        "calib_tom": rep.calib_tom,
        "calib_lin": rep.calib_lin,
        "lev_tom": rep.lev_tom,
        "lev_lin": rep.lev_lin,
        "lev_closed_form": rep.lev_closed_form,
        "lev_hat_matrix": rep.lev_hat_matrix,
    }
    for check, ok in rep.checks.items():
        if not ok:
            doc.warnings.append(f"check failed: {check}")
    _emit(doc, args.output)
    return 0 if rep.passed else 1


def cmd_simulate(args, parser) -> int:
    overrides = {}
    if args.reps is not None:
        overrides["reps"] = args.reps
    try:
        cfg = parse_preset(args.preset, **overrides)
    except BadConfig as exc:
        parser.error(str(exc))
    if args.seeds:
        seeds = args.seeds
    elif args.seed_sweep:
        seeds = list(range(1, args.seed_sweep + 1))
    elif args.seed is not None:
        seeds = [args.seed]
    else:
        seeds = [cfg.seed]
    estimators = args.estimators or list(DEFAULT_ESTIMATORS[cfg.design])
    unknown = [e for e in estimators if e not in DESIGN_ESTIMATORS[cfg.design]]
    if unknown:
        parser.error(f"unknown estimator(s) {unknown} for design {cfg.design}")
    doc = ReportDocument(kind="simulation", config={"preset": args.preset, "reps": cfg.reps, "seeds": seeds,
                                                    "estimators": estimators, "mode": args.mode})
    try:
        summaries = run_sweep(cfg, seeds, estimators, args.flavors, mode=args.mode, alpha=args.alpha,
                              threads=args.threads)
    except TomAdjustError as exc:
        doc.errors.append(_error_record(exc))
        _emit(doc, args.output)
        print(f"tomadjust: {exc}", file=sys.stderr)
        return 1
    table = long_csv(summaries)
    if args.csv:
        Path(args.csv).write_text(table, encoding="utf-8")
    doc.simulation = {
        "scenario": summaries[0].scenario,
        "design": cfg.design,
        "runs": [
            {
                "seed": s.seed,
                "reps": s.reps,
                "tau": s.tau,
                "estimators": {
                    name: {
                        "reps_completed": es.reps_completed,
                        "errors": es.errors,
                        **({"rmse": es.rmse, "bias": es.bias} if es.reps_completed else {}),
                        "coverage": {fl: es.coverage(fl) for fl in es.flavors if es.reps_completed},
                        "mean_ci_length": {fl: es.mean_ci_length(fl) for fl in es.flavors if es.reps_completed},
                    }
                    for name, es in s.estimators.items()
                },
            }
            for s in summaries
        ],
    }
    _emit(doc, args.output)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"analyze": cmd_analyze, "diagnose": cmd_diagnose, "simulate": cmd_simulate}[args.command]
    return handler(args, parser)


if __name__ == "__main__":
    sys.exit(main())
