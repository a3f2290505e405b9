"""Command-line interface.

Subcommands:

* ``simulate``       run a replication grid described by a TOML config
* ``estimate``       one ATT estimate from a CSV dataset
* ``overlap-curve``  divergence along a score family, as CSV
* ``verify``         run the analytic self-checks

Exit codes: 0 success, 1 configuration error, 2 data error,
3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - python < 3.11
    import tomli as tomllib

from . import glm
from .dataio import load_dataset_csv
from .dgp import DGPConfig
from .errors import (DeconfError, InvalidInput, InvalidLink, IoError,
                     ParseError, SchemaError)
from .estimators import (Method, ModelSpec, TrimConfig,
                         estimate_att_with_score)
from .harness import (DEFAULT_W_GRID, ExperimentConfig, emit_report,
                      parse_report_csv, parse_report_json, run_overlap_curve,
                      run_simulation_grid, run_verification_suite,
                      write_overlap_curve_csv)
from .overlap import Assumption, LinkSpec, QuadratureConfig
from .scores import gamma_from_w, normalize_and_align, sample_orthocomplement

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_VERIFY = 3

_CONFIG_ERRORS = (InvalidInput, InvalidLink, tomllib.TOMLDecodeError,
                  ValueError, KeyError, TypeError)
_DATA_ERRORS = (SchemaError, ParseError, IoError, FileNotFoundError,
                IsADirectoryError, PermissionError)


class _Parser(argparse.ArgumentParser):
    """Argument parser that raises instead of calling sys.exit."""

    def error(self, message):
        raise InvalidInput(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="deconfscores",
                     description="Deconfounding-score ATT estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a simulation grid")
    sim.add_argument("--config", required=True,
                     help="TOML experiment description")
    sim.add_argument("--output", help="write the report here")
    sim.add_argument("--format", choices=("csv", "json"), default=None)
    sim.add_argument("--replications", type=int, default=None)
    sim.add_argument("--seed", type=int, default=None,
                     help="override the master seed")
    sim.add_argument("--threads", type=int, default=None)

    est = sub.add_parser("estimate", help="estimate the ATT from a CSV file")
    est.add_argument("--data", required=True, help="input dataset CSV")
    est.add_argument("--method", choices=[m.value for m in Method],
                     default=Method.AIPW.value)
    est.add_argument("--w", type=float, default=None,
                     help="score coordinate in [-1, 1]; omit to use the "
                          "raw covariates")
    est.add_argument("--outcome-penalty",
                     choices=[p.value for p in glm.Penalty], default="lasso")
    est.add_argument("--propensity-penalty",
                     choices=[p.value for p in glm.Penalty], default="lasso")
    est.add_argument("--seed", type=int, default=0,
                     help="seed for cross-validation folds and the "
                          "orthogonal draw")
    est.add_argument("--cv-folds", type=int, default=10)
    est.add_argument("--trim-epsilon", type=float, default=None)
    est.add_argument("--json", action="store_true",
                     help="emit the result as JSON")

    cur = sub.add_parser("overlap-curve",
                         help="divergence along a score family")
    cur.add_argument("--link", required=True,
                     choices=("logistic", "indicator", "relu", "exp_tilt"))
    cur.add_argument("--assumption", choices=("a5", "a6"), default="a5")
    cur.add_argument("--c", type=float, required=True,
                     help="inner product of the family directions")
    cur.add_argument("--z0", type=float, default=0.0,
                     help="indicator threshold")
    cur.add_argument("--s", type=float, default=1.0,
                     help="exponential tilt rate")
    cur.add_argument("--scale", type=float, default=1.0,
                     help="logistic index scale")
    cur.add_argument("--loc", type=float, default=0.0,
                     help="logistic index offset")
    cur.add_argument("--pi1", type=float, default=None,
                     help="treated fraction (a6 only; default: implied "
                          "by the link)")
    cur.add_argument("--nodes", type=int, default=128,
                     help="quadrature nodes per dimension")
    cur.add_argument("--w-grid", type=float, nargs="+", default=None)
    cur.add_argument("--output", help="write the curve CSV here")

    emi = sub.add_parser("emit", help="re-serialize an existing report")
    emi.add_argument("--input", required=True, help="report file (csv or "
                     "json, detected from the content)")
    emi.add_argument("--format", choices=("csv", "json"), default="csv")
    emi.add_argument("--output", help="write here instead of stdout")

    ver = sub.add_parser("verify", help="run the analytic self-checks")
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--json", action="store_true")
    return parser


def _experiment_from_toml(path: str, args):
    """Build (ExperimentConfig, output format) from a TOML file + flags."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    dgp = DGPConfig(**raw.pop("dgp", {}))
    kwargs = {"dgp": dgp}
    if "model_grid" in raw:
        kwargs["model_grid"] = tuple(
            (str(o), str(p)) for o, p in raw.pop("model_grid"))
    for key in ("w_grid", "estimators"):
        if key in raw:
            kwargs[key] = tuple(raw.pop(key))
    for key in ("replications", "master_seed", "threads", "oracle_models",
                "cv_folds", "setting", "output_path"):
        if key in raw:
            kwargs[key] = raw.pop(key)
    if "trim_epsilon" in raw:
        kwargs["trim"] = TrimConfig(epsilon=float(raw.pop("trim_epsilon")))
    fmt = raw.pop("format", None)
    if raw:
        raise InvalidInput(
            f"unknown config keys: {', '.join(sorted(raw))}")
    if args.replications is not None:
        kwargs["replications"] = args.replications
    if args.seed is not None:
        kwargs["master_seed"] = args.seed
    if args.threads is not None:
        kwargs["threads"] = args.threads
    if args.output is not None:
        kwargs["output_path"] = args.output
    cfg = ExperimentConfig(**kwargs)
    return cfg, (args.format or fmt or "csv")


def _cmd_simulate(args) -> int:
    cfg, fmt = _experiment_from_toml(args.config, args)
    report = run_simulation_grid(cfg)
    text = emit_report(report, fmt=fmt, path=cfg.output_path)
    if not cfg.output_path:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_estimate(args) -> int:
    dataset = load_dataset_csv(args.data)
    trim = (TrimConfig(epsilon=args.trim_epsilon)
            if args.trim_epsilon is not None else TrimConfig())
    lam = glm.LambdaSpec.cv(folds=args.cv_folds, seed=args.seed)
    spec = ModelSpec(outcome_penalty=glm.Penalty(args.outcome_penalty),
                     propensity_penalty=glm.Penalty(args.propensity_penalty),
                     outcome_lambda=lam, propensity_lambda=lam)
    score = None
    if args.w is not None:
        if not -1.0 <= args.w <= 1.0:
            raise InvalidInput("--w must lie in [-1, 1]")
        ctrl = dataset.treatment == 0
        outcome_fit = glm.fit_glm(dataset.design[ctrl], dataset.outcome[ctrl],
                                  glm.Family.LINEAR, spec.outcome_penalty,
                                  spec.outcome_lambda)
        prop_fit = glm.fit_glm(dataset.design, dataset.treatment,
                               glm.Family.LOGISTIC, spec.propensity_penalty,
                               spec.propensity_lambda)
        family = normalize_and_align(outcome_fit.coefficients,
                                     prop_fit.coefficients)
        ortho = sample_orthocomplement(family, args.seed)
        score = gamma_from_w(family, ortho, args.w)
    result = estimate_att_with_score(dataset, score, Method(args.method),
                                     glm_config=spec, trim_cfg=trim)
    payload = {"tau_hat": result.tau_hat, "method": result.method.value,
               "score_label": result.score_label,
               "fallback": result.fallback.value,
               "trim_count": result.trim_count,
               "slope_capped": result.slope_capped}
    if args.json:
        sys.stdout.write(json.dumps(payload, indent=2) + "\n")
    else:
        sys.stdout.write(f"tau_hat={result.tau_hat!r} "
                         f"method={result.method.value} "
                         f"score={result.score_label} "
                         f"fallback={result.fallback.value} "
                         f"trimmed={result.trim_count}\n")
    return EXIT_OK


def _cmd_overlap_curve(args) -> int:
    assumption = (Assumption.A6_PROPENSITY if args.assumption == "a6"
                  else Assumption.A5_DENSITY_RATIO)
    if args.link == "logistic":
        link = LinkSpec.logistic(assumption, loc=args.loc, scale=args.scale)
    elif args.link == "indicator":
        link = LinkSpec.indicator(args.z0)
    elif args.link == "relu":
        link = LinkSpec.relu()
    else:
        link = LinkSpec.exp_tilt(args.s)
    if args.assumption == "a6" and args.link != "logistic":
        raise InvalidLink("the propensity-based divergence requires the "
                          "logistic link")
    grid = tuple(args.w_grid) if args.w_grid else DEFAULT_W_GRID
    quad = QuadratureConfig(outer_nodes=args.nodes, inner_nodes=args.nodes)
    curve = run_overlap_curve(link, args.c, w_grid=grid, pi1=args.pi1,
                              quad_cfg=quad)
    if args.output:
        write_overlap_curve_csv(curve, args.output)
    else:
        sys.stdout.write("w,b,divergence,method\n")
        for pt in curve.points:
            sys.stdout.write(
                f"{pt.w!r},{pt.b!r},{pt.divergence!r},{pt.method}\n")
    return EXIT_OK


def _cmd_emit(args) -> int:
    with open(args.input) as fh:
        text = fh.read()
    try:
        if text.lstrip().startswith("{"):
            report = parse_report_json(text)
        else:
            report = parse_report_csv(text)
    except (InvalidInput, ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"cannot parse report {args.input}: {exc}") from exc
    out = emit_report(report, fmt=args.format, path=args.output)
    if not args.output:
        sys.stdout.write(out)
    return EXIT_OK


def _cmd_verify(args) -> int:
    checks = run_verification_suite(seed=args.seed)
    failed = [c for c in checks if not c["passed"]]
    if args.json:
        sys.stdout.write(json.dumps(checks, indent=2, default=str) + "\n")
    else:
        for c in checks:
            mark = "PASS" if c["passed"] else "FAIL"
            sys.stdout.write(f"{mark}  {c['name']} "
                             f"(observed: {c['observed']})\n")
        sys.stdout.write(f"{len(checks) - len(failed)}/{len(checks)} "
                         f"checks passed\n")
    return EXIT_VERIFY if failed else EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "overlap-curve": _cmd_overlap_curve,
    "emit": _cmd_emit,
    "verify": _cmd_verify,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _DATA_ERRORS as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_DATA
    except _CONFIG_ERRORS as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except DeconfError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
