"""Experiment orchestration: simulation grids, overlap curves, the
verification suite, and report emission.

Replications are pure functions of a per-replication seed derived from
(master_seed, replication_index) through ``numpy.random.SeedSequence``, so
results are identical for any worker count and reproducible across
platforms.  Reports aggregate the error tau_hat - tau of every
(model spec, estimator, score) cell across replications into RMSE,
absolute bias, and standard deviation.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from multiprocessing import Pool

import numpy as np
from scipy.special import expit

from . import glm
from .dgp import DGPConfig, generate_coefficients, simulate_dataset, true_att
from .errors import InvalidInput, IoError
from .estimators import (EstimatorResult, Fallback, Method, TrimConfig,
                         apply_estimator, estimate_att_with_score)
from .overlap import (Assumption, LinkKind, LinkSpec, McConfig,
                      QuadratureConfig, confounding_bias_oracle, divergence_gap_check,
                      link_mean, efficiency_bound_gaussian,
                      overlap_divergence_exp_tilt,
                      overlap_divergence_indicator,
                      overlap_divergence_quadrature, overlap_divergence_relu)
from .scores import (Degeneracy, gamma_from_w, hyperbola_residual,
                     normalize_and_align, sample_orthocomplement)

THREADS_ENV = "DECONFSCORES_THREADS"
DEFAULT_W_GRID = tuple(round(k / 10, 1) for k in range(-10, 11))
REPORT_COLUMNS = ("setting", "outcome_penalty", "propensity_penalty",
                  "estimator", "score_label", "rmse", "abs_bias", "sd",
                  "n_runs", "fallback_count", "trim_total")


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class ExperimentConfig:
    dgp: DGPConfig = DGPConfig()
    model_grid: tuple = (("lasso", "lasso"),)
    w_grid: tuple = DEFAULT_W_GRID
    estimators: tuple = ("regr", "ipw", "aipw")
    replications: int = 100
    master_seed: int = 0
    trim: TrimConfig = TrimConfig()
    output_path: str | None = None
    threads: int = 0  # 0: use the environment default
    oracle_models: bool = False
    cv_folds: int = 10
    setting: str | None = None

    def __post_init__(self):
        if self.replications < 1:
            raise InvalidInput("need at least one replication")
        for w in self.w_grid:
            if not -1.0 <= float(w) <= 1.0:
                raise InvalidInput(f"w grid value {w} outside [-1, 1]")
        try:
            for pen_pair in self.model_grid:
                for pen in pen_pair:
                    glm.Penalty(pen)
            for m in self.estimators:
                Method(m)
        except ValueError as exc:
            raise InvalidInput(str(exc)) from None
        if not self.estimators:
            raise InvalidInput("at least one estimator is required")
        if self.setting and ("," in self.setting or "\n" in self.setting):
            raise InvalidInput("setting label cannot contain ',' or newlines")

    @property
    def setting_label(self) -> str:
        if self.setting:
            return self.setting
        return f"sT={self.dgp.s_T:g} sY={self.dgp.s_Y:g}"


@dataclass
class ReportCell:
    setting: str
    outcome_penalty: str
    propensity_penalty: str
    estimator: str
    score_label: str
    rmse: float
    abs_bias: float
    sd: float
    n_runs: int
    fallback_count: int
    trim_total: int


@dataclass
class ExperimentReport:
    cells: list


@dataclass
class CurvePoint:
    w: float
    b: float
    divergence: float
    method: str


@dataclass
class OverlapCurve:
    points: list


def _replicate(cfg: ExperimentConfig, rep: int):
    """Run one replication; returns (key, error, fell_back, trims) records."""
    ss = np.random.SeedSequence([cfg.master_seed, rep])
    data_seed, ortho_seed, cv_seed = ss.spawn(3)
    cv_ints = cv_seed.generate_state(2)
    coeffs = generate_coefficients(cfg.dgp.p, cfg.dgp.support, cfg.dgp.K,
                                   cfg.dgp.seed)
    data = simulate_dataset(replace(cfg.dgp, seed=data_seed), coeffs)
    tau = true_att(cfg.dgp)
    ctrl = data.treatment == 0
    methods = [Method(m) for m in cfg.estimators]
    records = []
    fitted = {}  # cache fits shared between model-grid rows
    for o_pen, p_pen in cfg.model_grid:
        if cfg.oracle_models:
            alpha_raw, beta_raw = coeffs.alpha, coeffs.beta
            m0_hat = data.oracle_m0
            e_hat = expit(cfg.dgp.beta0
                          + cfg.dgp.s_T * (data.design @ coeffs.beta))
        else:
            okey = ("outcome", o_pen)
            if okey not in fitted:
                fitted[okey] = glm.fit_glm(
                    data.design[ctrl], data.outcome[ctrl], glm.Family.LINEAR,
                    o_pen, glm.LambdaSpec.cv(folds=cfg.cv_folds,
                                             seed=int(cv_ints[0])))
            pkey = ("propensity", p_pen)
            if pkey not in fitted:
                fitted[pkey] = glm.fit_glm(
                    data.design, data.treatment, glm.Family.LOGISTIC,
                    p_pen, glm.LambdaSpec.cv(folds=cfg.cv_folds,
                                             seed=int(cv_ints[1])))
            alpha_raw = fitted[okey].coefficients
            beta_raw = fitted[pkey].coefficients
            m0_hat = glm.predict(fitted[okey], data.design)
            e_hat = glm.predict(fitted[pkey], data.design)

        raw = {}
        for meth in methods:
            tau_hat, trims = apply_estimator(data, meth, m0_hat, e_hat,
                                             cfg.trim)
            raw[meth] = EstimatorResult(tau_hat=tau_hat, method=meth,
                                        score_label="X", trim_count=trims)
            records.append(((o_pen, p_pen, meth.value, "X"),
                            tau_hat - tau, False, trims))

        if not cfg.w_grid:
            continue
        family = normalize_and_align(alpha_raw, beta_raw)
        ortho = None
        if family.degenerate == Degeneracy.OK:
            ortho = sample_orthocomplement(family, ortho_seed)
        for w in cfg.w_grid:
            label = f"w={float(w):g}"
            if family.degenerate == Degeneracy.NEAR_ZERO_COEFFICIENTS:
                for meth in methods:
                    base = raw[meth]
                    records.append(((o_pen, p_pen, meth.value, label),
                                    base.tau_hat - tau, True,
                                    base.trim_count))
                continue
            score = gamma_from_w(family, ortho, float(w))
            for meth in methods:
                res = estimate_att_with_score(
                    data, score, meth, trim_cfg=cfg.trim,
                    fallback_estimates=raw)
                records.append(((o_pen, p_pen, meth.value, label),
                                res.tau_hat - tau,
                                res.fallback != Fallback.NONE,
                                res.trim_count))
    return records


def _aggregate(cfg: ExperimentConfig, per_rep) -> ExperimentReport:
    errors = {}
    fallbacks = {}
    trims = {}
    for rep_records in per_rep:  # ordered by replication index
        for key, err, fell_back, trim_count in rep_records:
            errors.setdefault(key, []).append(err)
            fallbacks[key] = fallbacks.get(key, 0) + int(fell_back)
            trims[key] = trims.get(key, 0) + trim_count
    cells = []
    for key in sorted(errors):
        o_pen, p_pen, meth, label = key
        e = np.asarray(errors[key])
        cells.append(ReportCell(
            setting=cfg.setting_label,
            outcome_penalty=o_pen,
            propensity_penalty=p_pen,
            estimator=meth,
            score_label=label,
            rmse=float(np.sqrt(np.mean(e ** 2))),
            abs_bias=float(abs(e.mean())),
            sd=float(e.std(ddof=1)) if e.size > 1 else 0.0,
            n_runs=int(e.size),
            fallback_count=fallbacks[key],
            trim_total=trims[key]))
    cells.sort(key=lambda c: (c.setting, c.outcome_penalty,
                              c.propensity_penalty, c.estimator,
                              c.score_label))
    return ExperimentReport(cells=cells)


def run_simulation_grid(cfg: ExperimentConfig) -> ExperimentReport:
    """Run the full replication grid; deterministic for any thread count."""
    threads = cfg.threads if cfg.threads > 0 else default_threads()
    args = [(cfg, rep) for rep in range(cfg.replications)]
    if threads > 1:
        with Pool(threads) as pool:
            per_rep = pool.starmap(_replicate, args)
    else:
        per_rep = [_replicate(*a) for a in args]
    return _aggregate(cfg, per_rep)


def family_projection(c: float, w: float) -> float:
    """b = beta . gamma(w) for the family with inner product c, in closed
    form (no vectors needed)."""
    w1 = math.sqrt((2 * c + (1 - c) ** 2 * w * w / 2) / (1 + c))
    return w1 * math.sqrt((1 + c) / 2) + (1 - c) * w / 2


_CLOSED_FORMS = {
    LinkKind.INDICATOR: lambda link, b: overlap_divergence_indicator(
        link.z0, b),
    LinkKind.RELU: lambda link, b: overlap_divergence_relu(b),
    LinkKind.EXP_TILT: lambda link, b: overlap_divergence_exp_tilt(
        link.s, b),
}


def run_overlap_curve(link: LinkSpec, c: float, w_grid=DEFAULT_W_GRID,
                      pi1: float | None = None,
                      quad_cfg: QuadratureConfig = QuadratureConfig(),
                      output: str | None = None) -> OverlapCurve:
    """Divergence of the score family member at each grid w.

    Each point carries a method tag; closed-form values are emitted next
    to the quadrature values whenever the link has one, so the two routes
    can be cross-checked downstream.
    """
    if not 0 <= c < 1:
        raise InvalidInput("the family inner product c must lie in [0, 1)")
    points = []
    for w in w_grid:
        b = family_projection(c, float(w))
        points.append(CurvePoint(
            w=float(w), b=b,
            divergence=overlap_divergence_quadrature(b, link, pi1=pi1,
                                                     quad_cfg=quad_cfg),
            method="quadrature"))
        closed = _CLOSED_FORMS.get(link.kind)
        if closed is not None:
            points.append(CurvePoint(w=float(w), b=b,
                                     divergence=closed(link, b),
                                     method="closed_form"))
    curve = OverlapCurve(points=points)
    if output:
        write_overlap_curve_csv(curve, output)
    return curve


def write_overlap_curve_csv(curve: OverlapCurve, path: str) -> None:
    lines = ["w,b,divergence,method"]
    for pt in curve.points:
        lines.append(f"{pt.w!r},{pt.b!r},{pt.divergence!r},{pt.method}")
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _check(name, passed, observed):
    return {"name": name, "passed": bool(passed), "observed": observed}


def run_verification_suite(seed: int = 0) -> list:
    """Execute the analytic invariants as a machine-readable checklist.

    Failures are reported as data (passed=False), never raised.
    """
    checks = []
    rng = np.random.default_rng(seed)

    # family construction on a grid of (c, w)
    worst_res = 0.0
    worst_norm = 0.0
    worst_end = 0.0
    for c in (0.25, 0.5, 0.75):
        coeffs = generate_coefficients(10, range(10), c, seed)
        fam = normalize_and_align(coeffs.alpha, coeffs.beta)
        ortho = sample_orthocomplement(fam, seed + 1)
        for w in DEFAULT_W_GRID:
            g = gamma_from_w(fam, ortho, w)
            worst_res = max(worst_res, abs(hyperbola_residual(
                g.gamma, fam.alpha, fam.beta)))
            worst_norm = max(worst_norm, abs(np.linalg.norm(g.gamma) - 1))
        worst_end = max(
            worst_end,
            float(np.max(np.abs(gamma_from_w(fam, ortho, 1.0).gamma
                                - fam.beta))),
            float(np.max(np.abs(gamma_from_w(fam, ortho, -1.0).gamma
                                - fam.alpha))))
    checks.append(_check(
        "hyperbola_residual <= 1e-12 for 21 grid w values, 3 c values",
        worst_res <= 1e-12 and worst_norm <= 1e-12, worst_res))
    checks.append(_check("endpoints gamma(1)=beta, gamma(-1)=alpha to 1e-12",
                         worst_end <= 1e-12, worst_end))

    # confounding-bias oracle, c = 0.75, p = 5
    coeffs = generate_coefficients(5, range(5), 0.75, seed)
    fam = normalize_and_align(coeffs.alpha, coeffs.beta)
    ortho = sample_orthocomplement(fam, seed + 1)
    m_link = LinkSpec.identity()
    h_link = LinkSpec.logistic()
    worst_z = 0.0
    for w in (-1.0, -0.5, 0.0, 0.5, 1.0):
        g = gamma_from_w(fam, ortho, w)
        est, se = confounding_bias_oracle(fam.alpha, fam.beta, g.gamma,
                                          m_link, h_link,
                                          McConfig(seed=seed))
        worst_z = max(worst_z, abs(est) / se)
    checks.append(_check(
        "confounding bias within 4 SE of zero at family members",
        worst_z < 4.0, worst_z))
    u1 = fam.alpha + fam.beta
    u1 /= np.linalg.norm(u1)
    est, se = confounding_bias_oracle(fam.alpha, fam.beta, u1, m_link,
                                      h_link, McConfig(seed=seed))
    checks.append(_check("confounding bias at gamma=u1 exceeds 6 SE",
                         abs(est) > 6 * se, abs(est) / se))

    # closed forms vs quadrature
    grid = [k / 10 for k in range(11)]
    worst_ind = max(abs(overlap_divergence_quadrature(b, LinkSpec.indicator(0))
                        - overlap_divergence_indicator(0.0, b)) for b in grid)
    worst_rel = max(abs(overlap_divergence_quadrature(b, LinkSpec.relu())
                        - overlap_divergence_relu(b)) for b in grid)
    worst_exp = max(abs(overlap_divergence_quadrature(b, LinkSpec.exp_tilt(1))
                        - overlap_divergence_exp_tilt(1.0, b)) for b in grid)
    checks.append(_check("indicator quadrature vs closed form <= 1e-6",
                         worst_ind <= 1e-6, worst_ind))
    checks.append(_check("relu quadrature vs closed form <= 1e-6",
                         worst_rel <= 1e-6, worst_rel))
    checks.append(_check("exp_tilt quadrature vs closed form <= 1e-8",
                         worst_exp <= 1e-8, worst_exp))

    # monotonicity in |b| for all supported links
    pi1 = link_mean(LinkSpec.logistic())
    links = [(LinkSpec.logistic(Assumption.A6_PROPENSITY), pi1),
             (LinkSpec.exp_tilt(1.0), None),
             (LinkSpec.indicator(0.0), None),
             (LinkSpec.relu(), None)]
    min_diff = math.inf
    for link, lp in links:
        vals = [overlap_divergence_quadrature(b, link, pi1=lp) for b in grid]
        min_diff = min(min_diff, float(np.min(np.diff(vals))))
    checks.append(_check("divergence strictly increasing in b (all links)",
                         min_diff > 1e-9, min_diff))

    # conditional-variance identity for the exponential tilt
    ortho5 = sample_orthocomplement(fam, seed + 2)
    worst = 0.0
    lhs0 = None
    for b in (0.0, 0.5, 1.0):
        gamma = b * fam.beta + math.sqrt(1 - b * b) * ortho5
        lhs, rhs, se = divergence_gap_check(fam.beta, gamma, LinkSpec.exp_tilt(1.0),
                                    mc=McConfig(seed=seed))
        worst = max(worst, abs(lhs - rhs) - 4 * se)
        if b == 0.0:
            lhs0 = lhs
        if lhs < -1e-9:
            worst = math.inf
    checks.append(_check(
        "divergence gap equals expected conditional variance (4 SE)",
        worst <= 1e-9, worst))
    checks.append(_check("divergence gap at b=0 equals e - 1 to 1e-8",
                         abs(lhs0 - (math.e - 1)) <= 1e-8, lhs0))

    # efficiency bound sanity under randomized treatment
    est, se = efficiency_bound_gaussian(
        DGPConfig(s_T=0.0, s_Y=0.0, seed=seed), None,
        McConfig(samples=100_000, seed=seed))
    checks.append(_check("efficiency bound = 4 under randomized design",
                         abs(est - 4.0) <= 4 * se + 1e-9, est))

    # divergence minimized at the prognostic endpoint
    ok = True
    for c in (0.25, 0.5, 0.75):
        vals = [overlap_divergence_quadrature(
            family_projection(c, w), LinkSpec.logistic(
                Assumption.A6_PROPENSITY), pi1=pi1) for w in DEFAULT_W_GRID]
        ok = ok and int(np.argmin(vals)) == 0
    checks.append(_check("family divergence minimized at w=-1", ok, ok))
    return checks


def _format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_report(report: ExperimentReport, fmt: str = "csv") -> str:
    """Serialize a report; csv columns are fixed and ordering is stable."""
    if fmt == "csv":
        lines = [",".join(REPORT_COLUMNS)]
        for cell in report.cells:
            lines.append(",".join(_format_value(getattr(cell, col))
                                  for col in REPORT_COLUMNS))
        return "\n".join(lines) + "\n"
    if fmt == "json":
        cells = [{col: getattr(cell, col) for col in REPORT_COLUMNS}
                 for cell in report.cells]
        return json.dumps({"cells": cells}, indent=2) + "\n"
    raise InvalidInput(f"unknown report format {fmt!r}")


def emit_report(report: ExperimentReport, fmt: str = "csv",
                path: str | None = None) -> str:
    """Serialize a report and optionally write it; returns the text."""
    text = render_report(report, fmt)
    if path:
        try:
            with open(path, "w") as fh:
                fh.write(text)
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc
    return text


def parse_report_csv(text: str) -> ExperimentReport:
    """Re-parse an emitted CSV report (round-trip helper)."""
    lines = [ln for ln in text.strip().splitlines() if ln]
    if not lines or tuple(lines[0].split(",")) != REPORT_COLUMNS:
        raise InvalidInput("unrecognized report header")
    cells = []
    for ln in lines[1:]:
        vals = ln.split(",")
        cells.append(ReportCell(
            setting=vals[0], outcome_penalty=vals[1],
            propensity_penalty=vals[2], estimator=vals[3],
            score_label=vals[4], rmse=float(vals[5]),
            abs_bias=float(vals[6]), sd=float(vals[7]),
            n_runs=int(vals[8]), fallback_count=int(vals[9]),
            trim_total=int(vals[10])))
    return ExperimentReport(cells=cells)


def parse_report_json(text: str) -> ExperimentReport:
    data = json.loads(text)
    cells = [ReportCell(**cell) for cell in data["cells"]]
    return ExperimentReport(cells=cells)
