"""ATT estimators on raw covariates or on a scalar deconfounding score.

Three estimators of the average treatment effect on the treated: outcome
regression, Hajek-normalized inverse propensity weighting, and Hajek AIPW.
Propensities are trimmed away from 1 before weighting.  When a scalar
score is supplied, nuisance models are refit on it without regularization
(OLS outcome on controls, Newton-Raphson logistic propensity); degenerate
scores fall back to the raw-covariate estimate with a flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import expit

from . import glm
from .errors import (DegenerateTreatmentArm, DegenerateWeights, InvalidInput)
from .scores import DeconfoundingScore, Degeneracy, project_score

TRIM_EPSILON = 2.220446e-16
SLOPE_CAP = 30.0
NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 100


class Method(str, Enum):
    REGR = "regr"
    IPW = "ipw"
    AIPW = "aipw"


class Fallback(str, Enum):
    NONE = "none"
    ZERO_COEFFICIENTS = "zero_coefficients"
    ZERO_VARIANCE = "zero_variance"


@dataclass(frozen=True)
class TrimConfig:
    """Propensity trimming threshold: e is clamped to 1 - epsilon."""

    epsilon: float = TRIM_EPSILON

    def __post_init__(self):
        if not 0 < self.epsilon < 0.5:
            raise InvalidInput("trim epsilon must lie in (0, 0.5)")


@dataclass
class Dataset:
    """Observed data: covariates, binary treatment, outcome.

    Oracle outcome surfaces may be attached by simulations or loaded from
    semi-synthetic files; they are optional and never required by the
    estimators themselves.
    """

    design: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    oracle_m0: np.ndarray | None = None
    oracle_m1: np.ndarray | None = None

    def __post_init__(self):
        self.design = glm.validate_design(self.design)
        n = self.design.shape[0]
        t = np.asarray(self.treatment, dtype=float).ravel()
        if t.shape[0] != n or not np.all((t == 0) | (t == 1)):
            raise InvalidInput("treatment must be a 0/1 vector of length n")
        self.treatment = t
        y = np.asarray(self.outcome, dtype=float).ravel()
        if y.shape[0] != n or not np.all(np.isfinite(y)):
            raise InvalidInput("outcome must be a finite vector of length n")
        self.outcome = y
        if t.sum() == 0 or t.sum() == n:
            raise DegenerateTreatmentArm("both treatment arms must be present")


@dataclass
class EstimatorResult:
    tau_hat: float
    method: Method
    score_label: str
    fallback: Fallback = Fallback.NONE
    trim_count: int = 0
    slope_capped: bool = False


@dataclass(frozen=True)
class ModelSpec:
    """Penalized models used on the full covariate design."""

    outcome_penalty: glm.Penalty = glm.Penalty.LASSO
    propensity_penalty: glm.Penalty = glm.Penalty.LASSO
    outcome_lambda: glm.LambdaSpec = field(
        default_factory=glm.LambdaSpec.cv)
    propensity_lambda: glm.LambdaSpec = field(
        default_factory=glm.LambdaSpec.cv)


def att_regression(dataset: Dataset, m0_hat) -> float:
    """Plug-in ATT: treated mean of Y minus treated mean of m0_hat."""
    m0_hat = np.asarray(m0_hat, dtype=float).ravel()
    t = dataset.treatment
    if m0_hat.shape != t.shape or not np.all(np.isfinite(m0_hat)):
        raise InvalidInput("m0_hat must be a finite vector of length n")
    treated = t == 1
    return float(np.mean(dataset.outcome[treated] - m0_hat[treated]))


def trim_propensity(e_hat, cfg: TrimConfig):
    """Clamp propensities with 1 - e < epsilon; returns (trimmed, count)."""
    e = np.asarray(e_hat, dtype=float).ravel()
    if np.any(e < 0) or np.any(e > 1):
        raise InvalidInput("propensities must lie in [0, 1]")
    hit = 1 - e < cfg.epsilon
    out = np.where(hit, 1 - cfg.epsilon, e)
    return out, int(hit.sum())


def _hajek_contrast(dataset: Dataset, residual, e_hat, cfg: TrimConfig,
                    hajek: bool = True):
    """Treated mean of residual minus odds-weighted control mean."""
    e, count = trim_propensity(e_hat, cfg)
    t = dataset.treatment
    treated = t == 1
    control = ~treated
    w = e[control] / (1 - e[control])
    denom = w.sum() if hajek else treated.sum()
    if denom == 0:
        raise DegenerateWeights("all control weights vanished")
    lhs = residual[treated].sum() / treated.sum()
    rhs = (w * residual[control]).sum() / denom
    return float(lhs - rhs), count


def att_ipw_hajek(dataset: Dataset, e_hat, cfg: TrimConfig = TrimConfig(),
                  hajek: bool = True) -> float:
    """Inverse propensity weighted ATT with Hajek normalization."""
    tau, _ = _hajek_contrast(dataset, dataset.outcome, e_hat, cfg, hajek)
    return tau


def att_aipw_hajek(dataset: Dataset, e_hat, m0_hat,
                   cfg: TrimConfig = TrimConfig(),
                   hajek: bool = True) -> float:
    """Augmented IPW ATT: the Hajek contrast applied to Y - m0_hat."""
    m0_hat = np.asarray(m0_hat, dtype=float).ravel()
    if m0_hat.shape != dataset.treatment.shape:
        raise InvalidInput("m0_hat length does not match the data")
    tau, _ = _hajek_contrast(dataset, dataset.outcome - m0_hat, e_hat, cfg,
                             hajek)
    return tau


def _ols_line(x, y):
    """Least-squares intercept and slope of y on a scalar x."""
    xbar = x.mean()
    ybar = y.mean()
    sxx = np.sum((x - xbar) ** 2)
    slope = np.sum((x - xbar) * (y - ybar)) / sxx
    return ybar - slope * xbar, slope


def _logistic_line(x, t, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER,
                   cap=SLOPE_CAP):
    """Newton-Raphson logistic fit of t on a scalar x.

    Returns (intercept, slope, capped).  Separable data drives the slope
    to infinity; it is clamped at +-cap and the intercept re-optimized,
    since downstream trimming neutralizes the resulting probabilities.
    """
    pbar = t.mean()
    b0 = float(np.log(pbar / (1 - pbar)))
    b1 = 0.0
    capped = False
    for _ in range(max_iter):
        eta = b0 + b1 * x
        p = expit(eta)
        wv = p * (1 - p)
        g0 = np.sum(t - p)
        g1 = np.sum((t - p) * x)
        h00 = wv.sum()
        h01 = np.sum(wv * x)
        h11 = np.sum(wv * x * x)
        det = h00 * h11 - h01 * h01
        if det <= 0 or not np.isfinite(det):
            break
        d0 = (h11 * g0 - h01 * g1) / det
        d1 = (h00 * g1 - h01 * g0) / det
        b0 += d0
        b1 += d1
        if abs(b1) > cap:
            b1 = cap if b1 > 0 else -cap
            capped = True
            break
        if max(abs(d0), abs(d1)) < tol:
            break
    if capped:
        for _ in range(max_iter):
            p = expit(b0 + b1 * x)
            h = np.sum(p * (1 - p))
            if h <= 0:
                break
            d0 = np.sum(t - p) / h
            b0 += d0
            if abs(d0) < tol:
                break
    return b0, b1, capped


def _score_nuisances(svec, dataset: Dataset, method: Method):
    """Unpenalized 1-D nuisance fits on the score; returns (m0, e, capped)."""
    t = dataset.treatment
    m0_hat = None
    e_hat = None
    capped = False
    if method in (Method.REGR, Method.AIPW):
        ctrl = t == 0
        a, b = _ols_line(svec[ctrl], dataset.outcome[ctrl])
        m0_hat = a + b * svec
    if method in (Method.IPW, Method.AIPW):
        b0, b1, capped = _logistic_line(svec, t)
        e_hat = expit(b0 + b1 * svec)
    return m0_hat, e_hat, capped


def _design_nuisances(dataset: Dataset, method: Method, spec: ModelSpec):
    """Penalized nuisance fits on the full design; returns (m0, e)."""
    t = dataset.treatment
    m0_hat = None
    e_hat = None
    if method in (Method.REGR, Method.AIPW):
        ctrl = t == 0
        model = glm.fit_glm(dataset.design[ctrl], dataset.outcome[ctrl],
                            glm.Family.LINEAR, spec.outcome_penalty,
                            spec.outcome_lambda)
        m0_hat = glm.predict(model, dataset.design)
    if method in (Method.IPW, Method.AIPW):
        model = glm.fit_glm(dataset.design, t, glm.Family.LOGISTIC,
                            spec.propensity_penalty, spec.propensity_lambda)
        e_hat = glm.predict(model, dataset.design)
    return m0_hat, e_hat


def apply_estimator(dataset: Dataset, method: Method, m0_hat, e_hat,
                    cfg: TrimConfig = TrimConfig()):
    """Run one estimator on precomputed nuisances.

    Returns (tau_hat, trim_count).  Only the nuisances the method uses
    need to be supplied.
    """
    method = Method(method)
    if method == Method.REGR:
        return att_regression(dataset, m0_hat), 0
    residual = dataset.outcome if method == Method.IPW \
        else dataset.outcome - np.asarray(m0_hat, dtype=float).ravel()
    return _hajek_contrast(dataset, residual, e_hat, cfg)


def estimate_att_with_score(dataset: Dataset,
                            score: DeconfoundingScore | None,
                            method: Method,
                            glm_config: ModelSpec = ModelSpec(),
                            trim_cfg: TrimConfig = TrimConfig(),
                            fallback_estimates: dict | None = None
                            ) -> EstimatorResult:
    """Run one ATT estimator, on the raw design or on a scalar score.

    Without a score, nuisance models are fit on the full design per
    ``glm_config``.  With a score, one-dimensional unpenalized refits are
    used instead; a score built from near-zero coefficients, or one with
    zero empirical variance (overall, or among controls when an outcome
    model is needed), falls back to the raw-covariate estimate.  The
    ``fallback_estimates`` map (method -> EstimatorResult) short-circuits
    recomputing that estimate.
    """
    method = Method(method)
    if score is None:
        m0_hat, e_hat = _design_nuisances(dataset, method, glm_config)
        tau, trims = apply_estimator(dataset, method, m0_hat, e_hat, trim_cfg)
        return EstimatorResult(tau_hat=tau, method=method, score_label="X",
                               trim_count=trims)

    label = f"w={score.w:g}"
    fallback = Fallback.NONE
    if score.family.degenerate == Degeneracy.NEAR_ZERO_COEFFICIENTS:
        fallback = Fallback.ZERO_COEFFICIENTS
    else:
        svec = project_score(score.gamma, dataset.design)
        ctrl = dataset.treatment == 0
        needs_outcome = method in (Method.REGR, Method.AIPW)
        if svec.min() == svec.max() or (
                needs_outcome and svec[ctrl].min() == svec[ctrl].max()):
            fallback = Fallback.ZERO_VARIANCE

    if fallback != Fallback.NONE:
        base = None
        if fallback_estimates is not None:
            base = fallback_estimates.get(method)
        if base is None:
            base = estimate_att_with_score(dataset, None, method, glm_config,
                                           trim_cfg)
        return EstimatorResult(tau_hat=base.tau_hat, method=method,
                               score_label=label, fallback=fallback,
                               trim_count=base.trim_count)

    m0_hat, e_hat, capped = _score_nuisances(svec, dataset, method)
    tau, trims = apply_estimator(dataset, method, m0_hat, e_hat, trim_cfg)
    return EstimatorResult(tau_hat=tau, method=method, score_label=label,
                           trim_count=trims, slope_capped=capped)
