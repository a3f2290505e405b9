"""Overlap-divergence analytics under the standard Gaussian design.

For a scalar representation v = gamma'X with X ~ N(0, I_p), the overlap
divergence O(v) = E_control[(density ratio)^2] reduces to a one-dimensional
function g(u) of u = beta . gamma:

    g(u) = E_Z[ f( E_Z'[ h(u Z + sqrt(1 - u^2) Z') ] ) ]

with f(t) = t^2 when h is a normalized density ratio (the control density
times h integrates to one) and f(t) = ((1 - pi1)/pi1^2) t^2/(1 - t) when h
is the propensity itself.  This module evaluates g by nested Gauss-Hermite
quadrature, provides closed forms for the indicator and relu links, and
bundles the Monte Carlo oracles used to verify the zero-confounding-bias
construction, the conditional-variance identity, and the semiparametric
efficiency bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.integrate import quad
from scipy.special import expit, ndtr  # ndtr = standard normal CDF
from scipy.stats import norm

from .errors import InvalidInput, InvalidLink

CLAMP_A6 = 1e-12
ORACLE_GH_NODES = 64
MC_CHUNK = 100_000


class LinkKind(str, Enum):
    LOGISTIC = "logistic"
    INDICATOR = "indicator"
    RELU = "relu"
    EXP_TILT = "exp_tilt"
    IDENTITY = "identity"


class Assumption(str, Enum):
    A5_DENSITY_RATIO = "a5_density_ratio"
    A6_PROPENSITY = "a6_propensity"


@dataclass(frozen=True)
class LinkSpec:
    """A scalar link h applied to a Gaussian index, plus its role.

    Under the density-ratio assumption h is normalized internally so that
    E[h(Z)] = 1 for Z ~ N(0,1); under the propensity assumption h itself
    is the treatment probability and must take values in [0, 1).
    """

    kind: LinkKind
    assumption: Assumption = Assumption.A5_DENSITY_RATIO
    z0: float = 0.0
    s: float = 1.0
    loc: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.assumption == Assumption.A6_PROPENSITY and \
                self.kind != LinkKind.LOGISTIC:
            raise InvalidLink(
                f"{self.kind} is not a valid propensity link (values must "
                "stay in [0, 1))")
        if self.kind == LinkKind.EXP_TILT and not math.isfinite(self.s):
            raise InvalidLink("exp_tilt requires a finite tilt parameter")

    @staticmethod
    def logistic(assumption=Assumption.A5_DENSITY_RATIO,
                 loc: float = 0.0, scale: float = 1.0) -> "LinkSpec":
        return LinkSpec(LinkKind.LOGISTIC, assumption, loc=loc, scale=scale)

    @staticmethod
    def indicator(z0: float) -> "LinkSpec":
        return LinkSpec(LinkKind.INDICATOR, z0=float(z0))

    @staticmethod
    def relu() -> "LinkSpec":
        return LinkSpec(LinkKind.RELU)

    @staticmethod
    def exp_tilt(s: float) -> "LinkSpec":
        return LinkSpec(LinkKind.EXP_TILT, s=float(s))

    @staticmethod
    def identity() -> "LinkSpec":
        return LinkSpec(LinkKind.IDENTITY)


@dataclass(frozen=True)
class QuadratureConfig:
    outer_nodes: int = 128
    inner_nodes: int = 128

    def __post_init__(self):
        if self.outer_nodes < 8 or self.inner_nodes < 8:
            raise InvalidInput("quadrature needs at least 8 nodes per level")


@dataclass(frozen=True)
class McConfig:
    samples: int = 1_000_000
    seed: int = 0
    batch: int | None = None  # default: sqrt(samples) batches

    def __post_init__(self):
        if self.samples < 1_000:
            raise InvalidInput("Monte Carlo needs at least 1000 samples")

    @property
    def n_batches(self) -> int:
        return self.batch if self.batch else int(round(math.sqrt(self.samples)))


def _gh_nodes(n):
    """Nodes/weights for E[f(Z)], Z ~ N(0,1): sum w_k f(x_k)."""
    x, w = np.polynomial.hermite.hermgauss(n)
    return x * math.sqrt(2.0), w / math.sqrt(math.pi)


def link_eval(link: LinkSpec, z):
    """Evaluate the raw (unnormalized) link on an array of values."""
    z = np.asarray(z, dtype=float)
    if link.kind == LinkKind.LOGISTIC:
        return expit(link.loc + link.scale * z)
    if link.kind == LinkKind.INDICATOR:
        return (z <= link.z0).astype(float)
    if link.kind == LinkKind.RELU:
        return np.maximum(z, 0.0)
    if link.kind == LinkKind.EXP_TILT:
        return np.exp(link.s * z)
    return z  # identity


def link_mean(link: LinkSpec, gh_nodes: int = 128) -> float:
    """E[h(Z)] for Z ~ N(0,1), analytic where available."""
    if link.kind == LinkKind.INDICATOR:
        return float(ndtr(link.z0))
    if link.kind == LinkKind.RELU:
        return 1.0 / math.sqrt(2.0 * math.pi)
    if link.kind == LinkKind.EXP_TILT:
        return math.exp(link.s ** 2 / 2.0)
    if link.kind == LinkKind.IDENTITY:
        return 0.0
    x, w = _gh_nodes(gh_nodes)
    return float(w @ link_eval(link, x))


def _inner_mean(link: LinkSpec, mean, sd: float, gh_nodes: int):
    """E[h(mean + sd * Z')] for Z' ~ N(0,1), vectorized over mean.

    Exact for the indicator (Gaussian CDF), relu (censored-normal mean)
    and exponential-tilt (Gaussian MGF) links; Gauss-Hermite otherwise.
    """
    mean = np.asarray(mean, dtype=float)
    if sd == 0.0:
        return link_eval(link, mean)
    if link.kind == LinkKind.INDICATOR:
        return ndtr((link.z0 - mean) / sd)
    if link.kind == LinkKind.RELU:
        t = mean / sd
        return mean * ndtr(t) + sd * norm.pdf(t)
    if link.kind == LinkKind.EXP_TILT:
        return np.exp(link.s * mean + link.s ** 2 * sd ** 2 / 2.0)
    if link.kind == LinkKind.IDENTITY:
        return mean
    x, w = _gh_nodes(gh_nodes)
    return link_eval(link, mean[..., None] + sd * x) @ w


def overlap_divergence_quadrature(b: float, link: LinkSpec,
                                  pi1: float | None = None,
                                  quad_cfg: QuadratureConfig =
                                  QuadratureConfig()) -> float:
    """Evaluate g(|b|) by nested Gauss-Hermite quadrature.

    ``pi1`` is required under the propensity assumption (it is determined
    by the link and the treatment intercept, which this routine does not
    know); it is ignored for density-ratio links.
    """
    u = abs(float(b))
    if u > 1 + 1e-9:
        raise InvalidInput("b must lie in [-1, 1]")
    u = min(u, 1.0)
    sd = math.sqrt(max(1.0 - u * u, 0.0))
    if u == 1.0 and link.assumption == Assumption.A5_DENSITY_RATIO:
        # the inner law is degenerate and the outer integrand inherits any
        # discontinuity of h; use g(1) = E[h^2] / E[h]^2 directly
        mean = link_mean(link, quad_cfg.inner_nodes)
        if mean <= 0:
            raise InvalidLink(
                f"{link.kind} cannot be normalized to a density ratio")
        second = _inner_second_moment(link, np.zeros(1), 1.0,
                                      quad_cfg.inner_nodes)
        return float(second[0]) / mean ** 2
    x, w = _gh_nodes(quad_cfg.outer_nodes)
    inner = _inner_mean(link, u * x, sd, quad_cfg.inner_nodes)
    if link.assumption == Assumption.A6_PROPENSITY:
        if pi1 is None or not 0 < pi1 < 1:
            raise InvalidInput("propensity links require pi1 in (0, 1)")
        inner = np.minimum(inner, 1.0 - CLAMP_A6)
        vals = (1.0 - pi1) / pi1 ** 2 * inner ** 2 / (1.0 - inner)
    else:
        mean = link_mean(link, quad_cfg.inner_nodes)
        if mean <= 0:
            raise InvalidLink(
                f"{link.kind} cannot be normalized to a density ratio")
        vals = (inner / mean) ** 2
    return float(w @ vals)


def owens_t(h: float, a: float) -> float:
    """Owen's T function by adaptive quadrature.

    T(h, a) = (1/2pi) int_0^a exp(-h^2 (1+x^2)/2) / (1+x^2) dx, odd in a.
    """
    if a == 0.0:
        return 0.0
    if a < 0:
        return -owens_t(h, -a)
    val, _ = quad(lambda x: math.exp(-h * h * (1 + x * x) / 2) / (1 + x * x),
                  0.0, a, epsabs=1e-12, epsrel=1e-12)
    return val / (2.0 * math.pi)


def overlap_divergence_indicator(z0: float, b: float) -> float:
    """Closed-form divergence for the threshold link h(z) = 1{z <= z0}."""
    phi0 = float(ndtr(z0))
    if phi0 <= 0:
        raise InvalidInput("the indicator link has zero mass at this z0")
    a = math.sqrt(max(2.0 / (1.0 + b * b) - 1.0, 0.0))
    return (phi0 - 2.0 * owens_t(z0, a)) / phi0 ** 2


def overlap_divergence_relu(b: float) -> float:
    """Closed-form divergence for the relu link h(z) = max(z, 0)."""
    w = b * b
    return math.sqrt(1.0 - w * w) + math.pi / 2.0 * w + w * math.asin(w)


def overlap_divergence_exp_tilt(s: float, b: float) -> float:
    """Closed-form divergence for h(z) = exp(s z): g(b) = exp(b^2 s^2)."""
    return math.exp(b * b * s * s)


def _batch_stderr(values, n_batches: int) -> float:
    """Batch-means standard error of the mean of a long correlated-free
    sample; values beyond a whole number of batches are dropped."""
    size = values.shape[0] // n_batches
    means = values[:size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def _check_unit(v, name):
    v = np.asarray(v, dtype=float).ravel()
    if abs(np.linalg.norm(v) - 1.0) > 1e-8:
        raise InvalidInput(f"{name} must be a unit vector")
    return v


def confounding_bias_oracle(alpha, beta, gamma, m_link: LinkSpec,
                            h_link: LinkSpec, mc: McConfig = McConfig()):
    """Monte Carlo estimate of E[Cov(m(a'X), ratio(b'X) | g'X)] under P0.

    Draws X ~ N(0, I_p) and uses the fact that (alpha'X, beta'X) given
    gamma'X is jointly Gaussian: the conditional means are evaluated by
    one-dimensional Gauss-Hermite quadrature and the covariance accumulates
    as mean of m*ratio minus mean of the product of conditional means.
    Returns (estimate, batch-means standard error).
    """
    alpha = _check_unit(alpha, "alpha")
    beta = _check_unit(beta, "beta")
    gamma = _check_unit(gamma, "gamma")
    p = alpha.shape[0]
    if p < 2:
        raise InvalidInput("the oracle needs p >= 2")
    if h_link.assumption != Assumption.A5_DENSITY_RATIO:
        raise InvalidLink("the bias oracle uses density-ratio links")
    h_mean = link_mean(h_link)
    if h_mean <= 0:
        raise InvalidLink(f"{h_link.kind} cannot form a density ratio")
    ra = float(alpha @ gamma)
    rb = float(beta @ gamma)
    sa = math.sqrt(max(1.0 - ra * ra, 0.0))
    sb = math.sqrt(max(1.0 - rb * rb, 0.0))
    rng = np.random.default_rng(mc.seed)
    stats = np.empty(mc.samples)
    done = 0
    while done < mc.samples:
        m = min(MC_CHUNK, mc.samples - done)
        X = rng.standard_normal((m, p))
        a = X @ alpha
        b = X @ beta
        v = X @ gamma
        cond_m = _inner_mean(m_link, ra * v, sa, ORACLE_GH_NODES)
        cond_h = _inner_mean(h_link, rb * v, sb, ORACLE_GH_NODES) / h_mean
        stats[done:done + m] = (link_eval(m_link, a)
                                * link_eval(h_link, b) / h_mean
                                - cond_m * cond_h)
        done += m
    return float(stats.mean()), _batch_stderr(stats, mc.n_batches)


def divergence_gap_check(beta, gamma, h_link: LinkSpec,
                 quad_cfg: QuadratureConfig = QuadratureConfig(),
                 mc: McConfig = McConfig()):
    """Conditional-variance identity: O(X) - O(g'X) as an expected
    conditional variance of the density ratio.

    Returns (lhs, rhs, stderr): lhs from the quadrature divergences,
    rhs a Monte Carlo average of Var(ratio(beta'X) | gamma'X) using the
    analytic Gaussian conditional law.
    """
    beta = _check_unit(beta, "beta")
    gamma = _check_unit(gamma, "gamma")
    if h_link.assumption != Assumption.A5_DENSITY_RATIO:
        raise InvalidLink("the identity check uses density-ratio links")
    h_mean = link_mean(h_link)
    rb = float(beta @ gamma)
    sb = math.sqrt(max(1.0 - rb * rb, 0.0))
    lhs = (overlap_divergence_quadrature(1.0, h_link, quad_cfg=quad_cfg)
           - overlap_divergence_quadrature(rb, h_link, quad_cfg=quad_cfg))
    rng = np.random.default_rng(mc.seed)
    stats = np.empty(mc.samples)
    done = 0
    while done < mc.samples:
        m = min(MC_CHUNK, mc.samples - done)
        v = rng.standard_normal(m)
        mu1 = _inner_mean(h_link, rb * v, sb, ORACLE_GH_NODES) / h_mean
        mu2 = _inner_second_moment(h_link, rb * v, sb,
                                   ORACLE_GH_NODES) / h_mean ** 2
        stats[done:done + m] = mu2 - mu1 ** 2
        done += m
    return lhs, float(stats.mean()), _batch_stderr(stats, mc.n_batches)


def _inner_second_moment(link: LinkSpec, mean, sd: float, gh_nodes: int):
    """E[h(mean + sd Z')^2], exact where the square has a known form."""
    mean = np.asarray(mean, dtype=float)
    if sd == 0.0:
        return link_eval(link, mean) ** 2
    if link.kind == LinkKind.INDICATOR:
        return _inner_mean(link, mean, sd, gh_nodes)  # h^2 = h
    if link.kind == LinkKind.EXP_TILT:
        return _inner_mean(LinkSpec.exp_tilt(2.0 * link.s), mean, sd,
                           gh_nodes)
    if link.kind == LinkKind.RELU:
        t = mean / sd
        return ((mean ** 2 + sd ** 2) * ndtr(t)
                + mean * sd * norm.pdf(t))
    x, w = _gh_nodes(gh_nodes)
    return link_eval(link, mean[..., None] + sd * x) ** 2 @ w


def efficiency_bound_gaussian(dgp, gamma=None, mc: McConfig = McConfig()):
    """Semiparametric efficiency bound for the linear-Gaussian design.

    Evaluates both terms of V_eff for the raw covariates (gamma absent) or
    for the scalar representation gamma'X, by Monte Carlo over the
    representation with analytic inner conditional moments.  Valid for
    gamma inside the deconfounding family, where the conditional outcome
    variance 1 + s_Y^2 (1 - (alpha.gamma)^2) holds in both arms and the
    conditional effect is constant.  Returns (estimate, stderr).
    """
    from .dgp import generate_coefficients  # deferred: avoid import cycle

    gh_x, gh_w = _gh_nodes(ORACLE_GH_NODES)
    prop = lambda z: expit(dgp.beta0 + dgp.s_T * z)
    pi1 = float(gh_w @ prop(gh_x))
    rng = np.random.default_rng(mc.seed)
    coeffs = generate_coefficients(dgp.p, dgp.support, dgp.K, dgp.seed)
    stats = np.empty(mc.samples)
    done = 0
    if gamma is None:
        while done < mc.samples:
            m = min(MC_CHUNK, mc.samples - done)
            b = rng.standard_normal(m)
            e = prop(b)
            ratio = e / (1 - e) * (1 - pi1) / pi1
            stats[done:done + m] = (e / pi1 ** 2
                                    + ratio ** 2 * (1 - e) / (1 - pi1) ** 2)
            done += m
    else:
        gamma = _check_unit(gamma, "gamma")
        ra = float(coeffs.alpha @ gamma)
        rb = float(coeffs.beta @ gamma)
        sb = math.sqrt(max(1.0 - rb * rb, 0.0))
        var_y = 1.0 + dgp.s_Y ** 2 * (1.0 - ra * ra)
        while done < mc.samples:
            m = min(MC_CHUNK, mc.samples - done)
            v = rng.standard_normal(m)
            e = prop(rb * v[:, None] + sb * gh_x) @ gh_w
            e = np.clip(e, 1e-300, 1 - CLAMP_A6)
            ratio = e / (1 - e) * (1 - pi1) / pi1
            stats[done:done + m] = var_y * (
                e / pi1 ** 2 + ratio ** 2 * (1 - e) / (1 - pi1) ** 2)
            done += m
    return float(stats.mean()), _batch_stderr(stats, mc.n_batches)


def overlap_divergence_empirical(scores_control, scores_treated,
                                 bins: int = 50) -> float:
    """Histogram estimate of the squared-density-ratio mean on a score.

    Bin edges are equal-mass quantiles of the control sample with the two
    outer edges opened to infinity; the estimate is sum over bins of
    (treated mass)^2 / (control mass).  Diagnostic only.
    """
    c = np.asarray(scores_control, dtype=float).ravel()
    t = np.asarray(scores_treated, dtype=float).ravel()
    if c.size == 0 or t.size == 0:
        raise InvalidInput("both samples must be nonempty")
    if t.min() > c.max() or t.max() < c.min():
        return math.inf
    edges = np.quantile(c, np.linspace(0, 1, bins + 1))
    edges[0], edges[-1] = -math.inf, math.inf
    p0 = np.histogram(c, edges)[0] / c.size
    p1 = np.histogram(t, edges)[0] / t.size
    if np.any((p0 == 0) & (p1 > 0)):
        return math.inf
    keep = p0 > 0
    return float(np.sum(p1[keep] ** 2 / p0[keep]))
