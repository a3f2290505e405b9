"""Synthetic data generation for the linear-Gaussian benchmark design.

Covariates are standard normal, treatment follows a logistic model in a
sparse direction beta, and the outcome is linear in a sparse direction
alpha with a constant additive effect:

    X ~ N(0, I_p)
    T ~ Bernoulli(logit^-1(beta0 + s_T X'beta))
    Y ~ N(alpha0 + s_Y X'alpha + tau T, 1)

Larger s_T weakens overlap; larger s_Y raises the outcome signal.  The
coefficient pair shares a support set and has a prescribed inner product,
built by Gram-Schmidt from two Gaussian draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DegenerateDesign, DegenerateTreatmentArm, InvalidInput
from .estimators import Dataset

MAX_REDRAWS = 100


@dataclass(frozen=True)
class DGPConfig:
    n: int = 500
    p: int = 1000
    s_T: float = 1.0
    s_Y: float = 1.0
    tau: float = 0.0
    alpha0: float = 0.0
    beta0: float = 0.0
    support_size: int = 20
    K: float = 0.75
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise InvalidInput("need at least 2 observations")
        if not 0 < self.support_size <= self.p:
            raise InvalidInput("support_size must lie in [1, p]")
        if not -1 < self.K < 1:
            raise InvalidInput("K must lie in (-1, 1)")
        if self.s_T < 0 or self.s_Y < 0:
            raise InvalidInput("s_T and s_Y must be nonnegative")

    @property
    def support(self):
        return range(self.support_size)


@dataclass(frozen=True)
class CoefficientPair:
    alpha: np.ndarray
    beta: np.ndarray


def generate_coefficients(p: int, support, K: float,
                          seed) -> CoefficientPair:
    """Unit vectors alpha, beta on a common support with alpha.beta = K.

    alpha is a normalized Gaussian draw on the support; beta is built from
    a second draw by Gram-Schmidt, so the inner product is exact by
    construction.  Deterministic given the seed.
    """
    support = np.asarray(list(support), dtype=int)
    if support.size < 2:
        raise InvalidInput("support must contain at least 2 indices")
    if np.any(support < 0) or np.any(support >= p):
        raise InvalidInput("support indices out of range")
    if not -1 < K < 1:
        raise InvalidInput("K must lie in (-1, 1)")
    rng = np.random.default_rng(seed)
    alpha = np.zeros(p)
    alpha[support] = rng.standard_normal(support.size)
    alpha /= np.linalg.norm(alpha)
    u = np.zeros(p)
    u[support] = rng.standard_normal(support.size)
    v = u - (alpha @ u) * alpha
    v /= np.linalg.norm(v)
    beta = K * alpha + np.sqrt(1 - K * K) * v
    return CoefficientPair(alpha=alpha, beta=beta)


def simulate_dataset(cfg: DGPConfig, coeffs: CoefficientPair) -> Dataset:
    """Draw one dataset; redraws entirely if a treatment arm is empty."""
    rng = np.random.default_rng(cfg.seed)
    for _ in range(MAX_REDRAWS):
        X = rng.standard_normal((cfg.n, cfg.p))
        e = expit(cfg.beta0 + cfg.s_T * (X @ coeffs.beta))
        t = (rng.random(cfg.n) < e).astype(float)
        if t.sum() == 0 or t.sum() == cfg.n:
            continue
        m0 = cfg.alpha0 + cfg.s_Y * (X @ coeffs.alpha)
        y = m0 + cfg.tau * t + rng.standard_normal(cfg.n)
        return Dataset(design=X, treatment=t, outcome=y,
                       oracle_m0=m0, oracle_m1=m0 + cfg.tau)
    raise DegenerateDesign(
        f"{MAX_REDRAWS} consecutive draws produced a single-arm dataset")


def true_att(cfg: DGPConfig) -> float:
    """Ground-truth ATT; the additive effect is constant by design."""
    return float(cfg.tau)


def sample_att_semisynthetic(m1, m0, treatment) -> float:
    """Treated-average effect from known outcome surfaces."""
    m1 = np.asarray(m1, dtype=float).ravel()
    m0 = np.asarray(m0, dtype=float).ravel()
    t = np.asarray(treatment, dtype=float).ravel()
    if m1.shape != m0.shape or m1.shape != t.shape:
        raise InvalidInput("m1, m0 and treatment must share a length")
    treated = t == 1
    if not treated.any():
        raise DegenerateTreatmentArm("no treated units")
    return float(np.mean(m1[treated] - m0[treated]))
