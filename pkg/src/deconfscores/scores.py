"""Closed-form family of deconfounding scores.

Given a prognostic direction ``alpha`` and a propensity direction ``beta``
(both unit vectors, sign-aligned so that ``alpha . beta >= 0``), the family
consists of the unit vectors ``gamma`` satisfying the hyperbola constraint

    (alpha . gamma) (beta . gamma) = alpha . beta.

Members are indexed by a scalar coordinate ``w`` in [-1, 1]: ``w = -1``
recovers ``alpha`` (the prognostic endpoint), ``w = 1`` recovers ``beta``
(the balancing endpoint), and ``w = 0`` is the equiangular member.  Any
remaining mass is placed on a sampled direction orthogonal to both.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateFamily, InvalidInput, NullSpaceEmpty

ZERO_THRESHOLD = 1e-10
COLLINEAR_THRESHOLD = 1e-10


class Degeneracy(str, Enum):
    OK = "ok"
    NEAR_ZERO_COEFFICIENTS = "near_zero_coefficients"
    NEAR_COLLINEAR = "near_collinear"


@dataclass(frozen=True)
class ScoreFamily:
    """Normalized, sign-aligned direction pair defining the score family."""

    alpha: np.ndarray
    beta: np.ndarray
    c: float
    degenerate: Degeneracy = Degeneracy.OK


@dataclass(frozen=True)
class DeconfoundingScore:
    """One member of the family: gamma and its internal coordinates."""

    gamma: np.ndarray
    w: float
    w1: float
    w2: float
    ortho: np.ndarray
    family: ScoreFamily


def _as_vector(v, name):
    v = np.asarray(v, dtype=float).ravel()
    if not np.all(np.isfinite(v)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return v


def normalize_and_align(alpha_raw, beta_raw,
                        zero_threshold: float = ZERO_THRESHOLD) -> ScoreFamily:
    """Build a ScoreFamily from raw coefficient vectors.

    Both vectors are scaled to unit norm and ``beta`` is flipped if needed
    so that ``alpha . beta >= 0``.  A vector whose sup-norm falls below
    ``zero_threshold`` marks the family as ``near_zero_coefficients``;
    ``alpha . beta`` within 1e-10 of 1 marks it ``near_collinear``.
    Degeneracies are reported through the flag, never raised.
    """
    alpha_raw = _as_vector(alpha_raw, "alpha_raw")
    beta_raw = _as_vector(beta_raw, "beta_raw")
    if alpha_raw.shape != beta_raw.shape:
        raise InvalidInput("alpha and beta must have the same dimension")
    flag = Degeneracy.OK
    if (np.max(np.abs(alpha_raw), initial=0.0) < zero_threshold
            or np.max(np.abs(beta_raw), initial=0.0) < zero_threshold):
        flag = Degeneracy.NEAR_ZERO_COEFFICIENTS
    na = np.linalg.norm(alpha_raw)
    nb = np.linalg.norm(beta_raw)
    alpha = alpha_raw / na if na > 0 else alpha_raw.copy()
    beta = beta_raw / nb if nb > 0 else beta_raw.copy()
    c = float(alpha @ beta)
    if c < 0:
        beta = -beta
        c = -c
    if flag == Degeneracy.OK and c > 1 - COLLINEAR_THRESHOLD:
        flag = Degeneracy.NEAR_COLLINEAR
    return ScoreFamily(alpha=alpha, beta=beta, c=c, degenerate=flag)


def sample_orthocomplement(family: ScoreFamily, rng_seed) -> np.ndarray:
    """Draw a unit vector orthogonal to both family directions.

    The draw is uniform on the unit sphere of the orthogonal complement of
    span(alpha, beta) and deterministic given the seed.
    """
    if family.degenerate != Degeneracy.OK:
        raise DegenerateFamily(
            f"cannot sample orthocomplement: family is {family.degenerate}")
    alpha, beta, c = family.alpha, family.beta, family.c
    p = alpha.shape[0]
    if p <= 2:
        raise NullSpaceEmpty(
            "span(alpha, beta) fills the space; no orthogonal direction")
    # orthonormal basis of span(alpha, beta)
    u = alpha
    v = beta - c * u
    v /= np.linalg.norm(v)
    rng = np.random.default_rng(rng_seed)
    while True:
        z = rng.standard_normal(p)
        z -= (z @ u) * u + (z @ v) * v
        nz = np.linalg.norm(z)
        if nz > 1e-8:
            return z / nz


def gamma_from_w(family: ScoreFamily, ortho, w: float) -> DeconfoundingScore:
    """Construct the family member at coordinate w.

    Uses the positive-branch parameterization

        w2 = -sqrt((1 - c) / 2) * w
        w1 = sqrt((2c + (1 - c)^2 w^2 / 2) / (1 + c))
        gamma = w1 (a + b)/|a + b| + w2 (a - b)/|a - b|
                + sqrt(1 - w1^2 - w2^2) * ortho

    so that gamma(1) = beta and gamma(-1) = alpha exactly.  A near-collinear
    family collapses to its single point and returns gamma = alpha for
    every w.
    """
    if family.degenerate == Degeneracy.NEAR_ZERO_COEFFICIENTS:
        raise DegenerateFamily("family built from near-zero coefficients")
    w = float(w)
    if not -1.0 <= w <= 1.0:
        raise InvalidInput(f"w must lie in [-1, 1], got {w}")
    alpha, beta, c = family.alpha, family.beta, family.c
    if family.degenerate == Degeneracy.NEAR_COLLINEAR:
        # the family collapses to a point; ortho is irrelevant
        return DeconfoundingScore(gamma=alpha.copy(), w=w, w1=1.0, w2=0.0,
                                  ortho=np.zeros_like(alpha), family=family)
    ortho = _as_vector(ortho, "ortho")
    if ortho.shape != alpha.shape:
        raise InvalidInput("ortho dimension does not match the family")
    w2 = -np.sqrt((1 - c) / 2) * w
    w1 = np.sqrt((2 * c + (1 - c) ** 2 * w ** 2 / 2) / (1 + c))
    u1 = (alpha + beta) / np.sqrt(2 + 2 * c)
    u2 = (alpha - beta) / np.sqrt(2 - 2 * c)
    # algebraically 1 - w1^2 - w2^2, in a form that is exact at w = +-1
    rest = (1 - c) * (1 - w ** 2) / (1 + c)
    gamma = w1 * u1 + w2 * u2 + np.sqrt(rest) * ortho
    return DeconfoundingScore(gamma=gamma, w=w, w1=float(w1), w2=float(w2),
                              ortho=ortho, family=family)


def hyperbola_residual(gamma, alpha, beta) -> float:
    """Residual of the defining constraint, (a.g)(b.g) - a.b."""
    gamma = _as_vector(gamma, "gamma")
    alpha = _as_vector(alpha, "alpha")
    beta = _as_vector(beta, "beta")
    return float((alpha @ gamma) * (beta @ gamma) - alpha @ beta)


def project_score(gamma, design) -> np.ndarray:
    """Scalar score values gamma' x for every row of the design."""
    gamma = _as_vector(gamma, "gamma")
    X = np.asarray(design, dtype=float)
    if X.ndim != 2 or X.shape[1] != gamma.shape[0]:
        raise InvalidInput(
            f"design shape {X.shape} incompatible with gamma of "
            f"dimension {gamma.shape[0]}")
    return X @ gamma
