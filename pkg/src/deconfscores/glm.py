"""Penalized linear and logistic regression.

Lasso problems are solved by coordinate descent with soft-thresholding
(numba kernels in ``_cd``); ridge problems by a direct solve of the normal
equations through whichever Gram matrix is smaller.  The logistic family
wraps either inner solver in iteratively reweighted least squares.

Features are standardized internally (mean 0, variance 1) and coefficients
are mapped back to the original scale; the intercept is never penalized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import expit

from ._cd import OBJ_TRACE_LEN, cd_solve, weighted_xtx_at
from .errors import DegenerateResponse, InvalidInput

CD_TOL = 1e-7
CV_TOL = 1e-5  # path fits inside cross-validation only
CV_PATIENCE = 10  # grid points past the running minimum before stopping
CV_MIN_SLACK_SE = 0.3  # tie slack (in SEs) when picking the deviance minimum
KKT_EPS = 1e-7
MAX_SWEEPS = 100_000
IRLS_MAX_ITER = 100
IRLS_WEIGHT_FLOOR = 1e-5
IRLS_PROB_CLAMP = 1e-10


class Family(str, Enum):
    LINEAR = "linear"
    LOGISTIC = "logistic"


class Penalty(str, Enum):
    LASSO = "lasso"
    RIDGE = "ridge"
    NONE = "none"


@dataclass(frozen=True)
class LambdaSpec:
    """Regularization strength: either a fixed value or cross-validated."""

    mode: str = "fixed"
    value: float = 0.0
    folds: int = 10
    grid_size: int = 100
    grid_min_ratio: float | None = None  # auto: 0.01 if n < p else 1e-4
    seed: int = 0
    rule: str = "min"  # "min" or "1se"

    def __post_init__(self):
        if self.mode not in ("fixed", "cv"):
            raise InvalidInput(f"unknown lambda mode {self.mode!r}")
        if self.mode == "fixed" and self.value < 0:
            raise InvalidInput("lambda must be nonnegative")
        if self.mode == "cv":
            if self.folds < 2:
                raise InvalidInput("cv needs at least 2 folds")
            if self.grid_size < 2:
                raise InvalidInput("cv grid needs at least 2 points")
            if self.grid_min_ratio is not None and not (
                    0 < self.grid_min_ratio < 1):
                raise InvalidInput("grid_min_ratio must be in (0, 1)")

    @staticmethod
    def fixed(value: float) -> "LambdaSpec":
        return LambdaSpec(mode="fixed", value=float(value))

    @staticmethod
    def cv(folds: int = 10, grid_size: int = 100,
           grid_min_ratio: float | None = None, seed: int = 0,
           rule: str = "min") -> "LambdaSpec":
        return LambdaSpec(mode="cv", folds=folds, grid_size=grid_size,
                          grid_min_ratio=grid_min_ratio, seed=seed, rule=rule)


@dataclass
class FittedGLM:
    family: Family
    penalty: Penalty
    lam: float
    intercept: float
    coefficients: np.ndarray
    converged: bool
    iterations: int
    objective_trace: np.ndarray = field(default_factory=lambda: np.empty(0),
                                        repr=False)


def validate_design(X, min_rows: int = 2) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InvalidInput("design matrix must be 2-dimensional")
    n, p = X.shape
    if n < min_rows or p < 1:
        raise InvalidInput(
            f"design must have n >= {min_rows} and p >= 1, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInput("design matrix contains non-finite entries")
    return X


def _validate_response(y, family: Family, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != n:
        raise InvalidInput("response length does not match design")
    if not np.all(np.isfinite(y)):
        raise InvalidInput("response contains non-finite entries")
    if family == Family.LOGISTIC:
        if not np.all((y == 0) | (y == 1)):
            raise InvalidInput("logistic response must be 0/1")
        if y.min() == y.max():
            raise DegenerateResponse("logistic response has a single class")
    return y


def _standardize(X):
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    scale = np.where(sd > 0, sd, 1.0)
    return (X - mean) / scale, mean, scale


def _ridge_wls(Xc, zc, w, lam):
    """Minimizer of (1/2n) sum w_i (zc_i - x_i'b)^2 + (lam/2)||b||^2.

    Xc and zc must already be weighted-centered; solves through the smaller
    of the two Gram matrices.
    """
    n, p = Xc.shape
    sw = np.sqrt(w)
    U = Xc * sw[:, None]
    v = zc * sw
    if p <= n:
        G = U.T @ U + n * lam * np.eye(p)
        return np.linalg.solve(G, U.T @ v)
    G = U @ U.T + n * lam * np.eye(n)
    return U.T @ np.linalg.solve(G, v)


def _lasso_wls_solve(Xs, z, w, lam, b, b0, tol):
    """Active-set coordinate descent for the weighted lasso.

    Sweeps only coordinates in the working set; KKT violations among the
    rest are found with a BLAS matvec and folded in until none remain.
    """
    n, p = Xs.shape
    r = z - b0 - Xs @ b
    xtx = np.zeros(p)
    in_active = b != 0.0
    active = np.flatnonzero(in_active)
    traces = []
    total_sweeps = 0
    converged = True
    while True:
        if active.size:
            weighted_xtx_at(Xs, w, active, xtx)
            trace = np.empty(OBJ_TRACE_LEN)
            b0, sweeps, converged, nobj = cd_solve(
                Xs, r, w, b, b0, xtx, lam, True, tol, MAX_SWEEPS, True,
                active, trace)
            total_sweeps += sweeps
            traces.append(trace[:nobj])
        else:
            d0 = (w @ r) / w.sum()
            r -= d0
            b0 += d0
        grad = Xs.T @ (w * r) / n
        eps = max(KKT_EPS, tol)
        viol = np.flatnonzero((np.abs(grad) > lam + eps) & ~in_active)
        if viol.size == 0:
            break
        in_active[viol] = True
        active = np.flatnonzero(in_active)
    trace = np.concatenate(traces) if traces else np.empty(0)
    return b, b0, converged, total_sweeps, trace


def _solve_penalized_wls(Xs, z, w, lam, penalty, b, b0, tol=CD_TOL):
    """One penalized weighted least-squares solve; returns updated state."""
    if penalty == Penalty.LASSO:
        return _lasso_wls_solve(Xs, z, w, lam, b, b0, tol)
    # ridge and unpenalized: direct solve on weighted-centered data
    wsum = w.sum()
    cx = (w @ Xs) / wsum
    cz = (w @ z) / wsum
    Xc = Xs - cx
    zc = z - cz
    if penalty == Penalty.RIDGE and lam > 0:
        bnew = _ridge_wls(Xc, zc, w, lam)
    else:
        sw = np.sqrt(w)
        bnew, *_ = np.linalg.lstsq(Xc * sw[:, None], zc * sw, rcond=None)
    b0new = cz - cx @ bnew
    b[:] = bnew
    return b, b0new, True, 1, np.empty(0)


def _fit_linear_std(Xs, y, lam, penalty, b=None, tol=CD_TOL):
    """Fit on standardized design; returns (b, b0, converged, iters, trace)."""
    n = Xs.shape[0]
    ybar = y.mean()
    yc = y - ybar
    w = np.ones(n)
    if b is None:
        b = np.zeros(Xs.shape[1])
    b, b0, conv, iters, trace = _solve_penalized_wls(
        Xs, yc, w, lam, penalty, b, 0.0, tol=tol)
    return b, b0 + ybar, conv, iters, trace


def _fit_logistic_std(Xs, y, lam, penalty, b=None, b0=None, tol=CD_TOL):
    """IRLS on standardized design; returns (b, b0, converged, iters)."""
    pbar = y.mean()
    if b is None:
        b = np.zeros(Xs.shape[1])
    if b0 is None:
        b0 = float(np.log(pbar / (1 - pbar)))
    converged = False
    it = 0
    for it in range(1, IRLS_MAX_ITER + 1):
        eta = b0 + Xs @ b
        prob = np.clip(expit(eta), IRLS_PROB_CLAMP, 1 - IRLS_PROB_CLAMP)
        w = np.maximum(prob * (1 - prob), IRLS_WEIGHT_FLOOR)
        z = eta + (y - prob) / w
        b_old = b.copy()
        b0_old = b0
        b, b0, _, _, _ = _solve_penalized_wls(Xs, z, w, lam, penalty, b, b0,
                                              tol=tol)
        delta = max(np.max(np.abs(b - b_old), initial=0.0), abs(b0 - b0_old))
        if delta < tol:
            converged = True
            break
    return b, b0, converged, it


def lambda_grid(Xs, y, family: Family, grid_size: int,
                grid_min_ratio: float) -> np.ndarray:
    """Geometric grid from the all-zero-coefficient anchor downward."""
    n = Xs.shape[0]
    res = y - y.mean()
    lam_max = float(np.max(np.abs(Xs.T @ res)) / n)
    lam_max = max(lam_max, 1e-12)
    return np.geomspace(lam_max, lam_max * grid_min_ratio, grid_size)


def _fold_assignment(y, family: Family, folds: int, seed: int) -> np.ndarray:
    """Fold labels; stratified by class for the logistic family."""
    n = y.shape[0]
    rng = np.random.default_rng(seed)
    assign = np.empty(n, dtype=np.int64)
    if family == Family.LOGISTIC:
        for cls in (0.0, 1.0):
            idx = np.flatnonzero(y == cls)
            if idx.size < 2:
                raise DegenerateResponse(
                    "cannot stratify folds: a class has fewer than 2 members")
            perm = rng.permutation(idx)
            assign[perm] = np.arange(perm.size) % folds
    else:
        perm = rng.permutation(n)
        assign[perm] = np.arange(n) % folds
    return assign


def _deviance(y, pred, family: Family) -> float:
    if family == Family.LINEAR:
        return float(np.mean((y - pred) ** 2))
    p = np.clip(pred, IRLS_PROB_CLAMP, 1 - IRLS_PROB_CLAMP)
    return float(-2 * np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))


def _ridge_linear_path_deviances(Xtr, ytr, Xval, yval, lambdas):
    """Held-out MSE for every lambda at once through the SVD."""
    Xs, mean, scale = _standardize(Xtr)
    Xvs = (Xval - mean) / scale
    out = np.empty(lambdas.shape[0])
    ybar = ytr.mean()
    U, s, Vt = np.linalg.svd(Xs, full_matrices=False)
    uy = U.T @ (ytr - ybar)
    n = Xs.shape[0]
    for k, lam in enumerate(lambdas):
        coef = Vt.T @ (s / (s ** 2 + n * lam) * uy)
        out[k] = _deviance(yval, ybar + Xvs @ coef, Family.LINEAR)
    return out


class _FoldState:
    """Warm-start state for one fold's descent down the lambda path."""

    def __init__(self, Xtr, ytr, Xval, yval):
        self.Xs, mean, scale = _standardize(Xtr)
        self.Xvs = (Xval - mean) / scale
        self.ytr = ytr
        self.yval = yval
        self.b = np.zeros(Xtr.shape[1])
        self.b0 = None

    def deviance_at(self, lam, family, penalty):
        if family == Family.LINEAR:
            self.b, self.b0, _, _, _ = _fit_linear_std(
                self.Xs, self.ytr, lam, penalty, b=self.b, tol=CV_TOL)
            pred = self.b0 + self.Xvs @ self.b
        else:
            self.b, self.b0, _, _ = _fit_logistic_std(
                self.Xs, self.ytr, lam, penalty, b=self.b, b0=self.b0,
                tol=CV_TOL)
            pred = expit(self.b0 + self.Xvs @ self.b)
        return _deviance(self.yval, pred, family)


def cv_lambda(design, response, family: Family, penalty: Penalty,
              folds: int = 10, grid_size: int = 100,
              grid_min_ratio: float | None = None, seed: int = 0,
              rule: str = "min") -> float:
    """K-fold cross-validated lambda over a geometric grid.

    Deterministic given the seed.  Returns the grid lambda minimizing mean
    held-out deviance ("min"), or the largest lambda within one standard
    error of the minimum ("1se").
    """
    X = validate_design(design)
    family = Family(family)
    penalty = Penalty(penalty)
    n, p = X.shape
    y = _validate_response(response, family, n)
    if folds > n:
        raise InvalidInput("more folds than observations")
    if grid_min_ratio is None:
        grid_min_ratio = 0.01 if n < p else 1e-4
    Xs_full, _, _ = _standardize(X)
    lambdas = lambda_grid(Xs_full, y, family, grid_size, grid_min_ratio)
    assign = _fold_assignment(y, family, folds, seed)
    if family == Family.LINEAR and penalty == Penalty.RIDGE:
        dev = np.zeros((folds, grid_size))
        for f in range(folds):
            val = assign == f
            dev[f] = _ridge_linear_path_deviances(X[~val], y[~val], X[val],
                                                  y[val], lambdas)
        nlam = grid_size
    else:
        # lambda-major descent with warm starts; stop once the mean held-out
        # deviance has not improved for CV_PATIENCE consecutive grid points
        states = []
        for f in range(folds):
            val = assign == f
            states.append(_FoldState(X[~val], y[~val], X[val], y[val]))
        dev = np.zeros((folds, grid_size))
        kmin = 0
        nlam = grid_size
        for k, lam in enumerate(lambdas):
            for f, st in enumerate(states):
                dev[f, k] = st.deviance_at(lam, family, penalty)
            if dev[:, k].mean() < dev[:, kmin].mean():
                kmin = k
            elif k - kmin >= CV_PATIENCE:
                nlam = k + 1
                break
    mean_dev = dev[:, :nlam].mean(axis=0)
    kmin = int(np.argmin(mean_dev))
    se = dev[:, :nlam].std(axis=0, ddof=1)[kmin] / np.sqrt(folds)
    # break near-ties toward the stronger penalty: dips within a fraction
    # of a standard error are indistinguishable from fold noise
    slack = se if rule == "1se" else CV_MIN_SLACK_SE * se
    ok = np.flatnonzero(mean_dev <= mean_dev[kmin] + slack)
    return float(lambdas[ok[0]])  # grid is descending: first = largest


def fit_glm(design, response, family: Family, penalty: Penalty,
            lambda_spec: LambdaSpec) -> FittedGLM:
    """Fit a penalized GLM; see module docstring for solver details."""
    X = validate_design(design)
    family = Family(family)
    penalty = Penalty(penalty)
    n, p = X.shape
    y = _validate_response(response, family, n)
    if penalty == Penalty.NONE:
        if lambda_spec.mode != "fixed" or lambda_spec.value != 0:
            raise InvalidInput("penalty 'none' requires a fixed lambda of 0")
    if lambda_spec.mode == "cv":
        lam = cv_lambda(X, y, family, penalty, folds=lambda_spec.folds,
                        grid_size=lambda_spec.grid_size,
                        grid_min_ratio=lambda_spec.grid_min_ratio,
                        seed=lambda_spec.seed, rule=lambda_spec.rule)
    else:
        lam = float(lambda_spec.value)
    Xs, mean, scale = _standardize(X)
    if family == Family.LINEAR:
        b, b0, converged, iters, trace = _fit_linear_std(Xs, y, lam, penalty)
    else:
        b, b0, converged, iters = _fit_logistic_std(Xs, y, lam, penalty)
        trace = np.empty(0)
    coef = b / scale
    intercept = float(b0 - coef @ mean)
    return FittedGLM(family=family, penalty=penalty, lam=lam,
                     intercept=intercept, coefficients=coef,
                     converged=converged, iterations=iters,
                     objective_trace=trace)


def predict(model: FittedGLM, design) -> np.ndarray:
    """Linear predictor for the linear family; probabilities for logistic."""
    X = validate_design(design, min_rows=1)
    if X.shape[1] != model.coefficients.shape[0]:
        raise InvalidInput(
            f"design has {X.shape[1]} columns, model expects "
            f"{model.coefficients.shape[0]}")
    eta = model.intercept + X @ model.coefficients
    if model.family == Family.LINEAR:
        return eta
    return np.clip(expit(eta), 1e-15, 1 - 1e-15)
