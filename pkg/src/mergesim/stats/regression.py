"""Merge-first logistic model and gap-at-merge linear model.

logit P(left first) = b0 + b1*h + b2*dv            (IRLS, Wald z tests)
gap = a0 + a1*|h| + a2*|dv| + a3*(h*dv)            (OLS, classical t tests)
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..domain import RegressionFit
from .distributions import normal_two_sided_p, t_two_sided_p

LOGIT_NAMES = ("intercept", "h", "dv")
GAP_NAMES = ("intercept", "abs_h", "abs_dv", "h_x_dv")

IRLS_TOL = 1e-10
IRLS_MAX_ITER = 100
SEPARATION_BOUND = 30.0


class FitError(ValueError):
    pass


class SeparationError(FitError):
    pass


class DegenerateFit(FitError):
    pass


class CollinearityError(FitError):
    pass


def _expit(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def fit_logit(X: np.ndarray, y: np.ndarray, names: Sequence[str]) -> RegressionFit:
    """Maximum-likelihood logistic regression by iteratively reweighted least squares.

    ``X`` must already contain the intercept column.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    if n < 10:
        raise DegenerateFit(f"logistic fit needs at least 10 rows, got {n}")
    if not np.all((y == 0) | (y == 1)):
        raise DegenerateFit("outcomes must be coded 0/1")
    if y.min() == y.max():
        raise DegenerateFit("only one outcome class present")
    if np.linalg.matrix_rank(X) < k:
        raise CollinearityError("design matrix is rank deficient")

    beta = np.zeros(k)
    converged = False
    for iteration in range(1, IRLS_MAX_ITER + 1):
        p = _expit(X @ beta)
        w = p * (1.0 - p)
        info = X.T @ (w[:, None] * X)
        try:
            step = np.linalg.solve(info, X.T @ (y - p))
        except np.linalg.LinAlgError:
            raise SeparationError("information matrix became singular; outcomes are separable") from None
        beta = beta + step
        if np.max(np.abs(beta)) > SEPARATION_BOUND:
            raise SeparationError(f"coefficients diverge (max |b| > {SEPARATION_BOUND}); outcomes are separable")
        if np.max(np.abs(step)) < IRLS_TOL:
            converged = True
            break
    if not converged:
        raise SeparationError(f"IRLS did not converge in {IRLS_MAX_ITER} iterations")

    p = _expit(X @ beta)
    info = X.T @ ((p * (1.0 - p))[:, None] * X)
    cov = np.linalg.inv(info)
    se = np.sqrt(np.diag(cov))
    z = beta / se
    loglik = float(np.sum(y * np.log(p) + (1 - y) * np.log1p(-p)))
    return RegressionFit(
        names=tuple(names),
        coefficients=tuple(float(b) for b in beta),
        standard_errors=tuple(float(s) for s in se),
        test_statistics=tuple(float(v) for v in z),
        p_values=tuple(normal_two_sided_p(float(v)) for v in z),
        n_observations=n,
        model_kind="logistic",
        extra={"iterations": iteration, "log_likelihood": loglik},
    )


def _dependent_columns(X: np.ndarray, names: Sequence[str]) -> list[str]:
    dependent, kept = [], []
    for j in range(X.shape[1]):
        trial = kept + [j]
        if np.linalg.matrix_rank(X[:, trial]) < len(trial):
            dependent.append(names[j])
        else:
            kept.append(j)
    return dependent


def fit_ols(X: np.ndarray, y: np.ndarray, names: Sequence[str]) -> RegressionFit:
    """Ordinary least squares via QR with classical (homoskedastic) standard errors."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    if n < k + 2:
        raise DegenerateFit(f"linear fit with {k} coefficients needs at least {k + 2} rows, got {n}")
    if np.linalg.matrix_rank(X) < k:
        raise CollinearityError(f"collinear design; dependent column(s): {', '.join(_dependent_columns(X, names))}")
    q, r = np.linalg.qr(X)
    beta = np.linalg.solve(r, q.T @ y)
    resid = y - X @ beta
    df = n - k
    sigma2 = float(resid @ resid) / df
    r_inv = np.linalg.inv(r)
    cov = sigma2 * (r_inv @ r_inv.T)
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = beta / se
    return RegressionFit(
        names=tuple(names),
        coefficients=tuple(float(b) for b in beta),
        standard_errors=tuple(float(s) for s in se),
        test_statistics=tuple(float(v) for v in t),
        p_values=tuple(t_two_sided_p(float(v), df) for v in t),
        n_observations=n,
        model_kind="linear",
        extra={"df_resid": df, "sigma2": sigma2, "residuals": resid},
    )


def logistic_fit(merge_first: Sequence[int], h: Sequence[float], dv: Sequence[float]) -> RegressionFit:
    h = np.asarray(h, dtype=float)
    X = np.column_stack([np.ones_like(h), h, np.asarray(dv, dtype=float)])
    return fit_logit(X, np.asarray(merge_first, dtype=float), LOGIT_NAMES)


def gap_design(h: Sequence[float], dv: Sequence[float]) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    dv = np.asarray(dv, dtype=float)
    return np.column_stack([np.ones_like(h), np.abs(h), np.abs(dv), h * dv])


def linear_fit(gap: Sequence[float], h: Sequence[float], dv: Sequence[float]) -> RegressionFit:
    return fit_ols(gap_design(h, dv), np.asarray(gap, dtype=float), GAP_NAMES)


def log_likelihood(beta: Sequence[float], X: np.ndarray, y: np.ndarray) -> float:
    eta = np.asarray(X, dtype=float) @ np.asarray(beta, dtype=float)
    # log(1 + e^eta) computed stably
    return float(np.sum(np.asarray(y) * eta - np.logaddexp(0.0, eta)))


def fmt_p(p: float) -> str:
    if math.isnan(p):
        return "nan"
    return "< .001" if p < 0.001 else f"{p:.3f}"
