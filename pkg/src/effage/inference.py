"""Large-sample inference for the age-scale estimators.

Standard errors come from the observed-information analogue built on the
risk-set moments: at each observed event age the risk-weighted covariance
of the modifier's gradient ratio is accumulated with the baseline jump as
weight.  Baseline uncertainty combines the occurrence/exposure variance
with a sensitivity correction for having plugged in estimated
coefficients; with a coefficient-free modifier everything collapses to
the classical Nelson-Aalen variance of the pooled sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from effage.model import Cohort, Coefs, EffageError, ModelSpec
from effage.estimate import FitResult, RiskSet

__all__ = [
    "SingularInformationError",
    "z_quantile",
    "VariancePieces",
    "variance_pieces",
    "information_matrix",
    "coef_confidence",
    "baseline_sensitivity",
    "cumhaz_covariance",
    "cumhaz_band",
    "fit_model",
    "fit_and_infer",
    "InferenceResult",
]


class SingularInformationError(EffageError):
    """The estimated information matrix cannot be inverted."""


def z_quantile(level: float) -> float:
    if not 0.0 < level <= 1.0:
        raise ValueError(f"confidence level must be in (0, 1], got {level}")
    if level == 1.0:
        return math.inf
    return float(norm.ppf(0.5 + level / 2.0))


@dataclass(frozen=True, eq=False)
class VariancePieces:
    """Grid-aligned ingredients of the variance formulas.

    All arrays live on the risk set's event-age grid: the baseline jumps,
    the cumulative coefficient sensitivity of the baseline, the cumulative
    occurrence/exposure variance term, and the accumulated information
    matrix.
    """

    grid: np.ndarray
    jumps: np.ndarray
    sensitivity: np.ndarray
    var0: np.ndarray
    information: np.ndarray

    def at(self, t, cumulative: np.ndarray) -> np.ndarray:
        """Evaluate a cumulative grid quantity at arbitrary ages."""
        idx = np.searchsorted(self.grid, np.asarray(t, dtype=float), side="right") - 1
        padded = np.concatenate(
            [np.zeros((1,) + cumulative.shape[1:]), cumulative], axis=0
        )
        return padded[idx + 1]


def variance_pieces(riskset: RiskSet, coefs: Coefs) -> VariancePieces:
    """Assemble every grid-level quantity the variance formulas need."""
    tables = riskset.tables(coefs, order=1, with_ratio2=True)
    risk0 = tables.risk0
    counts = riskset.grid_counts.astype(float)
    n = riskset.n
    d = len(coefs.vector)

    safe0 = np.where(risk0 > 0.0, risk0, 1.0)
    live = risk0 > 0.0
    jumps = np.where(live, counts / safe0, 0.0)
    ratio1 = np.where(live[:, None], tables.risk1 / safe0[:, None], 0.0)
    vqn = np.where(
        live[:, None, None], tables.ratio2 / safe0[:, None, None], 0.0
    ) - ratio1[:, :, None] * ratio1[:, None, :]

    information = np.einsum("g,gjk->jk", counts / n, vqn) if d else np.zeros((0, 0))
    sensitivity = np.cumsum(ratio1 * jumps[:, None], axis=0)
    var0 = np.cumsum(np.where(live, counts * n / safe0**2, 0.0))
    return VariancePieces(riskset.grid, jumps, sensitivity, var0, information)


def _invert_information(information: np.ndarray) -> np.ndarray:
    d = information.shape[0]
    if d == 0:
        return np.zeros((0, 0))
    try:
        inverse = np.linalg.inv(information)
    except np.linalg.LinAlgError as exc:
        raise SingularInformationError(
            "information matrix is singular; a coefficient direction is not "
            "identified (constant covariate or flat modifier)"
        ) from exc
    if not np.all(np.isfinite(inverse)):
        raise SingularInformationError("information matrix inverse is not finite")
    return inverse


# ---------------------------------------------------------------------------
# Functional interface
# ---------------------------------------------------------------------------


def information_matrix(
    cohort: Cohort, coefs: Coefs, spec: ModelSpec, t_star: float | None = None
) -> np.ndarray:
    """Per-unit information estimate for the modifier coefficients."""
    return variance_pieces(RiskSet(cohort, spec, t_star), coefs).information


def coef_confidence(coefs: Coefs, information: np.ndarray, n: int, level: float = 0.95):
    """Symmetric normal-theory intervals for the coefficient vector.

    Returns (stderr, lower, upper) arrays in coefficient-vector order.
    """
    z = z_quantile(level)
    inverse = _invert_information(information)
    se = np.sqrt(np.diag(inverse) / n)
    half = np.full_like(se, np.inf) if math.isinf(z) else z * se
    vec = coefs.vector
    return se, vec - half, vec + half


def baseline_sensitivity(
    cohort: Cohort, coefs: Coefs, spec: ModelSpec, t, t_star: float | None = None
) -> np.ndarray:
    """Derivative of the baseline estimate with respect to the coefficients."""
    pieces = variance_pieces(RiskSet(cohort, spec, t_star), coefs)
    return pieces.at(t, pieces.sensitivity)


def cumhaz_covariance(
    cohort: Cohort,
    coefs: Coefs,
    spec: ModelSpec,
    t1,
    t2=None,
    t_star: float | None = None,
) -> np.ndarray:
    """Scaled covariance of the baseline estimate between two age grids.

    The value at ``(a, b)`` estimates n times the covariance of the
    baseline cumulative hazard estimates at ages a and b: the common
    occurrence/exposure variance up to ``min(a, b)`` plus the quadratic
    coefficient-uncertainty correction.
    """
    if t2 is None:
        t2 = t1
    pieces = variance_pieces(RiskSet(cohort, spec, t_star), coefs)
    inverse = _invert_information(pieces.information)
    t1 = np.atleast_1d(np.asarray(t1, dtype=float))
    t2 = np.atleast_1d(np.asarray(t2, dtype=float))
    base = pieces.at(np.minimum.outer(t1, t2), pieces.var0)
    b1 = pieces.at(t1, pieces.sensitivity)
    b2 = pieces.at(t2, pieces.sensitivity)
    out = base + b1 @ inverse @ b2.T
    return out[0, 0] if out.size == 1 else out


def cumhaz_band(
    cohort: Cohort,
    coefs: Coefs,
    spec: ModelSpec,
    t,
    level: float = 0.95,
    t_star: float | None = None,
):
    """Pointwise normal band for the baseline cumulative hazard.

    Returns (lower, upper); the lower limit is clipped at 0.
    """
    z = z_quantile(level)
    riskset = RiskSet(cohort, spec, t_star)
    pieces = variance_pieces(riskset, coefs)
    inverse = _invert_information(pieces.information)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    scaled = pieces.at(t, pieces.var0) + np.einsum(
        "gj,jk,gk->g", pieces.at(t, pieces.sensitivity), inverse, pieces.at(t, pieces.sensitivity)
    )
    center = riskset.baseline(coefs)(t)
    if math.isinf(z):
        half = np.full(t.shape, np.inf)
    else:
        half = z * np.sqrt(scaled / riskset.n)
    return np.maximum(center - half, 0.0), center + half


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------


def fit_model(
    cohort: Cohort,
    spec: ModelSpec,
    init: Coefs | None = None,
    t_star: float | None = None,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> FitResult:
    """Fit coefficients and baseline in one pass over a shared risk set."""
    riskset = RiskSet(cohort, spec, t_star)
    cfit = riskset.fit(init=init, tol=tol, max_iter=max_iter)
    return FitResult(
        coefs=cfit.coefs,
        cumhaz=riskset.baseline(cfit.coefs),
        information=variance_pieces(riskset, cfit.coefs).information,
        iterations=cfit.iterations,
        final_score_norm=cfit.final_score_norm,
        converged=cfit.converged,
    )


@dataclass(frozen=True, eq=False)
class InferenceResult:
    """Fit plus pointwise uncertainty on a fixed age grid."""

    fit: FitResult
    level: float
    grid: np.ndarray
    cumhaz_values: np.ndarray
    coef_se: np.ndarray
    coef_lower: np.ndarray
    coef_upper: np.ndarray
    information_inv: np.ndarray
    condition_number: float
    sensitivity: np.ndarray
    cumhaz_cov: np.ndarray
    cumhaz_se: np.ndarray
    band_lower: np.ndarray
    band_upper: np.ndarray


def fit_and_infer(
    cohort: Cohort,
    spec: ModelSpec,
    grid=None,
    level: float = 0.95,
    init: Coefs | None = None,
    t_star: float | None = None,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> InferenceResult:
    """Full pipeline: fit, then intervals for coefficients and baseline."""
    z = z_quantile(level)
    riskset = RiskSet(cohort, spec, t_star)
    cfit = riskset.fit(init=init, tol=tol, max_iter=max_iter)
    pieces = variance_pieces(riskset, cfit.coefs)
    fit = FitResult(
        coefs=cfit.coefs,
        cumhaz=riskset.baseline(cfit.coefs),
        information=pieces.information,
        iterations=cfit.iterations,
        final_score_norm=cfit.final_score_norm,
        converged=cfit.converged,
    )
    inverse = _invert_information(pieces.information)
    d = inverse.shape[0]
    condition = float(np.linalg.cond(pieces.information)) if d else 1.0

    se, lower, upper = coef_confidence(cfit.coefs, pieces.information, riskset.n, level)

    grid = riskset.grid.copy() if grid is None else np.atleast_1d(np.asarray(grid, dtype=float))
    sens = pieces.at(grid, pieces.sensitivity)
    base = pieces.at(np.minimum.outer(grid, grid), pieces.var0)
    cov = base + sens @ inverse @ sens.T
    scaled_var = np.diag(cov).copy()
    cumhaz_se = np.sqrt(np.maximum(scaled_var, 0.0) / riskset.n)
    center = fit.cumhaz(grid)
    half = np.full(grid.shape, np.inf) if math.isinf(z) else z * cumhaz_se

    return InferenceResult(
        fit=fit,
        level=level,
        grid=grid,
        cumhaz_values=center,
        coef_se=se,
        coef_lower=lower,
        coef_upper=upper,
        information_inv=inverse,
        condition_number=condition,
        sensitivity=sens,
        cumhaz_cov=cov,
        cumhaz_se=cumhaz_se,
        band_lower=np.maximum(center - half, 0.0),
        band_upper=center + half,
    )
