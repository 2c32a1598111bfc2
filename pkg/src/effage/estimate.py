"""Semiparametric estimation on the effective-age scale.

The estimators pool risk over age rather than calendar time: every unit
segment contributes a risk weight (modifier over slope) on the half-open
age interval it sweeps out.  The partial likelihood compares each event's
modifier to the cohort-average risk weight at that event's age, profiling
the baseline hazard out; the baseline cumulative hazard is then recovered
by an occurrence/exposure ratio at each observed event age and the
survivor function by product integration.

``RiskSet`` does the heavy lifting once per cohort: it flattens unit
segments into covariate-constant slices and materializes the pooled risk
sums on the grid of observed event ages with difference-array
accumulation, so likelihood, score, and Hessian evaluations are a few
vectorized passes regardless of how the Newton iteration moves.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from effage.model import (
    Cohort,
    Coefs,
    EffageError,
    ModelSpec,
    ParameterDomainError,
    StepFunction,
    ZeroSlopeError,
    modifier_terms,
)

__all__ = [
    "EmptyRiskSetError",
    "DegenerateModelError",
    "RiskSet",
    "CoefFit",
    "FitResult",
    "pooled_at_risk",
    "pooled_at_risk_derivs",
    "risk_set_moments",
    "log_partial_likelihood",
    "score",
    "hessian",
    "fit_coefs",
    "baseline_cumhaz",
    "baseline_survivor",
]


class EmptyRiskSetError(EffageError):
    """No usable events, or zero pooled risk at an observed event age."""


class DegenerateModelError(EffageError):
    """The hazard modifier does not depend on any coefficient."""


@dataclass(frozen=True, eq=False)
class _Tables:
    """Pooled risk sums materialized on the event-age grid.

    ``risk0[g]`` is the sum of risk weights active at grid age g (n times
    the pooled at-risk average), ``risk1``/``risk2`` its first and second
    coefficient derivatives, and ``ratio2`` the weighted sum of outer
    products of per-segment gradient ratios used by the variance formulas.
    """

    risk0: np.ndarray
    risk1: np.ndarray | None
    risk2: np.ndarray | None
    ratio2: np.ndarray | None


@dataclass(frozen=True, eq=False)
class CoefFit:
    """Newton-Raphson output for the modifier coefficients."""

    coefs: Coefs
    iterations: int
    final_score_norm: float
    converged: bool
    used_fallback: bool
    iterates: tuple[np.ndarray, ...]


@dataclass(frozen=True, eq=False)
class FitResult:
    """Complete fit: coefficients, baseline, and curvature information."""

    coefs: Coefs
    cumhaz: StepFunction
    information: np.ndarray
    iterations: int
    final_score_norm: float
    converged: bool


class RiskSet:
    """Flattened cohort history for age-scale estimation.

    Parameters
    ----------
    cohort : Cohort
    spec : ModelSpec
    t_star : float, optional
        Age cutoff; events with effective age above it are excluded and
        the baseline is estimated only up to it.  Defaults to the cohort's
        own cutoff, then to the largest observed event age.
    """

    def __init__(self, cohort: Cohort, spec: ModelSpec, t_star: float | None = None):
        self.cohort = cohort
        self.spec = spec
        self.n = cohort.n

        dims = {u.covariates.dim for u in cohort.units}
        if len(dims) > 1:
            raise ValueError("all units must carry the same covariate dimension")
        self.n_covariates = dims.pop()

        if t_star is None:
            t_star = cohort.t_star
        if t_star is None:
            t_star = cohort.max_event_age()
        self.t_star = float(t_star)

        age_lo, age_hi, inv_slope, prior, v_off, v_scale, xs = [], [], [], [], [], [], []
        ev_age, ev_k, ev_cal, ev_x = [], [], [], []
        for unit in cohort.units:
            bounds = unit.segment_bounds
            starts = unit.segment_start_ages
            slopes = unit.segment_slopes
            for j in range(1, unit.n_segments + 1):
                lo, hi = bounds[j - 1], bounds[j]
                a, b = starts[j - 1], slopes[j - 1]
                if b == 0.0:
                    if hi > lo:
                        raise ZeroSlopeError(
                            "a zero-slope age segment has no age-scale risk weight; "
                            "this cohort cannot be fit on the age scale"
                        )
                    continue
                steps = unit.covariates.step_times_within(lo, hi)
                edges = np.concatenate([[lo], steps, [hi]])
                for v_lo, v_hi in zip(edges[:-1], edges[1:]):
                    age_lo.append(a + b * (v_lo - lo))
                    age_hi.append(a + b * (v_hi - lo))
                    inv_slope.append(1.0 / b)
                    prior.append(j - 1.0)
                    v_off.append(lo - a / b)
                    v_scale.append(1.0 / b)
                    xs.append(unit.covariates.at(v_hi))
            ages = unit.event_ages
            for j, (s_j, w_j) in enumerate(zip(unit.event_times, ages), start=1):
                if w_j <= self.t_star:
                    ev_age.append(w_j)
                    ev_k.append(j - 1.0)
                    ev_cal.append(s_j)
                    ev_x.append(unit.covariates.at(s_j))

        p = self.n_covariates
        self.sl_age_lo = np.asarray(age_lo)
        self.sl_age_hi = np.asarray(age_hi)
        self.sl_inv_slope = np.asarray(inv_slope)
        self.sl_prior = np.asarray(prior)
        self.sl_v_off = np.asarray(v_off)
        self.sl_v_scale = np.asarray(v_scale)
        self.sl_x = np.asarray(xs).reshape(len(age_lo), p)
        self.ev_age = np.asarray(ev_age)
        self.ev_k = np.asarray(ev_k)
        self.ev_cal = np.asarray(ev_cal)
        self.ev_x = np.asarray(ev_x).reshape(len(ev_age), p)

        self.grid, self.grid_counts = (
            np.unique(self.ev_age, return_counts=True) if len(ev_age) else (np.zeros(0), np.zeros(0))
        )
        self.ev_gidx = np.searchsorted(self.grid, self.ev_age)
        # active-range bracket of each slice on the grid: grid[g] in (lo, hi]
        self._gi_lo = np.searchsorted(self.grid, self.sl_age_lo, side="right")
        self._gi_hi = np.searchsorted(self.grid, self.sl_age_hi, side="right")

    # -- low-level evaluation -------------------------------------------------

    @property
    def n_events(self) -> int:
        return int(self.ev_age.size)

    def coef_dim(self) -> int:
        return self.spec.coef_dim(self.n_covariates)

    def _slice_terms(self, coefs: Coefs, order: int, t: float | None = None):
        """Modifier terms per slice.

        For a calendar-time-invariant count effect, the modifier is
        constant on each slice; otherwise it must be evaluated at the
        calendar time where the slice reaches age ``t``.
        """
        if self.spec.count_effect.time_invariant:
            s = self.sl_v_off + self.sl_v_scale * self.sl_age_hi
        else:
            if t is None:
                raise ValueError("a target age is required for a time-varying count effect")
            s = self.sl_v_off + self.sl_v_scale * t
        return modifier_terms(self.spec, s, self.sl_prior, self.sl_x, coefs, order=order)

    def _accumulate(self, w: np.ndarray) -> np.ndarray:
        """Sum slice values over their active grid ranges (difference array)."""
        m = self.grid.size
        acc = np.zeros((m + 1,) + w.shape[1:])
        np.add.at(acc, self._gi_lo, w)
        np.subtract.at(acc, self._gi_hi, w)
        return np.cumsum(acc, axis=0)[:m]

    def tables(self, coefs: Coefs, order: int = 2, with_ratio2: bool = False) -> _Tables:
        """Materialize pooled risk sums on the event-age grid."""
        if with_ratio2:
            order = max(order, 1)
        if not self.spec.count_effect.time_invariant:
            return self._tables_slow(coefs, order, with_ratio2)
        val, grad, hess = self._slice_terms(coefs, order=order)
        w0 = val * self.sl_inv_slope
        risk0 = self._accumulate(w0)
        risk1 = risk2 = ratio2 = None
        if order >= 1:
            risk1 = self._accumulate(grad * self.sl_inv_slope[:, None])
        if order >= 2:
            risk2 = self._accumulate(hess * self.sl_inv_slope[:, None, None])
        if with_ratio2:
            ratio = np.where(val[:, None] != 0.0, grad / np.where(val == 0.0, 1.0, val)[:, None], 0.0)
            outer = ratio[:, :, None] * ratio[:, None, :]
            ratio2 = self._accumulate(outer * w0[:, None, None])
        return _Tables(risk0, risk1, risk2, ratio2)

    def _tables_slow(self, coefs: Coefs, order: int, with_ratio2: bool) -> _Tables:
        m = self.grid.size
        d = len(coefs.vector)
        risk0 = np.zeros(m)
        risk1 = np.zeros((m, d)) if order >= 1 else None
        risk2 = np.zeros((m, d, d)) if order >= 2 else None
        ratio2 = np.zeros((m, d, d)) if with_ratio2 else None
        for g, t in enumerate(self.grid):
            active = (self.sl_age_lo < t) & (t <= self.sl_age_hi)
            if not np.any(active):
                continue
            s = self.sl_v_off[active] + self.sl_v_scale[active] * t
            val, grad, hess = modifier_terms(
                self.spec, s, self.sl_prior[active], self.sl_x[active], coefs, order=order
            )
            w0 = val * self.sl_inv_slope[active]
            risk0[g] = w0.sum()
            if order >= 1:
                risk1[g] = (grad * self.sl_inv_slope[active][:, None]).sum(axis=0)
            if order >= 2:
                risk2[g] = (hess * self.sl_inv_slope[active][:, None, None]).sum(axis=0)
            if with_ratio2:
                ratio = np.where(val[:, None] != 0.0, grad / np.where(val == 0.0, 1.0, val)[:, None], 0.0)
                ratio2[g] = ((ratio[:, :, None] * ratio[:, None, :]) * w0[:, None, None]).sum(axis=0)
        return _Tables(risk0, risk1, risk2, ratio2)

    def at_risk_sums(self, t: float, coefs: Coefs, order: int = 0):
        """Pooled risk sums at one age, by direct scan (exact zeros off-range)."""
        active = (self.sl_age_lo < t) & (t <= self.sl_age_hi)
        d = len(coefs.vector)
        if not np.any(active):
            return 0.0, np.zeros(d), np.zeros((d, d))
        s = self.sl_v_off[active] + self.sl_v_scale[active] * t
        val, grad, hess = modifier_terms(
            self.spec, s, self.sl_prior[active], self.sl_x[active], coefs, order=order
        )
        inv = self.sl_inv_slope[active]
        r0 = float((val * inv).sum())
        r1 = (grad * inv[:, None]).sum(axis=0) if order >= 1 else np.zeros(d)
        r2 = (hess * inv[:, None, None]).sum(axis=0) if order >= 2 else np.zeros((d, d))
        return r0, r1, r2

    def moments_at(self, t: float, coefs_weight: Coefs, coefs_eval: Coefs):
        """Moments of the modifier's derivative ratios over the risk weights.

        Returns the weighted mean gradient ratio, mean Hessian ratio, and
        the gradient-ratio covariance at age ``t``; zeros when nothing is
        at risk (the 0/0 convention).
        """
        d = len(coefs_eval.vector)
        active = (self.sl_age_lo < t) & (t <= self.sl_age_hi)
        if not np.any(active):
            return np.zeros(d), np.zeros((d, d)), np.zeros((d, d))
        s = self.sl_v_off[active] + self.sl_v_scale[active] * t
        prior, x, inv = self.sl_prior[active], self.sl_x[active], self.sl_inv_slope[active]
        w_val, _, _ = modifier_terms(self.spec, s, prior, x, coefs_weight, order=0)
        weights = w_val * inv
        total = weights.sum()
        if total <= 0.0:
            return np.zeros(d), np.zeros((d, d)), np.zeros((d, d))
        weights = weights / total
        val, grad, hess = modifier_terms(self.spec, s, prior, x, coefs_eval, order=2)
        safe = np.where(val == 0.0, 1.0, val)
        gratio = np.where(val[:, None] != 0.0, grad / safe[:, None], 0.0)
        hratio = np.where(val[:, None, None] != 0.0, hess / safe[:, None, None], 0.0)
        q1 = weights @ gratio
        q2 = np.einsum("i,ijk->jk", weights, hratio)
        var = np.einsum("i,ij,ik->jk", weights, gratio, gratio) - np.outer(q1, q1)
        return q1, q2, var

    # -- likelihood pieces ----------------------------------------------------

    def _event_terms(self, coefs: Coefs, order: int):
        return modifier_terms(self.spec, self.ev_cal, self.ev_k, self.ev_x, coefs, order=order)

    def loglik(self, coefs: Coefs) -> float:
        """Age-scale log partial likelihood (zero when there are no events)."""
        if not self.n_events:
            return 0.0
        val, _, _ = self._event_terms(coefs, order=0)
        if np.any(val <= 0.0) or not np.all(np.isfinite(val)):
            raise ParameterDomainError("nonpositive hazard modifier at an observed event")
        risk0 = self.tables(coefs, order=0).risk0[self.ev_gidx]
        if np.any(risk0 <= 0.0):
            raise EmptyRiskSetError("zero pooled risk at an observed event age")
        out = float(np.sum(np.log(val)) - np.sum(np.log(risk0 / self.n)))
        if not math.isfinite(out):
            raise ParameterDomainError("log partial likelihood is not finite")
        return out

    def score_and_hessian(self, coefs: Coefs, order: int = 2):
        """Per-unit-average score vector and Hessian of the log partial likelihood."""
        d = len(coefs.vector)
        if not self.n_events:
            return np.zeros(d), np.zeros((d, d))
        val, grad, hess = self._event_terms(coefs, order=order)
        if np.any(val <= 0.0) or not np.all(np.isfinite(val)):
            raise ParameterDomainError("nonpositive hazard modifier at an observed event")
        tables = self.tables(coefs, order=order)
        risk0 = tables.risk0[self.ev_gidx]
        if np.any(risk0 <= 0.0):
            raise EmptyRiskSetError("zero pooled risk at an observed event age")
        gratio = grad / val[:, None]
        pooled1 = tables.risk1[self.ev_gidx] / risk0[:, None]
        score_vec = (gratio - pooled1).sum(axis=0) / self.n
        if order < 2:
            return score_vec, np.zeros((d, d))
        hratio = hess / val[:, None, None]
        pooled2 = tables.risk2[self.ev_gidx] / risk0[:, None, None]
        own_outer = gratio[:, :, None] * gratio[:, None, :]
        pooled_outer = pooled1[:, :, None] * pooled1[:, None, :]
        hess_mat = (hratio - pooled2 - own_outer + pooled_outer).sum(axis=0) / self.n
        return score_vec, hess_mat

    def _safe_loglik(self, coefs: Coefs) -> float:
        try:
            return self.loglik(coefs)
        except (ParameterDomainError, EmptyRiskSetError):
            return -math.inf

    # -- fitting ----------------------------------------------------------------

    def fit(
        self,
        init: Coefs | None = None,
        tol: float = 1e-8,
        max_iter: int = 100,
        max_halvings: int = 30,
    ) -> CoefFit:
        """Newton-Raphson with step halving on the log partial likelihood.

        Falls back to a fixed gradient-ascent step when the Hessian is
        singular; stops as converged when the sup-norm of the score drops
        below ``tol``.
        """
        if not self.n_events:
            raise EmptyRiskSetError("cannot fit coefficients without any usable event")
        coefs = init if init is not None else self.spec.neutral_coefs(self.n_covariates)
        current = self.loglik(coefs)
        iterates = [coefs.vector]
        used_fallback = False
        converged = False
        iterations = 0
        norm = math.inf

        for iterations in range(max_iter + 1):
            score_vec, hess_mat = self.score_and_hessian(coefs)
            norm = float(np.max(np.abs(score_vec))) if score_vec.size else 0.0
            if norm < tol:
                converged = True
                break
            if iterations == max_iter:
                break
            try:
                step = np.linalg.solve(hess_mat, -score_vec)
                if not np.all(np.isfinite(step)):
                    raise np.linalg.LinAlgError
            except np.linalg.LinAlgError:
                step = 0.1 * score_vec
                used_fallback = True

            scale = 1.0
            improved = False
            for _ in range(max_halvings + 1):
                candidate = coefs.replace_vector(coefs.vector + scale * step)
                value = self._safe_loglik(candidate)
                if value > current:
                    coefs, current = candidate, value
                    improved = True
                    break
                scale *= 0.5
            if not improved:
                # Near the optimum the quadratic gain of a Newton step can
                # drop below the float resolution of the summed log
                # likelihood, so ascent can no longer be certified.  Accept
                # the full step anyway when it strictly shrinks the score
                # without measurably degrading the objective.
                candidate = coefs.replace_vector(coefs.vector + step)
                value = self._safe_loglik(candidate)
                slack = 1e-11 * (1.0 + abs(current))
                if value >= current - slack:
                    try:
                        cand_score, _ = self.score_and_hessian(candidate, order=1)
                    except (ParameterDomainError, EmptyRiskSetError):
                        cand_score = None
                    if cand_score is not None and np.max(np.abs(cand_score)) < norm:
                        coefs, current = candidate, max(value, current)
                        improved = True
            if not improved:
                break  # stalled: report non-convergence at the current point
            iterates.append(coefs.vector)

        return CoefFit(
            coefs=coefs,
            iterations=iterations,
            final_score_norm=norm,
            converged=converged,
            used_fallback=used_fallback,
            iterates=tuple(iterates),
        )

    # -- baseline estimators ------------------------------------------------------

    def cumhaz_jumps(self, coefs: Coefs) -> np.ndarray:
        """Occurrence/exposure jump at each grid age (0 where exposure is 0)."""
        risk0 = self.tables(coefs, order=0).risk0
        return np.where(risk0 > 0.0, self.grid_counts / np.where(risk0 <= 0.0, 1.0, risk0), 0.0)

    def baseline(self, coefs: Coefs) -> StepFunction:
        return StepFunction(self.grid, self.cumhaz_jumps(coefs))

    def survivor(self, coefs: Coefs) -> StepFunction:
        factors = 1.0 - self.cumhaz_jumps(coefs)
        if np.any(factors < 0.0):
            warnings.warn(
                "survivor factor went negative (a baseline jump exceeds 1); clipping at 0",
                RuntimeWarning,
                stacklevel=2,
            )
            first_bad = int(np.argmax(factors < 0.0))
            factors = factors.copy()
            factors[first_bad:] = np.maximum(factors[first_bad:], 0.0)
            factors[first_bad] = 0.0
        values = np.cumprod(factors)
        sizes = np.diff(np.concatenate([[1.0], values]))
        return StepFunction(self.grid, sizes, initial=1.0)


# ---------------------------------------------------------------------------
# Functional wrappers
# ---------------------------------------------------------------------------


def pooled_at_risk(cohort: Cohort, t: float, coefs: Coefs, spec: ModelSpec) -> float:
    """Cohort-average at-risk weight at age ``t``."""
    riskset = RiskSet(cohort, spec)
    r0, _, _ = riskset.at_risk_sums(t, coefs, order=0)
    return r0 / cohort.n


def pooled_at_risk_derivs(cohort: Cohort, t: float, coefs: Coefs, spec: ModelSpec):
    """Cohort-average at-risk weight and its coefficient derivatives."""
    riskset = RiskSet(cohort, spec)
    r0, r1, r2 = riskset.at_risk_sums(t, coefs, order=2)
    return r0 / cohort.n, r1 / cohort.n, r2 / cohort.n


def risk_set_moments(
    cohort: Cohort, t: float, coefs_weight: Coefs, coefs_eval: Coefs, spec: ModelSpec
):
    """Risk-weighted moments of the modifier's derivative ratios at age ``t``."""
    return RiskSet(cohort, spec).moments_at(t, coefs_weight, coefs_eval)


def log_partial_likelihood(
    cohort: Cohort, coefs: Coefs, spec: ModelSpec, t_star: float | None = None
) -> float:
    return RiskSet(cohort, spec, t_star).loglik(coefs)


def score(cohort: Cohort, coefs: Coefs, spec: ModelSpec, t_star: float | None = None) -> np.ndarray:
    return RiskSet(cohort, spec, t_star).score_and_hessian(coefs, order=1)[0]


def hessian(cohort: Cohort, coefs: Coefs, spec: ModelSpec, t_star: float | None = None) -> np.ndarray:
    return RiskSet(cohort, spec, t_star).score_and_hessian(coefs, order=2)[1]


def fit_coefs(
    cohort: Cohort,
    spec: ModelSpec,
    init: Coefs | None = None,
    t_star: float | None = None,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> CoefFit:
    """Maximize the age-scale partial likelihood over the modifier coefficients."""
    return RiskSet(cohort, spec, t_star).fit(init=init, tol=tol, max_iter=max_iter)


def baseline_cumhaz(
    cohort: Cohort, coefs: Coefs, spec: ModelSpec, t_star: float | None = None
) -> StepFunction:
    """Occurrence/exposure estimate of the baseline cumulative hazard."""
    return RiskSet(cohort, spec, t_star).baseline(coefs)


def baseline_survivor(
    cohort: Cohort, coefs: Coefs, spec: ModelSpec, t_star: float | None = None
) -> StepFunction:
    """Product-limit estimate of the baseline survivor function."""
    return RiskSet(cohort, spec, t_star).survivor(coefs)
