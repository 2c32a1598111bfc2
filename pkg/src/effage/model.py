"""Core types and exact evaluation for effective-age recurrent event models.

A unit is observed over the calendar window [0, s_star] until an independent
censoring time tau.  It experiences events at calendar times S_1 < S_2 < ...,
and between events it carries an *effective age*: a predictable, piecewise
linear clock that restarts, keeps running, or rescales after each event
depending on the repair policy.  The event intensity at calendar time s is

    at-risk(s) * baseline_rate(effective_age(s)) * modifier(s)

where the modifier is the product of an event-count effect and a covariate
link.  This module provides the building blocks (step functions, baseline
hazards, covariate paths, unit histories) and exact evaluation of the
doubly-indexed processes used for estimation: the event-age counting process,
the generalized at-risk process over age, its compensator, and the martingale
residual.

All evaluation here is exact piecewise computation; nothing is approximated
by generic quadrature unless a user-supplied count effect varies with
calendar time between events.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

__all__ = [
    "EffageError",
    "ZeroSlopeError",
    "ParameterDomainError",
    "StepFunction",
    "BaselineHazard",
    "ConstantHazard",
    "WeibullHazard",
    "CovariatePath",
    "EffectiveAgeSpec",
    "CountEffect",
    "NoCountEffect",
    "GeometricCount",
    "LogLinearCount",
    "CustomCountEffect",
    "CovariateLink",
    "ConstantLink",
    "ExpLink",
    "SoftplusLink",
    "Coefs",
    "ModelSpec",
    "ModelParams",
    "UnitPath",
    "Cohort",
    "effective_age",
    "age_inverse",
    "rate_modifier",
    "intensity",
    "event_age_counts",
    "at_risk",
    "compensator",
    "martingale_residual",
]


class EffageError(Exception):
    """Base class for errors raised by this package."""


class ZeroSlopeError(EffageError):
    """An age segment with zero slope was used where its inverse is required."""


class ParameterDomainError(EffageError, ValueError):
    """Model parameters fell outside the domain of a hazard modifier."""


# ---------------------------------------------------------------------------
# Step functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous step function with finitely many jumps.

    ``value(t) = initial + sum of sizes at locations <= t``.

    Parameters
    ----------
    locations : array_like
        Strictly increasing jump locations.
    sizes : array_like
        Jump sizes, one per location.  Signs are unconstrained.
    initial : float
        Value on ``[0, locations[0])`` (and everywhere if there are no jumps).
    """

    locations: np.ndarray
    sizes: np.ndarray
    initial: float = 0.0

    def __post_init__(self) -> None:
        loc = np.atleast_1d(np.asarray(self.locations, dtype=float))
        siz = np.atleast_1d(np.asarray(self.sizes, dtype=float))
        if loc.size == 0:
            loc = loc.reshape(0)
            siz = siz.reshape(0)
        if loc.ndim != 1 or siz.ndim != 1 or loc.shape != siz.shape:
            raise ValueError("locations and sizes must be 1-d arrays of equal length")
        if not np.all(np.isfinite(loc)) or not np.all(np.isfinite(siz)):
            raise ValueError("step function data must be finite")
        if loc.size and np.any(np.diff(loc) <= 0.0):
            raise ValueError("jump locations must be strictly increasing")
        if not math.isfinite(self.initial):
            raise ValueError("initial value must be finite")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "sizes", siz)
        object.__setattr__(self, "_cum", self.initial + np.concatenate([[0.0], np.cumsum(siz)]))

    @classmethod
    def from_jumps(
        cls, locations: Sequence[float], sizes: Sequence[float], initial: float = 0.0
    ) -> "StepFunction":
        """Build a step function from unsorted jumps, summing ties."""
        loc = np.asarray(locations, dtype=float)
        siz = np.asarray(sizes, dtype=float)
        if loc.size == 0:
            return cls(loc, siz, initial)
        order = np.argsort(loc, kind="stable")
        loc, siz = loc[order], siz[order]
        uniq, inverse = np.unique(loc, return_inverse=True)
        merged = np.zeros_like(uniq)
        np.add.at(merged, inverse, siz)
        return cls(uniq, merged, initial)

    @property
    def n_jumps(self) -> int:
        return int(self.locations.size)

    @property
    def values(self) -> np.ndarray:
        """Function values at the jump locations (right limits)."""
        return self._cum[1:]

    def __call__(self, t):
        """Evaluate at ``t`` (scalar or array), right-continuously."""
        idx = np.searchsorted(self.locations, t, side="right")
        out = self._cum[idx]
        return float(out) if np.isscalar(t) else out

    def before(self, t):
        """Left limit at ``t`` (scalar or array)."""
        idx = np.searchsorted(self.locations, t, side="left")
        out = self._cum[idx]
        return float(out) if np.isscalar(t) else out


# ---------------------------------------------------------------------------
# Baseline hazards over effective age
# ---------------------------------------------------------------------------


class BaselineHazard:
    """Absolutely continuous hazard over effective age.

    Subclasses provide the rate, the cumulative hazard, and (when available
    in closed form) the inverse cumulative hazard used by the exact
    inversion sampler.
    """

    def rate(self, t):
        raise NotImplementedError

    def cum(self, t):
        raise NotImplementedError

    def cum_inverse(self, u):
        """Smallest ``t`` with ``cum(t) = u``; may raise NotImplementedError."""
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantHazard(BaselineHazard):
    """Constant baseline rate: ``cum(t) = level * t``."""

    level: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.level) and self.level >= 0.0):
            raise ValueError("hazard level must be finite and nonnegative")

    def rate(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.level) if not np.isscalar(t) else self.level

    def cum(self, t):
        return self.level * np.asarray(t, dtype=float) if not np.isscalar(t) else self.level * t

    def cum_inverse(self, u):
        if self.level <= 0.0:
            return math.inf
        return u / self.level


@dataclass(frozen=True)
class WeibullHazard(BaselineHazard):
    """Weibull baseline: ``cum(t) = (t / scale) ** shape``.

    ``shape > 1`` gives an increasing rate (wear-out), ``shape < 1`` a
    decreasing one.  ``WeibullHazard(2.0, 1.0)`` has rate ``2 t``.
    """

    shape: float
    scale: float = 1.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.shape) and self.shape > 0.0):
            raise ValueError("shape must be finite and positive")
        if not (math.isfinite(self.scale) and self.scale > 0.0):
            raise ValueError("scale must be finite and positive")

    def rate(self, t):
        t = np.asarray(t, dtype=float)
        out = (self.shape / self.scale) * (t / self.scale) ** (self.shape - 1.0)
        return float(out) if out.ndim == 0 else out

    def cum(self, t):
        t = np.asarray(t, dtype=float)
        out = (t / self.scale) ** self.shape
        return float(out) if out.ndim == 0 else out

    def cum_inverse(self, u):
        return self.scale * u ** (1.0 / self.shape)


# ---------------------------------------------------------------------------
# Covariate paths
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CovariatePath:
    """Piecewise-constant, left-continuous covariate vector over calendar time.

    ``times`` must start at 0; ``values[i]`` is the covariate vector in force
    on the interval ``(times[i], times[i+1]]`` (and ``values[0]`` on
    ``[0, times[1]]``).  Left continuity keeps the path predictable: the
    value used at an event time is the value from just before it.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(len(times), -1) if values.size else values.reshape(1, 0)
        if times.ndim != 1 or times.size == 0 or times[0] != 0.0:
            raise ValueError("covariate times must be a 1-d array starting at 0")
        if times.size > 1 and np.any(np.diff(times) <= 0.0):
            raise ValueError("covariate times must be strictly increasing")
        if values.shape[0] != times.size:
            raise ValueError("one covariate vector per step time is required")
        if values.size and not np.all(np.isfinite(values)):
            raise ValueError("covariate values must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, x: Sequence[float]) -> "CovariatePath":
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return cls(np.zeros(1), x.reshape(1, -1))

    @classmethod
    def empty(cls) -> "CovariatePath":
        """Path with no covariates (dimension zero)."""
        return cls(np.zeros(1), np.zeros((1, 0)))

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])

    def at(self, s):
        """Covariate vector in force at calendar time ``s`` (left-continuous)."""
        idx = np.searchsorted(self.times, s, side="left") - 1
        idx = np.maximum(idx, 0)
        return self.values[idx]

    def step_times_within(self, lo: float, hi: float) -> np.ndarray:
        """Step times strictly inside ``(lo, hi)``."""
        i = np.searchsorted(self.times, lo, side="right")
        j = np.searchsorted(self.times, hi, side="left")
        return self.times[i:j]


# ---------------------------------------------------------------------------
# Event-count effects and covariate links (the hazard modifier)
# ---------------------------------------------------------------------------


class CountEffect:
    """Multiplier on the hazard as a function of the running event count.

    The value at zero prior events is 1 for every parameter value, so the
    effect only modulates recurrence, never the first event.  ``grad`` and
    ``hess`` differentiate with respect to the effect's own parameters and
    must return zero blocks matching the length of whatever parameter
    vector is passed (families with no parameters accept dummies).
    """

    n_params: int = 0
    time_invariant: bool = True

    @property
    def neutral(self) -> np.ndarray:
        """Parameter point at which the effect is identically 1."""
        return np.zeros(self.n_params)

    def value(self, s, k, count_params):
        raise NotImplementedError

    def grad(self, s, k, count_params):
        raise NotImplementedError

    def hess(self, s, k, count_params):
        raise NotImplementedError


def _broadcast_sk(s, k):
    s = np.asarray(s, dtype=float)
    k = np.asarray(k, dtype=float)
    return np.broadcast_arrays(s, k)


@dataclass(frozen=True)
class NoCountEffect(CountEffect):
    """No dependence on the event count (multiplier 1)."""

    n_params = 0

    def value(self, s, k, count_params):
        s, k = _broadcast_sk(s, k)
        return np.ones_like(k)

    def grad(self, s, k, count_params):
        s, k = _broadcast_sk(s, k)
        q = len(np.atleast_1d(count_params))
        return np.zeros(k.shape + (q,))

    def hess(self, s, k, count_params):
        s, k = _broadcast_sk(s, k)
        q = len(np.atleast_1d(count_params))
        return np.zeros(k.shape + (q, q))


@dataclass(frozen=True)
class GeometricCount(CountEffect):
    """Multiplier ``ratio ** k`` after ``k`` events, for a positive ratio.

    A ratio below 1 damps recurrence with every event; above 1 each event
    makes the next one more likely.  The ratio is the single parameter.
    """

    n_params = 1

    @property
    def neutral(self) -> np.ndarray:
        return np.ones(1)

    @staticmethod
    def _ratio(count_params) -> float:
        params = np.atleast_1d(np.asarray(count_params, dtype=float))
        if params.size != 1:
            raise ValueError("geometric count effect takes exactly one parameter")
        ratio = float(params[0])
        if not (ratio > 0.0 and math.isfinite(ratio)):
            raise ParameterDomainError("geometric count ratio must be positive")
        return ratio

    def value(self, s, k, count_params):
        ratio = self._ratio(count_params)
        s, k = _broadcast_sk(s, k)
        return ratio**k

    def grad(self, s, k, count_params):
        ratio = self._ratio(count_params)
        s, k = _broadcast_sk(s, k)
        return (k * ratio ** (k - 1.0))[..., None]

    def hess(self, s, k, count_params):
        ratio = self._ratio(count_params)
        s, k = _broadcast_sk(s, k)
        return (k * (k - 1.0) * ratio ** (k - 2.0))[..., None, None]


@dataclass(frozen=True)
class LogLinearCount(CountEffect):
    """Multiplier ``exp(rate * k)`` after ``k`` events.

    The neutral point is rate 0; the parameter is unconstrained.
    """

    n_params = 1

    @staticmethod
    def _rate(count_params) -> float:
        params = np.atleast_1d(np.asarray(count_params, dtype=float))
        if params.size != 1:
            raise ValueError("log-linear count effect takes exactly one parameter")
        return float(params[0])

    def value(self, s, k, count_params):
        rate = self._rate(count_params)
        s, k = _broadcast_sk(s, k)
        return np.exp(rate * k)

    def grad(self, s, k, count_params):
        rate = self._rate(count_params)
        s, k = _broadcast_sk(s, k)
        return (k * np.exp(rate * k))[..., None]

    def hess(self, s, k, count_params):
        rate = self._rate(count_params)
        s, k = _broadcast_sk(s, k)
        return (k * k * np.exp(rate * k))[..., None, None]


@dataclass(frozen=True, eq=False)
class CustomCountEffect(CountEffect):
    """User-supplied count effect given by value/grad/hess callbacks.

    Callbacks receive broadcast arrays of calendar times and prior event
    counts plus the parameter vector, and must return arrays shaped
    ``(...)``, ``(..., q)`` and ``(..., q, q)``.  Set ``time_invariant``
    only if the value does not depend on calendar time between events;
    that unlocks the fast estimation path.
    """

    value_fn: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    grad_fn: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    hess_fn: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    n_params: int = 1
    time_invariant: bool = False
    neutral_point: tuple[float, ...] = ()

    @property
    def neutral(self) -> np.ndarray:
        if self.neutral_point:
            return np.asarray(self.neutral_point, dtype=float)
        return np.zeros(self.n_params)

    def value(self, s, k, count_params):
        s, k = _broadcast_sk(s, k)
        return np.asarray(self.value_fn(s, k, np.atleast_1d(count_params)), dtype=float)

    def grad(self, s, k, count_params):
        s, k = _broadcast_sk(s, k)
        return np.asarray(self.grad_fn(s, k, np.atleast_1d(count_params)), dtype=float)

    def hess(self, s, k, count_params):
        s, k = _broadcast_sk(s, k)
        return np.asarray(self.hess_fn(s, k, np.atleast_1d(count_params)), dtype=float)


class CovariateLink:
    """Positive transform of the covariate index that scales the hazard."""

    uses_covariates: bool = True

    def value(self, u):
        raise NotImplementedError

    def deriv(self, u):
        raise NotImplementedError

    def deriv2(self, u):
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantLink(CovariateLink):
    """No covariate effect: the link is identically 1."""

    uses_covariates = False

    def value(self, u):
        return np.ones_like(np.asarray(u, dtype=float))

    def deriv(self, u):
        return np.zeros_like(np.asarray(u, dtype=float))

    def deriv2(self, u):
        return np.zeros_like(np.asarray(u, dtype=float))


@dataclass(frozen=True)
class ExpLink(CovariateLink):
    """Log-linear covariate effect ``exp(x . coefficients)``."""

    def value(self, u):
        return np.exp(np.asarray(u, dtype=float))

    def deriv(self, u):
        return np.exp(np.asarray(u, dtype=float))

    def deriv2(self, u):
        return np.exp(np.asarray(u, dtype=float))


@dataclass(frozen=True)
class SoftplusLink(CovariateLink):
    """Softplus covariate effect ``log(1 + exp(x . coefficients))``.

    Stays positive like the log-linear link but grows only linearly, which
    tames the influence of large covariate indexes.
    """

    def value(self, u):
        return np.logaddexp(0.0, np.asarray(u, dtype=float))

    def deriv(self, u):
        return expit(np.asarray(u, dtype=float))

    def deriv2(self, u):
        p = expit(np.asarray(u, dtype=float))
        return p * (1.0 - p)


# ---------------------------------------------------------------------------
# Coefficients and model specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Coefs:
    """Parameter vector of the hazard modifier.

    ``count`` parameterizes the event-count effect and ``covariate`` holds
    the regression coefficients.  Evaluation code differentiates with
    respect to the concatenation ``vector = [count, covariate]``.
    """

    count: np.ndarray
    covariate: np.ndarray

    def __post_init__(self) -> None:
        count = np.atleast_1d(np.asarray(self.count, dtype=float))
        covariate = np.atleast_1d(np.asarray(self.covariate, dtype=float))
        if count.size == 0:
            count = count.reshape(0)
        if covariate.size == 0:
            covariate = covariate.reshape(0)
        if not (np.all(np.isfinite(count)) and np.all(np.isfinite(covariate))):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "count", count)
        object.__setattr__(self, "covariate", covariate)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.count, self.covariate])

    @property
    def dim(self) -> int:
        return self.count.size + self.covariate.size

    @classmethod
    def from_vector(cls, vec: Sequence[float], n_count: int) -> "Coefs":
        vec = np.asarray(vec, dtype=float)
        return cls(vec[:n_count], vec[n_count:])

    def replace_vector(self, vec: Sequence[float]) -> "Coefs":
        return Coefs.from_vector(vec, self.count.size)

    def __repr__(self) -> str:  # keep reprs short in test output
        return f"Coefs(count={self.count.tolist()}, covariate={self.covariate.tolist()})"


@dataclass(frozen=True)
class ModelSpec:
    """Pairing of an event-count effect and a covariate link."""

    count_effect: CountEffect
    link: CovariateLink

    def coef_dim(self, n_covariates: int) -> int:
        extra = n_covariates if self.link.uses_covariates else 0
        return self.count_effect.n_params + extra

    def neutral_coefs(self, n_covariates: int) -> Coefs:
        extra = n_covariates if self.link.uses_covariates else 0
        return Coefs(self.count_effect.neutral, np.zeros(extra))

    def is_degenerate(self, n_covariates: int) -> bool:
        """True when the modifier cannot depend on any coefficient."""
        return self.coef_dim(n_covariates) == 0


@dataclass(frozen=True)
class ModelParams:
    """Full generative parameter set: baseline hazard plus modifier."""

    spec: ModelSpec
    baseline: BaselineHazard | StepFunction
    coefs: Coefs


def modifier_terms(
    spec: ModelSpec,
    s: np.ndarray,
    k: np.ndarray,
    x: np.ndarray,
    coefs: Coefs,
    order: int = 2,
):
    """Vectorized modifier value and its first two coefficient derivatives.

    Parameters
    ----------
    s, k : array_like, shape (n,)
        Calendar times and prior event counts.
    x : ndarray, shape (n, p)
        Covariate vectors in force at those times.
    order : int
        0 for values only, 1 to add gradients, 2 to add Hessians.

    Returns
    -------
    value : ndarray (n,)
    grad : ndarray (n, d) or None
    hess : ndarray (n, d, d) or None
        ``d = len(coefs.vector)``; blocks for unused parameters are zero.
    """
    s = np.asarray(s, dtype=float)
    k = np.asarray(k, dtype=float)
    x = np.asarray(x, dtype=float)
    n = s.shape[0]
    q = coefs.count.size
    p = coefs.covariate.size
    d = q + p

    count_val = spec.count_effect.value(s, k, coefs.count)
    if spec.link.uses_covariates and p:
        if x.shape[1] != p:
            raise ValueError(
                f"covariate dimension {x.shape[1]} does not match {p} coefficients"
            )
        u = x @ coefs.covariate
    else:
        u = np.zeros(n)
    link_val = spec.link.value(u)
    value = count_val * link_val
    if order == 0:
        return value, None, None

    grad = np.zeros((n, d))
    if q:
        grad[:, :q] = spec.count_effect.grad(s, k, coefs.count) * link_val[:, None]
    if p and spec.link.uses_covariates:
        grad[:, q:] = (count_val * spec.link.deriv(u))[:, None] * x
    if order == 1:
        return value, grad, None

    hess = np.zeros((n, d, d))
    if q:
        hess[:, :q, :q] = spec.count_effect.hess(s, k, coefs.count) * link_val[:, None, None]
    if p and spec.link.uses_covariates:
        dlink = spec.link.deriv(u)
        hess[:, q:, q:] = (count_val * spec.link.deriv2(u))[:, None, None] * (
            x[:, :, None] * x[:, None, :]
        )
        if q:
            cross = spec.count_effect.grad(s, k, coefs.count)[:, :, None] * (
                dlink[:, None, None] * x[:, None, :]
            )
            hess[:, :q, q:] = cross
            hess[:, q:, :q] = np.swapaxes(cross, 1, 2)
    return value, grad, hess


# ---------------------------------------------------------------------------
# Unit histories
# ---------------------------------------------------------------------------


_POLICIES = ("perfect", "minimal", "piecewise")


@dataclass(frozen=True)
class EffectiveAgeSpec:
    """How a unit's effective age evolves across its event segments.

    ``perfect`` restarts the age at 0 after every event, ``minimal`` keeps
    the age equal to calendar time, and ``piecewise`` takes an explicit
    ``(start_age, slope)`` pair per segment (one more segment than events).
    """

    policy: str
    segments: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self) -> None:
        if self.policy not in _POLICIES:
            raise ValueError(f"unknown age policy {self.policy!r}")
        if self.policy == "piecewise":
            if not self.segments:
                raise ValueError("piecewise policy requires per-segment (start_age, slope)")
            object.__setattr__(
                self,
                "segments",
                tuple((float(a), float(b)) for a, b in self.segments),
            )
        elif self.segments is not None:
            raise ValueError("explicit segments are only valid with the piecewise policy")

    @classmethod
    def perfect(cls) -> "EffectiveAgeSpec":
        return cls("perfect")

    @classmethod
    def minimal(cls) -> "EffectiveAgeSpec":
        return cls("minimal")

    @classmethod
    def piecewise(cls, segments: Sequence[tuple[float, float]]) -> "EffectiveAgeSpec":
        return cls("piecewise", tuple(segments))


@dataclass(frozen=True, eq=False)
class UnitPath:
    """One unit's observed history.

    Parameters
    ----------
    event_times : array_like
        Strictly increasing event times inside ``(0, min(tau, s_star))``.
    tau : float
        Censoring time (may exceed ``s_star``).
    s_star : float
        End of the observation window.
    age_spec : EffectiveAgeSpec
        Repair policy; a piecewise spec needs one ``(start_age, slope)``
        pair per segment, final censored segment included.
    covariates : CovariatePath, optional
        Defaults to a zero-dimensional path.

    Notes
    -----
    Segments are numbered 1..m+1 for m events: segment j covers calendar
    times ``(S_{j-1}, S_j]`` with ``S_0 = 0`` and ``S_{m+1} = min(tau,
    s_star)``.  On segment j the effective age is ``start_age + slope * (s
    - S_{j-1})``, and the unit has seen ``j - 1`` events.  The construction
    enforces that effective age never exceeds calendar time.
    """

    event_times: np.ndarray
    tau: float
    s_star: float
    age_spec: EffectiveAgeSpec
    covariates: CovariatePath = field(default_factory=CovariatePath.empty)

    def __post_init__(self) -> None:
        events = np.atleast_1d(np.asarray(self.event_times, dtype=float))
        if events.size == 0:
            events = events.reshape(0)
        if not (math.isfinite(self.tau) and self.tau > 0.0):
            raise ValueError("censoring time must be finite and positive")
        if not (math.isfinite(self.s_star) and self.s_star > 0.0):
            raise ValueError("observation window must be finite and positive")
        obs_end = min(self.tau, self.s_star)
        if events.size:
            if not np.all(np.isfinite(events)):
                raise ValueError("event times must be finite")
            if np.any(np.diff(events) <= 0.0):
                raise ValueError("event times must be strictly increasing (ties forbidden)")
            if events[0] <= 0.0 or events[-1] >= obs_end:
                raise ValueError("event times must lie strictly inside (0, min(tau, s_star))")
        object.__setattr__(self, "event_times", events)

        m = events.size
        bounds = np.concatenate([[0.0], events, [obs_end]])
        if self.age_spec.policy == "perfect":
            start_ages = np.zeros(m + 1)
            slopes = np.ones(m + 1)
        elif self.age_spec.policy == "minimal":
            start_ages = bounds[:-1].copy()
            slopes = np.ones(m + 1)
        else:
            segs = self.age_spec.segments
            if len(segs) != m + 1:
                raise ValueError(
                    f"piecewise policy needs {m + 1} segments, got {len(segs)}"
                )
            start_ages = np.array([a for a, _ in segs], dtype=float)
            slopes = np.array([b for _, b in segs], dtype=float)
            if np.any(start_ages < 0.0) or np.any(slopes < 0.0):
                raise ValueError("start ages and slopes must be nonnegative")
            if np.any(start_ages > bounds[:-1] + 1e-12):
                raise ValueError("effective age would exceed calendar time at a segment start")
            end_ages = start_ages + slopes * np.diff(bounds)
            if np.any(end_ages > bounds[1:] + 1e-12):
                raise ValueError("effective age would exceed calendar time at a segment end")
        object.__setattr__(self, "_bounds", bounds)
        object.__setattr__(self, "_start_ages", start_ages)
        object.__setattr__(self, "_slopes", slopes)

    # -- basic structure ----------------------------------------------------

    @property
    def n_events(self) -> int:
        return int(self.event_times.size)

    @property
    def obs_end(self) -> float:
        """End of this unit's at-risk period, ``min(tau, s_star)``."""
        return float(self._bounds[-1])

    @property
    def n_segments(self) -> int:
        return int(self._slopes.size)

    @property
    def segment_bounds(self) -> np.ndarray:
        """Calendar boundaries ``[0, S_1, ..., S_m, obs_end]``."""
        return self._bounds

    @property
    def segment_start_ages(self) -> np.ndarray:
        return self._start_ages

    @property
    def segment_slopes(self) -> np.ndarray:
        return self._slopes

    def segment_end_ages(self) -> np.ndarray:
        return self._start_ages + self._slopes * np.diff(self._bounds)

    @property
    def event_ages(self) -> np.ndarray:
        """Effective ages at the unit's own events."""
        return self.segment_end_ages()[: self.n_events]

    def segment_of(self, s: float) -> int:
        """1-based index of the segment whose calendar interval contains ``s``.

        Times past the last boundary map to the final segment (its age map
        extends naturally; the unit is no longer at risk there).
        """
        j = bisect.bisect_left(self._bounds, s)
        return min(max(j, 1), self.n_segments)

    def segments_upto(self, s: float):
        """Segments truncated to calendar times ``<= min(s, tau)``.

        Yields ``(index, cal_lo, cal_hi, start_age, slope)`` with the last
        interval clipped at ``min(s, tau)``.
        """
        end = min(s, self.tau)
        out = []
        for j in range(1, self.n_segments + 1):
            lo = self._bounds[j - 1]
            hi = min(self._bounds[j], end)
            if hi <= lo:
                break
            out.append((j, float(lo), float(hi), float(self._start_ages[j - 1]), float(self._slopes[j - 1])))
        return out


@dataclass(frozen=True, eq=False)
class Cohort:
    """A sample of units sharing one observation window."""

    units: tuple[UnitPath, ...]
    t_star: float | None = None

    def __post_init__(self) -> None:
        units = tuple(self.units)
        if not units:
            raise ValueError("a cohort needs at least one unit")
        s_star = units[0].s_star
        if any(u.s_star != s_star for u in units):
            raise ValueError("all units must share the same observation window")
        if self.t_star is not None and not (math.isfinite(self.t_star) and self.t_star > 0.0):
            raise ValueError("age cutoff t_star must be positive")
        object.__setattr__(self, "units", units)

    @property
    def n(self) -> int:
        return len(self.units)

    @property
    def s_star(self) -> float:
        return self.units[0].s_star

    @property
    def dim_covariates(self) -> int:
        return max(u.covariates.dim for u in self.units)

    def n_events(self) -> int:
        return sum(u.n_events for u in self.units)

    def event_ages(self) -> np.ndarray:
        """All event ages pooled across units (unsorted)."""
        ages = [u.event_ages for u in self.units if u.n_events]
        return np.concatenate(ages) if ages else np.zeros(0)

    def max_event_age(self) -> float:
        ages = self.event_ages()
        return float(ages.max()) if ages.size else 0.0


# ---------------------------------------------------------------------------
# Model operations on a single unit
# ---------------------------------------------------------------------------


def effective_age(unit: UnitPath, s: float) -> float:
    """Effective age of the unit at calendar time ``s``.

    Piecewise linear and left-continuous: at an event time the age of the
    ending segment applies, immediately after it the next segment's start
    age takes over.
    """
    if not (0.0 <= s <= unit.s_star):
        raise ValueError(f"calendar time {s} outside [0, {unit.s_star}]")
    j = unit.segment_of(s)
    a = unit.segment_start_ages[j - 1]
    b = unit.segment_slopes[j - 1]
    return float(a + b * (s - unit.segment_bounds[j - 1]))


def age_inverse(unit: UnitPath, segment: int, t: float) -> float:
    """Calendar time at which segment ``segment`` reaches effective age ``t``.

    The segment's age range is the half-open interval
    ``(start_age, start_age + slope * length]``; ``t`` must fall inside it.
    """
    if not 1 <= segment <= unit.n_segments:
        raise ValueError(f"segment index {segment} out of range 1..{unit.n_segments}")
    a = unit.segment_start_ages[segment - 1]
    b = unit.segment_slopes[segment - 1]
    lo = unit.segment_bounds[segment - 1]
    hi = unit.segment_bounds[segment]
    if b == 0.0:
        raise ZeroSlopeError(f"segment {segment} has zero slope; its age map has no inverse")
    age_hi = a + b * (hi - lo)
    if not (a < t <= age_hi):
        raise ValueError(f"age {t} outside segment {segment} age range ({a}, {age_hi}]")
    return float(lo + (t - a) / b)


def rate_modifier(unit: UnitPath, s: float, coefs: Coefs, spec: ModelSpec):
    """Hazard modifier at calendar time ``s``: value, gradient, Hessian.

    The modifier multiplies the baseline rate and is the product of the
    event-count effect (at the number of events strictly before ``s``) and
    the covariate link at the current covariate index.
    """
    if not (0.0 <= s <= unit.s_star):
        raise ValueError(f"calendar time {s} outside [0, {unit.s_star}]")
    j = unit.segment_of(s)
    x = unit.covariates.at(s).reshape(1, -1)
    value, grad, hess = modifier_terms(
        spec, np.array([s]), np.array([j - 1.0]), x, coefs, order=2
    )
    return float(value[0]), grad[0], hess[0]


def intensity(unit: UnitPath, s: float, params: ModelParams) -> float:
    """Instantaneous event rate at calendar time ``s``.

    Zero once the unit is censored.  Requires an absolutely continuous
    baseline; a step-function baseline has no pointwise rate.
    """
    if isinstance(params.baseline, StepFunction):
        raise TypeError("intensity is undefined for a step-function baseline")
    if not (0.0 <= s <= unit.s_star):
        raise ValueError(f"calendar time {s} outside [0, {unit.s_star}]")
    if s > unit.tau:
        return 0.0
    value, _, _ = rate_modifier(unit, s, params.coefs, params.spec)
    return float(params.baseline.rate(effective_age(unit, s)) * value)


def event_age_counts(unit: UnitPath, s: float) -> StepFunction:
    """Counting process over effective age of events up to calendar time ``s``.

    Jumps by one at the effective age of each event time ``<= s``; ties in
    age accumulate into a single jump.
    """
    if not (0.0 <= s <= unit.s_star):
        raise ValueError(f"calendar time {s} outside [0, {unit.s_star}]")
    mask = unit.event_times <= s
    ages = unit.event_ages[mask]
    return StepFunction.from_jumps(ages, np.ones_like(ages))


def _segment_pieces(unit: UnitPath, segments):
    """Split truncated segments at covariate step times.

    Yields ``(j, v_lo, v_hi, start_age, slope, x)`` with ``x`` the covariate
    vector in force on ``(v_lo, v_hi]``.
    """
    for j, lo, hi, a, b in segments:
        steps = unit.covariates.step_times_within(lo, hi)
        edges = np.concatenate([[lo], steps, [hi]])
        for v_lo, v_hi in zip(edges[:-1], edges[1:]):
            yield j, float(v_lo), float(v_hi), a, b, unit.covariates.at(v_hi)


def at_risk(unit: UnitPath, s: float, t: float, coefs: Coefs, spec: ModelSpec) -> float:
    """Generalized at-risk process over effective age.

    Sums, over the segments the unit has begun by calendar time ``s``, the
    modifier-to-slope ratio of every segment whose age range covers ``t``
    (ranges are half-open on the left, closed on the right).  This is the
    age-scale risk weight whose cohort average normalizes the partial
    likelihood.
    """
    if t <= 0.0:
        return 0.0
    total = 0.0
    for j, lo, hi, a, b in unit.segments_upto(s):
        if b == 0.0:
            if hi > lo:
                raise ZeroSlopeError(
                    f"segment {j} has zero slope; the age-scale risk weight is undefined"
                )
            continue
        age_hi = a + b * (hi - lo)
        if a < t <= age_hi:
            v = lo + (t - a) / b
            x = unit.covariates.at(v).reshape(1, -1)
            value, _, _ = modifier_terms(
                spec, np.array([v]), np.array([j - 1.0]), x, coefs, order=0
            )
            total += value[0] / b
    return float(total)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


def _cum_between(baseline: BaselineHazard, lo: float, hi: float) -> float:
    return float(baseline.cum(hi) - baseline.cum(lo))


def compensator(unit: UnitPath, s: float, t: float, params: ModelParams) -> float:
    """Compensator of the event-age counting process, exactly integrated.

    Integrates the at-risk process against the baseline cumulative hazard
    over ages up to ``t``, using the unit's history up to calendar time
    ``s``.  Piecewise closed form for the built-in effect families; a
    calendar-time-varying custom count effect is integrated with fixed
    high-order Gauss-Legendre nodes per smooth piece.
    """
    if not (0.0 <= s <= unit.s_star):
        raise ValueError(f"calendar time {s} outside [0, {unit.s_star}]")
    if t <= 0.0:
        return 0.0
    spec, coefs = params.spec, params.coefs

    if isinstance(params.baseline, StepFunction):
        locs = params.baseline.locations
        sizes = params.baseline.sizes
        mask = locs <= t
        return float(
            sum(size * at_risk(unit, s, float(w), coefs, spec) for w, size in zip(locs[mask], sizes[mask]))
        )

    baseline = params.baseline
    total = 0.0
    for j, v_lo, v_hi, a, b, x in _segment_pieces(unit, unit.segments_upto(s)):
        if b == 0.0:
            raise ZeroSlopeError(
                f"segment {j} has zero slope; the age-scale compensator is undefined"
            )
        w_lo = a + b * (v_lo - unit.segment_bounds[j - 1])
        w_hi = a + b * (v_hi - unit.segment_bounds[j - 1])
        w_hi = min(w_hi, t)
        if w_hi <= w_lo:
            continue
        if spec.count_effect.time_invariant:
            value, _, _ = modifier_terms(
                spec, np.array([v_hi]), np.array([j - 1.0]), x.reshape(1, -1), coefs, order=0
            )
            total += value[0] / b * _cum_between(baseline, w_lo, w_hi)
        else:
            # age-scale quadrature of modifier(age_inverse(w)) * rate(w) / slope
            half = 0.5 * (w_hi - w_lo)
            mid = 0.5 * (w_hi + w_lo)
            w = mid + half * _GL_NODES
            v = unit.segment_bounds[j - 1] + (w - a) / b
            value, _, _ = modifier_terms(
                spec, v, np.full_like(v, j - 1.0), np.broadcast_to(x, (v.size, x.size)), coefs, order=0
            )
            total += half * float(np.sum(_GL_WEIGHTS * value * baseline.rate(w))) / b
    return float(total)


def martingale_residual(unit: UnitPath, s: float, t: float, params: ModelParams) -> float:
    """Observed minus compensated event count over ages up to ``t``."""
    observed = event_age_counts(unit, s)(t)
    return float(observed - compensator(unit, s, t, params))
