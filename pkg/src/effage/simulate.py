"""Exact simulation of effective-age recurrent event histories.

Next-event times are drawn by inverting the conditional cumulative hazard:
a unit exponential draw E is matched against the integrated intensity over
the current segment, piece by piece across covariate steps.  Within a
piece the integral has closed form whenever the baseline's cumulative
hazard does; otherwise the crossing time is bracketed and bisected to
1e-12.  Units accrue events until the draw overshoots the remaining
integrated hazard before ``min(tau, s_star)``, which censors them.

Every unit gets its own counter-based generator substream, so cohorts are
bit-identical for a given (seed, n, config) no matter how or in what order
units are realized.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from effage.model import (
    BaselineHazard,
    Cohort,
    Coefs,
    CovariatePath,
    EffectiveAgeSpec,
    EffageError,
    ModelParams,
    ModelSpec,
    StepFunction,
    UnitPath,
    modifier_terms,
)

__all__ = [
    "ExplosionError",
    "CensoringDist",
    "FixedCensoring",
    "UniformCensoring",
    "ExponentialCensoring",
    "CovariateGenerator",
    "NoCovariates",
    "ConstantCovariates",
    "ScheduledCovariates",
    "FixedCovariates",
    "AgePolicy",
    "PerfectRepairPolicy",
    "MinimalRepairPolicy",
    "ScaledRepairPolicy",
    "SimConfig",
    "next_event_time",
    "draw_unit",
    "draw_cohort",
]

_BISECT_TOL = 1e-12


class ExplosionError(EffageError):
    """A unit exceeded the per-unit event budget during simulation."""


# ---------------------------------------------------------------------------
# Censoring and covariate generators
# ---------------------------------------------------------------------------


class CensoringDist:
    """Distribution of the independent censoring time."""

    def draw(self, rng: np.random.Generator) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class FixedCensoring(CensoringDist):
    value: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.value) and self.value > 0.0):
            raise ValueError("censoring time must be positive")

    def draw(self, rng: np.random.Generator) -> float:
        return self.value


@dataclass(frozen=True)
class UniformCensoring(CensoringDist):
    low: float
    high: float

    def __post_init__(self) -> None:
        if not (0.0 < self.low < self.high):
            raise ValueError("uniform censoring needs 0 < low < high")

    def draw(self, rng: np.random.Generator) -> float:
        return float(rng.uniform(self.low, self.high))


@dataclass(frozen=True)
class ExponentialCensoring(CensoringDist):
    rate: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.rate) and self.rate > 0.0):
            raise ValueError("censoring rate must be positive")

    def draw(self, rng: np.random.Generator) -> float:
        return float(rng.exponential(1.0 / self.rate))


class CovariateGenerator:
    """Draws one covariate path per unit."""

    dim: int = 0

    def draw(self, rng: np.random.Generator) -> CovariatePath:
        raise NotImplementedError


@dataclass(frozen=True)
class NoCovariates(CovariateGenerator):
    dim = 0

    def draw(self, rng: np.random.Generator) -> CovariatePath:
        return CovariatePath.empty()


@dataclass(frozen=True)
class ConstantCovariates(CovariateGenerator):
    """Time-constant covariates, each uniform on [low, high]."""

    dim: int
    low: float = -1.0
    high: float = 1.0

    def draw(self, rng: np.random.Generator) -> CovariatePath:
        return CovariatePath.constant(rng.uniform(self.low, self.high, size=self.dim))


@dataclass(frozen=True)
class ScheduledCovariates(CovariateGenerator):
    """Step covariates redrawn at fixed calendar times (first time 0)."""

    times: tuple[float, ...]
    dim: int
    low: float = -1.0
    high: float = 1.0

    def draw(self, rng: np.random.Generator) -> CovariatePath:
        values = rng.uniform(self.low, self.high, size=(len(self.times), self.dim))
        return CovariatePath(np.asarray(self.times, dtype=float), values)


@dataclass(frozen=True)
class FixedCovariates(CovariateGenerator):
    """Same deterministic path for every unit (useful in tests)."""

    path: CovariatePath

    @property
    def dim(self) -> int:  # type: ignore[override]
        return self.path.dim

    def draw(self, rng: np.random.Generator) -> CovariatePath:
        return self.path


# ---------------------------------------------------------------------------
# Repair policies (deterministic functions of the observed history)
# ---------------------------------------------------------------------------


class AgePolicy:
    """Deterministic rule giving each new segment's (start_age, slope)."""

    def first_segment(self) -> tuple[float, float]:
        return 0.0, 1.0

    def next_segment(self, event_time: float, end_age: float) -> tuple[float, float]:
        raise NotImplementedError

    def age_spec(self, segments: Sequence[tuple[float, float]]) -> EffectiveAgeSpec:
        return EffectiveAgeSpec.piecewise(tuple(segments))


@dataclass(frozen=True)
class PerfectRepairPolicy(AgePolicy):
    """Every event resets the effective age to zero."""

    def next_segment(self, event_time: float, end_age: float) -> tuple[float, float]:
        return 0.0, 1.0

    def age_spec(self, segments) -> EffectiveAgeSpec:
        return EffectiveAgeSpec.perfect()


@dataclass(frozen=True)
class MinimalRepairPolicy(AgePolicy):
    """Events leave the age clock untouched (age equals calendar time)."""

    def next_segment(self, event_time: float, end_age: float) -> tuple[float, float]:
        return end_age, 1.0

    def age_spec(self, segments) -> EffectiveAgeSpec:
        return EffectiveAgeSpec.minimal()


@dataclass(frozen=True)
class ScaledRepairPolicy(AgePolicy):
    """Each repair rolls the age back to ``memory`` times its value.

    ``memory = 0`` is perfect repair, ``memory = 1`` minimal repair;
    intermediate values give genuinely piecewise-linear age processes.
    """

    memory: float
    slope: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.memory <= 1.0:
            raise ValueError("memory must lie in [0, 1]")
        if not (0.0 < self.slope <= 1.0):
            raise ValueError("slope must lie in (0, 1]")

    def first_segment(self) -> tuple[float, float]:
        return 0.0, self.slope

    def next_segment(self, event_time: float, end_age: float) -> tuple[float, float]:
        return self.memory * end_age, self.slope


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    """Everything needed to draw a cohort."""

    params: ModelParams
    censoring: CensoringDist
    covariates: CovariateGenerator
    s_star: float
    seed: int
    age_policy: AgePolicy = field(default_factory=PerfectRepairPolicy)
    max_events_per_unit: int = 10_000

    def __post_init__(self) -> None:
        if isinstance(self.params.baseline, StepFunction):
            raise TypeError("simulation requires an absolutely continuous baseline hazard")
        if not (math.isfinite(self.s_star) and self.s_star > 0.0):
            raise ValueError("observation window must be positive")
        if self.max_events_per_unit < 1:
            raise ValueError("event budget must be at least 1")


# ---------------------------------------------------------------------------
# The inversion sampler
# ---------------------------------------------------------------------------


def _piece_cum(
    baseline: BaselineHazard,
    spec: ModelSpec,
    coefs: Coefs,
    x: np.ndarray,
    k: int,
    seg_cal_lo: float,
    start_age: float,
    slope: float,
    v_lo: float,
    v_hi: float,
) -> float:
    """Integrated intensity over the piece ``(v_lo, v_hi]``."""
    w_lo = start_age + slope * (v_lo - seg_cal_lo)
    w_hi = start_age + slope * (v_hi - seg_cal_lo)
    if spec.count_effect.time_invariant:
        value, _, _ = modifier_terms(
            spec, np.array([v_hi]), np.array([float(k)]), x.reshape(1, -1), coefs, order=0
        )
        return float(value[0]) / slope * float(baseline.cum(w_hi) - baseline.cum(w_lo))
    nodes, weights = np.polynomial.legendre.leggauss(32)
    half = 0.5 * (v_hi - v_lo)
    v = 0.5 * (v_hi + v_lo) + half * nodes
    w = start_age + slope * (v - seg_cal_lo)
    value, _, _ = modifier_terms(
        spec, v, np.full_like(v, float(k)), np.broadcast_to(x, (v.size, x.size)), coefs, order=0
    )
    return float(half * np.sum(weights * value * baseline.rate(w)))


def _solve_in_piece(
    baseline: BaselineHazard,
    spec: ModelSpec,
    coefs: Coefs,
    x: np.ndarray,
    k: int,
    seg_cal_lo: float,
    start_age: float,
    slope: float,
    v_lo: float,
    v_hi: float,
    target: float,
) -> float:
    """Calendar time in ``(v_lo, v_hi]`` where the piece's integral hits ``target``."""
    if spec.count_effect.time_invariant:
        value, _, _ = modifier_terms(
            spec, np.array([v_hi]), np.array([float(k)]), x.reshape(1, -1), coefs, order=0
        )
        scale = float(value[0]) / slope
        w_lo = start_age + slope * (v_lo - seg_cal_lo)
        needed = float(baseline.cum(w_lo)) + target / scale
        try:
            w_hit = float(baseline.cum_inverse(needed))
            return seg_cal_lo + (w_hit - start_age) / slope
        except NotImplementedError:
            pass
    lo, hi = v_lo, v_hi
    while hi - lo > _BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if _piece_cum(baseline, spec, coefs, x, k, seg_cal_lo, start_age, slope, v_lo, mid) < target:
            lo = mid
        else:
            hi = mid
    return hi


def _next_event(
    params: ModelParams,
    covariates: CovariatePath,
    k: int,
    seg_cal_lo: float,
    start_age: float,
    slope: float,
    from_time: float,
    till: float,
    exp_draw: float,
) -> float | None:
    """Invert the segment's integrated intensity; None when censored first."""
    if slope <= 0.0:
        raise ValueError("simulation requires strictly positive age slopes")
    remaining = exp_draw
    edges = np.concatenate(
        [[from_time], covariates.step_times_within(from_time, till), [till]]
    )
    for v_lo, v_hi in zip(edges[:-1], edges[1:]):
        x = covariates.at(v_hi)
        inc = _piece_cum(
            params.baseline, params.spec, params.coefs, x, k, seg_cal_lo, start_age, slope, v_lo, v_hi
        )
        if remaining <= inc:
            return _solve_in_piece(
                params.baseline,
                params.spec,
                params.coefs,
                x,
                k,
                seg_cal_lo,
                start_age,
                slope,
                v_lo,
                v_hi,
                remaining,
            )
        remaining -= inc
    return None


def next_event_time(
    unit: UnitPath, current_time: float, params: ModelParams, exp_draw: float
) -> float | None:
    """Calendar time at which the unit's integrated intensity reaches ``exp_draw``.

    Starts the clock at ``current_time``, which must lie in the unit's last
    (censored) segment; returns None when the unit reaches ``min(tau,
    s_star)`` first, i.e. when the candidate event is censored.
    """
    if exp_draw <= 0.0:
        raise ValueError("the exponential draw must be positive")
    till = unit.obs_end
    if current_time >= till:
        return None
    j = unit.n_segments
    if current_time < unit.segment_bounds[j - 1]:
        raise ValueError("current time must lie in the unit's final segment")
    return _next_event(
        params,
        unit.covariates,
        j - 1,
        float(unit.segment_bounds[j - 1]),
        float(unit.segment_start_ages[j - 1]),
        float(unit.segment_slopes[j - 1]),
        current_time,
        till,
        exp_draw,
    )


def draw_unit(config: SimConfig, rng: np.random.Generator) -> UnitPath:
    """Draw one unit history: censoring time, covariate path, then events.

    Raises ExplosionError if the event budget is exhausted before the unit
    is censored, which signals an explosive parameterization.
    """
    tau = config.censoring.draw(rng)
    covariates = config.covariates.draw(rng)
    till = min(tau, config.s_star)

    events: list[float] = []
    segments: list[tuple[float, float]] = [config.age_policy.first_segment()]
    current = 0.0
    while True:
        start_age, slope = segments[-1]
        seg_cal_lo = events[-1] if events else 0.0
        hit = _next_event(
            config.params,
            covariates,
            len(events),
            seg_cal_lo,
            start_age,
            slope,
            current,
            till,
            float(rng.exponential(1.0)),
        )
        if hit is None or hit >= till:
            break
        events.append(hit)
        if len(events) >= config.max_events_per_unit:
            raise ExplosionError(
                f"unit exceeded {config.max_events_per_unit} events before censoring; "
                "the model is explosive on this window"
            )
        end_age = start_age + slope * (hit - seg_cal_lo)
        segments.append(config.age_policy.next_segment(hit, end_age))
        current = hit

    return UnitPath(
        np.asarray(events),
        tau,
        config.s_star,
        config.age_policy.age_spec(segments),
        covariates,
    )


def draw_cohort(n: int, config: SimConfig) -> Cohort:
    """Draw ``n`` independent units, one counter-based substream each."""
    if n < 1:
        raise ValueError("cohort size must be at least 1")
    children = np.random.SeedSequence(config.seed).spawn(n)
    units = tuple(
        draw_unit(config, np.random.Generator(np.random.Philox(child))) for child in children
    )
    return Cohort(units)
