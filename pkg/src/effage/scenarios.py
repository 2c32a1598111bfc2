"""Named simulation scenarios used by the Monte Carlo studies and the CLI.

Each scenario bundles a full generative configuration with the matching
truth (baseline cumulative hazard, coefficients) and the age grids the
studies evaluate on.  The presets are deliberately small closed-form
setups so every study can compare against exact truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from effage.model import (
    Coefs,
    ConstantHazard,
    ConstantLink,
    ExpLink,
    GeometricCount,
    ModelParams,
    ModelSpec,
    NoCountEffect,
    WeibullHazard,
)
from effage.simulate import (
    AgePolicy,
    CensoringDist,
    ConstantCovariates,
    CovariateGenerator,
    MinimalRepairPolicy,
    NoCovariates,
    PerfectRepairPolicy,
    SimConfig,
    UniformCensoring,
)

__all__ = ["Scenario", "get_scenario", "scenario_names"]


@dataclass(frozen=True, eq=False)
class Scenario:
    """A generative setup plus the grids and truth the studies check against."""

    name: str
    description: str
    params: ModelParams
    censoring: CensoringDist
    covariates: CovariateGenerator
    age_policy: AgePolicy
    s_star: float
    t_star: float
    grid: np.ndarray
    check_ages: np.ndarray
    max_events_per_unit: int = 10_000

    def sim_config(self, seed) -> SimConfig:
        return SimConfig(
            params=self.params,
            censoring=self.censoring,
            covariates=self.covariates,
            s_star=self.s_star,
            seed=seed,
            age_policy=self.age_policy,
            max_events_per_unit=self.max_events_per_unit,
        )

    def true_cumhaz(self, t) -> np.ndarray:
        return self.params.baseline.cum(np.asarray(t, dtype=float))

    @property
    def spec(self) -> ModelSpec:
        return self.params.spec

    @property
    def true_coefs(self) -> Coefs:
        return self.params.coefs

    def coef_dim(self) -> int:
        return self.params.spec.coef_dim(self.covariates.dim)


def _hpp() -> Scenario:
    return Scenario(
        name="hpp",
        description="homogeneous Poisson events, perfect repair, no modifier",
        params=ModelParams(
            ModelSpec(NoCountEffect(), ConstantLink()),
            ConstantHazard(1.2),
            Coefs(np.zeros(0), np.zeros(0)),
        ),
        censoring=UniformCensoring(1.0, 3.0),
        covariates=NoCovariates(),
        age_policy=PerfectRepairPolicy(),
        s_star=3.0,
        t_star=1.25,
        grid=np.linspace(0.05, 1.25, 20),
        check_ages=np.array([0.25, 0.5, 0.75, 1.0, 1.25]),
    )


def _renewal_weibull() -> Scenario:
    return Scenario(
        name="renewal-weibull",
        description="Weibull renewal gaps under perfect repair, no modifier",
        params=ModelParams(
            ModelSpec(NoCountEffect(), ConstantLink()),
            WeibullHazard(1.5),
            Coefs(np.zeros(0), np.zeros(0)),
        ),
        censoring=UniformCensoring(2.0, 4.0),
        covariates=NoCovariates(),
        age_policy=PerfectRepairPolicy(),
        s_star=4.0,
        t_star=1.5,
        grid=np.linspace(0.1, 1.5, 20),
        check_ages=np.array([0.3, 0.6, 0.9, 1.2, 1.5]),
    )


def _cox_reduction() -> Scenario:
    return Scenario(
        name="cox-reduction",
        description="minimal repair with log-linear covariates (Andersen-Gill form)",
        params=ModelParams(
            ModelSpec(NoCountEffect(), ExpLink()),
            ConstantHazard(0.9),
            Coefs(np.zeros(0), np.array([0.8, -0.5])),
        ),
        censoring=UniformCensoring(1.0, 3.0),
        covariates=ConstantCovariates(2),
        age_policy=MinimalRepairPolicy(),
        s_star=3.0,
        t_star=1.5,
        grid=np.linspace(0.1, 1.5, 20),
        check_ages=np.array([0.3, 0.6, 0.9, 1.2, 1.5]),
    )


def _power_count() -> Scenario:
    return Scenario(
        name="power-count",
        description="perfect repair with geometric event-count damping and one covariate",
        params=ModelParams(
            ModelSpec(GeometricCount(), ExpLink()),
            ConstantHazard(1.0),
            Coefs(np.array([0.9]), np.array([0.5])),
        ),
        censoring=UniformCensoring(2.0, 4.0),
        covariates=ConstantCovariates(1),
        age_policy=PerfectRepairPolicy(),
        s_star=4.0,
        t_star=1.25,
        grid=np.linspace(0.05, 1.25, 20),
        check_ages=np.array([0.25, 0.5, 0.75, 1.0, 1.25]),
    )


_FACTORIES = {
    "hpp": _hpp,
    "renewal-weibull": _renewal_weibull,
    "cox-reduction": _cox_reduction,
    "power-count": _power_count,
}


def scenario_names() -> tuple[str, ...]:
    return tuple(sorted(_FACTORIES))


def get_scenario(name: str) -> Scenario:
    try:
        factory = _FACTORIES[name]
    except KeyError:
        known = ", ".join(scenario_names())
        raise ValueError(f"unknown scenario {name!r}; available: {known}") from None
    return factory()
