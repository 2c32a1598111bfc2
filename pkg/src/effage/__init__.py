"""Recurrent event models with effective-age baselines.

Simulate event histories whose baseline hazard runs on a unit-specific
effective-age clock (perfect repair, minimal repair, or general piecewise
linear), modulated by the running event count and by covariates; fit the
modulation coefficients by partial likelihood on the age scale; estimate
the baseline cumulative hazard and survivor function; and attach large-
sample standard errors, confidence intervals, and confidence bands.  A
Monte Carlo module rechecks the distributional claims behind the inference
at desk scale.
"""

from effage.estimate import (
    CoefFit,
    DegenerateModelError,
    EmptyRiskSetError,
    FitResult,
    RiskSet,
    baseline_cumhaz,
    baseline_survivor,
    fit_coefs,
    hessian,
    log_partial_likelihood,
    pooled_at_risk,
    risk_set_moments,
    score,
)
from effage.formats import (
    CohortDocument,
    FitDocument,
    FormatError,
    loads_cohort,
    loads_fit,
    loads_scenario,
    make_spec,
    read_cohort,
    read_fit,
    read_scenario,
    write_cohort,
    write_fit,
)
from effage.inference import (
    InferenceResult,
    SingularInformationError,
    VariancePieces,
    coef_confidence,
    cumhaz_band,
    cumhaz_covariance,
    fit_and_infer,
    fit_model,
    information_matrix,
    variance_pieces,
)
from effage.model import (
    Cohort,
    Coefs,
    ConstantHazard,
    ConstantLink,
    CovariatePath,
    CountEffect,
    CovariateLink,
    CustomCountEffect,
    EffageError,
    EffectiveAgeSpec,
    ExpLink,
    GeometricCount,
    LogLinearCount,
    ModelParams,
    ModelSpec,
    NoCountEffect,
    ParameterDomainError,
    SoftplusLink,
    StepFunction,
    UnitPath,
    WeibullHazard,
    ZeroSlopeError,
    age_inverse,
    at_risk,
    compensator,
    effective_age,
    event_age_counts,
    intensity,
    martingale_residual,
    rate_modifier,
)
from effage.scenarios import Scenario, get_scenario, scenario_names
from effage.simulate import (
    ConstantCovariates,
    ExplosionError,
    ExponentialCensoring,
    FixedCensoring,
    FixedCovariates,
    MinimalRepairPolicy,
    NoCovariates,
    PerfectRepairPolicy,
    ScaledRepairPolicy,
    ScheduledCovariates,
    SimConfig,
    UniformCensoring,
    draw_cohort,
    draw_unit,
)

__version__ = "0.1.0"
