"""Estimation layer: partial likelihood, Newton fit, baseline estimators.

The headline checks pit the age-scale machinery against independently
coded classical estimators on model classes where they must agree
exactly: Nelson-Aalen on pooled gap times under perfect repair, and a
brute-force Cox/Andersen-Gill fit under minimal repair with covariates.
"""

import math
import warnings

import numpy as np
import pytest
from scipy.optimize import minimize, minimize_scalar

from effage.model import (
    Cohort,
    Coefs,
    ConstantHazard,
    ConstantLink,
    CovariatePath,
    CustomCountEffect,
    EffectiveAgeSpec,
    ExpLink,
    GeometricCount,
    ModelParams,
    ModelSpec,
    NoCountEffect,
    ParameterDomainError,
    UnitPath,
    ZeroSlopeError,
)
from effage.estimate import (
    EmptyRiskSetError,
    RiskSet,
    baseline_cumhaz,
    baseline_survivor,
    fit_coefs,
    hessian,
    log_partial_likelihood,
    pooled_at_risk,
    pooled_at_risk_derivs,
    risk_set_moments,
    score,
)
from conftest import random_cohort
from effage.simulate import FixedCensoring, NoCovariates, PerfectRepairPolicy, SimConfig, draw_cohort

PLAIN = ModelSpec(NoCountEffect(), ConstantLink())
NEUTRAL = Coefs(np.zeros(0), np.zeros(0))


def plain_cohort(units):
    return Cohort(tuple(units))


# ---------------------------------------------------------------------------
# Frozen single-unit values
# ---------------------------------------------------------------------------


class TestCanonicalOracles:
    def test_loglik_plain(self, canonical_unit):
        cohort = plain_cohort([canonical_unit])
        value = log_partial_likelihood(cohort, NEUTRAL, PLAIN)
        assert value == pytest.approx(-math.log(3.0) - math.log(2.0), abs=1e-12)

    def test_baseline_cumhaz_values(self, canonical_unit):
        cohort = plain_cohort([canonical_unit])
        cumhaz = baseline_cumhaz(cohort, NEUTRAL, PLAIN)
        assert cumhaz(0.49) == pytest.approx(0.0, abs=1e-15)
        assert cumhaz(0.5) == pytest.approx(1.0 / 3.0, abs=1e-12)
        assert cumhaz(0.7) == pytest.approx(5.0 / 6.0, abs=1e-12)
        assert cumhaz(2.0) == pytest.approx(5.0 / 6.0, abs=1e-12)

    def test_baseline_survivor_values(self, canonical_unit):
        cohort = plain_cohort([canonical_unit])
        surv = baseline_survivor(cohort, NEUTRAL, PLAIN)
        assert surv(0.3) == pytest.approx(1.0, abs=1e-15)
        assert surv(0.5) == pytest.approx(2.0 / 3.0, abs=1e-12)
        assert surv(0.7) == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_pooled_at_risk_is_average(self, canonical_unit):
        cohort = plain_cohort([canonical_unit])
        assert pooled_at_risk(cohort, 0.6, NEUTRAL, PLAIN) == pytest.approx(2.0)
        assert pooled_at_risk(cohort, 0.5, NEUTRAL, PLAIN) == pytest.approx(3.0)
        doubled = plain_cohort([canonical_unit, canonical_unit])
        assert pooled_at_risk(doubled, 0.6, NEUTRAL, PLAIN) == pytest.approx(2.0)

    def test_age_cutoff_drops_later_events(self, canonical_unit):
        cohort = plain_cohort([canonical_unit])
        value = log_partial_likelihood(cohort, NEUTRAL, PLAIN, t_star=0.5)
        assert value == pytest.approx(-math.log(3.0), abs=1e-12)
        cumhaz = baseline_cumhaz(cohort, NEUTRAL, PLAIN, t_star=0.5)
        assert cumhaz(2.0) == pytest.approx(1.0 / 3.0, abs=1e-12)
        # the cutoff is inclusive: nudging it below the age removes the event
        below = baseline_cumhaz(cohort, NEUTRAL, PLAIN, t_star=0.5 - 1e-9)
        assert below(2.0) == pytest.approx(0.0, abs=1e-15)

    def test_default_cutoff_is_max_event_age(self, canonical_unit):
        cohort = plain_cohort([canonical_unit])
        riskset = RiskSet(cohort, PLAIN)
        assert riskset.t_star == pytest.approx(0.7)
        assert riskset.n_events == 2


# ---------------------------------------------------------------------------
# Exact agreement with classical estimators
# ---------------------------------------------------------------------------


def _perfect_repair_cohort(rng, n, s_star=3.0):
    units = []
    for _ in range(n):
        tau = float(rng.uniform(1.0, 4.0))
        end = min(tau, s_star)
        times, t = [], 0.0
        while True:
            t += float(rng.exponential(1.0))
            if t >= end:
                break
            times.append(t)
        units.append(UnitPath(np.array(times), tau, s_star, EffectiveAgeSpec.perfect()))
    return Cohort(tuple(units))


class TestPooledGapNelsonAalen:
    def test_matches_nelson_aalen_on_gaps(self):
        # Under perfect repair with a unit modifier, the age-scale risk
        # weight at age t is the number of gap times (complete or final
        # truncated) of length at least t, so the baseline estimate must
        # coincide with Nelson-Aalen on the pooled gap sample.
        rng = np.random.default_rng(42)
        cohort = _perfect_repair_cohort(rng, 30)
        complete, withdrawn = [], []
        for unit in cohort.units:
            steps = np.diff(np.concatenate([[0.0], unit.event_times]))
            complete.extend(steps.tolist())
            last = unit.event_times[-1] if unit.event_times.size else 0.0
            withdrawn.append(unit.obs_end - last)
        complete = np.asarray(complete)
        withdrawn = np.asarray(withdrawn)
        assert complete.size > 20

        grid, counts = np.unique(complete, return_counts=True)
        na = []
        total = 0.0
        for w, d in zip(grid, counts):
            at_risk = np.sum(complete >= w) + np.sum(withdrawn >= w)
            total += d / at_risk
            na.append(total)

        cumhaz = baseline_cumhaz(cohort, NEUTRAL, PLAIN)
        np.testing.assert_allclose(cumhaz(grid), np.asarray(na), rtol=0, atol=1e-10)

    def test_survivor_matches_kaplan_meier_on_gaps(self):
        rng = np.random.default_rng(7)
        cohort = _perfect_repair_cohort(rng, 20)
        complete, withdrawn = [], []
        for unit in cohort.units:
            steps = np.diff(np.concatenate([[0.0], unit.event_times]))
            complete.extend(steps.tolist())
            last = unit.event_times[-1] if unit.event_times.size else 0.0
            withdrawn.append(unit.obs_end - last)
        complete = np.asarray(complete)
        withdrawn = np.asarray(withdrawn)

        grid, counts = np.unique(complete, return_counts=True)
        km = []
        prod = 1.0
        for w, d in zip(grid, counts):
            at_risk = np.sum(complete >= w) + np.sum(withdrawn >= w)
            prod *= 1.0 - d / at_risk
            km.append(prod)

        surv = baseline_survivor(cohort, NEUTRAL, PLAIN)
        np.testing.assert_allclose(surv(grid), np.asarray(km), rtol=0, atol=1e-10)


class TestAndersenGillOracle:
    def test_matches_brute_force_cox_fit(self):
        # Minimal repair keeps effective age equal to calendar time, so
        # with a log-linear covariate modifier the partial likelihood is
        # exactly the Breslow-ties Cox likelihood on the pooled events.
        rng = np.random.default_rng(99)
        spec = ModelSpec(NoCountEffect(), ExpLink())
        units = []
        for _ in range(15):
            x = rng.uniform(-1.0, 1.0, size=2)
            tau = float(rng.uniform(1.0, 3.0))
            end = min(tau, 2.5)
            rate = math.exp(float(x @ [0.8, -0.5]))
            times, t = [], 0.0
            while True:
                t += float(rng.exponential(1.0 / rate))
                if t >= end:
                    break
                times.append(t)
            units.append(
                UnitPath(
                    np.array(times), tau, 2.5, EffectiveAgeSpec.minimal(), CovariatePath.constant(x)
                )
            )
        cohort = Cohort(tuple(units))
        ends = np.array([u.obs_end for u in cohort.units])
        xs = np.vstack([u.covariates.at(0.1) for u in cohort.units])
        events = [(t, i) for i, u in enumerate(cohort.units) for t in u.event_times]
        assert len(events) >= 10

        def neg_cox_loglik(beta):
            out = 0.0
            for t, i in events:
                risk = ends >= t
                out -= float(xs[i] @ beta) - math.log(np.sum(np.exp(xs[risk] @ beta)))
            return out

        res = minimize(neg_cox_loglik, np.zeros(2), method="Nelder-Mead", options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 4000})
        assert res.success

        fit = fit_coefs(cohort, spec)
        assert fit.converged
        np.testing.assert_allclose(fit.coefs.covariate, res.x, atol=1e-6)

        # the two likelihoods differ by m*log(n) from the risk-set averaging
        mine = log_partial_likelihood(cohort, fit.coefs, spec)
        assert mine == pytest.approx(-res.fun + len(events) * math.log(cohort.n), abs=1e-8)


class TestDerivativeFreeOracle:
    def test_newton_agrees_with_golden_section(self):
        rng = np.random.default_rng(5)
        spec = ModelSpec(GeometricCount(), ConstantLink())
        cohort = _perfect_repair_cohort(rng, 40)

        def neg(ratio):
            return -log_partial_likelihood(cohort, Coefs(np.array([ratio]), np.zeros(0)), spec)

        res = minimize_scalar(neg, bounds=(0.2, 3.0), method="bounded", options={"xatol": 1e-11})
        fit = fit_coefs(cohort, spec)
        assert fit.converged
        assert fit.coefs.count[0] == pytest.approx(res.x, abs=1e-6)


# ---------------------------------------------------------------------------
# Derivative identities
# ---------------------------------------------------------------------------


def _fd_grad(f, vec, h=1e-5):
    out = np.zeros(vec.size)
    for i in range(vec.size):
        bump = np.zeros(vec.size)
        bump[i] = h
        out[i] = (f(vec + bump) - f(vec - bump)) / (2.0 * h)
    return out


class TestFiniteDifferences:
    @pytest.mark.parametrize("seed", range(12))
    def test_score_matches_fd_of_loglik(self, seed):
        rng = np.random.default_rng(300 + seed)
        cohort = random_cohort(rng, n=6, p=2)
        spec = ModelSpec(GeometricCount(), ExpLink())
        vec = np.concatenate([[rng.uniform(0.6, 1.4)], rng.uniform(-0.7, 0.7, 2)])
        coefs = Coefs.from_vector(vec, 1)

        def f(v):
            return log_partial_likelihood(cohort, Coefs.from_vector(v, 1), spec)

        exact = cohort.n * score(cohort, coefs, spec)
        np.testing.assert_allclose(exact, _fd_grad(f, vec), rtol=1e-6, atol=1e-6)

    @pytest.mark.parametrize("seed", range(8))
    def test_hessian_matches_fd_of_score(self, seed):
        rng = np.random.default_rng(500 + seed)
        cohort = random_cohort(rng, n=5, p=1)
        spec = ModelSpec(GeometricCount(), ExpLink())
        vec = np.concatenate([[rng.uniform(0.7, 1.3)], rng.uniform(-0.5, 0.5, 1)])
        coefs = Coefs.from_vector(vec, 1)

        def svec(v):
            return score(cohort, Coefs.from_vector(v, 1), spec)

        h = 1e-5
        fd = np.column_stack(
            [
                (svec(vec + h * np.eye(vec.size)[i]) - svec(vec - h * np.eye(vec.size)[i]))
                / (2.0 * h)
                for i in range(vec.size)
            ]
        )
        exact = hessian(cohort, coefs, spec)
        np.testing.assert_allclose(exact, fd, rtol=1e-5, atol=1e-5)
        np.testing.assert_allclose(exact, exact.T, atol=1e-12)

    def test_score_fd_time_varying_count_effect(self):
        # exercises the slow per-grid-point tables for calendar-dependent
        # count effects
        rng = np.random.default_rng(77)
        cohort = random_cohort(rng, n=4, p=0)
        effect = CustomCountEffect(
            value_fn=lambda s, k, a: np.exp(a[0] * k * (1.0 + 0.3 * np.sin(s))),
            grad_fn=lambda s, k, a: (
                k * (1.0 + 0.3 * np.sin(s)) * np.exp(a[0] * k * (1.0 + 0.3 * np.sin(s)))
            )[..., None],
            hess_fn=lambda s, k, a: (
                (k * (1.0 + 0.3 * np.sin(s))) ** 2 * np.exp(a[0] * k * (1.0 + 0.3 * np.sin(s)))
            )[..., None, None],
            n_params=1,
        )
        spec = ModelSpec(effect, ConstantLink())
        vec = np.array([0.25])
        coefs = Coefs.from_vector(vec, 1)

        def f(v):
            return log_partial_likelihood(cohort, Coefs.from_vector(v, 1), spec)

        exact = cohort.n * score(cohort, coefs, spec)
        np.testing.assert_allclose(exact, _fd_grad(f, vec), rtol=1e-6, atol=1e-6)


class TestRiskMomentIdentities:
    def test_mean_ratio_equals_pooled_derivative_ratio(self):
        # the risk-weighted mean gradient ratio at equal weight/eval
        # coefficients must reproduce the pooled derivative ratio exactly
        rng = np.random.default_rng(11)
        spec = ModelSpec(GeometricCount(), ExpLink())
        for trial in range(20):
            cohort = random_cohort(rng, n=4, p=2)
            coefs = Coefs.from_vector(
                np.concatenate([[rng.uniform(0.6, 1.4)], rng.uniform(-0.6, 0.6, 2)]), 1
            )
            t = float(rng.uniform(0.05, 2.0))
            r0, r1, r2 = pooled_at_risk_derivs(cohort, t, coefs, spec)
            q1, q2, var = risk_set_moments(cohort, t, coefs, coefs, spec)
            if r0 == 0.0:
                assert np.all(q1 == 0.0) and np.all(q2 == 0.0)
                continue
            np.testing.assert_allclose(q1, r1 / r0, rtol=0, atol=1e-10)
            np.testing.assert_allclose(q2, r2 / r0, rtol=0, atol=1e-10)
            # the covariance form is PSD
            eigs = np.linalg.eigvalsh(var)
            assert eigs.min() > -1e-12

    def test_moments_zero_off_range(self, canonical_unit):
        cohort = plain_cohort([canonical_unit])
        spec = ModelSpec(GeometricCount(), ConstantLink())
        coefs = Coefs(np.array([0.9]), np.zeros(0))
        q1, q2, var = risk_set_moments(cohort, 5.0, coefs, coefs, spec)
        assert np.all(q1 == 0.0) and np.all(q2 == 0.0) and np.all(var == 0.0)


# ---------------------------------------------------------------------------
# Fitting behavior
# ---------------------------------------------------------------------------


class TestFitBehavior:
    def test_degenerate_spec_returns_init_at_iteration_zero(self, canonical_unit):
        cohort = plain_cohort([canonical_unit])
        fit = fit_coefs(cohort, PLAIN)
        assert fit.converged
        assert fit.iterations == 0
        assert fit.final_score_norm == 0.0
        assert fit.coefs.vector.size == 0

    def test_empty_cohort_raises_on_fit_but_evaluates(self):
        unit = UnitPath(np.zeros(0), 1.5, 2.0, EffectiveAgeSpec.perfect())
        cohort = Cohort((unit,))
        with pytest.raises(EmptyRiskSetError):
            fit_coefs(cohort, PLAIN)
        assert log_partial_likelihood(cohort, NEUTRAL, PLAIN) == 0.0
        cumhaz = baseline_cumhaz(cohort, NEUTRAL, PLAIN)
        assert cumhaz(5.0) == 0.0

    def test_zero_slope_segment_rejected(self):
        unit = UnitPath(
            np.array([0.6]),
            2.0,
            2.0,
            EffectiveAgeSpec.piecewise([(0.0, 1.0), (0.2, 0.0)]),
        )
        with pytest.raises(ZeroSlopeError):
            fit_coefs(Cohort((unit,)), PLAIN)

    def test_mixed_covariate_dims_rejected(self, canonical_unit):
        other = UnitPath(
            np.array([0.4]),
            2.0,
            2.0,
            EffectiveAgeSpec.perfect(),
            CovariatePath.constant([1.0]),
        )
        with pytest.raises(ValueError, match="covariate dimension"):
            fit_coefs(Cohort((canonical_unit, other)), ModelSpec(NoCountEffect(), ExpLink()))

    def test_invalid_init_propagates_domain_error(self, canonical_unit):
        cohort = plain_cohort([canonical_unit])
        spec = ModelSpec(GeometricCount(), ConstantLink())
        with pytest.raises(ParameterDomainError):
            fit_coefs(cohort, spec, init=Coefs(np.array([-0.5]), np.zeros(0)))

    def test_recovers_simulated_count_coefficient(self):
        spec = ModelSpec(GeometricCount(), ConstantLink())
        params = ModelParams(spec, ConstantHazard(1.0), Coefs(np.array([0.7]), np.zeros(0)))
        config = SimConfig(
            params=params,
            censoring=FixedCensoring(4.0),
            covariates=NoCovariates(),
            s_star=4.0,
            seed=2024,
            age_policy=PerfectRepairPolicy(),
        )
        cohort = draw_cohort(400, config)
        fit = fit_coefs(cohort, spec)
        assert fit.converged
        assert fit.iterations >= 1
        assert abs(fit.coefs.count[0] - 0.7) < 0.12

    def test_iterates_track_progress(self):
        spec = ModelSpec(GeometricCount(), ConstantLink())
        rng = np.random.default_rng(3)
        cohort = _perfect_repair_cohort(rng, 25)
        fit = fit_coefs(cohort, spec)
        assert fit.converged
        assert len(fit.iterates) == fit.iterations + 1
        assert fit.iterates[0][0] == pytest.approx(1.0)  # neutral start

    def test_loose_tolerance_stops_earlier(self):
        spec = ModelSpec(GeometricCount(), ConstantLink())
        rng = np.random.default_rng(3)
        cohort = _perfect_repair_cohort(rng, 25)
        tight = fit_coefs(cohort, spec, tol=1e-10)
        loose = fit_coefs(cohort, spec, tol=1e-2)
        assert loose.iterations <= tight.iterations
        assert loose.final_score_norm < 1e-2


# ---------------------------------------------------------------------------
# Survivor clipping and tie handling
# ---------------------------------------------------------------------------


def _tied_age_cohort():
    # two identical units whose second event lands on a sped-up age
    # segment (slope 1.5), so the pooled risk weight there is 2/1.5 and
    # the occurrence/exposure jump exceeds one
    spec = EffectiveAgeSpec.piecewise([(0.0, 1.0), (0.4, 1.5), (0.0, 1.0)])
    unit = UnitPath(np.array([1.0, 1.9]), 2.0, 2.0, spec)
    return Cohort((unit, unit))


class TestSurvivorEdgeCases:
    def test_tied_events_pool_into_one_jump(self):
        cohort = _tied_age_cohort()
        cumhaz = baseline_cumhaz(cohort, NEUTRAL, PLAIN)
        # age 1.0: two events, risk weight 1+1 from the first segments
        # plus 2/3+2/3 from the sped-up ones
        assert cumhaz(1.0) == pytest.approx(2.0 / (10.0 / 3.0), abs=1e-12)
        # age 1.75: two events, only the sped-up segments remain at risk
        assert cumhaz(1.75) == pytest.approx(0.6 + 2.0 / (4.0 / 3.0), abs=1e-12)

    def test_survivor_clips_at_zero_with_warning(self):
        cohort = _tied_age_cohort()
        with pytest.warns(RuntimeWarning, match="clipping"):
            surv = baseline_survivor(cohort, NEUTRAL, PLAIN)
        assert surv(1.0) == pytest.approx(0.4, abs=1e-12)
        assert surv(1.75) == 0.0
        assert surv(3.0) == 0.0

    def test_survivor_monotone_within_unit_interval(self):
        rng = np.random.default_rng(21)
        for trial in range(10):
            cohort = random_cohort(rng, n=5, p=0)
            if not sum(u.n_events for u in cohort.units):
                continue
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                surv = baseline_survivor(cohort, NEUTRAL, PLAIN)
            grid = np.linspace(0.0, 2.5, 60)
            vals = surv(grid)
            assert np.all(vals <= 1.0 + 1e-12) and np.all(vals >= -1e-15)
            assert np.all(np.diff(vals) <= 1e-12)
