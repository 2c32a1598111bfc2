"""Monte Carlo verification harness.

Five study families, each returning a structured pass/fail report:

- identity suite: exact finite-sample identities on random fixtures,
  pitting closed-form age-scale code against independent calendar-time
  quadrature and finite differences;
- martingale study: the compensated event count averages to zero across a
  large simulated cohort;
- consistency study: estimation error shrinks like the square root of
  the cohort size across a 4x size ladder;
- coverage study: confidence intervals and baseline bands hit their
  nominal level;
- normality and variance studies: standardized coefficient deviations
  look standard normal, are uncorrelated with the baseline-only
  fluctuation, and the plug-in variance estimates match the sampling
  variance.

Reports serialize to deterministic JSON so the command-line runner's
output is byte-reproducible for a fixed seed.  Set ``EFFAGE_THREADS`` to
run study replications across worker processes.
"""

from __future__ import annotations

import json
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.stats import kstest

from effage.model import (
    Cohort,
    Coefs,
    ConstantHazard,
    ConstantLink,
    CovariatePath,
    EffectiveAgeSpec,
    ExpLink,
    GeometricCount,
    LogLinearCount,
    ModelParams,
    ModelSpec,
    NoCountEffect,
    SoftplusLink,
    EffageError,
    UnitPath,
    WeibullHazard,
    at_risk,
    compensator,
    event_age_counts,
    martingale_residual,
    modifier_terms,
)
from effage.estimate import DegenerateModelError, RiskSet
from effage.inference import fit_and_infer, variance_pieces
from effage.scenarios import Scenario, get_scenario
from effage.simulate import draw_cohort

__all__ = [
    "McCheck",
    "McReport",
    "identity_suite",
    "martingale_study",
    "consistency_study",
    "coverage_study",
    "NormalityRecords",
    "normality_records",
    "normality_study",
    "variance_study",
    "worker_count",
]

DEFAULT_SEED = 20260814


def worker_count() -> int:
    """Worker processes for study replications (EFFAGE_THREADS, default 1)."""
    raw = os.environ.get("EFFAGE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _map_reps(fn, payloads):
    workers = worker_count()
    if workers <= 1 or len(payloads) < 2 * workers:
        return [fn(p) for p in payloads]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        return list(pool.map(fn, payloads, chunksize=max(1, len(payloads) // (4 * workers))))


def _rep_seed(master: int, *key: int) -> int:
    return int(np.random.SeedSequence((master, *key)).generate_state(1, np.uint64)[0])


def _plain(value):
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


@dataclass(frozen=True)
class McCheck:
    """One named assertion inside a study report."""

    name: str
    passed: bool
    observed: float
    bound: float
    detail: str = ""


@dataclass(frozen=True)
class McReport:
    """Outcome of one study: overall verdict plus per-check numbers."""

    suite: str
    passed: bool
    seed: int
    meta: dict = field(default_factory=dict)
    checks: tuple[McCheck, ...] = ()

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "passed": bool(self.passed),
            "seed": self.seed,
            "meta": _plain(self.meta),
            "checks": [
                {
                    "name": c.name,
                    "passed": bool(c.passed),
                    "observed": _plain(c.observed),
                    "bound": _plain(c.bound),
                    "detail": c.detail,
                }
                for c in self.checks
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def failures(self) -> tuple[McCheck, ...]:
        return tuple(c for c in self.checks if not c.passed)


def _finish(suite: str, seed: int, meta: dict, checks: list[McCheck]) -> McReport:
    return McReport(
        suite=suite,
        passed=all(c.passed for c in checks),
        seed=seed,
        meta=meta,
        checks=tuple(checks),
    )


# ---------------------------------------------------------------------------
# Identity suite
# ---------------------------------------------------------------------------


def _random_model(rng):
    choice = int(rng.integers(0, 4))
    if choice == 0:
        spec = ModelSpec(NoCountEffect(), ConstantLink())
        coefs, p = Coefs(np.zeros(0), np.zeros(0)), 0
    elif choice == 1:
        spec = ModelSpec(GeometricCount(), ConstantLink())
        coefs, p = Coefs(rng.uniform(0.6, 1.4, 1), np.zeros(0)), 0
    elif choice == 2:
        p = int(rng.integers(1, 3))
        spec = ModelSpec(GeometricCount(), ExpLink())
        coefs = Coefs(rng.uniform(0.6, 1.4, 1), rng.uniform(-0.7, 0.7, p))
    else:
        p = 1
        spec = ModelSpec(LogLinearCount(), SoftplusLink())
        coefs = Coefs(rng.uniform(-0.3, 0.3, 1), rng.uniform(-0.5, 0.5, 1))
    if rng.random() < 0.5:
        baseline = ConstantHazard(float(rng.uniform(0.5, 1.5)))
    else:
        baseline = WeibullHazard(float(rng.uniform(1.0, 1.8)))
    return ModelParams(spec, baseline, coefs), p


def _random_unit(rng, s_star, p):
    tau = float(rng.uniform(0.5 * s_star, 1.4 * s_star))
    end = min(tau, s_star)
    m = int(rng.integers(0, 4))
    events = np.sort(rng.uniform(0.05, end - 0.05, size=m)) if m else np.zeros(0)
    if events.size:
        events = events[np.concatenate([[True], np.diff(events) > 1e-6])]
    policy = rng.choice(["perfect", "minimal", "piecewise"])
    if policy == "perfect":
        age = EffectiveAgeSpec.perfect()
    elif policy == "minimal":
        age = EffectiveAgeSpec.minimal()
    else:
        bounds = np.concatenate([[0.0], events, [end]])
        segs = []
        for lo in bounds[:-1]:
            start = float(rng.uniform(0.0, lo)) if lo > 0 else 0.0
            segs.append((start, float(rng.uniform(0.4, 1.0))))
        age = EffectiveAgeSpec.piecewise(segs)
    if p == 0:
        path = CovariatePath.empty()
    elif rng.random() < 0.5:
        path = CovariatePath.constant(rng.uniform(-1.0, 1.0, p))
    else:
        times = np.concatenate([[0.0], np.sort(rng.uniform(0.1, s_star, 2))])
        path = CovariatePath(times, rng.uniform(-1.0, 1.0, (3, p)))
    return UnitPath(events, tau, s_star, age, path)


def _random_fixture(rng):
    params, p = _random_model(rng)
    n = int(rng.integers(2, 6))
    units = tuple(_random_unit(rng, 2.0, p) for _ in range(n))
    return Cohort(units), params


def _modifier_value(spec, s, k, x, coefs) -> float:
    value, _, _ = modifier_terms(spec, np.array([s]), np.array([k]), x.reshape(1, -1), coefs, 0)
    return float(value[0])


def _compensator_by_calendar_quadrature(unit, s, t, params) -> float:
    """Independent route: integrate the raw intensity over calendar time.

    Splits at event times, covariate steps, and the point where the age
    crosses ``t`` inside each segment, then applies adaptive quadrature to
    each smooth piece.
    """
    spec, baseline, coefs = params.spec, params.baseline, params.coefs
    end = min(s, unit.tau)
    bounds = unit.segment_bounds
    starts = unit.segment_start_ages
    slopes = unit.segment_slopes
    total = 0.0
    for j in range(1, unit.n_segments + 1):
        lo = bounds[j - 1]
        hi = min(bounds[j], end)
        if hi <= lo:
            break
        a, b = starts[j - 1], slopes[j - 1]
        steps = unit.covariates.step_times_within(lo, hi)
        edges = np.concatenate([[lo], steps, [hi]])
        for v_lo, v_hi in zip(edges[:-1], edges[1:]):
            if b > 0.0:
                v_cut = lo + (t - a) / b
                v_hi_eff = min(v_hi, v_cut)
            else:
                v_hi_eff = v_hi if a <= t else v_lo
            if v_hi_eff <= v_lo:
                continue
            x = unit.covariates.at(v_hi)
            k = j - 1

            def integrand(v, a=a, b=b, lo=lo, k=k, x=x):
                return baseline.rate(a + b * (v - lo)) * _modifier_value(spec, v, k, x, coefs)

            piece, _ = quad(integrand, v_lo, v_hi_eff, epsabs=1e-13, epsrel=1e-12, limit=200)
            total += piece
    return total


def _event_ages_by_formula(unit) -> np.ndarray:
    bounds = unit.segment_bounds
    starts = unit.segment_start_ages
    slopes = unit.segment_slopes
    return np.array(
        [
            starts[j - 1] + slopes[j - 1] * (s_j - bounds[j - 1])
            for j, s_j in enumerate(unit.event_times, start=1)
        ]
    )


def identity_suite(n_fixtures: int = 100, seed: int = DEFAULT_SEED) -> McReport:
    """Exact identity checks on random small fixtures.

    Each fixture draws a random model and cohort, then verifies that
    independent computation routes agree: calendar-time quadrature versus
    the closed-form age-scale compensator, direct counts versus the
    step-function event-age counting process, per-unit at-risk scans
    versus the pooled risk tables, moment ratios versus derivative
    ratios, and analytic score/Hessian versus finite differences.
    """
    rng = np.random.default_rng(seed)
    worst = {
        "compensator_calendar_vs_age": 0.0,
        "age_change_of_variable": 0.0,
        "risk_moment_ratios": 0.0,
        "score_finite_difference": 0.0,
        "hessian_finite_difference": 0.0,
    }

    for _ in range(n_fixtures):
        cohort, params = _random_fixture(rng)
        spec, coefs = params.spec, params.coefs
        s_star = cohort.s_star

        # compensator: quadrature over calendar time vs closed form
        for unit in cohort.units[:2]:
            for t in (float(rng.uniform(0.2, 1.5)), 2.5):
                exact = compensator(unit, s_star, t, params)
                quadrature = _compensator_by_calendar_quadrature(unit, s_star, t, params)
                scale = max(1.0, abs(quadrature))
                worst["compensator_calendar_vs_age"] = max(
                    worst["compensator_calendar_vs_age"], abs(exact - quadrature) / scale
                )

        # change of variable: event ages and pooled risk from two routes
        for t in rng.uniform(0.05, 2.2, size=3):
            counted = sum(float(event_age_counts(u, s_star)(t)) for u in cohort.units)
            direct = sum(
                float(np.sum(_event_ages_by_formula(u) <= t)) for u in cohort.units
            )
            worst["age_change_of_variable"] = max(
                worst["age_change_of_variable"], abs(counted - direct)
            )
        riskset = RiskSet(cohort, spec, t_star=np.inf)
        if riskset.grid.size:
            pooled = riskset.tables(coefs, order=0).risk0
            for g, w in enumerate(riskset.grid):
                per_unit = sum(at_risk(u, s_star, float(w), coefs, spec) for u in cohort.units)
                worst["age_change_of_variable"] = max(
                    worst["age_change_of_variable"], abs(pooled[g] - per_unit)
                )

        # moment ratios against pooled derivative ratios
        d = len(coefs.vector)
        for t in rng.uniform(0.05, 2.0, size=3):
            r0, r1, r2 = riskset.at_risk_sums(float(t), coefs, order=2)
            q1, q2, _ = riskset.moments_at(float(t), coefs, coefs)
            if r0 > 0.0:
                err = max(
                    float(np.max(np.abs(q1 - r1 / r0), initial=0.0)),
                    float(np.max(np.abs(q2 - r2 / r0), initial=0.0)),
                )
            else:
                err = max(
                    float(np.max(np.abs(q1), initial=0.0)),
                    float(np.max(np.abs(q2), initial=0.0)),
                )
            worst["risk_moment_ratios"] = max(worst["risk_moment_ratios"], err)

        # analytic derivatives against finite differences
        if d and riskset.n_events:
            vec = coefs.vector
            score_vec, hess_mat = riskset.score_and_hessian(coefs)
            h = 1e-5
            fd_score = np.zeros(d)
            fd_hess = np.zeros((d, d))
            for i in range(d):
                bump = np.zeros(d)
                bump[i] = h
                up, down = coefs.replace_vector(vec + bump), coefs.replace_vector(vec - bump)
                fd_score[i] = (riskset.loglik(up) - riskset.loglik(down)) / (2 * h)
                fd_hess[:, i] = (
                    riskset.score_and_hessian(up, order=1)[0]
                    - riskset.score_and_hessian(down, order=1)[0]
                ) / (2 * h)
            scale = max(1.0, float(np.max(np.abs(fd_score))))
            worst["score_finite_difference"] = max(
                worst["score_finite_difference"],
                float(np.max(np.abs(cohort.n * score_vec - fd_score))) / scale,
            )
            hscale = max(1.0, float(np.max(np.abs(fd_hess))))
            worst["hessian_finite_difference"] = max(
                worst["hessian_finite_difference"],
                float(np.max(np.abs(hess_mat - fd_hess))) / hscale,
            )

    bounds = {
        "compensator_calendar_vs_age": 1e-8,
        "age_change_of_variable": 1e-10,
        "risk_moment_ratios": 1e-10,
        "score_finite_difference": 1e-6,
        "hessian_finite_difference": 1e-5,
    }
    checks = [
        McCheck(name, worst[name] <= bounds[name], worst[name], bounds[name])
        for name in worst
    ]
    return _finish("identities", seed, {"n_fixtures": n_fixtures}, checks)


# ---------------------------------------------------------------------------
# Martingale study
# ---------------------------------------------------------------------------


def martingale_study(
    scenario: Scenario | str = "power-count", n: int = 2000, seed: int = DEFAULT_SEED
) -> McReport:
    """Mean compensated event count across a simulated cohort is near zero.

    At every grid age the empirical mean of observed-minus-compensated
    counts under the true parameters must sit within three standard
    errors of zero.
    """
    if isinstance(scenario, str):
        scenario = get_scenario(scenario)
    cohort = draw_cohort(n, scenario.sim_config(_rep_seed(seed, 0)))
    grid = scenario.grid
    residuals = np.empty((n, grid.size))
    for i, unit in enumerate(cohort.units):
        for g, t in enumerate(grid):
            residuals[i, g] = martingale_residual(unit, scenario.s_star, float(t), scenario.params)
    means = residuals.mean(axis=0)
    stderr = residuals.std(axis=0, ddof=1) / np.sqrt(n)
    zscores = np.where(stderr > 0, np.abs(means) / np.where(stderr > 0, stderr, 1.0), 0.0)
    checks = [
        McCheck(
            "mean_residual_within_3se",
            bool(np.all(zscores <= 3.0)),
            float(zscores.max()),
            3.0,
            detail=f"worst grid age {grid[int(zscores.argmax())]:g}",
        )
    ]
    meta = {
        "scenario": scenario.name,
        "n": n,
        "grid": grid,
        "mean_residual": means,
        "stderr": stderr,
    }
    return _finish("martingale", seed, meta, checks)


# ---------------------------------------------------------------------------
# Consistency study
# ---------------------------------------------------------------------------


def _consistency_rep(payload):
    name, size, master, r = payload
    scenario = get_scenario(name)
    cohort = draw_cohort(size, scenario.sim_config(_rep_seed(master, size, r)))
    try:
        riskset = RiskSet(cohort, scenario.spec, t_star=scenario.t_star)
        cfit = riskset.fit()
        if not cfit.converged:
            return False, np.nan, np.nan
        cumhaz = riskset.baseline(cfit.coefs)
    except (EffageError, np.linalg.LinAlgError):
        return False, np.nan, np.nan
    coef_err = float(np.linalg.norm(cfit.coefs.vector - scenario.true_coefs.vector))
    base_err = float(np.max(np.abs(cumhaz(scenario.grid) - scenario.true_cumhaz(scenario.grid))))
    return True, coef_err, base_err


def consistency_study(
    scenario: Scenario | str = "power-count",
    sizes: tuple[int, ...] = (50, 200, 800),
    reps: int = 200,
    seed: int = DEFAULT_SEED,
    ratio_window: tuple[float, float] = (0.35, 0.65),
) -> McReport:
    """Median errors must fall like the square root of the cohort size.

    For each consecutive 4x size step, the ratio of median errors (both
    the coefficient norm and the sup-norm baseline error) must land in
    ``ratio_window`` around the ideal 0.5.
    """
    if isinstance(scenario, str):
        scenario = get_scenario(scenario)
    if len(sizes) < 2 or any(b != 4 * a for a, b in zip(sizes[:-1], sizes[1:])):
        raise ValueError("sizes must increase by a factor of 4 per step")
    d = scenario.coef_dim()

    coef_medians, base_medians, rates = [], [], []
    checks: list[McCheck] = []
    for size in sizes:
        results = _map_reps(
            _consistency_rep, [(scenario.name, size, seed, r) for r in range(reps)]
        )
        ok = np.array([r[0] for r in results])
        rate = float(ok.mean())
        rates.append(rate)
        checks.append(McCheck(f"convergence_rate_n{size}", rate >= 0.98, rate, 0.98))
        coef_err = np.array([r[1] for r in results])[ok]
        base_err = np.array([r[2] for r in results])[ok]
        coef_medians.append(float(np.median(coef_err)) if d else 0.0)
        base_medians.append(float(np.median(base_err)))

    if d:
        dec = all(a > b for a, b in zip(coef_medians[:-1], coef_medians[1:]))
        checks.append(
            McCheck("coef_median_decreasing", dec, float(coef_medians[-1]), float(coef_medians[0]))
        )
    dec = all(a > b for a, b in zip(base_medians[:-1], base_medians[1:]))
    checks.append(
        McCheck("base_median_decreasing", dec, float(base_medians[-1]), float(base_medians[0]))
    )
    lo, hi = ratio_window
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        if d:
            ratio = coef_medians[i + 1] / coef_medians[i]
            checks.append(McCheck(f"coef_ratio_n{a}_to_n{b}", lo <= ratio <= hi, ratio, hi))
        ratio = base_medians[i + 1] / base_medians[i]
        checks.append(McCheck(f"base_ratio_n{a}_to_n{b}", lo <= ratio <= hi, ratio, hi))

    meta = {
        "scenario": scenario.name,
        "sizes": list(sizes),
        "reps": reps,
        "coef_medians": coef_medians,
        "base_medians": base_medians,
        "convergence_rates": rates,
    }
    return _finish("consistency", seed, meta, checks)


# ---------------------------------------------------------------------------
# Coverage study
# ---------------------------------------------------------------------------


def _coverage_rep(payload):
    name, n, level, master, r = payload
    scenario = get_scenario(name)
    cohort = draw_cohort(n, scenario.sim_config(_rep_seed(master, 17, r)))
    try:
        res = fit_and_infer(
            cohort,
            scenario.spec,
            grid=scenario.check_ages,
            level=level,
            t_star=scenario.t_star,
        )
        if not res.fit.converged:
            return False, None, None
    except (EffageError, np.linalg.LinAlgError):
        return False, None, None
    truth_vec = scenario.true_coefs.vector
    coef_hit = (res.coef_lower <= truth_vec) & (truth_vec <= res.coef_upper)
    truth_base = scenario.true_cumhaz(scenario.check_ages)
    base_hit = (res.band_lower <= truth_base) & (truth_base <= res.band_upper)
    return True, coef_hit, base_hit


def coverage_study(
    scenario: Scenario | str = "power-count",
    n: int = 400,
    reps: int = 500,
    level: float = 0.95,
    seed: int = DEFAULT_SEED,
    window: tuple[float, float] = (0.92, 0.975),
) -> McReport:
    """Empirical coverage of coefficient intervals and baseline bands."""
    if isinstance(scenario, str):
        scenario = get_scenario(scenario)
    results = _map_reps(
        _coverage_rep, [(scenario.name, n, level, seed, r) for r in range(reps)]
    )
    ok = np.array([r[0] for r in results])
    rate = float(ok.mean())
    checks = [McCheck("convergence_rate", rate >= 0.98, rate, 0.98)]
    coef_hits = np.array([r[1] for r in results if r[0]], dtype=float)
    base_hits = np.array([r[2] for r in results if r[0]], dtype=float)
    lo, hi = window
    d = scenario.coef_dim()
    coef_cov = coef_hits.mean(axis=0) if d else np.zeros(0)
    for j in range(d):
        cov = float(coef_cov[j])
        checks.append(McCheck(f"coef{j}_coverage", lo <= cov <= hi, cov, hi))
    base_cov = base_hits.mean(axis=0)
    for g, t in enumerate(scenario.check_ages):
        cov = float(base_cov[g])
        checks.append(McCheck(f"band_age{t:g}_coverage", lo <= cov <= hi, cov, hi))
    meta = {
        "scenario": scenario.name,
        "n": n,
        "reps": reps,
        "level": level,
        "coef_coverage": coef_cov,
        "band_coverage": base_cov,
        "check_ages": scenario.check_ages,
    }
    return _finish("coverage", seed, meta, checks)


# ---------------------------------------------------------------------------
# Normality and variance studies
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NormalityRecords:
    """Per-replication records shared by the normality and variance studies."""

    scenario: str
    n: int
    reps: int
    seed: int
    converged: np.ndarray
    coef_dev: np.ndarray
    inv_diag: np.ndarray
    inv_mean_accum: np.ndarray
    base_dev: np.ndarray
    c_diag: np.ndarray
    base_proxy: np.ndarray


def _normality_rep(payload):
    name, n, master, r = payload
    scenario = get_scenario(name)
    cohort = draw_cohort(n, scenario.sim_config(_rep_seed(master, 23, r)))
    try:
        riskset = RiskSet(cohort, scenario.spec, t_star=scenario.t_star)
        cfit = riskset.fit()
        if not cfit.converged:
            return None
        pieces = variance_pieces(riskset, cfit.coefs)
        inv = np.linalg.inv(pieces.information)
        if not np.all(np.isfinite(inv)):
            return None
    except (EffageError, np.linalg.LinAlgError):
        return None
    ages = scenario.check_ages
    truth = scenario.true_cumhaz(ages)
    scale = np.sqrt(n)
    coef_dev = scale * (cfit.coefs.vector - scenario.true_coefs.vector)
    base_dev = scale * (riskset.baseline(cfit.coefs)(ages) - truth)
    sens = pieces.at(ages, pieces.sensitivity)
    c_diag = pieces.at(ages, pieces.var0) + np.einsum("gj,jk,gk->g", sens, inv, sens)
    # baseline recomputed at the true coefficients: the pure baseline
    # fluctuation that should be asymptotically independent of coef_dev
    base_proxy = scale * (riskset.baseline(scenario.true_coefs)(ages) - truth)
    return coef_dev, np.diag(inv).copy(), inv, base_dev, c_diag, base_proxy


def normality_records(
    scenario: Scenario | str = "power-count",
    n: int = 800,
    reps: int = 500,
    seed: int = DEFAULT_SEED,
) -> NormalityRecords:
    """Run the replications once; both downstream studies read the records."""
    if isinstance(scenario, str):
        scenario = get_scenario(scenario)
    d = scenario.coef_dim()
    if d == 0:
        raise DegenerateModelError(
            "the scenario's modifier has no coefficients; nothing to standardize"
        )
    results = _map_reps(_normality_rep, [(scenario.name, n, seed, r) for r in range(reps)])
    converged = np.array([r is not None for r in results])
    hits = [r for r in results if r is not None]
    g = scenario.check_ages.size
    return NormalityRecords(
        scenario=scenario.name,
        n=n,
        reps=reps,
        seed=seed,
        converged=converged,
        coef_dev=np.array([h[0] for h in hits]).reshape(-1, d),
        inv_diag=np.array([h[1] for h in hits]).reshape(-1, d),
        inv_mean_accum=np.array([h[2] for h in hits]).reshape(-1, d, d),
        base_dev=np.array([h[3] for h in hits]).reshape(-1, g),
        c_diag=np.array([h[4] for h in hits]).reshape(-1, g),
        base_proxy=np.array([h[5] for h in hits]).reshape(-1, g),
    )


def normality_study(
    scenario: Scenario | str = "power-count",
    n: int = 800,
    reps: int = 500,
    seed: int = DEFAULT_SEED,
    records: NormalityRecords | None = None,
    corr_bound: float = 0.14,
) -> McReport:
    """Standardized coefficient deviations against the standard normal.

    Per-component Kolmogorov-Smirnov distance must stay below the
    classical 95% band width plus a finite-sample allowance, and the
    coefficient deviations must be nearly uncorrelated with the pure
    baseline fluctuation computed at the true coefficients.
    """
    if records is None:
        records = normality_records(scenario, n, reps, seed)
    rate = float(records.converged.mean())
    checks = [McCheck("convergence_rate", rate >= 0.98, rate, 0.98)]
    r_eff = records.coef_dev.shape[0]
    ks_bound = 1.36 / np.sqrt(r_eff) + 0.05
    standardized = records.coef_dev / np.sqrt(records.inv_diag)
    ks_stats = []
    for j in range(standardized.shape[1]):
        stat = float(kstest(standardized[:, j], "norm").statistic)
        ks_stats.append(stat)
        checks.append(McCheck(f"coef{j}_ks_distance", stat <= ks_bound, stat, float(ks_bound)))
    worst_corr = 0.0
    for j in range(records.coef_dev.shape[1]):
        for g in range(records.base_proxy.shape[1]):
            corr = float(np.corrcoef(records.coef_dev[:, j], records.base_proxy[:, g])[0, 1])
            worst_corr = max(worst_corr, abs(corr))
    checks.append(McCheck("max_abs_corr_with_baseline_part", worst_corr <= corr_bound, worst_corr, corr_bound))
    meta = {
        "scenario": records.scenario,
        "n": records.n,
        "reps": records.reps,
        "effective_reps": r_eff,
        "ks_stats": ks_stats,
        "worst_corr": worst_corr,
    }
    return _finish("normality", records.seed, meta, checks)


def variance_study(
    scenario: Scenario | str = "power-count",
    n: int = 800,
    reps: int = 500,
    seed: int = DEFAULT_SEED,
    records: NormalityRecords | None = None,
    rel_bound: float = 0.15,
) -> McReport:
    """Plug-in variance estimates against the Monte Carlo sampling variance."""
    if records is None:
        records = normality_records(scenario, n, reps, seed)
    rate = float(records.converged.mean())
    checks = [McCheck("convergence_rate", rate >= 0.98, rate, 0.98)]

    sample_cov = np.cov(records.coef_dev.T).reshape(
        records.coef_dev.shape[1], records.coef_dev.shape[1]
    )
    mean_inv = records.inv_mean_accum.mean(axis=0)
    rel = float(np.linalg.norm(sample_cov - mean_inv) / np.linalg.norm(mean_inv))
    checks.append(McCheck("coef_cov_relative_error", rel <= rel_bound, rel, rel_bound))

    if isinstance(scenario, str):
        scenario = get_scenario(scenario)
    base_var = records.base_dev.var(axis=0, ddof=1)
    mean_c = records.c_diag.mean(axis=0)
    base_rels = np.abs(base_var - mean_c) / mean_c
    for g, t in enumerate(scenario.check_ages):
        checks.append(
            McCheck(f"base_var_age{t:g}_relative_error", base_rels[g] <= rel_bound, float(base_rels[g]), rel_bound)
        )
    meta = {
        "scenario": records.scenario,
        "n": records.n,
        "reps": records.reps,
        "coef_cov_rel": rel,
        "base_var_rels": base_rels,
    }
    return _finish("variance", records.seed, meta, checks)
