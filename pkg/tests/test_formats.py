"""Round trips and located parse errors for the text file formats."""

from __future__ import annotations

import numpy as np
import pytest

from effage.formats import (
    FitDocument,
    FormatError,
    dumps_cohort,
    dumps_fit,
    link_kind,
    loads_cohort,
    loads_fit,
    loads_scenario,
    make_spec,
    rho_kind,
)
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
    LogLinearCount,
    ModelSpec,
    NoCountEffect,
    SoftplusLink,
    UnitPath,
    WeibullHazard,
)
from effage.scenarios import get_scenario
from effage.simulate import (
    ConstantCovariates,
    ExponentialCensoring,
    FixedCensoring,
    MinimalRepairPolicy,
    NoCovariates,
    PerfectRepairPolicy,
    ScaledRepairPolicy,
    ScheduledCovariates,
    UniformCensoring,
    draw_cohort,
)

PLAIN = ModelSpec(NoCountEffect(), ConstantLink())


def assert_cohorts_equal(a: Cohort, b: Cohort) -> None:
    assert a.n == b.n
    assert a.t_star == b.t_star
    for ua, ub in zip(a.units, b.units):
        assert np.array_equal(ua.event_times, ub.event_times)
        assert ua.tau == ub.tau
        assert ua.s_star == ub.s_star
        assert ua.age_spec.policy == ub.age_spec.policy
        assert ua.age_spec.segments == ub.age_spec.segments
        assert np.array_equal(ua.covariates.times, ub.covariates.times)
        assert np.array_equal(ua.covariates.values, ub.covariates.values)


class TestCohortRoundTrip:
    def test_simulated_cohort_with_covariates(self):
        scenario = get_scenario("cox-reduction")
        cohort = draw_cohort(15, scenario.sim_config(42))
        cohort = Cohort(cohort.units, t_star=scenario.t_star)
        text = dumps_cohort(cohort, scenario.spec)
        doc = loads_cohort(text)
        assert_cohorts_equal(doc.cohort, cohort)
        assert doc.rho == "identity"
        assert doc.link == "exp"
        assert dumps_cohort(doc.cohort, doc.spec) == text

    def test_piecewise_and_minimal_without_t_star(self):
        units = (
            UnitPath(
                [0.5, 1.1],
                2.0,
                2.0,
                EffectiveAgeSpec.piecewise([(0.0, 1.0), (0.1, 0.5), (0.0, 1.0)]),
            ),
            UnitPath([0.9], 1.7, 2.0, EffectiveAgeSpec.minimal()),
        )
        cohort = Cohort(units)
        text = dumps_cohort(cohort, ModelSpec(GeometricCount(), ConstantLink()))
        doc = loads_cohort(text)
        assert doc.cohort.t_star is None
        assert_cohorts_equal(doc.cohort, cohort)
        assert dumps_cohort(doc.cohort, doc.spec) == text

    def test_awkward_floats_survive_exactly(self):
        # 17 significant digits reproduce IEEE doubles bit for bit
        t1 = 0.1 + 0.2
        t2 = np.nextafter(t1, 1.0)
        unit = UnitPath([t1, t2], np.pi, 4.0, EffectiveAgeSpec.minimal())
        cohort = Cohort((unit,), t_star=1.0 / 3.0)
        doc = loads_cohort(dumps_cohort(cohort, PLAIN))
        assert doc.cohort.units[0].event_times[0] == t1
        assert doc.cohort.units[0].event_times[1] == t2
        assert doc.cohort.units[0].tau == np.pi
        assert doc.cohort.t_star == 1.0 / 3.0

    def test_time_varying_covariates(self):
        path = CovariatePath([0.0, 0.7, 1.4], [[0.2, -1.0], [0.5, 0.5], [-0.3, 2.0]])
        unit = UnitPath([1.0], 3.0, 3.0, EffectiveAgeSpec.perfect(), covariates=path)
        cohort = Cohort((unit,))
        doc = loads_cohort(dumps_cohort(cohort, ModelSpec(NoCountEffect(), SoftplusLink())))
        assert_cohorts_equal(doc.cohort, cohort)
        assert isinstance(doc.spec.link, SoftplusLink)

    def test_comments_and_blank_lines_ignored(self):
        text = dumps_cohort(Cohort((UnitPath([0.5], 1.0, 1.0, EffectiveAgeSpec.perfect()),)), PLAIN)
        lines = text.splitlines()
        lines.insert(1, "# annotated by hand")
        lines.insert(4, "")
        lines[6] += "   # trailing note"
        doc = loads_cohort("\n".join(lines))
        assert doc.cohort.units[0].event_times[0] == 0.5

    def test_kind_names_cover_all_families(self):
        assert rho_kind(NoCountEffect()) == "identity"
        assert rho_kind(GeometricCount()) == "geometric"
        assert rho_kind(LogLinearCount()) == "loglinear"
        assert link_kind(ConstantLink()) == "none"
        assert link_kind(ExpLink()) == "exp"
        assert link_kind(SoftplusLink()) == "softplus"
        one = lambda s, k, a: np.ones(np.shape(s))
        with pytest.raises(ValueError, match="no text-format name"):
            rho_kind(CustomCountEffect(one, one, one))

    def test_make_spec_rejects_unknown_kinds(self):
        with pytest.raises(ValueError, match="unknown rho kind"):
            make_spec("cubic", "none")
        with pytest.raises(ValueError, match="unknown link kind"):
            make_spec("identity", "probit")

    def test_serializer_rejects_mixed_covariate_dims(self):
        units = (
            UnitPath([0.5], 1.0, 1.0, EffectiveAgeSpec.perfect(), covariates=CovariatePath.constant([1.0])),
            UnitPath([0.4], 1.0, 1.0, EffectiveAgeSpec.perfect()),
        )
        with pytest.raises(ValueError, match="covariate dimension"):
            dumps_cohort(Cohort(units), ModelSpec(NoCountEffect(), ExpLink()))


CANONICAL_TEXT = """effage-cohort v1
s_star 2
p 0
q 0
rho identity
link none
units 1
unit 1
tau 2
events 2 0.5 1.2
ages perfect
covariates 0
"""


class TestCohortParseErrors:
    def _expect(self, text, match, line=None, field=None):
        with pytest.raises(FormatError, match=match) as err:
            loads_cohort(text)
        if line is not None:
            assert err.value.line == line
        if field is not None:
            assert err.value.field == field
        return err.value

    def test_wrong_magic(self):
        self._expect("effage-fit v1\n", "expected header", line=1)
        self._expect("effage-cohort v2\n", "expected header", line=1)
        self._expect("", "unexpected end of file")

    def test_event_count_mismatch(self):
        bad = CANONICAL_TEXT.replace("events 2 0.5 1.2", "events 3 0.5 1.2")
        self._expect(bad, "expected 3 event time", line=10, field="events")

    def test_q_contradicts_rho(self):
        bad = CANONICAL_TEXT.replace("q 0", "q 1")
        self._expect(bad, "header says q 1", field="q")

    def test_unknown_rho_and_link(self):
        self._expect(CANONICAL_TEXT.replace("rho identity", "rho cubic"), "unknown rho")
        self._expect(CANONICAL_TEXT.replace("link none", "link logit"), "unknown link")

    def test_unit_index_out_of_order(self):
        bad = CANONICAL_TEXT.replace("unit 1", "unit 2")
        self._expect(bad, "expected unit 1", field="unit")

    def test_unknown_policy_and_bad_segment_count(self):
        self._expect(CANONICAL_TEXT.replace("ages perfect", "ages brandnew"), "unknown age policy")
        self._expect(
            CANONICAL_TEXT.replace("ages perfect", "ages piecewise 0 1"),
            "need 6 values",
            field="ages",
        )

    def test_covariate_rows_with_p_zero(self):
        bad = CANONICAL_TEXT.replace("covariates 0", "covariates 1\nat 0 1.5")
        self._expect(bad, "header says p 0", field="covariates")

    def test_covariate_row_width(self):
        text = CANONICAL_TEXT.replace("p 0", "p 2").replace(
            "covariates 0", "covariates 1\nat 0 1.5"
        )
        self._expect(text, "expected a time and 2 covariate value", field="at")

    def test_non_numeric_token(self):
        self._expect(CANONICAL_TEXT.replace("tau 2", "tau soon"), "not a number", field="tau")

    def test_invalid_times_are_located_at_the_unit(self):
        bad = CANONICAL_TEXT.replace("events 2 0.5 1.2", "events 2 1.2 0.5")
        err = self._expect(bad, "strictly increasing")
        assert err.field == "unit 1"

    def test_truncated_file(self):
        lines = CANONICAL_TEXT.splitlines()[:-1]
        self._expect("\n".join(lines), "unexpected end of file")

    def test_trailing_content(self):
        self._expect(CANONICAL_TEXT + "extra stuff\n", "unexpected trailing content")

    def test_zero_units(self):
        bad = CANONICAL_TEXT.replace("units 1", "units 0").split("unit 1")[0]
        self._expect(bad, "at least one unit", field="units")


def small_fit_document(**overrides) -> FitDocument:
    base = dict(
        rho="geometric",
        link="exp",
        n_units=30,
        n_events=52,
        s_star=3.0,
        t_star=1.25,
        level=0.95,
        converged=True,
        iterations=6,
        score_norm=4.2e-12,
        condition=3.7,
        coef_names=("count1", "x1"),
        coef=[0.91, 0.48],
        coef_se=[0.11, 0.2],
        coef_lower=[0.694, 0.088],
        coef_upper=[1.126, 0.872],
        information=[[2.0, 0.3], [0.3, 1.1]],
        grid=[0.2, 0.5, 1.1],
        cumhaz=[0.1, 0.45, 0.9],
        survivor=[0.9, 0.63, 0.38],
        cdiag=[0.02, 0.09, 0.4],
        band_lower=[0.0, 0.2, 0.43],
        band_upper=[0.31, 0.7, 1.37],
        sensitivity=[[0.01, 0.0], [0.05, 0.02], [0.11, 0.06]],
    )
    base.update(overrides)
    return FitDocument(**base)


class TestFitRoundTrip:
    def test_full_document(self):
        doc = small_fit_document()
        text = dumps_fit(doc)
        back = loads_fit(text)
        assert back.rho == doc.rho and back.link == doc.link
        assert back.coef_names == doc.coef_names
        for name in (
            "coef",
            "coef_se",
            "coef_lower",
            "coef_upper",
            "information",
            "grid",
            "cumhaz",
            "survivor",
            "cdiag",
            "band_lower",
            "band_upper",
            "sensitivity",
        ):
            assert np.array_equal(getattr(back, name), getattr(doc, name)), name
        assert back.converged is True and back.iterations == 6
        assert back.score_norm == doc.score_norm and back.condition == doc.condition
        assert dumps_fit(back) == text

    def test_nan_and_inf_fields_round_trip(self):
        doc = small_fit_document(
            coef_se=[np.nan, np.nan],
            coef_lower=[np.nan, np.nan],
            coef_upper=[np.nan, np.nan],
            band_upper=[np.inf, np.inf, np.inf],
            condition=np.inf,
        )
        back = loads_fit(dumps_fit(doc))
        assert np.all(np.isnan(back.coef_se))
        assert np.all(np.isinf(back.band_upper))
        assert back.condition == np.inf

    def test_empty_fit(self):
        doc = small_fit_document(
            n_events=0,
            coef_names=(),
            coef=[],
            coef_se=[],
            coef_lower=[],
            coef_upper=[],
            information=np.zeros((0, 0)),
            grid=[],
            cumhaz=[],
            survivor=[],
            cdiag=[],
            band_lower=[],
            band_upper=[],
            sensitivity=np.zeros((0, 0)),
        )
        back = loads_fit(dumps_fit(doc))
        assert back.n_coefs == 0 and back.n_grid == 0

    def test_grid_mismatch_between_tables_is_rejected(self):
        text = dumps_fit(small_fit_document())
        lines = text.splitlines()
        i = lines.index("survivor 3") + 1
        lines[i] = "0.25 " + lines[i].split()[1]
        with pytest.raises(FormatError, match="survivor ages must match"):
            loads_fit("\n".join(lines) + "\n")

    def test_information_order_must_match(self):
        text = dumps_fit(small_fit_document()).replace("information 2", "information 1")
        with pytest.raises(FormatError, match="information order"):
            loads_fit(text)

    def test_sensitivity_width_must_match(self):
        text = dumps_fit(small_fit_document()).replace("sensitivity 3 2", "sensitivity 3 1")
        with pytest.raises(FormatError, match="sensitivity width"):
            loads_fit(text)


SCENARIO_TEXT = """effage-scenario v1
name bench
baseline weibull 1.5 2.0
rho geometric
count_coefs 0.9
link exp
covariate_coefs 0.4 -0.2
covariates constant -1 1
policy scaled 0.3 0.8
censoring uniform 1 3
s_star 3
t_star 1.2
max_events 500
grid 0.1 1.2 12
check_ages 0.4 0.8 1.2
"""


class TestScenarioConfig:
    def test_full_config(self):
        sc = loads_scenario(SCENARIO_TEXT)
        assert sc.name == "bench"
        assert sc.params.baseline == WeibullHazard(1.5, 2.0)
        assert isinstance(sc.params.spec.count_effect, GeometricCount)
        assert isinstance(sc.params.spec.link, ExpLink)
        assert np.array_equal(sc.params.coefs.count, [0.9])
        assert np.array_equal(sc.params.coefs.covariate, [0.4, -0.2])
        assert sc.covariates == ConstantCovariates(2, -1.0, 1.0)
        assert sc.age_policy == ScaledRepairPolicy(0.3, 0.8)
        assert sc.censoring == UniformCensoring(1.0, 3.0)
        assert sc.s_star == 3.0 and sc.t_star == 1.2
        assert sc.max_events_per_unit == 500
        assert sc.grid.size == 12 and sc.grid[0] == 0.1 and sc.grid[-1] == 1.2
        assert np.array_equal(sc.check_ages, [0.4, 0.8, 1.2])

    def test_minimal_config_defaults(self):
        sc = loads_scenario(
            "effage-scenario v1\nbaseline constant 1.2\ncensoring fixed 2\ns_star 2\n"
        )
        assert sc.name == "custom"
        assert sc.params.baseline == ConstantHazard(1.2)
        assert isinstance(sc.params.spec.count_effect, NoCountEffect)
        assert isinstance(sc.params.spec.link, ConstantLink)
        assert sc.covariates == NoCovariates()
        assert sc.age_policy == PerfectRepairPolicy()
        assert sc.censoring == FixedCensoring(2.0)
        assert sc.t_star == sc.s_star == 2.0
        assert sc.grid.size == 20 and sc.grid[-1] == 2.0
        assert sc.check_ages.size == 5

    def test_scheduled_covariates_and_exponential_censoring(self):
        sc = loads_scenario(
            "effage-scenario v1\nbaseline constant 1\nlink softplus\ncovariate_coefs 0.3\n"
            "covariates scheduled -2 2 0 0.5 1\ncensoring exponential 0.7\ns_star 2\n"
        )
        assert sc.covariates == ScheduledCovariates((0.0, 0.5, 1.0), 1, -2.0, 2.0)
        assert sc.censoring == ExponentialCensoring(0.7)
        assert isinstance(sc.age_policy, PerfectRepairPolicy)

    def test_minimal_policy(self):
        sc = loads_scenario(
            "effage-scenario v1\nbaseline constant 1\ncensoring fixed 2\ns_star 2\npolicy minimal\n"
        )
        assert sc.age_policy == MinimalRepairPolicy()

    @pytest.mark.parametrize(
        "text, match",
        [
            ("effage-scenario v1\ncensoring fixed 2\ns_star 2\n", "missing required key 'baseline'"),
            ("effage-scenario v1\nbaseline constant 1\ns_star 2\n", "missing required key 'censoring'"),
            (
                "effage-scenario v1\nbaseline constant 1\ncensoring fixed 2\ns_star 2\nspice hot\n",
                "unknown scenario key",
            ),
            (
                "effage-scenario v1\nbaseline constant 1\nbaseline constant 2\ncensoring fixed 2\ns_star 2\n",
                "duplicate key",
            ),
            (
                "effage-scenario v1\nbaseline constant 1\ncensoring fixed 2\ns_star 2\nrho geometric\n",
                "needs 1 count coefficient",
            ),
            (
                "effage-scenario v1\nbaseline constant 1\ncensoring fixed 2\ns_star 2\ncovariate_coefs 0.5\n",
                "link other than 'none'",
            ),
            (
                "effage-scenario v1\nbaseline constant 1\ncensoring fixed 2\ns_star 2\n"
                "link exp\ncovariate_coefs 0.5\ncovariates none\n",
                "no covariates drawn",
            ),
            (
                "effage-scenario v1\nbaseline constant 1\ncensoring fixed 2\ns_star 2\n"
                "link exp\ncovariate_coefs 0.5\ncovariates scheduled -1 1 0.5 1\n",
                "start at 0",
            ),
            (
                "effage-scenario v1\nbaseline sawtooth 1\ncensoring fixed 2\ns_star 2\n",
                "unknown baseline family",
            ),
            (
                "effage-scenario v1\nbaseline constant 1\ncensoring fixed 2\ns_star 2\npolicy scaled 2\n",
                "memory must lie",
            ),
            (
                "effage-scenario v1\nbaseline constant -1\ncensoring fixed 2\ns_star 2\n",
                "finite and nonnegative",
            ),
        ],
    )
    def test_config_errors(self, text, match):
        with pytest.raises(FormatError, match=match):
            loads_scenario(text)
