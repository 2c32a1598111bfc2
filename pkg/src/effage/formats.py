"""Versioned text formats for cohorts, fitted models, and scenario configs.

Three line-oriented documents, all plain text so fixtures stay reviewable
in a diff:

* cohort files (``effage-cohort v1``): observation window, model family
  kinds, and one block per unit with censoring time, event times, age
  segments, and covariate steps.
* fit files (``effage-fit v1``): coefficient estimates with intervals,
  the baseline cumulative-hazard and survivor tables, the information
  matrix, the baseline sensitivity grid, and variance diagnostics.
* scenario configs (``effage-scenario v1``): a generative setup for the
  simulator, accepted anywhere a named preset is.

Floats are serialized with 17 significant digits, which reproduces IEEE
doubles exactly, so parse(serialize(x)) returns bit-identical values.
Parse failures raise :class:`FormatError` carrying the line number and,
where it helps, the field name.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from effage.model import (
    BaselineHazard,
    Coefs,
    Cohort,
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
    UnitPath,
    WeibullHazard,
)
from effage.scenarios import Scenario
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
)

__all__ = [
    "FormatError",
    "CohortDocument",
    "FitDocument",
    "RHO_KINDS",
    "LINK_KINDS",
    "rho_kind",
    "link_kind",
    "make_spec",
    "dumps_cohort",
    "loads_cohort",
    "write_cohort",
    "read_cohort",
    "dumps_fit",
    "loads_fit",
    "write_fit",
    "read_fit",
    "loads_scenario",
    "read_scenario",
]

_VERSION = "v1"
_COHORT_MAGIC = "effage-cohort"
_FIT_MAGIC = "effage-fit"
_SCENARIO_MAGIC = "effage-scenario"

RHO_KINDS = {
    "identity": NoCountEffect,
    "geometric": GeometricCount,
    "loglinear": LogLinearCount,
}
LINK_KINDS = {
    "none": ConstantLink,
    "exp": ExpLink,
    "softplus": SoftplusLink,
}


class FormatError(ValueError):
    """Parse error with the offending line number (and field when known)."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(field)
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


def rho_kind(effect) -> str:
    """File-format name of a count-effect family."""
    for name, cls in RHO_KINDS.items():
        if type(effect) is cls:
            return name
    raise ValueError(f"{type(effect).__name__} has no text-format name")


def link_kind(link) -> str:
    """File-format name of a covariate-link family."""
    for name, cls in LINK_KINDS.items():
        if type(link) is cls:
            return name
    raise ValueError(f"{type(link).__name__} has no text-format name")


def make_spec(rho: str, link: str) -> ModelSpec:
    """Build a model family pairing from its file-format kind names."""
    if rho not in RHO_KINDS:
        raise ValueError(f"unknown rho kind {rho!r}; choose from {sorted(RHO_KINDS)}")
    if link not in LINK_KINDS:
        raise ValueError(f"unknown link kind {link!r}; choose from {sorted(LINK_KINDS)}")
    return ModelSpec(RHO_KINDS[rho](), LINK_KINDS[link]())


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _fmt_row(values) -> str:
    return " ".join(_fmt(v) for v in np.atleast_1d(values))


# ---------------------------------------------------------------------------
# Token cursor shared by all parsers
# ---------------------------------------------------------------------------


class _Cursor:
    """Walk non-empty lines as token lists, tracking line numbers.

    Blank lines and full-line or trailing ``#`` comments are skipped so
    hand-edited fixtures can be annotated; the serializers never emit
    either.
    """

    def __init__(self, text: str):
        self.rows: list[tuple[int, list[str]]] = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            body = raw.split("#", 1)[0].strip()
            if body:
                self.rows.append((lineno, body.split()))
        self.pos = 0
        self.last_line = self.rows[-1][0] if self.rows else 0

    def done(self) -> bool:
        return self.pos >= len(self.rows)

    def peek_key(self) -> str | None:
        if self.done():
            return None
        return self.rows[self.pos][1][0]

    def next(self) -> tuple[int, list[str]]:
        if self.done():
            raise FormatError("unexpected end of file", line=self.last_line + 1)
        row = self.rows[self.pos]
        self.pos += 1
        return row

    def take(self, key: str, n_values: int | None = None) -> tuple[int, list[str]]:
        lineno, tokens = self.next()
        if tokens[0] != key:
            raise FormatError(f"expected a {key!r} line, found {tokens[0]!r}", lineno, key)
        values = tokens[1:]
        if n_values is not None and len(values) != n_values:
            raise FormatError(
                f"expected {n_values} value(s), got {len(values)}", lineno, key
            )
        return lineno, values


def _to_int(token: str, lineno: int, field: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise FormatError(f"not an integer: {token!r}", lineno, field) from None


def _to_float(token: str, lineno: int, field: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise FormatError(f"not a number: {token!r}", lineno, field) from None


def _to_floats(tokens, lineno: int, field: str) -> np.ndarray:
    return np.array([_to_float(t, lineno, field) for t in tokens], dtype=float)


def _check_magic(cursor: _Cursor, magic: str) -> None:
    lineno, tokens = cursor.next()
    if tokens != [magic, _VERSION]:
        raise FormatError(f"expected header '{magic} {_VERSION}'", lineno)


def _check_consumed(cursor: _Cursor) -> None:
    if not cursor.done():
        lineno, tokens = cursor.rows[cursor.pos]
        raise FormatError(f"unexpected trailing content {tokens[0]!r}", lineno)


# ---------------------------------------------------------------------------
# Cohort files
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CohortDocument:
    """A cohort together with the model family kinds recorded in its file."""

    cohort: Cohort
    spec: ModelSpec

    @property
    def rho(self) -> str:
        return rho_kind(self.spec.count_effect)

    @property
    def link(self) -> str:
        return link_kind(self.spec.link)


def dumps_cohort(cohort: Cohort, spec: ModelSpec) -> str:
    """Serialize a cohort plus model kinds to the versioned text format."""
    p = cohort.dim_covariates
    out = [f"{_COHORT_MAGIC} {_VERSION}"]
    out.append(f"s_star {_fmt(cohort.s_star)}")
    if cohort.t_star is not None:
        out.append(f"t_star {_fmt(cohort.t_star)}")
    out.append(f"p {p}")
    out.append(f"q {spec.count_effect.n_params}")
    out.append(f"rho {rho_kind(spec.count_effect)}")
    out.append(f"link {link_kind(spec.link)}")
    out.append(f"units {cohort.n}")
    for i, unit in enumerate(cohort.units, start=1):
        out.append(f"unit {i}")
        out.append(f"tau {_fmt(unit.tau)}")
        events = " ".join(_fmt(t) for t in unit.event_times)
        out.append(f"events {unit.n_events}{' ' + events if events else ''}")
        if unit.age_spec.policy == "piecewise":
            flat = " ".join(f"{_fmt(a)} {_fmt(b)}" for a, b in unit.age_spec.segments)
            out.append(f"ages piecewise {flat}")
        else:
            out.append(f"ages {unit.age_spec.policy}")
        if p == 0:
            out.append("covariates 0")
        else:
            path = unit.covariates
            if path.dim != p:
                raise ValueError(
                    f"unit {i}: covariate dimension {path.dim} differs from cohort dimension {p}"
                )
            out.append(f"covariates {len(path.times)}")
            for t, row in zip(path.times, path.values):
                out.append(f"at {_fmt(t)} {_fmt_row(row)}")
    return "\n".join(out) + "\n"


def _parse_unit(cursor: _Cursor, index: int, s_star: float, p: int) -> UnitPath:
    header_line, values = cursor.take("unit", 1)
    if _to_int(values[0], header_line, "unit") != index:
        raise FormatError(f"expected unit {index}, found unit {values[0]}", header_line, "unit")

    lineno, values = cursor.take("tau", 1)
    tau = _to_float(values[0], lineno, "tau")

    lineno, values = cursor.take("events")
    if not values:
        raise FormatError("missing event count", lineno, "events")
    m = _to_int(values[0], lineno, "events")
    if m < 0:
        raise FormatError("event count must be nonnegative", lineno, "events")
    if len(values) != m + 1:
        raise FormatError(f"expected {m} event time(s), got {len(values) - 1}", lineno, "events")
    event_times = _to_floats(values[1:], lineno, "events")

    lineno, values = cursor.take("ages")
    if not values:
        raise FormatError("missing age policy", lineno, "ages")
    policy = values[0]
    if policy in ("perfect", "minimal"):
        if len(values) != 1:
            raise FormatError(f"policy {policy!r} takes no segment values", lineno, "ages")
        age_spec = EffectiveAgeSpec(policy)
    elif policy == "piecewise":
        flat = _to_floats(values[1:], lineno, "ages")
        if flat.size != 2 * (m + 1):
            raise FormatError(
                f"piecewise ages need {2 * (m + 1)} values (start_age slope per segment), "
                f"got {flat.size}",
                lineno,
                "ages",
            )
        age_spec = EffectiveAgeSpec.piecewise(list(zip(flat[0::2], flat[1::2])))
    else:
        raise FormatError(f"unknown age policy {policy!r}", lineno, "ages")

    lineno, values = cursor.take("covariates", 1)
    rows = _to_int(values[0], lineno, "covariates")
    if p == 0:
        if rows != 0:
            raise FormatError("covariate rows present but header says p 0", lineno, "covariates")
        path = CovariatePath.empty()
    else:
        if rows < 1:
            raise FormatError("at least one covariate row is required when p > 0", lineno, "covariates")
        times = np.zeros(rows)
        vals = np.zeros((rows, p))
        for r in range(rows):
            row_line, row_values = cursor.take("at")
            if len(row_values) != p + 1:
                raise FormatError(
                    f"expected a time and {p} covariate value(s), got {len(row_values)} token(s)",
                    row_line,
                    "at",
                )
            times[r] = _to_float(row_values[0], row_line, "at")
            vals[r] = _to_floats(row_values[1:], row_line, "at")
        try:
            path = CovariatePath(times, vals)
        except ValueError as exc:
            raise FormatError(str(exc), lineno, "covariates") from None

    try:
        return UnitPath(event_times, tau, s_star, age_spec, path)
    except ValueError as exc:
        raise FormatError(str(exc), header_line, f"unit {index}") from None


def loads_cohort(text: str) -> CohortDocument:
    """Parse the cohort text format; raises :class:`FormatError` on defects."""
    cursor = _Cursor(text)
    _check_magic(cursor, _COHORT_MAGIC)

    lineno, values = cursor.take("s_star", 1)
    s_star = _to_float(values[0], lineno, "s_star")
    t_star = None
    if cursor.peek_key() == "t_star":
        lineno, values = cursor.take("t_star", 1)
        t_star = _to_float(values[0], lineno, "t_star")
    lineno, values = cursor.take("p", 1)
    p = _to_int(values[0], lineno, "p")
    if p < 0:
        raise FormatError("p must be nonnegative", lineno, "p")
    q_line, values = cursor.take("q", 1)
    q = _to_int(values[0], q_line, "q")
    lineno, values = cursor.take("rho", 1)
    if values[0] not in RHO_KINDS:
        raise FormatError(f"unknown rho kind {values[0]!r}", lineno, "rho")
    effect = RHO_KINDS[values[0]]()
    if effect.n_params != q:
        raise FormatError(
            f"rho {values[0]!r} has {effect.n_params} parameter(s) but header says q {q}",
            q_line,
            "q",
        )
    lineno, values = cursor.take("link", 1)
    if values[0] not in LINK_KINDS:
        raise FormatError(f"unknown link kind {values[0]!r}", lineno, "link")
    link = LINK_KINDS[values[0]]()

    lineno, values = cursor.take("units", 1)
    n = _to_int(values[0], lineno, "units")
    if n < 1:
        raise FormatError("a cohort needs at least one unit", lineno, "units")

    units = [_parse_unit(cursor, i, s_star, p) for i in range(1, n + 1)]
    _check_consumed(cursor)
    try:
        cohort = Cohort(tuple(units), t_star=t_star)
    except ValueError as exc:
        raise FormatError(str(exc), line=1) from None
    return CohortDocument(cohort=cohort, spec=ModelSpec(effect, link))


def write_cohort(path, cohort: Cohort, spec: ModelSpec) -> None:
    with open(path, "w", newline="\n") as handle:
        handle.write(dumps_cohort(cohort, spec))


def read_cohort(path) -> CohortDocument:
    with open(path, "r") as handle:
        return loads_cohort(handle.read())


# ---------------------------------------------------------------------------
# Fit files
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FitDocument:
    """Everything a fit emits, in the fixed order the text format uses.

    The five grid tables (cumulative hazard, survivor, pointwise variance
    diagonal, confidence band, coefficient sensitivity) share one age grid,
    the fitted baseline's jump locations.
    """

    rho: str
    link: str
    n_units: int
    n_events: int
    s_star: float
    t_star: float
    level: float
    converged: bool
    iterations: int
    score_norm: float
    condition: float
    coef_names: tuple[str, ...]
    coef: np.ndarray
    coef_se: np.ndarray
    coef_lower: np.ndarray
    coef_upper: np.ndarray
    information: np.ndarray
    grid: np.ndarray
    cumhaz: np.ndarray
    survivor: np.ndarray
    cdiag: np.ndarray
    band_lower: np.ndarray
    band_upper: np.ndarray
    sensitivity: np.ndarray

    def __post_init__(self) -> None:
        d = len(self.coef_names)
        g = np.atleast_1d(np.asarray(self.grid, dtype=float)).size
        for name in (
            "coef",
            "coef_se",
            "coef_lower",
            "coef_upper",
            "grid",
            "cumhaz",
            "survivor",
            "cdiag",
            "band_lower",
            "band_upper",
        ):
            object.__setattr__(
                self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            )
        object.__setattr__(
            self, "information", np.asarray(self.information, dtype=float).reshape(d, d)
        )
        object.__setattr__(
            self, "sensitivity", np.asarray(self.sensitivity, dtype=float).reshape(g, d)
        )
        object.__setattr__(self, "coef_names", tuple(self.coef_names))
        for name in ("coef", "coef_se", "coef_lower", "coef_upper"):
            if getattr(self, name).size != d:
                raise ValueError(f"{name} must have one entry per coefficient")
        for name in ("cumhaz", "survivor", "cdiag", "band_lower", "band_upper"):
            if getattr(self, name).size != g:
                raise ValueError(f"{name} must have one entry per grid age")

    @property
    def n_coefs(self) -> int:
        return len(self.coef_names)

    @property
    def n_grid(self) -> int:
        return int(self.grid.size)


def dumps_fit(doc: FitDocument) -> str:
    """Serialize a fit to the versioned text format (fixed field order)."""
    out = [f"{_FIT_MAGIC} {_VERSION}"]
    out.append(f"rho {doc.rho}")
    out.append(f"link {doc.link}")
    out.append(f"n_units {doc.n_units}")
    out.append(f"n_events {doc.n_events}")
    out.append(f"s_star {_fmt(doc.s_star)}")
    out.append(f"t_star {_fmt(doc.t_star)}")
    out.append(f"level {_fmt(doc.level)}")
    out.append(f"converged {int(doc.converged)}")
    out.append(f"iterations {doc.iterations}")
    out.append(f"score_norm {_fmt(doc.score_norm)}")
    out.append(f"condition {_fmt(doc.condition)}")
    d, g = doc.n_coefs, doc.n_grid
    out.append(f"coefs {d}")
    for j in range(d):
        out.append(
            f"coef {doc.coef_names[j]} {_fmt(doc.coef[j])} {_fmt(doc.coef_se[j])} "
            f"{_fmt(doc.coef_lower[j])} {_fmt(doc.coef_upper[j])}"
        )
    out.append(f"information {d}")
    for j in range(d):
        out.append(f"row {_fmt_row(doc.information[j])}")
    for key, table in (("cumhaz", doc.cumhaz), ("survivor", doc.survivor), ("cdiag", doc.cdiag)):
        out.append(f"{key} {g}")
        for i in range(g):
            out.append(f"{_fmt(doc.grid[i])} {_fmt(table[i])}")
    out.append(f"band {g}")
    for i in range(g):
        out.append(f"{_fmt(doc.grid[i])} {_fmt(doc.band_lower[i])} {_fmt(doc.band_upper[i])}")
    out.append(f"sensitivity {g} {d}")
    for i in range(g):
        row = _fmt_row(doc.sensitivity[i]) if d else ""
        out.append(f"{_fmt(doc.grid[i])}{' ' + row if row else ''}")
    return "\n".join(out) + "\n"


def _parse_table(cursor: _Cursor, key: str, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Read ``key <rows>`` then rows of ``age v1 .. v_width``."""
    lineno, values = cursor.take(key, 1)
    rows = _to_int(values[0], lineno, key)
    if rows < 0:
        raise FormatError("row count must be nonnegative", lineno, key)
    ages = np.zeros(rows)
    table = np.zeros((rows, width))
    for r in range(rows):
        row_line, tokens = cursor.next()
        if len(tokens) != width + 1:
            raise FormatError(
                f"expected an age and {width} value(s), got {len(tokens)} token(s)",
                row_line,
                key,
            )
        ages[r] = _to_float(tokens[0], row_line, key)
        table[r] = _to_floats(tokens[1:], row_line, key)
    return ages, table


def loads_fit(text: str) -> FitDocument:
    """Parse the fit text format; raises :class:`FormatError` on defects."""
    cursor = _Cursor(text)
    _check_magic(cursor, _FIT_MAGIC)

    lineno, values = cursor.take("rho", 1)
    if values[0] not in RHO_KINDS:
        raise FormatError(f"unknown rho kind {values[0]!r}", lineno, "rho")
    rho = values[0]
    lineno, values = cursor.take("link", 1)
    if values[0] not in LINK_KINDS:
        raise FormatError(f"unknown link kind {values[0]!r}", lineno, "link")
    link = values[0]

    scalars: dict[str, float] = {}
    for key in ("n_units", "n_events"):
        lineno, values = cursor.take(key, 1)
        scalars[key] = _to_int(values[0], lineno, key)
    for key in ("s_star", "t_star", "level"):
        lineno, values = cursor.take(key, 1)
        scalars[key] = _to_float(values[0], lineno, key)
    lineno, values = cursor.take("converged", 1)
    converged = _to_int(values[0], lineno, "converged")
    if converged not in (0, 1):
        raise FormatError("converged must be 0 or 1", lineno, "converged")
    lineno, values = cursor.take("iterations", 1)
    iterations = _to_int(values[0], lineno, "iterations")
    for key in ("score_norm", "condition"):
        lineno, values = cursor.take(key, 1)
        scalars[key] = _to_float(values[0], lineno, key)

    lineno, values = cursor.take("coefs", 1)
    d = _to_int(values[0], lineno, "coefs")
    if d < 0:
        raise FormatError("coefficient count must be nonnegative", lineno, "coefs")
    names: list[str] = []
    coef = np.zeros((d, 4))
    for j in range(d):
        row_line, values = cursor.take("coef")
        if len(values) != 5:
            raise FormatError(
                f"expected name, estimate, se, lower, upper; got {len(values)} token(s)",
                row_line,
                "coef",
            )
        names.append(values[0])
        coef[j] = _to_floats(values[1:], row_line, "coef")

    lineno, values = cursor.take("information", 1)
    if _to_int(values[0], lineno, "information") != d:
        raise FormatError(f"information order must equal coefs {d}", lineno, "information")
    info = np.zeros((d, d))
    for j in range(d):
        row_line, values = cursor.take("row", d)
        info[j] = _to_floats(values, row_line, "row")

    grid, cumhaz = _parse_table(cursor, "cumhaz", 1)
    surv_ages, survivor = _parse_table(cursor, "survivor", 1)
    cdiag_ages, cdiag = _parse_table(cursor, "cdiag", 1)
    band_ages, band = _parse_table(cursor, "band", 2)

    lineno, values = cursor.take("sensitivity", 2)
    g = _to_int(values[0], lineno, "sensitivity")
    if g != grid.size:
        raise FormatError(f"sensitivity rows must equal grid size {grid.size}", lineno, "sensitivity")
    if _to_int(values[1], lineno, "sensitivity") != d:
        raise FormatError(f"sensitivity width must equal coefs {d}", lineno, "sensitivity")
    sens_ages = np.zeros(g)
    sens = np.zeros((g, d))
    for r in range(g):
        row_line, tokens = cursor.next()
        if len(tokens) != d + 1:
            raise FormatError(
                f"expected an age and {d} value(s), got {len(tokens)} token(s)",
                row_line,
                "sensitivity",
            )
        sens_ages[r] = _to_float(tokens[0], row_line, "sensitivity")
        sens[r] = _to_floats(tokens[1:], row_line, "sensitivity")
    _check_consumed(cursor)

    for key, ages in (
        ("survivor", surv_ages),
        ("cdiag", cdiag_ages),
        ("band", band_ages),
        ("sensitivity", sens_ages),
    ):
        if ages.size != grid.size or not np.array_equal(ages, grid):
            raise FormatError(f"{key} ages must match the cumhaz grid exactly", line=1, field=key)

    return FitDocument(
        rho=rho,
        link=link,
        n_units=int(scalars["n_units"]),
        n_events=int(scalars["n_events"]),
        s_star=scalars["s_star"],
        t_star=scalars["t_star"],
        level=scalars["level"],
        converged=bool(converged),
        iterations=iterations,
        score_norm=scalars["score_norm"],
        condition=scalars["condition"],
        coef_names=tuple(names),
        coef=coef[:, 0],
        coef_se=coef[:, 1],
        coef_lower=coef[:, 2],
        coef_upper=coef[:, 3],
        information=info,
        grid=grid,
        cumhaz=cumhaz[:, 0],
        survivor=survivor[:, 0],
        cdiag=cdiag[:, 0],
        band_lower=band[:, 0],
        band_upper=band[:, 1],
        sensitivity=sens,
    )


def write_fit(path, doc: FitDocument) -> None:
    with open(path, "w", newline="\n") as handle:
        handle.write(dumps_fit(doc))


def read_fit(path) -> FitDocument:
    with open(path, "r") as handle:
        return loads_fit(handle.read())


# ---------------------------------------------------------------------------
# Scenario configs
# ---------------------------------------------------------------------------

_SCENARIO_KEYS = (
    "name",
    "baseline",
    "rho",
    "count_coefs",
    "link",
    "covariate_coefs",
    "covariates",
    "policy",
    "censoring",
    "s_star",
    "t_star",
    "max_events",
    "grid",
    "check_ages",
)


def _scenario_baseline(tokens, lineno) -> BaselineHazard:
    if not tokens:
        raise FormatError("baseline needs a family name", lineno, "baseline")
    kind, args = tokens[0], _to_floats(tokens[1:], lineno, "baseline").tolist()
    try:
        if kind == "constant":
            if len(args) != 1:
                raise ValueError("constant baseline takes one value, the rate")
            return ConstantHazard(args[0])
        if kind == "weibull":
            if len(args) not in (1, 2):
                raise ValueError("weibull baseline takes a shape and an optional scale")
            return WeibullHazard(*args)
        raise ValueError(f"unknown baseline family {kind!r}")
    except ValueError as exc:
        raise FormatError(str(exc), lineno, "baseline") from None


def _scenario_censoring(tokens, lineno):
    if not tokens:
        raise FormatError("censoring needs a family name", lineno, "censoring")
    kind, args = tokens[0], _to_floats(tokens[1:], lineno, "censoring").tolist()
    try:
        if kind == "fixed":
            if len(args) != 1:
                raise ValueError("fixed censoring takes one value")
            return FixedCensoring(args[0])
        if kind == "uniform":
            if len(args) != 2:
                raise ValueError("uniform censoring takes low and high")
            return UniformCensoring(args[0], args[1])
        if kind == "exponential":
            if len(args) != 1:
                raise ValueError("exponential censoring takes a rate")
            return ExponentialCensoring(args[0])
        raise ValueError(f"unknown censoring family {kind!r}")
    except ValueError as exc:
        raise FormatError(str(exc), lineno, "censoring") from None


def _scenario_policy(tokens, lineno):
    if not tokens:
        raise FormatError("policy needs a name", lineno, "policy")
    kind, args = tokens[0], _to_floats(tokens[1:], lineno, "policy").tolist()
    try:
        if kind == "perfect":
            if args:
                raise ValueError("perfect repair takes no values")
            return PerfectRepairPolicy()
        if kind == "minimal":
            if args:
                raise ValueError("minimal repair takes no values")
            return MinimalRepairPolicy()
        if kind == "scaled":
            if len(args) not in (1, 2):
                raise ValueError("scaled repair takes a memory and an optional slope")
            return ScaledRepairPolicy(*args)
        raise ValueError(f"unknown repair policy {kind!r}")
    except ValueError as exc:
        raise FormatError(str(exc), lineno, "policy") from None


def _scenario_covariates(tokens, lineno, p: int):
    if not tokens:
        raise FormatError("covariates needs a kind", lineno, "covariates")
    kind, args = tokens[0], _to_floats(tokens[1:], lineno, "covariates").tolist()
    try:
        if kind == "none":
            if args:
                raise ValueError("covariates none takes no values")
            if p:
                raise ValueError(f"{p} covariate coefficient(s) given but no covariates drawn")
            return NoCovariates()
        if p == 0:
            raise ValueError("covariate generator given but covariate_coefs is empty")
        if kind == "constant":
            if len(args) not in (0, 2):
                raise ValueError("covariates constant takes an optional low and high")
            return ConstantCovariates(p, *args)
        if kind == "scheduled":
            if len(args) < 3:
                raise ValueError("covariates scheduled takes low, high, then step times")
            if args[2] != 0.0:
                raise ValueError("scheduled step times must start at 0")
            return ScheduledCovariates(tuple(args[2:]), p, args[0], args[1])
        raise ValueError(f"unknown covariate kind {kind!r}")
    except ValueError as exc:
        raise FormatError(str(exc), lineno, "covariates") from None


def loads_scenario(text: str) -> Scenario:
    """Parse a scenario config into a full generative setup.

    Keys may appear in any order, each at most once.  Only ``baseline``,
    ``censoring``, and ``s_star`` are required; everything else defaults
    to the simplest choice (no modifier, perfect repair, no covariates,
    age cutoff at the observation window).
    """
    cursor = _Cursor(text)
    _check_magic(cursor, _SCENARIO_MAGIC)
    seen: dict[str, tuple[int, list[str]]] = {}
    while not cursor.done():
        lineno, tokens = cursor.next()
        key = tokens[0]
        if key not in _SCENARIO_KEYS:
            raise FormatError(f"unknown scenario key {key!r}", lineno, key)
        if key in seen:
            raise FormatError(f"duplicate key {key!r}", lineno, key)
        seen[key] = (lineno, tokens[1:])
    for key in ("baseline", "censoring", "s_star"):
        if key not in seen:
            raise FormatError(f"missing required key {key!r}", line=cursor.last_line)

    def tokens_of(key):
        return seen[key][1]

    def line_of(key):
        return seen[key][0]

    name = "custom"
    if "name" in seen:
        if len(tokens_of("name")) != 1:
            raise FormatError("name takes one token", line_of("name"), "name")
        name = tokens_of("name")[0]

    rho = "identity"
    if "rho" in seen:
        values = tokens_of("rho")
        if len(values) != 1 or values[0] not in RHO_KINDS:
            raise FormatError(f"rho must be one of {sorted(RHO_KINDS)}", line_of("rho"), "rho")
        rho = values[0]
    link = "none"
    if "link" in seen:
        values = tokens_of("link")
        if len(values) != 1 or values[0] not in LINK_KINDS:
            raise FormatError(f"link must be one of {sorted(LINK_KINDS)}", line_of("link"), "link")
        link = values[0]
    spec = make_spec(rho, link)

    count = np.zeros(0)
    if "count_coefs" in seen:
        count = _to_floats(tokens_of("count_coefs"), line_of("count_coefs"), "count_coefs")
    if count.size != spec.count_effect.n_params:
        where = line_of("count_coefs") if "count_coefs" in seen else line_of("rho") if "rho" in seen else 1
        raise FormatError(
            f"rho {rho!r} needs {spec.count_effect.n_params} count coefficient(s), got {count.size}",
            where,
            "count_coefs",
        )
    covariate = np.zeros(0)
    if "covariate_coefs" in seen:
        covariate = _to_floats(
            tokens_of("covariate_coefs"), line_of("covariate_coefs"), "covariate_coefs"
        )
        if covariate.size and not spec.link.uses_covariates:
            raise FormatError(
                "covariate coefficients need a link other than 'none'",
                line_of("covariate_coefs"),
                "covariate_coefs",
            )
    p = covariate.size

    lineno, values = seen["s_star"]
    if len(values) != 1:
        raise FormatError("s_star takes one value", lineno, "s_star")
    s_star = _to_float(values[0], lineno, "s_star")
    t_star = s_star
    if "t_star" in seen:
        values = tokens_of("t_star")
        if len(values) != 1:
            raise FormatError("t_star takes one value", line_of("t_star"), "t_star")
        t_star = _to_float(values[0], line_of("t_star"), "t_star")

    baseline = _scenario_baseline(tokens_of("baseline"), line_of("baseline"))
    censoring = _scenario_censoring(tokens_of("censoring"), line_of("censoring"))
    policy = (
        _scenario_policy(tokens_of("policy"), line_of("policy"))
        if "policy" in seen
        else PerfectRepairPolicy()
    )
    covariates = (
        _scenario_covariates(tokens_of("covariates"), line_of("covariates"), p)
        if "covariates" in seen
        else (ConstantCovariates(p) if p else NoCovariates())
    )

    max_events = 10_000
    if "max_events" in seen:
        values = tokens_of("max_events")
        if len(values) != 1:
            raise FormatError("max_events takes one value", line_of("max_events"), "max_events")
        max_events = _to_int(values[0], line_of("max_events"), "max_events")

    if "grid" in seen:
        values = tokens_of("grid")
        if len(values) != 3:
            raise FormatError("grid takes low, high, and a point count", line_of("grid"), "grid")
        lo = _to_float(values[0], line_of("grid"), "grid")
        hi = _to_float(values[1], line_of("grid"), "grid")
        count_pts = _to_int(values[2], line_of("grid"), "grid")
        if count_pts < 1:
            raise FormatError("grid needs at least one point", line_of("grid"), "grid")
        grid = np.linspace(lo, hi, count_pts)
    else:
        grid = np.linspace(t_star / 20.0, t_star, 20)
    if "check_ages" in seen:
        check_ages = _to_floats(tokens_of("check_ages"), line_of("check_ages"), "check_ages")
        if not check_ages.size:
            raise FormatError("check_ages needs at least one age", line_of("check_ages"), "check_ages")
    else:
        check_ages = np.linspace(t_star / 5.0, t_star, 5)

    try:
        params = ModelParams(spec, baseline, Coefs(count, covariate))
        return Scenario(
            name=name,
            description="user-supplied scenario config",
            params=params,
            censoring=censoring,
            covariates=covariates,
            age_policy=policy,
            s_star=s_star,
            t_star=t_star,
            grid=grid,
            check_ages=check_ages,
            max_events_per_unit=max_events,
        )
    except (TypeError, ValueError) as exc:
        raise FormatError(str(exc), line=1) from None


def read_scenario(path) -> Scenario:
    with open(path, "r") as handle:
        return loads_scenario(handle.read())
