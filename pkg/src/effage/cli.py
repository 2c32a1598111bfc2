"""Command-line interface.

Four subcommands cover the workflow end to end:

* ``effage simulate`` draws a cohort from a scenario (preset name or
  config file) and writes a cohort file.
* ``effage fit`` estimates coefficients, baseline cumulative hazard, and
  survivor function from a cohort file, prints a summary table, and
  writes a fit file.
* ``effage check`` (alias ``mc``) runs one of the Monte Carlo study
  suites and writes its JSON report.
* ``effage plot`` renders a fit file as SVG step plots.

Every command is a pure function of its flags and input files: rerunning
with the same inputs reproduces the same bytes.  Exit codes: 0 success,
2 bad flags or malformed input, 3 simulation explosion guard, 4 fit did
not converge (the last iterate is still written, flagged), 5 the
requested model has no estimable coefficients (or the information matrix
is singular), 6 a study assertion failed.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from effage import mc
from effage.estimate import EmptyRiskSetError, RiskSet
from effage.formats import (
    LINK_KINDS,
    RHO_KINDS,
    FitDocument,
    FormatError,
    make_spec,
    read_cohort,
    read_fit,
    read_scenario,
    write_cohort,
    write_fit,
)
from effage.inference import (
    SingularInformationError,
    coef_confidence,
    variance_pieces,
    z_quantile,
)
from effage.model import Cohort, EffageError
from effage.scenarios import get_scenario, scenario_names
from effage.simulate import ExplosionError, draw_cohort

__all__ = ["main", "emit_plots"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_EXPLOSION = 3
EXIT_NO_CONVERGENCE = 4
EXIT_DEGENERATE = 5
EXIT_CHECK_FAILED = 6

_SUITES = ("identities", "consistency", "coverage", "normality", "martingale", "variance")


def _fail(command: str, message: str) -> int:
    print(f"effage {command}: error: {message}", file=sys.stderr)
    return EXIT_USAGE


def _warn(message: str) -> None:
    print(f"warning: {message}", file=sys.stderr)


def _resolve_scenario(token: str):
    """A scenario flag is a preset name or a path to a scenario config."""
    if os.path.exists(token):
        return read_scenario(token)
    return get_scenario(token)


def _g(x) -> str:
    return format(float(x), ".6g")


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    if args.n < 1:
        return _fail("simulate", "--n must be at least 1")
    try:
        scenario = _resolve_scenario(args.scenario)
    except (FormatError, ValueError) as exc:
        return _fail("simulate", str(exc))
    try:
        cohort = draw_cohort(args.n, scenario.sim_config(args.seed))
    except ExplosionError as exc:
        print(f"effage simulate: {exc}", file=sys.stderr)
        return EXIT_EXPLOSION
    cohort = Cohort(cohort.units, t_star=scenario.t_star)
    write_cohort(args.out, cohort, scenario.spec)
    print(
        f"wrote {args.out}: {cohort.n} unit(s), {cohort.n_events()} event(s), "
        f"scenario {scenario.name}, seed {args.seed}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def _coef_names(q: int, p: int) -> tuple[str, ...]:
    return tuple(f"count{j + 1}" for j in range(q)) + tuple(f"x{j + 1}" for j in range(p))


def _empty_fit_document(rho: str, link: str, cohort: Cohort, riskset: RiskSet, level: float) -> FitDocument:
    """Fit of a cohort with no usable events: baseline identically zero."""
    spec = riskset.spec
    coefs = spec.neutral_coefs(riskset.n_covariates)
    d = coefs.dim
    nan = np.full(d, np.nan)
    empty = np.zeros(0)
    return FitDocument(
        rho=rho,
        link=link,
        n_units=cohort.n,
        n_events=0,
        s_star=cohort.s_star,
        t_star=riskset.t_star if riskset.t_star > 0 else cohort.s_star,
        level=level,
        converged=True,
        iterations=0,
        score_norm=0.0,
        condition=math.inf if d else 1.0,
        coef_names=_coef_names(coefs.count.size, coefs.covariate.size),
        coef=coefs.vector,
        coef_se=nan,
        coef_lower=nan,
        coef_upper=nan,
        information=np.zeros((d, d)),
        grid=empty,
        cumhaz=empty,
        survivor=empty,
        cdiag=empty,
        band_lower=empty,
        band_upper=empty,
        sensitivity=np.zeros((0, d)),
    )


def _print_fit_table(doc: FitDocument, decile_rows) -> None:
    print(f"model: rho {doc.rho}, link {doc.link}")
    print(
        f"cohort: {doc.n_units} unit(s), {doc.n_events} event(s) at or below age cutoff "
        f"{_g(doc.t_star)}, window {_g(doc.s_star)}"
    )
    state = "converged" if doc.converged else "DID NOT CONVERGE"
    print(f"fit: {state} after {doc.iterations} iteration(s), score norm {_g(doc.score_norm)}")
    pct = f"{100.0 * doc.level:g}"
    if doc.n_coefs:
        print()
        header = f"{'coefficient':<12} {'estimate':>12} {'std.err':>12} {'lower' + pct:>12} {'upper' + pct:>12}"
        print(header)
        for j, name in enumerate(doc.coef_names):
            print(
                f"{name:<12} {_g(doc.coef[j]):>12} {_g(doc.coef_se[j]):>12} "
                f"{_g(doc.coef_lower[j]):>12} {_g(doc.coef_upper[j]):>12}"
            )
    print()
    print(f"{'age':>10} {'cumhaz':>12} {'survivor':>12} {'band' + pct + '.lo':>12} {'band' + pct + '.hi':>12}")
    for age, cumhaz, survivor, lo, hi in decile_rows:
        print(f"{_g(age):>10} {_g(cumhaz):>12} {_g(survivor):>12} {_g(lo):>12} {_g(hi):>12}")


def cmd_fit(args) -> int:
    try:
        document = read_cohort(args.in_path)
    except OSError as exc:
        return _fail("fit", str(exc))
    except FormatError as exc:
        return _fail("fit", f"{args.in_path}: {exc}")
    rho = args.rho if args.rho is not None else document.rho
    link = args.link if args.link is not None else document.link
    spec = make_spec(rho, link)
    try:
        z = z_quantile(args.level)
    except ValueError as exc:
        return _fail("fit", str(exc))
    cohort = document.cohort
    try:
        riskset = RiskSet(cohort, spec, t_star=args.t_star)
    except (ValueError, EffageError) as exc:
        return _fail("fit", str(exc))

    if riskset.grid.size == 0:
        _warn("no events at or below the age cutoff; baseline estimate is identically zero")
        doc = _empty_fit_document(rho, link, cohort, riskset, args.level)
        write_fit(args.out, doc)
        cutoff = riskset.t_star if riskset.t_star > 0 else cohort.s_star
        deciles = cutoff * np.arange(1, 11) / 10.0
        _print_fit_table(doc, [(a, 0.0, 1.0, 0.0, 0.0) for a in deciles])
        print(f"\nwrote {args.out}")
        return EXIT_OK

    if args.max_iter < 0:
        return _fail("fit", "--max-iter must be nonnegative")
    cfit = riskset.fit(max_iter=args.max_iter)
    pieces = variance_pieces(riskset, cfit.coefs)
    baseline = riskset.baseline(cfit.coefs)
    survivor = riskset.survivor(cfit.coefs)
    d = cfit.coefs.dim
    degenerate = spec.is_degenerate(riskset.n_covariates)

    singular = False
    try:
        se, lower, upper = coef_confidence(cfit.coefs, pieces.information, riskset.n, args.level)
        inverse = np.zeros((0, 0)) if d == 0 else np.linalg.inv(pieces.information)
    except (SingularInformationError, np.linalg.LinAlgError):
        singular = True
        se = lower = upper = np.full(d, np.nan)
        inverse = np.full((d, d), np.nan)

    def band_pieces(ages):
        """Baseline estimate with its variance and band on given ages."""
        ages = np.atleast_1d(np.asarray(ages, dtype=float))
        center = baseline(ages) if ages.size else np.zeros(0)
        sens = pieces.at(ages, pieces.sensitivity)
        var0 = pieces.at(ages, pieces.var0)
        cdiag = var0 + np.einsum("ij,jk,ik->i", sens, inverse, sens) if d else var0
        if math.isinf(z):
            half = np.full(ages.shape, np.inf)
        else:
            half = np.where(
                np.isfinite(cdiag),
                z * np.sqrt(np.maximum(cdiag, 0.0) / riskset.n),
                np.nan,
            )
        return center, sens, cdiag, np.maximum(center - half, 0.0), center + half

    grid = riskset.grid
    center, sens, cdiag, band_lo, band_hi = band_pieces(grid)
    doc = FitDocument(
        rho=rho,
        link=link,
        n_units=cohort.n,
        n_events=int(riskset.grid_counts.sum()),
        s_star=cohort.s_star,
        t_star=riskset.t_star,
        level=args.level,
        converged=cfit.converged,
        iterations=cfit.iterations,
        score_norm=cfit.final_score_norm,
        condition=float(np.linalg.cond(pieces.information)) if d else 1.0,
        coef_names=_coef_names(cfit.coefs.count.size, cfit.coefs.covariate.size),
        coef=cfit.coefs.vector,
        coef_se=se,
        coef_lower=lower,
        coef_upper=upper,
        information=pieces.information,
        grid=grid,
        cumhaz=center,
        survivor=survivor(grid),
        cdiag=cdiag,
        band_lower=band_lo,
        band_upper=band_hi,
        sensitivity=sens,
    )
    write_fit(args.out, doc)

    deciles = riskset.t_star * np.arange(1, 11) / 10.0
    dec_center, _, _, dec_lo, dec_hi = band_pieces(deciles)
    rows = list(zip(deciles, dec_center, survivor(deciles), dec_lo, dec_hi))
    _print_fit_table(doc, rows)
    print(f"\nwrote {args.out}")

    if not cfit.converged:
        _warn("fit did not converge; last iterate written with converged 0")
        return EXIT_NO_CONVERGENCE
    if degenerate:
        _warn("model has no coefficients; baseline-only fit")
        return EXIT_DEGENERATE
    if singular:
        _warn("information matrix is singular; intervals are not available")
        return EXIT_DEGENERATE
    return EXIT_OK


# ---------------------------------------------------------------------------
# check / mc
# ---------------------------------------------------------------------------


def cmd_check(args) -> int:
    if args.reps is not None and args.reps < 1:
        return _fail("check", "--reps must be at least 1")
    scenario = None
    if args.scenario is not None:
        try:
            scenario = _resolve_scenario(args.scenario)
        except (FormatError, ValueError) as exc:
            return _fail("check", str(exc))

    kwargs = {"seed": args.seed}
    if args.suite == "identities":
        if scenario is not None:
            return _fail("check", "the identities suite draws its own fixtures; --scenario does not apply")
        runner = mc.identity_suite
        if args.reps is not None:
            kwargs["n_fixtures"] = args.reps
    else:
        runner = {
            "consistency": mc.consistency_study,
            "coverage": mc.coverage_study,
            "normality": mc.normality_study,
            "martingale": mc.martingale_study,
            "variance": mc.variance_study,
        }[args.suite]
        if scenario is not None:
            kwargs["scenario"] = scenario
        if args.reps is not None:
            if args.suite == "martingale":
                kwargs["n"] = args.reps
            else:
                kwargs["reps"] = args.reps

    try:
        report = runner(**kwargs)
    except (ValueError, EffageError) as exc:
        return _fail("check", str(exc))

    out = args.out if args.out is not None else f"mc-{args.suite}.json"
    with open(out, "w", newline="\n") as handle:
        handle.write(report.to_json())

    for check in report.checks:
        state = "PASS" if check.passed else "FAIL"
        line = f"{state} {check.name}: observed {_g(check.observed)}, bound {_g(check.bound)}"
        if check.detail and not check.passed:
            line += f" ({check.detail})"
        print(line)
    verdict = "PASS" if report.passed else "FAIL"
    print(f"suite {report.suite}: {verdict} ({len(report.checks)} check(s)), report {out}")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# plot
# ---------------------------------------------------------------------------


def _step_vertices(grid, values, start_value: float, x_end: float):
    """Vertices of a right-continuous step path starting at ``start_value``."""
    xs = [0.0]
    ys = [start_value]
    prev = start_value
    for x, v in zip(grid, values):
        xs += [float(x), float(x)]
        ys += [prev, float(v)]
        prev = float(v)
    xs.append(float(x_end))
    ys.append(prev)
    return np.asarray(xs), np.asarray(ys)


def emit_plots(doc: FitDocument, out_dir) -> tuple[str, str]:
    """Render a fit as two SVG step plots; returns the written paths.

    The confidence band is rebuilt from the pointwise variance table
    (``cdiag``), the cohort size, and the level stored in the fit file,
    so the drawn band width is exactly the one the file's variance
    diagnostics imply.  An empty fit yields axes-only plots.
    """
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "effage"
    os.makedirs(out_dir, exist_ok=True)
    x_end = doc.t_star if doc.t_star > 0 else 1.0
    z = z_quantile(doc.level)
    half = z * np.sqrt(np.maximum(doc.cdiag, 0.0) / max(doc.n_units, 1))
    band_lo = np.maximum(doc.cumhaz - half, 0.0)
    band_hi = doc.cumhaz + half

    def render(path, ylabel, draw):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        draw(ax)
        ax.set_xlim(0.0, x_end)
        ax.set_xlabel("effective age")
        ax.set_ylabel(ylabel)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)

    cumhaz_path = os.path.join(out_dir, "cumhaz.svg")
    survivor_path = os.path.join(out_dir, "survivor.svg")

    def draw_cumhaz(ax):
        if doc.n_grid == 0:
            ax.set_ylim(0.0, 1.0)
            return
        if np.all(np.isfinite(band_lo)) and np.all(np.isfinite(band_hi)):
            xs, lo = _step_vertices(doc.grid, band_lo, 0.0, x_end)
            _, hi = _step_vertices(doc.grid, band_hi, 0.0, x_end)
            ax.fill_between(xs, lo, hi, color="0.85", linewidth=0.0)
        xs, ys = _step_vertices(doc.grid, doc.cumhaz, 0.0, x_end)
        ax.plot(xs, ys, color="C0")

    def draw_survivor(ax):
        ax.set_ylim(0.0, 1.05)
        if doc.n_grid == 0:
            return
        xs, ys = _step_vertices(doc.grid, doc.survivor, 1.0, x_end)
        ax.plot(xs, ys, color="C1")

    render(cumhaz_path, "baseline cumulative hazard", draw_cumhaz)
    render(survivor_path, "baseline survivor", draw_survivor)
    return cumhaz_path, survivor_path


def cmd_plot(args) -> int:
    try:
        doc = read_fit(args.in_path)
    except OSError as exc:
        return _fail("plot", str(exc))
    except FormatError as exc:
        return _fail("plot", f"{args.in_path}: {exc}")
    paths = emit_plots(doc, args.out_dir)
    print("wrote " + " ".join(paths))
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="effage",
        description="simulate, fit, check, and plot recurrent-event models with effective ages",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="draw a cohort and write a cohort file")
    sim.add_argument("--n", type=int, required=True, help="number of units")
    sim.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    sim.add_argument(
        "--scenario",
        required=True,
        help=f"preset ({', '.join(scenario_names())}) or scenario config path",
    )
    sim.add_argument("--out", required=True, help="cohort file to write")
    sim.set_defaults(handler=cmd_simulate)

    fit = sub.add_parser("fit", help="estimate a model from a cohort file")
    fit.add_argument("--in", dest="in_path", required=True, help="cohort file to read")
    fit.add_argument(
        "--rho",
        choices=sorted(RHO_KINDS),
        default=None,
        help="count-effect family (default: the cohort file's)",
    )
    fit.add_argument(
        "--link",
        choices=sorted(LINK_KINDS),
        default=None,
        help="covariate link (default: the cohort file's)",
    )
    fit.add_argument(
        "--t-star",
        dest="t_star",
        type=float,
        default=None,
        help="age cutoff (default: the cohort file's, else the largest event age)",
    )
    fit.add_argument("--level", type=float, default=0.95, help="confidence level (default 0.95)")
    fit.add_argument(
        "--max-iter",
        dest="max_iter",
        type=int,
        default=100,
        help="cap on Newton iterations (default 100)",
    )
    fit.add_argument("--out", required=True, help="fit file to write")
    fit.set_defaults(handler=cmd_fit)

    for name in ("check", "mc"):
        check = sub.add_parser(name, help="run a Monte Carlo study suite")
        check.add_argument("--suite", required=True, choices=_SUITES)
        check.add_argument(
            "--reps",
            type=int,
            default=None,
            help="fixtures/replications (martingale: cohort size); default is the suite's",
        )
        check.add_argument("--seed", type=int, default=mc.DEFAULT_SEED)
        check.add_argument("--scenario", default=None, help="preset name or scenario config path")
        check.add_argument("--out", default=None, help="report path (default mc-<suite>.json)")
        check.set_defaults(handler=cmd_check)

    plot = sub.add_parser("plot", help="render a fit file as SVG step plots")
    plot.add_argument("--in", dest="in_path", required=True, help="fit file to read")
    plot.add_argument("--out-dir", dest="out_dir", required=True, help="directory for the SVGs")
    plot.set_defaults(handler=cmd_plot)
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse already printed the usage message
        if isinstance(exc.code, int) or exc.code is None:
            return exc.code or 0
        return EXIT_USAGE
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
