"""Shared fixtures: the canonical two-event unit and a random-unit factory."""

from __future__ import annotations

import numpy as np
import pytest

from effage.model import (
    Cohort,
    CovariatePath,
    EffectiveAgeSpec,
    UnitPath,
)


@pytest.fixture
def canonical_unit() -> UnitPath:
    """Perfect-repair unit with events at 0.5 and 1.2, censored at 2."""
    return UnitPath(
        event_times=[0.5, 1.2],
        tau=2.0,
        s_star=2.0,
        age_spec=EffectiveAgeSpec.perfect(),
    )


def random_unit(
    rng: np.random.Generator,
    s_star: float = 2.0,
    p: int = 0,
    policy: str | None = None,
    max_events: int = 4,
) -> UnitPath:
    """Draw a small but structurally varied unit history."""
    tau = float(rng.uniform(0.5 * s_star, 1.4 * s_star))
    obs_end = min(tau, s_star)
    m = int(rng.integers(0, max_events + 1))
    events = np.sort(rng.uniform(0.0, obs_end, size=m))
    # keep events strictly inside (0, obs_end) and strictly increasing
    events = events[(events > 1e-6) & (events < obs_end - 1e-6)]
    if events.size:
        events = events[np.concatenate([[True], np.diff(events) > 1e-9])]

    policy = policy or rng.choice(["perfect", "minimal", "piecewise"])
    if policy == "perfect":
        spec = EffectiveAgeSpec.perfect()
    elif policy == "minimal":
        spec = EffectiveAgeSpec.minimal()
    else:
        bounds = np.concatenate([[0.0], events, [obs_end]])
        segs = []
        for lo in bounds[:-1]:
            start = float(rng.uniform(0.0, lo)) if lo > 0 else 0.0
            slope = float(rng.uniform(0.4, 1.0))
            segs.append((start, slope))
        spec = EffectiveAgeSpec.piecewise(segs)

    if p == 0:
        path = CovariatePath.empty()
    elif rng.random() < 0.5:
        path = CovariatePath.constant(rng.uniform(-1.0, 1.0, size=p))
    else:
        times = np.concatenate([[0.0], np.sort(rng.uniform(0.0, s_star, size=2))])
        path = CovariatePath(times, rng.uniform(-1.0, 1.0, size=(3, p)))
    return UnitPath(events, tau, s_star, spec, path)


def random_cohort(rng: np.random.Generator, n: int, p: int = 0, **kwargs) -> Cohort:
    return Cohort(tuple(random_unit(rng, p=p, **kwargs) for _ in range(n)))
