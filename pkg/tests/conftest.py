"""Shared fixtures and scenario builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from freqdispatch import (
    CostCoefficients,
    Generator,
    Scenario,
    analytic_dispatch,
    total_load,
)

# The two-generator reference scenario used throughout: costs
# 0.5*p^2 + p and p^2 + 2*p, total demand 10, K=1, beta=1.5, tau=1.
# Its optimum is lambda*=8, p=(7, 3), cost 46.5, and p_init sits there.


def make_scenario(a, b, loads, *, c=None, p_init=None, gain_K=1.0, beta=1.0,
                  tau=1.0) -> Scenario:
    a = list(a)
    b = list(b)
    c = list(c) if c is not None else [0.0] * len(a)
    p_init = list(p_init) if p_init is not None else [0.0] * len(a)
    gens = tuple(
        Generator(f"G{i + 1}", CostCoefficients(a[i], b[i], c[i]), p_init[i])
        for i in range(len(a))
    )
    return Scenario(gens, tuple(loads), gain_K=gain_K, beta=beta, tau=tau)


def reference_scenario() -> Scenario:
    return make_scenario([0.5, 1.0], [1.0, 2.0], [6.0, 4.0],
                         p_init=[7.0, 3.0], beta=1.5)


@pytest.fixture
def scenario_r() -> Scenario:
    return reference_scenario()


SUITE_SEED = 20260810


def random_scenarios(seed=SUITE_SEED, count=20, n_choices=(1, 2, 3)) -> list[Scenario]:
    """Deterministic randomized scenario suite.

    Coefficients a in [0.1, 5], b in [0, 20], total demand in [1, 50],
    split over as many loads as generators. Draws whose optimum falls
    outside 1.5x the demand are redrawn so the grid oracle's search box
    always contains the optimum with margin.
    """
    rng = np.random.default_rng(seed)
    out: list[Scenario] = []
    while len(out) < count:
        n = int(rng.choice(n_choices))
        a = rng.uniform(0.1, 5.0, size=n)
        b = rng.uniform(0.0, 20.0, size=n)
        d_total = rng.uniform(1.0, 50.0)
        frac = rng.random(n)
        loads = tuple(float(d_total * f / frac.sum()) for f in frac)
        s = make_scenario(a, b, loads)
        sol = analytic_dispatch(s)
        if max(abs(p) for p in sol.p) > 1.5 * abs(total_load(s)):
            continue
        out.append(s)
    return out


def economic_start(s: Scenario) -> Scenario:
    """Copy of ``s`` whose p_init sits exactly on its analytic dispatch."""
    sol = analytic_dispatch(s)
    gens = tuple(Generator(g.id, g.cost, p) for g, p in zip(s.generators, sol.p))
    return Scenario(gens, s.loads, s.gain_K, s.beta, s.tau)
