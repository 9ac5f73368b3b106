import math
import zlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import multivariate_normal, norm

from p23alpha.design import DesignParams, Strategy
from p23alpha.engine import (components, components_aggressive, components_conservative,
                             components_neutral, solve_alpha_star, type_one_error)
from p23alpha.errors import NoConvergence, OutOfRange
from p23alpha.oracle import McConfig, draw_model, simulate_components, simulate_type_one

from _model import INFO_REF, LOG11, LOG115, LOG12, T_REF

MC = McConfig(replicates=1_000_000, seed=99)


def params(strategy="neutral", c=LOG11, t=T_REF, info=INFO_REF, w=0.6, alpha=0.025):
    return DesignParams(alpha, strategy, c, t, info, w)


def always_pool_type1(t, astar, w):
    """w P(max S > z) + (1 - w) P(min S > z) from the bivariate normal of (S1, S2)."""
    z = norm.isf(astar)
    rho = 1 - t / 2
    both_below = multivariate_normal([0, 0], [[1, rho], [rho, 1]]).cdf([z, z])
    both_above = 1 - 2 * norm.cdf(z) + both_below
    return w * (1 - both_below) + (1 - w) * both_above


# ------------------------------------------------------------------ components

def test_neutral_sample_call_total():
    comp = components_neutral(LOG11, T_REF, INFO_REF, 0.0199)
    assert comp.total(0.6) == pytest.approx(0.025, abs=1e-4)


@pytest.mark.parametrize("t,info,astar", [(0.3, 127.5, 0.02), (0.1, 30.0, 0.004), (0.8, 900, 0.2)])
def test_neutral_zero_cutoff(t, info, astar):
    comp = components_neutral(0.0, t, info, astar)
    assert comp.A == 0.0 and comp.B == 0.0
    assert comp.C == pytest.approx(astar, abs=1e-15)
    assert comp.D == pytest.approx(astar, abs=1e-15)


@pytest.mark.parametrize("strategy", ["conservative", "aggressive", "neutral"])
@pytest.mark.parametrize("w", [0.5, 0.8, 1.0])
def test_large_cutoff_is_always_pool(strategy, w):
    comp = components(strategy, 50.0, 0.3, 127.5, 0.02)
    assert comp.total(w) == pytest.approx(always_pool_type1(0.3, 0.02, w), abs=1e-7)
    assert comp.C == pytest.approx(0.0, abs=1e-12) and comp.D == pytest.approx(0.0, abs=1e-12)


def test_always_pool_with_half_w_restores_alpha():
    # max/min mixture of an exchangeable pair with equal weights has the marginal law
    assert always_pool_type1(0.3, 0.02, 0.5) == pytest.approx(0.02, abs=1e-10)


@pytest.mark.parametrize("strategy,astar", [("conservative", 0.024), ("aggressive", 0.018),
                                            ("neutral", 0.02)])
@pytest.mark.parametrize("w", [0.5, 0.8])
def test_total_matches_monte_carlo(strategy, astar, w):
    p = params(strategy, c=LOG115, w=w)
    mc = simulate_type_one(p, astar, MC)
    assert abs(mc.z_score(type_one_error(p, astar))) <= 3.5


COMPONENT_SETS = [(c, t, a) for c in (LOG11, LOG12) for t in (0.2, 0.4) for a in (0.01, 0.02)]


@pytest.mark.parametrize("strategy", list(Strategy))
@pytest.mark.parametrize("c,t,astar", [(LOG115, 0.3, 0.02)] + COMPONENT_SETS)
def test_components_match_monte_carlo(strategy, c, t, astar):
    analytic = components(strategy, c, t, INFO_REF, astar).as_dict()
    seed = zlib.crc32(f"{strategy.value}:{c:.6f}:{t}:{astar}".encode())
    mc = simulate_components(strategy, c, t, INFO_REF, astar, McConfig(1_000_000, seed=seed))
    for name, est in mc.items():
        assert abs(est.z_score(analytic[name])) <= 3.5, name


@settings(max_examples=15, deadline=None)
@given(c=st.floats(0.0, 1.0), t=st.floats(0.05, 0.95), info=st.floats(5.0, 1000.0),
       astar=st.floats(1e-4, 0.2), w=st.floats(0.5, 1.0),
       strategy=st.sampled_from(list(Strategy)))
def test_components_are_probabilities(c, t, info, astar, w, strategy):
    comp = components(strategy, c, t, info, astar)
    for v in comp.as_dict().values():
        assert -1e-9 <= v <= 1 + 1e-9
    assert -1e-9 <= comp.total(w) <= 1 + 1e-9


def test_bad_astar():
    with pytest.raises(OutOfRange):
        components_conservative(0.1, 0.3, 127.5, 0.0)
    with pytest.raises(OutOfRange):
        components_aggressive(-0.1, 0.3, 127.5, 0.02)


# ------------------------------------------------------------------ Type I error

def test_type_one_error_sample_call():
    assert type_one_error(params(), 0.0199) == pytest.approx(0.025, abs=1e-4)


@pytest.mark.parametrize("w", [0.5, 0.75, 1.0])
def test_type_one_error_zero_cutoff(w):
    assert type_one_error(params(c=0.0, w=w), 0.013) == pytest.approx(0.013, abs=1e-15)


@pytest.mark.parametrize("strategy", list(Strategy))
def test_type_one_error_increasing_in_astar(strategy):
    values = [type_one_error(params(strategy, w=0.8), a)
              for a in (0.005, 0.01, 0.015, 0.02, 0.025)]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_argmax_commutes_across_statistics():
    g = np.random.default_rng(5)
    y11, y12, y2s = draw_model(g, 100_000)
    t, info = 0.3, INFO_REF
    d = np.stack([y / math.sqrt(t * info) - y2s / math.sqrt((1 - t) * info) for y in (y11, y12)])
    s = np.stack([math.sqrt(t) * y + math.sqrt(1 - t) * y2s for y in (y11, y12)])
    y1 = np.stack([y11, y12])
    assert np.array_equal(np.argmax(y1, 0), np.argmax(d, 0))
    assert np.array_equal(np.argmax(y1, 0), np.argmax(s, 0))


# ------------------------------------------------------------------ solver

def test_solve_sample_call():
    r = solve_alpha_star(params())
    assert r.alpha_star == pytest.approx(0.0199, abs=5e-4)
    assert abs(r.achieved_type1 - 0.025) <= 1e-6
    assert not r.clamped_w and not r.capped


@pytest.mark.parametrize("c,w,expected", [(LOG11, 0.5, 0.0204), (LOG11, 1.0, 0.0183)])
def test_solve_neutral_anchors(c, w, expected):
    assert solve_alpha_star(params(c=c, w=w)).alpha_star == pytest.approx(expected, abs=5e-4)


@pytest.mark.parametrize("t,info,w", [(0.3, 127.5, 0.9), (0.6, 40.0, 0.5)])
def test_solve_zero_cutoff(t, info, w):
    r = solve_alpha_star(params(c=0.0, t=t, info=info, w=w))
    assert r.alpha_star == 0.025


def test_solve_clamped_w_matches_half():
    low = solve_alpha_star(params(w=0.1))
    half = solve_alpha_star(params(w=0.5))
    assert low.clamped_w
    assert low.alpha_star == half.alpha_star


def test_conservative_above_neutral_at_w1():
    neutral = solve_alpha_star(params("neutral", w=1.0)).alpha_star
    conservative = solve_alpha_star(params("conservative", w=1.0)).alpha_star
    aggressive = solve_alpha_star(params("aggressive", w=1.0)).alpha_star
    assert conservative > neutral > aggressive
    assert neutral == pytest.approx(0.0183, abs=5e-4)


def test_conservative_without_inflation_is_capped():
    p = params("conservative", c=LOG11, w=0.5)
    assert type_one_error(p, p.alpha) < p.alpha
    r = solve_alpha_star(p)
    assert r.capped and r.alpha_star == p.alpha
    assert r.achieved_type1 < p.alpha


@pytest.mark.parametrize("strategy,c,t,w", [("neutral", LOG12, 0.2, 0.9),
                                            ("aggressive", LOG11, 0.4, 0.7),
                                            ("conservative", LOG12, 0.3, 1.0),
                                            ("aggressive", 1.0, 0.3, 1.0)])
def test_solver_self_consistency(strategy, c, t, w):
    p = params(strategy, c=c, t=t, w=w)
    r = solve_alpha_star(p)
    assert 0 < r.alpha_star <= p.alpha
    assert abs(type_one_error(p, r.alpha_star) - p.alpha) <= 1e-6
    assert r.iterations <= 200


def test_solver_reports_non_convergence():
    with pytest.raises(NoConvergence):
        solve_alpha_star(params("aggressive", w=1.0), tol=1e-15, max_iter=1)
