import math

import numpy as np
import pytest
from scipy.stats import norm

from p23alpha.design import DesignParams
from p23alpha.errors import OutOfRange
from p23alpha.oracle import (EffectSpec, McConfig, McEstimate, draw_model, select_dose,
                             simulate_power, simulate_type_one)

from _model import INFO_REF, LOG11, LOG115

N = 1_000_000


def params(strategy="neutral", c=LOG11, w=0.6, t=0.3):
    return DesignParams(0.025, strategy, c, t, INFO_REF, w)


@pytest.fixture(scope="module")
def null_draws():
    return draw_model(np.random.default_rng(777), N)


# ------------------------------------------------------------------ model draws

def test_stage1_correlation(null_draws):
    y11, y12, _ = null_draws
    assert abs(np.corrcoef(y11, y12)[0, 1] - 0.5) <= 0.002


def test_null_moments(null_draws):
    y11, y12, y2s = null_draws
    assert abs(y2s.mean()) <= 0.004
    assert abs(np.cov(y11, y2s)[0, 1]) <= 0.004
    assert abs(np.cov(y12, y2s)[0, 1]) <= 0.004
    for y in null_draws:
        assert abs(y.var() - 1.0) <= 0.006


def test_shifted_means():
    y11, y12, y2s = draw_model(np.random.default_rng(3), 200_000, EffectSpec(0.4, -1.0, 2.0))
    se = 3.5 / math.sqrt(200_000)
    assert abs(y11.mean() - 0.4) <= 1.5 * se
    assert abs(y12.mean() + 1.0) <= 1.5 * se
    assert abs(y2s.mean() - 2.0) <= 1.5 * se


def test_effects_must_be_finite():
    with pytest.raises(OutOfRange):
        EffectSpec(math.inf, 0.0, 0.0)


# ------------------------------------------------------------------ selection

def test_select_dose_examples():
    assert select_dose(1.2, -0.3, True) == (0, 1.2)
    assert select_dose(1.2, -0.3, False) == (1, -0.3)
    assert select_dose(-1.0, 0.5, True) == (1, 0.5)


def test_half_weight_mixture_is_standard_normal(null_draws):
    y11, y12, _ = null_draws
    flag = np.random.default_rng(11).random(N) < 0.5
    _, y1s = select_dose(y11, y12, flag)
    assert abs(y1s.mean()) <= 0.004
    assert abs(y1s.var() - 1.0) <= 0.006


@pytest.mark.parametrize("w", [0.5, 0.8, 1.0])
def test_winner_frequency(null_draws, w):
    y11, y12, _ = null_draws
    flag = np.random.default_rng(12).random(N) < w
    _, y1s = select_dose(y11, y12, flag)
    frac = np.mean(y1s == np.maximum(y11, y12))
    assert abs(frac - w) <= 3.5 * math.sqrt(w * (1 - w) / N) + 1e-12


def test_selection_flag_independent_of_draws(null_draws):
    flag = np.random.default_rng(13).random(N) < 0.7
    for y in null_draws:
        a, b = y[flag], y[~flag]
        se_mean = math.sqrt(a.var() / a.size + b.var() / b.size)
        assert abs(a.mean() - b.mean()) <= 4 * se_mean
        # variance of a sample variance of normals is about 2 sigma^4 / n
        se_var = math.sqrt(2 / a.size + 2 / b.size)
        assert abs(a.var() - b.var()) <= 4 * se_var


# ------------------------------------------------------------------ configuration

def test_config_validation():
    with pytest.raises(OutOfRange):
        McConfig(replicates=9_999)
    with pytest.raises(OutOfRange):
        McConfig(seed=-1)
    with pytest.raises(OutOfRange):
        McConfig(seed=2 ** 64)
    with pytest.raises(OutOfRange):
        McConfig(chunk_size=0)


def test_chunks_cover_replicates():
    cfg = McConfig(replicates=300_001, chunk_size=100_000)
    assert [n for _, n in cfg.chunks()] == [100_000] * 3 + [1]


def test_estimate_standard_error():
    est = McEstimate.from_count(25_000, N, 1)
    assert est.estimate == 0.025
    assert est.std_error == pytest.approx(math.sqrt(0.025 * 0.975 / N), abs=1e-12)
    assert McEstimate.from_count(0, N, 1).z_score(0.0) == 0.0


# ------------------------------------------------------------------ simulation

def test_type_one_sample_call():
    est = simulate_type_one(params(), 0.0199, McConfig(N, seed=1))
    assert abs(est.z_score(0.025)) <= 3.5
    assert 0 <= est.estimate <= 1


@pytest.mark.parametrize("w", [0.5, 0.9])
def test_type_one_zero_cutoff(w):
    est = simulate_type_one(params(c=0.0, w=w), 0.02, McConfig(N, seed=2))
    assert abs(est.z_score(0.02)) <= 3.5


def test_conservative_below_aggressive():
    cfg = McConfig(N, seed=3)
    cons = simulate_type_one(params("conservative", LOG115, 0.8), 0.02, cfg)
    aggr = simulate_type_one(params("aggressive", LOG115, 0.8), 0.02, cfg)
    assert cons.estimate < aggr.estimate


def test_parallel_chunks_are_bit_identical():
    p = params("aggressive", LOG11, 0.8)
    serial = simulate_type_one(p, 0.02, McConfig(200_000, seed=4, chunk_size=30_000))
    threaded = simulate_type_one(p, 0.02, McConfig(200_000, seed=4, chunk_size=30_000, workers=4))
    assert serial == threaded


def test_seed_changes_estimate():
    p = params()
    a = simulate_type_one(p, 0.02, McConfig(100_000, seed=5))
    b = simulate_type_one(p, 0.02, McConfig(100_000, seed=6))
    assert a.estimate != b.estimate


def test_power_null_is_type_one():
    cfg = McConfig(200_000, seed=7)
    assert simulate_power(params(), 0.0199, EffectSpec(), cfg) == \
        simulate_type_one(params(), 0.0199, cfg)


def test_power_overwhelming_effect():
    est = simulate_power(params(), 0.02, EffectSpec(5, 5, 5), McConfig(100_000, seed=8))
    assert est.estimate > 0.99


def test_power_stage_two_only():
    shift = norm.isf(0.025) + norm.isf(0.10)
    est = simulate_power(params(c=0.0), 0.025, EffectSpec(0, 0, shift), McConfig(N, seed=9))
    assert abs(est.z_score(0.90)) <= 3.5


def test_astar_range():
    with pytest.raises(OutOfRange):
        simulate_type_one(params(), 0.5, McConfig(10_000))
    with pytest.raises(OutOfRange):
        simulate_power(params(), 0.0, EffectSpec(), McConfig(10_000))
