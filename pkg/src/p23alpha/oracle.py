"""Monte Carlo simulation of the two-stage normal model.

This is an independent check on the analytic Type I error: it draws
``(Y11, Y12, Y2s)`` directly, picks the winner with probability ``w``,
applies the pooling rule and counts rejections. No rectangle expansion is
involved.

Replicates are split into chunks; chunk ``k`` draws from its own stream
``SeedSequence(seed, spawn_key=(k,))``, so the estimate depends only on
``(seed, replicates, chunk_size)`` and not on how chunks are scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .design import DesignParams, Strategy
from .errors import OutOfRange

__all__ = [
    "McConfig",
    "McEstimate",
    "EffectSpec",
    "draw_model",
    "select_dose",
    "simulate_type_one",
    "simulate_power",
    "simulate_components",
]

MIN_REPLICATES = 10_000
_RHO = 0.5


@dataclass(frozen=True)
class McConfig:
    replicates: int = 1_000_000
    seed: int = 20240601
    chunk_size: int = 1 << 17
    workers: int = 1

    def __post_init__(self):
        if self.replicates < MIN_REPLICATES:
            raise OutOfRange(f"replicates must be >= {MIN_REPLICATES}, got {self.replicates}")
        if self.chunk_size < 1:
            raise OutOfRange("chunk_size must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise OutOfRange("seed must be a 64-bit unsigned value")
        if self.workers < 1:
            raise OutOfRange("workers must be >= 1")

    def chunks(self):
        n_full, rest = divmod(self.replicates, self.chunk_size)
        sizes = [self.chunk_size] * n_full + ([rest] if rest else [])
        return list(enumerate(sizes))

    def rng(self, chunk: int) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(self.seed, spawn_key=(chunk,))))


@dataclass(frozen=True)
class McEstimate:
    estimate: float
    std_error: float
    replicates: int
    seed: int

    @classmethod
    def from_count(cls, hits: int, n: int, seed: int) -> "McEstimate":
        p = hits / n
        return cls(p, math.sqrt(p * (1.0 - p) / n), n, seed)

    def z_score(self, value: float) -> float:
        """Discrepancy ``(estimate - value) / std_error``; the SE floor avoids 0/0."""
        se = self.std_error if self.std_error > 0 else 1.0 / self.replicates
        return (self.estimate - value) / se


@dataclass(frozen=True)
class EffectSpec:
    """Mean shifts of ``Y11, Y12, Y2s`` in standard-deviation units."""

    mu11: float = 0.0
    mu12: float = 0.0
    mu2: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.mu11, self.mu12, self.mu2)):
            raise OutOfRange("effect shifts must be finite")


NULL = EffectSpec()


def draw_model(rng: np.random.Generator, n: int, effects: EffectSpec = NULL):
    """Draw ``n`` triples ``(y11, y12, y2s)``; the Stage 1 pair has correlation 0.5."""
    z = rng.standard_normal((3, n))
    y11 = z[0] + effects.mu11
    y12 = _RHO * z[0] + math.sqrt(1.0 - _RHO ** 2) * z[1] + effects.mu12
    y2s = z[2] + effects.mu2
    return y11, y12, y2s


def select_dose(y11, y12, winner_flag):
    """Pick the larger Stage 1 statistic when ``winner_flag`` is set, else the smaller.

    Returns ``(index, y1s)`` with index 0 for dose 1 and 1 for dose 2.
    """
    y11 = np.asarray(y11)
    y12 = np.asarray(y12)
    flag = np.asarray(winner_flag, dtype=bool)
    first_is_max = y11 >= y12
    pick_first = np.where(flag, first_is_max, ~first_is_max)
    idx = np.where(pick_first, 0, 1)
    y1s = np.where(pick_first, y11, y12)
    if idx.ndim == 0:
        return int(idx), float(y1s)
    return idx, y1s


def _pool_mask(strategy: Strategy, diff, c: float):
    if strategy is Strategy.CONSERVATIVE:
        return diff < c
    if strategy is Strategy.AGGRESSIVE:
        return diff > -c
    return np.abs(diff) < c


def _reject(params: DesignParams, z_crit: float, y1s, y2s):
    t, info = params.t, params.info
    diff = y1s / math.sqrt(t * info) - y2s / math.sqrt((1.0 - t) * info)
    pooled = math.sqrt(t) * y1s + math.sqrt(1.0 - t) * y2s
    pool = _pool_mask(params.strategy, diff, params.c)
    return np.where(pool, pooled > z_crit, y2s > z_crit)


def _run(cfg: McConfig, count_chunk) -> np.ndarray:
    jobs = cfg.chunks()
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(lambda job: count_chunk(*job), jobs))
    else:
        parts = [count_chunk(*job) for job in jobs]
    return np.sum(parts, axis=0)


def _check_astar(astar: float) -> float:
    if not 0.0 < astar < 0.5:
        raise OutOfRange(f"astar must lie in (0, 0.5), got {astar}")
    return float(norm.isf(astar))


def simulate_power(params: DesignParams, astar: float, effects: EffectSpec,
                   cfg: McConfig = McConfig()) -> McEstimate:
    """Rejection frequency of the adaptive procedure under mean shifts ``effects``.

    With the null ``EffectSpec()`` this is the Type I error.
    """
    z_crit = _check_astar(astar)

    def count_chunk(chunk, n):
        rng = cfg.rng(chunk)
        y11, y12, y2s = draw_model(rng, n, effects)
        winner = rng.random(n) < params.w
        _, y1s = select_dose(y11, y12, winner)
        return np.count_nonzero(_reject(params, z_crit, y1s, y2s))

    hits = int(_run(cfg, count_chunk))
    return McEstimate.from_count(hits, cfg.replicates, cfg.seed)


def simulate_type_one(params: DesignParams, astar: float,
                      cfg: McConfig = McConfig()) -> McEstimate:
    """Null rejection frequency at nominal level ``astar``."""
    return simulate_power(params, astar, NULL, cfg)


def simulate_components(strategy, c: float, t: float, info: float, astar: float,
                        cfg: McConfig = McConfig()) -> dict[str, McEstimate]:
    """Frequencies of the four defining events, each with a fixed pick.

    A/C use the Stage 1 winner, B/D the loser; A/B count pooled-test
    rejections with pooling, C/D Stage-2-only rejections without pooling.
    """
    strategy = Strategy.parse(strategy)
    z_crit = _check_astar(astar)
    sq_t, sq_u = math.sqrt(t * info), math.sqrt((1.0 - t) * info)

    def count_chunk(chunk, n):
        rng = cfg.rng(chunk)
        y11, y12, y2s = draw_model(rng, n)
        out = []
        for y1s in (np.maximum(y11, y12), np.minimum(y11, y12)):
            pool = _pool_mask(strategy, y1s / sq_t - y2s / sq_u, c)
            pooled_rej = math.sqrt(t) * y1s + math.sqrt(1.0 - t) * y2s > z_crit
            out.append((np.count_nonzero(pool & pooled_rej),
                        np.count_nonzero(~pool & (y2s > z_crit))))
        (a, c_), (b, d) = out
        return np.array([a, b, c_, d])

    counts = _run(cfg, count_chunk)
    return {name: McEstimate.from_count(int(k), cfg.replicates, cfg.seed)
            for name, k in zip("ABCD", counts)}
