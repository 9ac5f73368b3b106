"""Overall Type I error of the adaptive design and the alpha* solver.

Under the null the selected dose is the Stage 1 winner with probability
``w`` and the loser otherwise, so the Type I error is

    A w + B (1 - w) + C w + D (1 - w)

with A, B the pooled-test rejection probabilities given a winner/loser was
picked and C, D the Stage-2-only ones. Because ``D_j`` and ``S_j`` are both
increasing in ``Y1j`` with the same ``Y2s`` term, the index maximising
``Y1j`` also maximises ``D_j`` and ``S_j``. Events on ``max``/``min`` then
become rectangle events on both doses, e.g.
``{max_j D_j < c} = {D1 < c, D2 < c}``, and inclusion-exclusion turns every
term into rectangle probabilities over ``sigma1``, ``sigma2`` or ``sigma3``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .design import DesignParams, Strategy, sigma1, sigma2, sigma3
from .errors import NoConvergence, OutOfRange
from .mvn import DEFAULT_TOL, rect_prob

__all__ = [
    "ComponentValues",
    "AlphaStarResult",
    "components",
    "components_neutral",
    "components_conservative",
    "components_aggressive",
    "type_one_error",
    "solve_alpha_star",
]

INF = math.inf
SOLVER_TOL = 1e-6
BRACKET_LOW = 1e-6
MAX_ITER = 200


@dataclass(frozen=True)
class ComponentValues:
    """Winner-pooled (A), loser-pooled (B), winner-Stage-2 (C), loser-Stage-2 (D)."""

    A: float
    B: float
    C: float
    D: float

    def total(self, w: float) -> float:
        return (self.A + self.C) * w + (self.B + self.D) * (1.0 - w)

    def as_dict(self) -> dict:
        return {"A": self.A, "B": self.B, "C": self.C, "D": self.D}


class _Terms:
    """Rectangle probabilities over the three covariance structures."""

    def __init__(self, c: float, t: float, info: float, astar: float, tol: float):
        if not math.isfinite(c) or c < 0:
            raise OutOfRange(f"c must be a finite value >= 0, got {c}")
        if not 0.0 < astar < 0.5:
            raise OutOfRange(f"astar must lie in (0, 0.5), got {astar}")
        self.c = c
        self.z = float(norm.isf(astar))
        self.astar = astar
        self.tol = tol
        self.s1 = sigma1(t, info)
        self.s2 = sigma2(t, info)
        self.s3 = sigma3(t, info)

    def d_pair(self, lower=None, upper=None) -> float:
        """P over (D1, D2)."""
        return rect_prob(lower, upper, self.s1, self.tol)

    def d_and_s(self, lower=None, upper=None) -> float:
        """P over (D1, D2, S1, S2)."""
        return rect_prob(lower, upper, self.s2, self.tol)

    def d_and_y2(self, lower=None, upper=None) -> float:
        """P over (D1, D2, Y2s)."""
        return rect_prob(lower, upper, self.s3, self.tol)


def components_neutral(c: float, t: float, info: float, astar: float,
                       tol: float = DEFAULT_TOL) -> ComponentValues:
    """Pool iff ``|D_s| < c``."""
    T = _Terms(c, t, info, astar, tol)
    z = T.z
    A = (T.d_pair(upper=(c, c))
         - T.d_pair(upper=(-c, -c))
         - T.d_and_s(upper=(c, c, z, z))
         + T.d_and_s(upper=(-c, -c, z, z)))
    B = (T.d_and_s(lower=(-c, -c, z, z))
         - T.d_and_s(lower=(c, c, z, z)))
    C = (astar
         + T.d_and_y2(lower=(-INF, -INF, z), upper=(-c, -c, INF))
         - T.d_and_y2(lower=(-INF, -INF, z), upper=(c, c, INF)))
    D = (astar
         + T.d_and_y2(lower=(c, c, z))
         - T.d_and_y2(lower=(-c, -c, z)))
    return ComponentValues(A, B, C, D)


def components_conservative(c: float, t: float, info: float, astar: float,
                            tol: float = DEFAULT_TOL) -> ComponentValues:
    """Pool iff ``D_s < c``: Stage 1 is dropped when it looks too good."""
    T = _Terms(c, t, info, astar, tol)
    z = T.z
    # P(max D < c, max S > z)
    A = T.d_pair(upper=(c, c)) - T.d_and_s(upper=(c, c, z, z))
    # P(min D < c, min S > z)
    B = T.d_and_s(lower=(-INF, -INF, z, z)) - T.d_and_s(lower=(c, c, z, z))
    # P(max D >= c, Y2s > z)
    C = astar - T.d_and_y2(lower=(-INF, -INF, z), upper=(c, c, INF))
    # P(min D >= c, Y2s > z)
    D = T.d_and_y2(lower=(c, c, z))
    return ComponentValues(A, B, C, D)


def components_aggressive(c: float, t: float, info: float, astar: float,
                          tol: float = DEFAULT_TOL) -> ComponentValues:
    """Pool iff ``D_s > -c``: Stage 1 is dropped only when it looks too bad."""
    T = _Terms(c, t, info, astar, tol)
    z = T.z
    # P(max S > z) - P(max D <= -c, max S > z)
    A = ((1.0 - T.d_and_s(upper=(INF, INF, z, z)))
         - (T.d_pair(upper=(-c, -c)) - T.d_and_s(upper=(-c, -c, z, z))))
    # P(min D > -c, min S > z)
    B = T.d_and_s(lower=(-c, -c, z, z))
    # P(max D <= -c, Y2s > z)
    C = T.d_and_y2(lower=(-INF, -INF, z), upper=(-c, -c, INF))
    # P(min D <= -c, Y2s > z)
    D = astar - T.d_and_y2(lower=(-c, -c, z))
    return ComponentValues(A, B, C, D)


_COMPONENTS = {
    Strategy.NEUTRAL: components_neutral,
    Strategy.CONSERVATIVE: components_conservative,
    Strategy.AGGRESSIVE: components_aggressive,
}


def components(strategy, c, t, info, astar, tol=DEFAULT_TOL) -> ComponentValues:
    return _COMPONENTS[Strategy.parse(strategy)](c, t, info, astar, tol)


def type_one_error(params: DesignParams, astar: float, tol: float = DEFAULT_TOL) -> float:
    """Overall null rejection probability when both tests run at level ``astar``."""
    comp = components(params.strategy, params.c, params.t, params.info, astar, tol)
    return comp.total(params.w)


@dataclass(frozen=True)
class AlphaStarResult:
    """Solved nominal level and solver diagnostics.

    ``capped`` is set when even ``alpha_star = alpha`` keeps the overall
    Type I error at or below ``alpha``; the level is then not raised above
    ``alpha`` and ``achieved_type1`` reports the (lower) error actually spent.
    """

    alpha_star: float
    achieved_type1: float
    iterations: int
    bracket: float
    clamped_w: bool
    capped: bool = False


def solve_alpha_star(params: DesignParams, tol: float = SOLVER_TOL,
                     max_iter: int = MAX_ITER, mvn_tol: float = DEFAULT_TOL) -> AlphaStarResult:
    """Find ``alpha*`` in ``[1e-6, alpha]`` with ``type_one_error(alpha*) == alpha``.

    Illinois-modified false position on a bracket, with a bisection step
    whenever the interpolated point fails to shrink the bracket enough.
    The Type I error is increasing in ``alpha*``, so the bracket stays valid.
    """
    alpha = params.alpha

    def g(x):
        return type_one_error(params, x, mvn_tol) - alpha

    lo, hi = BRACKET_LOW, alpha
    g_hi = g(hi)
    if g_hi <= tol:
        # No inflation at the nominal level: alpha itself is admissible.
        return AlphaStarResult(hi, g_hi + alpha, 0, 0.0, params.w_clamped,
                               capped=g_hi < -tol)
    g_lo = g(lo)
    if g_lo > 0:
        raise NoConvergence(f"Type I error exceeds alpha even at astar={lo}")
    side = 0
    for it in range(1, max_iter + 1):
        width = hi - lo
        x = hi - g_hi * (hi - lo) / (g_hi - g_lo)
        if not lo < x < hi:
            x = 0.5 * (lo + hi)
        gx = g(x)
        if abs(gx) <= 1e-3 * tol or width <= 1e-14:
            return AlphaStarResult(x, gx + alpha, it, width, params.w_clamped)
        if gx > 0:
            hi, g_hi = x, gx
            if side == 1:
                g_lo *= 0.5
            side = 1
        else:
            lo, g_lo = x, gx
            if side == -1:
                g_hi *= 0.5
            side = -1
        if hi - lo > 0.5 * width:
            # false position stalled; force a bisection
            mid = 0.5 * (lo + hi)
            gm = g(mid)
            if gm > 0:
                hi, g_hi = mid, gm
            else:
                lo, g_lo = mid, gm
            side = 0
    best = lo if abs(g_lo) < abs(g_hi) else hi
    g_best = min(g_lo, g_hi, key=abs)
    if abs(g_best) <= tol:
        return AlphaStarResult(best, g_best + alpha, max_iter, hi - lo, params.w_clamped)
    raise NoConvergence(f"alpha* bracket did not close within {max_iter} iterations "
                        f"(width {hi - lo:.3g}, residual {g_best:.3g})")
