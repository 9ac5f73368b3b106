"""Rectangle probabilities for zero-mean multivariate normals of dimension 1 to 4.

Every analytic Type I error term reduces to ``P(lower < X < upper)`` for a
Gaussian vector ``X``. The covariances that appear are small (d <= 4) and
some are rank deficient: the 4x4 matrix of (D1, D2, S1, S2) is built from
three underlying normals only. The integral is therefore evaluated as

1. drop coordinates whose bounds are both infinite, standardize the rest;
2. factor the correlation with a greedy, bound-aware ordered Cholesky
   (tightest conditional interval first). A coordinate whose residual
   variance vanishes adds no new latent variable; its bounds become an extra
   linear constraint on the latest latent;
3. integrate the nested conditional form over the latent normals with
   piecewise Gauss-Legendre rules. The innermost latent is done in closed
   form with the normal CDF. Panels are cut wherever a deeper constraint
   switches, so each panel sees an analytic integrand.

The result is deterministic: no random lattice shift is involved.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .errors import DimensionMismatch, NotPositiveDefinite, OutOfRange

__all__ = [
    "DEFAULT_TOL",
    "Rectangle",
    "cholesky",
    "mvn_rect_prob",
]

DEFAULT_TOL = 1e-7
MAX_DIM = 4

# Latents are truncated to [-_TRUNC, _TRUNC]; the discarded mass is < 2e-17 per level.
_TRUNC = 8.5
# Residual variance (in correlation units) below which a coordinate is degenerate.
_FOLD_EPS = 1e-10
_SQRT_2PI = np.sqrt(2.0 * np.pi)
ORDER_LOOSE, ORDER_DEFAULT, ORDER_TIGHT = 6, 8, 12


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned box ``lower < x < upper``; infinite bounds are allowed."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lower) != len(upper):
            raise DimensionMismatch(
                f"lower has {len(lower)} entries, upper has {len(upper)}")
        if not 1 <= len(lower) <= MAX_DIM:
            raise DimensionMismatch(f"dimension must be 1..{MAX_DIM}, got {len(lower)}")
        if any(np.isnan(lower)) or any(np.isnan(upper)):
            raise OutOfRange("rectangle bounds must not be NaN")
        if any(lo > up for lo, up in zip(lower, upper)):
            raise OutOfRange("every lower bound must be <= its upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @classmethod
    def from_bounds(cls, lower=None, upper=None, dim: int | None = None) -> "Rectangle":
        """Build a box where a missing side means unbounded.

        ``Rectangle.from_bounds(upper=(c, c))`` is the lower orthant at ``c``.
        """
        if dim is None:
            dim = len(lower if lower is not None else upper)
        lo = np.full(dim, -np.inf) if lower is None else np.asarray(lower, float)
        up = np.full(dim, np.inf) if upper is None else np.asarray(upper, float)
        return cls(tuple(lo), tuple(up))


def _as_cov(sigma) -> np.ndarray:
    s = np.atleast_2d(np.asarray(sigma, dtype=float))
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise DimensionMismatch(f"covariance must be square, got shape {s.shape}")
    if not 1 <= s.shape[0] <= MAX_DIM:
        raise DimensionMismatch(f"dimension must be 1..{MAX_DIM}, got {s.shape[0]}")
    if not np.all(np.isfinite(s)):
        raise OutOfRange("covariance entries must be finite")
    scale = max(np.max(np.abs(s)), np.finfo(float).tiny)
    if np.max(np.abs(s - s.T)) > 1e-12 * scale:
        raise NotPositiveDefinite("covariance matrix is not symmetric")
    return s


def cholesky(sigma) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == sigma``.

    Raises:
        NotPositiveDefinite: if ``sigma`` is asymmetric or any pivot is
            ``<= 1e-12`` times the largest diagonal entry.
    """
    a = _as_cov(sigma)
    d = a.shape[0]
    floor = 1e-12 * np.max(np.diag(a))
    L = np.zeros_like(a)
    for j in range(d):
        pivot = a[j, j] - L[j, :j] @ L[j, :j]
        if not pivot > floor:
            raise NotPositiveDefinite(f"pivot {j} is {pivot:.3g}, matrix is not positive definite")
        L[j, j] = np.sqrt(pivot)
        L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def _interval_mass(lo, hi):
    # Reflect intervals in the upper half so the CDF difference keeps precision.
    flip = lo > 0
    return ndtr(np.where(flip, -lo, hi)) - ndtr(np.where(flip, -hi, lo))


def _truncated_mean(lo: float, hi: float) -> float:
    mass = float(_interval_mass(lo, hi))
    if mass < 1e-300:
        if np.isfinite(lo) and np.isfinite(hi):
            return 0.5 * (lo + hi)
        return lo if np.isfinite(lo) else hi
    dens = lambda x: 0.0 if np.isinf(x) else np.exp(-0.5 * x * x) / _SQRT_2PI
    return (dens(lo) - dens(hi)) / mass


def _ordered_factor(a: np.ndarray, b: np.ndarray, corr: np.ndarray):
    """Greedy ordered, rank-revealing Cholesky of a correlation matrix.

    Returns a list ``levels`` where ``levels[m]`` holds the constraints
    ``(coef, lo, hi)`` whose last nonzero coefficient is on latent ``m``;
    each reads ``lo < coef @ y[:m+1] < hi``.
    """
    d = len(a)
    L = np.zeros((d, d))
    ybar = np.zeros(d)
    remaining = list(range(d))
    members: list[list[int]] = []
    r = 0
    while remaining:
        resid = {k: corr[k, k] - L[k, :r] @ L[k, :r] for k in remaining}
        if min(resid.values()) < -_FOLD_EPS:
            raise NotPositiveDefinite("covariance matrix is indefinite")
        flat = [k for k in remaining if resid[k] <= _FOLD_EPS]
        if flat:
            if r == 0:
                raise NotPositiveDefinite("a coordinate has zero variance")
            members[r - 1].extend(flat)
            remaining = [k for k in remaining if k not in flat]
            continue
        best, best_mass, best_bounds = None, np.inf, None
        for k in remaining:
            sd = np.sqrt(resid[k])
            mu = L[k, :r] @ ybar[:r]
            lo, hi = (a[k] - mu) / sd, (b[k] - mu) / sd
            mass = float(_interval_mass(lo, hi))
            if mass < best_mass:
                best, best_mass, best_bounds = k, mass, (lo, hi)
        sd = np.sqrt(resid[best])
        L[best, r] = sd
        for i in remaining:
            if i != best:
                L[i, r] = (corr[i, best] - L[i, :r] @ L[best, :r]) / sd
        ybar[r] = _truncated_mean(*best_bounds)
        members.append([best])
        remaining.remove(best)
        r += 1
    return [[(L[k, :m + 1].copy(), a[k], b[k]) for k in ks] for m, ks in enumerate(members)]


def _level_bounds(constraints, Y: np.ndarray, m: int):
    lo = np.full(Y.shape[0], -np.inf)
    hi = np.full(Y.shape[0], np.inf)
    for coef, a, b in constraints:
        shift = Y @ coef[:m]
        c = coef[m]
        lo_k, hi_k = (a - shift) / c, (b - shift) / c
        if c < 0:
            lo_k, hi_k = hi_k, lo_k
        lo = np.maximum(lo, lo_k)
        hi = np.minimum(hi, hi_k)
    return lo, hi


def _kink_rules(levels, m: int):
    """Affine maps ``Y -> y_m`` giving the vertices of deeper constraint planes.

    Between consecutive vertices the integral over the deeper latents is
    analytic in ``y_m``; without the cuts a max/min switch between two
    folded constraints would leave a kink inside a Gauss panel.
    """
    r = len(levels)
    deeper = levels[m + 1:]
    if not any(len(cons) > 1 for cons in deeper):
        return None
    planes = []
    for cons in deeper:
        for coef, a, b in cons:
            full = np.zeros(r)
            full[:len(coef)] = coef
            planes.extend((full, beta) for beta in (a, b) if np.isfinite(beta))
    k = r - m
    offsets, slopes = [], []
    for combo in itertools.combinations(planes, k):
        M = np.array([p[0][m:] for p in combo])
        if abs(np.linalg.det(M)) < 1e-12 * np.prod(np.linalg.norm(M, axis=1)):
            continue
        g = np.linalg.inv(M)[0]
        offsets.append(sum(gi * p[1] for gi, p in zip(g, combo)))
        slopes.append(sum(gi * p[0][:m] for gi, p in zip(g, combo)))
    if not offsets:
        return None
    return np.array(offsets), np.array(slopes).reshape(len(offsets), m)


@functools.lru_cache(maxsize=None)
def _rule_for(tol: float):
    # Panels of width <= 1 in latent units; the Gauss order is set so the
    # per-panel error on Gaussian-weighted analytic integrands sits well below tol.
    if tol >= 1e-5:
        order = ORDER_LOOSE
    elif tol >= 1e-8:
        order = ORDER_DEFAULT
    else:
        order = ORDER_TIGHT
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return 0.5 * (nodes + 1.0), 0.5 * weights


_GRID = np.arange(-np.floor(_TRUNC), np.floor(_TRUNC) + 1.0)


def _integrate(levels, tol: float) -> float:
    unit_nodes, unit_weights = _rule_for(tol)
    r = len(levels)
    Y = np.zeros((1, 0))
    W = np.ones(1)
    for m in range(r):
        lo, hi = _level_bounds(levels[m], Y, m)
        if m == r - 1:
            mass = np.clip(_interval_mass(lo, hi), 0.0, None)
            mass[hi <= lo] = 0.0
            return float(np.sum(W * mass))
        lo = np.clip(lo, -_TRUNC, _TRUNC)
        hi = np.maximum(np.clip(hi, -_TRUNC, _TRUNC), lo)
        cuts = [lo[:, None], hi[:, None], np.broadcast_to(_GRID, (len(lo), len(_GRID)))]
        rule = _kink_rules(levels, m)
        if rule is not None:
            offsets, slopes = rule
            cuts.append(offsets[None, :] - Y @ slopes.T)
        pts = np.sort(np.clip(np.concatenate(cuts, axis=1), lo[:, None], hi[:, None]), axis=1)
        left = pts[:, :-1]
        width = np.diff(pts, axis=1)
        y = left[..., None] + width[..., None] * unit_nodes
        w = width[..., None] * unit_weights * np.exp(-0.5 * y * y) / _SQRT_2PI
        w = W[:, None, None] * w
        keep = w > 0
        rows = np.broadcast_to(np.arange(len(W))[:, None, None], w.shape)[keep]
        Y = np.column_stack([Y[rows], y[keep]])
        W = w[keep]
        if W.size == 0:
            return 0.0
    raise AssertionError("unreachable")


def mvn_rect_prob(rect: Rectangle, sigma, tol: float = DEFAULT_TOL) -> float:
    """Probability that a zero-mean normal vector with covariance ``sigma`` lies in ``rect``.

    ``sigma`` may be positive semidefinite: rank-deficient matrices, such as
    the covariance of four linear combinations of three normals, are handled
    exactly by folding degenerate coordinates into constraints. Indefinite
    matrices raise ``NotPositiveDefinite``.

    Args:
        rect: integration box; its dimension must match ``sigma``.
        sigma: covariance matrix, d <= 4.
        tol: target absolute accuracy in [1e-10, 1e-3]; selects the
            quadrature order.
    """
    if not isinstance(rect, Rectangle):
        rect = Rectangle(*rect)
    if not 1e-10 <= tol <= 1e-3:
        raise OutOfRange(f"tol must lie in [1e-10, 1e-3], got {tol}")
    s = _as_cov(sigma)
    if s.shape[0] != rect.dim:
        raise DimensionMismatch(f"rectangle has dimension {rect.dim}, covariance {s.shape[0]}")
    lower = np.array(rect.lower)
    upper = np.array(rect.upper)
    if np.any(lower == upper):
        return 0.0
    active = ~(np.isneginf(lower) & np.isposinf(upper))
    if not active.any():
        return 1.0
    s = s[np.ix_(active, active)]
    diag = np.diag(s)
    if np.any(diag <= 0):
        raise NotPositiveDefinite("covariance has a non-positive diagonal entry")
    sd = np.sqrt(diag)
    corr = s / np.outer(sd, sd)
    a = lower[active] / sd
    b = upper[active] / sd
    levels = _ordered_factor(a, b, corr)
    return float(min(max(_integrate(levels, tol), 0.0), 1.0))


def orthant_bvn(rho: float) -> float:
    """``P(X1 > 0, X2 > 0)`` for a standard bivariate normal with correlation ``rho``."""
    return 0.25 + np.arcsin(rho) / (2.0 * np.pi)


def rect_prob(lower: Sequence[float] | None, upper: Sequence[float] | None, sigma,
              tol: float = DEFAULT_TOL) -> float:
    """Shorthand for ``mvn_rect_prob`` taking raw bounds (``None`` = unbounded side)."""
    dim = np.atleast_2d(np.asarray(sigma)).shape[0]
    return mvn_rect_prob(Rectangle.from_bounds(lower, upper, dim), sigma, tol)
