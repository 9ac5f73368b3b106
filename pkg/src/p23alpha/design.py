"""Design parameters and deterministic trial arithmetic.

Conventions used throughout the package:

* ``Y11, Y12`` are the Stage 1 log-rank statistics of the two doses against
  the shared control (correlation 0.5), ``Y2s`` the Stage 2 statistic of the
  selected dose; all standard normal under the null.
* ``I = N / 4`` is the information of the selected-dose comparison with
  ``N`` total events; Stage 1 carries fraction ``t``.
* ``D_j = Y1j / sqrt(t I) - Y2s / sqrt((1 - t) I)`` is the Stage 1 minus
  Stage 2 observed effect (-log HR) for dose ``j``.
* ``S_j = sqrt(t) Y1j + sqrt(1 - t) Y2s`` is the combined statistic.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .errors import OutOfRange

__all__ = [
    "Strategy",
    "DesignParams",
    "StageEffects",
    "clamp_w",
    "info_from_events",
    "schoenfeld_events",
    "mdd_hr",
    "stage_decompose",
    "stage2_nominal_p",
    "sigma1",
    "sigma2",
    "sigma3",
]


class Strategy(str, enum.Enum):
    """When Stage 1 data enter the primary analysis.

    With ``diff`` = Stage 1 effect minus Stage 2 effect:
    conservative pools if ``diff < c``, aggressive if ``diff > -c`` and
    neutral if ``|diff| < c``. Otherwise only Stage 2 is tested.
    """

    CONSERVATIVE = "conservative"
    AGGRESSIVE = "aggressive"
    NEUTRAL = "neutral"

    @classmethod
    def parse(cls, value: "Strategy | str") -> "Strategy":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise OutOfRange(f"unknown strategy {value!r}; expected one of "
                             f"{[s.value for s in cls]}") from None


def clamp_w(w_raw: float) -> tuple[float, bool]:
    """Clamp the picking-the-winner probability into [0.5, 1].

    Values below 0.5 (picking a loser) are raised to 0.5 so that the Type I
    error is strongly controlled.

    Returns:
        ``(w, clamped)`` where ``clamped`` tells whether ``w_raw`` was changed.
    """
    w_raw = float(w_raw)
    if not 0.0 <= w_raw <= 1.0:
        raise OutOfRange(f"w must lie in [0, 1], got {w_raw}")
    if w_raw < 0.5:
        return 0.5, True
    return w_raw, False


def info_from_events(events: float) -> float:
    """Information units ``I = N / 4`` for 1:1 randomization."""
    if not events > 0:
        raise OutOfRange(f"events must be positive, got {events}")
    return events / 4.0


@dataclass(frozen=True)
class DesignParams:
    """One alpha* problem: target level, strategy, cutoff and design shape.

    ``w`` is always stored clamped; ``w_clamped`` records whether the raw
    value passed in was below 0.5.
    """

    alpha: float
    strategy: Strategy
    c: float
    t: float
    info: float
    w: float
    w_clamped: bool = field(default=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy.parse(self.strategy))
        if not 0.0 < self.alpha < 0.5:
            raise OutOfRange(f"alpha must lie in (0, 0.5), got {self.alpha}")
        if not self.c >= 0.0 or not math.isfinite(self.c):
            raise OutOfRange(f"c must be a finite value >= 0, got {self.c}")
        if not 0.0 < self.t < 1.0:
            raise OutOfRange(f"t must lie in (0, 1), got {self.t}")
        if not self.info > 0.0 or not math.isfinite(self.info):
            raise OutOfRange(f"info must be positive, got {self.info}")
        w, clamped = clamp_w(self.w)
        object.__setattr__(self, "w", w)
        if clamped:
            object.__setattr__(self, "w_clamped", True)

    @classmethod
    def from_events(cls, alpha, strategy, c, t, events, w) -> "DesignParams":
        return cls(alpha, strategy, c, t, info_from_events(events), w)

    @property
    def events(self) -> float:
        return 4.0 * self.info


def schoenfeld_events(alpha: float, power: float, hr: float) -> float:
    """Events needed for a 1:1 log-rank test (Schoenfeld), not rounded."""
    if not 0.0 < alpha < 0.5 + 1e-15:
        raise OutOfRange(f"alpha must lie in (0, 0.5], got {alpha}")
    if not 0.0 < power < 1.0:
        raise OutOfRange(f"power must lie in (0, 1), got {power}")
    if not 0.0 < hr < 1.0:
        raise OutOfRange(f"hr must lie in (0, 1), got {hr}")
    z = norm.isf(alpha) + norm.ppf(power)
    return 4.0 * (z / math.log(hr)) ** 2


def mdd_hr(alpha: float, events: float) -> float:
    """Observed hazard ratio that sits exactly on the one-sided boundary."""
    if not 0.0 < alpha < 1.0:
        raise OutOfRange(f"alpha must lie in (0, 1), got {alpha}")
    if not events > 0:
        raise OutOfRange(f"events must be positive, got {events}")
    return math.exp(-norm.isf(alpha) / math.sqrt(events / 4.0))


@dataclass(frozen=True)
class StageEffects:
    hr_overall: float
    hr_stage1: float
    hr_stage2: float
    diff: float


def stage_decompose(hr_overall: float, t: float, diff: float) -> StageEffects:
    """Split an overall hazard ratio into Stage 1 and Stage 2 parts.

    The overall effect ``e = -log(hr_overall)`` is the information-weighted
    mean ``t e1 + (1 - t) e2``, and ``diff = e1 - e2``.
    """
    if not hr_overall > 0:
        raise OutOfRange(f"hr_overall must be positive, got {hr_overall}")
    if not 0.0 < t < 1.0:
        raise OutOfRange(f"t must lie in (0, 1), got {t}")
    e = -math.log(hr_overall)
    e1 = e + (1.0 - t) * diff
    e2 = e - t * diff
    return StageEffects(hr_overall, math.exp(-e1), math.exp(-e2), diff)


def stage2_nominal_p(hr_stage2: float, events_stage2: float) -> float:
    """One-sided p-value of the Stage 2 log-rank test at the observed HR."""
    if not hr_stage2 > 0:
        raise OutOfRange(f"hr_stage2 must be positive, got {hr_stage2}")
    if not events_stage2 > 0:
        raise OutOfRange(f"events_stage2 must be positive, got {events_stage2}")
    return float(norm.sf(-math.log(hr_stage2) * math.sqrt(events_stage2 / 4.0)))


def _check_shape(t: float, info: float) -> None:
    if not 0.0 < t < 1.0:
        raise OutOfRange(f"t must lie in (0, 1), got {t}")
    if not info > 0.0:
        raise OutOfRange(f"info must be positive, got {info}")


def sigma1(t: float, info: float) -> np.ndarray:
    """Covariance of ``(D1, D2)``."""
    _check_shape(t, info)
    var = 1.0 / (t * info) + 1.0 / ((1.0 - t) * info)
    cov = 1.0 / (2.0 * t * info) + 1.0 / ((1.0 - t) * info)
    return np.array([[var, cov], [cov, var]])


def sigma2(t: float, info: float) -> np.ndarray:
    """Covariance of ``(D1, D2, S1, S2)``.

    Rank 3: the four entries are linear in ``(Y11, Y12, Y2s)``.
    """
    s1 = sigma1(t, info)
    off = -1.0 / (2.0 * math.sqrt(info))
    b = np.array([[0.0, off], [off, 0.0]])
    rho = 1.0 - t / 2.0
    cblock = np.array([[1.0, rho], [rho, 1.0]])
    return np.block([[s1, b], [b.T, cblock]])


def sigma3(t: float, info: float) -> np.ndarray:
    """Covariance of ``(D1, D2, Y2s)``."""
    s1 = sigma1(t, info)
    b = -1.0 / math.sqrt((1.0 - t) * info)
    out = np.empty((3, 3))
    out[:2, :2] = s1
    out[:2, 2] = out[2, :2] = b
    out[2, 2] = 1.0
    return out
