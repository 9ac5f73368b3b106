"""Adjusted alpha for adaptive Phase 2/3 designs with dose optimization.

The selected dose's Stage 1 data are pooled with Stage 2 only when the two
stages agree to within a cutoff ``c``; otherwise Stage 2 is tested alone.
Both tests run at a common nominal level ``alpha*`` chosen so the overall
one-sided Type I error equals ``alpha``.

>>> from p23alpha import DesignParams, solve_alpha_star
>>> import math
>>> p = DesignParams(alpha=0.025, strategy="neutral", c=math.log(1.1), t=0.3, info=510 / 4, w=0.6)
>>> round(solve_alpha_star(p).alpha_star, 4)
0.0199
"""

from .design import (DesignParams, StageEffects, Strategy, clamp_w, info_from_events, mdd_hr,
                     schoenfeld_events, sigma1, sigma2, sigma3, stage2_nominal_p,
                     stage_decompose)
from .engine import (AlphaStarResult, ComponentValues, components, components_aggressive,
                     components_conservative, components_neutral, solve_alpha_star,
                     type_one_error)
from .errors import DimensionMismatch, NoConvergence, NotPositiveDefinite, OutOfRange
from .mvn import DEFAULT_TOL, Rectangle, cholesky, mvn_rect_prob, rect_prob
from .oracle import (EffectSpec, McConfig, McEstimate, draw_model, select_dose,
                     simulate_components, simulate_power, simulate_type_one)

__version__ = "0.1.0"
