"""Girsanov (likelihood ratio) weights for multiplicative rate parameters.

With a_j = c_j b_j the weight for the sensitivity with respect to c_j is the
compensated reaction count (R_j(t) - int_0^t a_j ds) / c_j.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .paths import Trajectory

__all__ = ["GtWeight", "gt_weight", "gt_sample", "weight_increment"]


@dataclass(frozen=True)
class GtWeight:
    param_index: int
    value: float
    reaction_count: int
    compensator: float


def _rate(trajectory: Trajectory, param_index: int) -> float:
    c = trajectory.instance.network.reactions[param_index].rate_const
    if c <= 0:
        raise ValueError(f"weight undefined: rate constant of channel {param_index} is {c}")
    return c


def gt_weight(trajectory: Trajectory, param_index: int, t: float | None = None) -> GtWeight:
    """Weight Z(t) for channel ``param_index`` (0-based); ``t`` defaults to t_final."""
    c = _rate(trajectory, param_index)
    t = trajectory.t_final if t is None else t
    count = int(trajectory.counts_at(t)[param_index])
    comp = float(trajectory.integral_at(t)[param_index])
    return GtWeight(param_index, (count - comp) / c, count, comp)


def weight_increment(trajectory: Trajectory, param_index: int, s: float, t: float) -> float:
    """Z(t) - Z(s) computed from the counts and integral accrued on (s, t]."""
    c = _rate(trajectory, param_index)
    dr = int(trajectory.counts_at(t)[param_index] - trajectory.counts_at(s)[param_index])
    di = float(trajectory.integral_at(t)[param_index] - trajectory.integral_at(s)[param_index])
    return (dr - di) / c


def gt_sample(trajectory: Trajectory, param_index: int, f: Callable[[np.ndarray], float],
              t: float | None = None) -> float:
    """One GT estimator sample f(X(t)) Z(t)."""
    t = trajectory.t_final if t is None else t
    return float(f(trajectory.state_at(t))) * gt_weight(trajectory, param_index, t).value
