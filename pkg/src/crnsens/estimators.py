"""GT, CGT and finite-difference sensitivity estimators with error metrics."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .paths import CoupledPair

__all__ = [
    "EstimatorMethod",
    "EstimateSummary",
    "estimate_gt",
    "estimate_cgt",
    "estimate_fd",
    "estimate_fd_values",
    "relative_metrics",
    "gt_cgt_variance_identity",
]


class EstimatorMethod(enum.Enum):
    GT = "GT"
    CGT = "CGT"
    FD1_IRN = "FD1_IRN"
    FD1_CRN = "FD1_CRN"
    FD1_CRP = "FD1_CRP"
    FD2_IRN = "FD2_IRN"
    FD2_CRN = "FD2_CRN"
    FD2_CRP = "FD2_CRP"

    @property
    def is_fd(self) -> bool:
        return self.value.startswith("FD")

    @property
    def two_sided(self) -> bool:
        return self.value.startswith("FD2")

    @property
    def coupling(self) -> str | None:
        return self.value.split("_")[1] if self.is_fd else None

    @classmethod
    def fd(cls, coupling: str, two_sided: bool = False) -> "EstimatorMethod":
        return cls(f"FD{2 if two_sided else 1}_{coupling}")


@dataclass(frozen=True)
class EstimateSummary:
    method: EstimatorMethod
    point: float
    sample_variance: float
    std_error: float
    n_samples: int
    h: float | None = None
    rsd: float | None = None
    rb: float | None = None
    re: float | None = None


def _summary(method, samples, h=None) -> EstimateSummary:
    s = np.asarray(samples, dtype=np.float64)
    n = s.shape[0]
    if n < 2:
        raise ValueError("need at least two samples")
    var = float(s.var(ddof=1))
    return EstimateSummary(EstimatorMethod(method), float(s.mean()), var,
                           math.sqrt(var / n), n, h)


def estimate_gt(samples: Sequence[float]) -> EstimateSummary:
    """Sample mean and unbiased variance of GT samples f(X) Z."""
    return _summary(EstimatorMethod.GT, samples)


def estimate_cgt(f_values: Sequence[float], z_values: Sequence[float]) -> EstimateSummary:
    """Centered GT: mean of (f_i - mean(f)) Z_i."""
    f = np.asarray(f_values, dtype=np.float64)
    z = np.asarray(z_values, dtype=np.float64)
    if f.shape != z.shape:
        raise ValueError("f and Z sample lists differ in length")
    return _summary(EstimatorMethod.CGT, (f - f.mean()) * z)


def estimate_fd_values(f_lower, f_upper, h: float, coupling: str,
                       two_sided: bool = False) -> EstimateSummary:
    """FD estimate from output values of the two legs of each pair.

    One-sided legs are at (c, c + h); two-sided legs are at (c - h, c + h).
    """
    lo = np.asarray(f_lower, dtype=np.float64)
    hi = np.asarray(f_upper, dtype=np.float64)
    if lo.shape != hi.shape:
        raise ValueError("leg sample lists differ in length")
    width = 2.0 * h if two_sided else h
    if width == 0:
        samples = np.zeros_like(lo)
    else:
        samples = (hi - lo) / width
    return _summary(EstimatorMethod.fd(str(coupling), two_sided), samples, h)


def estimate_fd(pairs: Sequence[CoupledPair], f: Callable[[np.ndarray], float],
                order: str = "one_sided") -> EstimateSummary:
    if order not in ("one_sided", "two_sided"):
        raise ValueError("order must be 'one_sided' or 'two_sided'")
    if len(pairs) < 2:
        raise ValueError("need at least two samples")
    first = pairs[0]
    for p in pairs:
        if (p.h, p.coupling, p.param_index, p.two_sided) != (first.h, first.coupling,
                                                              first.param_index, first.two_sided):
            raise ValueError("pairs differ in h, coupling or parameter")
    if first.two_sided != (order == "two_sided"):
        raise ValueError(f"pairs were not generated for a {order} difference")
    lo = [f(p.nominal.state_at(p.nominal.t_final)) for p in pairs]
    hi = [f(p.perturbed.state_at(p.perturbed.t_final)) for p in pairs]
    return estimate_fd_values(lo, hi, first.h, first.coupling.value, first.two_sided)


def relative_metrics(summary: EstimateSummary, true_sensitivity: float) -> EstimateSummary:
    """Attach RSD, RB and RE relative to a nonzero true sensitivity."""
    if true_sensitivity == 0 or not math.isfinite(true_sensitivity):
        raise ValueError("relative metrics need a finite nonzero true sensitivity")
    true_sensitivity = float(true_sensitivity)
    scale = abs(true_sensitivity)
    rsd = math.sqrt(summary.sample_variance) / scale
    rb = (summary.point - true_sensitivity) / scale
    re = math.sqrt(rsd**2 / summary.n_samples + rb**2)
    return replace(summary, rsd=rsd, rb=rb, re=re)


def gt_cgt_variance_identity(f_values, z_values) -> tuple[float, float]:
    """Both sides of Var(S_CGT) = Var(S_GT) - 2 E(f) E(f Z^2) + E(f)^2 E(Z^2).

    The relation presumes E(Z) = 0, so it is evaluated on the empirical law
    of (f, Z - mean(Z)), where it holds exactly. Returns (lhs, rhs).
    """
    f = np.asarray(f_values, dtype=np.float64)
    z = np.asarray(z_values, dtype=np.float64)
    z = z - z.mean()
    ef = f.mean()
    gt = f * z
    var_gt = np.mean(gt**2) - np.mean(gt) ** 2
    cgt = (f - ef) * z
    lhs = np.mean(cgt**2) - np.mean(cgt) ** 2
    rhs = var_gt - 2.0 * ef * np.mean(f * z**2) + ef**2 * np.mean(z**2)
    return float(lhs), float(rhs)
