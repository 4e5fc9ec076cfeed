"""Ground truth for the analytically tractable test networks.

Birth-death (0 -> S at N c1, S -> 0 at c2 x) and reversible isomerization
(S1 <-> S2) have closed-form means; for birth-death the estimator variances
of GT and CGT for f(x) = x are also known in closed form. The fluid limit of
any mass-action network is integrated with classical RK4 together with its
forward parameter sensitivity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import binom

from .model import ReactionNetwork, SystemInstance, fluid_rate

__all__ = [
    "BirthDeathParams",
    "bd_mean",
    "bd_sens_c1",
    "bd_sens_c2",
    "bd_var_x",
    "bd_var_gt_c1",
    "bd_var_cgt_c1",
    "pd_var_gt_c2",
    "pd_var_cgt_c2",
    "iso_mean",
    "iso_sens_c1",
    "iso_expectation",
    "iso_sensitivity",
    "FluidSolution",
    "fluid_solve",
]


@dataclass(frozen=True)
class BirthDeathParams:
    c1: float
    c2: float
    x0: float
    N: int
    t: float

    def __post_init__(self):
        if self.c2 <= 0:
            raise ValueError("c2 must be positive")
        if self.c1 < 0 or self.x0 < 0 or self.t < 0 or self.N < 1:
            raise ValueError("invalid birth-death parameters")


def bd_mean(p: BirthDeathParams) -> float:
    e = math.exp(-p.c2 * p.t)
    return p.N * p.x0 * e + p.N * p.c1 / p.c2 * (1 - e)


def bd_sens_c1(p: BirthDeathParams) -> float:
    return p.N / p.c2 * (1 - math.exp(-p.c2 * p.t))


def bd_sens_c2(p: BirthDeathParams) -> float:
    N, c1, c2, x0, t = p.N, p.c1, p.c2, p.x0, p.t
    e = math.exp(-c2 * t)
    return -N * x0 * t * e - N * c1 / c2**2 * (1 - e) + N * c1 / c2 * t * e


def bd_var_x(p: BirthDeathParams) -> float:
    e = math.exp(-p.c2 * p.t)
    return p.N * p.x0 * (1 - e) * e + p.N * p.c1 / p.c2 * (1 - e)


def bd_var_gt_c1(p: BirthDeathParams) -> float:
    """Var of f Z for f = x, sensitivity to c1."""
    N, c1, c2, x0, t = p.N, p.c1, p.c2, p.x0, p.t
    E1 = math.exp(c2 * t)
    E2 = math.exp(2 * c2 * t)
    terms = (
        E2 * N**2 * c1**2 * t,
        N * c1 * t * c2 * E2,
        2 * E1 * N**2 * c1 * c2 * t * x0,
        E1 * c2**2 * t * N * x0,
        c2**2 * t * N**2 * x0**2,
        -2 * E1 * N**2 * c1**2 * t,
        -E1 * N * c1 * c2 * t,
        -2 * N**2 * c1 * t * c2 * x0,
        -N * x0 * t * c2**2,
        3 * N * c1 * E2,
        E2 * c2,
        2 * N * x0 * E1 * c2,
        N**2 * c1**2 * t,
        -6 * E1 * N * c1,
        -E1 * c2,
        -2 * N * x0 * c2,
        3 * N * c1,
    )
    return N * math.exp(-2 * c2 * t) / (c1 * c2**2) * math.fsum(terms)


def bd_var_cgt_c1(p: BirthDeathParams) -> float:
    """Var of (f - E f) Z for f = x, sensitivity to c1."""
    N, c1, c2, x0, t = p.N, p.c1, p.c2, p.x0, p.t
    E1 = math.exp(c2 * t)
    E2 = math.exp(2 * c2 * t)
    terms = (
        N * c1 * t * c2 * E2,
        E1 * c2**2 * t * N * x0,
        -E1 * N * c1 * c2 * t,
        -N * x0 * t * c2**2,
        N * c1 * E2,
        E2 * c2,
        -2 * E1 * N * c1,
        -E1 * c2,
        N * c1,
    )
    return N * math.exp(-2 * c2 * t) / (c1 * c2**2) * math.fsum(terms)


def pd_var_gt_c2(p: BirthDeathParams) -> float:
    """Pure death (c1 = 0): Var of f Z for f = x, sensitivity to c2."""
    N, c2, x0, t = p.N, p.c2, p.x0, p.t
    e1 = math.exp(-c2 * t)
    e2 = math.exp(-2 * c2 * t)
    e3 = math.exp(-3 * c2 * t)
    terms = (
        e2 * N**3 * x0**3,
        -4 * e2 * N**2 * x0**2,
        3 * e2 * N * x0,
        3 * e2 * N**2 * x0**2 * t**2 * c2**2,
        -2 * e3 * N * x0,
        3 * e3 * N**2 * x0**2,
        e1 * N**2 * x0**2,
        -e1 * N * x0,
        e1 * N * x0 * t**2 * c2**2,
        -4 * e2 * t**2 * c2**2 * N * x0,
        # printed as N^2 x0^3; N^3 x0^3 is required for Var = 0 at t = 0
        -e3 * N**3 * x0**3,
    )
    return math.fsum(terms) / c2**2


def pd_var_cgt_c2(p: BirthDeathParams) -> float:
    """Pure death (c1 = 0): Var of (f - E f) Z for f = x, sensitivity to c2."""
    N, c2, x0, t = p.N, p.c2, p.x0, p.t
    e1 = math.exp(-c2 * t)
    e2 = math.exp(-2 * c2 * t)
    e3 = math.exp(-3 * c2 * t)
    terms = (
        -2 * e2 * N**2 * x0**2,
        3 * e2 * N * x0,
        e2 * N**2 * x0**2 * t**2 * c2**2,
        -2 * e3 * N * x0,
        e3 * N**2 * x0**2,
        e1 * N**2 * x0**2,
        -e1 * N * x0,
        e1 * N * x0 * t**2 * c2**2,
        -4 * e2 * N * x0 * t**2 * c2**2,
    )
    return math.fsum(terms) / c2**2


def iso_mean(x10: float, x20: float, c1: float, c2: float, t: float) -> tuple[float, float]:
    """Expected copy numbers of S1 and S2 at time t."""
    s = c1 + c2
    if s <= 0:
        raise ValueError("c1 + c2 must be positive")
    g = -math.expm1(-s * t) / s
    d = g * (c2 * x20 - c1 * x10)
    return x10 + d, x20 - d


def iso_sens_c1(x10: float, x20: float, c1: float, c2: float, t: float) -> float:
    """d/dc1 of E X1(t)."""
    s = c1 + c2
    if s <= 0:
        raise ValueError("c1 + c2 must be positive")
    e = math.exp(-s * t)
    g = -math.expm1(-s * t) / s
    dg = (t * e * s + math.expm1(-s * t)) / s**2
    return dg * (c2 * x20 - c1 * x10) - g * x10


def _iso_probs(c1, c2, t):
    # survival-as-S1 probabilities for a molecule starting as S1 / as S2,
    # with their derivatives in c1
    s = c1 + c2
    e = math.exp(-s * t)
    p11 = (c2 + c1 * e) / s
    p21 = c2 * (1 - e) / s
    dp11 = (e - c1 * t * e) / s - (c2 + c1 * e) / s**2
    dp21 = c2 * t * e / s - c2 * (1 - e) / s**2
    return p11, p21, dp11, dp21


def _iso_pmf(x10, x20, c1, c2, t):
    p11, p21, dp11, dp21 = _iso_probs(c1, c2, t)
    k1 = np.arange(x10 + 1)
    k2 = np.arange(x20 + 1)
    a = binom.pmf(k1, x10, p11)
    b = binom.pmf(k2, x20, p21)
    # d/dp Bin(k; n, p) = n [Bin(k-1; n-1, p) - Bin(k; n-1, p)]
    da = x10 * (binom.pmf(k1 - 1, x10 - 1, p11) - binom.pmf(k1, x10 - 1, p11)) if x10 else np.zeros(1)
    db = x20 * (binom.pmf(k2 - 1, x20 - 1, p21) - binom.pmf(k2, x20 - 1, p21)) if x20 else np.zeros(1)
    pmf = np.convolve(a, b)
    dpmf = np.convolve(da, b) * dp11 + np.convolve(a, db) * dp21
    return pmf, dpmf


def iso_expectation(f: Callable[[np.ndarray], np.ndarray], x10: int, x20: int,
                    c1: float, c2: float, t: float) -> float:
    """E f(X(t)) for isomerization, exact by convolving the two binomial laws.

    ``f`` receives an (K, 2) array of states and returns K values.
    """
    pmf, _ = _iso_pmf(int(x10), int(x20), c1, c2, t)
    k = np.arange(pmf.shape[0])
    states = np.column_stack([k, x10 + x20 - k])
    return float(np.dot(pmf, f(states)))


def iso_sensitivity(f: Callable[[np.ndarray], np.ndarray], x10: int, x20: int,
                    c1: float, c2: float, t: float, param_index: int = 0) -> float:
    """d/dc_j E f(X(t)) for isomerization, j = param_index (0-based)."""
    if param_index == 1:
        # relabeling S1 <-> S2 swaps the two channels
        return iso_sensitivity(lambda s: f(s[:, ::-1]), x20, x10, c2, c1, t, 0)
    if param_index != 0:
        raise ValueError("isomerization has two channels")
    _, dpmf = _iso_pmf(int(x10), int(x20), c1, c2, t)
    k = np.arange(dpmf.shape[0])
    states = np.column_stack([k, x10 + x20 - k])
    return float(np.dot(dpmf, f(states)))


@dataclass(frozen=True)
class FluidSolution:
    """Fluid limit on a uniform grid: ``states`` (k, n) and ``sensitivities``
    (k, n) holding d X / d c_j for the requested channel (or None)."""

    grid: np.ndarray
    states: np.ndarray
    sensitivities: np.ndarray | None
    param_index: int | None

    def at(self, t: float) -> np.ndarray:
        """Linear interpolation of the state at time t."""
        return np.array([np.interp(t, self.grid, self.states[:, i])
                         for i in range(self.states.shape[1])])


def _fluid_rhs(reac, stoich, rates, fact, x, param_index):
    # rates a_j(x), jacobian d a_j / d x_i
    m, n = reac.shape
    xp = np.maximum(x, 0.0)
    pw = xp[None, :] ** reac / fact
    a = rates * np.prod(pw, axis=1)
    drift = stoich.T @ a
    if param_index is None:
        return drift, None, None
    jac = np.zeros((m, n))
    for i in range(n):
        k = reac[:, i]
        d = np.where(k > 0, k * xp[i] ** np.maximum(k - 1, 0) / fact[:, i], 0.0)
        others = np.prod(np.delete(pw, i, axis=1), axis=1) if n > 1 else np.ones(m)
        jac[:, i] = rates * d * others
    dF_dx = stoich.T @ jac
    dF_dc = stoich[param_index] * (a[param_index] / rates[param_index])
    return drift, dF_dx, dF_dc


def fluid_solve(network: ReactionNetwork, x0, t_final: float, step: float,
                rates=None, param_index: int | None = None) -> FluidSolution:
    """Integrate dX/dt = sum_j nu_j a_j(X) with fixed-step RK4.

    When ``param_index`` is given, the forward sensitivity S = dX/dc_j with
    dS/dt = (dF/dx) S + dF/dc_j is integrated alongside.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    reac = network.reactant_matrix
    stoich = network.stoichiometry.astype(np.float64)
    c = network.rates if rates is None else np.asarray(rates, dtype=np.float64)
    fact = np.vectorize(math.factorial)(reac).astype(np.float64)
    n = network.n_species
    n_steps = max(1, int(math.ceil(t_final / step - 1e-12)))
    h = t_final / n_steps
    grid = np.linspace(0.0, t_final, n_steps + 1)
    y = np.concatenate([np.asarray(x0, dtype=np.float64), np.zeros(n)])
    with_sens = param_index is not None

    def rhs(y):
        drift, dfdx, dfdc = _fluid_rhs(reac, stoich, c, fact, y[:n], param_index)
        if not with_sens:
            return np.concatenate([drift, np.zeros(n)])
        return np.concatenate([drift, dfdx @ y[n:] + dfdc])

    out = np.empty((n_steps + 1, 2 * n))
    out[0] = y
    for i in range(n_steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise FloatingPointError(f"nonfinite fluid state at t={grid[i + 1]}")
        out[i + 1] = y
    return FluidSolution(grid, out[:, :n], out[:, n:] if with_sens else None, param_index)


def fluid_instance_solve(instance: SystemInstance, t_final: float, step: float,
                         param_index: int | None = None) -> FluidSolution:
    x0 = np.array([float(x) for x in instance.initial_concentration])
    return fluid_solve(instance.network, x0, t_final, step, param_index=param_index)


def fluid_rates(network: ReactionNetwork, conc) -> np.ndarray:
    return np.array([fluid_rate(network, conc, j) for j in range(network.n_reactions)])
