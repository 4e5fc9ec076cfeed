"""System-size and final-time studies of estimator variance, plus the
cost/step-size proportionalities that follow from the scaling laws."""

from __future__ import annotations

import csv
import io
import math
import re
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import __version__
from .estimators import (
    EstimateSummary,
    EstimatorMethod,
    estimate_cgt,
    estimate_fd_values,
    estimate_gt,
    relative_metrics,
)
from .model import ReactionNetwork, SystemInstance, load_network
from .oracles import BirthDeathParams, bd_sens_c1, bd_sens_c2, fluid_solve, iso_sensitivity
from .paths import PathBatch, simulate_batch, simulate_coupled_batch
from .randomness import derive_seed

__all__ = [
    "OutputFunction",
    "ScalingConfig",
    "ScalingRow",
    "ScalingReport",
    "TimeStudyConfig",
    "TimeRow",
    "TimeStudyReport",
    "run_scaling_study",
    "run_time_study",
    "fit_slope",
    "linear_fit",
    "ns_required",
    "optimal_h",
    "true_sensitivity",
    "REPORT_COLUMNS",
    "SLOPE_COLUMNS",
]

REPORT_COLUMNS = ["model", "output", "method", "N", "Ns", "h", "point", "std_error",
                  "rsd", "raw_variance", "rb", "slope_window"]
SLOPE_COLUMNS = ["method", "slope", "intercept", "n_points"]
TIME_COLUMNS = ["model", "output", "method", "T", "N", "Ns", "h", "point", "std_error",
                "variance", "truth"]
TIME_FIT_COLUMNS = ["method", "slope", "intercept", "r2", "n_points"]

_OUTPUT_RE = re.compile(r"^\s*(component|square|sin_scaled|indicator_leq)\s*\(\s*(\d+)\s*(?:,\s*(\d+)\s*)?\)\s*$")


@dataclass(frozen=True)
class OutputFunction:
    """Output f^N applied to copy-number states.

    Species indices are 0-based here and 1-based in the text form, e.g.
    ``component(1)`` is the first species. ``indicator_leq(i, k)`` is
    1{x_i <= x_k}.
    """

    kind: str
    i: int
    k: int | None = None

    @classmethod
    def parse(cls, text: str) -> "OutputFunction":
        m = _OUTPUT_RE.match(text)
        if m is None:
            raise ValueError(f"bad output function {text!r}")
        kind, i, k = m.group(1), int(m.group(2)), m.group(3)
        if i < 1 or (k is not None and int(k) < 1):
            raise ValueError("species indices are 1-based")
        if (kind == "indicator_leq") != (k is not None):
            raise ValueError(f"{kind} takes {'two' if kind == 'indicator_leq' else 'one'} indices")
        return cls(kind, i - 1, None if k is None else int(k) - 1)

    def __str__(self) -> str:
        if self.k is None:
            return f"{self.kind}({self.i + 1})"
        return f"{self.kind}({self.i + 1},{self.k + 1})"

    @property
    def alpha(self) -> int | None:
        """Growth exponent of f^N(N x) in N; None where undefined."""
        return {"component": 1, "square": 2, "sin_scaled": 0}.get(self.kind)

    def values(self, states: np.ndarray, N: int) -> np.ndarray:
        s = np.asarray(states)
        xi = s[..., self.i].astype(np.float64)
        if self.kind == "component":
            return xi
        if self.kind == "square":
            return xi * xi
        if self.kind == "sin_scaled":
            return np.sin(xi / N)
        return (s[..., self.i] <= s[..., self.k]).astype(np.float64)

    def fluid_sensitivity(self, x: np.ndarray, dx: np.ndarray, N: int) -> float | None:
        """N^alpha d f(X(t)) / dc from the fluid state and its sensitivity."""
        if self.kind == "component":
            return N * dx[self.i]
        if self.kind == "square":
            return N**2 * 2.0 * x[self.i] * dx[self.i]
        if self.kind == "sin_scaled":
            return math.cos(x[self.i]) * dx[self.i]
        return None


def _is_isomerization(net: ReactionNetwork) -> bool:
    return (net.n_species == 2 and net.n_reactions == 2
            and net.reactant_matrix.tolist() == [[1, 0], [0, 1]]
            and net.stoichiometry.tolist() == [[-1, 1], [1, -1]])


def _is_birth_death(net: ReactionNetwork) -> bool:
    return (net.n_species == 1 and net.n_reactions == 2
            and net.reactant_matrix.tolist() == [[0], [1]]
            and net.stoichiometry.tolist() == [[1], [-1]])


def exact_sensitivity(instance: SystemInstance, output: OutputFunction, param_index: int,
                      t: float) -> float | None:
    """Closed-form sensitivity of E f^N(X(t)) when a built-in oracle applies."""
    net = instance.network
    N = instance.system_size
    x = instance.initial_state
    c = net.rates
    if _is_isomerization(net):
        return iso_sensitivity(lambda s: output.values(s, N), int(x[0]), int(x[1]),
                               c[0], c[1], t, param_index)
    if _is_birth_death(net) and output.kind == "component":
        p = BirthDeathParams(c[0], c[1], float(instance.initial_concentration[0]), N, t)
        return bd_sens_c1(p) if param_index == 0 else bd_sens_c2(p)
    return None


def fluid_reference(instance: SystemInstance, output: OutputFunction, param_index: int,
                    t: float, step: float = 1e-3) -> float | None:
    """Large-N reference N^alpha d f(X(t))/dc_j from the fluid limit."""
    x0 = np.array([float(v) for v in instance.initial_concentration])
    sol = fluid_solve(instance.network, x0, t, step, param_index=param_index)
    return output.fluid_sensitivity(sol.states[-1], sol.sensitivities[-1], instance.system_size)


def true_sensitivity(instance, output, param_index, t, mode="auto"):
    """Truth for relative metrics as (value, is_exact).

    mode: ``exact`` (closed form or LookupError), ``fluid`` (fluid-limit
    reference), ``auto`` (exact when available, else fluid), ``none``.
    The value is None when no truth of the requested kind exists.
    """
    if mode == "none":
        return None, False
    if mode in ("exact", "auto"):
        s = exact_sensitivity(instance, output, param_index, t)
        if s is not None:
            return float(s), True
        if mode == "exact":
            raise LookupError("no closed-form sensitivity for this model and output")
    if mode in ("fluid", "auto"):
        s = fluid_reference(instance, output, param_index, t)
        return (None if s is None else float(s)), False
    raise ValueError(f"unknown truth mode {mode!r}")


# Batches are reused across outputs and studies within one process.
_BATCH_CACHE: "OrderedDict[tuple, object]" = OrderedDict()
_CACHE_BYTES = 1 << 30


def _nbytes(val) -> int:
    batches = val if isinstance(val, tuple) else (val,)
    return sum(b.states.nbytes + b.counts.nbytes + b.integrals.nbytes for b in batches)


def _cached(key, compute):
    if key in _BATCH_CACHE:
        _BATCH_CACHE.move_to_end(key)
        return _BATCH_CACHE[key]
    val = compute()
    _BATCH_CACHE[key] = val
    while len(_BATCH_CACHE) > 1 and sum(map(_nbytes, _BATCH_CACHE.values())) > _CACHE_BYTES:
        _BATCH_CACHE.popitem(last=False)
    return val


def clear_cache() -> None:
    _BATCH_CACHE.clear()


def path_batch(instance: SystemInstance, obs_times, n_paths: int, seed: int,
               workers: int = 1) -> PathBatch:
    obs = tuple(float(t) for t in obs_times)
    key = ("paths", instance, obs, n_paths, seed)
    return _cached(key, lambda: simulate_batch(instance, obs, n_paths, seed, workers=workers))


def coupled_batch(instance, method: EstimatorMethod, param_index, h, obs_times, n_pairs, seed,
                  workers=1):
    obs = tuple(float(t) for t in obs_times)
    key = ("pairs", instance, method, param_index, float(h), obs, n_pairs, seed)
    return _cached(key, lambda: simulate_coupled_batch(
        instance, param_index, h, method.coupling, obs, n_pairs, seed,
        two_sided=method.two_sided, workers=workers))


def cell_seed(master: int, label: str, N: int) -> int:
    return derive_seed(master, label, N)


def estimate_cell(method: EstimatorMethod, instance, output, param_index, obs_times, n_samples,
                  seed, h=None, workers=1, obs_index=-1) -> EstimateSummary:
    """One estimator run at one system size; GT and CGT share their paths."""
    N = instance.system_size
    if method in (EstimatorMethod.GT, EstimatorMethod.CGT):
        b = path_batch(instance, obs_times, n_samples, cell_seed(seed, "paths", N), workers)
        f = output.values(b.states[:, obs_index, :], N)
        z = b.weights(param_index)[:, obs_index]
        return estimate_gt(f * z) if method is EstimatorMethod.GT else estimate_cgt(f, z)
    if h is None:
        raise ValueError(f"{method.value} needs a perturbation h")
    lo, hi = coupled_batch(instance, method, param_index, h, obs_times, n_samples,
                           cell_seed(seed, method.value, N), workers)
    return estimate_fd_values(output.values(lo.states[:, obs_index, :], N),
                              output.values(hi.states[:, obs_index, :], N),
                              h, method.coupling, method.two_sided)


def _parse_methods(methods) -> tuple[EstimatorMethod, ...]:
    out = []
    for m in methods:
        m = EstimatorMethod(m) if not isinstance(m, EstimatorMethod) else m
        if m not in out:
            out.append(m)
    return tuple(out)


@dataclass(frozen=True)
class ScalingConfig:
    model: str
    output: OutputFunction
    param_index: int
    t_final: float
    n_grid: tuple[int, ...]
    n_samples: int
    methods: tuple[EstimatorMethod, ...]
    seed: int = 2024
    h: float | None = None
    slope_window: float = 0.5
    x0: tuple | None = None
    truth: str = "auto"

    def __post_init__(self):
        object.__setattr__(self, "methods", _parse_methods(self.methods))
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        if isinstance(self.output, str):
            object.__setattr__(self, "output", OutputFunction.parse(self.output))
        if not self.n_grid or any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValueError("N grid must be nonempty and strictly increasing")
        if self.n_grid[0] < 1:
            raise ValueError("system sizes must be positive")
        if self.n_samples < 100:
            raise ValueError("n_samples must be at least 100")
        if not self.methods:
            raise ValueError("no estimator methods selected")
        if any(m.is_fd for m in self.methods) and not self.h:
            raise ValueError("finite-difference methods need h")
        if not 0 < self.slope_window <= 1:
            raise ValueError("slope window must lie in (0, 1]")
        if self.t_final <= 0:
            raise ValueError("t_final must be positive")
        if self.truth not in ("auto", "exact", "fluid", "none"):
            raise ValueError(f"unknown truth mode {self.truth!r}")

    def network(self) -> ReactionNetwork:
        return load_network(self.model)

    def instance(self, N: int) -> SystemInstance:
        return SystemInstance.from_network(self.network(), N, self.x0)


@dataclass(frozen=True)
class ScalingRow:
    N: int
    method: EstimatorMethod
    summary: EstimateSummary
    truth: float | None
    truth_exact: bool

    @property
    def metric(self) -> float | None:
        """RSD when a truth is known, else the raw estimator variance."""
        return self.summary.rsd if self.summary.rsd is not None else self.summary.sample_variance


@dataclass(frozen=True)
class ScalingReport:
    config: ScalingConfig
    rows: list[ScalingRow]
    slopes: dict = field(default_factory=dict)

    def row(self, N: int, method) -> ScalingRow:
        method = EstimatorMethod(method)
        for r in self.rows:
            if r.N == N and r.method is method:
                return r
        raise KeyError((N, method))

    def slope(self, method) -> float:
        return self.slopes[EstimatorMethod(method)][0]


def run_scaling_study(config: ScalingConfig, workers: int = 1) -> ScalingReport:
    rows = []
    net = config.network()
    for N in config.n_grid:
        inst = SystemInstance.from_network(net, N, config.x0)
        truth, exact = true_sensitivity(inst, config.output, config.param_index,
                                        config.t_final, config.truth)
        # indicator outputs report raw variance: their sensitivity vanishes as N grows
        use_rsd = config.output.kind != "indicator_leq" and bool(truth)
        for method in config.methods:
            s = estimate_cell(method, inst, config.output, config.param_index, [config.t_final],
                              config.n_samples, config.seed,
                              h=config.h if method.is_fd else None, workers=workers)
            if truth and (use_rsd or exact):
                rel = relative_metrics(s, truth)
                s = EstimateSummary(s.method, s.point, s.sample_variance, s.std_error,
                                    s.n_samples, s.h, rel.rsd if use_rsd else None,
                                    rel.rb if exact else None, rel.re if exact else None)
            rows.append(ScalingRow(N, method, s, truth, exact))
    slopes = {}
    if len(config.n_grid) >= 2:
        for method in config.methods:
            pts = [(r.N, r.metric) for r in rows if r.method is method]
            try:
                slope, icpt = fit_slope(pts, config.slope_window)
            except ValueError:
                continue
            slopes[method] = (slope, icpt, _window_count(len(pts), config.slope_window))
    return ScalingReport(config, rows, slopes)


def _window_count(count: int, window: float) -> int:
    return max(2, math.ceil(window * count - 1e-12))


def fit_slope(points: Sequence[tuple[float, float]], window: float = 0.5) -> tuple[float, float]:
    """Least-squares line through (log N, log value) for the largest-N points.

    Uses the ceil(window * count) points with largest N (at least two).
    """
    pts = sorted(points)
    k = _window_count(len(pts), window)
    if len(pts) < 2 or k > len(pts):
        raise ValueError("need at least two points in the fit window")
    sel = pts[-k:]
    if any(not (v > 0) for _, v in sel):
        raise ValueError("values in the fit window must be positive")
    lx = np.log([n for n, _ in sel])
    ly = np.log([v for _, v in sel])
    slope, icpt = linear_fit(lx, ly)[:2]
    return slope, icpt


def linear_fit(x, y) -> tuple[float, float, float]:
    """Ordinary least squares y = a x + b; returns (a, b, R^2)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    a = float(np.sum((x - xm) * (y - ym)) / sxx)
    b = float(ym - a * xm)
    ss_tot = float(np.sum((y - ym) ** 2))
    ss_res = float(np.sum((y - (a * x + b)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return a, b, r2


@dataclass(frozen=True)
class TimeStudyConfig:
    model: str
    output: OutputFunction
    param_index: int
    N: int
    t_grid: tuple[float, ...]
    n_samples: int
    methods: tuple[EstimatorMethod, ...]
    seed: int = 2024
    h: float | None = None
    x0: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "methods", _parse_methods(self.methods))
        object.__setattr__(self, "t_grid", tuple(float(t) for t in self.t_grid))
        if isinstance(self.output, str):
            object.__setattr__(self, "output", OutputFunction.parse(self.output))
        if not self.t_grid or any(b <= a for a, b in zip(self.t_grid, self.t_grid[1:])):
            raise ValueError("T grid must be nonempty and increasing")
        if self.t_grid[0] < 0 or self.t_grid[-1] <= 0:
            raise ValueError("T grid must be nonnegative and end above 0")
        if self.n_samples < 2:
            raise ValueError("n_samples must be at least 2")
        if any(m.is_fd for m in self.methods) and not self.h:
            raise ValueError("finite-difference methods need h")


@dataclass(frozen=True)
class TimeRow:
    T: float
    method: EstimatorMethod
    point: float
    variance: float
    std_error: float
    truth: float | None


@dataclass(frozen=True)
class TimeStudyReport:
    config: TimeStudyConfig
    rows: list[TimeRow]
    fits: dict = field(default_factory=dict)

    def variances(self, method) -> np.ndarray:
        method = EstimatorMethod(method)
        return np.array([r.variance for r in self.rows if r.method is method])


def run_time_study(config: TimeStudyConfig, workers: int = 1) -> TimeStudyReport:
    """Estimator variance against final time at fixed N.

    Every method simulates its paths once to the largest T and is read at
    each grid time, so cells at different T share paths.
    """
    inst = SystemInstance.from_network(load_network(config.model), config.N, config.x0)
    rows = []
    for method in config.methods:
        for k, T in enumerate(config.t_grid):
            s = _time_cell(method, inst, config, k, workers)
            truth = exact_sensitivity(inst, config.output, config.param_index, T) if T > 0 else 0.0
            rows.append(TimeRow(T, method, s.point, s.sample_variance, s.std_error, truth))
    fits = {}
    if len(config.t_grid) >= 2:
        for method in config.methods:
            v = [r.variance for r in rows if r.method is method]
            fits[method] = linear_fit(config.t_grid, v) + (len(v),)
    return TimeStudyReport(config, rows, fits)


def _time_cell(method, inst, config, k, workers=1):
    if config.t_grid[k] == 0:
        # no events can have happened: Z(0) = 0 and both FD legs equal X(0)
        zero = np.zeros(config.n_samples)
        if method.is_fd:
            return estimate_fd_values(zero, zero, config.h, method.coupling, method.two_sided)
        return estimate_gt(zero)
    return estimate_cell(method, inst, config.output, config.param_index, config.t_grid,
                         config.n_samples, config.seed, h=config.h if method.is_fd else None,
                         workers=workers, obs_index=k)


def ns_required(method: str, delta: float, N: float, gamma1: float = 1, gamma2: float = 1) -> float:
    """Relative number of paths needed for relative error ``delta`` (unit constant).

    FD: delta^(-2 - gamma2/gamma1) / N; CGT: delta^-2; GT: N delta^-2.
    ``method`` is ``GT``, ``CGT`` or ``FD`` (any FD variant name works).
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if N <= 0:
        raise ValueError("N must be positive")
    name = str(getattr(method, "value", method)).upper()
    if name == "GT":
        return N * delta**-2
    if name == "CGT":
        return delta**-2
    if name.startswith("FD"):
        if gamma1 < 1 or gamma2 not in (1, 2):
            raise ValueError("need gamma1 >= 1 and gamma2 in {1, 2}")
        return delta ** (-2 - gamma2 / gamma1) / N
    raise ValueError(f"unknown method {method!r}")


def optimal_h(N: float, Ns: float, gamma1: float, gamma2: float) -> float:
    """RE-minimizing FD step up to its unit constant: (N Ns)^(-1/(2 gamma1 + gamma2))."""
    if min(N, Ns, gamma1, gamma2) <= 0:
        raise ValueError("inputs must be positive")
    return (N * Ns) ** (-1.0 / (2 * gamma1 + gamma2))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(header_lines, columns, rows) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n" if line else "#\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def file_header(config_lines: Sequence[str]) -> list[str]:
    return [f"crnsens {__version__}"] + list(config_lines)


def report_csv(report: ScalingReport, config_lines: Sequence[str], model_name: str) -> str:
    cfg = report.config
    rows = []
    for r in report.rows:
        s = r.summary
        rows.append([model_name, str(cfg.output), r.method.value, r.N, s.n_samples, s.h,
                     s.point, s.std_error, s.rsd, s.sample_variance, s.rb, cfg.slope_window])
    return _csv_text(file_header(config_lines), REPORT_COLUMNS, rows)


def slopes_csv(report: ScalingReport, config_lines: Sequence[str]) -> str:
    rows = [[m.value, s, i, k] for m, (s, i, k) in report.slopes.items()]
    return _csv_text(file_header(config_lines), SLOPE_COLUMNS, rows)


def time_csv(report: TimeStudyReport, config_lines: Sequence[str], model_name: str) -> str:
    cfg = report.config
    rows = [[model_name, str(cfg.output), r.method.value, r.T, cfg.N, cfg.n_samples,
             cfg.h if r.method.is_fd else None, r.point, r.std_error, r.variance, r.truth]
            for r in report.rows]
    return _csv_text(file_header(config_lines), TIME_COLUMNS, rows)


def time_fit_csv(report: TimeStudyReport, config_lines: Sequence[str]) -> str:
    rows = [[m.value, a, b, r2, k] for m, (a, b, r2, k) in report.fits.items()]
    return _csv_text(file_header(config_lines), TIME_FIT_COLUMNS, rows)
