"""Exact path simulation: Gillespie's direct method and the random time change
(modified next reaction) method, plus coupled pairs for finite differences.

Both simulators run in numba kernels that release the GIL. A kernel either
records every event (for :class:`Trajectory`) or only snapshots the state,
reaction counts and cumulative propensities at a list of observation times
(for the batch routines used by the estimators and studies).
"""

from __future__ import annotations

import csv
import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numba as nb
import numpy as np

from .model import SystemInstance, propensity
from .randomness import Coupling, Leg, StreamKey, crn_keys, uniform_pair

__all__ = [
    "SimulationError",
    "Method",
    "Trajectory",
    "CoupledPair",
    "PathBatch",
    "DEFAULT_MAX_EVENTS",
    "simulate_direct",
    "simulate_rtc",
    "simulate_coupled",
    "simulate_batch",
    "simulate_coupled_batch",
    "state_at",
    "write_path_csv",
]

DEFAULT_MAX_EVENTS = 10**8

_OK = 0
_CAP = 1
_OVERFLOW = 2
_STATUS_TEXT = {_CAP: "event cap exceeded", _OVERFLOW: "propensity overflow"}


class SimulationError(RuntimeError):
    pass


class Method(enum.IntEnum):
    DIRECT = 0
    RTC = 1


@nb.njit(cache=True, nogil=True, inline="always")
def _propensities(x, reactants, crates, out):
    m, n = reactants.shape
    ok = True
    for j in range(m):
        comb = 1
        for i in range(n):
            k = reactants[j, i]
            if k > 0:
                xi = x[i]
                if xi < k:
                    comb = 0
                    break
                # exact at each step: product of t+1 consecutive ints
                c = 1
                for t in range(k):
                    c = c * (xi - t) // (t + 1)
                comb *= c
        a = crates[j] * np.float64(comb)
        if not np.isfinite(a):
            ok = False
        out[j] = a
    return ok


@nb.njit(cache=True, nogil=True)
def _grow(ev_t, ev_c, ev_int):
    size = max(16, 2 * ev_t.shape[0])
    t2 = np.empty(size, np.float64)
    c2 = np.empty(size, np.int64)
    i2 = np.empty((size, ev_int.shape[1]), np.float64)
    k = ev_t.shape[0]
    t2[:k] = ev_t
    c2[:k] = ev_c
    i2[:k] = ev_int
    return t2, c2, i2


@nb.njit(cache=True, nogil=True)
def _observe(x, counts, cum, a, t_now, obs_times, obs_i, t_limit, out_x, out_r, out_int):
    # snapshot every observation time strictly before t_limit
    n_obs = obs_times.shape[0]
    while obs_i < n_obs and obs_times[obs_i] < t_limit:
        dt = obs_times[obs_i] - t_now
        out_x[obs_i, :] = x
        out_r[obs_i, :] = counts
        for j in range(a.shape[0]):
            out_int[obs_i, j] = cum[j] + a[j] * dt
        obs_i += 1
    return obs_i


@nb.njit(cache=True, nogil=True)
def _run_path(method, reactants, stoich, crates, x0, obs_times, t_final,
              seed, traj, leg, max_events, record, out_x, out_r, out_int):
    """Simulate one path on [0, t_final].

    Returns (status, n_events, event_times, event_channels, event_integrals);
    the event arrays are only filled when ``record`` is set. Observation
    snapshots go to out_x (k, n), out_r (k, m), out_int (k, m).
    """
    m, n = reactants.shape
    x = x0.copy()
    counts = np.zeros(m, np.int64)
    cum = np.zeros(m, np.float64)
    a = np.empty(m, np.float64)
    t = 0.0
    obs_i = 0
    n_obs = obs_times.shape[0]
    n_ev = 0
    ev_t = np.empty(0, np.float64)
    ev_c = np.empty(0, np.int64)
    ev_int = np.empty((0, m), np.float64)
    if record:
        ev_t, ev_c, ev_int = _grow(ev_t, ev_c, ev_int)

    # random time change state: internal times and next firing times per clock
    pos = np.zeros(m, np.int64)
    buf = np.zeros(m, np.float64)
    nxt = np.zeros(m, np.float64)
    if method == 1:
        for j in range(m):
            u0, u1 = uniform_pair(seed, 0, traj, j + 1, leg)
            buf[j] = u1
            pos[j] = 1
            nxt[j] = -math.log(u0)

    block = 0
    status = 0
    while True:
        if not _propensities(x, reactants, crates, a):
            status = 2
            break
        if method == 0:
            a0 = 0.0
            for j in range(m):
                a0 += a[j]
            if a0 <= 0.0:
                break
            u0, u1 = uniform_pair(seed, block, traj, 0, leg)
            block += 1
            dt = -math.log(u0) / a0
            mu = m - 1
            target = u1 * a0
            acc = 0.0
            for j in range(m):
                acc += a[j]
                if target < acc and a[j] > 0.0:
                    mu = j
                    break
            # guard against rounding landing on a zero-rate tail channel
            while a[mu] <= 0.0:
                mu -= 1
        else:
            dt = np.inf
            mu = -1
            for j in range(m):
                if a[j] > 0.0:
                    d = (nxt[j] - cum[j]) / a[j]
                    if d < dt:
                        dt = d
                        mu = j
            if mu < 0:
                break
        t_new = t + dt
        if t_new > t_final:
            break
        if obs_i < n_obs and obs_times[obs_i] < t_new:
            obs_i = _observe(x, counts, cum, a, t, obs_times, obs_i, t_new, out_x, out_r, out_int)
        if n_ev >= max_events:
            status = 1
            break
        for j in range(m):
            cum[j] += a[j] * dt
        if method == 1:
            cum[mu] = nxt[mu]
            if pos[mu] % 2 == 0:
                u0, u1 = uniform_pair(seed, pos[mu] // 2, traj, mu + 1, leg)
                buf[mu] = u1
                u = u0
            else:
                u = buf[mu]
            pos[mu] += 1
            nxt[mu] += -math.log(u)
        t = t_new
        for i in range(n):
            x[i] += stoich[mu, i]
        counts[mu] += 1
        if record:
            if n_ev >= ev_t.shape[0]:
                ev_t, ev_c, ev_int = _grow(ev_t, ev_c, ev_int)
            ev_t[n_ev] = t
            ev_c[n_ev] = mu
            ev_int[n_ev, :] = cum
        n_ev += 1

    if status == 0:
        obs_i = _observe(x, counts, cum, a, t, obs_times, obs_i, np.inf, out_x, out_r, out_int)
    return status, n_ev, ev_t[:n_ev], ev_c[:n_ev], ev_int[:n_ev]


@nb.njit(cache=True, nogil=True)
def _run_batch(method, reactants, stoich, crates, x0, obs_times, seed, traj_start,
               leg, max_events, out_x, out_r, out_int, out_status):
    count = out_x.shape[0]
    t_final = obs_times[obs_times.shape[0] - 1]
    for p in range(count):
        res = _run_path(method, reactants, stoich, crates, x0, obs_times, t_final, seed,
                        traj_start + p, leg, max_events, False, out_x[p], out_r[p], out_int[p])
        out_status[p] = res[0]


def _kernel_args(instance: SystemInstance, rates=None):
    net = instance.network
    if rates is not None:
        instance = instance.with_rates(rates)
    return (net.reactant_matrix, net.stoichiometry, instance.stochastic_rates,
            instance.initial_state), instance


@dataclass(frozen=True)
class Trajectory:
    """Event record of one exact path.

    ``cumulative_propensity`` has one row per event (the integrals of every
    channel's propensity up to that event time) plus a final row at
    ``t_final``.
    """

    instance: SystemInstance
    initial_state: np.ndarray
    event_times: np.ndarray
    event_channels: np.ndarray
    t_final: float
    cumulative_propensity: np.ndarray

    @property
    def n_events(self) -> int:
        return int(self.event_times.shape[0])

    def _index(self, t: float) -> int:
        if not 0.0 <= t <= self.t_final:
            raise ValueError(f"t={t} outside [0, {self.t_final}]")
        return int(np.searchsorted(self.event_times, t, side="right"))

    def counts_at(self, t: float) -> np.ndarray:
        """Reaction counts R_j(t)."""
        k = self._index(t)
        return np.bincount(self.event_channels[:k], minlength=self.instance.network.n_reactions)

    def state_at(self, t: float) -> np.ndarray:
        return self.initial_state + self.counts_at(t) @ self.instance.network.stoichiometry

    def integral_at(self, t: float) -> np.ndarray:
        """Integrals of each propensity over [0, t]."""
        k = self._index(t)
        if k == self.n_events and t == self.t_final:
            return self.cumulative_propensity[-1].copy()
        t_k = self.event_times[k - 1] if k else 0.0
        base = self.cumulative_propensity[k - 1] if k else np.zeros(self.instance.network.n_reactions)
        x = self.state_at(t)
        a = np.array([propensity(self.instance, x, j) for j in range(self.instance.network.n_reactions)])
        return base + a * (t - t_k)

    def states(self) -> np.ndarray:
        """(n_events + 1, n) array: the initial state then the state after each event."""
        jumps = self.instance.network.stoichiometry[self.event_channels]
        return np.vstack([self.initial_state, self.initial_state + np.cumsum(jumps, axis=0)])


def state_at(trajectory: Trajectory, t: float) -> np.ndarray:
    """Right-continuous state X(t): the state after the last event at or before t."""
    return trajectory.state_at(t)


def _simulate(method, instance, t_final, key: StreamKey, rates, max_events):
    if not t_final > 0:
        raise ValueError("t_final must be positive")
    (reac, stoich, crates, x0), inst = _kernel_args(instance, rates)
    m, n = reac.shape
    obs = np.array([float(t_final)])
    ox = np.empty((1, n), np.int64)
    orr = np.empty((1, m), np.int64)
    oi = np.empty((1, m), np.float64)
    status, _, ev_t, ev_c, ev_int = _run_path(
        int(method), reac, stoich, crates, x0, obs, float(t_final), np.uint64(key.seed),
        key.trajectory_index, int(key.leg), int(max_events), True, ox, orr, oi)
    if status:
        raise SimulationError(_STATUS_TEXT[status])
    cum = np.vstack([ev_int, oi[0]])
    return Trajectory(inst, x0.copy(), ev_t.copy(), ev_c.copy(), float(t_final), cum)


def simulate_direct(instance: SystemInstance, t_final: float, key: StreamKey, rates=None,
                    max_events: int = DEFAULT_MAX_EVENTS) -> Trajectory:
    """Gillespie direct method; consumes two uniforms of ``key``'s stream per event."""
    return _simulate(Method.DIRECT, instance, t_final, key, rates, max_events)


def simulate_rtc(instance: SystemInstance, t_final: float, key: StreamKey, rates=None,
                 max_events: int = DEFAULT_MAX_EVENTS) -> Trajectory:
    """Random time change simulation driven by one unit-rate Poisson clock per channel.

    Channel ``j`` (0-based) reads only the stream with ``channel_index = j + 1``
    of ``key``'s seed, trajectory and leg.
    """
    return _simulate(Method.RTC, instance, t_final, key, rates, max_events)


@dataclass(frozen=True)
class CoupledPair:
    """Two paths differing only in one rate constant.

    For one-sided pairs ``nominal`` runs at c and ``perturbed`` at c + h.
    For two-sided pairs ``nominal`` runs at c - h and ``perturbed`` at c + h.
    """

    nominal: Trajectory
    perturbed: Trajectory
    coupling: Coupling
    h: float
    param_index: int
    two_sided: bool = False


def _leg_rates(instance, param_index, h, two_sided):
    base = instance.network.rates
    hi = base.copy()
    hi[param_index] += h
    lo = base.copy()
    if two_sided:
        lo[param_index] -= h
    if lo[param_index] <= 0 or hi[param_index] <= 0:
        raise ValueError("perturbed rate constant must stay positive")
    return lo, hi


def simulate_coupled(instance: SystemInstance, param_index: int, h: float, coupling,
                     t_final: float, seed: int, trajectory_index: int, two_sided: bool = False,
                     max_events: int = DEFAULT_MAX_EVENTS) -> CoupledPair:
    """One coupled pair of paths for a finite-difference sample.

    IRN: independent direct-method streams. CRN: both legs run the direct
    method on one shared uniform stream. CRP: both legs run the random time
    change method on shared per-channel clocks.
    """
    coupling = Coupling(coupling)
    lo, hi = _leg_rates(instance, param_index, h, two_sided)
    k_lo, k_hi = crn_keys(seed, trajectory_index, coupling, two_sided)
    sim = simulate_rtc if coupling is Coupling.CRP else simulate_direct
    nominal = sim(instance, t_final, k_lo, rates=lo, max_events=max_events)
    perturbed = sim(instance, t_final, k_hi, rates=hi, max_events=max_events)
    return CoupledPair(nominal, perturbed, coupling, float(h), int(param_index), two_sided)


@dataclass(frozen=True)
class PathBatch:
    """Snapshots of many independent paths at shared observation times.

    Arrays are indexed (path, observation, ...): ``states`` (p, k, n),
    ``counts`` (p, k, m), ``integrals`` (p, k, m). Path ``i`` used trajectory
    index ``trajectory_start + i``.
    """

    instance: SystemInstance
    obs_times: np.ndarray
    states: np.ndarray
    counts: np.ndarray
    integrals: np.ndarray
    seed: int
    trajectory_start: int

    @property
    def n_paths(self) -> int:
        return int(self.states.shape[0])

    def final_states(self) -> np.ndarray:
        return self.states[:, -1, :]

    def weights(self, param_index: int) -> np.ndarray:
        """Girsanov weights (R_j - int a_j ds) / c_j, shape (p, k)."""
        c = self.instance.network.reactions[param_index].rate_const
        if c <= 0:
            raise ValueError("weight undefined at a zero rate constant")
        return (self.counts[:, :, param_index] - self.integrals[:, :, param_index]) / c


def _chunks(n_paths, workers):
    # chunking never affects results: each path depends only on its index
    size = max(1, min(4096, -(-n_paths // max(1, workers * 4))))
    return [(s, min(size, n_paths - s)) for s in range(0, n_paths, size)]


def simulate_batch(instance: SystemInstance, obs_times, n_paths: int, seed: int,
                   method=Method.DIRECT, leg=Leg.NOMINAL, rates=None, trajectory_start: int = 0,
                   workers: int = 1, max_events: int = DEFAULT_MAX_EVENTS) -> PathBatch:
    """Simulate ``n_paths`` independent paths, snapshotting at ``obs_times``.

    The last observation time is the final time. Output is identical for
    every ``workers`` value.
    """
    obs = np.asarray(obs_times, dtype=np.float64).reshape(-1)
    if obs.size == 0 or np.any(np.diff(obs) < 0) or obs[0] < 0 or not obs[-1] > 0:
        raise ValueError("observation times must be nondecreasing, nonnegative, ending above 0")
    (reac, stoich, crates, x0), inst = _kernel_args(instance, rates)
    m, n = reac.shape
    k = obs.shape[0]
    xs = np.empty((n_paths, k, n), np.int64)
    rs = np.empty((n_paths, k, m), np.int64)
    ints = np.empty((n_paths, k, m), np.float64)
    st = np.zeros(n_paths, np.int64)

    def work(chunk):
        s, c = chunk
        _run_batch(int(method), reac, stoich, crates, x0, obs, np.uint64(seed),
                   trajectory_start + s, int(leg), int(max_events),
                   xs[s:s + c], rs[s:s + c], ints[s:s + c], st[s:s + c])

    chunks = _chunks(n_paths, workers)
    if workers <= 1:
        for ch in chunks:
            work(ch)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, chunks))
    bad = np.flatnonzero(st)
    if bad.size:
        raise SimulationError(f"path {trajectory_start + bad[0]}: {_STATUS_TEXT[int(st[bad[0]])]}")
    return PathBatch(inst, obs, xs, rs, ints, int(seed), int(trajectory_start))


def simulate_coupled_batch(instance: SystemInstance, param_index: int, h: float, coupling,
                           obs_times, n_pairs: int, seed: int, two_sided: bool = False,
                           workers: int = 1, max_events: int = DEFAULT_MAX_EVENTS):
    """Both legs of ``n_pairs`` coupled pairs as a (lower, upper) pair of batches."""
    coupling = Coupling(coupling)
    lo, hi = _leg_rates(instance, param_index, h, two_sided)
    k_lo, k_hi = crn_keys(seed, 0, coupling, two_sided)
    method = Method.RTC if coupling is Coupling.CRP else Method.DIRECT
    common = dict(obs_times=obs_times, n_paths=n_pairs, seed=seed, method=method,
                  workers=workers, max_events=max_events)
    lower = simulate_batch(instance, leg=k_lo.leg, rates=lo, **common)
    upper = simulate_batch(instance, leg=k_hi.leg, rates=hi, **common)
    return lower, upper


def write_path_csv(trajectory: Trajectory, path) -> None:
    """Write ``time,channel,state_1..state_n``; the first row is the initial state.

    Channels are written 1-based; the initial row has an empty channel.
    """
    n = trajectory.instance.network.n_species
    states = trajectory.states()
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "channel"] + [f"state_{i + 1}" for i in range(n)])
        w.writerow([repr(0.0), ""] + states[0].tolist())
        for t, ch, row in zip(trajectory.event_times, trajectory.event_channels, states[1:]):
            w.writerow([repr(float(t)), int(ch) + 1] + row.tolist())
