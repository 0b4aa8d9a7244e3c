"""Replica-based estimators with batch-means confidence intervals.

Every replica gets its own seed from ``replica_seed(master, tag, i)``, so
results do not depend on how replicas are spread across worker processes.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import _kernels as K
from .env import EAST, EnvKind, EnvParams, Kind, Ring, Segment, sample_equilibrium
from .graphical import kernel_keys, replica_seed
from .walkers import (_check_eps, config_rng, coupled_run, first_edge, run_walk, segment_config)

MIN_REPLICAS = 20
Z95 = 1.959963984540054


class InsufficientBudget(ValueError):
    """Too few replicas for a batch-means interval."""


@dataclass(frozen=True)
class EstimateWithCI:
    value: float
    se: float
    n_batches: int
    n: int = 0
    events: int = 0
    wall_s: float = 0.0

    @property
    def ci95(self) -> tuple[float, float]:
        return self.ci(0.95)

    def ci(self, level: float = 0.95) -> tuple[float, float]:
        z = Z95 if level == 0.95 else float(stats.norm.ppf(0.5 + level / 2))
        return self.value - z * self.se, self.value + z * self.se


def n_batches_for(n: int) -> int:
    return max(MIN_REPLICAS, n // 50)


def batch_means(values, events: int = 0, wall_s: float = 0.0) -> EstimateWithCI:
    """Mean of per-replica values with an SE from max(20, n/50) contiguous batches."""
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < MIN_REPLICAS:
        raise InsufficientBudget(f"need at least {MIN_REPLICAS} replicas, got {n}")
    nb = n_batches_for(n)
    means = np.array([b.mean() for b in np.array_split(x, nb)])
    se = float(means.std(ddof=1) / math.sqrt(nb))
    return EstimateWithCI(float(x.mean()), se, nb, n, int(events), float(wall_s))


def combined_se(*ests: EstimateWithCI) -> float:
    return math.sqrt(sum(e.se**2 for e in ests))


def default_workers() -> int:
    env = os.environ.get("EASTWALK_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def map_replicas(fn: Callable, tasks: Sequence, workers: int = 1) -> list:
    """``[fn(t) for t in tasks]``, optionally across processes, in task order."""
    if workers <= 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (8 * workers))
    with ProcessPoolExecutor(workers) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


# --------------------------------------------------------------- gaps ----

GAP_REFERENCE_L = 10


@lru_cache(maxsize=None)
def reference_gap(kind_tag: int, rho: float, gamma: float = 1.0, L: int = GAP_REFERENCE_L) -> float:
    """Exact spectral gap of the environment on a small ring (finite-volume surrogate)."""
    from .exact import build_env_generator, spectral_gap
    kind = EnvKind(Kind(kind_tag), gamma)
    return spectral_gap(build_env_generator(kind, L, rho), rho=rho).gap


def default_burn_in(kind: EnvKind, rho: float) -> float:
    return 10.0 / reference_gap(int(kind.tag), float(rho), kind.gamma)


# ----------------------------------------------------------- velocity ----

def _velocity_replica(task):
    kind, rho, L, eps, horizon, burn_in, seed = task
    cfg = sample_equilibrium(EnvParams(kind, rho, Ring(L)), config_rng(seed))
    run = run_walk(kind, rho, eps, cfg, horizon, seed, record_times=[burn_in, horizon])
    x_b, x_t = run.positions
    return (x_t - x_b) / (horizon - burn_in), run.env_events + run.walk_events


def estimate_velocity(env: EnvParams, eps: float, horizon: float, replicas: int,
                      burn_in: float | None = None, seed: int = 0, workers: int = 1,
                      tag: str = "velocity") -> EstimateWithCI:
    """Batch-means velocity from per-replica (X_T - X_b) / (T - b) on a ring."""
    eps = _check_eps(eps)
    if not env.topology.is_ring:
        raise ValueError("velocity is measured on a ring")
    if burn_in is None:
        burn_in = min(default_burn_in(env.kind, env.rho), horizon / 2)
    if not 0 <= burn_in < horizon:
        raise ValueError("burn-in must lie in [0, horizon)")
    if replicas < MIN_REPLICAS:
        raise InsufficientBudget(f"need at least {MIN_REPLICAS} replicas, got {replicas}")
    t0 = time.perf_counter()
    tasks = [(env.kind, env.rho, env.topology.L, eps, float(horizon), float(burn_in),
              replica_seed(seed, tag, i)) for i in range(replicas)]
    out = map_replicas(_velocity_replica, tasks, workers)
    vals = [v for v, _ in out]
    return batch_means(vals, sum(n for _, n in out), time.perf_counter() - t0)


# ------------------------------------------------------------ profile ----

@dataclass(frozen=True)
class ProfileEstimate:
    offsets: np.ndarray
    estimates: tuple[EstimateWithCI, ...]

    def __getitem__(self, x: int) -> EstimateWithCI:
        return self.estimates[int(x - self.offsets[0])]

    @property
    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.estimates])

    @property
    def ses(self) -> np.ndarray:
        return np.array([e.se for e in self.estimates])


def _profile_replica(task):
    kind, rho, L, eps, W, horizon, burn_in, seed = task
    cfg = sample_equilibrium(EnvParams(kind, rho, Ring(L)), config_rng(seed))
    run = run_walk(kind, rho, eps, cfg, horizon, seed, window=W, occupation_from=burn_in)
    return run.occupation / (horizon - burn_in), run.env_events + run.walk_events


def estimate_profile(env: EnvParams, eps: float, window: int, horizon: float, replicas: int,
                     burn_in: float | None = None, seed: int = 0, workers: int = 1,
                     tag: str = "profile") -> ProfileEstimate:
    """Time-averaged occupation of X_t + x for x in [-W, W] after burn-in."""
    eps = _check_eps(eps)
    L = env.topology.L
    if not env.topology.is_ring or window > L // 4:
        raise ValueError("profile needs a ring with W <= L/4")
    if burn_in is None:
        burn_in = min(default_burn_in(env.kind, env.rho), horizon / 2)
    if replicas < MIN_REPLICAS:
        raise InsufficientBudget(f"need at least {MIN_REPLICAS} replicas, got {replicas}")
    t0 = time.perf_counter()
    tasks = [(env.kind, env.rho, L, eps, int(window), float(horizon), float(burn_in),
              replica_seed(seed, tag, i)) for i in range(replicas)]
    out = map_replicas(_profile_replica, tasks, workers)
    prof = np.array([p for p, _ in out])
    events = sum(n for _, n in out)
    wall = time.perf_counter() - t0
    ests = tuple(batch_means(prof[:, j], events, wall) for j in range(prof.shape[1]))
    return ProfileEstimate(np.arange(-window, window + 1), ests)


# ---------------------------------------------------- u(s) and T_0 ----

def anchor_length(span: float) -> int:
    """Segment length that keeps a mid-segment anchor out of the boundary's reach."""
    return 64 * max(int(math.ceil(span)), 1)


def _t0_replica(task):
    rho, L, s_max, seed = task
    cfg = segment_config(Segment(L), rho, seed).bits.copy()
    a = L // 2
    t0 = K.first_legal_ring(cfg, kernel_keys(L), K.KIND_EAST, False, rho, 1.0, a,
                            np.uint64(seed), float(s_max), a)
    return t0


def sample_t0(rho: float, s_max: float, replicas: int, seed: int = 0, workers: int = 1,
              L: int | None = None, tag: str = "u-survival") -> np.ndarray:
    """First legal ring times at the middle of an East segment; +inf beyond s_max.

    Only sites right of the anchor are simulated: in the East model they
    never read anything to their left.
    """
    L = anchor_length(s_max) if L is None else L
    tasks = [(float(rho), int(L), float(s_max), replica_seed(seed, tag, i)) for i in range(replicas)]
    return np.array(map_replicas(_t0_replica, tasks, workers))


@dataclass(frozen=True)
class USurvivalEstimate:
    s_grid: np.ndarray
    estimates: tuple[EstimateWithCI, ...]
    rho: float
    t0: np.ndarray  # per-replica first legal ring times (inf = none before max(s_grid))

    @property
    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.estimates])

    @property
    def ses(self) -> np.ndarray:
        return np.array([e.se for e in self.estimates])


def u_from_t0(t0: np.ndarray, s_grid, rho: float) -> tuple[EstimateWithCI, ...]:
    s_grid = np.asarray(s_grid, dtype=float)
    c = -rho * (1.0 - rho)
    return tuple(batch_means(c * (t0 > s)) for s in s_grid)


def estimate_u(rho: float, s_grid, replicas: int, seed: int = 0, workers: int = 1,
               L: int | None = None) -> USurvivalEstimate:
    """u(s) = -rho(1-rho) P(T_0 > s), one T_0 per replica shared by every grid point."""
    s_grid = np.asarray(s_grid, dtype=float)
    if np.any(np.diff(s_grid) <= 0) or s_grid[0] < 0:
        raise ValueError("s_grid must be nonnegative and increasing")
    t0 = sample_t0(rho, float(s_grid[-1]), replicas, seed, workers, L)
    return USurvivalEstimate(s_grid, u_from_t0(t0, s_grid, rho), float(rho), t0)


# ------------------------------------------- segment time correlations ----

def _snapshot_replica(task):
    rho, L, times, y_max, seed = task
    cfg = segment_config(Segment(L), rho, seed).bits.copy()
    a = L // 2
    occ = np.zeros(L)
    snaps, n = K.env_run(cfg, kernel_keys(L), K.KIND_EAST, False, rho, 1.0, a, np.uint64(seed),
                         float(max(times)), np.asarray(times, dtype=float), a, a + y_max + 1, occ)
    return snaps


def segment_snapshots(rho: float, times: Sequence[float], y_max: int, replicas: int, seed: int,
                      workers: int = 1, tag: str = "snapshots") -> np.ndarray:
    """Occupations of anchor..anchor+y_max at the given times, shape (replicas, len(times), y_max+1).

    Times may include 0 (the initial configuration).  The anchor sits in the
    middle of a segment of length ``64 max(t_max, 1)``.
    """
    L = anchor_length(max(times))
    tasks = [(float(rho), L, tuple(float(t) for t in times), int(y_max), replica_seed(seed, tag, i))
             for i in range(replicas)]
    return np.array(map_replicas(_snapshot_replica, tasks, workers))


def correlator3(rho: float, t: float, s: float, y: int, replicas: int, seed: int = 0,
                workers: int = 1) -> EstimateWithCI:
    """E[xi_0(0) (2 xi_t(y) - 1) xi_{t+s}(0)] with site 0 a bulk anchor."""
    if y < 1 or t < 0 or s < 0:
        raise ValueError("need y >= 1 and t, s >= 0")
    snaps = segment_snapshots(rho, (0.0, t, t + s), y, replicas, seed, workers, tag="correlator3")
    vals = snaps[:, 0, 0] * (2.0 * snaps[:, 1, y] - 1.0) * snaps[:, 2, 0]
    return batch_means(vals)


def two_point(rho: float, t: float, y: int, replicas: int, seed: int = 0, workers: int = 1) -> EstimateWithCI:
    """E[xi_0(0) xi_t(y)]."""
    snaps = segment_snapshots(rho, (0.0, t), y, replicas, seed, workers, tag="two-point")
    return batch_means(snaps[:, 0, 0] * snaps[:, 1, y].astype(float))


def orientation_test(rho: float, t: float, y_list: Sequence[int], replicas: int, seed: int = 0,
                     workers: int = 1) -> dict[int, EstimateWithCI]:
    """E[(xi_0(0) - rho) xi_t(y)] for each y >= 1; zero for the East model."""
    if min(y_list) < 1:
        raise ValueError("offsets must be >= 1")
    snaps = segment_snapshots(rho, (0.0, t), max(y_list), replicas, seed, workers, tag="orientation")
    c = snaps[:, 0, 0] - rho
    return {int(y): batch_means(c * snaps[:, 1, y]) for y in y_list}


# ------------------------------------------------- edge walker / front ----

@dataclass(frozen=True)
class DriftEstimate:
    rho: float
    edge: EstimateWithCI
    front: EstimateWithCI
    violations: int
    breaks: int
    min_events: int
    censored: int


def _drift_replica(task):
    rho, L, horizon, start_gap, seed = task
    topo = Segment(L)
    cfg = segment_config(topo, rho, seed)
    start = L - start_gap
    lo = max(0, start - int(3 * horizon) - 64)
    r = coupled_run(rho, horizon, seed, topo, start=start, record_times=[horizon], lo=lo, config=cfg)
    return ((r.y[0] - r.y0) / horizon, (r.f[0] - r.f0) / horizon, r.violations, r.breaks,
            r.events, r.censored)


def estimate_edge_front(rho: float, horizon: float, replicas: int, seed: int = 0, L: int = 4096,
                        start_gap: int = 64, workers: int = 1) -> DriftEstimate:
    """Velocities of the coupled edge walker and front on an East segment.

    Both start ``start_gap`` sites from the right end.  Sites further left
    than three times the horizon are not simulated (the walker cannot reach
    them at the measured speeds; a run that does is censored and reported).
    """
    t0 = time.perf_counter()
    tasks = [(float(rho), int(L), float(horizon), int(start_gap), replica_seed(seed, "front", i))
             for i in range(replicas)]
    out = map_replicas(_drift_replica, tasks, workers)
    ok = [o for o in out if not o[5]]
    events = sum(o[4] for o in out)
    wall = time.perf_counter() - t0
    return DriftEstimate(float(rho), batch_means([o[0] for o in ok], events, wall),
                         batch_means([o[1] for o in ok], events, wall),
                         sum(o[2] for o in out), sum(o[3] for o in out), min(o[4] for o in out),
                         len(out) - len(ok))
