"""Walkers driven by the graphical construction.

* the eps-random walk on a ring, jointly with its environment;
* the degenerate edge walker of the East model, which sits on a
  particle-hole edge and is pushed around by flips at the edge;
* the East front, a tracked zero that moves right on a legal refresh to 1
  and left whenever its left neighbour refreshes to 0.

Walker clocks are a separate rate-1 stream: at each ring the walker steps
right iff its mark is below ``1/2 + eps (2 occ - 1)``.  Positions are kept
as unwrapped int64, which is exact for any reachable horizon.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernels as K
from .env import (EAST, EnvKind, EnvParams, Kind, Segment, SpinConfiguration, Topology,
                  sample_equilibrium)
from .graphical import ClockEvent, EventSchedule, apply_event, kernel_keys


class ParameterError(ValueError):
    """A walker parameter lies outside its admissible range."""


class BoundaryHit(RuntimeError):
    """A segment walker came too close to the end of the simulated window."""


BOUNDARY_MARGIN = 2


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not abs(eps) <= 0.5:
        raise ParameterError(f"epsilon must lie in [-1/2, 1/2], got {eps}")
    return eps


@dataclass(frozen=True)
class WalkerParams:
    eps: float

    def __post_init__(self):
        _check_eps(self.eps)


def walker_rates(eps: float, occ: int) -> tuple[float, float]:
    eps = _check_eps(eps)
    b = eps * (2 * occ - 1)
    return 0.5 + b, 0.5 - b


def local_drift(eps: float, occ: int) -> float:
    eps = _check_eps(eps)
    return 2.0 * eps * (2 * occ - 1)


def config_rng(seed: int) -> np.random.Generator:
    """Generator for initial configurations, independent of the clock streams."""
    return np.random.default_rng([int(seed) % 2**64, 0x1A17])


# ------------------------------------------------------------- eps-walk ----

@dataclass(frozen=True)
class JointState:
    config: SpinConfiguration
    x: int
    t: float

    @property
    def site(self) -> int:
        return self.x % self.config.L


def evolve_joint(params: EnvParams, eps: float, horizon: float, seed: int,
                 observers: Iterable[Callable[[JointState], None]] = (),
                 config: SpinConfiguration | None = None, x0: int = 0,
                 schedule: EventSchedule | None = None) -> list[JointState]:
    """Reference event loop for the walker and its environment.

    Returns the trajectory as the list of states after every change
    (initial state first); each observer sees every state in that order.
    """
    eps = _check_eps(eps)
    topo = params.topology
    if not topo.is_ring:
        raise ParameterError("the eps-walk runs on a ring")
    if config is None:
        config = sample_equilibrium(params, config_rng(seed))
    if schedule is None:
        schedule = EventSchedule(topo.L, horizon, seed, params.rho, params.kind.clock_rate, walker=True)
    observers = list(observers)
    state = JointState(config, int(x0), 0.0)
    traj = [state]
    for obs in observers:
        obs(state)
    for ev in schedule.events(horizon):
        cfg, x = state.config, state.x
        if ev.is_walker:
            p_right = 0.5 + eps * (2 * cfg[x % topo.L] - 1)
            x = x + 1 if ev.mark < p_right else x - 1
        else:
            cfg, outcome = apply_event(cfg, params.kind, ev)
            if not outcome.flipped:
                continue
        state = JointState(cfg, x, ev.time)
        traj.append(state)
        for obs in observers:
            obs(state)
    return traj


@dataclass
class WalkRun:
    """Output of the compiled walker loop."""
    positions: np.ndarray     # X at each record time
    occupation: np.ndarray    # time integral of xi(X + j), j = -W..W (empty when W < 0)
    env_events: int
    walk_events: int
    final_config: np.ndarray


def run_walk(kind: EnvKind, rho: float, eps: float, config: SpinConfiguration, horizon: float,
             seed: int, record_times: Sequence[float] = (), window: int = -1,
             occupation_from: float = 0.0, x0: int = 0, reflected: bool = False) -> WalkRun:
    """Compiled joint evolution on a ring.

    ``reflected`` uses the space-reflected schedule: site x reads the clocks
    of site L-1-x and walker marks u become 1-u.
    """
    eps = _check_eps(eps)
    topo = config.topology
    if not topo.is_ring:
        raise ParameterError("the eps-walk runs on a ring")
    if window >= 0 and 2 * window + 1 > topo.L:
        raise ParameterError("profile window wider than the ring")
    cfg = config.bits.copy()
    rec = np.asarray(record_times, dtype=float)
    xrec, acc, ne, nw = K.walk_ring(cfg, kernel_keys(topo.L, reflected), int(kind.tag), float(rho),
                                    kind.clock_rate, eps, int(x0), float(horizon),
                                    np.uint64(int(seed) % 2**64), reflected, rec, int(window),
                                    float(occupation_from))
    return WalkRun(xrec, acc, int(ne), int(nw), cfg)


# ------------------------------------------------- edge walker and front ----

@dataclass(frozen=True)
class EdgeWalkerState:
    config: SpinConfiguration
    y: float  # edge position, a half-integer
    t: float

    @property
    def left(self) -> int:
        return int(self.y - 0.5)


@dataclass(frozen=True)
class FrontState:
    config: SpinConfiguration
    f: int
    t: float


STATUS_NAMES = {K.STATUS_OK: "ok", K.STATUS_LEFT_BOUNDARY: "left-boundary",
                K.STATUS_RIGHT_BOUNDARY: "right-boundary"}


@dataclass
class EdgeFrontRun:
    record_times: np.ndarray
    y: np.ndarray | None       # edge walker positions (half-integers), None if not tracked
    f: np.ndarray | None       # front positions, None if not tracked
    violations: int            # rings after which f < y + 1/2
    breaks: int                # rings after which an edge/front invariant failed
    events: int
    status: str
    t_stop: float
    y0: float | None = None
    f0: int | None = None

    @property
    def censored(self) -> bool:
        return self.status != "ok"


def first_edge(config: SpinConfiguration, start: int) -> int:
    """Lowest k >= start with a particle at k and a hole at k+1 (ghost counts as hole)."""
    b = config.bits
    L = config.L
    for k in range(start, L):
        if b[k] == 1 and (k + 1 == L or b[k + 1] == 0):
            return k
    raise ValueError(f"no particle-hole edge at or right of site {start}")


def first_hole(config: SpinConfiguration, start: int) -> int:
    b = config.bits
    for k in range(start, config.L):
        if b[k] == 0:
            return k
    raise ValueError(f"no hole at or right of site {start}")


def segment_config(topology: Topology, rho: float, seed: int) -> SpinConfiguration:
    return sample_equilibrium(EnvParams(EAST, rho, topology), config_rng(seed))


def _edge_front(config: SpinConfiguration, rho: float, horizon: float, seed: int,
                e0: int, f0: int, record_times, lo: int, margin: int) -> EdgeFrontRun:
    topo = config.topology
    if topo.is_ring:
        raise ParameterError("edge walker and front live on a segment")
    cfg = config.bits.copy()
    rec = np.asarray(record_times, dtype=float)
    erec, frec, viol, brk, ev, status, t_stop = K.edge_front_run(
        cfg, kernel_keys(topo.L), float(rho), int(lo), np.uint64(int(seed) % 2**64), float(horizon),
        int(e0), int(f0), rec, int(margin))
    return EdgeFrontRun(rec, erec + 0.5 if e0 >= 0 else None, frec if f0 >= 0 else None,
                        int(viol), int(brk), int(ev), STATUS_NAMES[int(status)], float(t_stop),
                        e0 + 0.5 if e0 >= 0 else None, f0 if f0 >= 0 else None)


def evolve_degenerate(rho: float, topology: Topology, horizon: float, seed: int, start: int | None = None,
                      record_times=(), lo: int = 0, margin: int = BOUNDARY_MARGIN,
                      config: SpinConfiguration | None = None) -> EdgeFrontRun:
    """Degenerate edge walker in an East environment on a segment.

    The walker starts on the first particle-hole edge at or right of
    ``start`` (default: the middle).  Only sites ``lo..L-1`` are simulated;
    a left jump that lands within ``margin`` sites of ``lo`` censors the run.
    """
    if config is None:
        config = segment_config(topology, rho, seed)
    start = topology.L // 2 if start is None else start
    e0 = first_edge(config, start)
    return _edge_front(config, rho, horizon, seed, e0, -1, record_times, lo, margin)


def evolve_front(rho: float, topology: Topology, horizon: float, seed: int, start: int | None = None,
                 record_times=(), lo: int = 0, margin: int = BOUNDARY_MARGIN,
                 config: SpinConfiguration | None = None) -> EdgeFrontRun:
    """East front started on the first hole at or right of ``start``."""
    if config is None:
        config = segment_config(topology, rho, seed)
    start = topology.L // 2 if start is None else start
    f0 = first_hole(config, start)
    return _edge_front(config, rho, horizon, seed, -1, f0, record_times, lo, margin)


def coupled_run(rho: float, horizon: float, seed: int, topology: Topology = Segment(4096),
                start: int | None = None, record_times=(), lo: int = 0,
                margin: int = BOUNDARY_MARGIN, config: SpinConfiguration | None = None) -> EdgeFrontRun:
    """Edge walker and front on one environment path, with F_0 = Y_0 + 1/2."""
    if config is None:
        config = segment_config(topology, rho, seed)
    start = topology.L // 2 if start is None else start
    e0 = first_edge(config, start)
    return _edge_front(config, rho, horizon, seed, e0, e0 + 1, record_times, lo, margin)


def edge_front_reference(config: SpinConfiguration, schedule: EventSchedule, e0: int | None,
                         f0: int | None, margin: int = BOUNDARY_MARGIN,
                         observers: Iterable[Callable[[float, ClockEvent, object, object], None]] = ()):
    """Pure-Python edge walker / front loop; returns (edge states, front states, violations).

    Stops early, returning what it has, when a tracker comes within
    ``margin`` of either end.
    """
    L = config.L
    observers = list(observers)
    e, f = e0, f0
    edges = [EdgeWalkerState(config, e + 0.5, 0.0)] if e is not None else []
    fronts = [FrontState(config, f, 0.0)] if f is not None else []
    violations = 0
    for ev in schedule.events():
        if ev.is_walker:
            continue
        config, outcome = apply_event(config, EAST, ev)
        s, coin = ev.site, ev.coin
        if e is not None:
            moved = False
            if s == e and coin == 0:
                k = 1
                while e - k >= 0 and config[e - k] == 0:
                    k += 1
                if e - k < margin:
                    break
                e -= k
                moved = True
            elif s == e + 1 and outcome.legal and coin == 1:
                e += 1
                moved = True
                if e + 1 >= L - margin:
                    break
            if moved:
                edges.append(EdgeWalkerState(config, e + 0.5, ev.time))
        if f is not None:
            if s == f and outcome.legal and coin == 1:
                f += 1
                if f >= L - margin:
                    break
                fronts.append(FrontState(config, f, ev.time))
            elif s == f - 1 and coin == 0:
                f -= 1
                if f < margin:
                    break
                fronts.append(FrontState(config, f, ev.time))
        if e is not None and f is not None and f < e + 1:
            violations += 1
        for obs in observers:
            obs(ev.time, ev, e, f)
    return edges, fronts, violations
