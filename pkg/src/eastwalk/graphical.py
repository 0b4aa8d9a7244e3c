"""Graphical construction: per-site Poisson clocks carrying Bernoulli(rho) coins.

The n-th ring of site ``x`` and its coin are pure functions of
``(seed, x, n)``, generated lazily, so two processes built on the same
:class:`EventSchedule` see the same clocks and coins.  The pure-Python
event loop here is the readable reference; the estimators run the compiled
loops in :mod:`eastwalk._kernels`, which consume exactly the same streams.
"""

from __future__ import annotations

import heapq
import math
import zlib
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator

import numpy as np

from . import _kernels as K
from .env import EnvKind, SpinConfiguration, constraint

MAX_HORIZON = 2.0**40
WALKER = -1  # pseudo-site of the walker clock


class ScheduleExhausted(RuntimeError):
    """No event is available before the schedule's horizon."""


@dataclass(frozen=True)
class ClockEvent:
    time: float
    site: int
    coin: int
    mark: float  # the uniform the coin was drawn from

    @property
    def is_walker(self) -> bool:
        return self.site == WALKER


@dataclass(frozen=True)
class EventOutcome:
    legal: bool
    flipped: bool
    old_value: int
    new_value: int


def replica_seed(master: int, command: str, index: int) -> int:
    """Per-replica 64-bit seed; depends only on (master, command, index)."""
    tag = zlib.crc32(command.encode())
    ss = np.random.SeedSequence([int(master) % 2**64, tag, int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class _Stream:
    __slots__ = ("key", "rate", "times", "_marks")

    def __init__(self, key: int, rate: float):
        self.key = np.uint64(key)
        self.rate = float(rate)
        self.times = np.empty(0)
        self._marks = np.empty(0)

    def extend_past(self, seed, t: float):
        while self.times.size == 0 or self.times[-1] <= t:
            n_old = self.times.size
            n_new = max(64, n_old)
            last = self.times[-1] if n_old else 0.0
            more = K.ring_times(seed, self.key, self.rate, n_old, last, n_new)
            self.times = np.concatenate([self.times, more])

    def mark(self, seed, index: int) -> float:
        if index >= self._marks.size:
            n = max(index + 1, 2 * self._marks.size, 64)
            self._marks = K.marks(seed, self.key, 0, n)
        return float(self._marks[index])


class EventSchedule:
    """Lazily generated clock rings on ``n_sites`` sites up to ``horizon``.

    ``rate`` is the per-site clock rate (1 for the constrained kinds).  With
    ``walker=True`` an extra rate-1 clock, reported as site ``WALKER``, drives
    a random walker.  ``keys`` maps sites to stream keys; passing reversed
    keys together with ``mirror=True`` gives the space-reflected schedule.
    """

    def __init__(self, n_sites: int, horizon: float, seed: int, rho: float, rate: float = 1.0,
                 walker: bool = False, keys: Iterable[int] | None = None, mirror: bool = False):
        if not 0 < horizon <= MAX_HORIZON:
            raise ValueError(f"horizon must lie in (0, 2^40], got {horizon}")
        if not 0.0 < rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {rho}")
        self.n_sites = int(n_sites)
        self.horizon = float(horizon)
        self.seed = np.uint64(int(seed) % 2**64)
        self.rho = float(rho)
        self.rate = float(rate)
        self.walker = walker
        self.mirror = mirror
        if keys is None:
            self.keys = np.arange(self.n_sites, dtype=np.uint64)
        else:
            self.keys = np.asarray(list(keys), dtype=np.uint64)
            if self.keys.size != self.n_sites:
                raise ValueError("one stream key per site required")
        self._streams = [_Stream(k, self.rate) for k in self.keys]
        if walker:
            self._streams.append(_Stream(int(K.WALKER_KEY), 1.0))

    @classmethod
    def reflected(cls, other: "EventSchedule") -> "EventSchedule":
        """Site x takes the clocks of site L-1-x; walker marks become 1 - u."""
        return cls(other.n_sites, other.horizon, int(other.seed), other.rho, other.rate,
                   other.walker, keys=other.keys[::-1], mirror=not other.mirror)

    def _site_of(self, item: int) -> int:
        return WALKER if item == self.n_sites else item

    def _event(self, item: int, index: int) -> ClockEvent:
        stream = self._streams[item]
        u = stream.mark(self.seed, index)
        site = self._site_of(item)
        if site == WALKER and self.mirror:
            u = 1.0 - u
        coin = 1 if u < self.rho else 0
        return ClockEvent(float(stream.times[index]), site, coin, u)

    def next_event(self, after: float) -> ClockEvent:
        if after >= self.horizon:
            raise ScheduleExhausted(f"query at t={after} is past the horizon {self.horizon}")
        best = None
        for item, stream in enumerate(self._streams):
            stream.extend_past(self.seed, after)
            idx = int(np.searchsorted(stream.times, after, side="right"))
            key = (stream.times[idx], item)
            if best is None or key < best[0]:
                best = (key, item, idx)
        (t, _), item, idx = best
        if t > self.horizon:
            raise ScheduleExhausted(f"no event in ({after}, {self.horizon}]")
        return self._event(item, idx)

    def events(self, until: float | None = None) -> Iterator[ClockEvent]:
        """All events with time <= ``until`` (default: the horizon), in order."""
        until = self.horizon if until is None else until
        if until > self.horizon:
            raise ScheduleExhausted(f"requested {until} beyond horizon {self.horizon}")
        heap = []
        for item, stream in enumerate(self._streams):
            stream.extend_past(self.seed, 0.0)
            heap.append((stream.times[0], item, 0))
        heapq.heapify(heap)
        while heap:
            t, item, idx = heapq.heappop(heap)
            if t > until:
                return
            yield self._event(item, idx)
            stream = self._streams[item]
            if idx + 1 >= stream.times.size:
                stream.extend_past(self.seed, t)
            heapq.heappush(heap, (stream.times[idx + 1], item, idx + 1))


def next_event(schedule: EventSchedule, after: float) -> ClockEvent:
    return schedule.next_event(after)


def apply_event(config: SpinConfiguration, kind: EnvKind, event: ClockEvent):
    """Refresh the rung site to the event's coin if its constraint holds."""
    site = config.topology.check_site(event.site)
    old = config[site]
    if constraint(kind, config, site) == 1:
        new_config = config if event.coin == old else config.with_site(site, event.coin)
        return new_config, EventOutcome(True, event.coin != old, old, event.coin)
    return config, EventOutcome(False, False, old, old)


Observer = Callable[[float, ClockEvent, EventOutcome, SpinConfiguration], None]


def evolve(config: SpinConfiguration, kind: EnvKind, schedule: EventSchedule,
           observers: Iterable[Observer] = (), until: float | None = None) -> SpinConfiguration:
    """Apply the schedule's environment events in time order.

    Observers are called with (time, event, outcome, post-event config).
    Walker-clock events, if the schedule has any, are skipped.
    """
    observers = list(observers)
    for ev in schedule.events(until):
        if ev.is_walker:
            continue
        config, outcome = apply_event(config, kind, ev)
        for obs in observers:
            obs(ev.time, ev, outcome, config)
    return config


def first_legal_ring_time(config: SpinConfiguration, kind: EnvKind, schedule: EventSchedule,
                          site: int) -> float:
    site = config.topology.check_site(site)
    for ev in schedule.events():
        if ev.is_walker:
            continue
        config, outcome = apply_event(config, kind, ev)
        if ev.site == site and outcome.legal:
            return ev.time
    return math.inf


def kernel_keys(L: int, reflected: bool = False) -> np.ndarray:
    keys = np.arange(L, dtype=np.uint64)
    return keys[::-1].copy() if reflected else keys


def evolve_fast(config: SpinConfiguration, kind: EnvKind, rho: float, horizon: float, seed: int,
                snap_times=(), lo: int = 0):
    """Compiled counterpart of :func:`evolve`.

    Returns (final configuration, snapshots at ``snap_times``, rings
    processed, occupation time per site).  ``lo > 0`` simulates only sites
    ``lo..L-1`` and is restricted to East on a segment, where no site depends
    on its left neighbour.
    """
    topo = config.topology
    if lo and (topo.is_ring or kind.tag.name != "EAST"):
        raise ValueError("partial windows are only exact for East on a segment")
    cfg = config.bits.copy()
    occ = np.zeros(topo.L)
    snaps, n = K.env_run(cfg, kernel_keys(topo.L), int(kind.tag), topo.is_ring, float(rho),
                         kind.clock_rate, int(lo), np.uint64(seed), float(horizon),
                         np.asarray(snap_times, dtype=float), 0, topo.L, occ)
    return SpinConfiguration(cfg, topo), snaps, int(n), occ
