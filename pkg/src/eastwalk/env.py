"""Environment kinds, kinetic constraints, lattice windows and equilibrium sampling.

Spins are occupation numbers in {0, 1}. Sites are 0-based. On a ``Segment``
the lattice is padded with permanently empty ghost sites just outside both
ends, so the East constraint of site ``L-1`` and the West constraint of site
``0`` are always satisfied.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

MAX_SAMPLING_RETRIES = 10**6


class ConfigurationSamplingError(RuntimeError):
    """Rejection sampling of an admissible configuration did not terminate."""


class Kind(enum.IntEnum):
    # integer values are shared with the compiled kernels
    EAST = 0
    WEST = 1
    FA1F = 2
    INDEPENDENT = 3


class Shape(enum.Enum):
    RING = "ring"
    SEGMENT = "segment"


@dataclass(frozen=True)
class EnvKind:
    """Environment dynamics.

    ``gamma`` is the refresh-clock rate of the unconstrained independent
    spin-flip model; the constrained kinds always use rate-1 clocks.
    """

    tag: Kind
    gamma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "tag", Kind(self.tag))
        if self.tag is Kind.INDEPENDENT and not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    @property
    def constrained(self) -> bool:
        return self.tag is not Kind.INDEPENDENT

    @property
    def clock_rate(self) -> float:
        return self.gamma if self.tag is Kind.INDEPENDENT else 1.0

    @classmethod
    def parse(cls, name: str, gamma: float = 1.0) -> "EnvKind":
        aliases = {
            "east": Kind.EAST,
            "west": Kind.WEST,
            "fa1f": Kind.FA1F,
            "fa": Kind.FA1F,
            "independent": Kind.INDEPENDENT,
            "isf": Kind.INDEPENDENT,
            "independentspinflip": Kind.INDEPENDENT,
        }
        key = name.lower().replace("-", "").replace("_", "")
        if key not in aliases:
            raise ValueError(f"unknown environment kind {name!r}")
        return cls(aliases[key], gamma)

    @property
    def name(self) -> str:
        return self.tag.name.lower()


EAST = EnvKind(Kind.EAST)
WEST = EnvKind(Kind.WEST)
FA1F = EnvKind(Kind.FA1F)


def independent(gamma: float = 1.0) -> EnvKind:
    return EnvKind(Kind.INDEPENDENT, gamma)


@dataclass(frozen=True)
class Topology:
    shape: Shape
    L: int

    def __post_init__(self):
        object.__setattr__(self, "shape", Shape(self.shape))
        if int(self.L) != self.L or self.L < 3:
            raise ValueError(f"lattice size must be an integer >= 3, got {self.L}")
        object.__setattr__(self, "L", int(self.L))

    @property
    def is_ring(self) -> bool:
        return self.shape is Shape.RING

    def check_site(self, site: int) -> int:
        if not 0 <= site < self.L:
            raise IndexError(f"site {site} outside [0, {self.L})")
        return int(site)


def Ring(L: int) -> Topology:
    return Topology(Shape.RING, L)


def Segment(L: int) -> Topology:
    return Topology(Shape.SEGMENT, L)


class SpinConfiguration:
    """Immutable occupancy vector on a finite lattice window."""

    __slots__ = ("_bits", "topology")

    def __init__(self, bits, topology: Topology):
        arr = np.array(bits, dtype=np.uint8).ravel()
        if arr.size != topology.L:
            raise ValueError(f"expected {topology.L} sites, got {arr.size}")
        if np.any(arr > 1):
            raise ValueError("occupation values must be 0 or 1")
        arr.setflags(write=False)
        self._bits = arr
        self.topology = topology

    @property
    def bits(self) -> np.ndarray:
        return self._bits

    @property
    def L(self) -> int:
        return self.topology.L

    def __getitem__(self, site: int) -> int:
        return int(self._bits[site])

    def __len__(self) -> int:
        return self.topology.L

    def __eq__(self, other):
        if not isinstance(other, SpinConfiguration):
            return NotImplemented
        return self.topology == other.topology and np.array_equal(self._bits, other._bits)

    def __hash__(self):
        return hash((self.topology, self._bits.tobytes()))

    def __repr__(self):
        s = "".join(map(str, self._bits.tolist()))
        return f"SpinConfiguration({s!r}, {self.topology.shape.value}, L={self.L})"

    def with_site(self, site: int, value: int) -> "SpinConfiguration":
        arr = self._bits.copy()
        arr[site] = value
        return SpinConfiguration(arr, self.topology)

    def reversed(self) -> "SpinConfiguration":
        return SpinConfiguration(self._bits[::-1], self.topology)

    def to_code(self) -> int:
        """Bit ``x`` of the returned integer is the occupation of site ``x``."""
        return int(np.dot(self._bits.astype(np.int64), 1 << np.arange(self.L, dtype=np.int64)))

    @classmethod
    def from_code(cls, code: int, topology: Topology) -> "SpinConfiguration":
        bits = (int(code) >> np.arange(topology.L)) & 1
        return cls(bits, topology)


@dataclass(frozen=True)
class EnvParams:
    kind: EnvKind
    rho: float
    topology: Topology

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"density rho must lie in the open interval (0, 1), got {self.rho}")


def _needs_a_zero(kind: EnvKind, topology: Topology) -> bool:
    return kind.constrained and topology.is_ring


def sample_equilibrium(params: EnvParams, rng: np.random.Generator) -> SpinConfiguration:
    """Draw from the Bernoulli(rho) product measure.

    On a ring with a constrained kind the all-ones configuration never
    moves, so it is rejected and redrawn.
    """
    L = params.topology.L
    reject_full = _needs_a_zero(params.kind, params.topology)
    for _ in range(MAX_SAMPLING_RETRIES):
        bits = (rng.random(L) < params.rho).astype(np.uint8)
        if not (reject_full and bits.all()):
            return SpinConfiguration(bits, params.topology)
    raise ConfigurationSamplingError(
        f"no admissible configuration after {MAX_SAMPLING_RETRIES} draws (rho={params.rho}, L={L})"
    )


def _neighbour(config: SpinConfiguration, site: int) -> int:
    topo = config.topology
    if topo.is_ring:
        return config[site % topo.L]
    if 0 <= site < topo.L:
        return config[site]
    return 0  # ghost site


def constraint(kind: EnvKind, config: SpinConfiguration, site: int) -> int:
    site = config.topology.check_site(site)
    tag = kind.tag
    if tag is Kind.EAST:
        return 1 - _neighbour(config, site + 1)
    if tag is Kind.WEST:
        return 1 - _neighbour(config, site - 1)
    if tag is Kind.FA1F:
        return 1 - _neighbour(config, site - 1) * _neighbour(config, site + 1)
    return 1


def flip_rate(kind: EnvKind, config: SpinConfiguration, site: int, rho: float) -> float:
    """Rate at which ``site`` changes value in ``config``.

    Every kind refreshes a site to Bernoulli(rho) when its clock rings and
    its constraint holds, so the flip rate is clock rate x constraint x
    probability that the refresh lands on the opposite value.
    """
    c = constraint(kind, config, site)
    occ = config[site]
    return kind.clock_rate * c * (rho * (1 - occ) + (1.0 - rho) * occ)
