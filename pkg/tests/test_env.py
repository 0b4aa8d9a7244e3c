import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eastwalk.env import (EAST, FA1F, WEST, ConfigurationSamplingError, EnvKind, EnvParams, Kind, Ring,
                          Segment, SpinConfiguration, constraint, flip_rate, independent,
                          sample_equilibrium)

from conftest import ALL_KINDS

bits_and_site = st.integers(3, 12).flatmap(
    lambda L: st.tuples(st.lists(st.integers(0, 1), min_size=L, max_size=L), st.integers(0, L - 1)))


def test_equilibrium_mean(rng):
    p = EnvParams(EAST, 0.5, Segment(8))
    draws = np.array([sample_equilibrium(p, rng).bits for _ in range(100_000)])
    assert abs(draws.mean() - 0.5) < 0.005


def test_ring_rejects_all_ones(rng):
    p = EnvParams(EAST, 0.95, Ring(3))
    for _ in range(2000):
        assert sample_equilibrium(p, rng).bits.min() == 0


def test_isf_ring_keeps_all_ones():
    p = EnvParams(independent(), 0.999, Ring(3))
    r = np.random.default_rng(0)
    assert any(sample_equilibrium(p, r).bits.all() for _ in range(200))


def test_sampling_deterministic():
    p = EnvParams(EAST, 0.6, Ring(10))
    a = sample_equilibrium(p, np.random.default_rng(42))
    b = sample_equilibrium(p, np.random.default_rng(42))
    assert a == b


def test_sampling_gives_up():
    p = EnvParams(EAST, 1 - 1e-15, Ring(3))
    with pytest.raises(ConfigurationSamplingError):
        sample_equilibrium(p, np.random.default_rng(0))


@pytest.mark.parametrize("rho", [0.0, 1.0, -0.1, 1.5])
def test_rho_open_interval(rho):
    with pytest.raises(ValueError):
        EnvParams(EAST, rho, Ring(4))


def test_topology_minimum_size():
    with pytest.raises(ValueError):
        Ring(2)


def test_isf_gamma_positive():
    with pytest.raises(ValueError):
        independent(0.0)


def test_kind_parse():
    assert EnvKind.parse("East") == EAST
    assert EnvKind.parse("fa1f") == FA1F
    assert EnvKind.parse("ISF", 2.0) == independent(2.0)
    with pytest.raises(ValueError):
        EnvKind.parse("north")


def test_constraint_examples():
    topo = Segment(5)
    c = SpinConfiguration([0, 1, 0, 1, 1], topo)
    assert constraint(EAST, c, 0) == 0          # right neighbour occupied
    assert constraint(EAST, c, 1) == 1
    assert constraint(EAST, c, 4) == 1          # ghost to the right
    assert constraint(WEST, c, 0) == 1          # ghost to the left
    assert constraint(FA1F, SpinConfiguration([1, 0, 1, 0, 0], topo), 1) == 0
    assert constraint(independent(), c, 2) == 1


def test_ring_wraps():
    c = SpinConfiguration([0, 0, 1, 0, 1], Ring(5))
    assert constraint(EAST, c, 4) == 1   # right neighbour is site 0
    assert constraint(WEST, c, 0) == 0   # left neighbour is site 4


def test_constraint_index_error():
    c = SpinConfiguration([0, 0, 0], Ring(3))
    with pytest.raises(IndexError):
        constraint(EAST, c, 3)
    with pytest.raises(IndexError):
        flip_rate(EAST, c, -1, 0.5)


def test_flip_rate_examples():
    c = SpinConfiguration([0, 0, 0, 1], Segment(4))
    assert flip_rate(EAST, c, 0, 0.5) == 0.5
    assert flip_rate(EAST, c, 2, 0.5) == 0.0
    assert flip_rate(EAST, c.with_site(2, 1), 2, 0.5) == 0.0


def test_isf_flip_rate_is_refresh_rate():
    # refresh clock at rate gamma; a flip needs the coin to land on the other value
    c = SpinConfiguration([0, 1, 0], Ring(3))
    assert flip_rate(independent(1.0), c, 0, 0.5) == 0.5
    assert flip_rate(independent(2.0), c, 1, 0.3) == pytest.approx(2.0 * 0.7)


@settings(max_examples=200, deadline=None)
@given(bits_and_site, st.sampled_from(ALL_KINDS), st.booleans(), st.floats(0.01, 0.99))
def test_rates_bounded(bs, kind, ring, rho):
    bits, x = bs
    topo = Ring(len(bits)) if ring else Segment(len(bits))
    c = SpinConfiguration(bits, topo)
    r = flip_rate(kind, c, x, rho)
    assert 0.0 <= r <= max(kind.clock_rate, 1.0)


@settings(max_examples=200, deadline=None)
@given(bits_and_site, st.booleans())
def test_east_west_mirror(bs, ring):
    bits, x = bs
    L = len(bits)
    topo = Ring(L) if ring else Segment(L)
    c = SpinConfiguration(bits, topo)
    assert constraint(WEST, c.reversed(), L - 1 - x) == constraint(EAST, c, x)


@settings(max_examples=200, deadline=None)
@given(bits_and_site, st.sampled_from(ALL_KINDS), st.floats(0.05, 0.95))
def test_detailed_balance(bs, kind, rho):
    bits, x = bs
    c = SpinConfiguration(bits, Ring(len(bits)))
    d = c.with_site(x, 1 - c[x])

    def nu(cfg):
        k = int(cfg.bits.sum())
        return rho**k * (1 - rho) ** (len(cfg) - k)

    assert nu(c) * flip_rate(kind, c, x, rho) == pytest.approx(nu(d) * flip_rate(kind, d, x, rho), rel=1e-12, abs=1e-300)


@given(st.integers(3, 14).flatmap(lambda L: st.tuples(st.just(L), st.integers(0, 2**L - 1))))
def test_code_roundtrip(lc):
    L, code = lc
    c = SpinConfiguration.from_code(code, Ring(L))
    assert c.to_code() == code


def test_configuration_immutable():
    c = SpinConfiguration([0, 1, 0], Ring(3))
    with pytest.raises(ValueError):
        c.bits[0] = 1
    with pytest.raises(ValueError):
        SpinConfiguration([0, 2, 0], Ring(3))
