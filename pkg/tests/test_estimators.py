import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eastwalk.env import EAST, WEST, EnvParams, Ring, Segment, independent
from eastwalk.estimators import (EstimateWithCI, combined_se, InsufficientBudget, batch_means, correlator3,
                                 estimate_edge_front, estimate_profile, estimate_u, estimate_velocity,
                                 n_batches_for, orientation_test, reference_gap, sample_t0, two_point,
                                 u_from_t0)


def test_batch_means_basic():
    x = np.arange(100, dtype=float)
    e = batch_means(x)
    assert e.value == pytest.approx(49.5)
    assert e.n_batches == 20 and e.n == 100
    lo, hi = e.ci95
    assert hi - e.value == pytest.approx(1.96 * e.se, rel=1e-3)
    with pytest.raises(InsufficientBudget):
        batch_means(np.ones(19))


def test_batch_count_rule():
    assert n_batches_for(20) == 20
    assert n_batches_for(999) == 20
    assert n_batches_for(5000) == 100


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=20, max_size=300))
def test_batch_means_order_free_mean(vals):
    a = batch_means(vals)
    b = batch_means(vals[::-1])
    assert a.value == pytest.approx(b.value, abs=1e-9)
    assert a.se >= 0


def test_se_shrinks_with_budget():
    r = np.random.default_rng(0)
    x = r.normal(size=40_000)
    ratio = batch_means(x).se / batch_means(x[:20_000]).se
    assert 0.6 <= ratio <= 0.85


def test_velocity_requires_budget_and_ring():
    env = EnvParams(EAST, 0.5, Ring(16))
    with pytest.raises(InsufficientBudget):
        estimate_velocity(env, 0.1, 10.0, 10)
    with pytest.raises(ValueError):
        estimate_velocity(EnvParams(EAST, 0.5, Segment(16)), 0.1, 10.0, 20)
    with pytest.raises(ValueError):
        estimate_velocity(env, 0.1, 10.0, 20, burn_in=10.0)


def test_velocity_deterministic_across_workers():
    env = EnvParams(EAST, 0.5, Ring(32))
    a = estimate_velocity(env, 0.2, 50.0, 20, burn_in=5.0, seed=9, workers=1)
    b = estimate_velocity(env, 0.2, 50.0, 20, burn_in=5.0, seed=9, workers=2)
    assert (a.value, a.se) == (b.value, b.se)


def test_isf_velocity_zero():
    env = EnvParams(independent(1.0), 0.5, Ring(64))
    e = estimate_velocity(env, 0.2, 500.0, 40, burn_in=10.0, seed=1)
    assert abs(e.value) < 3 * e.se


def test_east_velocity_sign_at_half_density():
    env = EnvParams(EAST, 0.5, Ring(128))
    e = estimate_velocity(env, 0.3, 2000.0, 40, seed=4)
    assert e.ci95[1] < 0


def test_profile_unbiased_walk_is_flat():
    env = EnvParams(EAST, 0.5, Ring(64))
    p = estimate_profile(env, 0.0, 4, 600.0, 400, burn_in=50.0, seed=2)
    assert np.all((p.values >= 0) & (p.values <= 1))
    assert np.all(np.abs(p.values - 0.5) < 3 * p.ses + 1e-12)
    assert p[0] is p.estimates[4]
    with pytest.raises(ValueError):
        estimate_profile(env, 0.1, 17, 100.0, 20)


def test_u_estimate_properties():
    u = estimate_u(0.5, np.linspace(0, 10, 11), 400, seed=1, L=128)
    assert u.values[0] == -0.25 and u.ses[0] == 0.0
    assert np.all(np.diff(u.values) >= 0)
    assert np.all((u.values >= -0.25) & (u.values <= 0))
    with pytest.raises(ValueError):
        estimate_u(0.5, [1.0, 0.5], 40)


def test_u_from_t0_pathwise_monotone():
    t0 = np.array([0.1, 2.0, np.inf, 0.5] * 10)
    vals = [e.value for e in u_from_t0(t0, [0, 0.3, 1, 5], 0.3)]
    assert vals[0] == pytest.approx(-0.21) and vals == sorted(vals)


def test_correlators_at_time_zero():
    c = correlator3(0.5, 0.0, 0.0, 2, 4000, seed=3)
    assert abs(c.value) < 3 * c.se + 1e-12
    tp = two_point(0.5, 0.0, 1, 4000, seed=3)
    assert abs(tp.value - 0.25) < 3 * tp.se
    o = orientation_test(0.5, 0.0, [1, 2], 4000, seed=3)
    assert all(abs(e.value) < 3 * e.se for e in o.values())
    with pytest.raises(ValueError):
        correlator3(0.5, 1.0, 1.0, 0, 40)


def test_orientation_small_budget():
    o = orientation_test(0.5, 1.0, [1, 3], 4000, seed=5)
    assert all(abs(e.value) < 3 * e.se for e in o.values())


def test_edge_front_estimator_smoke():
    d = estimate_edge_front(0.5, 50.0, 20, seed=1, L=1024)
    assert d.violations == 0 and d.breaks == 0 and d.censored == 0
    assert d.edge.value <= d.front.value


def test_reference_gap_cached():
    assert reference_gap(0, 0.5) == reference_gap(0, 0.5) > 0


def test_ring_velocity_stable_under_doubling():
    # finite-size check: halving the ring must not move the velocity beyond noise
    vs = [estimate_velocity(EnvParams(EAST, 0.5, Ring(L)), 0.3, 2000.0, 60, seed=31, tag=f"double-{L}")
          for L in (128, 256)]
    assert abs(vs[0].value - vs[1].value) < 3 * combined_se(*vs)
