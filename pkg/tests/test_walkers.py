import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eastwalk.env import EAST, WEST, EnvParams, Ring, Segment, SpinConfiguration, independent, sample_equilibrium
from eastwalk.graphical import ClockEvent, EventSchedule, replica_seed
from eastwalk.walkers import (ParameterError, WalkerParams, config_rng, coupled_run, edge_front_reference,
                              evolve_degenerate, evolve_front, evolve_joint, first_edge, first_hole,
                              local_drift, run_walk, segment_config, walker_rates)


def test_walker_rates_examples():
    assert walker_rates(0.3, 1) == pytest.approx((0.8, 0.2))
    assert walker_rates(0.3, 0) == pytest.approx((0.2, 0.8))
    assert walker_rates(0.0, 1) == (0.5, 0.5)


def test_local_drift_examples():
    assert local_drift(0.1, 1) == pytest.approx(0.2)
    assert local_drift(0.1, 0) == pytest.approx(-0.2)
    assert local_drift(0.0, 1) == 0.0


@pytest.mark.parametrize("eps", [0.51, -0.7, math.nan])
def test_eps_range(eps):
    with pytest.raises(ParameterError):
        walker_rates(eps, 1)
    with pytest.raises(ParameterError):
        WalkerParams(eps)


@given(st.floats(-0.5, 0.5), st.integers(0, 1))
def test_total_rate_is_one(eps, occ):
    r, l = walker_rates(eps, occ)
    assert r >= 0 and l >= 0 and r + l == pytest.approx(1.0)
    assert local_drift(eps, occ) == pytest.approx(r - l)


def test_reference_and_compiled_walk_agree():
    for seed in range(5):
        p = EnvParams(EAST, 0.5, Ring(12))
        cfg = sample_equilibrium(p, config_rng(seed))
        traj = evolve_joint(p, 0.3, 40.0, seed, config=cfg)
        run = run_walk(EAST, 0.5, 0.3, cfg, 40.0, seed, record_times=[40.0])
        assert traj[-1].x == run.positions[0]
        assert np.array_equal(traj[-1].config.bits, run.final_config)


def test_joint_observers_see_ordered_states():
    p = EnvParams(EAST, 0.5, Ring(8))
    seen = []
    traj = evolve_joint(p, 0.1, 10.0, 1, observers=[seen.append])
    assert seen == traj
    assert all(a.t <= b.t for a, b in zip(traj, traj[1:]))
    assert all(abs(a.x - b.x) <= 1 for a, b in zip(traj, traj[1:]))


def test_joint_requires_ring():
    with pytest.raises(ParameterError):
        evolve_joint(EnvParams(EAST, 0.5, Segment(8)), 0.1, 1.0, 0)


def test_symmetric_walker_mean_zero():
    from eastwalk.estimators import estimate_velocity
    est = estimate_velocity(EnvParams(EAST, 0.5, Ring(64)), 0.0, 200.0, 100, burn_in=0.0, seed=2)
    assert abs(est.value) < 3 * est.se


def test_frozen_occupied_environment():
    # gamma ~ 0 freezes an all-ones window, so every walker step goes right
    kind = independent(1e-9)
    cfg = SpinConfiguration([1] * 16, Ring(16))
    run = run_walk(kind, 0.5, 0.5, cfg, 500.0, 3, record_times=[500.0])
    v = run.positions[0] / 500.0
    assert abs(v - 1.0) < 3 * math.sqrt(1 / 500.0) and run.positions[0] == run.walk_events


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32), st.floats(-0.5, 0.5), st.sampled_from([0.3, 0.5, 0.7]))
def test_space_reflection(seed, eps, rho):
    L = 20
    cfg = sample_equilibrium(EnvParams(EAST, rho, Ring(L)), config_rng(seed))
    times = np.linspace(1.0, 60.0, 12)
    east = run_walk(EAST, rho, eps, cfg, 60.0, seed, record_times=times)
    west = run_walk(WEST, rho, -eps, cfg.reversed(), 60.0, seed, record_times=times, x0=L - 1, reflected=True)
    assert np.array_equal(east.positions, (L - 1) - west.positions)
    assert np.array_equal(east.final_config, west.final_config[::-1])


def test_reflection_python_schedule():
    L = 10
    cfg = sample_equilibrium(EnvParams(EAST, 0.5, Ring(L)), config_rng(4))
    sch = EventSchedule(L, 20.0, 4, 0.5, walker=True)
    e = evolve_joint(EnvParams(EAST, 0.5, Ring(L)), 0.2, 20.0, 4, config=cfg, schedule=sch)
    w = evolve_joint(EnvParams(WEST, 0.5, Ring(L)), -0.2, 20.0, 4, config=cfg.reversed(), x0=L - 1,
                     schedule=EventSchedule.reflected(sch))
    assert [s.x for s in e] == [L - 1 - s.x for s in w]


def test_first_edge_and_hole():
    c = SpinConfiguration([0, 1, 1, 0, 1, 1], Segment(6))
    assert first_edge(c, 0) == 2
    assert first_edge(c, 3) == 5        # ghost hole at the right end
    assert first_hole(c, 1) == 3


class _Scripted:
    """Stand-in schedule replaying a fixed list of events."""

    def __init__(self, events):
        self._events = events

    def events(self):
        return iter(self._events)


def test_degenerate_left_jump_example():
    # 0 0 1 1 [1 0] 0 0: the edge particle refreshes to 0, the edge moves to the next particle on the left
    c = SpinConfiguration([0, 0, 1, 1, 1, 0, 0, 0], Segment(8))
    edges, _, _ = edge_front_reference(c, _Scripted([ClockEvent(1.0, 4, 0, 0.9)]), 4, None, margin=0)
    assert [s.y for s in edges] == [4.5, 3.5]
    c = SpinConfiguration([0, 1, 0, 0, 1, 0, 0, 0], Segment(8))
    edges, _, _ = edge_front_reference(c, _Scripted([ClockEvent(1.0, 4, 0, 0.9)]), 4, None, margin=0)
    assert [s.y for s in edges] == [4.5, 1.5]


def test_degenerate_right_jump_example():
    c = SpinConfiguration([0, 0, 1, 1, 1, 0, 0, 0], Segment(8))
    edges, _, _ = edge_front_reference(c, _Scripted([ClockEvent(1.0, 5, 1, 0.1)]), 4, None, margin=0)
    assert [s.y for s in edges] == [4.5, 5.5]
    # blocked: the hole's right neighbour is occupied
    c = SpinConfiguration([0, 0, 1, 1, 1, 0, 1, 0], Segment(8))
    edges, _, _ = edge_front_reference(c, _Scripted([ClockEvent(1.0, 5, 1, 0.1)]), 4, None, margin=0)
    assert [s.y for s in edges] == [4.5]


def test_front_step_examples():
    c = SpinConfiguration([0, 1, 0, 1, 0, 0, 0, 0], Segment(8))
    _, fronts, _ = edge_front_reference(c, _Scripted([ClockEvent(1.0, 4, 1, 0.1)]), None, 4, margin=0)
    assert [s.f for s in fronts] == [4, 5] and fronts[-1].config[5] == 0
    _, fronts, _ = edge_front_reference(c, _Scripted([ClockEvent(1.0, 3, 0, 0.9)]), None, 4, margin=0)
    assert [s.f for s in fronts] == [4, 3]


def test_edge_and_front_invariants_hold():
    topo = Segment(256)
    for seed in range(10):
        r = coupled_run(0.5, 100.0, seed, topo, start=200, record_times=np.linspace(0, 100, 50))
        assert r.breaks == 0 and r.violations == 0
        assert r.f0 - r.y0 == 0.5


def test_coupling_reference_matches_kernel():
    topo = Segment(48)
    for seed in range(8):
        c = segment_config(topo, 0.5, seed)
        e0 = first_edge(c, 36)
        edges, fronts, viol = edge_front_reference(c, EventSchedule(48, 20.0, seed, 0.5), e0, e0 + 1)
        r = coupled_run(0.5, 20.0, seed, topo, start=36, record_times=[20.0], config=c)
        if r.status == "ok":
            assert edges[-1].y == r.y[-1] and fronts[-1].f == r.f[-1] and viol == r.violations == 0
        for s in edges:
            assert s.config[s.left] == 1 and (s.left + 1 == 48 or s.config[s.left + 1] == 0)
        for s in fronts:
            assert s.config[s.f] == 0


def test_front_steps():
    topo = Segment(64)
    c = segment_config(topo, 0.5, 9)
    f0 = first_hole(c, 30)
    _, fronts, _ = edge_front_reference(c, EventSchedule(64, 30.0, 9, 0.5), None, f0)
    steps = {b.f - a.f for a, b in zip(fronts, fronts[1:])}
    assert steps <= {-1, 1}


def test_boundary_censoring():
    r = evolve_degenerate(0.3, Segment(64), 500.0, 1, start=40)
    assert r.status == "left-boundary" and r.censored and r.t_stop < 500.0


def test_front_and_walker_bounds():
    r = coupled_run(0.5, 200.0, 3, Segment(1024), start=900, record_times=[200.0], lo=200)
    T = 200.0
    assert r.y[0] / T <= r.f[0] / T - 1 / (2 * T)


def test_windowed_run_matches_full():
    topo = Segment(512)
    a = coupled_run(0.5, 60.0, 5, topo, start=450, record_times=np.linspace(0, 60, 7))
    b = coupled_run(0.5, 60.0, 5, topo, start=450, record_times=np.linspace(0, 60, 7), lo=200)
    assert np.array_equal(a.y, b.y) and np.array_equal(a.f, b.f)


def test_degenerate_and_front_alone_match_coupled():
    topo = Segment(512)
    rec = np.linspace(0, 50, 6)
    c = coupled_run(0.5, 50.0, 8, topo, start=400, record_times=rec)
    d = evolve_degenerate(0.5, topo, 50.0, 8, start=400, record_times=rec)
    f = evolve_front(0.5, topo, 50.0, 8, start=int(c.f0), record_times=rec)
    assert np.array_equal(c.y, d.y) and np.array_equal(c.f, f.f)
