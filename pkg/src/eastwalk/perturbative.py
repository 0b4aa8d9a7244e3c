"""Low-order perturbative quantities in the walker bias.

Heat kernel of the rate-1 simple walk (uniformization), the O(eps)
correction to the density profile around the walker, and a nested Monte
Carlo estimate of the eps^3 velocity coefficient at density 1/2.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, pdtrc

from .env import EAST, EnvKind, EnvParams, Kind, Ring, sample_equilibrium
from .estimators import (EstimateWithCI, batch_means, map_replicas, reference_gap, sample_t0)
from .exact import HorizonError
from .graphical import replica_seed
from .walkers import config_rng, run_walk

TAIL_MASS = 1e-14
PROFILE_TAIL_TOL = 1e-4


def _poisson_cutoff(t: float) -> int:
    """Smallest N with P(Poisson(t) > N) < TAIL_MASS."""
    n = int(t + 10.0 * math.sqrt(t) + 40)
    while pdtrc(n, t) >= TAIL_MASS:
        n += 10
    return n


def heat_kernel(t, y) -> np.ndarray | float:
    """P(Z_t = y) for the walk jumping +-1 at rate 1/2 each, by uniformization.

    ``t`` may be an array; ``y`` an integer.  The Poisson series is cut
    where its remaining mass drops below 1e-14.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("time must be nonnegative")
    y = abs(int(y))  # the kernel is even in y
    scalar = t_arr.ndim == 0
    ts = np.atleast_1d(t_arr)
    out = np.zeros(ts.shape)
    N = _poisson_cutoff(float(ts.max()))
    n = np.arange(y, N + 1, 2, dtype=float)  # parity of n must match y
    if n.size:
        # log of C(n, (n+y)/2) 2^-n
        log_walk = gammaln(n + 1) - gammaln((n + y) / 2 + 1) - gammaln((n - y) / 2 + 1) - n * math.log(2.0)
        pos = ts > 0
        tp = ts[pos]
        log_pois = -tp[:, None] + n[None, :] * np.log(tp)[:, None] - gammaln(n + 1)[None, :]
        out[pos] = np.exp(log_pois + log_walk[None, :]).sum(axis=1)
        out[~pos] = 1.0 if y == 0 else 0.0
    return float(out[0]) if scalar else out


def profile_kernel(s, x: int) -> np.ndarray:
    """p_s(x-1) - p_s(x+1)."""
    return heat_kernel(s, x - 1) - heat_kernel(s, x + 1)


def profile_tail_bound(x: int, T: float, rho: float, lam: float) -> float:
    """Bound on the part of the O(eps) profile integral beyond T.

    Uses |u(s)| <= rho (1-rho)^(1/2) exp(-lam s); the kernel is integrated
    numerically up to T + 40/lam and bounded by p_s(0) <= p_S(0) afterwards.
    """
    S = T + 40.0 / lam
    s = np.linspace(T, S, 4001)
    k = np.abs(profile_kernel(s, x))
    head = np.trapezoid(np.exp(-lam * s) * k, s)
    rest = 2.0 * heat_kernel(S, 0) * math.exp(-lam * S) / lam
    return 2.0 * rho * math.sqrt(1.0 - rho) * (head + rest)


def profile_horizon(xs, rho: float, lam: float, tol: float = PROFILE_TAIL_TOL, step: float = 5.0,
                    t_max: float = 2000.0) -> float:
    """Smallest multiple of ``step`` whose tail bound is below ``tol`` for every x."""
    T = step
    while T <= t_max:
        if all(profile_tail_bound(x, T, rho, lam) < tol for x in xs):
            return T
        T += step
    raise HorizonError(f"profile tail bound not below {tol} by s={t_max}")


@dataclass(frozen=True)
class ProfileCoefficient:
    x: int
    value: EstimateWithCI
    horizon: float
    tail_bound: float


def first_order_profile(rho: float, x, horizon: float | None = None, replicas: int = 20000,
                        seed: int = 0, workers: int = 1, t0: np.ndarray | None = None,
                        lam: float | None = None, ds: float = 0.01) -> list[ProfileCoefficient]:
    """D(x) = 2 int_0^T u(s) [p_s(x-1) - p_s(x+1)] ds for each requested x.

    Each replica contributes -2 rho(1-rho) int_0^{min(T_0, T)} kernel, the
    kernel's running integral being a trapezoid rule with step ``ds``; so the
    SE comes straight from the replica spread.  ``t0`` may be supplied to
    reuse first-legal-ring samples.
    """
    xs = [int(v) for v in np.atleast_1d(x)]
    lam = reference_gap(int(Kind.EAST), float(rho)) if lam is None else lam
    if horizon is None:
        horizon = profile_horizon(xs, rho, lam)
    bounds = {xx: profile_tail_bound(xx, horizon, rho, lam) for xx in xs}
    bad = {xx: b for xx, b in bounds.items() if b >= PROFILE_TAIL_TOL}
    if bad:
        raise HorizonError(f"tail bound too large at horizon {horizon}: {bad}")
    if t0 is None:
        t0 = sample_t0(rho, horizon, replicas, seed, workers)
    stop = np.minimum(t0, horizon)
    s = np.arange(0.0, horizon + ds / 2, ds)
    out = []
    for xx in xs:
        k = profile_kernel(s, xx)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (k[1:] + k[:-1]) * ds)])
        per = -2.0 * rho * (1.0 - rho) * np.interp(stop, s, cum)
        out.append(ProfileCoefficient(xx, batch_means(per), float(horizon), bounds[xx]))
    return out


# --------------------------------------------------------------- kappa ----

@dataclass(frozen=True)
class KappaEstimate:
    value: EstimateWithCI
    inner_horizon: float
    outer_samples: int
    inner_pairs: int
    L: int


def kappa_relaxation_rate(kind: EnvKind, L: int, rho: float = 0.5) -> float:
    """Relaxation rate used to size the inner horizon.

    On rings small enough for the exact oracle this is the smaller of the
    environment gap and the walker-frame gap; otherwise the environment gap
    of a 10-site ring stands in.
    """
    if L <= 12:
        return _small_ring_rate(int(kind.tag), kind.gamma, L, rho)
    return reference_gap(int(kind.tag), float(rho), kind.gamma)


@lru_cache(maxsize=None)
def _small_ring_rate(tag: int, gamma: float, L: int, rho: float) -> float:
    from .exact import StateSpace, build_env_generator, build_ew_generator, spectral_gap
    kind = EnvKind(Kind(tag), gamma)
    w = StateSpace(L, kind.constrained).product_measure(rho)
    g_env = spectral_gap(build_env_generator(kind, L, rho), weights=w).gap
    g_ew = spectral_gap(build_ew_generator(kind, L, rho, 0.0), weights=w).gap
    return min(g_env, g_ew)


def _kappa_outer(task):
    kind, rho, L, T, pairs, seed = task
    cfg = sample_equilibrium(EnvParams(kind, rho, Ring(L)), config_rng(seed))
    n = 2 * pairs
    g = np.empty(n)
    for j in range(n):
        run = run_walk(kind, rho, 0.0, cfg, T, replica_seed(seed, "inner", j), window=1)
        g[j] = run.occupation[2] - run.occupation[0]
    # mean of G_i G_j over ordered pairs i != j: unbiased for the squared conditional mean
    prod = (g.sum() ** 2 - (g**2).sum()) / (n * (n - 1))
    return (2 * cfg[0] - 1) * prod


def estimate_kappa(rho: float = 0.5, inner_horizon: float | None = None, outer_samples: int = 1000,
                   seed: int = 0, L: int = 128, kind: EnvKind = EAST, inner_pairs: int = 16,
                   workers: int = 1, allow_small_ring: bool = False) -> KappaEstimate:
    """-8 E[(2 eta(0) - 1) G_1 G_2] with G_i = int_0^T [xi(X+1) - xi(X-1)] ds from independent walks.

    Every outer sample draws eta from the product measure and runs
    ``2 * inner_pairs`` unbiased walks from it; averaging G_i G_j over all
    distinct pairs keeps the estimator unbiased for (E_eta G)^2.
    """
    if rho != 0.5:
        raise ValueError("the eps^3 coefficient is defined here only at density 1/2")
    if L < 128 and not allow_small_ring:
        raise ValueError("use L >= 128 (allow_small_ring for oracle cross-checks)")
    if inner_pairs < 1:
        raise ValueError("need at least one inner pair")
    if inner_horizon is None:
        inner_horizon = 12.0 / kappa_relaxation_rate(kind, L, rho)
    t0 = time.perf_counter()
    tasks = [(kind, rho, L, float(inner_horizon), int(inner_pairs), replica_seed(seed, "kappa", i))
             for i in range(outer_samples)]
    vals = -8.0 * np.array(map_replicas(_kappa_outer, tasks, workers))
    est = batch_means(vals, wall_s=time.perf_counter() - t0)
    return KappaEstimate(est, float(inner_horizon), outer_samples, inner_pairs, L)
