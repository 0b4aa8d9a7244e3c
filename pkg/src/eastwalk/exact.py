"""Exact finite-state oracle on small rings.

States are L-bit integers, bit ``x`` holding the occupation of site ``x``;
for constrained kinds the all-ones code (which is the largest code) is
dropped, so a state's index equals its code.  Generators act on functions
as column vectors: ``(G f)(a) = sum_b G[a, b] f(b)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .env import EnvKind, Kind

MIN_L = 3
MAX_L = 14
DENSE_LIMIT = 1024


class ModelConstructionError(RuntimeError):
    """The generator is not irreducible, so its invariant law is not unique."""


class ProjectionError(RuntimeError):
    """A resolvent solve was attempted on a non-mean-zero right-hand side."""


class HorizonError(RuntimeError):
    """A truncated time integral had not converged at the requested horizon."""


@dataclass(frozen=True)
class StateSpace:
    L: int
    constrained: bool

    def __post_init__(self):
        if not MIN_L <= self.L <= MAX_L:
            raise ValueError(f"ring size must lie in [{MIN_L}, {MAX_L}], got {self.L}")

    @property
    def size(self) -> int:
        return 2**self.L - (1 if self.constrained else 0)

    @property
    def codes(self) -> np.ndarray:
        return np.arange(self.size, dtype=np.int64)

    def bits(self) -> np.ndarray:
        """(size, L) array of occupations."""
        return ((self.codes[:, None] >> np.arange(self.L)) & 1).astype(np.int8)

    def occupation(self, site: int) -> np.ndarray:
        return ((self.codes >> (site % self.L)) & 1).astype(float)

    def shift(self, y: int) -> np.ndarray:
        """Index of tau_y eta, where (tau_y eta)(x) = eta(x + y), cyclically."""
        L = self.L
        y %= L
        c = self.codes
        full = (1 << L) - 1
        return ((c >> y) | (c << (L - y))) & full

    def product_measure(self, rho: float) -> np.ndarray:
        """Bernoulli(rho) product law, conditioned on the state space."""
        k = self.bits().sum(axis=1)
        w = rho**k * (1.0 - rho) ** (self.L - k)
        return w / w.sum()


@dataclass
class SparseGenerator:
    matrix: sp.csr_matrix
    space: StateSpace

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()


@dataclass(frozen=True)
class ExactDistribution:
    probabilities: np.ndarray
    space: StateSpace

    def expect(self, f: np.ndarray) -> float:
        return float(self.probabilities @ f)


@dataclass(frozen=True)
class SpectralInfo:
    gap: float
    perturbation_bound: float = 0.0
    perturbation_norm: float | None = None


def _space(kind: EnvKind, L: int) -> StateSpace:
    return StateSpace(L, kind.constrained)


def _assemble(space: StateSpace, rows, cols, vals) -> SparseGenerator:
    n = space.size
    off = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    off.sum_duplicates()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    return SparseGenerator((off + sp.diags(diag)).tocsr(), space)


def _env_transitions(kind: EnvKind, space: StateSpace, rho: float):
    B = space.bits()
    right = np.roll(B, -1, axis=1)
    left = np.roll(B, 1, axis=1)
    if kind.tag is Kind.EAST:
        c = 1 - right
    elif kind.tag is Kind.WEST:
        c = 1 - left
    elif kind.tag is Kind.FA1F:
        c = 1 - left * right
    else:
        c = np.ones_like(B)
    rate = kind.clock_rate * c * np.where(B == 1, 1.0 - rho, rho)
    a, x = np.nonzero(rate)
    targets = space.codes[a] ^ (np.int64(1) << x)
    return a, targets, rate[a, x]


def build_env_generator(kind: EnvKind, L: int, rho: float) -> SparseGenerator:
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    space = _space(kind, L)
    rows, cols, vals = _env_transitions(kind, space, rho)
    return _assemble(space, rows, cols, vals)


def build_ew_generator(kind: EnvKind, L: int, rho: float, eps: float) -> SparseGenerator:
    """Environment seen from the eps-walker: env flips plus cyclic shifts."""
    if abs(eps) > 0.5:
        raise ValueError(f"eps must lie in [-1/2, 1/2], got {eps}")
    space = _space(kind, L)
    rows, cols, vals = _env_transitions(kind, space, rho)
    occ0 = space.occupation(0)
    p_right = 0.5 + eps * (2 * occ0 - 1)
    codes = space.codes
    rows = np.concatenate([rows, codes, codes])
    cols = np.concatenate([cols, space.shift(1), space.shift(-1)])
    vals = np.concatenate([vals, p_right, 1.0 - p_right])
    keep = vals != 0
    return _assemble(space, rows[keep], cols[keep], vals[keep])


def perturbation_matrix(kind: EnvKind, L: int, rho: float, eps: float) -> np.ndarray:
    """Dense matrix of the drift perturbation, G_ew(eps) - G_ew(0)."""
    return build_ew_generator(kind, L, rho, eps).dense() - build_ew_generator(kind, L, rho, 0.0).dense()


def local_drift_vector(space: StateSpace, eps: float) -> np.ndarray:
    return 2.0 * eps * (2.0 * space.occupation(0) - 1.0)


def _is_irreducible(G: SparseGenerator) -> bool:
    off = G.matrix - sp.diags(G.matrix.diagonal())
    n_comp, _ = connected_components(off, directed=True, connection="strong")
    return n_comp == 1


def stationary_distribution(G: SparseGenerator) -> ExactDistribution:
    n = G.dimension
    if not _is_irreducible(G):
        raise ModelConstructionError("generator is reducible; invariant law not unique")
    if n <= DENSE_LIMIT:
        _, s, vt = sla.svd(G.dense().T)
        if s[-2] <= 1e-10:
            raise ModelConstructionError(f"second-smallest singular value {s[-2]:.3e} too small")
        pi = vt[-1]
        pi = pi / pi.sum()
    else:
        A = G.matrix.T.tolil()
        A[n - 1, :] = np.ones(n)
        b = np.zeros(n)
        b[n - 1] = 1.0
        pi = spla.spsolve(A.tocsc(), b)
    if pi.min() < -1e-12:
        raise ModelConstructionError("invariant vector has negative entries")
    pi = np.clip(pi, 0.0, None)
    return ExactDistribution(pi / pi.sum(), G.space)


def spectral_gap(G_env: SparseGenerator, rho: float | None = None, weights: np.ndarray | None = None) -> SpectralInfo:
    """Smallest nonzero eigenvalue of -G in the weighted symmetric form.

    ``weights`` is the reversible law; by default the conditioned product
    measure at density ``rho``.
    """
    if weights is None:
        if rho is None:
            weights = stationary_distribution(G_env).probabilities
        else:
            weights = G_env.space.product_measure(rho)
    d = np.sqrt(weights)
    S = sp.diags(d) @ G_env.matrix @ sp.diags(1.0 / d)
    S = -0.5 * (S + S.T)
    n = G_env.dimension
    if n <= 4096:
        ev = sla.eigvalsh(S.toarray())
    else:
        ev = np.sort(spla.eigsh(S.tocsc(), k=3, sigma=-1e-3, which="LM", return_eigenvectors=False))
    return SpectralInfo(gap=float(ev[1]))


def perturbation_norm(kind: EnvKind, L: int, rho: float, eps: float) -> float:
    """Operator norm of the perturbation in L^2 of the conditioned product law."""
    space = _space(kind, L)
    d = np.sqrt(space.product_measure(rho))
    M = d[:, None] * perturbation_matrix(kind, L, rho, eps) / d[None, :]
    return float(sla.svdvals(M)[0])


def reversibility_defect(G: SparseGenerator, weights: np.ndarray) -> float:
    """max |nu(a) G(a,b) - nu(b) G(b,a)|."""
    F = sp.diags(weights) @ G.matrix
    return float(abs(F - F.T).max())


def stationary_law(kind: EnvKind, L: int, rho: float, eps: float) -> ExactDistribution:
    return stationary_distribution(build_ew_generator(kind, L, rho, eps))


def exact_velocity(kind: EnvKind, L: int, rho: float, eps: float) -> float:
    mu = stationary_law(kind, L, rho, eps)
    return mu.expect(local_drift_vector(mu.space, eps))


# ------------------------------------------------ Dyson-Phillips terms ----


def group_inverse(G0: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Z = int_0^inf (S(t) - Pi) dt, the inverse of -G0 on mean-zero functions."""
    n = G0.shape[0]
    Pi = np.outer(np.ones(n), mu)
    return np.linalg.inv(Pi - G0) - Pi


def _series_setup(kind, L, rho, eps):
    space = _space(kind, L)
    G0 = build_ew_generator(kind, L, rho, 0.0).dense()
    Lhat = build_ew_generator(kind, L, rho, eps).dense() - G0
    mu = space.product_measure(rho)
    return space, G0, Lhat, mu


def series_terms(kind: EnvKind, L: int, rho: float, eps: float, n: int, f: np.ndarray,
                 time_horizon: float | None = None, quadrature_step: float = 0.5,
                 tail_tol: float = 1e-14) -> np.ndarray:
    """Terms 0..n of the expansion of mu_eps(f) around mu.

    Term m is int_0^inf mu(Lhat S^(m)(s) f) ds, with S^(0)(t) = S(t) and
    S^(m+1)(t) = int_0^t S(t-s) Lhat S^(m)(s) ds.  The iterated convolutions
    and the outer integrals solve one block-triangular linear ODE,

        y_0' = G0 y_0,   y_m' = G0 y_m + Lhat y_{m-1},   z_m' = mu . Lhat y_m,

    marched exactly with a single matrix exponential per step.  The march
    stops once every centred y_m is below ``tail_tol``.
    """
    if n < 0 or n > 6:
        raise ValueError("series index must lie in [0, 6]")
    space, G0, Lhat, mu = _series_setup(kind, L, rho, eps)
    N = space.size
    f = np.asarray(f, dtype=float)
    if time_horizon is None:
        gap = spectral_gap(build_env_generator(kind, L, rho), rho).gap
        time_horizon = 40.0 / gap
    m = n + 1
    dim = m * N + m
    A = np.zeros((dim, dim))
    for i in range(m):
        blk = slice(i * N, (i + 1) * N)
        A[blk, blk] = G0
        if i > 0:
            A[blk, slice((i - 1) * N, i * N)] = Lhat
        A[m * N + i, blk] = mu @ Lhat
    step = sla.expm(quadrature_step * A)
    state = np.zeros(dim)
    state[:N] = f
    t = 0.0
    while True:
        ys = state[: m * N].reshape(m, N)
        centred = ys - (ys @ mu)[:, None]
        if np.abs(centred).max() < tail_tol:
            break
        if t >= time_horizon:
            raise HorizonError(
                f"integrand not below {tail_tol:g} at t={t:g} (residual {np.abs(centred).max():.3e})"
            )
        state = step @ state
        t += quadrature_step
    return state[m * N:].copy()


def series_term(kind: EnvKind, L: int, rho: float, eps: float, n: int, f: np.ndarray,
                time_horizon: float | None = None, quadrature_step: float = 0.5) -> float:
    return float(series_terms(kind, L, rho, eps, n, f, time_horizon, quadrature_step)[n])


def series_terms_resolvent(kind: EnvKind, L: int, rho: float, eps: float, n: int, f: np.ndarray) -> np.ndarray:
    """Same terms in closed form: mu Lhat (Z Lhat)^m Z f."""
    space, G0, Lhat, mu = _series_setup(kind, L, rho, eps)
    Z = group_inverse(G0, mu)
    out = np.empty(n + 1)
    v = Z @ np.asarray(f, dtype=float)
    for i in range(n + 1):
        w = Lhat @ v
        out[i] = mu @ w
        v = Z @ w
    return out


def centred_l2_norm(f: np.ndarray, mu: np.ndarray) -> float:
    g = f - mu @ f
    return float(np.sqrt(mu @ (g * g)))


def check_even_terms(kind: EnvKind, L: int, rho: float, eps: float, n_max: int = 2,
                     quadrature_step: float = 0.5) -> list[float]:
    """Even-index terms 2n, n < n_max, of the velocity expansion (all vanish)."""
    if not 1 <= n_max <= 2:
        raise ValueError("n_max must be 1 or 2")
    space = _space(kind, L)
    j = local_drift_vector(space, eps)
    terms = series_terms(kind, L, rho, eps, 2 * (n_max - 1), j, quadrature_step=quadrature_step)
    return [float(terms[2 * i]) for i in range(n_max)]


def resolvent_kappa(L: int, rho: float = 0.5, kind: EnvKind | None = None) -> float:
    """Cubic velocity coefficient -8 mu((2 eta(0) - 1) g^2), -G0 g = eta(1) - eta(-1)."""
    from .env import EAST

    kind = EAST if kind is None else kind
    space = _space(kind, L)
    G0 = build_ew_generator(kind, L, rho, 0.0).dense()
    mu = space.product_measure(rho)
    h = space.occupation(1) - space.occupation(-1)
    if abs(mu @ h) > 1e-12:
        raise ProjectionError(f"right-hand side has mean {mu @ h:.3e}")
    g = group_inverse(G0, mu) @ h
    return float(-8.0 * mu @ ((2.0 * space.occupation(0) - 1.0) * g * g))


def truncated_drift_integral(L: int, rho: float, T: float, kind: EnvKind | None = None) -> np.ndarray:
    """int_0^T S(s) (eta(1) - eta(-1)) ds for every starting state."""
    from .env import EAST

    kind = EAST if kind is None else kind
    space = _space(kind, L)
    G0 = build_ew_generator(kind, L, rho, 0.0).dense()
    N = space.size
    h = space.occupation(1) - space.occupation(-1)
    A = np.zeros((2 * N, 2 * N))
    A[:N, :N] = G0
    A[N:, :N] = np.eye(N)
    state = sla.expm(T * A) @ np.concatenate([h, np.zeros(N)])
    return state[N:]


def odd_fit_cubic(kind: EnvKind, L: int, rho: float, eps_grid=(0.02, 0.04, 0.06),
                  pin_linear: bool = True) -> np.ndarray:
    """Odd polynomial fit of the exact velocity on +-eps_grid; returns [a1, a3, a5, ...].

    With ``pin_linear`` the linear coefficient is fixed at its exact value
    2(2 mu(eta(0)) - 1) and eps^3, eps^5, eps^7 are fitted to the rest.
    Leaving a1 free on this grid lets the eps^7 term leak into a3 at the
    1e-4 level.
    """
    eps = np.array([s * e for e in eps_grid for s in (1.0, -1.0)])
    v = np.array([exact_velocity(kind, L, rho, e) for e in eps])
    if pin_linear:
        space = _space(kind, L)
        mu = space.product_measure(rho)
        a1 = 2.0 * (2.0 * float(mu @ space.occupation(0)) - 1.0)
        X = np.stack([eps**3, eps**5, eps**7], axis=1)
        coef, *_ = np.linalg.lstsq(X, v - a1 * eps, rcond=None)
        return np.concatenate([[a1], coef])
    X = np.stack([eps, eps**3, eps**5], axis=1)
    coef, *_ = np.linalg.lstsq(X, v, rcond=None)
    return coef


# ------------------------------------------------------------- reports ----


def series_report(kind: EnvKind, L: int, rho: float, eps: float, n_partial: int = 4, n_terms: int = 6,
                  f: np.ndarray | None = None) -> dict:
    """Expansion terms for f = eta(0) (by default) with their size bounds.

    Bounds use r = 2|eps| / gap of the environment on the same ring; the
    sharper ratio ||Lhat|| / gap of the walker-frame chain is reported too.
    A ratio >= 1 makes the geometric tail bound infinite.
    """
    space = _space(kind, L)
    mu = space.product_measure(rho)
    f = space.occupation(0) if f is None else np.asarray(f, dtype=float)
    terms = series_terms(kind, L, rho, eps, n_terms, f)
    norm = centred_l2_norm(f, mu)
    gap_env = spectral_gap(build_env_generator(kind, L, rho), rho).gap
    gap_ew = spectral_gap(build_ew_generator(kind, L, rho, 0.0), weights=mu).gap
    lhat = perturbation_norm(kind, L, rho, eps)

    def tail(r):
        return r ** (n_partial + 2) / (1.0 - r) * norm if r < 1 else math.inf

    r = 2 * abs(eps) / gap_env
    r_sharp = lhat / gap_ew
    exact = stationary_law(kind, L, rho, eps).expect(f) - mu @ f
    return {
        "terms": terms,
        "bounds": np.array([r ** (k + 1) * norm for k in range(n_terms + 1)]),
        "sharp_bounds": np.array([r_sharp ** (k + 1) * norm for k in range(n_terms + 1)]),
        "n_partial": n_partial,
        "remainder": float(abs(exact - terms[: n_partial + 1].sum())),
        "tail_bound": tail(r),
        "sharp_tail_bound": tail(r_sharp),
        "ratio": r,
        "sharp_ratio": r_sharp,
        "gap_env": gap_env,
        "gap_ew": gap_ew,
        "perturbation_norm": lhat,
        "norm": norm,
        "horizon": 40.0 / gap_env,
    }


def exact_suite(L: int = 6) -> list[tuple]:
    """Run the oracle identities; rows are (check, kind, rho, eps, value, tolerance, passed)."""
    from .env import EAST, WEST, independent

    rows = []

    def add(name, kind, rho, eps, value, tol, ok=None):
        ok = bool(abs(value) < tol) if ok is None else bool(ok)
        rows.append((name, kind.name, rho, eps, float(value), tol, ok))

    isf = independent(1.0)
    for rho in (0.3, 0.5, 0.7):
        for kind in (EAST, WEST, isf):
            G = build_env_generator(kind, L, rho)
            w = G.space.product_measure(rho)
            add("reversibility", kind, rho, None, reversibility_defect(G, w), 1e-12)
            add("row-sums", kind, rho, None, float(np.abs(G.row_sums()).max()), 1e-12)
            add("gap", kind, rho, None, spectral_gap(G, rho).gap, 0.0,
                ok=spectral_gap(G, rho).gap > 0)
        for eps in (0.05, 0.1, 0.2, 0.3):
            ve = exact_velocity(EAST, L, rho, eps)
            add("antisymmetry", EAST, rho, eps, ve + exact_velocity(EAST, L, rho, -eps), 1e-10)
            add("east-west", EAST, rho, eps, ve - exact_velocity(WEST, L, rho, eps), 1e-10)
    add("isf-zero-velocity", isf, 0.5, 0.2, exact_velocity(isf, L, 0.5, 0.2), 1e-10)
    add("isf-gap", isf, 0.5, None, spectral_gap(build_env_generator(isf, L, 0.5), 0.5).gap - 1.0, 1e-10)
    for kind in (EAST, isf):
        r0, r2 = check_even_terms(kind, L, 0.5, 0.1)
        add("even-term-0", kind, 0.5, 0.1, r0, 1e-7)
        add("even-term-2", kind, 0.5, 0.1, r2, 1e-6)
    mu_p = stationary_law(EAST, L, 0.5, 0.1)
    mu_m = stationary_law(EAST, L, 0.5, -0.1)
    add("positivity", EAST, 0.5, 0.1, float(mu_p.probabilities.min()), 0.0,
        ok=mu_p.probabilities.min() > 0)
    add("tv-mu-eps-vs-minus-eps", EAST, 0.5, 0.1,
        0.5 * float(np.abs(mu_p.probabilities - mu_m.probabilities).sum()), 1e-4,
        ok=0.5 * np.abs(mu_p.probabilities - mu_m.probabilities).sum() > 1e-4)
    add("isf-kappa", isf, 0.5, None, resolvent_kappa(L, 0.5, isf), 1e-10)
    return rows
