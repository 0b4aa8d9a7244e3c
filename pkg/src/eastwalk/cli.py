"""Command-line entry point: ``eastwalk <command> [options]``.

Every command writes a CSV (and an SVG next to it when the output is a
curve).  Exit status: 0 success, 2 invalid parameters, 3 runtime failure;
failures also print one JSON line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import subprocess
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .env import EnvKind, EnvParams, Ring, Segment
from .graphical import MAX_HORIZON

COMMANDS = ("simulate", "profile", "u-survival", "kappa", "criterion", "front", "exact",
            "series-check", "figure3", "figure6")

COLUMNS = ("command", "kind", "rho", "epsilon", "L", "topology", "horizon", "replicas", "seed",
           "param1", "param2", "param3", "value", "se", "ci_lo", "ci_hi", "n_batches",
           "runtime_s", "version")


class ValidationError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class RunConfig:
    command: str = "simulate"
    kind: str = "east"
    gamma: float = 1.0
    rho: float = 0.5
    eps: float = 0.1
    L: int = 256
    topology: str = "ring"
    horizon: float = 1000.0
    replicas: int = 40
    burn_in: float | None = None
    window: int = 5
    s_grid: list[float] = field(default_factory=lambda: [float(s) for s in np.linspace(0.0, 40.0, 20)])
    t_grid: list[float] = field(default_factory=lambda: [0.5, 1.0, 2.0])
    y_grid: list[int] = field(default_factory=lambda: [1, 2, 3])
    eps_grid: list[float] = field(default_factory=lambda: [round(-0.4 + 0.05 * i, 10) for i in range(17)])
    rho_grid: list[float] = field(default_factory=lambda: [0.3, 0.5, 0.7])
    inner_horizon: float | None = None
    outer_samples: int = 200
    inner_pairs: int = 16
    seed: int = 0
    workers: int | None = None
    out: str = "results.csv"


CONFIG_KEYS = {f.name for f in dataclasses.fields(RunConfig)} - {"command"}


# ------------------------------------------------------------ parsing ----

def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eastwalk", description="Random walks on kinetically constrained environments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON file with parameter values (flags override it)")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help="worker processes (default: $EASTWALK_WORKERS or CPU count)")
    p.add_argument("--out")
    p.add_argument("--kind")
    p.add_argument("--gamma", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--eps", "--epsilon", dest="eps", type=float)
    p.add_argument("--L", "--size", dest="L", type=int)
    p.add_argument("--topology")
    p.add_argument("--horizon", type=float)
    p.add_argument("--replicas", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=float)
    p.add_argument("--window", type=int)
    p.add_argument("--s-grid", dest="s_grid", type=_floats)
    p.add_argument("--t-grid", dest="t_grid", type=_floats)
    p.add_argument("--y-grid", dest="y_grid", type=_ints)
    p.add_argument("--eps-grid", dest="eps_grid", type=_floats)
    p.add_argument("--rho-grid", dest="rho_grid", type=_floats)
    p.add_argument("--inner-horizon", dest="inner_horizon", type=float)
    p.add_argument("--outer-samples", dest="outer_samples", type=int)
    p.add_argument("--inner-pairs", dest="inner_pairs", type=int)
    return p


def parse_config(argv: Sequence[str] | None = None) -> RunConfig:
    """Flags > config file > defaults; raises ValidationError on bad input."""
    try:
        ns = build_parser().parse_args(argv)
    except SystemExit as exc:
        raise ValidationError("arguments", "could not parse command line") from exc
    values: dict[str, Any] = {}
    if ns.config:
        path = Path(ns.config)
        if not path.is_file():
            raise ValidationError("config", f"file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError("config", f"invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ValidationError("config", "top level must be an object")
        unknown = sorted(set(data) - CONFIG_KEYS)
        if unknown:
            raise ValidationError(unknown[0], "unknown configuration key")
        values.update(data)
    for key in CONFIG_KEYS:
        v = getattr(ns, key, None)
        if v is not None:
            values[key] = v
    if ns.command in ("exact", "series-check"):
        values.setdefault("L", 6)
    if ns.command == "series-check":
        values.setdefault("eps", 0.05)
    cfg = RunConfig(command=ns.command, **values)
    if cfg.workers is None:
        env = os.environ.get("EASTWALK_WORKERS")
        cfg.workers = int(env) if env else (os.cpu_count() or 1)
    validate(cfg)
    return cfg


def _need(cond: bool, key: str, message: str):
    if not cond:
        raise ValidationError(key, message)


def validate(cfg: RunConfig) -> None:
    try:
        EnvKind.parse(cfg.kind, cfg.gamma)
    except ValueError as exc:
        raise ValidationError("kind" if "kind" in str(exc) else "gamma", str(exc)) from exc
    _need(0.0 < cfg.rho < 1.0, "rho", "density must lie in the open interval (0, 1)")
    _need(abs(cfg.eps) <= 0.5, "eps", "epsilon must lie in [-1/2, 1/2]")
    _need(all(abs(e) <= 0.5 for e in cfg.eps_grid), "eps_grid", "every epsilon must lie in [-1/2, 1/2]")
    _need(all(0.0 < r < 1.0 for r in cfg.rho_grid), "rho_grid", "densities must lie in (0, 1)")
    _need(cfg.topology in ("ring", "segment"), "topology", "must be 'ring' or 'segment'")
    _need(int(cfg.L) == cfg.L and cfg.L >= 3, "L", "lattice size must be an integer >= 3")
    _need(0.0 < cfg.horizon <= MAX_HORIZON, "horizon", "must lie in (0, 2^40]")
    _need(cfg.replicas >= 20, "replicas", "batch means need at least 20 replicas")
    _need(cfg.burn_in is None or 0.0 <= cfg.burn_in < cfg.horizon, "burn_in", "must lie in [0, horizon)")
    _need(cfg.window >= 0, "window", "must be nonnegative")
    s = np.asarray(cfg.s_grid, dtype=float)
    _need(s.size >= 1 and s[0] >= 0 and bool(np.all(np.diff(s) > 0)), "s_grid", "must be nonnegative and increasing")
    _need(all(t >= 0 for t in cfg.t_grid), "t_grid", "times must be nonnegative")
    _need(all(y >= 1 for y in cfg.y_grid), "y_grid", "offsets must be >= 1")
    _need(cfg.outer_samples >= 20, "outer_samples", "batch means need at least 20 samples")
    _need(cfg.inner_pairs >= 1, "inner_pairs", "must be >= 1")
    _need(cfg.inner_horizon is None or cfg.inner_horizon > 0, "inner_horizon", "must be positive")
    _need(cfg.workers is None or cfg.workers >= 1, "workers", "must be >= 1")
    _need(0 <= cfg.seed < 2**64, "seed", "must be an unsigned 64-bit integer")
    c = cfg.command
    if c in ("simulate", "profile", "figure3", "figure6", "kappa"):
        _need(cfg.topology == "ring", "topology", f"{c} runs on a ring")
    if c in ("profile", "figure6"):
        _need(cfg.window <= cfg.L // 4, "window", "must be at most L/4")
    if c == "kappa":
        _need(cfg.rho == 0.5, "rho", "the eps^3 coefficient is only defined at rho = 1/2")
        _need(cfg.L >= 128, "L", "kappa needs a ring of at least 128 sites")
    if c in ("exact", "series-check"):
        _need(3 <= cfg.L <= 14, "L", "exact oracle supports 3 <= L <= 14")
    if c in ("u-survival", "criterion", "front"):
        _need(EnvKind.parse(cfg.kind).tag.name == "EAST", "kind", f"{c} is defined for the East model")


# ------------------------------------------------------------- output ----

@dataclass
class ResultRecord:
    command: str
    kind: str
    rho: float
    epsilon: float | None
    L: int | None
    topology: str
    horizon: float | None
    replicas: int | None
    seed: int
    param1: float | None = None
    param2: float | None = None
    param3: float | None = None
    value: float = math.nan
    se: float | None = None
    ci_lo: float | None = None
    ci_hi: float | None = None
    n_batches: int | None = None
    runtime_s: float = 0.0
    version: str = ""


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_results(records: Sequence[ResultRecord], path) -> Path:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in records:
            d = dataclasses.asdict(r)
            w.writerow([_fmt(d[c]) for c in COLUMNS])
    return path


def version_string() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True, text=True,
                             timeout=5, cwd=Path(__file__).resolve().parent)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def write_svg(path, xs, ys, errs=None, xlabel: str = "x", ylabel: str = "y", title: str = "",
              hline: float | None = None) -> Path:
    """Tiny line plot with optional error bars; no plotting library needed."""
    path = Path(path)
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    errs = np.zeros_like(ys) if errs is None else np.nan_to_num(np.asarray(errs, float))
    W, H, m = 640, 420, 60
    x0, x1 = float(xs.min()), float(xs.max())
    lo = [float((ys - errs).min())] + ([hline] if hline is not None else [])
    hi = [float((ys + errs).max())] + ([hline] if hline is not None else [])
    y0, y1 = min(lo), max(hi)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(x):
        return m + (x - x0) / (x1 - x0) * (W - 2 * m)

    def py(y):
        return H - m - (y - y0) / (y1 - y0) * (H - 2 * m)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">',
             f'<rect width="{W}" height="{H}" fill="white"/>',
             f'<line x1="{m}" y1="{H - m}" x2="{W - m}" y2="{H - m}" stroke="black"/>',
             f'<line x1="{m}" y1="{m}" x2="{m}" y2="{H - m}" stroke="black"/>',
             f'<text x="{W / 2}" y="{H - 15}" text-anchor="middle">{xlabel}</text>',
             f'<text x="15" y="{H / 2}" transform="rotate(-90 15 {H / 2})" text-anchor="middle">{ylabel}</text>',
             f'<text x="{W / 2}" y="25" text-anchor="middle">{title}</text>']
    for v in (x0, x1):
        parts.append(f'<text x="{px(v):.1f}" y="{H - m + 16}" text-anchor="middle">{v:.3g}</text>')
    for v in (y0 + pad, y1 - pad):
        parts.append(f'<text x="{m - 5}" y="{py(v):.1f}" text-anchor="end">{v:.3g}</text>')
    if hline is not None:
        parts.append(f'<line x1="{m}" y1="{py(hline):.1f}" x2="{W - m}" y2="{py(hline):.1f}" '
                     'stroke="gray" stroke-dasharray="4 3"/>')
    for x, y, e in zip(xs, ys, errs):
        if e > 0:
            parts.append(f'<line x1="{px(x):.1f}" y1="{py(y - e):.1f}" x2="{px(x):.1f}" y2="{py(y + e):.1f}" stroke="steelblue"/>')
        parts.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="3" fill="steelblue"/>')
    pts = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in zip(xs, ys))
    parts.append(f'<polyline points="{pts}" fill="none" stroke="steelblue"/>')
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")
    return path


# ----------------------------------------------------------- commands ----

class Runner:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.kind = EnvKind.parse(cfg.kind, cfg.gamma)
        self.t_start = time.perf_counter()
        self.version = version_string()

    def record(self, **kw) -> ResultRecord:
        c = self.cfg
        base = dict(command=c.command, kind=self.kind.name, rho=c.rho, epsilon=c.eps, L=c.L,
                    topology=c.topology, horizon=c.horizon, replicas=c.replicas, seed=c.seed)
        base.update(kw)
        est = base.pop("est", None)
        if est is not None:
            lo, hi = est.ci95
            base.update(value=est.value, se=est.se, ci_lo=lo, ci_hi=hi, n_batches=est.n_batches)
        return ResultRecord(**base, runtime_s=time.perf_counter() - self.t_start, version=self.version)

    def env(self, L=None) -> EnvParams:
        L = self.cfg.L if L is None else L
        return EnvParams(self.kind, self.cfg.rho, Ring(L) if self.cfg.topology == "ring" else Segment(L))

    def svg_path(self) -> Path:
        return Path(self.cfg.out).with_suffix(".svg")

    # individual commands return (records, optional plot arguments)

    def simulate(self):
        from .estimators import estimate_velocity
        c = self.cfg
        est = estimate_velocity(self.env(), c.eps, c.horizon, c.replicas, c.burn_in, c.seed, c.workers)
        return [self.record(est=est, param1=est.events)], None

    def profile(self):
        from .estimators import estimate_profile
        c = self.cfg
        prof = estimate_profile(self.env(), c.eps, c.window, c.horizon, c.replicas, c.burn_in, c.seed, c.workers)
        recs = [self.record(est=e, param1=int(x)) for x, e in zip(prof.offsets, prof.estimates)]
        return recs, dict(xs=prof.offsets, ys=prof.values, errs=1.96 * prof.ses, xlabel="offset x",
                          ylabel="density", title="density around the walker", hline=c.rho)

    def u_survival(self):
        from .estimators import estimate_u
        c = self.cfg
        u = estimate_u(c.rho, c.s_grid, c.replicas, c.seed, c.workers)
        recs = [self.record(est=e, param1=float(s), topology="segment", epsilon=None, L=None,
                            horizon=float(u.s_grid[-1])) for s, e in zip(u.s_grid, u.estimates)]
        return recs, dict(xs=u.s_grid, ys=u.values, errs=1.96 * u.ses, xlabel="s", ylabel="u(s)",
                          title="u(s)", hline=0.0)

    def kappa(self):
        from .perturbative import estimate_kappa
        c = self.cfg
        k = estimate_kappa(c.rho, c.inner_horizon, c.outer_samples, c.seed, c.L, self.kind, c.inner_pairs, c.workers)
        return [self.record(est=k.value, epsilon=None, horizon=k.inner_horizon, replicas=k.outer_samples,
                            param1=k.inner_horizon, param2=k.inner_pairs, param3=k.outer_samples)], None

    def criterion(self):
        from .estimators import correlator3, orientation_test, two_point
        c = self.cfg
        recs = []
        common = dict(topology="segment", epsilon=None, L=None, horizon=None)
        for t in c.t_grid:
            for s in c.t_grid:
                for y in c.y_grid:
                    est = correlator3(c.rho, t, s, y, c.replicas, c.seed, c.workers)
                    recs.append(self.record(est=est, param1=t, param2=s, param3=y, **common))
        for t in c.t_grid:
            for y, est in orientation_test(c.rho, t, c.y_grid, c.replicas, c.seed, c.workers).items():
                recs.append(self.record(est=est, command="orientation", param1=t, param3=y, **common))
            for y in c.y_grid:
                est = two_point(c.rho, t, y, c.replicas, c.seed, c.workers)
                recs.append(self.record(est=est, command="two-point", param1=t, param3=y, **common))
        return recs, None

    def front(self):
        from .estimators import estimate_edge_front
        c = self.cfg
        recs = []
        for rho in c.rho_grid:
            d = estimate_edge_front(rho, c.horizon, c.replicas, c.seed, c.L, workers=c.workers)
            for which, est in ((0, d.edge), (1, d.front)):
                recs.append(self.record(est=est, rho=rho, topology="segment", epsilon=None,
                                        param1=which, param2=d.violations, param3=d.censored))
        return recs, None

    def exact(self):
        from .exact import exact_suite
        c = self.cfg
        rows = exact_suite(c.L)
        recs = [self.record(command=f"exact:{name}", kind=kind, rho=rho, epsilon=eps, topology="ring",
                            horizon=None, replicas=None, value=value, param1=tol, param2=int(ok))
                for name, kind, rho, eps, value, tol, ok in rows]
        failed = [r[0] for r in rows if not r[6]]
        return recs, None, failed

    def series_check(self):
        from .exact import series_report
        c = self.cfg
        rep = series_report(self.kind, c.L, c.rho, c.eps)
        recs = [self.record(param1=n, value=term, param2=bound, param3=int(abs(term) <= bound + 1e-8),
                            horizon=rep["horizon"], replicas=None)
                for n, (term, bound) in enumerate(zip(rep["terms"], rep["bounds"]))]
        recs.append(self.record(command="series-check:remainder", param1=rep["n_partial"],
                                value=rep["remainder"], param2=rep["tail_bound"], horizon=rep["horizon"],
                                replicas=None))
        return recs, None

    def figure3(self):
        from .estimators import estimate_velocity
        c = self.cfg
        recs, ys, es = [], [], []
        for eps in c.eps_grid:
            est = estimate_velocity(self.env(), eps, c.horizon, c.replicas, c.burn_in, c.seed, c.workers,
                                    tag=f"figure3:{eps!r}")
            recs.append(self.record(est=est, epsilon=eps))
            ys.append(est.value)
            es.append(1.96 * est.se)
        return recs, dict(xs=c.eps_grid, ys=ys, errs=es, xlabel="epsilon", ylabel="velocity",
                          title=f"{self.kind.name}, rho={c.rho}", hline=0.0)

    def figure6(self):
        from .estimators import estimate_profile
        from .perturbative import first_order_profile
        c = self.cfg
        prof = estimate_profile(self.env(), c.eps, c.window, c.horizon, c.replicas, c.burn_in, c.seed, c.workers)
        recs = [self.record(est=e, param1=int(x)) for x, e in zip(prof.offsets, prof.estimates)]
        if self.kind.tag.name == "EAST":
            first = first_order_profile(c.rho, list(prof.offsets), replicas=max(c.replicas, 2000),
                                        seed=c.seed, workers=c.workers)
            for fc in first:
                e = fc.value
                recs.append(ResultRecord(
                    "figure6:first-order", self.kind.name, c.rho, c.eps, None, "segment", fc.horizon,
                    e.n, c.seed, fc.x, fc.tail_bound, None, c.rho + c.eps * e.value, abs(c.eps) * e.se,
                    c.rho + c.eps * e.ci95[0] if c.eps >= 0 else c.rho + c.eps * e.ci95[1],
                    c.rho + c.eps * e.ci95[1] if c.eps >= 0 else c.rho + c.eps * e.ci95[0],
                    e.n_batches, time.perf_counter() - self.t_start, self.version))
        return recs, dict(xs=prof.offsets, ys=prof.values, errs=1.96 * prof.ses, xlabel="offset x",
                          ylabel="density", title=f"profile, eps={c.eps}", hline=c.rho)


def run_command(cfg: RunConfig) -> int:
    runner = Runner(cfg)
    method = getattr(runner, cfg.command.replace("-", "_"))
    out = method()
    records, svg = out[0], out[1]
    failed = out[2] if len(out) > 2 else []
    write_results(records, cfg.out)
    if svg is not None:
        write_svg(runner.svg_path(), **svg)
    if failed:
        raise RuntimeError(f"oracle checks failed: {', '.join(failed)}")
    return 0


def _diag(kind: str, message: str, key: str | None = None, code: int = 3):
    payload = {"error": kind, "code": code, "message": message}
    if key is not None:
        payload["key"] = key
    print(json.dumps(payload), file=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        cfg = parse_config(argv)
    except ValidationError as exc:
        _diag("validation", str(exc), exc.key, 2)
        return 2
    except (TypeError, ValueError) as exc:
        _diag("validation", str(exc), None, 2)
        return 2
    try:
        return run_command(cfg)
    except Exception as exc:  # noqa: BLE001 - every failure maps to exit 3
        _diag(type(exc).__name__, str(exc), None, 3)
        return 3


if __name__ == "__main__":
    sys.exit(main())
