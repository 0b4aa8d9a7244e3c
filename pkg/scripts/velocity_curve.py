"""Velocity against bias on a ring, with batch-means 95% intervals.

    python3 scripts/velocity_curve.py --rho 0.5 --L 512 --horizon 1e4 --replicas 100
"""
import argparse

import numpy as np

from eastwalk.cli import write_svg
from eastwalk.env import EnvKind, EnvParams, Ring
from eastwalk.estimators import default_workers, estimate_velocity

ap = argparse.ArgumentParser()
ap.add_argument("--kind", default="east")
ap.add_argument("--rho", type=float, default=0.5)
ap.add_argument("--L", type=int, default=512)
ap.add_argument("--horizon", type=float, default=1e4)
ap.add_argument("--replicas", type=int, default=100)
ap.add_argument("--seed", type=int, default=0)
ap.add_argument("--out", default="velocity_curve.csv")
args = ap.parse_args()

env = EnvParams(EnvKind.parse(args.kind), args.rho, Ring(args.L))
eps_grid = np.round(np.arange(-0.4, 0.4001, 0.05), 10)
rows = []
for eps in eps_grid:
    v = estimate_velocity(env, eps, args.horizon, args.replicas, seed=args.seed, workers=default_workers(),
                          tag=f"curve:{eps!r}")
    lo, hi = v.ci95
    rows.append((eps, v.value, v.se, lo, hi))
    print(f"eps={eps:+.2f}  v={v.value:+.5f}  95% CI [{lo:+.5f}, {hi:+.5f}]", flush=True)

np.savetxt(args.out, rows, delimiter=",", header="eps,v,se,ci_lo,ci_hi", comments="")
write_svg(args.out.replace(".csv", ".svg"), eps_grid, [r[1] for r in rows], [1.96 * r[2] for r in rows],
          xlabel="epsilon", ylabel="velocity", title=f"{env.kind.name}, rho={args.rho}", hline=0.0)
