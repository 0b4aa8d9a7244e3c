"""Density seen around the walker, next to the first-order prediction rho + eps D(x)."""
import argparse

import numpy as np

from eastwalk.cli import write_svg
from eastwalk.env import EAST, EnvParams, Kind, Ring
from eastwalk.estimators import default_workers, estimate_profile, reference_gap, sample_t0
from eastwalk.perturbative import first_order_profile, profile_horizon

ap = argparse.ArgumentParser()
ap.add_argument("--eps", type=float, default=0.1)
ap.add_argument("--L", type=int, default=256)
ap.add_argument("--window", type=int, default=12)
ap.add_argument("--horizon", type=float, default=2000.0)
ap.add_argument("--replicas", type=int, default=200)
ap.add_argument("--seed", type=int, default=0)
ap.add_argument("--out", default="density_profile.csv")
args = ap.parse_args()

rho = 0.5
w = default_workers()
prof = estimate_profile(EnvParams(EAST, rho, Ring(args.L)), args.eps, args.window, args.horizon,
                        args.replicas, seed=args.seed, workers=w)
xs = [int(x) for x in prof.offsets]
lam = reference_gap(int(Kind.EAST), rho)
T = profile_horizon(xs, rho, lam)
D = first_order_profile(rho, xs, horizon=T, t0=sample_t0(rho, T, 4000, args.seed, w), lam=lam)
pred = np.array([rho + args.eps * c.value.value for c in D])

np.savetxt(args.out, np.column_stack([xs, prof.values, prof.ses, pred]), delimiter=",",
           header="x,density,se,first_order", comments="")
for x, m, s, p in zip(xs, prof.values, prof.ses, pred):
    print(f"x={x:+3d}  density={m:.4f} +- {s:.4f}  first order {p:.4f}")
write_svg(args.out.replace(".csv", ".svg"), xs, prof.values, 1.96 * prof.ses, xlabel="offset x",
          ylabel="density", title=f"East, rho=1/2, eps={args.eps}", hline=rho)
