"""Speeds of the East front and the degenerate edge walker on a long segment."""
import argparse

from eastwalk.estimators import default_workers, estimate_edge_front

ap = argparse.ArgumentParser()
ap.add_argument("--rho", type=float, nargs="+", default=[0.3, 0.5, 0.7])
ap.add_argument("--horizon", type=float, default=500.0)
ap.add_argument("--replicas", type=int, default=100)
ap.add_argument("--L", type=int, default=4096)
ap.add_argument("--seed", type=int, default=0)
args = ap.parse_args()

print("rho,edge_v,edge_se,front_v,front_se,violations,censored,min_events")
for rho in args.rho:
    d = estimate_edge_front(rho, args.horizon, args.replicas, seed=args.seed, L=args.L, workers=default_workers())
    print(f"{rho},{d.edge.value:.5f},{d.edge.se:.5f},{d.front.value:.5f},{d.front.se:.5f},"
          f"{d.violations},{d.censored},{d.min_events}", flush=True)
