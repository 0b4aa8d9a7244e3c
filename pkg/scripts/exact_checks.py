"""Oracle identities on a small ring, printed as a table."""
import sys

from eastwalk.exact import exact_suite

L = int(sys.argv[1]) if len(sys.argv) > 1 else 6
rows = exact_suite(L)
for name, kind, rho, eps, value, tol, ok in rows:
    print(f"{'ok ' if ok else 'BAD'} {name:28s} {kind:12s} rho={rho} eps={eps}  {value:.3e} (tol {tol:g})")
sys.exit(0 if all(r[-1] for r in rows) else 1)
