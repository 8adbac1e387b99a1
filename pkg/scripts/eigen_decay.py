"""Principal Dirichlet eigenvalue of the random operator on growing balls.

Prints ``lambda(B(0, R))`` per environment and radius, the ``a + b / R^2``
extrapolation and the limit interval.
"""
import argparse

from rplab.potentials import make_spec
from rplab.spectrum import lambda_V_limit, write_records


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--family", default="lacoin")
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--gamma", type=float, default=3.0)
    ap.add_argument("--delta", type=float, default=1.5)
    ap.add_argument("--R", type=float, nargs="+", default=[4.0, 8.0, 16.0])
    ap.add_argument("--h", type=float, default=0.125)
    ap.add_argument("--n-env", type=int, default=3)
    ap.add_argument("--csv", default=None)
    args = ap.parse_args()

    params = {"d": args.d}
    if args.family == "lacoin":
        params.update(gamma=args.gamma, delta=args.delta)
    spec = make_spec(args.family, **params)
    lim = lambda_V_limit(spec, args.R, list(range(args.n_env)), h=args.h)
    print(f"{'env':>4s} " + " ".join(f"R={r:<8g}" for r in args.R) + "  monotone")
    for s, vals in lim.per_environment.items():
        print(f"{s:4d} " + " ".join(f"{v:10.5f}" for v in vals) + f"  {lim.monotone[s]}")
    print(f"fit a + b/R^2: a = {lim.fit[0]:.5f}, b = {lim.fit[1]:.4f}")
    print(f"limit interval [{lim.limit_low:.5f}, {lim.limit_high:.5f}], "
          f"spread at R_max {lim.spread:.4f}")
    if args.csv:
        write_records(lim.records, args.csv)


if __name__ == "__main__":
    main()
