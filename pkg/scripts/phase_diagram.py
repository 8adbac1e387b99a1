"""Ballistic versus sub-ballistic phases of the drifted polymer.

Builds Lyapunov curves along the direction grid once, then classifies a
range of drift magnitudes along ``e1`` by the dual norm at the floor rate.
"""
import argparse

import numpy as np

from rplab.lyapunov_ldp import direction_grid, lyapunov_curve, phase_verdict
from rplab.paths import PathConfig
from rplab.potentials import make_spec


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--family", default="lacoin")
    ap.add_argument("--d", type=int, default=1)
    ap.add_argument("--gamma", type=float, default=3.0)
    ap.add_argument("--delta", type=float, default=1.5)
    ap.add_argument("--lambdas", type=float, nargs="+", default=[0.0, 0.25, 0.5, 1.0, 2.0, 4.0])
    ap.add_argument("--scales", type=float, nargs="+", default=[8.0, 16.0, 32.0])
    ap.add_argument("--drifts", type=float, nargs="+", default=[0.25, 0.5, 1.0, 1.5, 2.0, 3.0])
    ap.add_argument("--n-env", type=int, default=4)
    ap.add_argument("--n-paths", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    params = {"d": args.d}
    if args.family == "lacoin":
        params.update(gamma=args.gamma, delta=args.delta)
    spec = make_spec(args.family, **params)
    cfg = PathConfig(dt=0.01, t_max=1e6)
    curves = [lyapunov_curve(spec, u, args.lambdas, args.scales, args.n_env, args.n_paths,
                             args.seed, config=cfg) for u in direction_grid(args.d)]
    print(f"{'|h|':>6s} {'dual(0)':>9s} {'phase':>15s} {'lambda_h':>10s}")
    for m in args.drifts:
        h = np.zeros(args.d)
        h[0] = m
        v = phase_verdict(curves, h)
        lam = "" if v.lam_h is None else f"{v.lam_h:10.4f}"
        print(f"{m:6.2f} {v.dual_at_floor:9.4f} {v.classification:>15s} {lam}")


if __name__ == "__main__":
    main()
