"""Monte Carlo moments of the Lacoin potential against their closed forms.

Prints the mean, variance, exponential moments and the covariance decay
for one parameter set, with standard errors and z-scores.
"""
import argparse

import numpy as np

from rplab.potentials import (closed_form_moments, empirical_covariance, exp_moment,
                              exp_moment_mc, lacoin_covariance, make_spec, potential_at_origin)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--gamma", type=float, default=3.0)
    ap.add_argument("--delta", type=float, default=1.5)
    ap.add_argument("--n-env", type=int, default=10000)
    ap.add_argument("--lags", type=float, nargs="+", default=[2.0, 4.0, 8.0, 16.0])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    spec = make_spec("lacoin", d=args.d, gamma=args.gamma, delta=args.delta)
    mean, var = closed_form_moments(spec)
    v0 = potential_at_origin(spec, args.n_env, args.seed)
    n = v0.size
    rows = [("mean", v0.mean(), v0.std(ddof=1) / np.sqrt(n), mean),
            ("variance", v0.var(ddof=1), np.std((v0 - v0.mean()) ** 2, ddof=1) / np.sqrt(n), var)]
    for s in (0.5, 1.0):
        for R in (0.0, 1.0):
            est = exp_moment_mc(spec, s, R, args.n_env, args.seed + 1)
            rows.append((f"E exp(s S_R) s={s} R={R}", est[0], est[1], exp_moment(spec, s, R)))
    print(f"{'quantity':28s} {'estimate':>14s} {'stderr':>11s} {'exact':>14s} {'z':>7s}")
    for name, est, se, exact in rows:
        print(f"{name:28s} {est:14.6g} {se:11.3g} {exact:14.6g} {(est - exact) / se:7.2f}")

    print("\ncovariance decay (Campbell estimator)")
    logs = []
    for lag in args.lags:
        x = np.zeros(args.d)
        x[0] = lag
        c = empirical_covariance(spec, x, args.n_env // 5, args.seed + 2, method="campbell")
        ref = lacoin_covariance(spec, x)
        logs.append((np.log(lag), np.log(max(c.value, 1e-300))))
        print(f"lag {lag:6.2f}: {c.value:12.5g} +- {c.std_error:10.3g}   exact {ref:12.5g}")
    x, y = np.array(logs).T
    print(f"log-log slope {np.polyfit(x, y, 1)[0]:.3f} (tail exponent {args.d - args.delta - 2 * args.gamma:.3f})")


if __name__ == "__main__":
    main()
