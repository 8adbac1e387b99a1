"""Lyapunov exponents, the shape diagnostic, the rate function and the drift
phase diagram.

All rates live on the shifted potential ``V - v_low``: a curve stores
``alpha_mu(x)`` for shifted rates ``mu >= 0``; the unshifted rate is
``lambda = mu - v_low``.  With this convention the rate function is
``I(x) = sup_{mu >= 0} (alpha_mu(x) - mu)`` and ``lambda* = mu* - v_low``.

Every (environment, rate, scale) cell of a curve uses the same path stream
of its environment, so differences across rates and scales are computed on
common random numbers.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special
from scipy.optimize import lsq_linear, minimize_scalar

from .feynman_kac import default_horizon, e_lambda, log_mean_exp, reference_level
from .paths import Horizon, PathConfig, run_paths
from .potentials import (Constant, Zero, dirichlet_unit_ball, environment_cloud, environment_seed,
                         field_for)
from .rng import derive_seed

DEFAULT_LAMBDAS = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0)
_TAG_ENDPOINT = 5


def direction_grid(d):
    """Quasi-uniform unit directions: 2 in d=1, 16 equiangular in d=2, the 26
    normalized face/edge/corner directions of the cube in d=3."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        ang = 2 * math.pi * np.arange(16) / 16
        return np.column_stack([np.cos(ang), np.sin(ang)])
    if d == 3:
        v = np.array([p for p in itertools.product((-1, 0, 1), repeat=3) if any(p)], dtype=float)
        return v / np.linalg.norm(v, axis=1, keepdims=True)
    raise ValueError("direction grids are implemented for d in 1..3")


def tilt_speed(spec, mu):
    """Drift speed for the shifted rate ``mu``: ``sqrt(2 (mu + vbar - v_low))``.

    ``vbar`` is the mean potential level; for Zero and Constant this is the
    exact optimal tilt ``sqrt(2 mu)``.
    """
    return math.sqrt(2.0 * max(mu + reference_level(spec) - spec.v_low, 0.0))


def _random_family(spec):
    return not isinstance(spec, (Zero, Constant))


def environment(spec, seed, env, window):
    """Cloud (or None) and path stream of environment ``env``."""
    cloud = environment_cloud(spec, window, seed, env) if _random_family(spec) else None
    return cloud, environment_seed(seed, env)


def window_for(spec, reach):
    """Sampling window for paths aimed at distance ``reach``."""
    return reach + 12.0


# ---------------------------------------------------------------- curves

def is_concave_increasing(lams, y, rtol=1e-12):
    """Exact membership test for the projection's target set."""
    if y.size == 0 or y[0] < 0:
        return y.size == 0
    sl = np.diff(y) / np.diff(lams)
    tol = rtol * max(1.0, float(np.max(np.abs(y))))
    return bool(np.all(sl >= -tol) and np.all(np.diff(sl) <= tol))


def concave_projection(lams, values, se=None):
    """Weighted least-squares projection onto non-negative, non-decreasing,
    concave sequences over the grid ``lams``.

    Returns
    -------
    projected : ndarray
    distance : float
        ``max |projected - values|``.
    """
    lams = np.asarray(lams, dtype=np.float64)
    y = np.asarray(values, dtype=np.float64)
    k = y.size
    if is_concave_increasing(lams, y):
        return y.copy(), 0.0
    if k == 1:
        p = np.maximum(y, 0.0)
        return p, float(np.max(np.abs(p - y)))
    w = np.ones(k) if se is None else 1.0 / np.maximum(np.asarray(se, dtype=np.float64), 1e-12)
    dl = np.diff(lams)
    # unknowns (y0, u_1..u_{k-1}); slope_j = sum_{i >= j} u_i, all u_i >= 0
    B = np.zeros((k, k))
    B[:, 0] = 1.0
    for i in range(1, k):
        for j in range(i):
            B[i, 1 + j:] += dl[j]
    res = lsq_linear(w[:, None] * B, w * y, bounds=(np.zeros(k), np.full(k, np.inf)),
                     method="bvls", tol=1e-14)
    p = B @ res.x
    return p, float(np.max(np.abs(p - y)))


@dataclass(frozen=True, eq=False)
class LyapunovCurve:
    """Estimates of ``a(0, r x)/r`` over a (rate, scale) grid and the fitted
    ``alpha_mu(x)``.

    ``a_over_r`` and ``path_se`` have shape ``(n_lam, n_scale, n_env)``.
    ``alpha`` is the environment mean at the largest scale; ``projected`` is
    its isotonic-concave projection over the rate grid.
    """

    x: tuple
    lams: tuple
    scales: tuple
    v_low: float
    a_over_r: np.ndarray
    path_se: np.ndarray
    censored: np.ndarray
    alpha: np.ndarray
    std_error: np.ndarray
    projected: np.ndarray
    projection_distance: float
    monotone_in_scale: np.ndarray
    n_paths: int
    confidence: float = 0.99
    meta: dict = field(default_factory=dict)

    @property
    def magnitude(self):
        return float(np.linalg.norm(self.x))

    @property
    def direction(self):
        m = self.magnitude
        return tuple(np.asarray(self.x) / m) if m > 0 else tuple(self.x)

    @property
    def n_env(self):
        return self.a_over_r.shape[2]

    @property
    def half_width(self):
        return special.ndtri(0.5 + self.confidence / 2) * self.std_error

    @property
    def ci_low(self):
        return self.alpha - self.half_width

    @property
    def ci_high(self):
        return self.alpha + self.half_width

    def alpha_at(self, mu):
        """Projected ``alpha_mu`` at any rate in the grid range.

        ``alpha^2`` is interpolated linearly in ``mu`` (exact for
        ``sqrt(2 mu)`` profiles).
        """
        lams = np.asarray(self.lams)
        if mu < lams[0] - 1e-12 or mu > lams[-1] + 1e-12:
            raise ValueError(f"rate {mu} outside the curve range [{lams[0]}, {lams[-1]}]")
        return float(math.sqrt(max(np.interp(mu, lams, self.projected ** 2), 0.0)))

    def se_at(self, mu):
        return float(np.interp(mu, np.asarray(self.lams), self.std_error))

    def scaled(self, c):
        """Curve of ``c x`` (``c > 0``) by homogeneity."""
        if c <= 0:
            raise ValueError("scale factor must be positive")
        return replace(self, x=tuple(c * np.asarray(self.x)), a_over_r=c * self.a_over_r,
                       path_se=c * self.path_se, alpha=c * self.alpha, std_error=c * self.std_error,
                       projected=c * self.projected,
                       projection_distance=c * self.projection_distance)

    def rescaled_alpha(self, c):
        """Same curve with every alpha value multiplied by ``c``."""
        return replace(self.scaled(c), x=self.x)

    def checks(self, k=3.0):
        """Monotonicity, concavity and flattening diagnostics on the raw values."""
        a, s = self.alpha, self.std_error
        lams = np.asarray(self.lams)
        d1 = np.diff(a)
        s1 = np.sqrt(s[1:] ** 2 + s[:-1] ** 2)
        mono = bool(np.all(d1 >= -k * s1))
        conc = True
        if a.size >= 3:
            # second divided differences on the uneven grid
            sl = d1 / np.diff(lams)
            d2 = np.diff(sl)
            s2 = np.sqrt(s1[1:] ** 2 / np.diff(lams)[1:] ** 2 + s1[:-1] ** 2 / np.diff(lams)[:-1] ** 2)
            conc = bool(np.all(d2 <= k * s2))
            flat = bool(sl[-1] < sl[0])
        else:
            flat = True
        med = float(np.median(self.half_width))
        return {"monotone": mono, "concave": conc, "flattening": flat,
                "projection_distance": self.projection_distance, "median_ci": med,
                "projection_ok": bool(self.projection_distance < 2 * med)
                if med > 0 else self.projection_distance < 1e-12,
                "monotone_in_scale": bool(np.all(self.monotone_in_scale))}

    def rows(self, direction_index=0):
        """CSV rows ``lambda,scale,direction_index,a_over_r,stderr,n_env,n_paths``."""
        out = []
        for i, mu in enumerate(self.lams):
            for j, r in enumerate(self.scales):
                vals = self.a_over_r[i, j]
                se = _mean_se(vals, self.path_se[i, j])
                out.append([repr(float(mu)), repr(float(r)), str(direction_index),
                            repr(float(np.mean(vals))), repr(se), str(self.n_env), str(self.n_paths)])
        return out


CELL_HEADER = ["lambda", "scale", "direction_index", "a_over_r", "stderr", "n_env", "n_paths"]


def _mean_se(vals, path_se):
    n = vals.size
    if n > 1:
        return float(np.std(vals, ddof=1) / math.sqrt(n))
    return float(path_se[0])


def _bootstrap_se(vals, path_se, rng, n_boot):
    if vals.size == 1:
        return float(path_se[0])
    idx = rng.integers(0, vals.size, size=(n_boot, vals.size))
    return float(np.std(vals[idx].mean(axis=1), ddof=1))


def cell_estimates(spec, x, lams, scales, n_env, n_paths, seed=0, config=None, speed=None,
                   workers=None, env_offset=0):
    """Raw ``a(0, r x)/r`` per (rate, scale, environment).

    ``config`` sets the time step; its ``t_max`` caps the per-cell default
    horizon (untilted cells otherwise run for ``4 dist^2``).

    Returns arrays ``(a_over_r, path_se, censored)`` of shape
    ``(n_lam, n_scale, n_env)`` and a dict of counters.
    """
    d = spec.d
    x = np.asarray(x, dtype=np.float64).reshape(d)
    lams = [float(m) for m in lams]
    scales = [float(r) for r in scales]
    mag = float(np.linalg.norm(x))
    if mag == 0:
        raise ValueError("x must be non-zero")
    if min(scales) * mag <= 1.0:
        raise ValueError("every target r x must lie outside the unit ball (r |x| > 1)")
    u = x / mag
    speed_of = (lambda mu: tilt_speed(spec, mu)) if speed is None else speed
    nl, ns = len(lams), len(scales)
    A = np.empty((nl, ns, n_env))
    S = np.empty_like(A)
    C = np.zeros_like(A, dtype=bool)
    counters = {"window_exits": 0, "abandoned": 0, "horizon": 0, "hits": 0}
    window = window_for(spec, max(scales) * mag)
    for e in range(n_env):
        cloud, stream = environment(spec, seed, env_offset + e, window)
        for i, mu in enumerate(lams):
            sp = speed_of(mu)
            for j, r in enumerate(scales):
                dist = r * mag
                horizon = default_horizon(dist, sp)
                if config is None:
                    cfg = PathConfig(dt=0.01, t_max=horizon)
                else:
                    cfg = config.with_(t_max=min(horizon, config.t_max))
                est = e_lambda(spec, cloud, r * x, mu - spec.v_low, n_paths, tilt=u * sp,
                               config=cfg, seed=seed, stream=stream, workers=workers)
                A[i, j, e] = est.a / r
                S[i, j, e] = est.a_std_error / r if math.isfinite(est.a_std_error) else math.inf
                C[i, j, e] = est.extras["censored"]
                for key in counters:
                    counters[key] += est.extras[key]
    return A, S, C, counters


def scale_trend(means, ses, z=2.576):
    """Classify scale means: 'decreasing', 'increasing', 'flat' or 'zigzag'.

    Only moves beyond ``z`` joint standard errors count.  Hitting functionals
    of a unit ball carry a ``-alpha/r`` offset and a logarithmic prefactor, so
    an increasing trend is expected; a zigzag flags too few paths or a poor
    tilt.
    """
    up = down = False
    for j in range(len(means) - 1):
        tol = z * math.hypot(ses[j], ses[j + 1])
        up |= means[j + 1] > means[j] + tol
        down |= means[j + 1] < means[j] - tol
    if up and down:
        return "zigzag"
    return "increasing" if up else "decreasing" if down else "flat"


def assemble_curve(x, lams, scales, v_low, A, S, C, n_paths, seed=0, n_boot=200,
                   confidence=0.99, meta=None):
    """Reduce a cell table to a :class:`LyapunovCurve` (single-threaded, deterministic)."""
    lams = tuple(float(m) for m in lams)
    scales = tuple(float(r) for r in scales)
    rng = np.random.default_rng(derive_seed(seed, 11) & 0xFFFFFFFF)
    top = A[:, -1, :]
    alpha = top.mean(axis=1)
    se = np.array([_bootstrap_se(top[i], S[i, -1], rng, n_boot) for i in range(len(lams))])
    z = special.ndtri(0.5 + confidence / 2)
    trend = []
    for i in range(len(lams)):
        means = A[i].mean(axis=1)
        ses = np.array([_mean_se(A[i, j], S[i, j]) for j in range(len(scales))])
        trend.append(scale_trend(means, ses, z))
    proj, dist = concave_projection(lams, alpha, se)
    mono = np.array([t != "zigzag" for t in trend])
    meta = dict(meta or {}, scale_trend=tuple(trend))
    return LyapunovCurve(tuple(float(v) for v in x), lams, scales, float(v_low), A, S, C, alpha,
                         se, proj, dist, mono, int(n_paths), confidence, meta)


def lyapunov_curve(spec, x, lams=DEFAULT_LAMBDAS, scales=(8.0, 16.0, 32.0), n_env=10,
                   n_paths=1000, seed=0, config=None, speed=None, n_boot=200, confidence=0.99,
                   workers=None):
    """Estimate ``alpha_mu(x)`` over the shifted-rate grid ``lams``.

    Parameters
    ----------
    x : array_like
        Direction and magnitude; targets are ``r x`` for ``r`` in ``scales``.
    lams : sequence of float
        Shifted rates ``mu >= 0`` (``lambda = mu - v_low``).
    scales : sequence of float
        At least 3 increasing scales.
    speed : callable, optional
        ``mu -> tilt speed``; default :func:`tilt_speed`.
    """
    scales = [float(r) for r in scales]
    if len(scales) < 3 or any(b <= a for a, b in zip(scales, scales[1:])):
        raise ValueError("scales must be increasing with at least 3 values")
    if any(m < 0 for m in lams) or any(b <= a for a, b in zip(lams, lams[1:])):
        raise ValueError("shifted rates must be increasing and >= 0")
    A, S, C, counters = cell_estimates(spec, x, lams, scales, n_env, n_paths, seed, config, speed,
                                       workers)
    return assemble_curve(x, lams, scales, spec.v_low, A, S, C, n_paths, seed, n_boot, confidence,
                          {"family": spec.family, **counters})


@dataclass(frozen=True)
class AlphaEstimate:
    alpha: float
    std_error: float
    ci_low: float
    ci_high: float
    per_scale: tuple
    per_scale_se: tuple
    monotone_in_scale: bool
    censored: bool


def estimate_alpha(spec, x, lam, scales, n_env, n_paths, seed=0, config=None, speed=None,
                   n_boot=200, confidence=0.99, workers=None):
    """``alpha_lam(x)`` from the largest scale, with an environment bootstrap CI.

    ``lam`` is the shifted rate (``>= 0``).  ``monotone_in_scale`` is False when
    the scale means increase beyond their CI (insufficient paths or tilt
    failure).
    """
    c = lyapunov_curve(spec, x, [lam], scales, n_env, n_paths, seed, config, speed, n_boot,
                       confidence, workers)
    means = c.a_over_r[0].mean(axis=1)
    ses = [_mean_se(c.a_over_r[0, j], c.path_se[0, j]) for j in range(len(c.scales))]
    return AlphaEstimate(float(c.alpha[0]), float(c.std_error[0]), float(c.ci_low[0]),
                         float(c.ci_high[0]), tuple(float(v) for v in means),
                         tuple(float(v) for v in ses), bool(c.monotone_in_scale[0]),
                         bool(c.censored.any()))


# ---------------------------------------------------------------- shape

@dataclass(frozen=True)
class ShapeReport:
    scales: tuple
    directions: np.ndarray
    a_over_r: np.ndarray     # (n_scale, n_dir, n_env)
    path_se: np.ndarray
    reference: np.ndarray    # (n_dir,)
    deviation: np.ndarray    # (n_scale,) mean over environments of the max over directions
    deviation_se: np.ndarray
    per_environment: np.ndarray  # (n_scale, n_env)

    def trend_down(self):
        return bool(np.all(np.diff(self.deviation) < 0))


def shape_deviation(values, reference):
    """``max_j |values_j - reference_j|``; invariant under relabeling."""
    return float(np.max(np.abs(np.asarray(values) - np.asarray(reference))))


def shape_diagnostic(spec, lam, directions, scales, n_env, n_paths, seed=0, reference=None,
                     config=None, speed=None, workers=None):
    """Directional deviation of ``a(0, r u)/r`` from ``alpha_lam(u)``.

    ``reference`` defaults to the environment mean at the largest scale per
    direction.  All directions share the environment's path stream.
    """
    dirs = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    if dirs.shape[0] < 2:
        raise ValueError("need at least 2 directions")
    if not np.allclose(np.linalg.norm(dirs, axis=1), 1.0):
        raise ValueError("directions must be unit vectors")
    scales = [float(r) for r in scales]
    nd, ns = dirs.shape[0], len(scales)
    A = np.empty((ns, nd, n_env))
    S = np.empty_like(A)
    for k, u in enumerate(dirs):
        a, s, _, _ = cell_estimates(spec, u, [lam], scales, n_env, n_paths, seed, config, speed,
                                    workers)
        A[:, k, :] = a[0]
        S[:, k, :] = s[0]
    ref = A[-1].mean(axis=1) if reference is None else np.broadcast_to(
        np.asarray(reference, dtype=np.float64), (nd,)).copy()
    per_env = np.array([[shape_deviation(A[j, :, e], ref) for e in range(n_env)]
                        for j in range(ns)])
    dev = per_env.mean(axis=1)
    dse = per_env.std(axis=1, ddof=1) / math.sqrt(n_env) if n_env > 1 else np.zeros(ns)
    return ShapeReport(tuple(scales), dirs, A, S, ref, dev, dse, per_env)


# ---------------------------------------------------------------- rate function

@dataclass(frozen=True)
class RateFunctionReport:
    x: tuple
    rate: float
    lam_star: float
    lower: float
    upper: float
    std_error: float
    verdicts: dict
    censored: bool
    projection_distance: float

    def to_dict(self):
        return {"x": list(self.x), "I": self.rate, "lambda_star": self.lam_star,
                "lower": self.lower, "upper": self.upper, "std_error": self.std_error,
                "verdicts": self.verdicts, "censored": self.censored,
                "projection_distance": self.projection_distance}


def _sup_rate(curve):
    lams = np.asarray(curve.lams)
    g = lambda m: curve.alpha_at(m) - m
    res = minimize_scalar(lambda m: -g(m), bounds=(lams[0], lams[-1]), method="bounded",
                          options={"xatol": 1e-10})
    cands = [(g(m), m) for m in lams] + [(g(res.x), float(res.x))]
    val, mu = max(cands)
    return val, mu


def rate_function(curve, v_low=None, sup_mean=0.0, extend=None, max_extensions=4, k=3.0):
    """``I(x) = sup_{mu >= 0} (alpha_mu(x) - mu)`` on the projected curve.

    Parameters
    ----------
    curve : LyapunovCurve
        Curve of the point ``x`` itself (use :meth:`LyapunovCurve.scaled`).
    v_low : float, optional
        Declared infimum; only shifts the reported maximizer
        ``lambda* = mu* - v_low``.  Default ``curve.v_low``.
    sup_mean : float
        Estimate of ``E sup_{B(0)} V`` for the upper sandwich bound.
    extend : callable, optional
        ``extend(mu_max) -> LyapunovCurve`` over a grid reaching ``mu_max``;
        called with a doubled ``mu_max`` while the maximizer sits on the
        boundary.  Without it such a result is flagged ``censored``.
    """
    v_low = curve.v_low if v_low is None else float(v_low)
    x = np.asarray(curve.x)
    r2 = float(x @ x) / 2
    d = x.size
    upper = r2 + dirichlet_unit_ball(d) + sup_mean
    if curve.magnitude == 0:
        return RateFunctionReport(tuple(x), 0.0, -v_low, 0.0, upper, 0.0,
                                  {"lower": True, "upper": True}, False, 0.0)
    censored = False
    for it in range(max_extensions + 1):
        val, mu = _sup_rate(curve)
        top = curve.lams[-1]
        at_edge = mu >= top - 1e-6 * max(1.0, top)
        if not at_edge:
            break
        if extend is None or it == max_extensions:
            censored = True
            break
        curve = extend(2 * top)
    se = curve.se_at(mu)
    verdicts = {"lower": bool(val >= r2 - k * se), "upper": bool(val <= upper + k * se)}
    return RateFunctionReport(tuple(float(v) for v in x), float(val), float(mu - v_low), r2, upper,
                              float(se), verdicts, censored, curve.projection_distance)


# ---------------------------------------------------------------- dual norm and phases

def dual_norm(curves, lam, h):
    """``max_j (u_j . h) / alpha_lam(u_j)`` over the direction curves.

    Returns ``math.inf`` when some direction with ``u . h > 0`` has
    ``alpha = 0``.
    """
    h = np.asarray(h, dtype=np.float64)
    best = 0.0
    for c in curves:
        u = np.asarray(c.x) / c.magnitude
        a = c.alpha_at(lam) / c.magnitude
        dot = float(u @ h)
        if a <= 0:
            if dot > 0:
                return math.inf
            continue
        best = max(best, dot / a)
    return best


@dataclass(frozen=True)
class PhaseVerdict:
    h: tuple
    dual_at_floor: float
    classification: str
    lam_h: float | None
    interval: tuple | None = None

    def to_dict(self):
        return {"h": list(self.h), "dual_at_floor": _json_num(self.dual_at_floor),
                "classification": self.classification, "lambda_h": self.lam_h,
                "interval": list(self.interval) if self.interval else None}


def _json_num(v):
    return "inf" if v == math.inf else v


def phase_verdict(curves, h, v_low=None, tol=1e-4):
    """Ballistic iff the dual norm at the floor rate exceeds 1.

    When ballistic, ``lambda_h`` solves ``dual(mu) = 1`` by bisection on the
    shifted rate (tolerance ``tol``) and is reported unshifted.  Curves that
    do not reach ``dual <= 1`` give ``undetermined`` with the bracketing
    interval.
    """
    h = np.asarray(h, dtype=np.float64)
    v_low = curves[0].v_low if v_low is None else float(v_low)
    lo_mu = curves[0].lams[0]
    hi_mu = min(c.lams[-1] for c in curves)
    if lo_mu != 0.0:
        raise ValueError("curves must start at the floor rate mu = 0")
    if not np.any(h):
        return PhaseVerdict(tuple(h), 0.0, "sub-ballistic", None)
    d0 = dual_norm(curves, 0.0, h)
    if d0 <= 1.0:
        return PhaseVerdict(tuple(h), d0, "sub-ballistic", None)
    f = lambda m: dual_norm(curves, m, h) - 1.0
    if f(hi_mu) > 0:
        return PhaseVerdict(tuple(h), d0, "undetermined", None, (hi_mu - v_low, math.inf))
    a, b = lo_mu, hi_mu
    while b - a > tol:
        m = 0.5 * (a + b)
        if f(m) > 0:
            a = m
        else:
            b = m
    mu = 0.5 * (a + b)
    return PhaseVerdict(tuple(h), d0, "ballistic", float(mu - v_low), (a - v_low, b - v_low))


# ---------------------------------------------------------------- endpoint LDP

@dataclass(frozen=True)
class EndpointRate:
    t: float
    rate: float
    std_error: float
    hits: int
    censored: bool


@dataclass(frozen=True)
class EndpointReport:
    v: tuple
    r: float
    rates: tuple
    target: float | None

    def trend(self):
        """Distances of the rates to the target, in t order."""
        if self.target is None:
            return None
        return [abs(e.rate - self.target) for e in self.rates]


def endpoint_ldp_check(spec, cloud, v, r, t_grid, n_paths, seed=0, dt=0.01, rate_fn=None,
                       workers=None):
    """``(1/t) log Q_t(Z_t in t B(v, r))`` for the quenched path measure.

    The numerator uses paths with drift ``v`` and the Girsanov weight
    ``exp(-v . Z_t + |v|^2 t / 2)``; the normalizer ``S_t`` uses undrifted
    paths.  Both ensembles share streams across ``t``.  ``rate_fn(y)``, when
    given, yields the target ``-inf_{B(v, r)} I`` (approximated on the center
    and a boundary sample of the ball).
    """
    d = spec.d
    v = np.asarray(v, dtype=np.float64).reshape(d)
    F = field_for(spec, cloud)
    env = 0 if cloud is None else int(cloud.seed)
    out = []
    for t in t_grid:
        t = float(t)
        cfg = PathConfig(dt=dt, t_max=t)
        key = derive_seed(seed, _TAG_ENDPOINT, env)
        tilted = run_paths(F, d, cfg.with_(drift=tuple(v) if np.any(v) else None), Horizon(),
                           np.zeros(d), n_paths, key, workers=workers)
        plain = run_paths(F, d, cfg, Horizon(), np.zeros(d), n_paths, derive_seed(key, 1),
                          workers=workers)
        inside = np.linalg.norm(tilted.endpoint - t * v, axis=1) < t * r
        logw = np.where(inside, -tilted.integral_V + tilted.log_weight, -np.inf)
        ln, rel_n = log_mean_exp(logw)
        ls, rel_s = log_mean_exp(-plain.integral_V)
        hits = int(inside.sum())
        if hits == 0 or not math.isfinite(ln):
            out.append(EndpointRate(t, -math.inf, math.inf, 0, True))
            continue
        out.append(EndpointRate(t, (ln - ls) / t, math.hypot(rel_n, rel_s) / t, hits, False))
    target = None
    if rate_fn is not None:
        pts = [v] + list(v + r * 0.999 * direction_grid(d)) if d <= 3 else [v]
        target = -min(rate_fn(p) for p in pts)
    return EndpointReport(tuple(v), float(r), tuple(out), target)


def write_cells(curves, path):
    """CSV of all cells of a family of direction curves."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CELL_HEADER)
        for k, c in enumerate(curves):
            w.writerows(c.rows(k))
