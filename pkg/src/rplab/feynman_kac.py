"""Quenched Feynman-Kac functionals by Monte Carlo.

Estimators
----------
survival        S_t = E_0[exp(-int_0^t V(Z_s) ds)]
decay_rate      least-squares slope of -log S_t in t
e_lambda        E_0[exp(-int_0^H (lambda + V)(Z_s) ds); H < inf], H the hitting
                time of the closed unit ball at x, with Girsanov tilting
metric_d        max of the two directional hitting costs between unit balls
green           occupation density of a small cell, killed by V + lambda_floor

Weights are combined in log space; every estimate carries its own standard
error.  A single environment is passed as ``(spec, cloud)``; deterministic
families take ``cloud=None``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special, stats

from . import _kernel as K
from .paths import Abandon, ExitBall, HitBall, Horizon, PathConfig, run_paths
from .potentials import (Constant, Lacoin, PolyTail, Ruess, TruncationError, Zero,
                         closed_form_moments, field_for, unit_ball_volume)
from .rng import derive_seed

_TAG_PATHS = 2


@dataclass(frozen=True)
class FunctionalEstimate:
    """A Monte Carlo estimate with its uncertainty.

    ``std_error`` is absolute; ``rel_error`` is ``std_error / value`` and is
    kept separately because tiny values underflow when scaled back.
    """

    quantity: str
    value: float
    log_value: float
    std_error: float
    rel_error: float
    n_paths: int
    tilt_drift: tuple
    environment_seed: int
    point: tuple = ()
    lam: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def a(self):
        """``-log value``; the one-sided lower bound when no path hit."""
        if self.extras.get("censored"):
            return self.extras["a_lower_bound"]
        return -self.log_value

    @property
    def a_std_error(self):
        return self.rel_error

    def ci(self, confidence=0.99):
        z = special.ndtri(0.5 + confidence / 2)
        return self.value - z * self.std_error, self.value + z * self.std_error

    def csv_row(self, d):
        pt = list(self.point) + [float("nan")] * (d - len(self.point))
        return ([self.quantity] + [_fmt(v) for v in pt[:d]]
                + [_fmt(self.lam), _fmt(self.value), _fmt(self.log_value), _fmt(self.std_error),
                   str(self.n_paths), str(self.environment_seed)])

    def to_dict(self):
        return asdict(self)


def _fmt(v):
    return repr(float(v))


def csv_header(d):
    return ["quantity"] + [f"x{i + 1}" for i in range(d)] + [
        "lambda", "value", "log_value", "stderr", "n_paths", "env_seed"]


def log_mean_exp(logw):
    """``log(mean(exp(logw)))`` and the relative standard error of that mean."""
    logw = np.asarray(logw, dtype=np.float64)
    n = logw.size
    top = np.max(logw)
    if not np.isfinite(top):
        return -math.inf, math.inf
    w = np.exp(logw - top)
    m = np.sum(w) / n
    sd = math.sqrt(max(np.sum((w - m) ** 2) / max(n - 1, 1), 0.0))
    return top + math.log(m), sd / (m * math.sqrt(n))


def _estimate(quantity, logw, n, drift, env_seed, point, lam, extras):
    lv, rel = log_mean_exp(logw)
    val = math.exp(lv) if lv > -745 else 0.0
    return FunctionalEstimate(quantity, val, lv, val * rel if math.isfinite(rel) else 0.0,
                              rel, int(n), tuple(float(v) for v in drift), int(env_seed),
                              tuple(float(v) for v in point), float(lam), extras)


def _env_seed(cloud):
    return 0 if cloud is None else int(cloud.seed)


def path_seed(seed, cloud, purpose=0):
    """Stream key for the paths run in one environment."""
    return derive_seed(seed, _TAG_PATHS, _env_seed(cloud), purpose)


def reference_level(spec):
    """Mean potential level, used to size tilts on rough environments."""
    if isinstance(spec, Zero):
        return 0.0
    if isinstance(spec, Constant):
        return float(spec.c)
    if isinstance(spec, Lacoin):
        return closed_form_moments(spec)[0]
    if isinstance(spec, PolyTail):
        ld = unit_ball_volume(spec.d)
        return spec.c9 * ld * (1.0 + spec.d / (spec.gamma - spec.d))
    if isinstance(spec, Ruess):
        covered = 1.0 - math.exp(-2.0 * spec.R * spec.nu)
        return spec.m * covered + spec.M * (1.0 - covered)
    raise TypeError(f"unknown family {spec!r}")


# ---------------------------------------------------------------- survival

def survival_curve(spec, cloud, t_grid, n_paths, config=None, seed=0, killing_radius=None,
                   workers=None):
    """Survival estimates at every time of ``t_grid`` from one path ensemble.

    Returns
    -------
    list of FunctionalEstimate, and the (n_paths, len(t_grid)) matrix of
    accumulated integrals (``inf`` where the path was killed by the ball exit).
    """
    t_grid = np.asarray(sorted(t_grid), dtype=np.float64)
    config = config or PathConfig(dt=0.01, t_max=float(t_grid[-1]))
    if t_grid[-1] > config.t_max + 1e-12:
        raise ValueError(f"t = {t_grid[-1]} exceeds t_max = {config.t_max}")
    d = spec.d
    cfg = config.with_(t_max=float(t_grid[-1]), drift=None)
    stop = Horizon() if killing_radius is None else ExitBall(tuple(np.zeros(d)), killing_radius)
    batch = run_paths(field_for(spec, cloud), d, cfg, stop, np.zeros(d), n_paths,
                      path_seed(seed, cloud, 1), checkpoints=t_grid, workers=workers)
    nwin = batch.count("window_exit")
    if nwin:
        raise TruncationError(f"{nwin} of {n_paths} paths left the exact window of radius "
                              f"{cloud.window_radius} before t = {t_grid[-1]}; enlarge the window")
    ck = batch.checkpoints
    out = []
    for j, t in enumerate(t_grid):
        out.append(_estimate("survival", -ck[:, j], n_paths, np.zeros(d), _env_seed(cloud),
                             (), 0.0, {"t": float(t), "dt": cfg.dt,
                                       "killing_radius": killing_radius}))
    return out, ck


def survival(spec, cloud, t, n_paths, config=None, seed=0, workers=None):
    """``S_t`` from ``n_paths`` Horizon-stopped paths started at the origin."""
    config = config or PathConfig(dt=0.01, t_max=float(t))
    if t > config.t_max + 1e-12:
        raise ValueError(f"t = {t} exceeds t_max = {config.t_max}")
    return survival_curve(spec, cloud, [t], n_paths, config, seed, workers=workers)[0][0]


@dataclass(frozen=True)
class DecayFit:
    slope: float
    std_error: float
    ci_low: float
    ci_high: float
    intercept: float
    per_environment: tuple
    t_grid: tuple


def _ols_slope(t, y):
    A = np.column_stack([t, np.ones_like(t)])
    coef = np.linalg.lstsq(A, y, rcond=None)[0]
    return coef[0], coef[1]


def decay_rate(spec, clouds, t_grid, n_paths, config=None, seed=0, killing_radius=None,
               n_boot=200, confidence=0.99, workers=None):
    """Slope of ``-log S_t`` against ``t`` over a sequence of environments.

    Each environment gets an OLS slope; its uncertainty comes from a path-level
    bootstrap (the survival values at different times share paths).  The
    reported slope is the mean over environments; the interval combines the
    bootstrap variances (one environment) or the across-environment spread.

    Raises
    ------
    ArithmeticError
        If some survival estimate is zero (all weights underflowed).
    """
    t = np.asarray(sorted(t_grid), dtype=np.float64)
    if t.size < 4:
        raise ValueError("decay_rate needs at least 4 times")
    clouds = list(clouds) if clouds is not None else [None]
    slopes, variances, intercepts = [], [], []
    for cl in clouds:
        ests, ck = survival_curve(spec, cl, t, n_paths, config, seed, killing_radius, workers)
        y = np.array([-e.log_value for e in ests])
        if not np.all(np.isfinite(y)):
            raise ArithmeticError("a survival estimate is zero; increase n_paths")
        b, a = _ols_slope(t, y)
        rng = np.random.default_rng(derive_seed(seed, 7, _env_seed(cl)) & 0xFFFFFFFF)
        boots = np.empty(n_boot)
        for i in range(n_boot):
            idx = rng.integers(0, ck.shape[0], ck.shape[0])
            yb = np.array([-log_mean_exp(-ck[idx, j])[0] for j in range(t.size)])
            boots[i] = _ols_slope(t, yb)[0] if np.all(np.isfinite(yb)) else np.nan
        slopes.append(b)
        intercepts.append(a)
        variances.append(float(np.nanvar(boots, ddof=1)))
    slopes = np.array(slopes)
    m = float(np.mean(slopes))
    if slopes.size > 1:
        se = float(np.std(slopes, ddof=1) / math.sqrt(slopes.size))
    else:
        se = math.sqrt(variances[0])
    z = special.ndtri(0.5 + confidence / 2)
    return DecayFit(m, se, m - z * se, m + z * se, float(np.mean(intercepts)),
                    tuple(float(s) for s in slopes), tuple(float(v) for v in t))


# ---------------------------------------------------------------- hitting functionals

def default_horizon(dist, speed):
    """Horizon long enough for a tilted path to cover ``dist`` several times over."""
    if speed > 0:
        return 4.0 * dist / speed + 20.0
    return max(100.0, 4.0 * dist * dist)


def e_lambda(spec, cloud, x, lam, n_paths, tilt=None, config=None, seed=0, start=None,
             abandon_margin=None, purpose=0, stream=None, workers=None):
    """Importance-sampled ``e_lambda(start, x)`` for the closed unit ball at ``x``.

    Parameters
    ----------
    x : array_like
        Target ball center, ``|x - start| > 1``.
    lam : float
        Killing rate added to ``V``; ``lam >= -v_low`` so the total rate
        stays non-negative.
    tilt : array_like, optional
        Drift of the sampling measure.  Default ``sqrt(2 lam) (x - start)/|x - start|``.
    config : PathConfig, optional
        Step and horizon; the drift field is overridden by ``tilt``.
    abandon_margin : float, optional
        Paths that overshoot the target plane by this much are dropped.
        Default ``1 + 3/|tilt|`` (no abandonment without tilt).
    purpose : int
        Extra stream index, to draw independent ensembles from one seed.
    stream : int, optional
        Environment stream id; default is the cloud seed (0 without cloud).

    Returns
    -------
    FunctionalEstimate
        ``extras`` holds hit counts, ``neglected_mass_bound = exp(-lam t_max)``
        and, when no path hit, ``censored=True`` with ``a_lower_bound = lam t_max``.
    """
    d = spec.d
    start = np.zeros(d) if start is None else np.asarray(start, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64).reshape(d)
    if lam + spec.v_low < 0:
        raise ValueError("lambda must be >= -v_low")
    gap = x - start
    dist = float(np.linalg.norm(gap))
    if dist <= 1.0:
        raise ValueError("the start must lie outside the closed target ball (|x - start| > 1)")
    u = gap / dist
    h = u * math.sqrt(2.0 * max(lam, 0.0)) if tilt is None else np.asarray(tilt, dtype=np.float64).reshape(d)
    speed = float(np.linalg.norm(h))
    base = config or PathConfig(dt=0.01, t_max=default_horizon(dist, speed))
    cfg = base.with_(drift=tuple(h) if speed > 0 else None)
    ab = None
    margin = None
    if speed > 0:
        margin = 1.0 + 3.0 / speed if abandon_margin is None else float(abandon_margin)
        ab = Abandon(tuple(u), tuple(x), margin)
    env = _env_seed(cloud) if stream is None else int(stream)
    batch = run_paths(field_for(spec, cloud), d, cfg, HitBall(tuple(x), 1.0), start, n_paths,
                      derive_seed(seed, _TAG_PATHS, env, purpose), abandon=ab, workers=workers)
    hit = batch.event == K.EV_HIT
    # the Girsanov weight belongs to the hitting point on the sphere, not to the
    # overshot grid endpoint; projecting removes the O(sqrt(dt)) overshoot bias
    tau = batch.stop_time
    gir = np.zeros(n_paths)
    if speed > 0:
        off = batch.endpoint - x
        nrm = np.linalg.norm(off, axis=1, keepdims=True)
        exit_pt = x + off / np.where(nrm > 0, nrm, 1.0)
        gir = -(exit_pt - start) @ h + 0.5 * speed * speed * tau
    logw = np.where(hit, -lam * tau - batch.integral_V + gir, -np.inf)
    extras = {"hits": int(hit.sum()), "abandoned": batch.count("abandoned"),
              "window_exits": batch.count("window_exit"), "horizon": batch.count("horizon"),
              "t_max": cfg.t_max, "dt": cfg.dt, "abandon_margin": margin,
              "neglected_mass_bound": math.exp(-(lam + spec.v_low) * cfg.t_max),
              "censored": False}
    est = _estimate("e_lambda", logw, n_paths, h, env, x, lam, extras)
    if extras["hits"] == 0:
        extras["censored"] = True
        extras["a_lower_bound"] = (lam + spec.v_low) * cfg.t_max
    return est


def e_lambda_grid(spec, cloud, x, lams, n_paths, tilt_for=None, config=None, seed=0,
                  start=None, workers=None):
    """``e_lambda`` over several killing rates on common random numbers.

    ``tilt_for(lam)`` gives the drift per rate; paths use the same stream
    keys for every rate, so differences across rates are not diluted by
    independent noise.
    """
    return [e_lambda(spec, cloud, x, lam, n_paths,
                     tilt=None if tilt_for is None else tilt_for(lam),
                     config=config, seed=seed, start=start, workers=workers) for lam in lams]


def ball_points(d, n, radius=1.0):
    """``n`` quasi-uniform points of the open ball: the center, then Halton points."""
    pts = [np.zeros(d)]
    sampler = stats.qmc.Halton(d, scramble=False)
    while len(pts) < n:
        for q in 2.0 * sampler.random(64) - 1.0:
            if np.linalg.norm(q) < 1.0 and len(pts) < n:
                pts.append(q)
    return np.array(pts) * radius * 0.999


@dataclass(frozen=True)
class MetricEstimate:
    value: float
    std_error: float
    forward: float
    backward: float
    forward_se: float
    backward_se: float
    censored: bool


def metric_d(spec, cloud, x, y, n_start=8, n_paths=1000, tilt_speed=None, config=None, seed=0,
             workers=None):
    """Estimate ``d(x, y)``.

    ``d = max(-log inf_{z in B(x)} e(z, y), -log inf_{w in B(y)} e(w, x))``:
    the worst start point of either ball decides, which is what makes ``d``
    symmetric and subadditive under the strong Markov property.  Each
    infimum is approximated by the smallest estimate over ``n_start``
    quasi-uniform points of the ball.  The hitting functionals use
    ``lambda = 0`` and a drift toward the target of speed ``tilt_speed``
    (default ``sqrt(2 v_ref)`` with ``v_ref`` the mean potential level).

    ``forward`` is the term started in ``B(x)``, ``backward`` the term started
    in ``B(y)``.  The two terms draw from distinct path streams, so
    ``metric_d(x, y)`` and ``metric_d(y, x)`` are independent estimates of the
    same number.
    """
    d = spec.d
    x = np.asarray(x, dtype=np.float64).reshape(d)
    y = np.asarray(y, dtype=np.float64).reshape(d)
    if np.linalg.norm(x - y) <= 2.0:
        raise ValueError("metric_d requires |x - y| > 2")
    speed = math.sqrt(2.0 * reference_level(spec)) if tilt_speed is None else float(tilt_speed)
    offsets = ball_points(d, n_start)

    def e_from(a, b, k):
        gap = b - a
        h = gap / np.linalg.norm(gap) * speed
        return e_lambda(spec, cloud, b, 0.0, n_paths, tilt=h, config=config, seed=seed, start=a,
                        purpose=1000 + k, workers=workers)

    fwd = [e_from(x + o, y, k) for k, o in enumerate(offsets)]
    bwd = [e_from(y + o, x, n_start + k) for k, o in enumerate(offsets)]

    def worst(ests):
        e = min(ests, key=lambda r: r.log_value)
        return -e.log_value, e.rel_error, e.extras["censored"]

    f, fse, fc = worst(fwd)
    b, bse, bc = worst(bwd)
    if f >= b:
        val, se = f, fse
    else:
        val, se = b, bse
    return MetricEstimate(val, se, f, b, fse, bse, fc or bc)


# ---------------------------------------------------------------- Green function

@dataclass(frozen=True)
class GreenEstimate:
    value: float
    std_error: float
    occupation: float
    cell_volume: float
    lam_floor: float
    t_max: float
    horizon_bias_bound: float
    n_paths: int
    warning: str = ""


def green(spec, cloud, x, n_paths, lam_floor=0.0, cell=1.0, config=None, seed=0,
          start=None, workers=None):
    """Occupation density of the cube of side ``cell`` centered at ``x``.

    Estimates ``G(0, A) / Leb(A)`` with
    ``G(0, A) = E int_0^T 1_A(Z_t) exp(-int_0^t (V + lam_floor)) dt``.

    ``horizon_bias_bound`` bounds the neglected mass after ``T``:
    ``exp(-k T) / k`` per unit volume with ``k = v_low + lam_floor > 0``,
    or the free heat-kernel tail ``2 (2 pi)^(-d/2) T^(1 - d/2) / (d - 2)`` in
    ``d >= 3`` when no killing floor is available.
    """
    d = spec.d
    rate = spec.v_low + lam_floor
    if d <= 2 and rate <= 0:
        raise ValueError("d <= 2 needs a positive killing floor: set lam_floor > 0")
    x = np.asarray(x, dtype=np.float64).reshape(d)
    start = np.zeros(d) if start is None else np.asarray(start, dtype=np.float64)
    if config is None:
        t_max = 40.0 / rate if rate > 0 else 1e4
        config = PathConfig(dt=0.01, t_max=t_max)
    T = config.t_max
    if rate > 0:
        bound = math.exp(-rate * T) / rate
    else:
        bound = 2.0 * (2 * math.pi) ** (-d / 2) * T ** (1 - d / 2) / (d - 2)
    lo = x - cell / 2
    hi = x + cell / 2
    batch = run_paths(field_for(spec, cloud), d, config.with_(drift=None), Horizon(), start,
                      n_paths, path_seed(seed, cloud, 3), occupation=(lo, hi, lam_floor),
                      workers=workers)
    vol = cell ** d
    occ = batch.occupation
    m = float(np.sum(occ) / n_paths)
    se = float(np.std(occ, ddof=1) / math.sqrt(n_paths))
    warn = ""
    if bound > se / vol:
        warn = (f"horizon truncation: neglected mass per unit volume up to {bound:.3g} "
                f"exceeds the standard error {se / vol:.3g}")
    if batch.count("window_exit"):
        warn += f"; {batch.count('window_exit')} paths left the exact window"
    return GreenEstimate(m / vol, se / vol, m, vol, float(lam_floor), T, bound, int(n_paths), warn)
