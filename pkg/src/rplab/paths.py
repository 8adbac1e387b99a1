"""Discretized Brownian paths with stopping rules and Girsanov tilting.

Paths follow ``Z_{k+1} = Z_k + h dt + sqrt(dt) N(0, I)`` for ``d <= 3``.
``int V(Z_s) ds`` is accumulated with the trapezoid (endpoint-average) rule
on sampled values.  A drifted path carries the log likelihood ratio
``-h.(Z_tau - Z_0) + |h|^2 tau / 2``, so reweighted averages equal driftless
ones.

Hitting a closed ball is detected on the grid and, optionally, by the
Brownian-bridge crossing probability ``exp(-2ab/dt)`` of the distance
process between two grid points at distances ``a`` and ``b`` from the
sphere.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import special

from . import _kernel as K
from .rng import WORD_MAIN, normal, philox_key, seed_stream

MAX_DIM = 3


def set_workers(workers):
    """Number of threads used by the path kernel (None keeps the current value)."""
    if workers is not None:
        numba.set_num_threads(max(1, min(int(workers), numba.config.NUMBA_NUM_THREADS)))
    return numba.get_num_threads()


def _vec3(v, d=None, name="vector"):
    a = np.zeros(3)
    if v is None:
        return a
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))
    if v.ndim != 1 or v.size > MAX_DIM or (d is not None and v.size != d):
        raise ValueError(f"{name} must have {d if d is not None else '<= 3'} coordinates")
    a[:v.size] = v
    return a


@dataclass(frozen=True)
class PathConfig:
    """Time step, horizon, drift and bridge toggle."""

    dt: float = 0.01
    t_max: float = 10.0
    drift: tuple | None = None
    bridge_correction: bool = True

    def violations(self):
        out = []
        if not self.dt > 0:
            out.append(f"dt must be > 0, got {self.dt}")
        if not self.t_max > 0:
            out.append(f"t_max must be > 0, got {self.t_max}")
        if self.dt > 0 and self.t_max > 0 and self.dt > self.t_max:
            out.append(f"dt ({self.dt}) must not exceed t_max ({self.t_max})")
        return out

    def __post_init__(self):
        errs = self.violations()
        if errs:
            raise ValueError("; ".join(errs))

    @property
    def n_steps(self):
        return max(1, int(round(self.t_max / self.dt)))

    def with_(self, **kw):
        d = {"dt": self.dt, "t_max": self.t_max, "drift": self.drift,
             "bridge_correction": self.bridge_correction}
        d.update(kw)
        return PathConfig(**d)


@dataclass(frozen=True)
class Horizon:
    """Stop only at the horizon."""


@dataclass(frozen=True)
class HitBall:
    """Stop on entering the closed ball ``B(center, radius)``."""

    center: tuple
    radius: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be > 0")


@dataclass(frozen=True)
class ExitBall:
    """Stop on leaving the open ball ``B(center, radius)``."""

    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be > 0")


@dataclass(frozen=True)
class Abandon:
    """Half-space rule: stop a path once ``u.(Z - point) > margin``.

    Used for hitting functionals where a path that overshoots the target by
    ``margin`` along the approach direction carries negligible weight.
    """

    direction: tuple
    point: tuple
    margin: float


@dataclass
class TrajectoryOutcome:
    event: str
    stop_time: float
    integral_V: float
    girsanov_log_weight: float
    endpoint: np.ndarray
    trajectory: np.ndarray | None = None


@dataclass
class PathBatch:
    """Per-path outcomes of one kernel call."""

    event: np.ndarray
    stop_time: np.ndarray
    integral_V: np.ndarray
    log_weight: np.ndarray
    endpoint: np.ndarray
    checkpoints: np.ndarray | None = None
    occupation: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.event.shape[0]

    def count(self, name):
        return int(np.sum(self.event == K.EVENT_NAMES.index(name)))

    def summary(self):
        """JSON-ready summary statistics."""
        n = len(self)
        out = {"n_paths": n, "events": {nm: self.count(nm) for nm in K.EVENT_NAMES},
               "mean_stop_time": float(np.sum(self.stop_time) / n),
               "mean_integral_V": float(np.sum(self.integral_V) / n),
               "mean_weight": float(np.sum(np.exp(self.log_weight)) / n)}
        out.update(self.meta)
        return out

    def summary_json(self):
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _stop_arrays(stop, d):
    if isinstance(stop, Horizon) or stop is None:
        return K.STOP_HORIZON, np.zeros(3), 1.0
    if isinstance(stop, HitBall):
        return K.STOP_HIT, _vec3(stop.center, d, "center"), float(stop.radius)
    if isinstance(stop, ExitBall):
        return K.STOP_EXIT, _vec3(stop.center, d, "center"), float(stop.radius)
    raise TypeError(f"unknown stopping rule {stop!r}")


def run_paths(field_, d, config, stop, start, n_paths, seed, path_offset=0,
              abandon=None, checkpoints=None, occupation=None, workers=None,
              record=False):
    """Advance ``n_paths`` independent paths.

    Parameters
    ----------
    field_ : Field
        Potential from :func:`rplab.potentials.build_field`.
    d : int
        Dimension, 1 to 3.
    config : PathConfig
    stop : Horizon, HitBall or ExitBall
    start : array_like
    n_paths : int
    seed : int
        64-bit stream key; path ``i`` uses stream ``path_offset + i``.
    abandon : Abandon, optional
    checkpoints : array_like of float, optional
        Times at which to store ``int_0^t V`` (``inf`` if the path stopped earlier).
    occupation : (lo, hi, rate), optional
        Accumulate ``int 1{Z in box} exp(-int V - rate t) dt``.
    record : bool
        Store the full trajectory (single path only).

    Returns
    -------
    PathBatch
    """
    if not 1 <= d <= MAX_DIM:
        raise ValueError("paths are implemented for dimensions 1 to 3")
    n = int(n_paths)
    if n < 1:
        raise ValueError("n_paths must be >= 1")
    if record and n != 1:
        raise ValueError("trajectory recording is limited to a single path")
    set_workers(workers)
    k0, k1 = philox_key(seed)
    start3 = _vec3(start, d, "start")
    drift3 = _vec3(config.drift, d, "drift")
    kind, center, radius = _stop_arrays(stop, d)
    if kind == K.STOP_HIT and np.linalg.norm(start3 - center) <= radius:
        raise ValueError("start lies inside the target ball")
    n_steps = config.n_steps
    if abandon is not None:
        u = _vec3(abandon.direction, d, "direction")
        u /= np.linalg.norm(u)
        ab = (u, _vec3(abandon.point, d, "point"), float(abandon.margin), True)
    else:
        ab = (np.zeros(3), np.zeros(3), 0.0, False)
    if checkpoints is not None:
        ck_steps = np.array([int(round(t / config.dt)) for t in np.atleast_1d(checkpoints)], dtype=np.int64)
        if np.any(ck_steps < 1) or np.any(ck_steps > n_steps) or np.any(np.diff(ck_steps) < 0):
            raise ValueError("checkpoints must be increasing times in (0, t_max]")
    else:
        ck_steps = np.zeros(0, dtype=np.int64)
    if occupation is not None:
        lo, hi, rate = occupation
        occ = (_vec3(lo, d), _vec3(hi, d), float(rate), True)
        occ[0][d:] = -np.inf
        occ[1][d:] = np.inf
    else:
        occ = (np.zeros(3), np.zeros(3), 0.0, False)
    ev = np.empty(n, dtype=np.int8)
    st = np.empty(n)
    iv = np.empty(n)
    endp = np.empty((n, 3))
    ck_out = np.empty((n, ck_steps.size))
    occ_out = np.zeros(n if occ[3] else 1)
    traj = np.empty((n_steps + 1, 3) if record else (1, 3))
    K.run_kernel(k0, k1, np.int64(path_offset), n, d, start3, drift3, float(config.dt), n_steps,
                 kind, center, radius, bool(config.bridge_correction),
                 ab[0], ab[1], ab[2], ab[3], field_, ck_steps, occ[0], occ[1], occ[2], occ[3],
                 bool(record), ev, st, iv, endp, ck_out, occ_out, traj)
    np.minimum(st, config.t_max, out=st)
    if np.any(ev == K.EV_NONFINITE):
        raise FloatingPointError("non-finite potential value on a path (truncation misuse)")
    disp = endp[:, :d] - start3[:d]
    h = drift3[:d]
    logw = -(disp @ h) + 0.5 * float(h @ h) * st
    batch = PathBatch(ev, st, iv, logw, endp[:, :d].copy(),
                      ck_out if ck_steps.size else None, occ_out if occ[3] else None,
                      {"dt": config.dt, "t_max": config.t_max, "seed": int(seed),
                       "path_offset": int(path_offset)})
    if record:
        batch.meta["trajectory"] = traj[:, :d].copy()
    return batch


def simulate(config, stop, field_, start, seed=0, path=0, d=None, record=False):
    """One trajectory on the stream ``(seed, path)``.

    Returns
    -------
    TrajectoryOutcome
    """
    start = np.atleast_1d(np.asarray(start, dtype=np.float64))
    d = start.size if d is None else d
    b = run_paths(field_, d, config, stop, start, 1, seed, path_offset=path, record=record)
    traj = b.meta.get("trajectory")
    if traj is not None:
        steps = int(round(b.stop_time[0] / config.dt))
        traj = traj[:steps + 1]
    return TrajectoryOutcome(K.EVENT_NAMES[int(b.event[0])], float(b.stop_time[0]),
                             float(b.integral_V[0]), float(b.log_weight[0]),
                             b.endpoint[0].copy(), traj)


def dump_trajectory(traj, path):
    """Write a trajectory as little-endian float64 records, ``d`` values per step."""
    np.ascontiguousarray(traj, dtype="<f8").tofile(path)


def load_trajectory(path, d):
    return np.fromfile(path, dtype="<f8").reshape(-1, d)


# ---------------------------------------------------------------- tube probability

@numba.njit(parallel=True, cache=True)
def _tube_kernel(k0, k1, n, d, z, x, t, rho, n_steps, out):
    dt = t / n_steps
    sq = math.sqrt(dt)
    r2 = rho * rho
    for p in numba.prange(n):
        s0, s1, s2, s3 = seed_stream(k0, k1, p, WORD_MAIN)
        w0 = 0.0
        w1 = 0.0
        w2 = 0.0
        ok = 1
        for k in range(n_steps):
            g, s0, s1, s2, s3 = normal(s0, s1, s2, s3)
            w0 += sq * g
            if d > 1:
                g, s0, s1, s2, s3 = normal(s0, s1, s2, s3)
                w1 += sq * g
            if d > 2:
                g, s0, s1, s2, s3 = normal(s0, s1, s2, s3)
                w2 += sq * g
            f = (k + 1) / n_steps
            e0 = w0 - f * (x[0] - z[0])
            e1 = w1 - f * (x[1] - z[1])
            e2 = w2 - f * (x[2] - z[2])
            if e0 * e0 + e1 * e1 + e2 * e2 >= r2:
                ok = 0
                break
        out[p] = ok
    return 0


@dataclass(frozen=True)
class ProbabilityEstimate:
    value: float
    std_error: float
    ci_low: float
    ci_high: float
    n_paths: int
    dt: float


def tubular_probability(z, x, t, rho, n_paths, seed=0, dt=None, confidence=0.99, workers=None):
    """Probability that a path from ``z`` stays within ``rho`` of the segment to ``x`` up to ``t``.

    The segment is followed at constant speed, ``z + (s/t)(x - z)``.  The
    default step is ``rho**2 / 100``.  The interval is a Wilson score interval.
    """
    if not (t > 0 and rho > 0):
        raise ValueError("t and rho must be > 0")
    z3 = _vec3(z)
    x3 = _vec3(x)
    d = np.atleast_1d(z).size
    dt = rho * rho / 100.0 if dt is None else float(dt)
    n_steps = max(1, int(math.ceil(t / dt)))
    set_workers(workers)
    k0, k1 = philox_key(seed)
    out = np.empty(int(n_paths), dtype=np.int8)
    _tube_kernel(k0, k1, int(n_paths), d, z3, x3, float(t), float(rho), n_steps, out)
    n = int(n_paths)
    k = int(out.sum())
    p = k / n
    zq = special.ndtri(0.5 + confidence / 2)
    den = 1 + zq * zq / n
    mid = (p + zq * zq / (2 * n)) / den
    half = zq * math.sqrt(p * (1 - p) / n + zq * zq / (4 * n * n)) / den
    return ProbabilityEstimate(p, math.sqrt(max(p * (1 - p), 0.0) / n), max(0.0, mid - half),
                               min(1.0, mid + half), n, t / n_steps)

