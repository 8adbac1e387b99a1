"""Poissonian random potentials.

Families
--------
Lacoin(d, gamma, delta)
    ``V(x) = sum_i r_i**-gamma * 1{|x - w_i| < r_i}`` over a unit-intensity
    Poisson cloud of centers ``w_i`` with marks ``P(r >= s) = s**-delta``.
PolyTail(d, gamma, c9)
    ``V(x) = sum_j W(x - w_j)`` with ``W(y) = c9 * min(|y|**-gamma, 1)``.
Ruess(nu, m, M, R)
    Planar Poisson line process of intensity ``nu``; ``V = m`` within distance
    ``R`` of a line and ``M`` elsewhere.
Constant(d, c), Zero(d)
    Deterministic controls.

A :class:`PointCloud` holds one sampled environment.  Clouds are exact inside
their window up to a controlled truncation: Lacoin balls with marks above a
cap, PolyTail points beyond a cutoff distance.  Both are chosen by a Chernoff
bound so that the sup-error inside the window exceeds ``target_sup_error``
with probability at most ``failure_probability``.
"""

from __future__ import annotations

import csv
import functools
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, optimize, special

from . import _field
from .rng import derive_seed, numpy_generator

FAMILIES = ("lacoin", "polytail", "ruess", "constant", "zero")

# stream tags for environment sampling
_TAG_CLOUD = 1
_TAG_HALO = 3


class TruncationError(RuntimeError):
    """Raised when the potential is evaluated outside the exact window."""


def unit_ball_volume(d):
    """Lebesgue volume of the unit ball in R^d."""
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def dirichlet_unit_ball(d):
    """Principal Dirichlet eigenvalue of -1/2 Laplacian on the unit ball."""
    if d == 1:
        j = math.pi / 2
    elif d == 3:
        j = math.pi
    elif d % 2 == 0:
        j = special.jn_zeros(d // 2 - 1, 1)[0]
    else:
        nu = d / 2 - 1
        j = optimize.brentq(lambda z: special.jv(nu, z), nu + 1e-9 + 1.0, nu + 4.0)
    return 0.5 * j * j


# ---------------------------------------------------------------- specs

def _finite(*vals):
    return all(isinstance(v, (int, float, np.floating, np.integer)) and math.isfinite(v)
               for v in vals)


def check_params(family, params):
    """List the invariant violations of a potential description.

    Parameters
    ----------
    family : str
    params : dict
        Keyword parameters of the family constructor.

    Returns
    -------
    list of str
        Empty when the description is valid.
    """
    fam = str(family).lower()
    if fam not in FAMILIES:
        return [f"unknown potential family {family!r} (choose from {', '.join(FAMILIES)})"]
    out = []
    p = dict(params)
    d = p.get("d", 2)
    if fam != "ruess" and (not isinstance(d, (int, np.integer)) or d < 1):
        out.append(f"dimension d must be an integer >= 1, got {d!r}")
        d = None
    needed = {"lacoin": ("gamma", "delta"), "polytail": ("gamma", "c9"),
              "ruess": ("nu", "m", "M", "R"), "constant": ("c",), "zero": ()}[fam]
    for k in needed:
        if k not in p:
            out.append(f"{fam}: missing parameter {k}")
        elif not _finite(p[k]):
            out.append(f"{fam}: parameter {k} must be a finite number, got {p[k]!r}")
    if out:
        return out
    if fam == "lacoin":
        if p["gamma"] <= 0:
            out.append(f"lacoin: gamma must be > 0, got {p['gamma']}")
        if p["delta"] <= 0:
            out.append(f"lacoin: delta must be > 0, got {p['delta']}")
        if d is not None and p["gamma"] + p["delta"] - d <= 0:
            out.append("lacoin: potential is almost surely infinite unless gamma + delta - d > 0 "
                       f"(got gamma + delta - d = {p['gamma'] + p['delta'] - d:g})")
    elif fam == "polytail":
        if d is not None and p["gamma"] <= d:
            out.append(f"polytail: requires gamma > d (got gamma={p['gamma']}, d={d})")
        if p["c9"] <= 0:
            out.append(f"polytail: c9 must be > 0, got {p['c9']}")
    elif fam == "ruess":
        if "d" in p and p["d"] != 2:
            out.append(f"ruess: defined in dimension 2 only, got d={p['d']}")
        if p["nu"] <= 0:
            out.append(f"ruess: nu must be > 0, got {p['nu']}")
        if p["m"] < 0:
            out.append(f"ruess: m must be >= 0, got {p['m']}")
        if p["M"] <= p["m"]:
            out.append(f"ruess: requires M > m (got m={p['m']}, M={p['M']})")
        if p["R"] <= 0:
            out.append(f"ruess: tube radius R must be > 0, got {p['R']}")
    elif fam == "constant":
        if p["c"] < 0:
            out.append(f"constant: c must be >= 0, got {p['c']}")
    return out


class _Spec:
    family = ""

    def __post_init__(self):
        errs = check_params(self.family, asdict(self))
        if errs:
            raise ValueError("; ".join(errs))

    @property
    def params(self):
        return {k: v for k, v in asdict(self).items() if k != "d"}

    def to_dict(self):
        return {"family": self.family, **asdict(self)}

    @property
    def v_low(self):
        """Essential infimum of the potential (declared, not estimated)."""
        return 0.0


@dataclass(frozen=True)
class Lacoin(_Spec):
    d: int
    gamma: float
    delta: float
    family = "lacoin"


@dataclass(frozen=True)
class PolyTail(_Spec):
    d: int
    gamma: float
    c9: float = 1.0
    family = "polytail"


@dataclass(frozen=True)
class Ruess(_Spec):
    nu: float
    m: float
    M: float
    R: float
    d: int = 2
    family = "ruess"

    @property
    def v_low(self):
        return float(self.m)


@dataclass(frozen=True)
class Constant(_Spec):
    d: int
    c: float
    family = "constant"

    @property
    def v_low(self):
        return float(self.c)


@dataclass(frozen=True)
class Zero(_Spec):
    d: int
    family = "zero"


_CLASSES = {"lacoin": Lacoin, "polytail": PolyTail, "ruess": Ruess,
            "constant": Constant, "zero": Zero}


def make_spec(family, **params):
    """Build a potential description from a family name and parameters."""
    fam = str(family).lower()
    errs = check_params(fam, params)
    if errs:
        raise ValueError("; ".join(errs))
    cls = _CLASSES[fam]
    names = cls.__dataclass_fields__.keys()
    return cls(**{k: v for k, v in params.items() if k in names})


def spec_from_dict(d):
    d = dict(d)
    return make_spec(d.pop("family"), **d)


@dataclass(frozen=True)
class TruncationPolicy:
    """Sup-error target, guarded radius and failure probability."""

    target_sup_error: float = 1e-3
    evaluation_radius: float = 2.0
    failure_probability: float = 1e-6

    def __post_init__(self):
        if not self.target_sup_error > 0:
            raise ValueError("target_sup_error must be > 0")
        if not self.evaluation_radius > 1:
            raise ValueError("evaluation_radius must be > 1")
        if not 0 < self.failure_probability < 1:
            raise ValueError("failure_probability must lie in (0, 1)")


# ---------------------------------------------------------------- closed forms

def closed_form_moments(spec):
    """Mean and variance of ``V(0)`` for a Lacoin potential.

    Returns
    -------
    (float, float)
        ``(L_d delta / (gamma + delta - d), L_d delta / (2 gamma + delta - d))``.
    """
    if not isinstance(spec, Lacoin):
        raise TypeError("closed-form moments are available for Lacoin potentials")
    d, g, de = spec.d, spec.gamma, spec.delta
    ld = unit_ball_volume(d)
    return ld * de / (g + de - d), ld * de / (2 * g + de - d)


def _halo_integral(spec, f, R, lo=1.0):
    ld = unit_ball_volume(spec.d)

    def integrand(r):
        return spec.delta * ld * (r + R) ** spec.d * r ** (-spec.delta - 1) * f(r)

    pieces = [lo, max(2 * lo, lo + 1.0), math.inf]
    total = 0.0
    for a, b in zip(pieces[:-1], pieces[1:]):
        val = integrate.quad(integrand, a, b, epsabs=0.0, epsrel=1e-10, limit=400)[0]
        if not math.isfinite(val):
            raise ArithmeticError("halo integral diverged")
        total += val
    return total


def halo_mean(spec, R=0.0, s=1.0):
    """``int_1^inf delta L_d (r+R)^d r^(-delta-1) * s r^-gamma dr``: mean halo sum."""
    return _halo_integral(spec, lambda r: s * r ** (-spec.gamma), R)


def exp_moment(spec, s, R=0.0):
    """Campbell exponential moment of the Lacoin halo sum.

    ``exp(int_1^inf delta L_d (r+R)^d r^(-delta-1) (exp(s r^-gamma) - 1) dr)``,
    the expectation of ``exp(s * sum r_i^-gamma)`` over balls reaching
    ``B(0, R)``.  Adaptive quadrature to relative tolerance 1e-8.
    """
    if not isinstance(spec, Lacoin):
        raise TypeError("exp_moment is defined for Lacoin potentials")
    if s == 0:
        return 1.0
    ld = unit_ball_volume(spec.d)
    g, de, d = spec.gamma, spec.delta, spec.d

    def integrand(r):
        return de * ld * (r + R) ** d * r ** (-de - 1) * math.expm1(s * r ** (-g))

    total = 0.0
    for a, b in ((1.0, 2.0), (2.0, 64.0), (64.0, math.inf)):
        res = integrate.quad(integrand, a, b, epsabs=0.0, epsrel=1e-10, limit=500,
                             full_output=1)
        val, err = res[0], res[1]
        if len(res) > 3 or not math.isfinite(val):
            raise ArithmeticError("exponential-moment integral failed to converge")
        if abs(err) > 1e-8 * abs(val) and abs(err) > 1e-14:
            raise ArithmeticError(f"exponential-moment quadrature error {err:g} too large")
        total += val
    return math.exp(total)


def lacoin_covariance(spec, lag):
    """Exact ``Cov(V(0), V(x))`` for Lacoin via the lens-volume integral.

    ``int_{|x|/2}^inf delta r^(-delta-1-2 gamma) Leb(B(0,r) & B(x,r)) dr``,
    implemented for ``d <= 3``.
    """
    dist = float(np.linalg.norm(np.atleast_1d(lag)))
    d = spec.d

    def lens(r):
        if dist >= 2 * r:
            return 0.0
        if d == 1:
            return 2 * r - dist
        if d == 2:
            return 2 * r * r * math.acos(dist / (2 * r)) - 0.5 * dist * math.sqrt(4 * r * r - dist * dist)
        if d == 3:
            return math.pi * (4 * r + dist) * (2 * r - dist) ** 2 / 12
        raise ValueError("lens volume implemented for d <= 3")

    a = max(1.0, dist / 2)
    f = lambda r: spec.delta * r ** (-spec.delta - 1 - 2 * spec.gamma) * lens(r)
    val = integrate.quad(f, a, 2 * a + 1, epsabs=0, epsrel=1e-11, limit=200)[0]
    val += integrate.quad(f, 2 * a + 1, math.inf, epsabs=0, epsrel=1e-11, limit=200)[0]
    return val


def truncation_radius(policy, spec):
    """Smallest grid radius ``R > 2 R0`` meeting the exponential tail condition.

    The grid is ``2 R0 * 2**(k/8)``, ``k >= 1``.  Lacoin requires
    ``exp(-2 eps R**gamma) <= p``, PolyTail ``exp(-4 eps R**gamma) <= p``.
    """
    r0 = policy.evaluation_radius
    eps = policy.target_sup_error
    p = policy.failure_probability
    if isinstance(spec, Lacoin):
        factor = 2.0
    elif isinstance(spec, PolyTail):
        factor = 4.0
    else:
        raise TypeError("truncation radius is defined for Lacoin and PolyTail potentials")
    need = (-math.log(p) / (factor * eps)) ** (1.0 / spec.gamma)
    k = max(1, math.ceil(8 * math.log2(need / (2 * r0))) if need > 2 * r0 else 1)
    radius = 2 * r0 * 2 ** (k / 8)
    # guard the ceil against rounding
    while math.exp(-factor * eps * radius ** spec.gamma) > p:
        k += 1
        radius = 2 * r0 * 2 ** (k / 8)
    return radius


def _chernoff_tail(log_mgf, eps):
    """``inf_s exp(-s eps + log_mgf(s))`` over s > 0, in log space."""
    res = optimize.minimize_scalar(lambda ls: -math.exp(ls) * eps + log_mgf(math.exp(ls)),
                                   bounds=(-10.0, 12.0), method="bounded",
                                   options={"xatol": 1e-6})
    return min(0.0, float(res.fun))


@functools.lru_cache(maxsize=256)
def lacoin_mark_cap(spec, window, eps, p):
    """Smallest power-of-two mark cap whose ignored balls exceed ``eps`` w.p. <= p.

    The ignored sum is compound Poisson over balls with ``r >= cap`` reaching
    ``B(0, window)``; its log-mgf is the halo integral from ``cap``.
    """
    ld = unit_ball_volume(spec.d)
    g, de, d = spec.gamma, spec.delta, spec.d
    logp = math.log(p)
    cap = 2.0
    while True:
        def log_mgf(s, cap=cap):
            if s * cap ** (-g) > 700:
                return math.inf
            f = lambda r: de * ld * (r + window) ** d * r ** (-de - 1) * math.expm1(s * r ** (-g))
            return (integrate.quad(f, cap, 4 * cap, epsrel=1e-8, limit=200)[0]
                    + integrate.quad(f, 4 * cap, math.inf, epsrel=1e-8, limit=200)[0])
        if _chernoff_tail(log_mgf, eps) <= logp:
            return cap
        cap *= 2.0
        if cap > 2.0 ** 40:
            raise ArithmeticError("no finite mark cap meets the truncation target")


@functools.lru_cache(maxsize=256)
def polytail_cutoff(spec, eps, p):
    """Cutoff distance whose ignored far field exceeds ``eps`` w.p. <= p (pointwise)."""
    ld = unit_ball_volume(spec.d)
    g, d, c9 = spec.gamma, spec.d, spec.c9
    logp = math.log(p)
    rho = 2.0
    while True:
        def log_mgf(s, rho=rho):
            if s * c9 * rho ** (-g) > 700:
                return math.inf
            f = lambda t: d * ld * t ** (d - 1) * math.expm1(s * c9 * t ** (-g))
            return (integrate.quad(f, rho, 4 * rho, epsrel=1e-8, limit=200)[0]
                    + integrate.quad(f, 4 * rho, math.inf, epsrel=1e-8, limit=200)[0])
        if _chernoff_tail(log_mgf, eps) <= logp:
            return rho
        rho *= 2 ** 0.25
        if rho > 1e6:
            raise ArithmeticError("no finite cutoff meets the truncation target")


# ---------------------------------------------------------------- clouds

@dataclass(frozen=True, eq=False)
class PointCloud:
    """One sampled environment.

    Attributes
    ----------
    dimension : int
    centers : ndarray, shape (n, d)
        Sorted by increasing norm.  For Ruess, rows are line parameters
        ``(rho, theta)``.
    marks : ndarray or None
        Lacoin radii ``r_i >= 1``.
    window_radius : float
        Radius of the exact evaluation window.
    seed : int
    spec : potential description the cloud was sampled for
    truncation : dict
        Truncation metadata (mark cap, cutoff, guarantees).
    """

    dimension: int
    centers: np.ndarray
    marks: np.ndarray | None
    window_radius: float
    seed: int
    spec: object
    truncation: dict = field(default_factory=dict)

    def __post_init__(self):
        self.centers.setflags(write=False)
        if self.marks is not None:
            self.marks.setflags(write=False)

    def __len__(self):
        return self.centers.shape[0]

    def norms(self):
        if isinstance(self.spec, Ruess):
            return np.abs(self.centers[:, 0])
        return np.linalg.norm(self.centers, axis=1)

    @functools.cached_property
    def field(self):
        return build_field(self.spec, self)

    def identical(self, other):
        """Bitwise equality of two clouds."""
        same_marks = (self.marks is None and other.marks is None) or (
            self.marks is not None and other.marks is not None
            and self.marks.tobytes() == other.marks.tobytes())
        return (self.dimension == other.dimension and self.seed == other.seed
                and self.window_radius == other.window_radius
                and self.centers.shape == other.centers.shape
                and self.centers.tobytes() == other.centers.tobytes() and same_marks)


def _uniform_ball(rng, n, d, radius):
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = radius * rng.random(n) ** (1.0 / d)
    return g * rad[:, None]


def default_policy(spec, window):
    eps = 1e-2 if isinstance(spec, PolyTail) else 1e-3
    return TruncationPolicy(eps, max(window, 1.0 + 1e-9), 1e-6)


def _lacoin_halo(rng, spec, L, cap):
    """Marked points with ``|w| < L + r`` and ``1 <= r < cap``, shell by shell."""
    d, de = spec.d, spec.delta
    cs, ms = [], []
    a = 1.0
    while a < cap:
        b = min(2 * a, cap)
        mass = a ** -de - b ** -de
        n = rng.poisson(unit_ball_volume(d) * (L + b) ** d * mass)
        w = _uniform_ball(rng, n, d, L + b)
        r = (a ** -de - rng.random(n) * mass) ** (-1.0 / de)
        keep = np.linalg.norm(w, axis=1) < L + r
        cs.append(w[keep])
        ms.append(r[keep])
        a = b
    centers = np.concatenate(cs) if cs else np.zeros((0, d))
    marks = np.concatenate(ms) if ms else np.zeros(0)
    return centers, marks


def halo_sum_samples(spec, R, n_env, seed, eps=1e-4, p=1e-6):
    """Direct samples of ``sum r_i^-gamma 1{|w_i| < r_i + R}``, one per environment.

    Balls with marks above the cap of :func:`lacoin_mark_cap` (for ``eps``
    and ``p``) are dropped; their sum exceeds ``eps`` with probability at
    most ``p``.
    """
    if not isinstance(spec, Lacoin):
        raise TypeError("halo sums are defined for Lacoin potentials")
    cap = lacoin_mark_cap(spec, float(R), eps, p)
    out = np.empty(n_env)
    for i in range(n_env):
        rng = numpy_generator(environment_seed(seed, i), _TAG_HALO)
        _, marks = _lacoin_halo(rng, spec, float(R), cap)
        out[i] = np.sum(marks ** -spec.gamma)
    return out


def exp_moment_mc(spec, s, R, n_env, seed, samples=None):
    """Monte Carlo ``E exp(s * halo sum)`` and its standard error."""
    x = halo_sum_samples(spec, R, n_env, seed) if samples is None else samples
    w = np.exp(s * x)
    return float(w.mean()), float(w.std(ddof=1) / math.sqrt(w.size))


def sample_cloud(spec, window_radius, seed, policy=None):
    """Sample a Poisson environment that is exact inside ``B(0, window_radius)``.

    Lacoin: all marked points ``(w, r)`` with ``|w| < window + r`` and ``r`` below
    the mark cap, drawn shell by shell over mark ranges ``[2^k, 2^(k+1))`` and
    thinned from the enclosing ball.  Marks use the conditional inverse CDF
    of ``P(r >= s) = s**-delta``.

    PolyTail: centers in ``B(0, window + cutoff)``.

    Ruess: lines ``(rho, theta)`` with ``|rho| <= window + R``.

    Parameters
    ----------
    spec : Lacoin, PolyTail or Ruess
    window_radius : float
    seed : int
    policy : TruncationPolicy, optional
        Controls the mark cap (Lacoin) or cutoff (PolyTail).

    Returns
    -------
    PointCloud
    """
    if not window_radius > 0:
        raise ValueError(f"window_radius must be > 0, got {window_radius}")
    if not isinstance(spec, (Lacoin, PolyTail, Ruess)):
        raise TypeError(f"no cloud to sample for family {spec.family!r}")
    L = float(window_radius)
    policy = policy or default_policy(spec, L)
    rng = numpy_generator(seed, _TAG_CLOUD)
    if isinstance(spec, Lacoin):
        d = spec.d
        cap = lacoin_mark_cap(spec, L, policy.target_sup_error, policy.failure_probability)
        centers, marks = _lacoin_halo(rng, spec, L, cap)
        order = np.argsort(np.linalg.norm(centers, axis=1), kind="stable")
        trunc = {"kind": "mark_cap", "mark_cap": cap,
                 "target_sup_error": policy.target_sup_error,
                 "failure_probability": policy.failure_probability,
                 "guarantee": "uniform over the window"}
        return PointCloud(d, np.ascontiguousarray(centers[order]), np.ascontiguousarray(marks[order]),
                          L, int(seed), spec, trunc)
    if isinstance(spec, PolyTail):
        d = spec.d
        cut = polytail_cutoff(spec, policy.target_sup_error, policy.failure_probability)
        n = rng.poisson(unit_ball_volume(d) * (L + cut) ** d)
        w = _uniform_ball(rng, n, d, L + cut)
        order = np.argsort(np.linalg.norm(w, axis=1), kind="stable")
        trunc = {"kind": "cutoff", "cutoff": cut,
                 "target_sup_error": policy.target_sup_error,
                 "failure_probability": policy.failure_probability,
                 "guarantee": "pointwise"}
        return PointCloud(d, np.ascontiguousarray(w[order]), None, L, int(seed), spec, trunc)
    span = L + spec.R
    n = rng.poisson(spec.nu * 2 * span)
    rho = rng.uniform(-span, span, n)
    theta = rng.uniform(0.0, math.pi, n)
    order = np.argsort(np.abs(rho), kind="stable")
    lines = np.column_stack([rho, theta])[order]
    return PointCloud(2, np.ascontiguousarray(lines), None, L, int(seed), spec,
                      {"kind": "exact", "line_span": span})


def environment_cloud(spec, window_radius, master_seed, env_index, policy=None):
    """Cloud for environment ``env_index`` of a master seed, or None for deterministic specs."""
    if isinstance(spec, (Constant, Zero)):
        return None
    return sample_cloud(spec, window_radius, environment_seed(master_seed, env_index), policy)


def environment_seed(master_seed, env_index):
    return derive_seed(master_seed, env_index)


def restrict_cloud(cloud, radius, evaluation_radius):
    """Keep only centers with ``|w| <= radius`` (a prefix, since centers are sorted).

    The restricted cloud is evaluated on ``B(0, evaluation_radius)``; this is
    the plain center-window truncation whose error the tail condition of
    :func:`truncation_radius` controls.
    """
    n = int(np.searchsorted(cloud.norms(), radius, side="right"))
    marks = None if cloud.marks is None else cloud.marks[:n].copy()
    trunc = dict(cloud.truncation, center_radius=float(radius))
    return PointCloud(cloud.dimension, cloud.centers[:n].copy(), marks,
                      float(evaluation_radius), cloud.seed, cloud.spec, trunc)


def build_field(spec, cloud=None):
    """Numba-ready field for ``spec`` on ``cloud`` (None for Constant/Zero)."""
    if isinstance(spec, Zero):
        return _field.constant_field(0.0)
    if isinstance(spec, Constant):
        return _field.constant_field(spec.c)
    if cloud is None:
        raise ValueError(f"family {spec.family!r} needs a sampled cloud")
    if isinstance(spec, Lacoin):
        return _field.lacoin_field(cloud.centers, cloud.marks, spec.gamma, cloud.window_radius)
    if isinstance(spec, PolyTail):
        return _field.polytail_field(cloud.centers, spec.c9, spec.gamma,
                                     cloud.truncation["cutoff"], cloud.window_radius)
    return _field.ruess_field(cloud.centers[:, 0], cloud.centers[:, 1], spec.m, spec.M,
                              spec.R, cloud.window_radius)


def field_for(spec, cloud):
    if isinstance(spec, (Zero, Constant)):
        return build_field(spec)
    return cloud.field


def eval_potential(spec, cloud, x):
    """Evaluate ``V`` at one point (shape (d,)) or many points (shape (n, d)).

    Raises
    ------
    TruncationError
        If a point lies outside the cloud's exact window.
    """
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != spec.d:
        raise ValueError(f"points must have {spec.d} coordinates")
    if isinstance(spec, (Zero, Constant)):
        val = np.full(X.shape[0], 0.0 if isinstance(spec, Zero) else float(spec.c))
    else:
        val = _field.field_values(field_for(spec, cloud), _field.pad3(X))
        if np.any(val < 0):
            bad = X[np.argmax(val < 0)]
            raise TruncationError(f"evaluation at {bad.tolist()} lies outside the exact window "
                                  f"of radius {cloud.window_radius}")
    return float(val[0]) if single else val


def brute_force_potential(spec, cloud, x):
    """Direct sum over every stored point, without grid or window checks.

    PolyTail terms beyond the cloud's cutoff are dropped, as in the fast path.
    """
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if isinstance(spec, Lacoin):
        dist = np.linalg.norm(X[:, None, :] - cloud.centers[None, :, :], axis=2)
        return ((dist < cloud.marks[None, :]) * cloud.marks[None, :] ** -spec.gamma).sum(axis=1)
    if isinstance(spec, PolyTail):
        dist = np.linalg.norm(X[:, None, :] - cloud.centers[None, :, :], axis=2)
        cut = cloud.truncation.get("cutoff", math.inf)
        w = spec.c9 * np.minimum(np.where(dist > 0, dist, 1.0) ** -spec.gamma, 1.0)
        return np.where(dist <= cut, w, 0.0).sum(axis=1)
    if isinstance(spec, Ruess):
        rho, th = cloud.centers[:, 0], cloud.centers[:, 1]
        dist = np.abs(X[:, :1] * np.sin(th) - X[:, 1:2] * np.cos(th) - rho)
        return np.where((dist < spec.R).any(axis=1), spec.m, spec.M)
    return np.full(X.shape[0], 0.0 if isinstance(spec, Zero) else spec.c)


# ---------------------------------------------------------------- statistics

@dataclass(frozen=True)
class CovarianceEstimate:
    value: float
    std_error: float
    ci_low: float
    ci_high: float
    n_env: int
    method: str


def _potential_pairs(spec, lag, n_env, seed, policy=None):
    lag = np.atleast_1d(np.asarray(lag, dtype=np.float64))
    L = float(np.linalg.norm(lag)) + 0.5
    out = np.empty((n_env, 2))
    pts = np.vstack([np.zeros(spec.d), lag])
    for e in range(n_env):
        cloud = sample_cloud(spec, L, environment_seed(seed, e), policy)
        out[e] = eval_potential(spec, cloud, pts)
    return out


def campbell_pair_sum(spec, cloud, lag):
    """``sum_i r_i^(-2 gamma) 1{0 in B_i} 1{x in B_i}`` for one Lacoin cloud."""
    lag = np.atleast_1d(np.asarray(lag, dtype=np.float64))
    if lag.shape != (spec.d,):
        raise ValueError(f"lag needs {spec.d} coordinates, got shape {lag.shape}")
    c, r = cloud.centers, cloud.marks
    both = (np.linalg.norm(c, axis=1) < r) & (np.linalg.norm(c - lag, axis=1) < r)
    return float(np.sum(r[both] ** (-2 * spec.gamma)))


def empirical_covariance(spec, lag, n_env, seed, method="sample", confidence=0.99, policy=None):
    """Covariance of ``V(0)`` and ``V(x)`` over independent environments.

    Parameters
    ----------
    method : {"sample", "campbell"}
        ``"sample"`` is the Pearson sample covariance.  ``"campbell"`` averages
        ``sum_i r_i^(-2 gamma) 1{0, x in B_i}``, whose expectation is the same
        covariance for a Poisson Boolean model and whose variance is far
        smaller at large lags.  Lacoin only.
    """
    if n_env < 100:
        raise ValueError("n_env must be >= 100")
    z = special.ndtri(0.5 + confidence / 2)
    if isinstance(spec, (Constant, Zero)):
        return CovarianceEstimate(0.0, 0.0, 0.0, 0.0, n_env, method)
    if method == "campbell":
        if not isinstance(spec, Lacoin):
            raise TypeError("the Campbell estimator needs a Lacoin potential")
        lag = np.atleast_1d(np.asarray(lag, dtype=np.float64))
        L = float(np.linalg.norm(lag)) + 0.5
        vals = np.array([campbell_pair_sum(spec, sample_cloud(spec, L, environment_seed(seed, e), policy), lag)
                         for e in range(n_env)])
        m = float(np.mean(vals))
        se = float(np.std(vals, ddof=1) / math.sqrt(n_env))
    elif method == "sample":
        pairs = _potential_pairs(spec, lag, n_env, seed, policy)
        a = pairs[:, 0] - pairs[:, 0].mean()
        b = pairs[:, 1] - pairs[:, 1].mean()
        prod = a * b
        m = float(np.sum(prod) / (n_env - 1))
        se = float(np.std(prod, ddof=1) / math.sqrt(n_env))
    else:
        raise ValueError(f"unknown covariance method {method!r}")
    return CovarianceEstimate(m, se, m - z * se, m + z * se, n_env, method)


def potential_at_origin(spec, n_env, seed, policy=None):
    """``V(0)`` over ``n_env`` independent environments."""
    if isinstance(spec, (Constant, Zero)):
        return np.full(n_env, spec.v_low)
    return np.array([eval_potential(spec, sample_cloud(spec, 0.5, environment_seed(seed, e), policy),
                                    np.zeros(spec.d)) for e in range(n_env)])


def sup_unit_ball(spec, cloud, center=None, spacing=0.02):
    """Max of ``V`` over a lattice of the unit ball around ``center``."""
    d = spec.d
    c = np.zeros(d) if center is None else np.asarray(center, dtype=np.float64)
    ax = np.arange(-1.0, 1.0 + 1e-12, spacing)
    grid = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d)
    grid = grid[np.linalg.norm(grid, axis=1) < 1.0]
    return float(np.max(eval_potential(spec, cloud, grid + c)))


def expected_sup_unit_ball(spec, n_env, seed, spacing=0.02):
    """Mean and standard error of ``sup_{B(0,1)} V`` over environments."""
    if isinstance(spec, (Constant, Zero)):
        return float(spec.v_low), 0.0
    vals = np.array([sup_unit_ball(spec, sample_cloud(spec, 1.0, environment_seed(seed, e)),
                                   spacing=spacing) for e in range(n_env)])
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_env)) if n_env > 1 else 0.0


# ---------------------------------------------------------------- serialization

def write_cloud(cloud, path):
    """Write ``x1..xd,r`` CSV plus a JSON sidecar manifest next to it."""
    path = Path(path)
    d = cloud.dimension
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(d)] + ["r"])
        for i in range(len(cloud)):
            row = [repr(float(v)) for v in cloud.centers[i]]
            row.append("" if cloud.marks is None else repr(float(cloud.marks[i])))
            w.writerow(row)
    meta = {"family": cloud.spec.family, "params": cloud.spec.to_dict(),
            "window_radius": cloud.window_radius, "seed": cloud.seed,
            "truncation": cloud.truncation}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def read_cloud(path):
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    spec = spec_from_dict(meta["params"])
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    d = len(rows[0]) - 1 if rows else (2 if isinstance(spec, Ruess) else spec.d)
    centers = np.array([[float(v) for v in r[:d]] for r in rows]).reshape(-1, d)
    marks = None
    if rows and rows[0][d] != "":
        marks = np.array([float(r[d]) for r in rows])
    return PointCloud(d, centers, marks, float(meta["window_radius"]), int(meta["seed"]),
                      spec, meta["truncation"])
