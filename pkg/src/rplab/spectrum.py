"""Principal Dirichlet eigenvalue of -1/2 Laplacian + V in a ball.

The ball is discretized on the cubic lattice ``h Z^d``; nodes strictly inside
the ball carry unknowns and every other node is clamped to zero (staircase
boundary).  The operator is the (2d+1)-point stencil for -1/2 Laplacian plus
the potential sampled at the nodes.  The smallest eigenvalue is found by
shifted inverse power iteration whose inner linear solves use a
Jacobi-preconditioned conjugate gradient.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import curve_fit

from .potentials import PointCloud, dirichlet_unit_ball, field_for, sample_cloud
from ._field import field_values

MEMORY_BUDGET = 2 ** 30


class ConvergenceError(RuntimeError):
    """Raised when the eigensolver does not reach its residual target."""


@dataclass(frozen=True, eq=False)
class GridProblem:
    """Discretized Dirichlet problem on ``B(0, R)``.

    Attributes
    ----------
    d : int
    R : float
    h : float
    mask : ndarray of bool, shape ``(2n+1,)*d``
        Nodes strictly inside the ball.
    potential : ndarray
        Potential at the masked nodes, in C order of ``mask``.
    """

    d: int
    R: float
    h: float
    mask: np.ndarray
    potential: np.ndarray

    def violations(self):
        out = []
        if self.d not in (1, 2, 3):
            out.append(f"d = {self.d}: grids are implemented for d in 1..3")
        if not self.h <= self.R / 16 * (1 + 1e-12):
            out.append(f"h = {self.h} exceeds R/16 = {self.R / 16}")
        v = self.potential
        if v.size != int(self.mask.sum()):
            out.append("potential size does not match the mask")
        elif v.size and not (np.all(np.isfinite(v)) and v.min() >= 0):
            out.append("potential samples must be finite and >= 0")
        return out

    @property
    def n_nodes(self):
        return int(self.mask.sum())

    def coordinates(self):
        """Coordinates of the interior nodes, shape ``(n_nodes, d)``."""
        return node_coordinates(self.d, self.R, self.h)[1]

    def operator(self):
        """Sparse CSR matrix of the discrete operator on the interior nodes."""
        n = self.n_nodes
        idx = -np.ones(self.mask.shape, dtype=np.int64)
        idx[self.mask] = np.arange(n)
        rows, cols = [], []
        for ax in range(self.d):
            a = np.moveaxis(idx, ax, 0)
            left, right = a[:-1], a[1:]
            both = (left >= 0) & (right >= 0)
            rows.append(left[both])
            cols.append(right[both])
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        off = -0.5 / self.h ** 2
        diag = self.d / self.h ** 2 + self.potential
        A = sp.coo_matrix((np.full(r.size, off), (r, c)), shape=(n, n))
        return (A + A.T + sp.diags(diag)).tocsr()


def node_coordinates(d, R, h):
    """Mask of lattice nodes strictly inside ``B(0, R)`` and their coordinates."""
    n = int(math.floor(R / h + 1e-9))
    axis = h * np.arange(-n, n + 1)
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    r2 = sum(g * g for g in grids)
    mask = r2 < R * R * (1 - 1e-12)
    pts = np.column_stack([g[mask] for g in grids])
    return mask, pts


def grid_problem(spec, cloud, R, h):
    """Build a :class:`GridProblem` for one environment.

    Raises
    ------
    MemoryError
        When the operator would exceed the memory budget.
    """
    d = spec.d
    n_axis = 2 * int(math.floor(R / h + 1e-9)) + 1
    if n_axis ** d * 8 * 12 > MEMORY_BUDGET:
        raise MemoryError(f"grid of {n_axis}^{d} nodes exceeds the memory budget")
    mask, pts = node_coordinates(d, R, h)
    F = field_for(spec, cloud)
    P = np.zeros((pts.shape[0], 3))
    P[:, :d] = pts
    v = field_values(F, P) if pts.shape[0] else np.zeros(0)
    if v.size and v.min() < 0:
        raise ValueError("grid extends beyond the sampled window of the cloud")
    return GridProblem(d, float(R), float(h), mask, v)


@dataclass(frozen=True)
class EigenResult:
    value: float
    residual: float
    iterations: int
    vector: np.ndarray
    perron_ok: bool
    inner_iterations: int


def pcg(A, b, x0, shift, tol, max_iter):
    """Jacobi-preconditioned CG for ``(A - shift I) x = b``.

    Returns ``(x, iterations, indefinite)``; ``indefinite`` reports a
    non-positive curvature direction (the shift passed the bottom of the
    spectrum).
    """
    dinv = 1.0 / (A.diagonal() - shift)
    if np.any(dinv <= 0):
        return x0, 0, True
    x = x0.copy()
    r = b - (A @ x - shift * x)
    z = dinv * r
    p = z.copy()
    rz = r @ z
    bn = np.linalg.norm(b)
    for k in range(1, max_iter + 1):
        q = A @ p - shift * p
        pq = p @ q
        if pq <= 0:
            return x, k, True
        a = rz / pq
        x += a * p
        r -= a * q
        if np.linalg.norm(r) <= tol * bn:
            return x, k, False
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, max_iter, False


def principal_eigenvalue(problem, tol=1e-10, max_iter=500, inner_tol=1e-14, inner_max=None,
                         perron_tol=1e-8, x0=None):
    """Smallest eigenvalue of the discrete operator.

    Shifted inverse iteration: the shift is ``0.95 max(0, theta - |r|)`` once
    the residual is below a tenth of the Rayleigh quotient ``theta``, else 0;
    a shift that makes the inner system indefinite is halved.

    Parameters
    ----------
    tol : float
        Target on the residual ``|A v - theta v|`` for the unit vector ``v``.
    perron_tol : float
        Entries below ``-perron_tol * max|v|`` fail the positivity check.

    Returns
    -------
    EigenResult

    Raises
    ------
    ConvergenceError
        Residual above ``tol`` after ``max_iter`` outer iterations, or a
        sign-changing limit vector.
    """
    bad = problem.violations()
    if bad:
        raise ValueError("; ".join(bad))
    A = problem.operator()
    n = A.shape[0]
    inner_max = inner_max or max(200, 20 * n)
    if x0 is None:
        # positive start: overlaps with the Perron vector
        pts = problem.coordinates()
        rr = np.sqrt((pts ** 2).sum(axis=1)) / problem.R
        v = np.cos(0.5 * math.pi * np.minimum(rr, 1.0)) + 1e-3
    else:
        v = np.asarray(x0, dtype=np.float64).copy()
    v /= np.linalg.norm(v)
    shift = 0.0
    inner_total = 0
    theta = res = math.inf
    for it in range(1, max_iter + 1):
        Av = A @ v
        theta = float(v @ Av)
        res = float(np.linalg.norm(Av - theta * v))
        if res <= tol:
            break
        if res < 0.1 * theta:
            shift = max(shift, 0.95 * max(0.0, theta - res))
        while True:
            y, k, indefinite = pcg(A, v, v / max(theta - shift, 1e-300), shift, inner_tol, inner_max)
            inner_total += k
            if not indefinite:
                break
            shift *= 0.5
            if shift < 1e-14:
                shift = 0.0
        v = y / np.linalg.norm(y)
    else:
        raise ConvergenceError(f"residual {res:.3g} above {tol:.1e} after {max_iter} iterations")
    if v.sum() < 0:
        v = -v
    perron = bool(v.min() >= -perron_tol * np.abs(v).max())
    if not perron:
        raise ConvergenceError("eigenvector changes sign: discretization failure or wrong branch")
    return EigenResult(theta, res, it, v, perron, inner_total)


def rayleigh_quotient(problem, f):
    """Rayleigh quotient of ``f`` (values at the interior nodes)."""
    A = problem.operator()
    f = np.asarray(f, dtype=np.float64)
    return float(f @ (A @ f) / (f @ f))


def cosine_bump(problem):
    """Product-of-cosines test function on the cube inscribed in the ball."""
    pts = problem.coordinates()
    half = problem.R / math.sqrt(problem.d)
    inside = np.all(np.abs(pts) < half, axis=1)
    f = np.where(inside, np.prod(np.cos(0.5 * math.pi * pts / half), axis=1), 0.0)
    return f


def richardson(values, hs, order=1):
    """Richardson extrapolation from two spacings."""
    (a, b), (ha, hb) = values, hs
    q = (ha / hb) ** order
    return (q * b - a) / (q - 1)


@dataclass(frozen=True)
class EigenRecord:
    env_seed: int
    R: float
    h: float
    lambda_hat: float
    residual: float
    iters: int


@dataclass(frozen=True)
class LambdaLimit:
    records: tuple
    per_environment: dict
    monotone: dict
    limit_low: float
    limit_high: float
    spread: float
    fit: tuple


def default_h(R_grid, h_max=0.125):
    """One spacing for all radii, so the node sets are nested."""
    return min(min(R_grid) / 16, h_max)


def lambda_V_limit(spec, R_grid, seeds, h=None, tol=1e-10, mono_tol=1e-8, workers=None):
    """Eigenvalues on nested balls for several environments.

    Every environment is sampled once on the largest ball; all radii share
    the lattice spacing ``h`` (a float, or a callable ``R -> h`` for a
    varying policy).  The limit is reported as the interval
    ``[extrapolated, lambda_hat(R_max)]``: the mean over environments of the
    ``a + b / R^2`` fit, clipped to ``[0, lambda_hat(R_max)]``, and the mean
    value at the largest radius.
    """
    R_grid = [float(r) for r in R_grid]
    if len(R_grid) < 3 or any(b <= a for a, b in zip(R_grid, R_grid[1:])):
        raise ValueError("R grid must be increasing with at least 3 values")
    hfun = h if callable(h) else (lambda R, _h=(h or default_h(R_grid)): _h)
    records, per_env, mono, fits = [], {}, {}, []
    for s in seeds:
        cloud = None
        if spec.family in ("lacoin", "polytail", "ruess"):
            cloud = sample_cloud(spec, R_grid[-1] + 1.0, s)
        lam, x0 = [], None
        for R in R_grid:
            prob = grid_problem(spec, cloud, R, hfun(R))
            res = principal_eigenvalue(prob, tol=tol)
            records.append(EigenRecord(int(s), R, prob.h, res.value, res.residual, res.iterations))
            lam.append(res.value)
        per_env[int(s)] = lam
        mono[int(s)] = all(b <= a + mono_tol for a, b in zip(lam, lam[1:]))
        fits.append(_fit_limit(R_grid, lam))
    top = np.array([v[-1] for v in per_env.values()])
    a = np.array([f[0] for f in fits])
    low = float(np.clip(np.mean(a), 0.0, np.mean(top)))
    spread = float(np.std(top, ddof=1)) if top.size > 1 else 0.0
    return LambdaLimit(tuple(records), per_env, mono, low, float(np.mean(top)), spread,
                       (float(np.mean(a)), float(np.mean([f[1] for f in fits]))))


def _fit_limit(R, lam):
    R = np.asarray(R)
    lam = np.asarray(lam)
    try:
        (a, b), _ = curve_fit(lambda r, a, b: a + b / r ** 2, R, lam, p0=(lam[-1], 1.0))
    except RuntimeError:
        a, b = lam[-1], 0.0
    return float(a), float(b)


def write_records(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["env_seed", "R", "h", "lambda_hat", "residual", "iters"])
        for r in records:
            w.writerow([r.env_seed, repr(r.R), repr(r.h), repr(r.lambda_hat), repr(r.residual),
                        r.iters])


def zero_potential_eigenvalue(d, R=1.0):
    """Continuum reference ``lambda_d / R^2`` for the zero potential."""
    return dirichlet_unit_ball(d) / R ** 2


__all__ = ["GridProblem", "EigenResult", "ConvergenceError", "grid_problem", "node_coordinates",
           "principal_eigenvalue", "rayleigh_quotient", "cosine_bump", "richardson",
           "lambda_V_limit", "LambdaLimit", "EigenRecord", "write_records",
           "zero_potential_eigenvalue", "PointCloud"]
