"""Grid-indexed potential fields usable from numba kernels.

Each potential family has its own field type (a NamedTuple of arrays and
scalars): :class:`ConstField` for Zero/Constant, :class:`BallField` for
Lacoin, :class:`TailField` for PolyTail and :class:`LineField` for Ruess.
The exact window is covered by square cells (side 0.5 by default).  Each cell
holds a constant part (Lacoin balls covering the whole cell, or a tube
coverage flag) and a CSR block of rows for the items whose boundary or
support crosses the cell.  The rows are copied per cell so that evaluation
streams through contiguous memory.  Points always carry three coordinates
(unused ones are zero), which keeps the kernels dimension-agnostic for
``d <= 3``.

Evaluation outside the window returns ``-1.0``, which callers treat as a
truncation violation.
"""

import math
from typing import NamedTuple

import numba as nb
import numpy as np
from numba.extending import overload

OUTSIDE = -1.0


class ConstField(NamedTuple):
    value: float
    window2: float


class BallField(NamedTuple):
    data: np.ndarray       # (n_entries, 5) per-cell rows (x, y, z, r^2, weight)
    origin: np.ndarray     # (3,) lower corner of the cell grid
    inv_cell: float        # 1 / cell side
    ncell: np.ndarray      # (3,) cells per axis
    start: np.ndarray      # CSR offsets into data, length ncells + 1
    offset: np.ndarray     # weight of balls covering the whole cell
    window2: float         # squared radius of the exact window


class TailField(NamedTuple):
    data: np.ndarray       # (n_entries, 5) per-cell rows (x, y, z, 0, 0)
    origin: np.ndarray
    inv_cell: float
    ncell: np.ndarray
    start: np.ndarray
    c9: float
    half_gamma: float
    cut2: float
    window2: float


class LineField(NamedTuple):
    data: np.ndarray       # (n_entries, 5) per-cell rows (nx, ny, rho, 0, 0)
    origin: np.ndarray
    inv_cell: float
    ncell: np.ndarray
    start: np.ndarray
    covered: np.ndarray    # 1.0 where a tube covers the whole cell
    m: float
    M: float
    tube: float
    window2: float


def constant_field(c):
    return ConstField(float(c), math.inf)


def _grid_geometry(d, window, cell):
    n = max(1, int(math.ceil(window / cell)))
    origin = np.full(3, -0.5 * cell)
    ncell = np.ones(3, dtype=np.int64)
    origin[:d] = -n * cell
    ncell[:d] = 2 * n
    return origin, ncell


@nb.njit(inline="always")
def _box_dist2(c0, c1, c2, lo0, lo1, lo2, hi0, hi1, hi2):
    # squared distances from a point to the nearest and farthest points of a box
    a0 = max(lo0 - c0, 0.0, c0 - hi0)
    a1 = max(lo1 - c1, 0.0, c1 - hi1)
    a2 = max(lo2 - c2, 0.0, c2 - hi2)
    b0 = max(abs(c0 - lo0), abs(c0 - hi0))
    b1 = max(abs(c1 - lo1), abs(c1 - hi1))
    b2 = max(abs(c2 - lo2), abs(c2 - hi2))
    return a0 * a0 + a1 * a1 + a2 * a2, b0 * b0 + b1 * b1 + b2 * b2


@nb.njit(cache=True)
def _build_balls(pts, reach, wts, origin, cs, ncell, d, mode):
    """CSR index for balls (mode 0, with full-cover offsets) or point supports (mode 1)."""
    n0, n1, n2 = ncell[0], ncell[1], ncell[2]
    nc = n0 * n1 * n2
    counts = np.zeros(nc + 1, dtype=np.int64)
    offset = np.zeros(nc)
    lohi = np.empty(6)
    for sweep in range(2):
        if sweep == 1:
            for c in range(nc):
                counts[c + 1] += counts[c]
            items = np.empty(counts[nc], dtype=np.int64)
            fill = counts[:nc].copy()
        for i in range(pts.shape[0]):
            r = reach[i]
            r2 = r * r
            for k in range(3):
                if k < d:
                    lo = int(math.floor((pts[i, k] - r - origin[k]) / cs))
                    hi = int(math.floor((pts[i, k] + r - origin[k]) / cs))
                    lohi[2 * k] = max(lo, 0)
                    lohi[2 * k + 1] = min(hi, ncell[k] - 1)
                else:
                    lohi[2 * k] = 0
                    lohi[2 * k + 1] = 0
            for i0 in range(int(lohi[0]), int(lohi[1]) + 1):
                for i1 in range(int(lohi[2]), int(lohi[3]) + 1):
                    for i2 in range(int(lohi[4]), int(lohi[5]) + 1):
                        b0 = origin[0] + i0 * cs
                        b1 = origin[1] + i1 * cs
                        b2 = origin[2] + i2 * cs
                        # inactive axes collapse to the point's own coordinate
                        e0 = b0 + cs
                        e1 = b1 + cs
                        e2 = b2 + cs
                        if d < 2:
                            b1 = pts[i, 1]
                            e1 = b1
                        if d < 3:
                            b2 = pts[i, 2]
                            e2 = b2
                        near2, far2 = _box_dist2(pts[i, 0], pts[i, 1], pts[i, 2],
                                                 b0, b1, b2, e0, e1, e2)
                        c = (i0 * n1 + i1) * n2 + i2
                        if mode == 0 and far2 < r2:
                            if sweep == 0:
                                offset[c] += wts[i]
                        elif (mode == 0 and near2 < r2) or (mode == 1 and near2 <= r2):
                            if sweep == 0:
                                counts[c + 1] += 1
                            else:
                                items[fill[c]] = i
                                fill[c] += 1
    return counts, items, offset


@nb.njit(cache=True)
def _build_lines(pts, tube, origin, cs, ncell):
    """CSR index for planar lines ``{y : y.n = rho}`` with tube half-width ``tube``."""
    n0, n1 = ncell[0], ncell[1]
    nc = n0 * n1
    counts = np.zeros(nc + 1, dtype=np.int64)
    covered = np.zeros(nc)
    half = cs * math.sqrt(0.5)
    for sweep in range(2):
        if sweep == 1:
            for c in range(nc):
                counts[c + 1] += counts[c]
            items = np.empty(counts[nc], dtype=np.int64)
            fill = counts[:nc].copy()
        for i in range(pts.shape[0]):
            nx, ny, rho = pts[i, 0], pts[i, 1], pts[i, 2]
            for i0 in range(n0):
                for i1 in range(n1):
                    c = i0 * n1 + i1
                    x0 = origin[0] + i0 * cs
                    y0 = origin[1] + i1 * cs
                    dc = abs((x0 + 0.5 * cs) * nx + (y0 + 0.5 * cs) * ny - rho)
                    if dc > tube + half:
                        continue
                    far = 0.0
                    for cx in range(2):
                        for cy in range(2):
                            far = max(far, abs((x0 + cx * cs) * nx + (y0 + cy * cs) * ny - rho))
                    if far < tube:
                        if sweep == 0:
                            covered[c] = 1.0
                    elif sweep == 0:
                        counts[c + 1] += 1
                    else:
                        items[fill[c]] = i
                        fill[c] += 1
    return counts, items, covered


def pad3(points):
    """Return an (n, 3) float array with zero-padded coordinates."""
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    out = np.zeros((p.shape[0], 3))
    out[:, :p.shape[1]] = p
    return out


def _pack(rows, items):
    data = np.zeros((items.size, 5))
    if items.size:
        data[:, :rows.shape[1]] = rows[items]
    return data


DEFAULT_CELL = 0.5


def lacoin_field(centers, marks, gamma, window, cell=DEFAULT_CELL):
    d = centers.shape[1]
    origin, ncell = _grid_geometry(d, window, cell)
    pts = pad3(centers) if len(centers) else np.zeros((0, 3))
    marks = np.asarray(marks, dtype=np.float64)
    wts = marks ** (-gamma)
    start, items, offset = _build_balls(pts, marks, wts, origin, float(cell), ncell, d, 0)
    rows = np.column_stack([pts, marks * marks, wts])
    return BallField(_pack(rows, items), origin, 1.0 / cell, ncell, start, offset,
                     float(window) ** 2)


def polytail_field(centers, c9, gamma, cutoff, window, cell=DEFAULT_CELL):
    d = centers.shape[1]
    origin, ncell = _grid_geometry(d, window, cell)
    pts = pad3(centers) if len(centers) else np.zeros((0, 3))
    reach = np.full(pts.shape[0], float(cutoff))
    start, items, offset = _build_balls(pts, reach, np.zeros(pts.shape[0]), origin, float(cell),
                                        ncell, d, 1)
    return TailField(_pack(pts, items), origin, 1.0 / cell, ncell, start, float(c9),
                     -0.5 * float(gamma), float(cutoff) ** 2, float(window) ** 2)


def ruess_field(rho, theta, m, M, tube, window, cell=DEFAULT_CELL):
    origin, ncell = _grid_geometry(2, window, cell)
    pts = np.column_stack([np.sin(theta), -np.cos(theta), rho]) if len(rho) else np.zeros((0, 3))
    start, items, covered = _build_lines(np.ascontiguousarray(pts), float(tube), origin,
                                         float(cell), ncell)
    return LineField(_pack(pts, items), origin, 1.0 / cell, ncell, start, covered,
                     float(m), float(M), float(tube), float(window) ** 2)


@nb.njit(inline="always")
def _cell(F, x0, x1, x2):
    ic = F.inv_cell
    i0 = min(max(int(math.floor((x0 - F.origin[0]) * ic)), 0), F.ncell[0] - 1)
    i1 = min(max(int(math.floor((x1 - F.origin[1]) * ic)), 0), F.ncell[1] - 1)
    i2 = min(max(int(math.floor((x2 - F.origin[2]) * ic)), 0), F.ncell[2] - 1)
    return (i0 * F.ncell[1] + i1) * F.ncell[2] + i2


@nb.njit(inline="always")
def _const_value(F, x0, x1, x2):
    return F.value


@nb.njit(inline="always")
def _ball_value(F, x0, x1, x2):
    if x0 * x0 + x1 * x1 + x2 * x2 > F.window2:
        return OUTSIDE
    c = _cell(F, x0, x1, x2)
    dat = F.data
    v = F.offset[c]
    # branch-free accumulation: inside/outside is unpredictable along a path
    for k in range(F.start[c], F.start[c + 1]):
        a = x0 - dat[k, 0]
        b = x1 - dat[k, 1]
        e = x2 - dat[k, 2]
        v += dat[k, 4] * (a * a + b * b + e * e < dat[k, 3])
    return v


@nb.njit(inline="always")
def _tail_value(F, x0, x1, x2):
    if x0 * x0 + x1 * x1 + x2 * x2 > F.window2:
        return OUTSIDE
    c = _cell(F, x0, x1, x2)
    dat = F.data
    v = 0.0
    for k in range(F.start[c], F.start[c + 1]):
        a = x0 - dat[k, 0]
        b = x1 - dat[k, 1]
        e = x2 - dat[k, 2]
        q = a * a + b * b + e * e
        if q <= F.cut2:
            v += F.c9 if q <= 1.0 else F.c9 * q ** F.half_gamma
    return v


@nb.njit(inline="always")
def _line_value(F, x0, x1, x2):
    if x0 * x0 + x1 * x1 + x2 * x2 > F.window2:
        return OUTSIDE
    c = _cell(F, x0, x1, x2)
    if F.covered[c] > 0.0:
        return F.m
    dat = F.data
    for k in range(F.start[c], F.start[c + 1]):
        if abs(x0 * dat[k, 0] + x1 * dat[k, 1] - dat[k, 2]) < F.tube:
            return F.m
    return F.M


def field_value(F, x0, x1, x2):
    """Potential at ``(x0, x1, x2)``; ``-1.0`` outside the exact window.

    Compiled per field type, so each kernel only contains the code of one
    potential family.
    """
    return {ConstField: _const_value, BallField: _ball_value, TailField: _tail_value,
            LineField: _line_value}[type(F)].py_func(F, x0, x1, x2)


@overload(field_value, inline="always")
def _field_value_overload(F, x0, x1, x2):
    cls = getattr(F, "instance_class", None)
    impl = {ConstField: _const_value, BallField: _ball_value, TailField: _tail_value,
            LineField: _line_value}.get(cls)
    if impl is None:
        return None

    def f(F, x0, x1, x2):
        return impl(F, x0, x1, x2)
    return f


@nb.njit(cache=True)
def field_values(F, X):
    """Vectorized :func:`field_value` over rows of an (n, 3) array."""
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        out[i] = field_value(F, X[i, 0], X[i, 1], X[i, 2])
    return out
