"""Numba path kernel shared by every Monte Carlo estimator.

One call advances ``n`` independent Euler paths.  Path ``p`` draws its
increments from the stream ``(key, path0 + p)``; bridge-crossing uniforms come
from a second word of the same counter so that switching the bridge test on or
off leaves the Gaussian increments untouched.
"""

import math

import numba as nb
import numpy as np

# skip the TBB probe: the system TBB is too old and only produces a warning
nb.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

from ._field import field_value
from .rng import WORD_AUX, WORD_MAIN, normal, seed_stream, uniform

EV_HORIZON = 0
EV_HIT = 1
EV_EXIT = 2
EV_ABANDON = 3
EV_WINDOW = 4
EV_NONFINITE = 5

STOP_HORIZON = 0
STOP_HIT = 1
STOP_EXIT = 2

EVENT_NAMES = ("horizon", "hit", "exit", "abandoned", "window_exit", "nonfinite")


@nb.njit(parallel=True, cache=True)
def run_kernel(k0, k1, path0, n, d, start, drift, dt, n_steps,
               stop_kind, center, radius, bridge,
               ab_dir, ab_point, ab_margin, use_ab,
               F, ck_steps, occ_lo, occ_hi, occ_rate, use_occ, record,
               ev, st, iv, endp, ck_out, occ_out, traj):
    sq = math.sqrt(dt)
    r2 = radius * radius
    band = math.sqrt(20.0 * dt)
    near2 = (radius + band) ** 2
    far2 = max(radius - band, 0.0) ** 2
    n_ck = ck_steps.shape[0]
    extras = use_occ or n_ck > 0
    dx0 = drift[0] * dt
    dx1 = drift[1] * dt
    dx2 = drift[2] * dt
    for p in nb.prange(n):
        s0, s1, s2, s3 = seed_stream(k0, k1, path0 + p, WORD_MAIN)
        a0, a1, a2, a3 = seed_stream(k0, k1, path0 + p, WORD_AUX)
        z0 = start[0]
        z1 = start[1]
        z2 = start[2]
        if record:
            traj[0, 0] = z0
            traj[0, 1] = z1
            traj[0, 2] = z2
        v_prev = field_value(F, z0, z1, z2)
        integ = 0.0
        occ = 0.0
        event = EV_HORIZON
        steps = n_steps
        ick = 0
        if v_prev < 0.0:
            event = EV_WINDOW
            steps = 0
        else:
            q0 = z0 - center[0]
            q1 = z1 - center[1]
            q2 = z2 - center[2]
            dprev2 = q0 * q0 + q1 * q1 + q2 * q2
            for k in range(n_steps):
                g, s0, s1, s2, s3 = normal(s0, s1, s2, s3)
                z0 += dx0 + sq * g
                if d > 1:
                    g, s0, s1, s2, s3 = normal(s0, s1, s2, s3)
                    z1 += dx1 + sq * g
                if d > 2:
                    g, s0, s1, s2, s3 = normal(s0, s1, s2, s3)
                    z2 += dx2 + sq * g
                if record:
                    traj[k + 1, 0] = z0
                    traj[k + 1, 1] = z1
                    traj[k + 1, 2] = z2
                v = field_value(F, z0, z1, z2)
                if not (0.0 <= v < math.inf):
                    event = EV_WINDOW if v < 0.0 else EV_NONFINITE
                    steps = k + 1
                    break
                integ += 0.5 * (v_prev + v) * dt
                v_prev = v
                if stop_kind != STOP_HORIZON:
                    q0 = z0 - center[0]
                    q1 = z1 - center[1]
                    q2 = z2 - center[2]
                    dist2 = q0 * q0 + q1 * q1 + q2 * q2
                    if stop_kind == STOP_HIT:
                        if dist2 <= r2:
                            event = EV_HIT
                            steps = k + 1
                            break
                        # both endpoints beyond radius + sqrt(20 dt) imply exp(-2ab/dt) < e^-40
                        if bridge and (dist2 < near2 or dprev2 < near2):
                            dcur = math.sqrt(dist2)
                            dprev = math.sqrt(dprev2)
                            e = 2.0 * (dprev - radius) * (dcur - radius) / dt
                            if e < 40.0:
                                u, a0, a1, a2, a3 = uniform(a0, a1, a2, a3)
                                if u < math.exp(-e):
                                    event = EV_HIT
                                    steps = k + 1
                                    break
                    else:
                        if dist2 >= r2:
                            event = EV_EXIT
                            steps = k + 1
                            break
                        if bridge and (dist2 > far2 or dprev2 > far2):
                            dcur = math.sqrt(dist2)
                            dprev = math.sqrt(dprev2)
                            e = 2.0 * (radius - dprev) * (radius - dcur) / dt
                            if e < 40.0:
                                u, a0, a1, a2, a3 = uniform(a0, a1, a2, a3)
                                if u < math.exp(-e):
                                    event = EV_EXIT
                                    steps = k + 1
                                    break
                    dprev2 = dist2
                if use_ab:
                    h = (ab_dir[0] * (z0 - ab_point[0]) + ab_dir[1] * (z1 - ab_point[1])
                         + ab_dir[2] * (z2 - ab_point[2]))
                    if h > ab_margin:
                        event = EV_ABANDON
                        steps = k + 1
                        break
                if extras:
                    if use_occ:
                        if (occ_lo[0] <= z0 < occ_hi[0] and occ_lo[1] <= z1 < occ_hi[1]
                                and occ_lo[2] <= z2 < occ_hi[2]):
                            occ += dt * math.exp(-integ - occ_rate * (k + 1) * dt)
                    while ick < n_ck and ck_steps[ick] == k + 1:
                        ck_out[p, ick] = integ
                        ick += 1
        while ick < n_ck:
            ck_out[p, ick] = math.inf
            ick += 1
        tau = steps * dt
        ev[p] = event
        st[p] = tau
        iv[p] = integ
        endp[p, 0] = z0
        endp[p, 1] = z1
        endp[p, 2] = z2
        if use_occ:
            occ_out[p] = occ
    return 0
