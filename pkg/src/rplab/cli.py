"""Command line entry point ``rp-lab``.

Every subcommand takes the global flags ``--seed``, ``--workers``, ``--out``
and ``--config``.  A config file holds ``key = value`` lines (``#`` starts a
comment, lists are comma separated, keys are the long flag names); flags
given on the command line win over the file.

Outputs land in ``--out``: the CSV tables of the experiment plus
``manifest.json`` (config echo, content hash of the inputs, wall time).
Exit status is 1 when the configuration is invalid and 2 on resource
failures (memory, truncation window, non-convergence, I/O).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .feynman_kac import csv_header, decay_rate, survival_curve
from .lyapunov_ldp import (CELL_HEADER, DEFAULT_LAMBDAS, direction_grid, endpoint_ldp_check,
                           lyapunov_curve, phase_verdict, rate_function, shape_diagnostic)
from .paths import PathConfig, set_workers
from .potentials import (FAMILIES, Lacoin, TruncationError, check_params, closed_form_moments,
                         empirical_covariance, environment_cloud, environment_seed, exp_moment,
                         exp_moment_mc, expected_sup_unit_ball, halo_sum_samples,
                         lacoin_covariance, make_spec, potential_at_origin, sample_cloud)
from .spectrum import ConvergenceError, grid_problem, lambda_V_limit, principal_eigenvalue

KINDS = ("potential-stats", "survival", "lyapunov", "shape", "rate", "phase", "eigen",
         "ldp-check")

EXIT_INVALID = 1
EXIT_RESOURCE = 2


@dataclass
class ExperimentConfig:
    """Everything one run needs.  Lists are tuples of floats."""

    kind: str
    family: str = "zero"
    d: int = 2
    gamma: float | None = None
    delta: float | None = None
    c9: float = 1.0
    nu: float | None = None
    m: float | None = None
    M: float | None = None
    tube: float | None = None
    c: float | None = None
    dt: float = 0.01
    t_max: float | None = None
    bridge: bool = True
    n_env: int = 1
    n_paths: int = 1000
    t: tuple = ()
    lambdas: tuple = DEFAULT_LAMBDAS
    lam: float = 1.0
    scales: tuple = (8.0, 16.0, 32.0)
    R: tuple = ()
    h: float | None = None
    x: tuple = ()
    magnitudes: tuple = ()
    v: tuple = ()
    radius: float = 1.0
    drift: tuple = ()
    drift_scales: tuple = (1.0,)
    lags: tuple = ()
    exp_s: tuple = ()
    exp_R: tuple = ()
    cov_method: str = "sample"
    sup_env: int = 0
    killing_radius: float | None = None
    seed: int = 0
    out: str = "rp-out"
    workers: int = 1
    sources: dict = field(default_factory=dict)

    def spec_params(self):
        fam = self.family
        if fam == "lacoin":
            return {"d": self.d, "gamma": self.gamma, "delta": self.delta}
        if fam == "polytail":
            return {"d": self.d, "gamma": self.gamma, "c9": self.c9}
        if fam == "ruess":
            return {"d": self.d, "nu": self.nu, "m": self.m, "M": self.M, "R": self.tube}
        if fam == "constant":
            return {"d": self.d, "c": self.c}
        return {"d": self.d}

    def spec(self):
        p = {k: v for k, v in self.spec_params().items() if v is not None}
        return make_spec(self.family, **p)

    def path_config(self, t_max=None):
        return PathConfig(dt=self.dt, t_max=t_max or self.t_max or 10.0,
                          bridge_correction=self.bridge)

    def echo(self):
        out = {k: v for k, v in asdict(self).items() if k != "sources"}
        return json.loads(json.dumps(out))


_LIST_KEYS = {"t", "lambdas", "scales", "R", "x", "magnitudes", "v", "drift", "drift_scales",
              "lags", "exp_s", "exp_R"}
_INT_KEYS = {"d", "n_env", "n_paths", "seed", "workers", "sup_env"}
_STR_KEYS = {"kind", "family", "out", "cov_method"}
_BOOL_KEYS = {"bridge"}
_KEYS = {f.name for f in fields(ExperimentConfig)} - {"sources"}


def _parse_value(key, text):
    text = text.strip()
    if key in _LIST_KEYS:
        return tuple(float(t) for t in text.split(",") if t.strip())
    if key in _INT_KEYS:
        return int(text)
    if key in _STR_KEYS:
        return text
    if key in _BOOL_KEYS:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if text.lower() in ("none", ""):
        return None
    return float(text)


def read_config_file(path):
    """Parse a ``key = value`` file.

    Returns
    -------
    values : dict
    lines : dict
        Line number of every key.
    errors : list of str
        Line-numbered parse errors.
    """
    values, lines, errors = {}, {}, []
    with open(path) as fh:
        for no, raw in enumerate(fh, start=1):
            body = raw.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                errors.append(f"{path}:{no}: expected 'key = value', got {body!r}")
                continue
            key, text = (s.strip() for s in body.split("=", 1))
            key = key.replace("-", "_")
            if key not in _KEYS:
                errors.append(f"{path}:{no}: unknown key {key!r}")
                continue
            try:
                values[key] = _parse_value(key, text)
            except ValueError as exc:
                errors.append(f"{path}:{no}: cannot parse {key}: {exc}")
                continue
            lines[key] = f"{path}:{no}"
    return values, lines, errors


def _where(cfg, key):
    src = cfg.sources.get(key)
    return src if src else f"--{key.replace('_', '-')}"


def validate(cfg):
    """Every invariant violation of a configuration; empty iff runnable.

    Each message starts with the location of the offending setting: the
    config file line, or the flag name.
    """
    out = []
    if cfg.kind not in KINDS:
        out.append(f"{_where(cfg, 'kind')}: unknown experiment kind {cfg.kind!r}")
    if cfg.family not in FAMILIES:
        out.append(f"{_where(cfg, 'family')}: unknown potential family {cfg.family!r} "
                   f"(choose from {', '.join(FAMILIES)})")
    else:
        params = {k: v for k, v in cfg.spec_params().items() if v is not None}
        for msg in check_params(cfg.family, params):
            key = _message_key(msg, cfg.family)
            out.append(f"{_where(cfg, key)}: {msg}")
    if not 1 <= cfg.d <= 3:
        out.append(f"{_where(cfg, 'd')}: dimension must be 1, 2 or 3, got {cfg.d}")
    for key in ("n_env", "n_paths", "workers"):
        if getattr(cfg, key) < 1:
            out.append(f"{_where(cfg, key)}: {key} must be >= 1, got {getattr(cfg, key)}")
    if not cfg.dt > 0:
        out.append(f"{_where(cfg, 'dt')}: dt must be > 0, got {cfg.dt}")
    if cfg.t_max is not None:
        if not cfg.t_max > 0:
            out.append(f"{_where(cfg, 't_max')}: t_max must be > 0, got {cfg.t_max}")
        elif cfg.dt > cfg.t_max:
            out.append(f"{_where(cfg, 'dt')}, {_where(cfg, 't_max')}: dt ({cfg.dt}) exceeds "
                       f"t_max ({cfg.t_max})")
    for key in ("x", "v", "drift"):
        vec = getattr(cfg, key)
        if vec and len(vec) != cfg.d:
            out.append(f"{_where(cfg, key)}: {key} needs {cfg.d} coordinates, got {len(vec)}")
    k = cfg.kind
    if k == "survival":
        if len(cfg.t) < 1:
            out.append(f"{_where(cfg, 't')}: the t grid is empty")
        elif any(b <= a for a, b in zip(cfg.t, cfg.t[1:])) or cfg.t[0] <= 0:
            out.append(f"{_where(cfg, 't')}: t grid must be positive and increasing")
        elif cfg.t_max is not None and cfg.t[-1] > cfg.t_max:
            out.append(f"{_where(cfg, 't')}, {_where(cfg, 't_max')}: t = {cfg.t[-1]} exceeds "
                       f"t_max = {cfg.t_max}")
    if k in ("lyapunov", "shape", "rate", "phase"):
        if len(cfg.scales) < (1 if k == "shape" else 3):
            out.append(f"{_where(cfg, 'scales')}: need at least 3 scales")
        if any(b <= a for a, b in zip(cfg.scales, cfg.scales[1:])):
            out.append(f"{_where(cfg, 'scales')}: scales must increase")
        if k != "shape":
            if not cfg.lambdas:
                out.append(f"{_where(cfg, 'lambdas')}: the lambda grid is empty")
            elif cfg.lambdas[0] < 0 or any(b <= a for a, b in zip(cfg.lambdas, cfg.lambdas[1:])):
                out.append(f"{_where(cfg, 'lambdas')}: shifted rates must be >= 0 and increasing")
    if k in ("phase",) and cfg.lambdas and cfg.lambdas[0] != 0:
        out.append(f"{_where(cfg, 'lambdas')}: phase verdicts need the floor rate 0 in the grid")
    if k == "phase" and not cfg.drift:
        out.append(f"{_where(cfg, 'drift')}: phase needs a drift vector")
    if k == "eigen":
        if not cfg.R:
            out.append(f"{_where(cfg, 'R')}: the R grid is empty")
        elif cfg.h is not None and cfg.h > min(cfg.R) / 16 * (1 + 1e-12):
            out.append(f"{_where(cfg, 'h')}: h = {cfg.h} exceeds R/16 = {min(cfg.R) / 16}")
        if cfg.R and any(b <= a for a, b in zip(cfg.R, cfg.R[1:])):
            out.append(f"{_where(cfg, 'R')}: R grid must increase")
    if k == "ldp-check":
        if not cfg.t:
            out.append(f"{_where(cfg, 't')}: the t grid is empty")
        if not cfg.radius > 0:
            out.append(f"{_where(cfg, 'radius')}: radius must be > 0")
    if k == "potential-stats" and cfg.cov_method not in ("sample", "campbell"):
        out.append(f"{_where(cfg, 'cov_method')}: unknown covariance method {cfg.cov_method!r}")
    if not out:
        try:
            os.makedirs(cfg.out, exist_ok=True)
            if not os.access(cfg.out, os.W_OK):
                raise PermissionError(cfg.out)
        except OSError as exc:
            out.append(f"{_where(cfg, 'out')}: output directory not writable ({exc})")
    return out


def _message_key(msg, family):
    for key in ("gamma", "delta", "c9", "nu", "M", "m", "c"):
        if f" {key} " in f" {msg.replace('=', ' ').replace(',', ' ')} ":
            return key
    if "tube" in msg or "R must" in msg or msg.endswith("parameter R"):
        return "tube"
    if "dimension" in msg or " d=" in msg:
        return "d"
    return "family"


# ---------------------------------------------------------------- output helpers

def git_blob_sha1(data):
    """Content hash in the format of ``git hash-object``."""
    if isinstance(data, str):
        data = data.encode()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _f(v):
    if v is None:
        return "nan"
    return repr(float(v))


# ---------------------------------------------------------------- experiments

def run_potential_stats(cfg):
    spec = cfg.spec()
    rows = []
    v0 = potential_at_origin(spec, cfg.n_env, cfg.seed)
    n = v0.size
    mean = float(v0.mean())
    se_mean = float(v0.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    var = float(v0.var(ddof=1)) if n > 1 else 0.0
    dev = (v0 - mean) ** 2
    se_var = float(dev.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    cm, cv = closed_form_moments(spec) if isinstance(spec, Lacoin) else (None, None)
    rows.append(["mean_V0", "", _f(mean), _f(se_mean), _f(cm), str(n)])
    rows.append(["var_V0", "", _f(var), _f(se_var), _f(cv), str(n)])
    for lag in cfg.lags:
        vec = np.zeros(spec.d)
        vec[0] = lag
        est = empirical_covariance(spec, vec, cfg.n_env, cfg.seed, method=cfg.cov_method)
        exact = lacoin_covariance(spec, vec) if isinstance(spec, Lacoin) else None
        rows.append([f"cov_{cfg.cov_method}", _f(lag), _f(est.value), _f(est.std_error),
                     _f(exact), str(cfg.n_env)])
    for R in cfg.exp_R:
        samples = halo_sum_samples(spec, R, cfg.n_env, cfg.seed)
        for s in cfg.exp_s:
            m, se = exp_moment_mc(spec, s, R, cfg.n_env, cfg.seed, samples=samples)
            rows.append(["exp_moment", f"s={s!r};R={R!r}", _f(m), _f(se),
                         _f(exp_moment(spec, s, R)), str(cfg.n_env)])
    if cfg.sup_env:
        m, se = expected_sup_unit_ball(spec, cfg.sup_env, cfg.seed)
        rows.append(["sup_unit_ball", "", _f(m), _f(se), "nan", str(cfg.sup_env)])
    path = write_csv(os.path.join(cfg.out, "potential_stats.csv"),
                     ["quantity", "parameter", "estimate", "stderr", "closed_form", "n_env"], rows)
    return [path]


def _survival_window(cfg):
    # a Brownian path stays within 8 sqrt(t) + 4 of the origin up to a negligible probability
    return 8.0 * math.sqrt(cfg.t[-1] * cfg.d) + 4.0


def run_survival(cfg):
    spec = cfg.spec()
    pc = cfg.path_config(cfg.t_max or cfg.t[-1])
    rows, fits, clouds = [], [], []
    window = max(_survival_window(cfg), (cfg.killing_radius or 0) + 2.0)
    n_env = cfg.n_env if spec.family in ("lacoin", "polytail", "ruess") else 1
    d = spec.d
    for e in range(n_env):
        cloud = environment_cloud(spec, window, cfg.seed, e)
        ests, _ = survival_curve(spec, cloud, cfg.t, cfg.n_paths, pc, cfg.seed,
                                 cfg.killing_radius, cfg.workers)
        for est in ests:
            row = est.csv_row(d)
            row[0] = f"survival@t={est.extras['t']!r}"
            rows.append(row)
        clouds.append(cloud)
    paths = [write_csv(os.path.join(cfg.out, "survival.csv"), csv_header(d), rows)]
    if len(cfg.t) >= 4:
        fit = decay_rate(spec, clouds, cfg.t, cfg.n_paths, pc, cfg.seed, cfg.killing_radius,
                         workers=cfg.workers)
        for cl, s in zip(clouds, fit.per_environment):
            fits.append([str(0 if cl is None else cl.seed), _f(s)])
        paths.append(write_csv(os.path.join(cfg.out, "decay.csv"),
                               ["quantity", "slope", "stderr", "ci_low", "ci_high"],
                               [["decay_rate", _f(fit.slope), _f(fit.std_error), _f(fit.ci_low),
                                 _f(fit.ci_high)]]))
    return paths


def _direction(cfg):
    if cfg.x:
        x = np.asarray(cfg.x, dtype=np.float64)
    else:
        x = np.zeros(cfg.d)
        x[0] = 1.0
    return x


def _curve(cfg, spec, x, lams=None):
    config = None
    if cfg.t_max is not None:
        config = cfg.path_config()
    return lyapunov_curve(spec, x, lams or cfg.lambdas, cfg.scales, cfg.n_env, cfg.n_paths,
                          cfg.seed, config=config, workers=cfg.workers)


def _alpha_rows(curve, k=0):
    return [[str(k), _f(mu), _f(a), _f(s), _f(lo), _f(hi), _f(p)]
            for mu, a, s, lo, hi, p in zip(curve.lams, curve.alpha, curve.std_error, curve.ci_low,
                                           curve.ci_high, curve.projected)]


_ALPHA_HEADER = ["direction_index", "lambda", "alpha", "stderr", "ci_low", "ci_high", "projected"]


def run_lyapunov(cfg):
    spec = cfg.spec()
    curve = _curve(cfg, spec, _direction(cfg))
    p1 = write_csv(os.path.join(cfg.out, "cells.csv"), CELL_HEADER, curve.rows(0))
    p2 = write_csv(os.path.join(cfg.out, "alpha.csv"), _ALPHA_HEADER, _alpha_rows(curve))
    p3 = _write_json(os.path.join(cfg.out, "checks.json"),
                     {"checks": curve.checks(), "scale_trend": list(curve.meta["scale_trend"]),
                      "counters": {k: v for k, v in curve.meta.items() if k != "scale_trend"}})
    return [p1, p2, p3]


def run_shape(cfg):
    spec = cfg.spec()
    dirs = direction_grid(spec.d)
    config = cfg.path_config() if cfg.t_max is not None else None
    rep = shape_diagnostic(spec, cfg.lam, dirs, cfg.scales, cfg.n_env, cfg.n_paths, cfg.seed,
                           config=config, workers=cfg.workers)
    rows = []
    for j, r in enumerate(rep.scales):
        for k, u in enumerate(rep.directions):
            vals = rep.a_over_r[j, k]
            se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else float(rep.path_se[j, k, 0])
            rows.append([_f(r), str(k)] + [_f(c) for c in u]
                        + [_f(vals.mean()), _f(se), _f(rep.reference[k])])
    head = ["scale", "direction_index"] + [f"u{i + 1}" for i in range(spec.d)] + [
        "a_over_r", "stderr", "reference"]
    p1 = write_csv(os.path.join(cfg.out, "shape.csv"), head, rows)
    p2 = write_csv(os.path.join(cfg.out, "deviation.csv"), ["scale", "deviation", "stderr"],
                   [[_f(r), _f(v), _f(s)] for r, v, s in zip(rep.scales, rep.deviation,
                                                             rep.deviation_se)])
    return [p1, p2]


def run_rate(cfg):
    spec = cfg.spec()
    x = _direction(cfg)
    mag = float(np.linalg.norm(x))
    u = x / mag
    curve = _curve(cfg, spec, u)
    sup_mean = 0.0
    if cfg.sup_env:
        sup_mean = expected_sup_unit_ball(spec, cfg.sup_env, cfg.seed)[0]
    reports = []
    for m in (cfg.magnitudes or (mag,)):
        reports.append(rate_function(curve.scaled(m), sup_mean=sup_mean))
    head = [f"x{i + 1}" for i in range(spec.d)] + ["I", "lambda_star", "lower", "upper",
                                                    "stderr", "censored"]
    rows = [[_f(c) for c in r.x] + [_f(r.rate), _f(r.lam_star), _f(r.lower), _f(r.upper),
                                    _f(r.std_error), str(int(r.censored))] for r in reports]
    p1 = write_csv(os.path.join(cfg.out, "rate.csv"), head, rows)
    p2 = write_csv(os.path.join(cfg.out, "alpha.csv"), _ALPHA_HEADER, _alpha_rows(curve))
    p3 = _write_json(os.path.join(cfg.out, "rate.json"), [r.to_dict() for r in reports])
    return [p1, p2, p3]


def run_phase(cfg):
    spec = cfg.spec()
    curves = [_curve(cfg, spec, u) for u in direction_grid(spec.d)]
    base = np.asarray(cfg.drift, dtype=np.float64)
    verdicts = [phase_verdict(curves, s * base) for s in cfg.drift_scales]
    head = [f"h{i + 1}" for i in range(spec.d)] + ["dual_at_floor", "classification", "lambda_h",
                                                    "lambda_lo", "lambda_hi"]
    rows = []
    for v in verdicts:
        lo, hi = v.interval if v.interval else (None, None)
        rows.append([_f(c) for c in v.h] + [_f(v.dual_at_floor), v.classification, _f(v.lam_h),
                                            _f(lo), _f(hi)])
    p1 = write_csv(os.path.join(cfg.out, "phase.csv"), head, rows)
    cell_rows = [r for k, c in enumerate(curves) for r in c.rows(k)]
    p2 = write_csv(os.path.join(cfg.out, "cells.csv"), CELL_HEADER, cell_rows)
    p3 = _write_json(os.path.join(cfg.out, "phase.json"), [v.to_dict() for v in verdicts])
    return [p1, p2, p3]


def run_eigen(cfg):
    spec = cfg.spec()
    R = list(cfg.R)
    random_env = spec.family in ("lacoin", "polytail", "ruess")
    h = cfg.h if cfg.h is not None else min(min(R) / 16, 0.125)
    rows, summary = [], {}
    head = ["env_seed", "R", "h", "lambda_hat", "residual", "iters"]
    if random_env and len(R) >= 3:
        seeds = [environment_seed(cfg.seed, e) for e in range(cfg.n_env)]
        lim = lambda_V_limit(spec, R, seeds, h=h)
        rows = [[str(r.env_seed), _f(r.R), _f(r.h), _f(r.lambda_hat), _f(r.residual), str(r.iters)]
                for r in lim.records]
        summary = {"limit_interval": [lim.limit_low, lim.limit_high], "spread": lim.spread,
                   "monotone": {str(k): v for k, v in lim.monotone.items()},
                   "fit": list(lim.fit)}
    else:
        n_env = cfg.n_env if random_env else 1
        for e in range(n_env):
            seed = environment_seed(cfg.seed, e) if random_env else 0
            cloud = None
            if random_env:
                cloud = sample_cloud(spec, max(R) + 1.0, seed)
            for r in R:
                res = principal_eigenvalue(grid_problem(spec, cloud, r, h))
                rows.append([str(seed), _f(r), _f(h), _f(res.value), _f(res.residual),
                             str(res.iterations)])
    p1 = write_csv(os.path.join(cfg.out, "eigen.csv"), head, rows)
    out = [p1]
    if summary:
        out.append(_write_json(os.path.join(cfg.out, "eigen_summary.json"), summary))
    return out


def run_ldp_check(cfg):
    spec = cfg.spec()
    v = np.asarray(cfg.v if cfg.v else np.zeros(spec.d), dtype=np.float64)
    rows = []
    n_env = cfg.n_env if spec.family in ("lacoin", "polytail", "ruess") else 1
    reach = (float(np.linalg.norm(v)) + cfg.radius) * max(cfg.t) + 8.0 * math.sqrt(max(cfg.t)) + 4
    for e in range(n_env):
        cloud = environment_cloud(spec, reach, cfg.seed, e)
        rep = endpoint_ldp_check(spec, cloud, v, cfg.radius, cfg.t, cfg.n_paths, cfg.seed,
                                 dt=cfg.dt, workers=cfg.workers)
        env = 0 if cloud is None else cloud.seed
        for r in rep.rates:
            rows.append([str(env), _f(r.t), _f(r.rate), _f(r.std_error), str(r.hits),
                         str(int(r.censored))])
    p = write_csv(os.path.join(cfg.out, "ldp.csv"),
                  ["env_seed", "t", "rate", "stderr", "hits", "censored"], rows)
    return [p]


RUNNERS = {"potential-stats": run_potential_stats, "survival": run_survival,
           "lyapunov": run_lyapunov, "shape": run_shape, "rate": run_rate, "phase": run_phase,
           "eigen": run_eigen, "ldp-check": run_ldp_check}


def _write_json(path, obj):
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def run(cfg):
    """Validate, run and write the manifest.  Returns the exit status."""
    errs = validate(cfg)
    if errs:
        for e in errs:
            print(e, file=sys.stderr)
        return EXIT_INVALID
    set_workers(cfg.workers)
    t0 = time.perf_counter()
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    try:
        outputs = RUNNERS[cfg.kind](cfg)
    except (MemoryError, TruncationError, ConvergenceError, OSError, ArithmeticError) as exc:
        print(f"resource failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    wall = time.perf_counter() - t0
    echo = cfg.echo()
    canon = json.dumps({k: v for k, v in echo.items() if k != "out"}, sort_keys=True)
    manifest = {"version": __version__, "config": echo, "input_hash": git_blob_sha1(canon),
                "started": started, "wall_time_s": wall,
                "outputs": {os.path.basename(p): git_blob_sha1(open(p, "rb").read())
                            for p in outputs}}
    _write_json(os.path.join(cfg.out, "manifest.json"), manifest)
    for p in outputs:
        print(p)
    return 0


# ---------------------------------------------------------------- argument parsing

def _list(text):
    return tuple(float(t) for t in text.split(",") if t.strip())


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global")
    g.add_argument("--seed", type=int)
    g.add_argument("--workers", type=int)
    g.add_argument("--out")
    g.add_argument("--config", help="key = value file; flags override it")
    p = common.add_argument_group("potential")
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--d", type=int)
    for name in ("gamma", "delta", "c9", "nu", "m", "M", "c"):
        p.add_argument(f"--{name}", type=float)
    p.add_argument("--tube", type=float, help="Ruess tube radius")
    q = common.add_argument_group("paths and counts")
    q.add_argument("--dt", type=float)
    q.add_argument("--t-max", type=float)
    q.add_argument("--no-bridge", dest="bridge", action="store_const", const=False)
    q.add_argument("--n-env", type=int)
    q.add_argument("--n-paths", type=int)
    r = common.add_argument_group("grids")
    for name in ("t", "lambdas", "scales", "R", "x", "magnitudes", "v", "drift", "drift-scales",
                 "lags", "exp-s", "exp-R"):
        r.add_argument(f"--{name}", type=_list, metavar="LIST")
    r.add_argument("--lam", type=float, help="rate for the shape diagnostic")
    r.add_argument("--h", type=float, help="grid spacing for eigen")
    r.add_argument("--radius", type=float)
    r.add_argument("--cov-method", choices=("sample", "campbell"))
    r.add_argument("--sup-env", type=int)
    r.add_argument("--killing-radius", type=float)
    parser = argparse.ArgumentParser(prog="rp-lab", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="kind", required=True)
    for k in KINDS:
        sub.add_parser(k, parents=[common])
    return parser


def config_from_args(argv=None):
    """Merge file values and flags into an :class:`ExperimentConfig`.

    Returns ``(config, errors)``; parse errors of the file are line numbered.
    """
    ns = build_parser().parse_args(argv)
    values, sources, errors = {}, {}, []
    if ns.config:
        try:
            values, sources, errors = read_config_file(ns.config)
        except OSError as exc:
            errors = [f"{ns.config}: cannot read config ({exc})"]
    for key, val in vars(ns).items():
        if key in ("config",) or val is None:
            continue
        values[key] = val
        sources.pop(key, None)
    values["kind"] = ns.kind
    cfg = ExperimentConfig(**values)
    cfg.sources = sources
    return cfg, errors


def main(argv=None):
    cfg, errors = config_from_args(argv)
    if errors:
        for e in errors:
            print(e, file=sys.stderr)
        return EXIT_INVALID
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
