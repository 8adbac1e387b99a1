import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rplab.potentials import dirichlet_unit_ball, make_spec, sample_cloud
from rplab.spectrum import (ConvergenceError, cosine_bump, grid_problem, lambda_V_limit,
                            principal_eigenvalue, rayleigh_quotient, richardson, write_records,
                            zero_potential_eigenvalue)

LACOIN = make_spec("lacoin", d=2, gamma=3.0, delta=1.5)
ZERO2 = make_spec("zero", d=2)


def _eig(spec, R, h, cloud=None):
    return principal_eigenvalue(grid_problem(spec, cloud, R, h))


def test_dirichlet_constants():
    assert dirichlet_unit_ball(1) == pytest.approx(math.pi ** 2 / 8, rel=1e-14)
    assert dirichlet_unit_ball(2) == pytest.approx(2.8915929814733916, rel=1e-12)
    assert zero_potential_eigenvalue(3, 2.0) == pytest.approx(math.pi ** 2 / 8, rel=1e-12)


def test_interval_eigenvalue():
    res = _eig(make_spec("zero", d=1), 1.0, 1 / 256)
    assert res.value == pytest.approx(1.2337005501361697, rel=5e-3)
    assert res.residual <= 1e-10 and res.perron_ok


def test_disk_eigenvalue():
    res = _eig(ZERO2, 1.0, 1 / 64)
    assert res.value == pytest.approx(2.8915929814733916, rel=2e-2)
    assert np.all(res.vector >= 0)


def test_scaling_of_the_zero_potential_eigenvalue():
    # the lattice scales with R, so the discrete spectrum scales exactly
    a = _eig(ZERO2, 1.0, 1 / 32).value
    b = _eig(ZERO2, 2.0, 2 / 32).value
    assert b / a == pytest.approx(0.25, rel=1e-8)


def test_constant_potential_shifts_the_spectrum():
    a = _eig(ZERO2, 2.0, 0.125)
    b = _eig(make_spec("constant", d=2, c=0.3), 2.0, 0.125)
    assert abs(b.value - a.value - 0.3) <= a.residual + b.residual + 1e-12


def test_eigenvalue_decreases_with_the_domain():
    cloud = sample_cloud(LACOIN, 9.0, 3)
    vals = [_eig(LACOIN, R, 0.125, cloud).value for R in (2.0, 4.0, 8.0)]
    assert vals[0] > vals[1] > vals[2]


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0.01, 2.0))
def test_eigenvalue_increases_with_the_potential(seed, scale):
    prob = grid_problem(LACOIN, sample_cloud(LACOIN, 4.0, 5), 2.0, 0.125)
    bump = scale * np.random.default_rng(seed).random(prob.potential.size)
    bigger = dataclasses.replace(prob, potential=prob.potential + bump)
    assert principal_eigenvalue(bigger).value >= principal_eigenvalue(prob).value - 1e-9


def test_rayleigh_quotient_bounds_the_eigenvalue():
    prob = grid_problem(LACOIN, sample_cloud(LACOIN, 5.0, 4), 4.0, 0.125)
    lam = principal_eigenvalue(prob)
    assert rayleigh_quotient(prob, cosine_bump(prob)) >= lam.value - lam.residual
    assert rayleigh_quotient(prob, lam.vector) == pytest.approx(lam.value, abs=1e-9)


def test_grid_constraints():
    with pytest.raises(ValueError, match="R/16"):
        principal_eigenvalue(grid_problem(ZERO2, None, 1.0, 0.25))
    with pytest.raises(MemoryError):
        grid_problem(make_spec("zero", d=3), None, 100.0, 0.01)
    with pytest.raises(ValueError, match="window"):
        grid_problem(LACOIN, sample_cloud(LACOIN, 2.0, 1), 4.0, 0.125)


def test_iteration_budget_raises():
    with pytest.raises(ConvergenceError):
        principal_eigenvalue(grid_problem(ZERO2, None, 2.0, 0.125), max_iter=1)


def test_richardson_removes_quadratic_error():
    f = lambda h: 3.0 + 5.0 * h * h
    assert richardson((f(0.1), f(0.05)), (0.1, 0.05), order=2) == pytest.approx(3.0, rel=1e-12)


def test_constant_potential_limit():
    lim = lambda_V_limit(make_spec("constant", d=2, c=0.4), [4.0, 8.0, 16.0], [0])
    assert all(lim.monotone.values())
    assert lim.limit_low == pytest.approx(0.4, abs=5e-3)
    assert lim.limit_high >= lim.limit_low
    assert lim.limit_high == pytest.approx(0.4 + 2.8915929814733916 / 256, rel=1e-2)


def test_limit_needs_increasing_radii():
    with pytest.raises(ValueError):
        lambda_V_limit(ZERO2, [4.0, 8.0], [0])


def test_records_csv(tmp_path):
    lim = lambda_V_limit(ZERO2, [2.0, 3.0, 4.0], [0])
    write_records(lim.records, tmp_path / "eigen.csv")
    data = (tmp_path / "eigen.csv").read_bytes()
    assert b"\r" not in data
    assert data.splitlines()[0] == b"env_seed,R,h,lambda_hat,residual,iters"
    assert len(data.splitlines()) == 4
