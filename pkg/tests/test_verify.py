"""Verification layer: identities, gradient checks, manufactured h, oracle."""

import math

import numpy as np
import pytest

from kwnet import (
    GridFunction,
    apply_residual,
    constant,
    fd_gradient_check,
    identity_report,
    integrate,
    manufacture,
    oracle_newton,
    sample_function,
    solve_zero,
)
from kwnet.errors import Diverged, GridMismatch, KirchhoffDefect, ResolutionTooCoarse
from helpers import make_single, make_star3, make_triangle, smooth_random


def test_identity_report_constant_case():
    grid = make_single(cells=32)
    u = constant(grid, math.log(2.0))
    h = constant(grid, -1.0)
    rep = identity_report(u, h, -2.0)
    assert rep.mass_value == pytest.approx(-2.0 * grid.total_length, rel=1e-13)
    assert rep.mass_defect <= 1e-12
    assert rep.energy_value is None and rep.energy_defect is None


def test_identity_report_zero_case():
    grid = make_single(cells=256)
    h = sample_function(grid, lambda s: math.cos(math.pi * s) - 0.1)
    sol = solve_zero(h)
    rep = identity_report(sol.u, h, 0.0)
    assert rep.energy_target == pytest.approx(-integrate(h))
    assert rep.energy_defect <= 1e-5 * abs(integrate(h))
    assert rep.mass_defect <= 1e-9


def test_identity_report_grid_mismatch():
    u = constant(make_single(cells=8), 0.0)
    h = constant(make_single(cells=16), -1.0)
    with pytest.raises(GridMismatch):
        identity_report(u, h, 0.0)


@pytest.mark.parametrize("functional", ["zero", "positive", "critical"])
def test_fd_gradient_check(functional, rng):
    grid = make_triangle(cells=24)
    u = smooth_random(grid, rng)
    phi = smooth_random(grid, rng)
    h = smooth_random(grid, rng)
    rep = fd_gradient_check(functional, u, phi, 1e-6, h=h, c=0.7)
    assert rep.rel_error <= 1e-6
    assert rep.step == 1e-6


def test_fd_gradient_check_guards(rng):
    grid = make_single(cells=16)
    u = smooth_random(grid, rng)
    with pytest.raises(ValueError):
        fd_gradient_check("bogus", u, u, 1e-6)
    with pytest.raises(ValueError):
        fd_gradient_check("zero", u, u, -1e-6)
    with pytest.raises(ValueError):
        fd_gradient_check("positive", u, u, 1e-6)  # missing c
    with pytest.raises(ValueError):
        fd_gradient_check("critical", u, u, 1e-6, c=1.0)  # missing h
    other = constant(make_single(cells=17), 0.0)
    with pytest.raises(GridMismatch):
        fd_gradient_check("zero", u, other, 1e-6)


def test_manufacture_exact_root():
    grid = make_single(cells=64)
    u_star = sample_function(grid, lambda s: math.cos(math.pi * s))
    h = manufacture(u_star, c=1.0)
    assert apply_residual(u_star, h, 1.0).weak_residual_norm <= 1e-12


def test_manufacture_multi_edge():
    # zero slope at every edge end balances every vertex trivially
    grid = make_star3(cells=32)
    lengths = {"e1": 1.0, "e2": 1.5, "e3": 0.7}
    u_star = sample_function(grid, {
        eid: (lambda s, l=l: 0.4 * math.cos(math.pi * s / l))
        for eid, l in lengths.items()
    })
    h = manufacture(u_star, c=-0.3)
    assert apply_residual(u_star, h, -0.3).weak_residual_norm <= 1e-11


def test_manufacture_needs_three_cells():
    grid = make_single(cells=2)
    u = constant(grid, 0.0)
    with pytest.raises(ResolutionTooCoarse):
        manufacture(u, c=0.0)


def test_manufacture_rejects_flux_imbalance():
    # s^2 has slope 0 and 2 at the two ends of the unit edge: no Kirchhoff
    # balance at the degree-one head vertex
    grid = make_single(cells=64)
    u = sample_function(grid, lambda s: s * s)
    with pytest.raises(KirchhoffDefect):
        manufacture(u, c=0.0)
    # an explicit generous tolerance lets it through
    h = manufacture(u, c=0.0, kirchhoff_tol=10.0)
    assert apply_residual(u, h, 0.0).weak_residual_norm <= 1e-12


def test_oracle_newton_constant_case():
    grid = make_triangle(cells=16)
    sol = oracle_newton(constant(grid, -1.0), -2.0)
    assert np.max(np.abs(sol.u.values - math.log(2.0))) <= 1e-10
    assert sol.report.method == "newton-oracle"


def test_oracle_newton_diverges_when_unsolvable():
    # c < 0 with h > 0 admits no solution (integrate the equation)
    grid = make_single(cells=32)
    with pytest.raises(Diverged):
        oracle_newton(constant(grid, 1.0), -1.0)


def test_oracle_newton_custom_seed():
    grid = make_single(cells=48)
    h = constant(grid, -1.0)
    seed = constant(grid, 5.0)
    sol = oracle_newton(h, -2.0, seed=seed, tol=1e-12)
    assert np.max(np.abs(sol.u.values - math.log(2.0))) <= 1e-10
