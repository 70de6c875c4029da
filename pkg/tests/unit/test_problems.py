"""Module providing functions to test problems.py"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spacetime_flow.fem import build_spaces, dirichlet_values
from spacetime_flow.problems import (
    ProblemId,
    exact_solution,
    grid_peclet,
    make_problem,
    problem_names,
)

@pytest.mark.parametrize("name", ["cavity", "poiseuille", "backstep"])
def test_boundary_data_vanishes_at_t0(name):
    """Test that every problem starts from rest on the Dirichlet boundary."""
    problem = make_problem(name)
    spaces = build_spaces(problem.mesh_builder(1))

    assert np.allclose(dirichlet_values(spaces, problem, problem.t0), 0.0)

def test_cavity_lid_profile():
    """Test the lid speed 1 at the midpoint at t=1, zero at the corners and on the walls."""
    problem = make_problem("cavity")
    x = np.array([0.0, 0.5, 1.0, 0.5])
    y = np.array([1.0, 1.0, 1.0, 0.0])
    ux, uy = problem.dirichlet(x, y, 1.0)

    assert np.allclose(ux, [0.0, 1.0, 0.0, 0.0])
    assert np.allclose(uy, 0.0)

def test_cavity_lid_ramps_linearly():
    """Test that the lid speed grows linearly in time."""
    problem = make_problem("cavity")
    x, y = np.array([0.3]), np.array([1.0])

    assert problem.dirichlet(x, y, 0.5)[0] == pytest.approx(0.5 * problem.dirichlet(x, y, 1.0)[0])

def test_amplitude_scales_data():
    """Test that amplitude 0 gives homogeneous data."""
    problem = make_problem("backstep", amplitude=0.0)
    ux, _ = problem.dirichlet(np.zeros(3), np.array([0.25, 0.5, 0.75]), 1.0)

    assert np.allclose(ux, 0.0)

def test_backstep_inflow_profile():
    """Test the parabolic inflow 4ty(1-y) at x=0."""
    problem = make_problem("backstep")
    ux, _ = problem.dirichlet(np.zeros(1), np.array([0.5]), 1.0)

    assert ux[0] == pytest.approx(1.0)
    assert problem.neumann is not None and not problem.enclosed

def test_poiseuille_exact_solution():
    """Test the exact velocity and the consistent pressure drop of the channel flow."""
    problem = make_problem("poiseuille")
    ux, uy, p = exact_solution(problem, np.array([0.3, 0.0, 1.0]), np.array([0.5, 0.5, 0.5]), 1.0)

    assert np.allclose(ux, 1.0) and np.allclose(uy, 0.0)
    assert p[1] - p[2] == pytest.approx(8.0)
    assert np.allclose(exact_solution(problem, np.array([0.3]), np.array([0.5]), 0.0)[0], 0.0)

def test_poiseuille_pressure_variants():
    """Test the consistent pressure 8t(1-x) against the time-independent variant 8(1-x)."""
    consistent = make_problem("poiseuille")
    constant = make_problem("poiseuille", steady_pressure=True)
    x, y = np.array([0.0]), np.array([0.5])

    assert exact_solution(consistent, x, y, 0.5)[2][0] == pytest.approx(4.0)
    assert exact_solution(constant, x, y, 0.5)[2][0] == pytest.approx(8.0)

def test_poiseuille_momentum_balance():
    """Test du/dt - mu d2u/dy2 + dp/dx = f pointwise for the consistent pressure."""
    problem = make_problem("poiseuille")
    x, y, t, eps = 0.4, 0.3, 0.7, 1e-4

    def ux(x, y, t):
        return exact_solution(problem, np.array([x]), np.array([y]), t)[0][0]

    def p(x, t):
        return exact_solution(problem, np.array([x]), np.array([y]), t)[2][0]

    dudt = (ux(x, y, t + eps) - ux(x, y, t - eps)) / (2 * eps)
    d2udy2 = (ux(x, y + eps, t) - 2 * ux(x, y, t) + ux(x, y - eps, t)) / eps**2
    dpdx = (p(x + eps, t) - p(x - eps, t)) / (2 * eps)
    fx = problem.forcing(np.array([x]), np.array([y]), t)[0][0]

    assert dudt - problem.mu * d2udy2 + dpdx == pytest.approx(fx, abs=1e-5)

def test_exact_solution_absent():
    """Test that problems without an analytic solution return None."""
    assert exact_solution(make_problem("cavity"), np.zeros(1), np.zeros(1), 1.0) is None

def test_glazing_wind():
    """Test a wind vanishing at the centre and scaling with t and Pe."""
    problem = make_problem("glazing", pe=10)
    wind = problem.wind_at(1.0)
    wx, wy = wind(np.array([0.5, 0.0]), np.array([0.5, 0.0]))

    assert np.allclose([wx[0], wy[0]], 0.0)
    assert wx[1] == pytest.approx(20.0) and wy[1] == pytest.approx(-20.0)
    assert problem.wind_at(0.5)(np.array([0.0]), np.array([0.0]))[0][0] == pytest.approx(10.0)

@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
@settings(max_examples=50, deadline=None)
def test_glazing_wind_divergence_free(x, y, t):
    """Test by central differences that the glazing wind is divergence free."""
    wind = make_problem("glazing", pe=100).wind
    eps = 1e-6
    dwx = (wind(x + eps, y, t)[0] - wind(x - eps, y, t)[0]) / (2 * eps)
    dwy = (wind(x, y + eps, t)[1] - wind(x, y - eps, t)[1]) / (2 * eps)

    assert abs(dwx + dwy) <= 1e-4

def test_glazing_zero_peclet_is_stokes():
    """Test that Pe = 0 gives the cavity flow without wind."""
    problem = make_problem("glazing", pe=0)

    assert problem.wind is None and problem.wind_at(1.0) is None
    assert problem.enclosed

def test_make_problem_argument_checks():
    """Test the Peclet-number and problem-id checks."""
    with pytest.raises(ValueError):
        make_problem("glazing")
    with pytest.raises(ValueError):
        make_problem("cavity", pe=10)
    with pytest.raises(ValueError):
        make_problem("glazing", pe=-1)
    with pytest.raises(NotImplementedError):
        make_problem("channel")

def test_make_problem_accepts_enum():
    """Test that ProblemId members and their tags build the same problem."""
    assert make_problem(ProblemId.BACKSTEP).id is make_problem("backstep").id

def test_grid_peclet():
    """Test the grid Peclet number dx*Pe/L."""
    assert grid_peclet(make_problem("glazing", pe=64), 2.0**-4) == pytest.approx(4.0)
    assert grid_peclet(make_problem("cavity"), 0.25) == 0.0

@given(st.floats(0.0, 1e4), st.integers(0, 8), st.floats(0.5, 4.0))
def test_grid_peclet_scaling(pe, r, length):
    """Test that the grid Peclet number is linear in Pe and dx and inverse in L."""
    problem = make_problem("glazing", pe=pe)
    dx = 2.0**-r

    assert grid_peclet(problem, dx, length) == pytest.approx(pe * dx / length)
    assert grid_peclet(problem, dx / 2, length) == pytest.approx(grid_peclet(problem, dx, length) / 2)

def test_problem_names():
    """Test the registered problem tags."""
    assert problem_names() == ["cavity", "poiseuille", "backstep", "glazing"]
