"""Module providing functions to test fem.py"""

from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse as sp

from spacetime_flow.fem import (
    apply_dirichlet_rows_cols,
    assemble_divergence,
    assemble_pressure_operators,
    assemble_rhs,
    assemble_spatial_operators,
    assemble_velocity_advection,
    assemble_velocity_mass,
    assemble_velocity_stiffness,
    build_spaces,
    dirichlet_values,
    eliminate_dirichlet,
    eliminate_dirichlet_columns,
    interpolate_velocity,
)
from spacetime_flow.linalg import sparse_lu
from spacetime_flow.mesh import BoundaryTag, TriMesh, unit_square_mesh
from spacetime_flow.problems import make_problem

@pytest.fixture
def reference_triangle_spaces():
    """Fixture providing the P2/P1 spaces of the single triangle (0,0), (1,0), (0,1)."""
    mesh = TriMesh(vertices=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
                   triangles=np.array([[0, 1, 2]]),
                   boundary_edges=np.array([[0, 1], [1, 2], [2, 0]]),
                   boundary_tags=(BoundaryTag.WALL,) * 3,
                   h=np.sqrt(2.0))
    return build_spaces(mesh)

@pytest.fixture
def cavity_spaces():
    return build_spaces(unit_square_mesh(2))

@pytest.fixture
def channel():
    """Fixture providing the Poiseuille problem and its spaces at r=2."""
    problem = make_problem("poiseuille")
    return problem, build_spaces(problem.mesh_builder(2))

def _interior_random(spaces, seed=0):
    v = np.random.default_rng(seed).standard_normal(spaces.velocity_dofs)
    v[spaces.dirichlet_velocity_dofs] = 0.0
    return v

def test_dof_counts():
    """Test N_p = 9 and N_u = 2 * (9 + 16) = 50 at r=1."""
    spaces = build_spaces(unit_square_mesh(1))

    assert spaces.pressure_dofs == 9
    assert spaces.velocity_dofs == 50
    assert spaces.enclosed

def test_channel_pressure_dirichlet_set(channel):
    """Test that the outflow vertices x=1 carry the pressure Dirichlet condition."""
    _, spaces = channel
    outflow = spaces.mesh.vertices[spaces.pressure_dirichlet_dofs]

    assert not spaces.enclosed
    assert np.allclose(outflow[:, 0], 1.0)
    assert outflow.shape[0] == 5

def test_reference_mass_matrix(reference_triangle_spaces):
    """Test the P2 element mass matrix against its closed form A/180 * [...]."""
    spaces = reference_triangle_spaces
    cn = spaces.cell_nodes[0]
    expected = np.array([[6, -1, -1, 0, -4, 0],
                         [-1, 6, -1, 0, 0, -4],
                         [-1, -1, 6, -4, 0, 0],
                         [0, 0, -4, 32, 16, 16],
                         [-4, 0, 0, 16, 32, 16],
                         [0, -4, 0, 16, 16, 32]], dtype=float) * 0.5 / 180.0

    M = assemble_velocity_mass(spaces).toarray()

    assert np.allclose(M[np.ix_(cn, cn)], expected, atol=1e-15)
    assert np.allclose(M[np.ix_(cn + 6, cn + 6)], expected, atol=1e-15)
    assert np.allclose(M[:6, 6:], 0.0)

def test_reference_stiffness_matrix(reference_triangle_spaces):
    """Test the P2 element stiffness matrix against its closed form on the reference triangle."""
    spaces = reference_triangle_spaces
    cn = spaces.cell_nodes[0]
    expected = np.array([[6, 1, 1, -4, 0, -4],
                         [1, 3, 0, -4, 0, 0],
                         [1, 0, 3, 0, 0, -4],
                         [-4, -4, 0, 16, -8, 0],
                         [0, 0, 0, -8, 16, -8],
                         [-4, 0, -4, 0, -8, 16]], dtype=float) / 6.0

    A = assemble_velocity_stiffness(spaces).toarray()

    assert np.allclose(A[np.ix_(cn, cn)], expected, atol=1e-14)

def test_mass_matrix_total(cavity_spaces):
    """Test that the entries of the vector mass matrix sum to twice the area."""
    assert assemble_velocity_mass(cavity_spaces).sum() == pytest.approx(2.0)

def test_stiffness_annihilates_constants(cavity_spaces):
    """Test A_u 1 = 0 and v^T A_u v = 1 for the interpolant of (x, 0)."""
    A = assemble_velocity_stiffness(cavity_spaces)
    v = interpolate_velocity(cavity_spaces, lambda x, y, t: (x, 0.0 * x), 0.0)

    assert np.allclose(A @ np.ones(cavity_spaces.velocity_dofs), 0.0, atol=1e-12)
    assert v @ (A @ v) == pytest.approx(1.0)
    assert abs(A - A.T).max() <= 1e-13

def test_divergence_of_linear_fields(cavity_spaces):
    """Test B 1 = 0 and B (x, y) = -2 M_p 1."""
    B = assemble_divergence(cavity_spaces)
    M_p = assemble_pressure_operators(cavity_spaces).M_p
    v = interpolate_velocity(cavity_spaces, lambda x, y, t: (x, y), 0.0)

    assert B.shape == (cavity_spaces.pressure_dofs, cavity_spaces.velocity_dofs)
    assert np.allclose(B @ np.ones(B.shape[1]), 0.0, atol=1e-13)
    assert np.allclose(B @ v, -2.0 * (M_p @ np.ones(B.shape[0])), atol=1e-13)

def test_divergence_of_interior_fields_is_mean_free(cavity_spaces):
    """Test 1^T B v = 0 for velocities vanishing on the boundary."""
    B = assemble_divergence(cavity_spaces)

    assert abs(np.ones(B.shape[0]) @ (B @ _interior_random(cavity_spaces))) <= 1e-12

def test_advection_of_linear_field(cavity_spaces):
    """Test W(1,0) applied to (x, 0) equal to the mass matrix applied to (1, 0)."""
    W = assemble_velocity_advection(cavity_spaces, lambda x, y: (np.ones_like(x), np.zeros_like(x)))
    M = assemble_velocity_mass(cavity_spaces)
    u = interpolate_velocity(cavity_spaces, lambda x, y, t: (x, 0.0 * x), 0.0)
    e_x = interpolate_velocity(cavity_spaces, lambda x, y, t: (np.ones_like(x), 0.0 * x), 0.0)

    assert np.allclose(W @ u, M @ e_x, atol=1e-13)

def test_advection_skew_for_divergence_free_wind(cavity_spaces):
    """Test v^T W v = 0 for a rotating wind and v vanishing on the boundary."""
    W = assemble_velocity_advection(cavity_spaces, lambda x, y: (y - 0.5, 0.5 - x))
    v = _interior_random(cavity_spaces, seed=3)

    assert abs(v @ (W @ v)) <= 1e-12 * (v @ v)

def test_advection_from_velocity_vector_matches_closure(cavity_spaces):
    """Test that a P2 wind vector and the analytic closure it interpolates give the same W."""
    wind = interpolate_velocity(cavity_spaces, lambda x, y, t: (y * (1 - y), x * x), 0.0)
    W_vec = assemble_velocity_advection(cavity_spaces, wind)
    W_fun = assemble_velocity_advection(cavity_spaces, lambda x, y: (y * (1 - y), x * x))

    assert abs(W_vec - W_fun).max() <= 1e-13

def test_zero_wind_gives_zero_advection(cavity_spaces):
    """Test that no wind assembles an empty matrix."""
    assert assemble_velocity_advection(cavity_spaces, None).nnz == 0

def test_pressure_operators_enclosed(cavity_spaces):
    """Test sum(M_p) = area and a one-dimensional constant kernel of the Laplacian."""
    pressure = assemble_pressure_operators(cavity_spaces)
    eigs = np.linalg.eigvalsh(pressure.A_p_tilde.toarray())

    assert pressure.M_p.sum() == pytest.approx(1.0)
    assert np.allclose(pressure.A_p_tilde @ np.ones(cavity_spaces.pressure_dofs), 0.0, atol=1e-13)
    assert abs(eigs[0]) <= 1e-12
    assert eigs[1] > 1e-6

def test_pressure_operators_outflow(channel):
    """Test that outflow vertices make the Laplacian nonsingular with identity rows and zero advection rows."""
    _, spaces = channel
    dofs = spaces.pressure_dirichlet_dofs
    pressure = assemble_pressure_operators(spaces, winds=[lambda x, y: (np.ones_like(x), y)])
    A = pressure.A_p_tilde
    W = pressure.W_p[0].toarray()

    b = np.linspace(0.0, 1.0, spaces.pressure_dofs)
    assert np.allclose(A @ sparse_lu(A).solve(b), b, atol=1e-12)
    assert np.allclose(A[dofs].toarray(), np.eye(spaces.pressure_dofs)[dofs])
    assert np.allclose(W[dofs], 0.0) and np.allclose(W[:, dofs], 0.0)

def test_rhs_constant_forcing_matches_mass(cavity_spaces):
    """Test that f = (1, 0) loads M_u times the interpolant of f."""
    problem = replace(make_problem("cavity"), forcing=lambda x, y, t: (np.ones_like(x), np.zeros_like(x)))
    M = assemble_velocity_mass(cavity_spaces)
    f = interpolate_velocity(cavity_spaces, problem.forcing, 0.5)

    assert np.allclose(assemble_rhs(cavity_spaces, problem, 1, 0.5), M @ f, atol=1e-14)

def test_rhs_poiseuille_forcing(channel):
    """Test the quadratic Poiseuille forcing against M_u times its exact P2 interpolant."""
    problem, spaces = channel
    M = assemble_velocity_mass(spaces)
    f = interpolate_velocity(spaces, problem.forcing, 0.25)

    assert np.allclose(assemble_rhs(spaces, problem, 1, 0.25), M @ f, atol=1e-14)

def test_rhs_neumann_load(channel):
    """Test that a unit Neumann traction integrates to the outflow length."""
    problem, spaces = channel
    problem = replace(problem, forcing=None, neumann=lambda x, y, t: (np.ones_like(x), np.zeros_like(x)))
    load = assemble_rhs(spaces, problem, 1, 1.0)
    n = spaces.n_nodes

    assert load[:n].sum() == pytest.approx(1.0)
    assert np.allclose(load[n:], 0.0)

def test_rhs_initial_velocity_first_step_only(cavity_spaces):
    """Test that the initial condition enters step 1 as M_u u0 / dt and no later step."""
    problem = replace(make_problem("cavity"), initial_velocity=lambda x, y, t: (y, -x))
    M = assemble_velocity_mass(cavity_spaces)
    u0 = interpolate_velocity(cavity_spaces, problem.initial_velocity, 0.0)

    assert np.allclose(assemble_rhs(cavity_spaces, problem, 1, 0.25), M @ u0 / 0.25)
    assert np.allclose(assemble_rhs(cavity_spaces, problem, 2, 0.25), 0.0)
    with pytest.raises(ValueError):
        assemble_rhs(cavity_spaces, problem, 0, 0.25)

def test_spatial_operators_composition(cavity_spaces):
    """Test F_u[k] = M_u/dt + W_u[k] + mu A_u and F_p[k] = M_p/dt + W_p[k] + mu A_p for the glazing wind."""
    problem = make_problem("glazing", pe=10)
    ops = assemble_spatial_operators(cavity_spaces, problem, 0.25, 4)

    for k in range(4):
        F_u = ops.M_u / ops.dt + ops.W_u[k] + ops.mu * ops.A_u
        F_p = ops.M_p / ops.dt + ops.W_p[k] + ops.mu * ops.A_p_tilde
        assert abs(ops.F_u[k] - F_u).max() <= 1e-10
        assert abs(ops.F_p[k] - F_p).max() <= 1e-10
    assert ops.W_u[0].nnz > 0

def test_spatial_operators_share_stokes_blocks(cavity_spaces):
    """Test that wind-free steps share the same F objects."""
    ops = assemble_spatial_operators(cavity_spaces, make_problem("cavity"), 0.5, 2)

    assert ops.F_u[0] is ops.F_u[1]
    assert ops.F_p[0] is ops.F_p[1]
    assert ops.n_t == 2

def test_lid_value_at_midpoint():
    """Test that the lid DOF at (0.5, 1) carries the value 1 at t=1."""
    spaces = build_spaces(unit_square_mesh(1))
    g = dirichlet_values(spaces, make_problem("cavity"), 1.0)
    node = np.flatnonzero(np.all(np.isclose(spaces.node_coords, [0.5, 1.0]), axis=1))[0]

    assert g[node] == pytest.approx(1.0)
    assert g[spaces.n_nodes + node] == 0.0

def test_dirichlet_values_rejects_non_finite(cavity_spaces):
    """Test that non-finite boundary data is rejected."""
    problem = replace(make_problem("cavity"), dirichlet=lambda x, y, t: (np.full_like(x, np.nan), 0.0 * x))

    with pytest.raises(ValueError):
        dirichlet_values(cavity_spaces, problem, 1.0)

def test_apply_dirichlet_rows_cols():
    """Test that constrained rows and columns are zeroed and the diagonal set."""
    A = sp.csr_matrix(np.arange(1.0, 10.0).reshape(3, 3))
    result = apply_dirichlet_rows_cols(A, np.array([1])).toarray()

    assert np.allclose(result, [[1.0, 0.0, 3.0], [0.0, 1.0, 0.0], [7.0, 0.0, 9.0]])

def test_eliminate_dirichlet_columns():
    """Test zeroed Dirichlet columns of B and the lift -B g."""
    B = sp.csr_matrix(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
    values = np.array([10.0, 1.0, 100.0])
    B_bc, lift = eliminate_dirichlet_columns(B, np.array([1]), values)

    assert np.allclose(B_bc.toarray(), [[1.0, 0.0, 3.0], [4.0, 0.0, 6.0]])
    assert np.allclose(lift, [-2.0, -5.0])

def test_eliminate_dirichlet_step(cavity_spaces):
    """Test identity rows, symmetric subdiagonal mass and boundary values in the right-hand side."""
    problem = make_problem("cavity")
    ops = assemble_spatial_operators(cavity_spaces, problem, 0.5, 2)
    dofs = cavity_spaces.dirichlet_velocity_dofs
    cache = {}
    step1 = eliminate_dirichlet(ops, cavity_spaces, problem, 1, cache=cache)
    step2 = eliminate_dirichlet(ops, cavity_spaces, problem, 2, cache=cache)

    F = step2.F_u.toarray()
    assert np.allclose(F[dofs], np.eye(cavity_spaces.velocity_dofs)[dofs])
    assert abs(step2.M_sub - step2.M_sub.T).max() <= 1e-15
    assert np.allclose(step2.M_sub[dofs].toarray(), 0.0)
    assert np.allclose(step2.rhs_u[dofs], step2.g[dofs])
    assert step1.F_u is step2.F_u and step1.B is step2.B
    assert np.allclose(step2.B[:, dofs].toarray(), 0.0)

def test_discrete_stokes_reproduces_linear_shear():
    """Test that the steady Stokes saddle point system reproduces u = (y, 0), p = 0."""
    spaces = build_spaces(unit_square_mesh(2))
    dofs = spaces.dirichlet_velocity_dofs
    A = assemble_velocity_stiffness(spaces)
    B = assemble_divergence(spaces)
    u_exact = interpolate_velocity(spaces, lambda x, y, t: (y, 0.0 * x), 0.0)
    g = np.zeros_like(u_exact)
    g[dofs] = u_exact[dofs]

    A_bc = apply_dirichlet_rows_cols(A, dofs)
    rhs_u = -(A @ g)
    rhs_u[dofs] = g[dofs]
    B_bc, rhs_p = eliminate_dirichlet_columns(B, dofs, g)
    K = sp.bmat([[A_bc, B_bc.T], [B_bc, None]]).toarray()

    x = np.linalg.lstsq(K, np.concatenate([rhs_u, rhs_p]), rcond=None)[0]

    assert np.allclose(x[:spaces.velocity_dofs], u_exact, atol=1e-10)
    assert np.allclose(x[spaces.velocity_dofs:], 0.0, atol=1e-9)
