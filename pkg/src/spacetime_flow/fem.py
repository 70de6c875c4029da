"""Module providing Taylor-Hood P2/P1 finite element assembly on triangle meshes."""

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Sequence, Union

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from spacetime_flow.mesh import BoundaryTag, TriMesh, mesh_edges

if TYPE_CHECKING:
    from spacetime_flow.problems import ProblemSpec

__all__ = ["FESpaces",
           "SpatialOperators",
           "PressureOperators",
           "DirichletStep",
           "build_spaces",
           "assemble_velocity_mass",
           "assemble_velocity_stiffness",
           "assemble_divergence",
           "assemble_velocity_advection",
           "assemble_pressure_operators",
           "assemble_rhs",
           "assemble_spatial_operators",
           "dirichlet_values",
           "interpolate_velocity",
           "interpolate_pressure",
           "evaluate_velocity_at_quadrature",
           "apply_dirichlet_rows_cols",
           "eliminate_dirichlet_columns",
           "eliminate_dirichlet"
           ]

logger = logging.getLogger(__name__)

VectorField = Callable[[NDArray, NDArray, float], tuple[NDArray, NDArray]]
Wind = Union[Callable[[NDArray, NDArray], tuple[NDArray, NDArray]], NDArray, None]

# 7-point degree-5 rule on the reference triangle, barycentric points, weights sum to 1
_SQRT15 = np.sqrt(15.0)
_A1, _B1 = (6.0 - _SQRT15) / 21.0, (9.0 + 2.0 * _SQRT15) / 21.0
_A2, _B2 = (6.0 + _SQRT15) / 21.0, (9.0 - 2.0 * _SQRT15) / 21.0
_W1, _W2 = (155.0 - _SQRT15) / 1200.0, (155.0 + _SQRT15) / 1200.0
QUAD_BARY = np.array([[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
                      [_A1, _A1, _B1], [_A1, _B1, _A1], [_B1, _A1, _A1],
                      [_A2, _A2, _B2], [_A2, _B2, _A2], [_B2, _A2, _A2]])
QUAD_WEIGHTS = np.array([0.225, _W1, _W1, _W1, _W2, _W2, _W2])

# 3-point Gauss rule on [0, 1] for boundary integrals
_EDGE_POINTS = 0.5 + 0.5 * np.sqrt(0.6) * np.array([-1.0, 0.0, 1.0])
_EDGE_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0

def _p2_values(bary: NDArray[np.floating]) -> NDArray[np.floating]:
    """Function evaluating the six P2 basis functions at barycentric points, shape (nq, 6)."""
    l0, l1, l2 = bary[:, 0], bary[:, 1], bary[:, 2]
    return np.column_stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                            4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0])

def _p2_bary_derivatives(bary: NDArray[np.floating]) -> NDArray[np.floating]:
    """Function returning d(phi_i)/d(lambda_l) at barycentric points, shape (nq, 6, 3)."""
    nq = bary.shape[0]
    l0, l1, l2 = bary[:, 0], bary[:, 1], bary[:, 2]
    d = np.zeros((nq, 6, 3))
    d[:, 0, 0] = 4 * l0 - 1
    d[:, 1, 1] = 4 * l1 - 1
    d[:, 2, 2] = 4 * l2 - 1
    d[:, 3, 0], d[:, 3, 1] = 4 * l1, 4 * l0
    d[:, 4, 1], d[:, 4, 2] = 4 * l2, 4 * l1
    d[:, 5, 2], d[:, 5, 0] = 4 * l0, 4 * l2
    return d

_PHI = _p2_values(QUAD_BARY)
_DPHI_DLAM = _p2_bary_derivatives(QUAD_BARY)
_PSI = QUAD_BARY

@dataclass(frozen=True)
class FESpaces:
    """Taylor-Hood P2 (vector) / P1 (scalar) spaces on a mesh.

    Scalar P2 nodes are the mesh vertices followed by the edge midpoints.
    Velocity DOFs are component-blocked: x-components first, then y-components.
    """
    mesh: TriMesh
    edges: NDArray[np.integer]
    cell_nodes: NDArray[np.integer]
    node_coords: NDArray[np.floating]
    areas: NDArray[np.floating]
    grad_bary: NDArray[np.floating]
    dirichlet_velocity_dofs: NDArray[np.integer]
    pressure_dirichlet_dofs: NDArray[np.integer]
    neumann_edges: NDArray[np.integer]
    neumann_edge_ids: NDArray[np.integer]

    @property
    def n_nodes(self) -> int:
        return self.node_coords.shape[0]

    @property
    def velocity_dofs(self) -> int:
        return 2 * self.n_nodes

    @property
    def pressure_dofs(self) -> int:
        return self.mesh.n_vertices

    @property
    def dirichlet_mask(self) -> NDArray[np.bool_]:
        mask = np.zeros(self.velocity_dofs, dtype=bool)
        mask[self.dirichlet_velocity_dofs] = True
        return mask

    @property
    def enclosed(self) -> bool:
        """True when no pressure Dirichlet DOF exists, i.e. the pressure Laplacian is singular."""
        return self.pressure_dirichlet_dofs.size == 0

@dataclass(frozen=True)
class PressureOperators:
    M_p: sp.csr_matrix
    A_p_tilde: sp.csr_matrix
    W_p: list[sp.csr_matrix]

@dataclass(frozen=True)
class SpatialOperators:
    """Per-problem bundle of the spatial Galerkin operators.

    Velocity operators are raw (no Dirichlet elimination). The pressure
    Laplacian and advection carry the outflow Dirichlet/elsewhere Neumann
    convention. Steps with identical wind share the same W and F objects.
    """
    M_u: sp.csr_matrix
    A_u: sp.csr_matrix
    B: sp.csr_matrix
    M_p: sp.csr_matrix
    A_p_tilde: sp.csr_matrix
    W_u: list[sp.csr_matrix]
    W_p: list[sp.csr_matrix]
    F_u: list[sp.csr_matrix]
    F_p: list[sp.csr_matrix]
    dt: float
    mu: float

    @property
    def n_t(self) -> int:
        return len(self.F_u)

@dataclass(frozen=True)
class DirichletStep:
    """Operators and right-hand sides of one time step after Dirichlet elimination."""
    F_u: sp.csr_matrix
    B: sp.csr_matrix
    M_sub: sp.csr_matrix
    g: NDArray[np.floating]
    rhs_u: NDArray[np.floating]
    rhs_p: NDArray[np.floating]

def _nodes_on_edges(mesh: TriMesh,
                    edges: NDArray[np.integer],
                    boundary_edges: NDArray[np.integer]
                    ) -> tuple[NDArray[np.integer], NDArray[np.integer]]:
    """Function returning the P2 nodes and the global edge ids of a set of boundary edges."""
    n_v = mesh.n_vertices
    keys = edges[:, 0] * n_v + edges[:, 1]
    pairs = np.sort(boundary_edges, axis=1)
    edge_ids = np.searchsorted(keys, pairs[:, 0] * n_v + pairs[:, 1])
    nodes = np.unique(np.concatenate([pairs.ravel(), n_v + edge_ids]))
    return nodes.astype(np.int64), edge_ids.astype(np.int64)

def build_spaces(mesh: TriMesh,
                 neumann_tags: Sequence[BoundaryTag] = (BoundaryTag.OUTFLOW,)
                 ) -> FESpaces:
    """Function numbering the Taylor-Hood DOFs and the Dirichlet sets of a mesh.

    Every boundary edge not carrying a Neumann tag is a velocity Dirichlet edge;
    the pressure Dirichlet set holds the vertices of Neumann (outflow) edges.
    """

    # Unique edges and the triangle -> edge map
    edges, tri_edges = mesh_edges(mesh)
    n_v = mesh.n_vertices
    cell_nodes = np.hstack([mesh.triangles, n_v + tri_edges]).astype(np.int64)
    midpoints = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    node_coords = np.vstack([mesh.vertices, midpoints])

    # Element geometry: areas and constant barycentric gradients
    p0 = mesh.vertices[mesh.triangles[:, 0]]
    p1 = mesh.vertices[mesh.triangles[:, 1]]
    p2 = mesh.vertices[mesh.triangles[:, 2]]
    det = (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1])
    if np.any(det <= 0):
        raise ValueError("Mesh contains triangles with non-positive signed area.")
    grad_l1 = np.column_stack([p2[:, 1] - p0[:, 1], p0[:, 0] - p2[:, 0]]) / det[:, None]
    grad_l2 = np.column_stack([p0[:, 1] - p1[:, 1], p1[:, 0] - p0[:, 0]]) / det[:, None]
    grad_bary = np.stack([-grad_l1 - grad_l2, grad_l1, grad_l2], axis=1)

    # Dirichlet and Neumann boundary parts
    is_neumann = np.array([tag in neumann_tags for tag in mesh.boundary_tags], dtype=bool)
    n_nodes = node_coords.shape[0]
    dirichlet_nodes, _ = _nodes_on_edges(mesh, edges, mesh.boundary_edges[~is_neumann])
    neumann_edges = mesh.boundary_edges[is_neumann]
    _, neumann_edge_ids = _nodes_on_edges(mesh, edges, neumann_edges)
    pressure_dirichlet = np.unique(neumann_edges.ravel()).astype(np.int64)

    spaces = FESpaces(mesh=mesh,
                      edges=edges,
                      cell_nodes=cell_nodes,
                      node_coords=node_coords,
                      areas=0.5 * det,
                      grad_bary=grad_bary,
                      dirichlet_velocity_dofs=np.concatenate([dirichlet_nodes, n_nodes + dirichlet_nodes]),
                      pressure_dirichlet_dofs=pressure_dirichlet,
                      neumann_edges=neumann_edges,
                      neumann_edge_ids=neumann_edge_ids)

    logger.debug("Taylor-Hood spaces: N_u=%d, N_p=%d, %d velocity Dirichlet DOFs",
                 spaces.velocity_dofs, spaces.pressure_dofs, spaces.dirichlet_velocity_dofs.size)
    return spaces

def _p2_gradients(spaces: FESpaces) -> NDArray[np.floating]:
    """Function returning P2 basis gradients at quadrature points, shape (nt, nq, 6, 2)."""
    return np.einsum("qil,tld->tqid", _DPHI_DLAM, spaces.grad_bary)

def _quadrature_points(spaces: FESpaces) -> NDArray[np.floating]:
    """Function returning physical quadrature points, shape (nt, nq, 2)."""
    corners = spaces.mesh.vertices[spaces.mesh.triangles]
    return np.einsum("ql,tld->tqd", QUAD_BARY, corners)

def _assemble(local: NDArray[np.floating],
              row_map: NDArray[np.integer],
              col_map: NDArray[np.integer],
              shape: tuple[int, int]
              ) -> sp.csr_matrix:
    """Function summing element matrices into a global CSR matrix."""
    n_t, n_a, n_b = local.shape
    rows = np.broadcast_to(row_map[:, :, None], (n_t, n_a, n_b)).ravel()
    cols = np.broadcast_to(col_map[:, None, :], (n_t, n_a, n_b)).ravel()
    matrix = sp.coo_matrix((local.ravel(), (rows, cols)), shape=shape).tocsr()
    matrix.sum_duplicates()
    return matrix

def _scalar_p2(spaces: FESpaces, local: NDArray[np.floating]) -> sp.csr_matrix:
    n = spaces.n_nodes
    return _assemble(local, spaces.cell_nodes, spaces.cell_nodes, (n, n))

def _vector_block(scalar: sp.csr_matrix) -> sp.csr_matrix:
    return sp.block_diag([scalar, scalar], format="csr")

def assemble_velocity_mass(spaces: FESpaces) -> sp.csr_matrix:
    """Function assembling the vector P2 mass matrix, integral of phi_m . phi_n."""
    local = spaces.areas[:, None, None] * np.einsum("q,qi,qj->ij", QUAD_WEIGHTS, _PHI, _PHI)[None]
    return _vector_block(_scalar_p2(spaces, local))

def assemble_velocity_stiffness(spaces: FESpaces) -> sp.csr_matrix:
    """Function assembling the vector P2 stiffness matrix, integral of grad phi_m : grad phi_n."""
    grads = _p2_gradients(spaces)
    local = np.einsum("t,q,tqid,tqjd->tij", spaces.areas, QUAD_WEIGHTS, grads, grads)
    return _vector_block(_scalar_p2(spaces, local))

def assemble_divergence(spaces: FESpaces) -> sp.csr_matrix:
    """Function assembling B = -integral of psi_m div(phi_n), shape (N_p, N_u)."""
    grads = _p2_gradients(spaces)
    n_p, n = spaces.pressure_dofs, spaces.n_nodes
    blocks = []
    for comp in range(2):
        local = -np.einsum("t,q,qm,tqn->tmn", spaces.areas, QUAD_WEIGHTS, _PSI, grads[..., comp])
        blocks.append(_assemble(local, spaces.mesh.triangles, spaces.cell_nodes, (n_p, n)))
    return sp.hstack(blocks, format="csr")

def evaluate_velocity_at_quadrature(spaces: FESpaces,
                                    coeffs: NDArray[np.floating]
                                    ) -> NDArray[np.floating]:
    """Function evaluating a P2 velocity coefficient vector at all quadrature points, shape (nt, nq, 2)."""

    # Ensure a vector P2 coefficient vector
    if coeffs.shape != (spaces.velocity_dofs,):
        raise ValueError(f"Velocity coefficients must have shape ({spaces.velocity_dofs},), "
                         f"got {coeffs.shape}.")

    n = spaces.n_nodes
    comps = [np.einsum("qi,ti->tq", _PHI, coeffs[c * n:(c + 1) * n][spaces.cell_nodes])
             for c in range(2)]
    return np.stack(comps, axis=-1)

def _wind_at_quadrature(spaces: FESpaces, wind: Wind) -> NDArray[np.floating] | None:
    """Function evaluating an analytic wind closure or a P2 wind vector at quadrature points."""
    if wind is None:
        return None
    if isinstance(wind, np.ndarray):
        return evaluate_velocity_at_quadrature(spaces, wind)
    points = _quadrature_points(spaces)
    wx, wy = wind(points[..., 0], points[..., 1])
    return np.stack(np.broadcast_arrays(wx, wy), axis=-1).astype(np.float64)

def assemble_velocity_advection(spaces: FESpaces, wind: Wind) -> sp.csr_matrix:
    """Function assembling W with entries integral of ((w . grad) phi_n) . phi_m.

    `wind` is a closure of (x, y) returning the two components, a P2 velocity
    coefficient vector, or None for the zero matrix.
    """
    n_u = spaces.velocity_dofs
    w_q = _wind_at_quadrature(spaces, wind)
    if w_q is None:
        return sp.csr_matrix((n_u, n_u))

    grads = _p2_gradients(spaces)
    convect = np.einsum("tqd,tqjd->tqj", w_q, grads)
    local = np.einsum("t,q,qi,tqj->tij", spaces.areas, QUAD_WEIGHTS, _PHI, convect)
    return _vector_block(_scalar_p2(spaces, local))

def apply_dirichlet_rows_cols(A: sp.spmatrix,
                              dofs: NDArray[np.integer],
                              diagonal: float = 1.0
                              ) -> sp.csr_matrix:
    """Function zeroing the rows and columns of the given DOFs and setting their diagonal."""
    fixed = np.zeros(A.shape[0], dtype=bool)
    fixed[dofs] = True
    keep = sp.diags((~fixed).astype(np.float64))
    result = keep @ A @ keep
    if diagonal != 0.0:
        result = result + sp.diags(diagonal * fixed.astype(np.float64))
    return sp.csr_matrix(result)

def _pressure_mass(spaces: FESpaces) -> sp.csr_matrix:
    tris = spaces.mesh.triangles
    local = spaces.areas[:, None, None] * np.einsum("q,qi,qj->ij", QUAD_WEIGHTS, _PSI, _PSI)[None]
    n_p = spaces.pressure_dofs
    return _assemble(local, tris, tris, (n_p, n_p))

def _pressure_laplacian(spaces: FESpaces) -> sp.csr_matrix:
    tris = spaces.mesh.triangles
    local = np.einsum("t,tid,tjd->tij", spaces.areas, spaces.grad_bary, spaces.grad_bary)
    n_p = spaces.pressure_dofs
    return _assemble(local, tris, tris, (n_p, n_p))

def _pressure_advection(spaces: FESpaces, wind: Wind) -> sp.csr_matrix:
    n_p = spaces.pressure_dofs
    w_q = _wind_at_quadrature(spaces, wind)
    if w_q is None:
        return sp.csr_matrix((n_p, n_p))
    convect = np.einsum("tqd,tjd->tqj", w_q, spaces.grad_bary)
    local = np.einsum("t,q,qi,tqj->tij", spaces.areas, QUAD_WEIGHTS, _PSI, convect)
    tris = spaces.mesh.triangles
    matrix = _assemble(local, tris, tris, (n_p, n_p))
    return apply_dirichlet_rows_cols(matrix, spaces.pressure_dirichlet_dofs, diagonal=0.0)

def assemble_pressure_operators(spaces: FESpaces,
                                winds: Sequence[Wind] = ()
                                ) -> PressureOperators:
    """Function assembling M_p, the pressure Laplacian and one W_p per wind.

    The Laplacian and the advection carry homogeneous Dirichlet conditions at
    outflow vertices (identity rows and columns in the Laplacian, zeroed rows
    and columns in W_p) and natural Neumann conditions elsewhere, so the
    Laplacian is singular exactly for enclosed flow.
    """
    M_p = _pressure_mass(spaces)
    A_p_tilde = _pressure_laplacian(spaces)
    if not spaces.enclosed:
        A_p_tilde = apply_dirichlet_rows_cols(A_p_tilde, spaces.pressure_dirichlet_dofs)
    return PressureOperators(M_p=M_p,
                             A_p_tilde=A_p_tilde,
                             W_p=[_pressure_advection(spaces, wind) for wind in winds])

def interpolate_velocity(spaces: FESpaces, field: VectorField, t: float) -> NDArray[np.floating]:
    """Function interpolating a vector field at the P2 nodes (component-blocked)."""
    x, y = spaces.node_coords[:, 0], spaces.node_coords[:, 1]
    ux, uy = np.broadcast_arrays(*field(x, y, t))
    return np.concatenate([ux, uy]).astype(np.float64)

def interpolate_pressure(spaces: FESpaces,
                         field: Callable[[NDArray, NDArray, float], NDArray],
                         t: float
                         ) -> NDArray[np.floating]:
    """Function interpolating a scalar field at the P1 nodes (mesh vertices)."""
    x, y = spaces.mesh.vertices[:, 0], spaces.mesh.vertices[:, 1]
    return np.broadcast_to(field(x, y, t), x.shape).astype(np.float64)

def dirichlet_values(spaces: FESpaces, problem: "ProblemSpec", t: float) -> NDArray[np.floating]:
    """Function sampling the Dirichlet data at time t on the Dirichlet DOFs, zero elsewhere."""
    n = spaces.n_nodes
    nodes = spaces.dirichlet_velocity_dofs[spaces.dirichlet_velocity_dofs < n]
    x, y = spaces.node_coords[nodes, 0], spaces.node_coords[nodes, 1]

    # Evaluate the boundary callback and check what it returned
    try:
        ux, uy = np.broadcast_arrays(*problem.dirichlet(x, y, t))
    except (TypeError, ValueError) as exc:
        raise ValueError(f"Dirichlet data of problem '{problem.name}' failed at t={t}: {exc}") from exc
    if ux.shape != x.shape or not (np.all(np.isfinite(ux)) and np.all(np.isfinite(uy))):
        raise ValueError(f"Dirichlet data of problem '{problem.name}' is not a finite field "
                         f"on the {x.size} boundary nodes at t={t}.")

    g = np.zeros(spaces.velocity_dofs)
    g[nodes] = ux
    g[n + nodes] = uy
    return g

def _neumann_load(spaces: FESpaces,
                  neumann: VectorField,
                  t: float
                  ) -> NDArray[np.floating]:
    """Function integrating Neumann data against the quadratic edge traces of the P2 basis."""
    edges = spaces.neumann_edges
    n, n_v = spaces.n_nodes, spaces.pressure_dofs
    load = np.zeros(spaces.velocity_dofs)
    if edges.size == 0:
        return load

    # Edge geometry and the trace basis at the Gauss points: start, end, midpoint
    pa = spaces.mesh.vertices[edges[:, 0]]
    pb = spaces.mesh.vertices[edges[:, 1]]
    lengths = np.linalg.norm(pb - pa, axis=1)
    s = _EDGE_POINTS
    trace = np.column_stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)])
    points = pa[:, None, :] + s[None, :, None] * (pb - pa)[:, None, :]
    gx, gy = np.broadcast_arrays(*neumann(points[..., 0], points[..., 1], t))

    edge_nodes = np.column_stack([edges[:, 0], edges[:, 1], n_v + spaces.neumann_edge_ids])
    for comp, values in enumerate((gx, gy)):
        local = np.einsum("e,q,qi,eq->ei", lengths, _EDGE_WEIGHTS, trace, values)
        load[comp * n:(comp + 1) * n] += np.bincount(edge_nodes.ravel(), weights=local.ravel(),
                                                     minlength=n)
    return load

def assemble_rhs(spaces: FESpaces,
                 problem: "ProblemSpec",
                 k: int,
                 dt: float,
                 mass: sp.csr_matrix | None = None
                 ) -> NDArray[np.floating]:
    """Function assembling the velocity load of time step k (1-based), before Dirichlet elimination.

    Step 1 also carries the initial condition weighted by M_u/dt.
    """

    # Ensure a valid time index
    if k < 1:
        raise ValueError(f"Time index must be at least 1, got k={k}.")

    t_k = problem.t0 + k * dt
    n = spaces.n_nodes
    load = np.zeros(spaces.velocity_dofs)

    # Volume forcing
    if problem.forcing is not None:
        points = _quadrature_points(spaces)
        fx, fy = np.broadcast_arrays(*problem.forcing(points[..., 0], points[..., 1], t_k))
        for comp, values in enumerate((fx, fy)):
            local = np.einsum("t,q,qi,tq->ti", spaces.areas, QUAD_WEIGHTS, _PHI, values)
            load[comp * n:(comp + 1) * n] += np.bincount(spaces.cell_nodes.ravel(),
                                                         weights=local.ravel(), minlength=n)

    # Neumann boundary term
    if problem.neumann is not None:
        load += _neumann_load(spaces, problem.neumann, t_k)

    # Initial condition enters the first step only
    if k == 1 and problem.initial_velocity is not None:
        mass = assemble_velocity_mass(spaces) if mass is None else mass
        load += mass @ interpolate_velocity(spaces, problem.initial_velocity, problem.t0) / dt

    return load

def assemble_spatial_operators(spaces: FESpaces,
                               problem: "ProblemSpec",
                               dt: float,
                               n_t: int,
                               winds: Sequence[Wind] | None = None
                               ) -> SpatialOperators:
    """Function assembling every spatial operator of a discretisation with n_t steps.

    Without explicit `winds` the problem's analytic wind is sampled at each
    t_k; a list of P2 velocity vectors (or closures) linearises around them.
    """

    # Ensure positive step data
    if dt <= 0 or n_t < 1:
        raise ValueError(f"Need dt > 0 and n_t >= 1, got dt={dt}, n_t={n_t}.")

    # Per-step winds
    if winds is None:
        winds = [problem.wind_at(problem.t0 + k * dt) for k in range(1, n_t + 1)]
    if len(winds) != n_t:
        raise ValueError(f"Expected {n_t} winds, got {len(winds)}.")

    # Step-independent operators
    M_u = assemble_velocity_mass(spaces)
    A_u = assemble_velocity_stiffness(spaces)
    B = assemble_divergence(spaces)
    pressure = assemble_pressure_operators(spaces, ())
    mu = problem.mu

    # Steps without wind share one set of matrices
    zero_u = sp.csr_matrix(M_u.shape)
    zero_p = sp.csr_matrix(pressure.M_p.shape)
    F_u_stokes = sp.csr_matrix(M_u / dt + mu * A_u)
    F_p_stokes = sp.csr_matrix(pressure.M_p / dt + mu * pressure.A_p_tilde)

    W_u, W_p, F_u, F_p = [], [], [], []
    for wind in winds:
        if wind is None:
            W_u.append(zero_u)
            W_p.append(zero_p)
            F_u.append(F_u_stokes)
            F_p.append(F_p_stokes)
            continue
        w_u = assemble_velocity_advection(spaces, wind)
        w_p = _pressure_advection(spaces, wind)
        W_u.append(w_u)
        W_p.append(w_p)
        F_u.append(sp.csr_matrix(F_u_stokes + w_u))
        F_p.append(sp.csr_matrix(F_p_stokes + w_p))

    logger.info("Assembled spatial operators: N_u=%d, N_p=%d, N_t=%d",
                spaces.velocity_dofs, spaces.pressure_dofs, n_t)

    return SpatialOperators(M_u=M_u, A_u=A_u, B=B, M_p=pressure.M_p,
                            A_p_tilde=pressure.A_p_tilde, W_u=W_u, W_p=W_p,
                            F_u=F_u, F_p=F_p, dt=dt, mu=mu)

def eliminate_dirichlet_columns(B: sp.spmatrix,
                                dofs: NDArray[np.integer],
                                values: NDArray[np.floating]
                                ) -> tuple[sp.csr_matrix, NDArray[np.floating]]:
    """Function zeroing the Dirichlet columns of B and returning the pressure lift -B g.

    `values` is a full-length velocity vector; only its entries at `dofs` are used.
    """
    keep = np.ones(B.shape[1])
    keep[dofs] = 0.0
    g = np.zeros(B.shape[1])
    g[dofs] = values[dofs]
    return sp.csr_matrix(B @ sp.diags(keep)), -(B @ g)

def eliminate_dirichlet(ops: SpatialOperators,
                        spaces: FESpaces,
                        problem: "ProblemSpec",
                        k: int,
                        load: NDArray[np.floating] | None = None,
                        cache: dict | None = None
                        ) -> DirichletStep:
    """Function applying symmetric Dirichlet elimination to time step k (1-based).

    Constrained velocity rows and columns of F_u[k] become identity, their
    column contributions times the data at t_k move to the right-hand side,
    and the subdiagonal coupling with step k-1 moves its known boundary values
    over as well. B loses its Dirichlet columns with a matching pressure lift.
    `cache` maps matrix ids to eliminated matrices shared between steps.
    """
    cache = {} if cache is None else cache
    dofs = spaces.dirichlet_velocity_dofs
    dt = ops.dt
    F_k = ops.F_u[k - 1]

    # Boundary data at t_k and t_{k-1}
    g_k = dirichlet_values(spaces, problem, problem.t0 + k * dt)
    load = np.zeros(spaces.velocity_dofs) if load is None else np.asarray(load, dtype=np.float64)
    rhs = load - F_k @ g_k
    if k >= 2:
        g_prev = dirichlet_values(spaces, problem, problem.t0 + (k - 1) * dt)
        rhs += (ops.M_u @ g_prev) / dt
    rhs[dofs] = g_k[dofs]

    # Eliminated matrices, shared between steps with the same raw operator
    if id(F_k) not in cache:
        cache[id(F_k)] = (F_k, apply_dirichlet_rows_cols(F_k, dofs))
    if "M_sub" not in cache:
        cache["M_sub"] = apply_dirichlet_rows_cols(ops.M_u / dt, dofs, diagonal=0.0)
    B_bc, rhs_p = eliminate_dirichlet_columns(ops.B, dofs, g_k)
    if "B" not in cache:
        cache["B"] = B_bc

    return DirichletStep(F_u=cache[id(F_k)][1],
                         B=cache["B"],
                         M_sub=cache["M_sub"],
                         g=g_k,
                         rhs_u=rhs,
                         rhs_p=rhs_p)
