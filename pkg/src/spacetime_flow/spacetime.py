"""Module providing the all-at-once space-time system, its block preconditioner and solvers.

Unknowns are ordered by physical field, [u_1 ... u_Nt | p_1 ... p_Nt]. The
right preconditioner is block upper-triangular, with the velocity block
inverted by forward substitution over the time steps and the pressure Schur
complement approximated by M_p^-1 F_p A_p^-1, where F_p is the space-time
pressure convection-diffusion operator.
"""

import logging
from dataclasses import dataclass, replace
from typing import Literal, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from numpy.typing import NDArray

from spacetime_flow.fem import (
    DirichletStep,
    FESpaces,
    SpatialOperators,
    Wind,
    assemble_rhs,
    assemble_spatial_operators,
    build_spaces,
    eliminate_dirichlet,
)
from spacetime_flow.linalg import (
    KrylovConfig,
    SolveReport,
    SparseFactorization,
    cg_solve,
    chebyshev_solve,
    deflate_constants,
    dense_eigenvalues,
    gmres,
    sparse_lu,
)
from spacetime_flow.problems import ProblemSpec

__all__ = ["SpaceTimeVector",
           "SpaceTimeSystem",
           "PrecondConfig",
           "PreconditionerState",
           "SequentialReport",
           "ConvergenceError",
           "build_spacetime_system",
           "split_spacetime",
           "apply_spacetime_operator",
           "assemble_spacetime_matrix",
           "spacetime_residual",
           "setup_preconditioner",
           "apply_schur_inverse",
           "solve_velocity_block",
           "apply_pt_inverse",
           "solve_all_at_once",
           "sequential_time_stepping",
           "preconditioned_schur_eigs"
           ]

logger = logging.getLogger(__name__)

# Largest pressure space-time size for which the dense exact Schur complement is formed
_EXACT_SCHUR_MAX = 4000

class ConvergenceError(RuntimeError):
    """Raised when a time step of sequential time-stepping does not converge."""

    def __init__(self, step: int, report: SolveReport):
        self.step = step
        self.report = report
        super().__init__(f"Time step {step} did not converge within {report.iterations} "
                         f"iterations (relative residual {report.residual_history[-1]:.3e}).")

@dataclass
class SpaceTimeVector:
    """Block vector with velocity blocks u (N_t, N_u) and pressure blocks p (N_t, N_p)."""
    u: NDArray[np.floating]
    p: NDArray[np.floating]

    def __post_init__(self):
        # Ensure uniform block sizes
        if self.u.ndim != 2 or self.p.ndim != 2 or self.u.shape[0] != self.p.shape[0]:
            raise ValueError(f"Velocity and pressure blocks must be (N_t, N) arrays with equal N_t, "
                             f"got {self.u.shape} and {self.p.shape}.")

    @property
    def n_t(self) -> int:
        return self.u.shape[0]

    def flat(self) -> NDArray[np.floating]:
        return np.concatenate([self.u.ravel(), self.p.ravel()])

    @classmethod
    def from_flat(cls, x: NDArray[np.floating], n_t: int, n_u: int, n_p: int) -> "SpaceTimeVector":
        # Ensure the total length matches the layout
        if x.shape != (n_t * (n_u + n_p),):
            raise ValueError(f"Space-time vector must have length {n_t * (n_u + n_p)}, got {x.shape}.")
        return cls(u=x[:n_t * n_u].reshape(n_t, n_u).copy(),
                   p=x[n_t * n_u:].reshape(n_t, n_p).copy())

@dataclass(frozen=True)
class SpaceTimeSystem:
    """Assembled all-at-once system after Dirichlet elimination.

    `steps[k]` holds the eliminated F_u, B and subdiagonal M_u/dt of step k+1
    together with its right-hand side; `x0` carries the Dirichlet values.
    """
    problem: ProblemSpec
    spaces: FESpaces
    ops: SpatialOperators
    steps: list[DirichletStep]
    rhs: SpaceTimeVector
    x0: SpaceTimeVector
    dt: float
    n_t: int
    r: int

    @property
    def mu(self) -> float:
        return self.ops.mu

    @property
    def n_u(self) -> int:
        return self.spaces.velocity_dofs

    @property
    def n_p(self) -> int:
        return self.spaces.pressure_dofs

    @property
    def size(self) -> int:
        return self.n_t * (self.n_u + self.n_p)

    @property
    def B(self) -> sp.csr_matrix:
        return self.steps[0].B

    @property
    def M_sub(self) -> sp.csr_matrix:
        return self.steps[0].M_sub

@dataclass(frozen=True)
class PrecondConfig:
    """Inner solvers of the block preconditioner.

    velocity_solver: "lu" (per-step sparse LU, forward substitution) or
    "krylov" (GMRES on the space-time velocity block, block-Jacobi LU
    preconditioned). mass_solver: "lu" or "chebyshev". laplacian_solver: "lu"
    or "cg". schur_form: "general" or "stokes" (closed form without wind).
    exact_schur replaces the Schur approximation by the dense exact Schur
    complement and is meant for tests on tiny systems.
    """
    velocity_solver: Literal["lu", "krylov"] = "lu"
    velocity_tol: float = 1e-14
    velocity_max_iter: int = 15
    mass_solver: Literal["lu", "chebyshev"] = "lu"
    chebyshev_iterations: int = 8
    mass_eig_bounds: tuple[float, float] = (0.5, 2.0)
    laplacian_solver: Literal["lu", "cg"] = "lu"
    laplacian_tol: float = 1e-14
    laplacian_max_iter: int = 15
    schur_form: Literal["general", "stokes"] = "general"
    exact_schur: bool = False

    def __post_init__(self):
        # Ensure known solver names
        choices = {"velocity_solver": ("lu", "krylov"),
                   "mass_solver": ("lu", "chebyshev"),
                   "laplacian_solver": ("lu", "cg"),
                   "schur_form": ("general", "stokes")}
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got '{getattr(self, name)}'.")
        if self.chebyshev_iterations < 0:
            raise ValueError(f"chebyshev_iterations must be non-negative, got {self.chebyshev_iterations}.")

    @property
    def iterative(self) -> bool:
        """True when any component solver is iterative, which calls for flexible GMRES."""
        return (self.velocity_solver == "krylov"
                or self.mass_solver == "chebyshev"
                or self.laplacian_solver == "cg")

@dataclass
class SequentialReport:
    """Per-step GMRES reports of sequential time-stepping."""
    reports: list[SolveReport]
    step_tol: float

    @property
    def iterations(self) -> list[int]:
        return [report.iterations for report in self.reports]

    @property
    def mean_iterations(self) -> float:
        return float(np.mean(self.iterations))

    @property
    def converged(self) -> bool:
        return all(report.converged for report in self.reports)

def build_spacetime_system(problem: ProblemSpec,
                           r: int,
                           n_t: int,
                           winds: Sequence[Wind] | None = None,
                           spaces: FESpaces | None = None
                           ) -> SpaceTimeSystem:
    """Function assembling the eliminated all-at-once system of a problem on refinement level r.

    `winds` overrides the problem's analytic wind per step (Picard iterates);
    `spaces` reuses a previous DOF numbering.
    """

    # Ensure a valid step count
    if n_t < 1:
        raise ValueError(f"Number of time steps must be at least 1, got n_t={n_t}.")

    # Discretisation
    spaces = build_spaces(problem.mesh_builder(r)) if spaces is None else spaces
    dt = (problem.t_end - problem.t0) / n_t
    ops = assemble_spatial_operators(spaces, problem, dt, n_t, winds)

    # Loads and Dirichlet elimination per step
    cache: dict = {}
    steps = []
    for k in range(1, n_t + 1):
        load = assemble_rhs(spaces, problem, k, dt, mass=ops.M_u)
        steps.append(eliminate_dirichlet(ops, spaces, problem, k, load, cache))

    rhs = SpaceTimeVector(u=np.stack([step.rhs_u for step in steps]),
                          p=np.stack([step.rhs_p for step in steps]))
    x0 = SpaceTimeVector(u=np.stack([step.g for step in steps]),
                         p=np.zeros((n_t, spaces.pressure_dofs)))

    logger.info("Space-time system for '%s': r=%d, N_t=%d, %d unknowns",
                problem.name, r, n_t, n_t * (spaces.velocity_dofs + spaces.pressure_dofs))

    return SpaceTimeSystem(problem=problem, spaces=spaces, ops=ops, steps=steps, rhs=rhs,
                           x0=x0, dt=dt, n_t=n_t, r=r)

def split_spacetime(sys: SpaceTimeSystem, x: NDArray[np.floating]) -> SpaceTimeVector:
    """Function converting a flat space-time vector to velocity and pressure blocks."""
    return SpaceTimeVector.from_flat(np.asarray(x, dtype=np.float64), sys.n_t, sys.n_u, sys.n_p)

def _apply_blocks(sys: SpaceTimeSystem, u: NDArray, p: NDArray) -> tuple[NDArray, NDArray]:
    y_u = np.empty_like(u)
    for k in range(sys.n_t):
        y_u[k] = sys.steps[k].F_u @ u[k]
    y_u += (sys.B.T @ p.T).T
    y_u[1:] -= (sys.M_sub @ u[:-1].T).T
    y_p = (sys.B @ u.T).T
    return y_u, y_p

def apply_spacetime_operator(sys: SpaceTimeSystem,
                             x: SpaceTimeVector | NDArray[np.floating]
                             ) -> SpaceTimeVector | NDArray[np.floating]:
    """Function applying the all-at-once operator; flat input gives flat output.

    y_u[k] = F_u[k] x_u[k] - (M_u/dt) x_u[k-1] + B^T x_p[k], y_p[k] = B x_u[k].
    """
    if isinstance(x, SpaceTimeVector):
        y_u, y_p = _apply_blocks(sys, x.u, x.p)
        return SpaceTimeVector(u=y_u, p=y_p)
    blocks = split_spacetime(sys, x)
    y_u, y_p = _apply_blocks(sys, blocks.u, blocks.p)
    return np.concatenate([y_u.ravel(), y_p.ravel()])

def _velocity_spacetime_matrix(sys: SpaceTimeSystem) -> sp.csr_matrix:
    """Function assembling the block lower-bidiagonal space-time velocity operator."""
    diagonal = sp.block_diag([step.F_u for step in sys.steps], format="csr")
    coupling = sp.kron(sp.eye(sys.n_t, k=-1), sys.M_sub, format="csr")
    return sp.csr_matrix(diagonal - coupling)

def assemble_spacetime_matrix(sys: SpaceTimeSystem) -> sp.csr_matrix:
    """Function assembling the full all-at-once matrix in the field-ordered layout."""
    F_st = _velocity_spacetime_matrix(sys)
    B_st = sp.kron(sp.eye(sys.n_t), sys.B, format="csr")
    return sp.bmat([[F_st, B_st.T], [B_st, None]], format="csr")

def spacetime_residual(sys: SpaceTimeSystem,
                       x: SpaceTimeVector | NDArray[np.floating]
                       ) -> float:
    """Function returning the relative Euclidean residual ||b - Ax|| / ||b||."""
    flat = x.flat() if isinstance(x, SpaceTimeVector) else np.asarray(x, dtype=np.float64)
    b = sys.rhs.flat()
    residual = np.linalg.norm(b - apply_spacetime_operator(sys, flat))
    b_norm = np.linalg.norm(b)
    return float(residual / b_norm) if b_norm > 0 else float(residual)

class PreconditionerState:
    """Factorisations and inner-solver settings of the block preconditioner for one system.

    Per-step LU factors of F_u are shared between steps whose eliminated F_u
    is the same object. Velocity inner iteration counts are collected in
    `inner_iterations`.
    """

    def __init__(self, sys: SpaceTimeSystem, cfg: PrecondConfig):
        self.sys = sys
        self.cfg = cfg
        self.inner_iterations: list[int] = []
        self.enclosed = sys.spaces.enclosed
        ops = sys.ops

        # Simplified Stokes form needs wind-free pressure operators
        if cfg.schur_form == "stokes" and any(w.nnz > 0 for w in ops.W_p):
            raise ValueError("The simplified Stokes Schur form requires zero pressure advection.")

        # Per-step velocity factors, reused across identical operators
        factors: dict[int, SparseFactorization] = {}
        self.velocity_lu = []
        for step in sys.steps:
            if id(step.F_u) not in factors:
                factors[id(step.F_u)] = sparse_lu(step.F_u)
            self.velocity_lu.append(factors[id(step.F_u)])
        logger.debug("Factorised %d distinct velocity blocks for %d steps", len(factors), sys.n_t)

        # Pressure mass and Laplacian solvers
        self.mass_lu = sparse_lu(ops.M_p) if cfg.mass_solver == "lu" else None
        self.pin = 0
        self.laplacian_lu = None
        if cfg.laplacian_solver == "lu":
            lap = ops.A_p_tilde
            if self.enclosed:
                lap = sp.lil_matrix(lap)
                lap[self.pin, :] = 0.0
                lap[:, self.pin] = 0.0
                lap[self.pin, self.pin] = 1.0
            self.laplacian_lu = sparse_lu(sp.csr_matrix(lap))

        # Dense pseudo-inverse of the exact Schur complement
        self.exact_schur_pinv = self._exact_schur_pinv() if cfg.exact_schur else None

    def _exact_schur_pinv(self) -> NDArray[np.floating]:
        sys = self.sys
        if sys.n_t * sys.n_p > _EXACT_SCHUR_MAX:
            raise ValueError(f"Exact Schur complement of size {sys.n_t * sys.n_p} is too large "
                             f"to form densely (limit {_EXACT_SCHUR_MAX}).")
        F_lu = sparse_lu(_velocity_spacetime_matrix(sys))
        B_st = sp.kron(sp.eye(sys.n_t), sys.B, format="csr")
        S = B_st @ F_lu.solve(B_st.T.toarray())
        return sla.pinv(S)

    def solve_mass(self, v: NDArray[np.floating]) -> NDArray[np.floating]:
        if self.mass_lu is not None:
            return self.mass_lu.solve(v)
        return chebyshev_solve(self.sys.ops.M_p, v, self.cfg.chebyshev_iterations,
                               self.cfg.mass_eig_bounds, diag_precond=True)

    def solve_laplacian(self, v: NDArray[np.floating]) -> NDArray[np.floating]:
        """Function applying the (pseudo-)inverse of the pressure Laplacian.

        For enclosed flow the right-hand side and the result are deflated, which
        gives the minimum-norm solution of the pure-Neumann system.
        """
        if self.laplacian_lu is None:
            config = KrylovConfig(tol=self.cfg.laplacian_tol, max_iter=self.cfg.laplacian_max_iter)
            x, _ = cg_solve(self.sys.ops.A_p_tilde, v, config, deflate=self.enclosed)
            return x
        if not self.enclosed:
            return self.laplacian_lu.solve(v)
        b = deflate_constants(v)
        b[self.pin] = 0.0
        return deflate_constants(self.laplacian_lu.solve(b))

    def solve_velocity_step(self, k: int, v: NDArray[np.floating]) -> NDArray[np.floating]:
        """Function solving F_u[k] x = v for 0-based step k."""
        return self.velocity_lu[k].solve(v)

def setup_preconditioner(sys: SpaceTimeSystem, cfg: PrecondConfig) -> PreconditionerState:
    """Function performing all factorisations the preconditioner needs for a system."""
    return PreconditionerState(sys, cfg)

def _schur_stages(state: PreconditionerState,
                  r_p: NDArray[np.floating],
                  ks: Sequence[int],
                  coupled: bool
                  ) -> NDArray[np.floating]:
    """Function applying M_p^-1 F_p A_p^-1 to the pressure blocks of the steps ks.

    With `coupled` the subdiagonal -M_p/dt of the space-time F_p links
    consecutive blocks; otherwise every block is treated as a single step.
    """
    ops = state.sys.ops
    dt = ops.dt

    # Stage 1: independent Laplacian solves
    z = np.stack([state.solve_laplacian(r_p[i]) for i in range(len(ks))])

    # Stage 2: space-time pressure convection-diffusion
    w = np.stack([ops.F_p[k] @ z[i] for i, k in enumerate(ks)])
    if coupled:
        w[1:] -= (ops.M_p @ z[:-1].T).T / dt

    # Stage 3: independent mass solves
    return np.stack([state.solve_mass(w[i]) for i in range(len(ks))])

def apply_schur_inverse(state: PreconditionerState,
                        r_p: NDArray[np.floating]
                        ) -> NDArray[np.floating]:
    """Function applying the Schur approximation X^-1 to pressure blocks of shape (N_t, N_p).

    The simplified Stokes form applies A_p^-1/dt + mu M_p^-1 on the diagonal
    and -A_p^-1/dt on the subdiagonal; for enclosed flow it agrees with the
    general form on mean-free input.
    """
    sys = state.sys
    r_p = np.asarray(r_p, dtype=np.float64).reshape(sys.n_t, sys.n_p)

    if state.exact_schur_pinv is not None:
        return (state.exact_schur_pinv @ r_p.ravel()).reshape(sys.n_t, sys.n_p)

    if state.cfg.schur_form == "general":
        return _schur_stages(state, r_p, range(sys.n_t), coupled=True)

    # Closed form for the Stokes case
    lap = np.stack([state.solve_laplacian(r_p[k]) for k in range(sys.n_t)])
    out = lap / sys.dt + sys.mu * np.stack([state.solve_mass(r_p[k]) for k in range(sys.n_t)])
    out[1:] -= lap[:-1] / sys.dt
    return out

def solve_velocity_block(state: PreconditionerState,
                         r_u: NDArray[np.floating]
                         ) -> NDArray[np.floating]:
    """Function solving the space-time velocity block for blocks of shape (N_t, N_u)."""
    sys = state.sys
    r_u = np.asarray(r_u, dtype=np.float64).reshape(sys.n_t, sys.n_u)

    if state.cfg.velocity_solver == "lu":
        # Block forward substitution, i.e. implicit Euler time-stepping
        u = np.empty_like(r_u)
        u[0] = state.solve_velocity_step(0, r_u[0])
        for k in range(1, sys.n_t):
            u[k] = state.solve_velocity_step(k, r_u[k] + sys.M_sub @ u[k - 1])
        return u

    # GMRES on the whole velocity block with block-Jacobi LU preconditioning
    def apply_f(v):
        blocks = v.reshape(sys.n_t, sys.n_u)
        out = np.stack([sys.steps[k].F_u @ blocks[k] for k in range(sys.n_t)])
        out[1:] -= (sys.M_sub @ blocks[:-1].T).T
        return out.ravel()

    def block_jacobi(v):
        blocks = v.reshape(sys.n_t, sys.n_u)
        return np.concatenate([state.solve_velocity_step(k, blocks[k]) for k in range(sys.n_t)])

    config = KrylovConfig(tol=state.cfg.velocity_tol, max_iter=state.cfg.velocity_max_iter)
    x, report = gmres(apply_f, r_u.ravel(), None, config, M=block_jacobi)
    state.inner_iterations.append(report.iterations)
    return x.reshape(sys.n_t, sys.n_u)

def apply_pt_inverse(state: PreconditionerState,
                     r: SpaceTimeVector | NDArray[np.floating]
                     ) -> SpaceTimeVector | NDArray[np.floating]:
    """Function applying the block upper-triangular preconditioner inverse.

    z_p = -X^-1 r_p, then z_u = F_u^-1 (r_u - B^T z_p).
    """
    sys = state.sys
    blocks = r if isinstance(r, SpaceTimeVector) else split_spacetime(sys, r)

    z_p = -apply_schur_inverse(state, blocks.p)
    z_u = solve_velocity_block(state, blocks.u - (sys.B.T @ z_p.T).T)

    if isinstance(r, SpaceTimeVector):
        return SpaceTimeVector(u=z_u, p=z_p)
    return np.concatenate([z_u.ravel(), z_p.ravel()])

def solve_all_at_once(sys: SpaceTimeSystem,
                      cfg: PrecondConfig,
                      krylov: KrylovConfig,
                      x0: SpaceTimeVector | None = None
                      ) -> tuple[SpaceTimeVector, SolveReport]:
    """Function solving the all-at-once system by right-preconditioned (F)GMRES.

    Flexible GMRES is used whenever an inner solver is iterative. The initial
    guess is zero apart from the Dirichlet values unless `x0` is given.
    """
    state = setup_preconditioner(sys, cfg)
    config = replace(krylov, flexible=krylov.flexible or cfg.iterative)
    start = (sys.x0 if x0 is None else x0).flat()

    x, report = gmres(lambda v: apply_spacetime_operator(sys, v),
                      sys.rhs.flat(),
                      start,
                      config,
                      M=lambda v: apply_pt_inverse(state, v))
    report.inner_iterations = list(state.inner_iterations)

    if report.converged:
        logger.info("%s converged in %d iterations (relative residual %.2e)",
                    "FGMRES" if config.flexible else "GMRES", report.iterations, report.true_residual)
    else:
        logger.warning("All-at-once solve did not converge in %d iterations (relative residual %.2e)",
                       report.iterations, report.residual_history[-1])

    return split_spacetime(sys, x), report

def sequential_time_stepping(sys: SpaceTimeSystem,
                             cfg: PrecondConfig,
                             krylov: KrylovConfig
                             ) -> tuple[SpaceTimeVector, SequentialReport]:
    """Function solving the system step by step with a single-step block preconditioner.

    Each step is solved by right-preconditioned GMRES to krylov.tol/sqrt(N_t)
    relative to its own right-hand side, starting from the previous step's
    solution with the current Dirichlet values substituted.
    """
    state = setup_preconditioner(sys, replace(cfg, schur_form="general", exact_schur=False))
    step_config = replace(krylov, tol=krylov.tol / np.sqrt(sys.n_t), flexible=krylov.flexible or cfg.iterative)
    n_u, n_p = sys.n_u, sys.n_p
    dofs = sys.spaces.dirichlet_velocity_dofs

    u = np.zeros((sys.n_t, n_u))
    p = np.zeros((sys.n_t, n_p))
    reports = []
    guess = np.concatenate([sys.x0.u[0], sys.x0.p[0]])

    for k in range(sys.n_t):
        step = sys.steps[k]

        # Step right-hand side with the previous solution moved over
        rhs_u = step.rhs_u + (sys.M_sub @ u[k - 1] if k > 0 else 0.0)
        rhs = np.concatenate([rhs_u, step.rhs_p])

        def apply_step(v, F=step.F_u):
            return np.concatenate([F @ v[:n_u] + sys.B.T @ v[n_u:], sys.B @ v[:n_u]])

        def precond_step(v, k=k):
            z_p = -_schur_stages(state, v[None, n_u:], [k], coupled=False)[0]
            z_u = state.solve_velocity_step(k, v[:n_u] - sys.B.T @ z_p)
            return np.concatenate([z_u, z_p])

        # Warm start with the Dirichlet values of this step
        guess[dofs] = step.g[dofs]
        x, report = gmres(apply_step, rhs, guess, step_config, M=precond_step)
        if not report.converged:
            raise ConvergenceError(k + 1, report)

        u[k], p[k] = x[:n_u], x[n_u:]
        reports.append(report)
        guess = x.copy()
        logger.debug("Step %d converged in %d iterations", k + 1, report.iterations)

    result = SequentialReport(reports=reports, step_tol=step_config.tol)
    logger.info("Sequential time-stepping: mean %.2f iterations per step", result.mean_iterations)
    return SpaceTimeVector(u=u, p=p), result

def preconditioned_schur_eigs(sys: SpaceTimeSystem, k: int) -> NDArray[np.complexfloating]:
    """Function computing the eigenvalues of M_p^-1 F_p[k] A_p^-1 B F_u[k]^-1 B^T at step k (1-based).

    For enclosed flow the zero eigenvalue of the constant pressure mode is
    deflated by restricting to the mean-free subspace.
    """

    # Ensure a valid step and a non-degenerate pressure space
    if not 1 <= k <= sys.n_t:
        raise ValueError(f"Time index must lie in [1, {sys.n_t}], got k={k}.")
    if sys.n_p < 2:
        raise ValueError(f"Need at least two pressure DOFs for the eigenvalue computation, got {sys.n_p}.")

    state = setup_preconditioner(sys, PrecondConfig())

    # Dense pressure Schur complement of step k
    B_t = sys.B.T.toarray()
    schur = sys.B @ state.solve_velocity_step(k - 1, B_t)

    # Apply the single-step approximation inverse column by column
    z = np.column_stack([state.solve_laplacian(schur[:, j]) for j in range(sys.n_p)])
    w = sys.ops.F_p[k - 1] @ z
    T = state.mass_lu.solve(w)

    # Restrict to the complement of the constant mode
    if sys.spaces.enclosed:
        Q = sla.null_space(np.ones((1, sys.n_p)))
        T = Q.T @ T @ Q

    return dense_eigenvalues(T)
