"""Module providing the Picard iteration for the space-time Navier-Stokes system."""

import logging
from dataclasses import dataclass, field

import numpy as np

from spacetime_flow.fem import build_spaces
from spacetime_flow.linalg import KrylovConfig
from spacetime_flow.problems import ProblemSpec
from spacetime_flow.spacetime import (
    PrecondConfig,
    SpaceTimeSystem,
    SpaceTimeVector,
    build_spacetime_system,
    solve_all_at_once,
    spacetime_residual,
)

__all__ = ["PicardState", "PicardResult", "picard_solve"]

logger = logging.getLogger(__name__)

@dataclass
class PicardState:
    """Current Picard iterate; j counts the linear solves after the first one."""
    j: int
    solution: SpaceTimeVector
    residual_history: list[float] = field(default_factory=list)

@dataclass
class PicardResult:
    solution: SpaceTimeVector
    outer_iterations: int
    inner_iterations: list[int]
    residual_history: list[float]
    converged: bool
    system: SpaceTimeSystem

    @property
    def mean_inner_iterations(self) -> float:
        return float(np.mean(self.inner_iterations))

def picard_solve(problem: ProblemSpec,
                 r: int,
                 n_t: int,
                 cfg: PrecondConfig,
                 krylov: KrylovConfig | None = None,
                 nl_tol: float = 1e-9,
                 max_outer: int = 20
                 ) -> PicardResult:
    """Function solving the Navier-Stokes all-at-once system by Picard linearisation.

    The first linear solve is Stokes (zero wind). Every later solve advects
    with the previous velocity iterate at each t_k and is warm-started from it.
    The nonlinear residual of an iterate is the relative residual of the
    system linearised at that iterate. The outer count is the number of
    linear solves.
    """

    # Ensure a problem without prescribed wind and a valid tolerance
    if problem.wind is not None:
        raise ValueError(f"Problem '{problem.name}' prescribes a wind; Picard needs a Stokes problem.")
    if not nl_tol > 0:
        raise ValueError(f"Nonlinear tolerance must be positive, got nl_tol={nl_tol}.")
    if max_outer < 1:
        raise ValueError(f"max_outer must be at least 1, got max_outer={max_outer}.")

    krylov = krylov or KrylovConfig()
    spaces = build_spaces(problem.mesh_builder(r))

    # Stokes solve as the first iterate
    system = build_spacetime_system(problem, r, n_t, winds=[None] * n_t, spaces=spaces)
    solution, report = solve_all_at_once(system, cfg, krylov)
    state = PicardState(j=0, solution=solution)
    inner = [report.iterations]
    converged = False

    while True:
        # Re-linearise around the current iterate and measure its residual
        system = build_spacetime_system(problem, r, n_t, winds=list(state.solution.u), spaces=spaces)
        residual = spacetime_residual(system, state.solution)
        state.residual_history.append(residual)
        logger.info("Picard iterate %d: nonlinear residual %.3e", state.j, residual)

        if residual <= nl_tol:
            converged = True
            break
        if len(inner) >= max_outer:
            logger.warning("Picard iteration stopped after %d outer iterations at residual %.3e",
                           len(inner), residual)
            break

        # Linear solve of the re-linearised system, warm-started
        solution, report = solve_all_at_once(system, cfg, krylov, x0=state.solution)
        inner.append(report.iterations)
        state.j += 1
        state.solution = solution

    return PicardResult(solution=state.solution,
                        outer_iterations=len(inner),
                        inner_iterations=inner,
                        residual_history=state.residual_history,
                        converged=converged,
                        system=system)
