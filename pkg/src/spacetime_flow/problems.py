"""Module providing the catalogue of model flow problems."""

import sys
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from spacetime_flow.mesh import (
    BoundaryTag,
    TriMesh,
    backstep_mesh,
    retag_boundary,
    unit_square_mesh,
)
from spacetime_flow.utils.introspection import get_problem_builder

__all__ = ["ProblemId",
           "ProblemSpec",
           "make_problem",
           "exact_solution",
           "grid_peclet",
           "problem_names"
           ]

VectorField = Callable[[NDArray, NDArray, float], tuple[NDArray, NDArray]]

class ProblemId(Enum):
    CAVITY = "cavity"
    POISEUILLE = "poiseuille"
    BACKSTEP = "backstep"
    GLAZING = "glazing"

@dataclass(frozen=True)
class ProblemSpec:
    """Boundary data, forcing, wind and (optional) exact solution of a model problem.

    Every vector field is a function of (x, y, t) returning its two components.
    `dirichlet` is evaluated on the whole Dirichlet boundary; `neumann` only on
    Outflow edges. `exact` returns (u_x, u_y, p).
    """
    id: ProblemId
    mesh_builder: Callable[[int], TriMesh]
    dirichlet: VectorField
    mu: float = 1.0
    t0: float = 0.0
    t_end: float = 1.0
    neumann: VectorField | None = None
    forcing: VectorField | None = None
    wind: VectorField | None = None
    initial_velocity: VectorField | None = None
    pe: float = 0.0
    exact: Callable[[NDArray, NDArray, float], tuple[NDArray, NDArray, NDArray]] | None = None

    @property
    def name(self) -> str:
        return self.id.value

    @property
    def enclosed(self) -> bool:
        """True for problems with Dirichlet data on the whole boundary."""
        return self.id in (ProblemId.CAVITY, ProblemId.GLAZING)

    def wind_at(self, t: float) -> Callable[[NDArray, NDArray], tuple[NDArray, NDArray]] | None:
        """Function freezing the analytic wind at time t, None for Stokes problems."""
        if self.wind is None:
            return None
        wind = self.wind
        return lambda x, y: wind(x, y, t)

def _zero_field(x, y, t):
    return np.zeros_like(x), np.zeros_like(x)

def _cavity_lid(x: NDArray, t: float) -> NDArray:
    """Regularised lid speed, vanishing at the corners and ramped linearly from t=0."""
    return 8.0 * t * x * (1.0 - x) * (2.0 * x**2 - 2.0 * x + 1.0)

def _lid_dirichlet(amplitude: float) -> VectorField:
    def dirichlet(x, y, t):
        on_lid = np.isclose(y, 1.0)
        return amplitude * np.where(on_lid, _cavity_lid(x, t), 0.0), np.zeros_like(x)
    return dirichlet

def _parabolic_inflow(amplitude: float) -> VectorField:
    # Zero on the walls y=0 and y=1, so it can be evaluated on every Dirichlet edge
    def dirichlet(x, y, t):
        inflow = np.isclose(x, 0.0)
        return amplitude * np.where(inflow, 4.0 * t * y * (1.0 - y), 0.0), np.zeros_like(x)
    return dirichlet

def _channel_tagger(x: float, y: float) -> BoundaryTag:
    if np.isclose(x, 0.0):
        return BoundaryTag.INFLOW
    if np.isclose(x, 1.0):
        return BoundaryTag.OUTFLOW
    return BoundaryTag.WALL

def _channel_mesh(r: int) -> TriMesh:
    return retag_boundary(unit_square_mesh(r), _channel_tagger)

def _make_cavity_problem(amplitude: float = 1.0, **kwargs) -> ProblemSpec:
    return ProblemSpec(id=ProblemId.CAVITY,
                       mesh_builder=unit_square_mesh,
                       dirichlet=_lid_dirichlet(amplitude))

def _make_poiseuille_problem(amplitude: float = 1.0,
                             steady_pressure: bool = False,
                             **kwargs
                             ) -> ProblemSpec:
    """Function building the channel flow with a manufactured exact solution.

    The consistent pressure is 8t(1-x); `steady_pressure` selects the
    time-independent 8(1-x), which balances the momentum equation at t=1 only.
    """

    def forcing(x, y, t):
        return amplitude * 4.0 * y * (1.0 - y), np.zeros_like(x)

    def exact(x, y, t):
        scale = 1.0 if steady_pressure else t
        p = amplitude * 8.0 * scale * (1.0 - x)
        return amplitude * 4.0 * t * y * (1.0 - y), np.zeros_like(x), p

    return ProblemSpec(id=ProblemId.POISEUILLE,
                       mesh_builder=_channel_mesh,
                       dirichlet=_parabolic_inflow(amplitude),
                       neumann=_zero_field,
                       forcing=forcing,
                       exact=exact)

def _make_backstep_problem(amplitude: float = 1.0, **kwargs) -> ProblemSpec:
    return ProblemSpec(id=ProblemId.BACKSTEP,
                       mesh_builder=backstep_mesh,
                       dirichlet=_parabolic_inflow(amplitude),
                       neumann=_zero_field)

def _make_glazing_problem(amplitude: float = 1.0, pe: float | None = None, **kwargs) -> ProblemSpec:
    """Function building the cavity flow advected by a recirculating wind of strength mu*Pe."""
    mu = 1.0

    def wind(x, y, t):
        scale = 2.0 * t * mu * pe
        return (-scale * (2.0 * y - 1.0) * (4.0 * x**2 - 4.0 * x + 1.0),
                scale * (2.0 * x - 1.0) * (4.0 * y**2 - 4.0 * y + 1.0))

    return ProblemSpec(id=ProblemId.GLAZING,
                       mesh_builder=unit_square_mesh,
                       dirichlet=_lid_dirichlet(amplitude),
                       mu=mu,
                       wind=wind if pe != 0 else None,
                       pe=float(pe))

def make_problem(problem_id: ProblemId | str,
                 pe: float | None = None,
                 steady_pressure: bool = False,
                 amplitude: float = 1.0
                 ) -> ProblemSpec:
    """Function building a model problem by id.

    The Peclet number is required for (and only accepted by) the
    double-glazing problem. `amplitude` scales all Dirichlet and forcing data.
    """

    # Resolve the problem id, unknown tags raise
    try:
        problem_id = ProblemId(problem_id) if isinstance(problem_id, str) else problem_id
    except ValueError as exc:
        raise NotImplementedError(f"No problem builder found for problem='{problem_id}'") from exc

    # Ensure the Peclet number is given exactly when needed
    if problem_id is ProblemId.GLAZING and pe is None:
        raise ValueError("The glazing problem requires a Peclet number.")
    if problem_id is not ProblemId.GLAZING and pe not in (None, 0, 0.0):
        raise ValueError(f"Problem '{problem_id.value}' has no wind, got pe={pe}.")
    if pe is not None and pe < 0:
        raise ValueError(f"Peclet number must be non-negative, got pe={pe}.")

    builder = get_problem_builder(problem_id.value, module=sys.modules[__name__])
    return builder(amplitude=amplitude, steady_pressure=steady_pressure, pe=pe)

def exact_solution(problem: ProblemSpec,
                   x: NDArray,
                   y: NDArray,
                   t: float
                   ) -> tuple[NDArray, NDArray, NDArray] | None:
    """Function evaluating (u_x, u_y, p) where an analytic solution exists, None otherwise."""
    if problem.exact is None:
        return None
    x, y = np.broadcast_arrays(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64))
    return problem.exact(x, y, t)

def grid_peclet(problem: ProblemSpec, dx: float, length: float = 1.0) -> float:
    """Function returning the grid Peclet number dx*Pe/L (zero for Stokes problems)."""
    return dx * problem.pe / length

def problem_names() -> list[str]:
    """Function listing the registered problem tags."""
    return [problem_id.value for problem_id in ProblemId]
