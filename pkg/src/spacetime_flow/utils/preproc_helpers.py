"""Module providing helper functions turning configuration into solver settings."""

from spacetime_flow.linalg import KrylovConfig
from spacetime_flow.spacetime import PrecondConfig

__all__ = ["normalise_mode",
           "build_precond_config",
           "build_krylov_config",
           "steps_from_exponent",
           "check_caps"
           ]

_DEFAULT_SOLVERS = {
    "ideal": {"velocity": "lu", "mass": "lu", "laplacian": "lu"},
    "approximate": {"velocity": "krylov", "velocity_tol": 1e-14, "velocity_max_iter": 15,
                    "mass": "chebyshev", "chebyshev_iterations": 8, "mass_eig_bounds": [0.5, 2.0],
                    "laplacian": "cg", "laplacian_tol": 1e-14, "laplacian_max_iter": 15},
}

def normalise_mode(mode: str) -> str:
    """Function mapping CLI mode spellings to 'ideal' or 'approximate'."""

    # Accept the short CLI spelling
    aliases = {"ideal": "ideal", "approx": "approximate", "approximate": "approximate"}
    if mode not in aliases:
        raise ValueError(f"Unknown solver mode '{mode}', expected one of {sorted(aliases)}.")

    return aliases[mode]

def build_precond_config(solver_config: dict | None,
                         mode: str = "ideal",
                         **overrides
                         ) -> PrecondConfig:
    """Function building the preconditioner settings of a mode from the 'solver' config section."""

    # Select the mode section, falling back to the defaults
    mode = normalise_mode(mode)
    section = dict(_DEFAULT_SOLVERS[mode])
    if solver_config is not None:
        section.update(solver_config.get(mode, {}))

    # Map config keys to preconditioner fields
    settings = {"velocity_solver": section["velocity"],
                "mass_solver": section["mass"],
                "laplacian_solver": section["laplacian"]}
    for key in ("velocity_tol", "velocity_max_iter", "chebyshev_iterations",
                "laplacian_tol", "laplacian_max_iter"):
        if key in section:
            settings[key] = section[key]
    if "mass_eig_bounds" in section:
        settings["mass_eig_bounds"] = tuple(float(v) for v in section["mass_eig_bounds"])
    settings.update(overrides)

    return PrecondConfig(**settings)

def build_krylov_config(solver_config: dict | None,
                        tol: float | None = None,
                        max_iter: int | None = None
                        ) -> KrylovConfig:
    """Function building the outer Krylov stopping rule; explicit arguments override the config."""
    solver_config = solver_config or {}
    return KrylovConfig(tol=float(tol if tol is not None else solver_config.get("outer_tol", 1e-10)),
                        max_iter=int(max_iter if max_iter is not None else solver_config.get("max_iter", 200)))

def steps_from_exponent(dt_exp: int, t_span: float = 1.0) -> tuple[int, float]:
    """Function returning (N_t, dt) for dt = 2^-dt_exp on a time span of length t_span."""

    # Ensure a non-negative exponent
    if dt_exp < 0:
        raise ValueError(f"Time-step exponent must be non-negative, got dt_exp={dt_exp}.")

    n_t = int(round(t_span * 2 ** dt_exp))
    return n_t, t_span / n_t

def check_caps(r: int, n_t: int, caps: dict | None) -> str | None:
    """Function returning the reason a grid cell exceeds the desk-scale caps, None if it fits."""
    caps = caps or {}
    max_r = caps.get("max_r", 6)
    max_steps = caps.get("max_steps", 64)
    if r > max_r:
        return f"skipped: r={r} exceeds cap {max_r}"
    if n_t > max_steps:
        return f"skipped: N_t={n_t} exceeds cap {max_steps}"
    return None
