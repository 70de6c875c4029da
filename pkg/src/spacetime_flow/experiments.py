"""Module providing the experiment drivers producing iteration, ratio and eigenvalue tables."""

import logging
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Callable, Sequence

import numpy as np
import pandas as pd

from spacetime_flow.fem import interpolate_pressure, interpolate_velocity
from spacetime_flow.linalg import KrylovConfig, SingularMatrixError
from spacetime_flow.picard import picard_solve
from spacetime_flow.problems import ProblemSpec, exact_solution, grid_peclet, make_problem
from spacetime_flow.spacetime import (
    ConvergenceError,
    PrecondConfig,
    build_spacetime_system,
    preconditioned_schur_eigs,
    sequential_time_stepping,
    solve_all_at_once,
)
from spacetime_flow.utils.preproc_helpers import (
    build_precond_config,
    check_caps,
    normalise_mode,
    steps_from_exponent,
)

__all__ = ["CELL_COLUMNS",
           "ExperimentReport",
           "run_solve",
           "run_table1",
           "run_table2_peclet",
           "run_table3_navier_stokes",
           "run_table4_ratio",
           "run_inner_tolerance_sweep",
           "run_eigs_figure"
           ]

logger = logging.getLogger(__name__)

CELL_COLUMNS = ["problem", "r", "dt", "pe", "mode", "outer_iters", "mean_inner_iters",
                "ratio", "converged", "status"]
CELL_DTYPES = {"problem": "string", "r": "int64", "dt": "float64", "pe": "float64",
               "mode": "string", "outer_iters": "Int64", "mean_inner_iters": "float64",
               "ratio": "float64", "converged": "bool", "status": "string"}
HISTORY_COLUMNS = ["cell_id", "iter", "relres"]
EIGENVALUE_COLUMNS = ["cell_id", "k", "real", "imag"]

@dataclass
class ExperimentReport:
    """Result tables of an experiment.

    `cells` has one row per grid cell, indexed by cell_id; non-converged cells
    carry outer_iters = -1. `histories` and `eigenvalues` are long-format
    tables keyed by cell_id.
    """
    experiment: str
    cells: pd.DataFrame
    histories: pd.DataFrame
    eigenvalues: pd.DataFrame
    metadata: dict = field(default_factory=dict)

class _ReportBuilder:
    """Collects cell rows, residual histories and eigenvalues while a grid runs."""

    def __init__(self, experiment: str, metadata: dict):
        self.experiment = experiment
        self.metadata = metadata
        self.rows: list[dict] = []
        self.histories: list[pd.DataFrame] = []
        self.eigenvalues: list[pd.DataFrame] = []

    def add(self,
            problem: str,
            r: int,
            dt: float,
            pe: float,
            mode: str,
            outer_iters: int | None = None,
            mean_inner_iters: float = float("nan"),
            ratio: float = float("nan"),
            converged: bool = True,
            status: str = "ok",
            history: Sequence[float] | None = None,
            eigenvalues: dict[int, np.ndarray] | None = None
            ) -> int:
        cell_id = len(self.rows)
        self.rows.append({"problem": problem, "r": r, "dt": dt, "pe": pe, "mode": mode,
                          "outer_iters": outer_iters if converged or outer_iters is None else -1,
                          "mean_inner_iters": mean_inner_iters, "ratio": ratio,
                          "converged": converged, "status": status})
        if history is not None:
            self.histories.append(pd.DataFrame({"cell_id": cell_id,
                                                "iter": np.arange(len(history)),
                                                "relres": np.asarray(history, dtype=np.float64)}))
        for k, values in (eigenvalues or {}).items():
            self.eigenvalues.append(pd.DataFrame({"cell_id": cell_id, "k": k,
                                                  "real": values.real, "imag": values.imag}))
        return cell_id

    def build(self) -> ExperimentReport:
        cells = pd.DataFrame(self.rows, columns=CELL_COLUMNS).astype(CELL_DTYPES)
        cells.index.name = "cell_id"
        histories = (pd.concat(self.histories, ignore_index=True) if self.histories
                     else pd.DataFrame(columns=HISTORY_COLUMNS))
        eigenvalues = (pd.concat(self.eigenvalues, ignore_index=True) if self.eigenvalues
                       else pd.DataFrame(columns=EIGENVALUE_COLUMNS))
        return ExperimentReport(experiment=self.experiment,
                                cells=cells,
                                histories=histories.astype({"cell_id": "int64", "iter": "int64",
                                                            "relres": "float64"}),
                                eigenvalues=eigenvalues.astype({"cell_id": "int64", "k": "int64",
                                                                "real": "float64", "imag": "float64"}),
                                metadata=self.metadata)

def _metadata(experiment: str, **settings) -> dict:
    meta = {"experiment": experiment,
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds")}
    for key, value in settings.items():
        meta[key] = asdict(value) if hasattr(value, "__dataclass_fields__") else value
    return meta

def _guarded(builder: _ReportBuilder,
             cell: dict,
             run: Callable[[], dict],
             caps: dict | None,
             n_t: int
             ) -> None:
    """Function running one grid cell, recording skipped and failed cells instead of raising."""

    # Desk-scale caps
    reason = check_caps(cell["r"], n_t, caps)
    if reason is not None:
        logger.warning("Cell %s %s", cell, reason)
        builder.add(**cell, converged=False, status=reason)
        return

    try:
        results = run()
    except MemoryError:
        logger.warning("Cell %s skipped: out of memory", cell)
        builder.add(**cell, converged=False, status="skipped: out of memory")
        return
    except (SingularMatrixError, ConvergenceError) as exc:
        logger.warning("Cell %s failed: %s", cell, exc)
        builder.add(**cell, outer_iters=-1, converged=False, status=f"failed: {exc}")
        return

    if not results.get("converged", True):
        results.setdefault("status", "not converged")
    builder.add(**cell, **results)

def _problem(name: str, pe: float | None, steady_pressure: bool = False, amplitude: float = 1.0) -> ProblemSpec:
    return make_problem(name, pe=pe if name == "glazing" else None,
                        steady_pressure=steady_pressure, amplitude=amplitude)

def _cell_pe(name: str, pe: float | None) -> float:
    return float(pe) if name == "glazing" and pe is not None else 0.0

def _linear_cell(problem: ProblemSpec,
                 r: int,
                 n_t: int,
                 precond: PrecondConfig,
                 krylov: KrylovConfig
                 ) -> dict:
    """Function solving one all-at-once system and summarising its report."""
    system = build_spacetime_system(problem, r, n_t)
    _, report = solve_all_at_once(system, precond, krylov)
    inner = report.inner_iterations
    return {"outer_iters": report.iterations,
            "mean_inner_iters": float(np.mean(inner)) if inner else float("nan"),
            "converged": report.converged,
            "history": report.residual_history}

def run_solve(problem: str,
              r: int,
              dt_exp: int,
              pe: float | None = None,
              mode: str = "ideal",
              tol: float = 1e-10,
              max_iter: int = 200,
              precond: PrecondConfig | None = None,
              navier_stokes: bool = False,
              nl_tol: float = 1e-9,
              max_outer: int = 20,
              steady_pressure: bool = False,
              caps: dict | None = None
              ) -> ExperimentReport:
    """Function solving a single discretisation, optionally by Picard iteration.

    For a problem with an analytic solution the maximum nodal errors of
    velocity and pressure at the final time are added to the metadata.
    """
    mode = normalise_mode(mode)
    precond = precond or build_precond_config(None, mode)
    krylov = KrylovConfig(tol=tol, max_iter=max_iter)
    n_t, dt = steps_from_exponent(dt_exp)
    spec = _problem(problem, pe, steady_pressure=steady_pressure)
    builder = _ReportBuilder("solve", _metadata("solve", tol=tol, max_iter=max_iter, precond=precond,
                                                navier_stokes=navier_stokes))
    cell = {"problem": problem, "r": r, "dt": dt, "pe": _cell_pe(problem, pe), "mode": mode}

    def run():
        if navier_stokes:
            result = picard_solve(spec, r, n_t, precond, krylov, nl_tol=nl_tol, max_outer=max_outer)
            system, solution = result.system, result.solution
            summary = {"outer_iters": result.outer_iterations,
                       "mean_inner_iters": result.mean_inner_iterations,
                       "converged": result.converged,
                       "history": result.residual_history}
        else:
            system = build_spacetime_system(spec, r, n_t)
            solution, report = solve_all_at_once(system, precond, krylov)
            summary = {"outer_iters": report.iterations,
                       "mean_inner_iters": (float(np.mean(report.inner_iterations))
                                            if report.inner_iterations else float("nan")),
                       "converged": report.converged,
                       "history": report.residual_history}

        # Nodal errors against the analytic solution at the final time
        if spec.exact is not None:
            t_end = spec.t0 + n_t * system.dt
            u_exact = interpolate_velocity(system.spaces, lambda x, y, t: exact_solution(spec, x, y, t)[:2], t_end)
            p_exact = interpolate_pressure(system.spaces, lambda x, y, t: exact_solution(spec, x, y, t)[2], t_end)
            builder.metadata["velocity_error"] = float(np.max(np.abs(solution.u[-1] - u_exact)))
            builder.metadata["pressure_error"] = float(np.max(np.abs(solution.p[-1] - p_exact)))
        builder.metadata["unknowns"] = system.size
        return summary

    _guarded(builder, cell, run, caps, n_t)
    return builder.build()

def run_table1(problems: Sequence[str],
               r_values: Sequence[int],
               dt_exps: Sequence[int],
               mode: str = "ideal",
               pe: float = 10.0,
               tol: float = 1e-10,
               max_iter: int = 200,
               precond: PrecondConfig | None = None,
               caps: dict | None = None
               ) -> ExperimentReport:
    """Function computing outer (F)GMRES iteration counts over problems, meshes and time steps."""
    mode = normalise_mode(mode)
    precond = precond or build_precond_config(None, mode)
    krylov = KrylovConfig(tol=tol, max_iter=max_iter)
    builder = _ReportBuilder("table1", _metadata("table1", mode=mode, tol=tol, max_iter=max_iter,
                                                 pe=pe, precond=precond))

    for name in problems:
        spec = _problem(name, pe)
        for r in r_values:
            for dt_exp in dt_exps:
                n_t, dt = steps_from_exponent(dt_exp)
                cell = {"problem": name, "r": r, "dt": dt, "pe": _cell_pe(name, pe), "mode": mode}
                logger.info("table1: %s r=%d dt=2^-%d", name, r, dt_exp)
                _guarded(builder, cell, lambda: _linear_cell(spec, r, n_t, precond, krylov), caps, n_t)

    return builder.build()

def run_table2_peclet(r_values: Sequence[int],
                      dt_exps: Sequence[int],
                      pe_values: Sequence[float],
                      tol: float = 1e-10,
                      max_iter: int = 100,
                      mode: str = "ideal",
                      precond: PrecondConfig | None = None,
                      caps: dict | None = None
                      ) -> ExperimentReport:
    """Function computing iteration counts of the glazing problem over Peclet numbers.

    Cells that miss the tolerance within max_iter are data, stored with
    outer_iters = -1. The grid Peclet number dx*Pe is recorded in `ratio`.
    """
    mode = normalise_mode(mode)
    precond = precond or build_precond_config(None, mode)
    krylov = KrylovConfig(tol=tol, max_iter=max_iter)
    builder = _ReportBuilder("table2", _metadata("table2", mode=mode, tol=tol, max_iter=max_iter,
                                                 precond=precond))

    for pe in pe_values:
        spec = _problem("glazing", pe)
        for r in r_values:
            for dt_exp in dt_exps:
                n_t, dt = steps_from_exponent(dt_exp)
                cell = {"problem": "glazing", "r": r, "dt": dt, "pe": float(pe), "mode": mode}
                logger.info("table2: Pe=%g r=%d dt=2^-%d", pe, r, dt_exp)

                def run(spec=spec, r=r, n_t=n_t):
                    results = _linear_cell(spec, r, n_t, precond, krylov)
                    results["ratio"] = grid_peclet(spec, 2.0 ** -r)
                    return results

                _guarded(builder, cell, run, caps, n_t)

    return builder.build()

def run_inner_tolerance_sweep(problems: Sequence[str],
                              r: int,
                              dt_exp: int,
                              inner_tols: Sequence[float],
                              tol: float = 1e-10,
                              max_iter: int = 200,
                              inner_max_iter: int = 200,
                              pe: float = 10.0,
                              caps: dict | None = None
                              ) -> ExperimentReport:
    """Function computing outer FGMRES counts for inner velocity solves of varying tolerance.

    The inner tolerance of each cell is stored in `ratio`; one extra cell per
    problem uses per-step LU (mode 'ideal') as the exact reference.
    """
    krylov = KrylovConfig(tol=tol, max_iter=max_iter)
    n_t, dt = steps_from_exponent(dt_exp)
    builder = _ReportBuilder("inner_tol", _metadata("inner_tol", tol=tol, max_iter=max_iter,
                                                    inner_max_iter=inner_max_iter))

    for name in problems:
        spec = _problem(name, pe)
        cell = {"problem": name, "r": r, "dt": dt, "pe": _cell_pe(name, pe), "mode": "ideal"}
        _guarded(builder, cell, lambda: _linear_cell(spec, r, n_t, PrecondConfig(), krylov), caps, n_t)

        for inner_tol in inner_tols:
            precond = PrecondConfig(velocity_solver="krylov", velocity_tol=float(inner_tol),
                                    velocity_max_iter=inner_max_iter)
            cell = {"problem": name, "r": r, "dt": dt, "pe": _cell_pe(name, pe), "mode": "inner_krylov"}
            logger.info("inner-tol: %s inner tolerance %.0e", name, inner_tol)

            def run(precond=precond, inner_tol=inner_tol):
                results = _linear_cell(spec, r, n_t, precond, krylov)
                results["ratio"] = float(inner_tol)
                return results

            _guarded(builder, cell, run, caps, n_t)

    return builder.build()

def run_table4_ratio(problems: Sequence[str],
                     r_values: Sequence[int],
                     dt_exps: Sequence[int],
                     pe: float = 10.0,
                     tol: float = 1e-10,
                     max_iter: int = 200,
                     caps: dict | None = None
                     ) -> ExperimentReport:
    """Function comparing all-at-once and sequential time-stepping iteration counts.

    outer_iters holds the all-at-once count, mean_inner_iters the mean
    per-step count of sequential time-stepping, ratio their quotient.
    """
    precond = PrecondConfig()
    krylov = KrylovConfig(tol=tol, max_iter=max_iter)
    builder = _ReportBuilder("table4", _metadata("table4", tol=tol, max_iter=max_iter, pe=pe))

    for name in problems:
        spec = _problem(name, pe)
        for r in r_values:
            for dt_exp in dt_exps:
                n_t, dt = steps_from_exponent(dt_exp)
                cell = {"problem": name, "r": r, "dt": dt, "pe": _cell_pe(name, pe), "mode": "ideal"}
                logger.info("table4: %s r=%d dt=2^-%d", name, r, dt_exp)

                def run(spec=spec, r=r, n_t=n_t):
                    system = build_spacetime_system(spec, r, n_t)
                    _, report = solve_all_at_once(system, precond, krylov)
                    _, sequential = sequential_time_stepping(system, precond, krylov)
                    return {"outer_iters": report.iterations,
                            "mean_inner_iters": sequential.mean_iterations,
                            "ratio": report.iterations / sequential.mean_iterations,
                            "converged": report.converged and sequential.converged,
                            "history": report.residual_history}

                _guarded(builder, cell, run, caps, n_t)

    return builder.build()

def run_eigs_figure(pe_values: Sequence[float],
                    r_values: Sequence[int],
                    dt_exps: Sequence[int],
                    steps: str | Sequence[int] = "last",
                    caps: dict | None = None
                    ) -> ExperimentReport:
    """Function computing the eigenvalues of the preconditioned single-step Schur complement.

    The glazing problem is used throughout (Pe = 0 is the plain cavity).
    `steps` selects the time indices: "last", "all" or explicit 1-based indices.
    """
    builder = _ReportBuilder("eigs", _metadata("eigs", steps=steps if isinstance(steps, str) else list(steps)))

    for pe in pe_values:
        spec = _problem("glazing", pe)
        for r in r_values:
            for dt_exp in dt_exps:
                n_t, dt = steps_from_exponent(dt_exp)
                cell = {"problem": "glazing", "r": r, "dt": dt, "pe": float(pe), "mode": "ideal"}
                logger.info("eigs: Pe=%g r=%d dt=2^-%d", pe, r, dt_exp)

                def run(spec=spec, r=r, n_t=n_t):
                    system = build_spacetime_system(spec, r, n_t)
                    if steps == "last":
                        ks = [n_t]
                    elif steps == "all":
                        ks = list(range(1, n_t + 1))
                    else:
                        ks = [int(k) for k in steps]
                    return {"eigenvalues": {k: preconditioned_schur_eigs(system, k) for k in ks}}

                _guarded(builder, cell, run, caps, n_t)

    return builder.build()

def run_table3_navier_stokes(problems: Sequence[str],
                             r_values: Sequence[int],
                             dt_exps: Sequence[int],
                             tol: float = 1e-10,
                             max_iter: int = 200,
                             nl_tol: float = 1e-9,
                             max_outer: int = 20,
                             mode: str = "ideal",
                             precond: PrecondConfig | None = None,
                             caps: dict | None = None
                             ) -> ExperimentReport:
    """Function computing Picard outer counts and mean inner GMRES counts per Picard step."""
    mode = normalise_mode(mode)
    precond = precond or build_precond_config(None, mode)
    krylov = KrylovConfig(tol=tol, max_iter=max_iter)
    builder = _ReportBuilder("table3", _metadata("table3", mode=mode, tol=tol, nl_tol=nl_tol,
                                                 max_outer=max_outer, precond=precond))

    for name in problems:
        spec = _problem(name, None)
        for r in r_values:
            for dt_exp in dt_exps:
                n_t, dt = steps_from_exponent(dt_exp)
                cell = {"problem": name, "r": r, "dt": dt, "pe": 0.0, "mode": mode}
                logger.info("table3: %s r=%d dt=2^-%d", name, r, dt_exp)

                def run(spec=spec, r=r, n_t=n_t):
                    result = picard_solve(spec, r, n_t, precond, krylov, nl_tol=nl_tol, max_outer=max_outer)
                    return {"outer_iters": result.outer_iterations,
                            "mean_inner_iters": result.mean_inner_iterations,
                            "converged": result.converged,
                            "history": result.residual_history}

                _guarded(builder, cell, run, caps, n_t)

    return builder.build()
