"""Script running all-at-once space-time flow solves and their iteration-count experiments."""

import argparse
import logging
from pathlib import Path

import pandas as pd

from spacetime_flow.problems import make_problem, problem_names
from spacetime_flow.utils.introspection import get_experiment_runner, get_runner_arg_spec
from spacetime_flow.utils.io_helpers import read_config, write_report, write_vtk
from spacetime_flow.utils.preproc_helpers import build_krylov_config, build_precond_config, normalise_mode

logger = logging.getLogger(__name__)

SUBCOMMANDS = ["solve", "table1", "table2", "table3", "table4", "eigs", "inner-tol"]

def parse_args(argv=None) -> argparse.Namespace:
    """Function parsing the command line."""
    parser = argparse.ArgumentParser(prog="spacetime_flow",
                                     description="All-at-once space-time solves of incompressible flow.")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--problem", choices=problem_names())
    parser.add_argument("--r", type=int, help="mesh refinement level")
    parser.add_argument("--dt-exp", type=int, help="time step 2^-dt_exp")
    parser.add_argument("--pe", type=float, help="Peclet number of the glazing problem")
    parser.add_argument("--mode", choices=["ideal", "approx"], default="ideal")
    parser.add_argument("--tol", type=float, help="outer relative residual tolerance")
    parser.add_argument("--out", help="report path")
    parser.add_argument("--format", choices=["csv", "json"], default="csv")
    parser.add_argument("--vtk", action="store_true", help="dump the mesh as legacy VTK")
    parser.add_argument("--navier-stokes", action="store_true", help="Picard iteration for the nonlinear problem")
    parser.add_argument("--paper-pressure", dest="steady_pressure", action="store_true",
                        help="time-independent Poiseuille pressure 8(1-x)")
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)

    # Ensure a single glazing solve has its Peclet number, table runs take it from the config
    if args.subcommand == "solve" and args.problem == "glazing" and args.pe is None:
        parser.error("--problem glazing requires --pe")

    return args

def build_arg_source(args: argparse.Namespace, param_config: dict) -> dict:
    """Function collecting runner arguments from the parameter config and CLI overrides by name."""
    solver = param_config["solver"]
    section = param_config.get("experiments", {}).get(args.subcommand.replace("-", "_"), {})
    mode = normalise_mode(args.mode)

    # Config defaults, then the experiment section
    source = {"nl_tol": solver["picard"]["nl_tol"],
              "max_outer": solver["picard"]["max_outer"],
              "caps": param_config.get("caps"),
              "mode": mode,
              "problem": "cavity",
              "r": 2,
              "dt_exp": 2}

    # Outer stopping rule, the Peclet sweep has a tighter iteration cap
    krylov = build_krylov_config(solver, tol=args.tol,
                                 max_iter=solver["table2_max_iter"] if args.subcommand == "table2" else None)
    source.update(tol=krylov.tol, max_iter=krylov.max_iter)
    source.update(section)

    # Command-line overrides; single values also narrow the grids
    if args.problem is not None:
        source["problem"] = args.problem
        source["problems"] = [args.problem]
    if args.r is not None:
        source["r"] = args.r
        source["r_values"] = [args.r]
    if args.dt_exp is not None:
        source["dt_exp"] = args.dt_exp
        source["dt_exps"] = [args.dt_exp]
    if args.pe is not None:
        source["pe"] = args.pe
        source["pe_values"] = [args.pe]
    source["navier_stokes"] = args.navier_stokes
    source["steady_pressure"] = args.steady_pressure
    source["precond"] = build_precond_config(solver, mode)

    return source

def main(argv=None):
    """Function running the selected subcommand and reporting its result tables."""

    args = parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s: %(message)s")

    ################################################################################################
    ### 1. Read the inputs ###
    ################################################################################################

    # Set project root environment variable
    PROJECT_ROOT = Path(__file__).resolve().parents[2]

    # Get input and output paths from path.yaml config file
    path_config = read_config(PROJECT_ROOT / "data/config/path.yaml")

    # Get parameter configs from yaml file
    param_config = read_config(PROJECT_ROOT / path_config["input"]["param_config"])

    ################################################################################################
    ### 2. Run the experiment ###
    ################################################################################################

    # Select the runner by naming convention and fill its arguments by name
    runner = get_experiment_runner(args.subcommand)
    arg_names = get_runner_arg_spec()[runner.__name__[len("run_"):]]
    source = build_arg_source(args, param_config)
    kwargs = {name: source[name] for name in arg_names if name in source}

    report = runner(**kwargs)
    print(f"Results of '{report.experiment}':")
    with pd.option_context("display.max_rows", None, "display.width", 160):
        print(report.cells)
    for key in ("velocity_error", "pressure_error"):
        if key in report.metadata:
            print(f"{key}: {report.metadata[key]:.3e}")

    ################################################################################################
    ### 3. Write the outputs ###
    ################################################################################################

    if args.out is not None:
        for path in write_report(report, args.out, fmt=args.format):
            logger.info("Wrote %s", path)

    if args.vtk:
        pe = (source.get("pe") or 0.0) if source["problem"] == "glazing" else None
        mesh = make_problem(source["problem"], pe=pe).mesh_builder(source["r"])
        vtk_path = PROJECT_ROOT / path_config["output"]["vtk_dir"] / f"{source['problem']}_r{source['r']}.vtk"
        logger.info("Wrote %s", write_vtk(mesh, vtk_path))

    return report

if __name__ == "__main__":
    main()
