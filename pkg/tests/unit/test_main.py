"""Module providing functions to test main.py"""

from unittest.mock import MagicMock, patch

import pandas as pd
import pytest

from spacetime_flow.experiments import ExperimentReport
from spacetime_flow.main import build_arg_source, main, parse_args

PARAM_CONFIG = {
    "solver": {"outer_tol": 1e-10, "max_iter": 200, "table2_max_iter": 100,
               "picard": {"nl_tol": 1e-9, "max_outer": 20}},
    "caps": {"max_r": 6, "max_steps": 64},
    "experiments": {"table1": {"problems": ["cavity", "glazing"], "r_values": [2, 3],
                               "dt_exps": [2, 3], "pe": 10.0}},
}

def _report(name="table1"):
    cells = pd.DataFrame({"problem": ["cavity"], "outer_iters": [21]})
    return ExperimentReport(experiment=name, cells=cells, histories=pd.DataFrame(),
                            eigenvalues=pd.DataFrame())

def test_parse_args_defaults():
    """Test the default mode and format of the command line."""
    args = parse_args(["table1"])

    assert args.mode == "ideal"
    assert args.format == "csv"
    assert args.problem is None and not args.navier_stokes

def test_parse_args_rejects_unknown_subcommand():
    """Test that argparse exits on an unknown subcommand."""
    with pytest.raises(SystemExit):
        parse_args(["table9"])

def test_build_arg_source_config_defaults():
    """Test that the experiment section fills the runner arguments."""
    source = build_arg_source(parse_args(["table1"]), PARAM_CONFIG)

    assert source["problems"] == ["cavity", "glazing"]
    assert source["r_values"] == [2, 3]
    assert source["tol"] == 1e-10
    assert source["precond"].velocity_solver == "lu"

def test_build_arg_source_cli_overrides():
    """Test that single CLI values narrow the grids and the mode selects the inner solvers."""
    args = parse_args(["table1", "--problem", "backstep", "--r", "3", "--dt-exp", "4",
                       "--tol", "1e-8", "--mode", "approx"])
    source = build_arg_source(args, PARAM_CONFIG)

    assert source["problems"] == ["backstep"] and source["problem"] == "backstep"
    assert source["r_values"] == [3] and source["dt_exps"] == [4]
    assert source["tol"] == 1e-8
    assert source["mode"] == "approximate"
    assert source["precond"].mass_solver == "chebyshev"

def test_parse_args_time_independent_pressure_flag():
    """Test that the time-independent Poiseuille pressure flag reaches the runner arguments."""
    args = parse_args(["solve", "--problem", "poiseuille", "--paper-pressure"])

    assert args.steady_pressure
    assert build_arg_source(args, PARAM_CONFIG)["steady_pressure"]
    assert not parse_args(["solve"]).steady_pressure

def test_parse_args_glazing_solve_needs_peclet():
    """Test that a single glazing solve without --pe is a usage error, and accepted with it."""
    with pytest.raises(SystemExit):
        parse_args(["solve", "--problem", "glazing"])

    assert parse_args(["solve", "--problem", "glazing", "--pe", "10"]).pe == 10.0
    assert parse_args(["table1", "--problem", "glazing"]).pe is None

def test_build_arg_source_table2_iteration_cap():
    """Test the tighter iteration cap of the Peclet sweep."""
    assert build_arg_source(parse_args(["table2"]), PARAM_CONFIG)["max_iter"] == 100

@patch("spacetime_flow.main.write_report")
@patch("spacetime_flow.main.get_experiment_runner")
def test_main_dispatches_runner(mock_get_runner, mock_write_report, tmp_path):
    """Test that main fills the runner arguments by name and writes the report."""
    runner = MagicMock(return_value=_report())
    runner.__name__ = "run_table1"
    mock_get_runner.return_value = runner
    mock_write_report.return_value = [tmp_path / "t1.csv"]

    report = main(["table1", "--problem", "cavity", "--r", "1", "--dt-exp", "1",
                   "--out", str(tmp_path / "t1.csv")])

    kwargs = runner.call_args.kwargs
    assert kwargs["problems"] == ["cavity"]
    assert kwargs["r_values"] == [1] and kwargs["dt_exps"] == [1]
    assert set(kwargs) <= {"problems", "r_values", "dt_exps", "mode", "pe", "tol", "max_iter",
                           "precond", "caps"}
    assert report.experiment == "table1"
    mock_write_report.assert_called_once_with(report, str(tmp_path / "t1.csv"), fmt="csv")
