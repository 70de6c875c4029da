"""Module providing functions to test introspection.py"""

from types import SimpleNamespace

import pytest

from spacetime_flow import experiments, problems
from spacetime_flow.utils.introspection import (
    get_experiment_runner,
    get_problem_builder,
    get_runner_arg_spec,
)

def test_get_runner_arg_spec():
    """Test that every runner is listed under its tag with its argument names."""
    arg_spec = get_runner_arg_spec()

    assert set(arg_spec) == {"solve", "table1", "table2_peclet", "table3_navier_stokes",
                             "table4_ratio", "inner_tolerance_sweep", "eigs_figure"}
    assert arg_spec["table1"][:3] == ("problems", "r_values", "dt_exps")
    assert "caps" in arg_spec["eigs_figure"]

@pytest.mark.parametrize("tag, runner", [("table1", experiments.run_table1),
                                         ("table2", experiments.run_table2_peclet),
                                         ("table3", experiments.run_table3_navier_stokes),
                                         ("table4", experiments.run_table4_ratio),
                                         ("eigs", experiments.run_eigs_figure),
                                         ("inner-tol", experiments.run_inner_tolerance_sweep),
                                         ("solve", experiments.run_solve)])
def test_get_experiment_runner(tag, runner):
    """Test that CLI tags resolve to their runners by naming convention."""
    assert get_experiment_runner(tag) is runner

def test_get_experiment_runner_ambiguous_or_missing():
    """Test that a missing or ambiguous tag raises NotImplementedError."""
    def run_table5_a():
        pass

    def run_table5_b():
        pass

    module = SimpleNamespace(run_table5_a=run_table5_a, run_table5_b=run_table5_b)

    with pytest.raises(NotImplementedError):
        get_experiment_runner("table5", module=module)
    with pytest.raises(NotImplementedError):
        get_experiment_runner("table9")

def test_get_problem_builder():
    """Test that problem tags resolve to their private builders."""
    assert get_problem_builder("glazing") is problems._make_glazing_problem

    with pytest.raises(NotImplementedError):
        get_problem_builder("channel")
