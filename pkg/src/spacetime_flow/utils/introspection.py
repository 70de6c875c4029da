"""Module providing runtime introspection helper functions."""

import inspect
from typing import Any, Callable

__all__ = ["get_runner_arg_spec", "get_experiment_runner", "get_problem_builder"]

def get_runner_arg_spec(module: object = None,
                        prefix: str = "run_"
                        ) -> dict[str, tuple[str, ...]]:
    """Function returning a dict of all experiment runner argument specifications."""

    # Import experiments module if not passed as input
    if module is None:
        from spacetime_flow import experiments
        module = experiments

    # Initialize dict to be filled
    arg_spec = {}

    # Iterate over all functions of the module
    for name, obj in inspect.getmembers(module, inspect.isfunction):
        # Only consider public functions with the naming pattern
        if name.startswith(prefix):
            # Extract the experiment tag from the function name
            tag = name[len(prefix):]

            # Collect all argument names in a tuple
            arg_spec[tag] = tuple(inspect.signature(obj).parameters)

    return arg_spec

def get_experiment_runner(tag: str,
                          module: object = None
                          ) -> Callable[..., Any]:
    """Function returning the experiment runner for a CLI tag, using the naming convention.

    A tag selects `run_<tag>` exactly or the unique runner whose name starts
    with it, so `table2` resolves to `run_table2_peclet`. Hyphens map to
    underscores.
    """

    # Import experiments module if not passed as input
    if module is None:
        from spacetime_flow import experiments
        module = experiments

    # Candidate runner names for the tag
    stem = f"run_{tag.replace('-', '_')}"
    runners = dict(inspect.getmembers(module, inspect.isfunction))
    if stem in runners:
        return runners[stem]
    matches = [name for name in runners if name.startswith(stem)]

    # Raise error if no unique runner is available
    if len(matches) != 1:
        raise NotImplementedError(f"No experiment runner found for tag='{tag}'")

    return runners[matches[0]]

def get_problem_builder(tag: str,
                        module: object = None
                        ) -> Callable[..., Any]:
    """Function returning the problem builder for a given tag, using the naming convention."""

    # Import problems module if not passed as input
    if module is None:
        from spacetime_flow import problems
        module = problems

    # Build the function name from the problem tag
    func_name = f"_make_{tag}_problem"

    # Get the function object from the module
    func = getattr(module, func_name, None)

    # Raise error if function is not available
    if func is None:
        raise NotImplementedError(f"No problem builder found for problem='{tag}'")

    return func
