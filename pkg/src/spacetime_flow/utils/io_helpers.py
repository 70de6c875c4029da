"""Module providing input/output handling functions."""

import json
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from spacetime_flow.experiments import CELL_COLUMNS, CELL_DTYPES, ExperimentReport
from spacetime_flow.mesh import TriMesh

__all__ = ["read_config",
           "write_report",
           "read_report",
           "write_vtk"
           ]

_HISTORY_DTYPES = {"cell_id": "int64", "iter": "int64", "relres": "float64"}
_EIGENVALUE_DTYPES = {"cell_id": "int64", "k": "int64", "real": "float64", "imag": "float64"}

def read_config(file_path):
    """Function reading the configuration parameters from a YAML file."""

    # Read the configurations from the yaml file
    with open(file_path, encoding="utf-8") as f:
        return yaml.safe_load(f)

def _plain(value):
    """Function converting tuples and numpy scalars to plain YAML/JSON types."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value

def _sibling(path: Path, suffix: str, extension: str) -> Path:
    return path.with_name(f"{path.stem}_{suffix}{extension}")

def _records(frame: pd.DataFrame) -> list[dict]:
    # Missing values become null
    return frame.astype(object).where(frame.notna(), None).to_dict(orient="records")

def write_report(report: ExperimentReport, file_path, fmt: str = "csv") -> list[Path]:
    """Function writing an experiment report and returning the written paths.

    CSV writes the cell table to `file_path` and the residual histories,
    eigenvalues and metadata to sibling files; JSON writes a single document.
    """
    path = Path(file_path)
    path.parent.mkdir(parents=True, exist_ok=True)

    if fmt == "csv":
        # Cell table plus long-format companions
        paths = [path,
                 _sibling(path, "histories", ".csv"),
                 _sibling(path, "eigenvalues", ".csv"),
                 _sibling(path, "metadata", ".yaml")]
        report.cells[CELL_COLUMNS].to_csv(paths[0], index=False)
        report.histories.to_csv(paths[1], index=False)
        report.eigenvalues.to_csv(paths[2], index=False)
        with open(paths[3], "w", encoding="utf-8") as f:
            yaml.safe_dump({"experiment": report.experiment, "metadata": _plain(report.metadata)}, f,
                           sort_keys=False)
        return paths

    if fmt == "json":
        document = {"experiment": report.experiment,
                    "metadata": _plain(report.metadata),
                    "cells": _records(report.cells[CELL_COLUMNS]),
                    "histories": _records(report.histories),
                    "eigenvalues": _records(report.eigenvalues)}
        with open(path, "w", encoding="utf-8") as f:
            json.dump(document, f, indent=1)
        return [path]

    raise ValueError(f"Unknown report format '{fmt}', expected 'csv' or 'json'.")

def _typed_cells(cells: pd.DataFrame) -> pd.DataFrame:
    cells = cells.reindex(columns=CELL_COLUMNS).astype(CELL_DTYPES)
    cells.index.name = "cell_id"
    return cells

def read_report(file_path, fmt: str = "csv") -> ExperimentReport:
    """Function reading a report written by `write_report`."""
    path = Path(file_path)

    if fmt == "csv":
        cells = pd.read_csv(path, float_precision="round_trip", keep_default_na=True)
        histories = pd.read_csv(_sibling(path, "histories", ".csv"), float_precision="round_trip")
        eigenvalues = pd.read_csv(_sibling(path, "eigenvalues", ".csv"), float_precision="round_trip")
        meta = read_config(_sibling(path, "metadata", ".yaml"))
        return ExperimentReport(experiment=meta["experiment"],
                                cells=_typed_cells(cells),
                                histories=histories.astype(_HISTORY_DTYPES),
                                eigenvalues=eigenvalues.astype(_EIGENVALUE_DTYPES),
                                metadata=meta["metadata"])

    if fmt == "json":
        with open(path, encoding="utf-8") as f:
            document = json.load(f)
        histories = pd.DataFrame(document["histories"], columns=list(_HISTORY_DTYPES))
        eigenvalues = pd.DataFrame(document["eigenvalues"], columns=list(_EIGENVALUE_DTYPES))
        return ExperimentReport(experiment=document["experiment"],
                                cells=_typed_cells(pd.DataFrame(document["cells"], columns=CELL_COLUMNS)),
                                histories=histories.astype(_HISTORY_DTYPES),
                                eigenvalues=eigenvalues.astype(_EIGENVALUE_DTYPES),
                                metadata=document["metadata"])

    raise ValueError(f"Unknown report format '{fmt}', expected 'csv' or 'json'.")

def write_vtk(mesh: TriMesh, file_path, point_data: dict[str, np.ndarray] | None = None) -> Path:
    """Function dumping a mesh (and optional vertex fields) as legacy ASCII VTK."""
    path = Path(file_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n_v, n_t = mesh.n_vertices, mesh.n_triangles

    lines = ["# vtk DataFile Version 3.0",
             "spacetime_flow mesh",
             "ASCII",
             "DATASET UNSTRUCTURED_GRID",
             f"POINTS {n_v} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {n_t} {4 * n_t}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {n_t}")
    lines += ["5"] * n_t

    # Vertex fields, e.g. pressure
    if point_data:
        lines.append(f"POINT_DATA {n_v}")
        for name, values in point_data.items():
            if np.shape(values) != (n_v,):
                raise ValueError(f"Point field '{name}' must have {n_v} values, got shape {np.shape(values)}.")
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [f"{v:.17g}" for v in values]

    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
