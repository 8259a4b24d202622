"""Field CSV / legacy-VTK output and the JSON run report."""

from __future__ import annotations

import json
import os

import numpy as np

from .config import RunConfig, config_as_dict
from .grid import Grid

__all__ = [
    "write_field",
    "read_field",
    "write_vtk",
    "build_report",
    "write_report",
]


def _region_ids(grid: Grid, region: str) -> np.ndarray:
    if region == "interior":
        return grid.interior_ids
    if region == "union":
        return np.arange(grid.n_nodes)
    if region == "exterior":
        return grid.exterior_ids
    raise ValueError(f"unknown region {region!r}")


def write_field(path: str, grid: Grid, values: np.ndarray, region: str = "interior") -> None:
    """Write one nodal field as CSV with header ``x[,y],value``.

    Rows follow node ordering (row-major, x fastest).  Floats are written
    with ``repr`` so the round trip through read_field is bit-faithful.
    ``values`` may be full-length (restricted to the region) or already
    region-length.
    """
    ids = _region_ids(grid, region)
    values = np.asarray(values, dtype=float)
    if values.shape == (grid.n_nodes,):
        values = values[ids]
    if values.shape != (ids.size,):
        raise ValueError(
            f"field has {values.size} values; region {region!r} has {ids.size} nodes"
        )
    coords = grid.coords()[ids]
    header = "x,value" if grid.dim == 1 else "x,y,value"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row, v in zip(coords, values):
            fh.write(",".join(repr(float(c)) for c in row) + "," + repr(float(v)) + "\n")


def read_field(path: str):
    """Read a field CSV; returns (coords (n, dim), values (n,))."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        ncols = len(header.split(","))
        if ncols not in (2, 3):
            raise ValueError(f"unrecognized field header {header!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[1] != ncols:
        raise ValueError(
            f"row width {data.shape[1]} does not match header {header!r}"
        )
    return data[:, : ncols - 1], data[:, ncols - 1]


def write_vtk(path: str, grid: Grid, fields: dict, region: str = "interior") -> None:
    """Legacy-VTK STRUCTURED_POINTS export (2D), one SCALARS block per field."""
    if grid.dim != 2:
        raise ValueError("VTK export supports 2D grids only")
    ids = _region_ids(grid, region)
    n_ax = grid.n_axis_interior if region == "interior" else grid.n_axis
    origin = 0.0 if region == "interior" else -grid.layer * grid.h
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("nlpf field export\n")
        fh.write("ASCII\n")
        fh.write("DATASET STRUCTURED_POINTS\n")
        fh.write(f"DIMENSIONS {n_ax} {n_ax} 1\n")
        fh.write(f"ORIGIN {origin} {origin} 0.0\n")
        fh.write(f"SPACING {grid.h} {grid.h} 1.0\n")
        fh.write(f"POINT_DATA {n_ax * n_ax}\n")
        for name, values in fields.items():
            values = np.asarray(values, dtype=float)
            if values.shape == (grid.n_nodes,):
                values = values[ids]
            if values.shape != (ids.size,):
                raise ValueError(f"field {name!r} does not match region {region!r}")
            fh.write(f"SCALARS {name} double 1\n")
            fh.write("LOOKUP_TABLE default\n")
            fh.write("\n".join(repr(float(v)) for v in values) + "\n")


def build_report(result=None, config: RunConfig | None = None, status: str = "ok",
                 error: str | None = None, snapshots_manifest: list | None = None) -> dict:
    """Assemble the JSON-serializable run report.

    Emitted even on failure paths: with ``result`` None only the config and
    error are reported.
    """
    report = {
        "status": status,
        "error": error,
        "resolved_config": None,
        "discretization": None,
        "diagnostics_summary": None,
        "invariants": None,
        "snapshots": snapshots_manifest or [],
    }
    cfg = config if config is not None else (result.config if result else None)
    if cfg is not None:
        report["resolved_config"] = config_as_dict(cfg)
    if result is None:
        return report

    grid = result.grid
    d = result.diagnostics
    report["discretization"] = {
        "h": grid.h,
        "h_requested": grid.h_requested,
        "n_cells": grid.n_cells,
        "layer": grid.layer,
        "n_interior": grid.n_interior,
        "n_exterior": int(grid.exterior_ids.size),
        "n_steps": result.n_steps,
        "T_mismatch": result.t_mismatch,
        "snapshot_levels": [int(k) for k in result.snapshot_levels],
    }

    def _mx(key):
        arr = d.get(key)
        if arr is None:
            return None
        arr = arr[np.isfinite(arr)] if arr.dtype.kind == "f" else arr
        return float(np.max(arr)) if len(arr) else None

    bound_min = d["bound_min"][np.isfinite(d["bound_min"])]
    bound_violation = None
    if len(bound_min):
        bound_violation = float(
            max(
                np.maximum(-bound_min, 0.0).max(),
                np.maximum(d["bound_max"][np.isfinite(d["bound_max"])] - 1.0, 0.0).max(),
            )
        )
    energies = d["energy_J_new"] - d["energy_J_prev"]
    energies = energies[np.isfinite(energies)]
    descent_violation = float(energies.max()) if len(energies) else None

    summary = {
        "pdas_iters_max": int(d["pdas_iters"].max()) if len(d["pdas_iters"]) else 0,
        "pdas_iters_total": int(d["pdas_iters"].sum()),
        "non_converged_steps": result.non_converged_steps,
        "comp_residual_max": _mx("comp_residual"),
        "bound_violation_max": bound_violation,
        "enthalpy_drift_max": _mx("enthalpy_drift"),
        "enthalpy_scale": d.get("enthalpy_scale"),
        "energy_descent_violation_max": descent_violation,
        "proj_residual_max": _mx("proj_residual"),
        "runtime_seconds": result.runtime_seconds,
    }
    report["diagnostics_summary"] = summary

    scale = d.get("enthalpy_scale") or 1.0
    inv = {}
    if bound_violation is not None:
        inv["bounds"] = bool(bound_violation <= 1e-12)
    if summary["comp_residual_max"] is not None:
        inv["complementarity"] = bool(summary["comp_residual_max"] <= 1e-10)
    if summary["enthalpy_drift_max"] is not None:
        inv["enthalpy"] = bool(summary["enthalpy_drift_max"] <= 1e-10 * scale)
    if descent_violation is not None and cfg is not None and cfg.pdas.convolution_mode == "implicit":
        inv["energy_descent"] = bool(descent_violation <= 1e-12)
    if summary["proj_residual_max"] is not None:
        inv["projection_consistency"] = bool(summary["proj_residual_max"] <= 1e-8)
    inv["pdas_converged"] = not result.non_converged_steps
    report["invariants"] = inv
    if status == "ok" and (not all(inv.values())):
        report["status"] = "invariant-failure"
    return report


def write_report(path: str, report: dict) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
