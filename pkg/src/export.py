"""
Artifact writers and readers: paths (CSV, VTK), peaks, cylinders (CSV, OBJ), graph edge
lists and JSON reports.

Floats are written with fixed precision so that repeated runs produce identical bytes.
"""

import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from cylinders import cylinder_mesh
from errors import CurveFormatError
from graph import edge_list_lines
from metrics import Curve

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.6f"
CURVE_COLUMNS = ["x_mm", "y_mm", "z_mm"]


def _prepare(path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_curve_csv(points, path, node_ids=None):
    """Write a polyline as x_mm,y_mm,z_mm[,node_id] rows."""
    path = _prepare(path)
    frame = pd.DataFrame(np.asarray(points, dtype=float).reshape(-1, 3), columns=CURVE_COLUMNS)
    if node_ids is not None:
        frame["node_id"] = np.asarray(node_ids, dtype=int)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def read_curve_csv(path):
    """
    Read a curve written by write_curve_csv (extra columns are ignored).

    Raises:
        CurveFormatError: If the file is missing, lacks coordinate columns or is malformed.
    """
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError:
        raise CurveFormatError(f"curve file '{path}' does not exist")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise CurveFormatError(f"cannot parse curve file '{path}': {exc}")

    missing = [column for column in CURVE_COLUMNS if column not in frame.columns]
    if missing:
        raise CurveFormatError(f"curve file '{path}' lacks columns {missing}")
    try:
        points = frame[CURVE_COLUMNS].to_numpy(dtype=float)
        return Curve.from_points(points)
    except ValueError as exc:
        raise CurveFormatError(f"invalid curve in '{path}': {exc}")


def write_path_vtk(points, path, title="tracked path"):
    """Legacy ASCII VTK POLYDATA with one polyline through all points."""
    path = _prepare(path)
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET POLYDATA",
        f"POINTS {len(points)} float",
    ]
    lines += [" ".join(FLOAT_FORMAT % value for value in point) for point in points]
    lines.append(f"LINES 1 {len(points) + 1}")
    lines.append(" ".join(str(v) for v in [len(points), *range(len(points))]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_peaks_csv(must_pass, path):
    """Peaks as x_mm,y_mm,z_mm,distance_mm,supervoxel_id rows."""
    path = _prepare(path)
    frame = pd.DataFrame(
        np.asarray(must_pass.peak_positions_mm, dtype=float).reshape(-1, 3), columns=CURVE_COLUMNS
    )
    frame["distance_mm"] = np.asarray(must_pass.peak_values, dtype=float)
    frame["supervoxel_id"] = np.asarray(must_pass.node_ids, dtype=int)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def write_cylinders_csv(cylinders, path):
    path = _prepare(path)
    columns = ["cx", "cy", "cz", "ax", "ay", "az", "r", "h", "inliers", "valid"]
    frame = pd.DataFrame([cylinder.to_row() for cylinder in cylinders], columns=columns)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def write_cylinders_obj(cylinders, path, segments=24):
    """Every valid cylinder as a closed triangle mesh in one OBJ file, one group each."""
    path = _prepare(path)
    lines = ["# local cylinders"]
    offset = 1
    for index, cylinder in enumerate(cylinders):
        if not cylinder.valid:
            continue
        vertices, faces = cylinder_mesh(cylinder, segments)
        lines.append(f"g cylinder_{index}")
        lines += ["v " + " ".join(FLOAT_FORMAT % value for value in vertex) for vertex in vertices]
        lines += ["f " + " ".join(str(v + offset) for v in face) for face in faces]
        offset += len(vertices)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_graph_edges(graph, path):
    path = _prepare(path)
    path.write_text(
        "# node_i node_j cost_wall cost_cyl cost_total\n" + "\n".join(edge_list_lines(graph)) + "\n",
        encoding="utf-8",
    )
    return path


def _rounded(value, digits=6):
    if isinstance(value, dict):
        return {key: _rounded(item, digits) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_rounded(item, digits) for item in value]
    if isinstance(value, (float, np.floating)):
        return round(float(value), digits)
    if isinstance(value, np.integer):
        return int(value)
    return value


def write_json(data, path):
    """Sorted-key JSON with floats rounded to 6 decimals."""
    path = _prepare(path)
    path.write_text(json.dumps(_rounded(data), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
