"""
Stage orchestration shared by the command line and the tests.

Stages run in order: resample, filters, supervoxels, graph, snap, sampling, cylinders, tsp,
stitch. Every stage is timed and logs a one-line summary; failures are re-raised as
PipelineError carrying the stage name.
"""

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from tqdm import tqdm

from config import MODES
from cylinders import fit_local_cylinders
from errors import PipelineError, TubeTrackError
from export import (
    write_curve_csv,
    write_cylinders_csv,
    write_cylinders_obj,
    write_graph_edges,
    write_json,
    write_path_vtk,
    write_peaks_csv,
)
from filters import binarize_walls, euclidean_distance_transform, meijering_valley, wall_obstacles
from graph import build_rag, compute_cylinder_costs, compute_wall_costs, update_total_costs
from metrics import Curve, evaluate_curves
from phantom import PhantomSpec, generate_phantom
from sampling import MustPassNodeSet, sample_must_pass
from supervoxel import slic_supervoxels, snap_to_supervoxel
from tsp import build_tsp_graph, solve_open_tsp, stitch_full_path
from utils import progress_enabled, resolve_threads, stage_timer
from volume_io import Volume, crop_volume, resample_isotropic, resample_mask, save_volume

logger = logging.getLogger(__name__)


@dataclass
class TrackingResult:
    """Tracked path plus every intermediate product of a pipeline run."""

    mode: str
    path: object
    order: list
    start_node: int
    end_node: int
    volume: Volume
    segmentation: Volume
    walls: Volume
    walls_bin: Volume
    labeling: object
    graph: object
    must_pass: MustPassNodeSet
    cylinders: list
    tsp_graph: object
    distance: Optional[Volume] = None
    summaries: dict = field(default_factory=dict)

    @property
    def curve(self):
        return Curve.from_points(self.path.points_mm)

    def report(self):
        """JSON-ready run summary; contains no timings."""
        return {
            "mode": self.mode,
            "start_node": self.start_node,
            "end_node": self.end_node,
            "path": {
                "nodes": len(self.path),
                "length_mm": self.curve.length,
                "total_cost": self.path.total_cost,
                "order": list(self.order),
            },
            "must_pass": len(self.must_pass),
            "dropped_duplicate_peaks": self.must_pass.dropped_duplicates,
            "valid_cylinders": sum(c.valid for c in self.cylinders),
            "stages": self.summaries,
        }


@contextmanager
def _stage(name, summaries):
    info = summaries.setdefault(name, {})
    try:
        with stage_timer(name, info) as details:
            yield details
    except PipelineError:
        raise
    except (TubeTrackError, ValueError) as exc:
        raise PipelineError(name, str(exc)) from exc


def prepare_inputs(volume, segmentation, config):
    """Crop along z when configured and resample volume and mask to isotropic voxels."""
    if config.volume.crop_z_mm is not None:
        volume = crop_volume(volume, z_mm=config.volume.crop_z_mm)
        segmentation = crop_volume(segmentation, z_mm=config.volume.crop_z_mm)
    spacing = config.volume.spacing_mm
    volume = resample_isotropic(volume, spacing)
    segmentation = resample_mask(
        segmentation.with_data(np.asarray(segmentation.data) > 0), spacing
    )
    if not volume.same_grid(segmentation):
        raise ValueError(
            f"segmentation grid {segmentation.dims} does not match volume grid {volume.dims}"
        )
    if not np.asarray(segmentation.data).any():
        raise ValueError("segmentation is empty")
    return volume, segmentation


def run_tracking(volume, segmentation, start_mm, end_mm, config, threads=None):
    """
    Track a path from start to end through the segmented tube.

    Modes: "sp" finds the plain shortest path on wall costs, "tsp" adds must-pass nodes with
    lam forced to 0, "tsp+cyl" adds the cylindrical cost term as well.

    Args:
        volume (Volume): Intensity volume.
        segmentation (Volume): Binary mask on the volume's grid.
        start_mm, end_mm (array-like): Physical start and end points.
        config (PipelineConfig): Effective configuration.
        threads (int | None): Worker cap; falls back to config.threads, then the environment.

    Returns:
        TrackingResult: Path and intermediate products.

    Raises:
        PipelineError: Naming the failing stage.
    """
    mode = config.mode
    summaries = {}
    threads = resolve_threads(threads or config.threads)

    with _stage("resample", summaries) as info:
        volume, segmentation = prepare_inputs(volume, segmentation, config)
        info["dims"] = list(volume.dims)
        info["mask_voxels"] = int(np.asarray(segmentation.data).sum())

    with _stage("filters", summaries) as info:
        walls = meijering_valley(volume, config.filters.scales_mm, config.filters.bright_lumen)
        walls_bin = binarize_walls(walls, config.filters.threshold)
        info["wall_voxels"] = int(np.asarray(walls_bin.data).sum())

    with _stage("supervoxels", summaries) as info:
        labeling = slic_supervoxels(
            walls,
            segmentation,
            config.supervoxel.target_volume_mm3,
            config.supervoxel.compactness,
            config.supervoxel.max_iter,
        )
        info["supervoxels"] = labeling.count

    with _stage("graph", summaries) as info:
        graph = compute_wall_costs(build_rag(labeling, config.graph.lam), walls)
        info["nodes"] = graph.number_of_nodes()
        info["edges"] = graph.number_of_edges()

    with _stage("snap", summaries) as info:
        start_node = snap_to_supervoxel(labeling, start_mm)
        end_node = snap_to_supervoxel(labeling, end_mm)
        for name, point, node in (("start", start_mm, start_node), ("end", end_mm, end_node)):
            if node == 0:
                raise ValueError(f"{name} point {list(point)} lies outside the segmentation")
        if start_node == end_node:
            raise ValueError("start and end points fall into the same supervoxel")
        info["start_node"] = start_node
        info["end_node"] = end_node

    distance = None
    with _stage("sampling", summaries) as info:
        if mode == "sp":
            must_pass = MustPassNodeSet()
        else:
            obstacles = wall_obstacles(segmentation, walls_bin)
            distance = euclidean_distance_transform(obstacles, volume.spacing_mm)
            must_pass = sample_must_pass(
                distance, labeling, config.sampling.theta_v_mm, config.sampling.theta_d_mm
            )
        info["must_pass"] = len(must_pass)
        info["dropped_duplicates"] = must_pass.dropped_duplicates

    with _stage("cylinders", summaries) as info:
        cylinders = []
        if mode == "tsp+cyl":
            cylinders = fit_local_cylinders(
                walls_bin,
                must_pass,
                patch_mm=config.cylinders.patch_mm,
                height_mm=config.cylinders.height_mm,
                iterations=config.cylinders.iterations,
                inlier_tol_mm=config.cylinders.inlier_tol_mm,
                radius_range=config.cylinders.radius_range,
                min_support=config.cylinders.min_support,
                seed=config.seed,
                threads=threads,
            )
            graph = compute_cylinder_costs(graph, cylinders, config.graph.default_cyl_cost)
            graph = update_total_costs(graph, config.graph.lam)
        else:
            # Plain wall costs reduce the graph to the baseline shortest-path problem
            graph = update_total_costs(graph, 0.0)
        info["fitted"] = len(cylinders)
        info["valid"] = sum(c.valid for c in cylinders)
        info["lam"] = graph.graph["lam"]

    with _stage("tsp", summaries) as info:
        tsp_graph = build_tsp_graph(graph, must_pass, start_node, end_node, config.tsp.delta_mm)
        order = solve_open_tsp(tsp_graph, config.tsp.dummy_cost, config.tsp.improve)
        info["tsp_nodes"] = len(tsp_graph.nodes)
        info["cached_paths"] = len(tsp_graph.paths)

    with _stage("stitch", summaries) as info:
        path = stitch_full_path(graph, tsp_graph, order)
        info["path_nodes"] = len(path)

    return TrackingResult(
        mode=mode,
        path=path,
        order=order,
        start_node=start_node,
        end_node=end_node,
        volume=volume,
        segmentation=segmentation,
        walls=walls,
        walls_bin=walls_bin,
        labeling=labeling,
        graph=graph,
        must_pass=must_pass,
        cylinders=cylinders,
        tsp_graph=tsp_graph,
        distance=distance,
        summaries=summaries,
    )


def evaluate(path_points, gt, metrics_config):
    """Metrics of a tracked polyline against a ground-truth Curve."""
    pred = path_points if isinstance(path_points, Curve) else Curve.from_points(path_points)
    return evaluate_curves(
        pred,
        gt,
        jump_tol_mm=metrics_config.jump_tol_mm,
        dist_tol_mm=metrics_config.dist_tol_mm,
        resample_mm=metrics_config.resample_mm,
    )


def save_outputs(result, out_dir, config, graph_edges=False, save_maps=False, metrics=None):
    """
    Write the artifacts of a tracking run into out_dir.

    Returns:
        dict: Written paths by name.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {
        "path.csv": write_curve_csv(result.path.points_mm, out_dir / "path.csv", result.path.node_ids),
        "path.vtk": write_path_vtk(result.path.points_mm, out_dir / "path.vtk"),
        "peaks.csv": write_peaks_csv(result.must_pass, out_dir / "peaks.csv"),
        "cylinders.csv": write_cylinders_csv(result.cylinders, out_dir / "cylinders.csv"),
        "cylinders.obj": write_cylinders_obj(result.cylinders, out_dir / "cylinders.obj"),
    }
    if graph_edges:
        files["graph_edges.txt"] = write_graph_edges(result.graph, out_dir / "graph_edges.txt")
    if save_maps:
        files["walls.nii"] = save_volume(result.walls, out_dir / "walls.nii")
        files["supervoxels.nii"] = save_volume(result.labeling.labels, out_dir / "supervoxels.nii")
        if result.distance is not None:
            files["distance.nii"] = save_volume(result.distance, out_dir / "distance.nii")

    report = result.report()
    if metrics is not None:
        report["metrics"] = metrics.to_dict()
    files["report.json"] = write_json(report, out_dir / "report.json")
    effective = out_dir / "effective_config.json"
    effective.write_text(config.to_json(), encoding="utf-8")
    files["effective_config.json"] = effective
    return files


def comparison_spec(seed, **overrides):
    """Contact phantom used by run_comparison: a three-turn coil with faded contact walls."""
    values = {"kind": "coil", "turns": 3, "wall_fade": 0.6, "seed": seed}
    values.update(overrides)
    return PhantomSpec(**values)


def run_comparison(seeds, config, modes=MODES, phantom_overrides=None):
    """
    Track every mode on seeded contact phantoms and collect metrics.

    Returns:
        pandas.DataFrame: One row per (seed, mode) with c2c_mm, max_len_no_error_mm,
        gt_length_mm and must_pass.
    """
    rows = []
    for seed in tqdm(list(seeds), desc="phantoms", disable=not progress_enabled()):
        phantom = generate_phantom(comparison_spec(seed, **(phantom_overrides or {})))
        for mode in modes:
            run_config = config.model_copy(update={"mode": mode, "seed": seed})
            result = run_tracking(
                phantom.volume, phantom.segmentation, phantom.start_mm, phantom.end_mm, run_config
            )
            report = evaluate(result.path.points_mm, phantom.gt_path, config.metrics)
            rows.append(
                {
                    "seed": seed,
                    "mode": mode,
                    "c2c_mm": report.c2c_mm,
                    "max_len_no_error_mm": report.max_len_no_error_mm,
                    "gt_length_mm": report.gt_length_mm,
                    "must_pass": len(result.must_pass),
                }
            )
    return pd.DataFrame(rows, columns=["seed", "mode", "c2c_mm", "max_len_no_error_mm", "gt_length_mm", "must_pass"])


def summarize_comparison(frame):
    """Per-mode medians plus how often tsp+cyl tracks at least as far as tsp."""
    medians = frame.groupby("mode", sort=False)[["c2c_mm", "max_len_no_error_mm"]].median()
    pivot = frame.pivot(index="seed", columns="mode", values="max_len_no_error_mm")
    wins = None
    if {"tsp", "tsp+cyl"} <= set(pivot.columns):
        wins = int((pivot["tsp+cyl"] >= pivot["tsp"]).sum())
    return medians, wins
