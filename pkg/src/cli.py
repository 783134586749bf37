"""
Command-line interface for tubular path tracking.

Subcommands:
    track    track a path between two points of a segmented volume
    eval     compare a tracked path CSV with a ground-truth CSV
    phantom  generate a synthetic tube phantom
    compare  run sp, tsp and tsp+cyl on seeded contact phantoms
"""

import logging
from pathlib import Path
from typing import List, Optional

import typer
from rich.console import Console
from rich.table import Table

from config import load_config
from errors import TubeTrackError
from export import read_curve_csv, write_json
from phantom import PhantomSpec, generate_phantom, load_phantom_spec, save_phantom
from pipeline import evaluate, run_comparison, run_tracking, save_outputs, summarize_comparison
from utils import sanitize_filename, setup_logging
from volume_io import load_volume

logger = logging.getLogger(__name__)

app = typer.Typer(
    help="Track paths through convoluted tubular structures in 3D volumes.",
    add_completion=False,
    no_args_is_help=True,
)
console = Console()

ConfigOption = typer.Option(None, "--config", "-c", help="JSON config file, one object per namespace.")
SetOption = typer.Option(None, "--set", help="Override a config value, e.g. graph.lam=0.")
LogLevelOption = typer.Option(None, "--log-level", help="DEBUG, INFO, WARNING or ERROR.")


def _parse_numbers(text, name, count=3):
    try:
        values = [float(part) for part in text.split(",")]
    except ValueError:
        values = []
    if len(values) != count:
        raise typer.BadParameter(f"{name} must be {count} comma-separated numbers, got '{text}'")
    return values


def _fail(exc):
    console.print(f"[bold red]Error:[/bold red] {exc}")
    raise typer.Exit(code=1)


def _metrics_table(report, title="Metrics"):
    table = Table(title=title)
    table.add_column("metric")
    table.add_column("value", justify="right")
    table.add_row("C2C (mm)", f"{report.c2c_mm:.2f}")
    table.add_row("pred -> GT (mm)", f"{report.pred_to_gt_mm:.2f}")
    table.add_row("GT -> pred (mm)", f"{report.gt_to_pred_mm:.2f}")
    table.add_row("max length w/o error (mm)", f"{report.max_len_no_error_mm:.1f}")
    table.add_row("GT length (mm)", f"{report.gt_length_mm:.1f}")
    return table


@app.command()
def track(
    volume: Path = typer.Argument(..., help="Volume (.nii, .nii.gz or .raw/.json)."),
    segmentation: Path = typer.Argument(..., help="Binary segmentation on the volume grid."),
    start: str = typer.Option(..., help="Start point x,y,z in mm."),
    end: str = typer.Option(..., help="End point x,y,z in mm."),
    out_dir: Path = typer.Option(Path("out"), "--out-dir", "-o", help="Output directory."),
    mode: Optional[str] = typer.Option(None, help="sp, tsp or tsp+cyl."),
    gt: Optional[Path] = typer.Option(None, help="Ground-truth path CSV; adds metrics to the report."),
    crop_z: Optional[str] = typer.Option(None, "--crop-z", help="Physical z range z0,z1 in mm."),
    threads: Optional[int] = typer.Option(None, min=1, help="Maximum worker threads."),
    graph_edges: bool = typer.Option(False, "--graph-edges", help="Write graph_edges.txt."),
    save_maps: bool = typer.Option(False, "--save-maps", help="Write wall, distance and supervoxel maps."),
    config: Optional[Path] = ConfigOption,
    overrides: Optional[List[str]] = SetOption,
    log_level: Optional[str] = LogLevelOption,
):
    """Track a path from start to end and write the artifacts."""
    setup_logging(log_level)
    start_mm, end_mm = _parse_numbers(start, "start"), _parse_numbers(end, "end")
    extra = list(overrides or [])
    if mode is not None:
        extra.append(f'mode="{mode}"')
    if crop_z is not None:
        z0, z1 = _parse_numbers(crop_z, "--crop-z", count=2)
        extra.append(f"volume.crop_z_mm=[{z0}, {z1}]")
    if threads is not None:
        extra.append(f"threads={threads}")

    try:
        cfg = load_config(config, extra)
        result = run_tracking(load_volume(volume), load_volume(segmentation), start_mm, end_mm, cfg)
        report = evaluate(result.path.points_mm, read_curve_csv(gt), cfg.metrics) if gt else None
        save_outputs(result, out_dir, cfg, graph_edges=graph_edges, save_maps=save_maps, metrics=report)
    except TubeTrackError as exc:
        _fail(exc)

    console.print(
        f"Tracked {len(result.path)} supervoxels through {len(result.must_pass)} must-pass nodes "
        f"({cfg.mode}); outputs in '{out_dir}'"
    )
    if report is not None:
        console.print(_metrics_table(report))


@app.command("eval")
def evaluate_command(
    pred: Path = typer.Argument(..., help="Predicted path CSV (x_mm,y_mm,z_mm)."),
    gt: Path = typer.Argument(..., help="Ground-truth path CSV."),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Write the report as JSON."),
    config: Optional[Path] = ConfigOption,
    overrides: Optional[List[str]] = SetOption,
    log_level: Optional[str] = LogLevelOption,
):
    """Compute C2C distance and maximum error-free length of a path."""
    setup_logging(log_level)
    try:
        cfg = load_config(config, overrides)
        report = evaluate(read_curve_csv(pred), read_curve_csv(gt), cfg.metrics)
    except TubeTrackError as exc:
        _fail(exc)
    if out is not None:
        write_json(report.to_dict(), out)
    console.print(_metrics_table(report))


@app.command()
def phantom(
    spec: Optional[Path] = typer.Argument(None, help="Phantom spec JSON; defaults when omitted."),
    out_dir: Path = typer.Option(Path("phantom"), "--out-dir", "-o", help="Output directory."),
    kind: Optional[str] = typer.Option(None, help="straight, helix, coil or custom."),
    seed: Optional[int] = typer.Option(None, min=0, help="Random seed."),
    log_level: Optional[str] = LogLevelOption,
):
    """Generate a synthetic tube phantom with its ground-truth path."""
    setup_logging(log_level)
    try:
        phantom_spec = load_phantom_spec(spec) if spec else PhantomSpec()
        updates = {key: value for key, value in (("kind", kind), ("seed", seed)) if value is not None}
        if updates:
            phantom_spec = PhantomSpec.model_validate({**phantom_spec.model_dump(), **updates})
        result = generate_phantom(phantom_spec)
        save_phantom(result, out_dir)
    except (TubeTrackError, ValueError) as exc:
        _fail(exc)

    start = ",".join(f"{v:.3f}" for v in result.start_mm)
    end = ",".join(f"{v:.3f}" for v in result.end_mm)
    console.print(
        f"Phantom '{phantom_spec.kind}' written to '{out_dir}' "
        f"({len(result.contacts)} contact regions, GT {result.gt_path.length:.1f} mm)"
    )
    console.print(f"--start {start} --end {end}")


@app.command()
def compare(
    seeds: int = typer.Option(10, min=1, help="Number of seeded contact phantoms."),
    first_seed: int = typer.Option(0, min=0, help="Seed of the first phantom."),
    out_dir: Path = typer.Option(Path("comparison"), "--out-dir", "-o", help="Output directory."),
    segmentation_error: float = typer.Option(0.0, help="Dilate (> 0) or erode (< 0) masks, mm."),
    name: str = typer.Option("comparison", help="Stem of the CSV file."),
    config: Optional[Path] = ConfigOption,
    overrides: Optional[List[str]] = SetOption,
    log_level: Optional[str] = LogLevelOption,
):
    """Compare sp, tsp and tsp+cyl on contact phantoms."""
    setup_logging(log_level)
    try:
        cfg = load_config(config, overrides)
        frame = run_comparison(
            range(first_seed, first_seed + seeds),
            cfg,
            phantom_overrides={"segmentation_error_mm": segmentation_error},
        )
    except TubeTrackError as exc:
        _fail(exc)

    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / sanitize_filename(f"{name}.csv")
    frame.to_csv(csv_path, index=False, float_format="%.6f", lineterminator="\n")

    medians, wins = summarize_comparison(frame)
    table = Table(title=f"Contact phantoms ({seeds} seeds)")
    table.add_column("mode")
    table.add_column("median C2C (mm)", justify="right")
    table.add_column("median max length w/o error (mm)", justify="right")
    for mode, row in medians.iterrows():
        table.add_row(mode, f"{row['c2c_mm']:.2f}", f"{row['max_len_no_error_mm']:.1f}")
    console.print(table)
    if wins is not None:
        console.print(f"tsp+cyl tracks at least as far as tsp on {wins}/{seeds} seeds")
    console.print(f"Results written to '{csv_path}'")


if __name__ == "__main__":
    app()
