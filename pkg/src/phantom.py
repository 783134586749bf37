"""
Synthetic convoluted-tube phantoms with ground-truth centerlines.

A tube of radius r with walls of thickness w is rendered around a centerline: lumen inside
r - w, wall between r - w and r, background outside, and flat wall caps at both ends. The
lumen is brighter than the wall so walls appear as valleys, as in CT with oral contrast.

Generator kinds:
    - straight: a segment along z through the volume centre
    - helix: a regular helix around the z axis
    - coil: a seeded, jittered spline along a tight helix whose neighbouring turns touch
    - custom: a spline through user-given control points
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from scipy import ndimage
from scipy.interpolate import splev, splprep
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from errors import PhantomSpecError
from export import write_curve_csv
from metrics import Curve, resample_curve
from volume_io import Volume, save_volume

logger = logging.getLogger(__name__)

CONTROL_POINTS_PER_TURN = 8


class PhantomSpec(BaseModel):
    """Phantom geometry, appearance and seed."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["straight", "helix", "coil", "custom"] = "straight"
    volume_dims: Tuple[int, int, int] = (48, 48, 110)
    spacing_mm: float = Field(2.0, gt=0)
    tube_radius_mm: float = Field(10.0, gt=0)
    wall_thickness_mm: float = Field(3.0, gt=0)
    length_mm: float = Field(180.0, gt=0)
    helix_radius_mm: Optional[float] = Field(None, gt=0)
    pitch_mm: Optional[float] = Field(None, gt=0)
    turns: float = Field(2.0, gt=0)
    jitter_mm: float = Field(1.0, ge=0)
    min_contacts: int = Field(1, ge=0)
    max_retries: int = Field(20, ge=1)
    control_points: Optional[List[Tuple[float, float, float]]] = None
    lumen_intensity: float = 200.0
    wall_intensity: float = 50.0
    background_intensity: float = 100.0
    noise_sigma: float = Field(5.0, ge=0)
    wall_fade: float = Field(0.0, ge=0, le=1)
    segmentation_error_mm: float = 0.0
    seed: int = Field(0, ge=0)

    @property
    def extent_mm(self):
        return (np.asarray(self.volume_dims) - 1) * self.spacing_mm

    @property
    def resolved_helix_radius(self):
        return self.helix_radius_mm or 2.5 * self.tube_radius_mm

    @property
    def resolved_pitch(self):
        if self.pitch_mm is not None:
            return self.pitch_mm
        # Coils default to turns whose tubes touch; helices to well separated turns
        return 2.0 * self.tube_radius_mm if self.kind == "coil" else 5.0 * self.tube_radius_mm


@dataclass
class PhantomResult:
    spec: PhantomSpec
    volume: Volume
    segmentation: Volume
    tissue: Volume
    centerline: Curve
    gt_path: Curve
    start_mm: np.ndarray
    end_mm: np.ndarray
    contacts: list = field(default_factory=list)

    def manifest(self):
        return {
            "spec": self.spec.model_dump(mode="json"),
            "start_mm": [round(float(v), 6) for v in self.start_mm],
            "end_mm": [round(float(v), 6) for v in self.end_mm],
            "gt_length_mm": round(self.gt_path.length, 6),
            "contacts": self.contacts,
        }


def load_phantom_spec(path):
    """Read a PhantomSpec from JSON; every problem is reported as PhantomSpecError."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return PhantomSpec.model_validate(data)
    except FileNotFoundError:
        raise PhantomSpecError(f"phantom spec '{path}' does not exist")
    except json.JSONDecodeError as exc:
        raise PhantomSpecError(f"phantom spec '{path}' is not valid JSON: {exc}")
    except ValidationError as exc:
        first = exc.errors()[0]
        field_name = ".".join(str(part) for part in first["loc"])
        raise PhantomSpecError(f"invalid phantom spec value for '{field_name}': {first['msg']}")


def _dense_step(spec):
    return min(0.5, spec.spacing_mm / 4.0)


def _volume_center(spec):
    return spec.extent_mm / 2.0


def _helix_points(radius, pitch, turns, center, n_points):
    theta = np.linspace(0.0, 2.0 * np.pi * turns, n_points)
    z0 = center[2] - pitch * turns / 2.0
    return np.stack(
        [
            center[0] + radius * np.cos(theta),
            center[1] + radius * np.sin(theta),
            z0 + pitch * theta / (2.0 * np.pi),
        ],
        axis=1,
    )


def _coil_points(radius, pitch, turns, center, n_points, rng, jitter_mm):
    """Helix points with slow random drifts of radius and height.

    Each drift completes half a cycle per turn, so neighbouring turns move apart or together
    by at most 2 * jitter_mm while the bend radius stays close to the helix's own.
    """
    points = _helix_points(radius, pitch, turns, center, n_points)
    theta = np.linspace(0.0, 2.0 * np.pi * turns, n_points)
    amplitude = jitter_mm * rng.uniform(0.5, 1.0, size=2)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=2)
    drift_r = amplitude[0] * np.sin(0.5 * theta + phase[0])
    points[:, 0] += drift_r * np.cos(theta)
    points[:, 1] += drift_r * np.sin(theta)
    points[:, 2] += amplitude[1] * np.sin(0.5 * theta + phase[1])
    return points


def _spline_through(control_points, step, smoothing=0.0):
    control_points = np.asarray(control_points, dtype=float)
    degree = min(3, len(control_points) - 1)
    tck, _ = splprep(control_points.T, s=smoothing, k=degree)
    dense = np.stack(splev(np.linspace(0.0, 1.0, 4000 + 400 * len(control_points)), tck), axis=1)
    return resample_curve(Curve.from_points(dense), step)


def build_centerline(spec, rng):
    """Dense, uniformly spaced centerline for the spec's generator kind."""
    step = _dense_step(spec)
    center = _volume_center(spec)
    if spec.kind == "straight":
        half = spec.length_mm / 2.0
        points = np.array([center - [0, 0, half], center + [0, 0, half]])
        return resample_curve(Curve.from_points(points), step)

    if spec.kind == "custom":
        if not spec.control_points or len(spec.control_points) < 2:
            raise PhantomSpecError("custom phantoms need at least 2 control points")
        return _spline_through(spec.control_points, step)

    radius, pitch = spec.resolved_helix_radius, spec.resolved_pitch
    if spec.kind == "helix":
        length = spec.turns * np.hypot(2.0 * np.pi * radius, pitch)
        points = _helix_points(radius, pitch, spec.turns, center, int(np.ceil(10.0 * length / step)) + 1)
        return resample_curve(Curve.from_points(points), step)

    # coil
    n_control = max(int(np.ceil(spec.turns * CONTROL_POINTS_PER_TURN)) + 1, 4)
    control = _coil_points(radius, pitch, spec.turns, center, n_control, rng, spec.jitter_mm)
    return _spline_through(control, step)


def min_bend_radius(curve):
    """Smallest radius of curvature of a uniformly sampled curve (inf for straight lines)."""
    if len(curve.points) < 5:
        return np.inf
    step = curve.length / (len(curve.points) - 1)
    tangents = np.gradient(curve.points, step, axis=0)
    tangents /= np.linalg.norm(tangents, axis=1, keepdims=True)
    curvature = np.linalg.norm(np.gradient(tangents, step, axis=0), axis=1)[2:-2]
    peak = curvature.max() if curvature.size else 0.0
    return np.inf if peak <= 1e-12 else 1.0 / peak


def find_contacts(curve, tube_radius_mm, reach_mm):
    """
    Self-contact regions of a tube: parts of the centerline that are far apart along the curve
    but closer than reach_mm in space.

    Returns:
        tuple[list[dict], float]: Contact regions sorted by arc position, and the smallest
        separation between arc-distant centerline points (inf when there is none).
    """
    points, arc = curve.points, curve.arc_length
    pairs = cKDTree(points).query_pairs(reach_mm, output_type="ndarray")
    if len(pairs):
        pairs = pairs[np.abs(arc[pairs[:, 0]] - arc[pairs[:, 1]]) > 4.0 * tube_radius_mm]
    if len(pairs) == 0:
        return [], np.inf

    separations = np.linalg.norm(points[pairs[:, 0]] - points[pairs[:, 1]], axis=1)
    # Nearest partner per point along the first index
    order = np.lexsort((separations, pairs[:, 0]))
    pairs, separations = pairs[order], separations[order]
    first = np.concatenate([[True], pairs[1:, 0] != pairs[:-1, 0]])
    pairs, separations = pairs[first], separations[first]

    midpoints = (points[pairs[:, 0]] + points[pairs[:, 1]]) / 2.0
    links = cKDTree(midpoints).query_pairs(2.0 * reach_mm / 5.0, output_type="ndarray")
    graph = coo_matrix(
        (np.ones(len(links)), (links[:, 0], links[:, 1])),
        shape=(len(midpoints), len(midpoints)),
    )
    n_regions, region = connected_components(graph, directed=False)

    contacts = []
    for index in range(n_regions):
        members = region == index
        contacts.append(
            {
                "location_mm": [round(float(v), 6) for v in midpoints[members].mean(axis=0)],
                "arc_mm": [
                    round(float(arc[pairs[members, 0]].mean()), 6),
                    round(float(arc[pairs[members, 1]].mean()), 6),
                ],
                "min_separation_mm": round(float(separations[members].min()), 6),
                "pairs": int(members.sum()),
            }
        )
    contacts.sort(key=lambda contact: contact["arc_mm"])
    return contacts, float(separations.min())


def check_geometry(spec, centerline):
    """
    Validate clearance, bend radius and lumen separation of a centerline.

    Returns:
        tuple[list[dict], str | None]: Contacts and an error message (None when valid).
    """
    r, w = spec.tube_radius_mm, spec.wall_thickness_mm
    extent = spec.extent_mm
    if np.any(centerline.points < r - 1e-9) or np.any(centerline.points > extent - r + 1e-9):
        return [], f"centerline comes closer than the tube radius ({r} mm) to the volume boundary"
    if centerline.length < 4.0 * r:
        return [], f"centerline length {centerline.length:.1f} mm is shorter than 4 tube radii"
    bend = min_bend_radius(centerline)
    if bend < 2.0 * r * (1.0 - 1e-3):
        return [], f"minimum bend radius {bend:.2f} mm is below twice the tube radius"
    contacts, closest = find_contacts(centerline, r, 2.0 * r + spec.spacing_mm)
    if closest < 2.0 * r - w:
        return contacts, f"tube parts {closest:.2f} mm apart leave less than one wall between lumens"
    return contacts, None


def _signed_distance(spec, centerline, grid_mm):
    """Signed distance to the capped tube surface (negative inside)."""
    r = spec.tube_radius_mm
    points, arc = centerline.points, centerline.arc_length
    rho, nearest = cKDTree(points).query(grid_mm)
    sdf = rho - r

    caps = (
        (nearest == 0, arc[nearest] <= 2.0 * r, points[0], points[0] - points[1]),
        (nearest == len(points) - 1, arc[nearest] >= arc[-1] - 2.0 * r, points[-1], points[-1] - points[-2]),
    )
    for at_end, near_end, tip, outward in caps:
        outward = outward / np.linalg.norm(outward)
        overshoot = (grid_mm - tip) @ outward
        beyond = at_end & (overshoot > 0)
        radial = np.sqrt(np.maximum(rho[beyond] ** 2 - overshoot[beyond] ** 2, 0.0))
        sdf[beyond] = np.maximum(radial - r, overshoot[beyond])
        zone = near_end & ~beyond
        sdf[zone] = np.maximum(sdf[zone], overshoot[zone])
    return sdf


def render_phantom(spec, centerline, contacts):
    """Render intensity, segmentation and tissue classes (0 background, 1 wall, 2 lumen)."""
    dims = tuple(spec.volume_dims)
    grid = np.indices(dims).reshape(3, -1).T * spec.spacing_mm
    sdf = _signed_distance(spec, centerline, grid).reshape(dims)

    tissue = np.zeros(dims, dtype=np.uint8)
    tissue[sdf <= 0] = 1
    tissue[sdf < -spec.wall_thickness_mm] = 2

    image = np.full(dims, spec.background_intensity, dtype=float)
    image[tissue == 1] = spec.wall_intensity
    image[tissue == 2] = spec.lumen_intensity

    if spec.wall_fade > 0 and contacts:
        wall = tissue == 1
        sites = np.array([contact["location_mm"] for contact in contacts])
        distance, _ = cKDTree(sites).query(grid[wall.ravel()])
        weight = spec.wall_fade * np.clip(1.0 - distance / spec.tube_radius_mm, 0.0, 1.0)
        image[wall] += weight * (spec.lumen_intensity - spec.wall_intensity)

    if spec.noise_sigma > 0:
        noise_rng = np.random.default_rng([spec.seed, 1])
        image += noise_rng.normal(0.0, spec.noise_sigma, size=dims)

    segmentation = sdf <= 0
    steps = int(round(abs(spec.segmentation_error_mm) / spec.spacing_mm))
    if steps:
        structure = ndimage.generate_binary_structure(3, 1)
        morph = ndimage.binary_dilation if spec.segmentation_error_mm > 0 else ndimage.binary_erosion
        segmentation = morph(segmentation, structure=structure, iterations=steps)

    spacing = (spec.spacing_mm,) * 3
    return (
        Volume(image.astype(np.float32), spacing),
        Volume(segmentation, spacing),
        Volume(tissue, spacing),
    )


def generate_phantom(spec):
    """
    Generate a phantom volume with its segmentation and ground-truth path.

    The ground-truth path is the centerline without one tube radius at each end; start and
    end are its endpoints. Coil phantoms are resampled from the seeded generator until the
    geometry is valid and holds at least min_contacts contact regions.

    Args:
        spec (PhantomSpec): Phantom description.

    Returns:
        PhantomResult: Volumes, curves and contact regions.

    Raises:
        PhantomSpecError: If the geometry violates its constraints (before rendering).
    """
    r, w = spec.tube_radius_mm, spec.wall_thickness_mm
    if not r > w > 0:
        raise PhantomSpecError("tube radius must exceed the wall thickness")

    rng = np.random.default_rng(spec.seed)
    attempts = spec.max_retries if spec.kind == "coil" else 1
    problem = None
    for attempt in range(attempts):
        centerline = build_centerline(spec, rng)
        contacts, problem = check_geometry(spec, centerline)
        if problem is None and spec.kind == "coil" and len(contacts) < spec.min_contacts:
            problem = f"{len(contacts)} contact regions, {spec.min_contacts} required"
        if problem is None:
            break
        logger.debug("phantom attempt %d rejected: %s", attempt + 1, problem)
    if problem is not None:
        raise PhantomSpecError(problem)

    volume, segmentation, tissue = render_phantom(spec, centerline, contacts)

    arc = centerline.arc_length
    inner = (arc >= r) & (arc <= arc[-1] - r)
    gt_path = Curve.from_points(centerline.points[inner])
    logger.info(
        "phantom %s: dims=%s gt_length=%.1f mm contacts=%d",
        spec.kind,
        spec.volume_dims,
        gt_path.length,
        len(contacts),
    )
    return PhantomResult(
        spec=spec,
        volume=volume,
        segmentation=segmentation,
        tissue=tissue,
        centerline=centerline,
        gt_path=gt_path,
        start_mm=gt_path.points[0],
        end_mm=gt_path.points[-1],
        contacts=contacts,
    )


def save_phantom(result, out_dir):
    """
    Write volume.nii, segmentation.nii, gt_path.csv and manifest.json.

    Returns:
        dict: Written file paths by role.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {
        "volume": save_volume(result.volume, out_dir / "volume.nii"),
        "segmentation": save_volume(result.segmentation, out_dir / "segmentation.nii"),
        "gt_path": write_curve_csv(result.gt_path.points, out_dir / "gt_path.csv"),
    }
    manifest = result.manifest()
    manifest["files"] = {role: path.name for role, path in files.items()}
    files["manifest"] = out_dir / "manifest.json"
    files["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return files
