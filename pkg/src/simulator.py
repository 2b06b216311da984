"""Quasistatic tactile-array touches on union-of-spheres objects.

A planar square grid of taxel spheres hangs from a rigid substrate on
vertical springs. The substrate starts just clear of the object and is
lowered by a fixed press depth; each taxel is pushed up along the substrate
normal until it no longer penetrates the object or the support plane, and
its reading is the spring force at that displacement.
"""

import hashlib
import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from scipy.spatial import cKDTree

from src.errors import CoverageError, DegenerateInputError, InvalidInputError

logger = logging.getLogger(__name__)

SENSOR_RANGE = (0.0, 0.02)
DEFAULT_EXTENT = 256.0
DEFAULT_STIFFNESS = 0.001
DEFAULT_PRESS_DEPTH = 11.0
DEFAULT_NOISE_SIGMA = 0.001
START_CLEARANCE = 1.0
ARRAY_RESOLUTIONS = (64, 32, 16, 8, 4, 2, 1)

_REST_TOLERANCE = 1e-9
_SPHERE_CHUNK = 1024


class ModelSource(str, Enum):
    MESH = "mesh"
    PRIMITIVE = "primitive"


class PrimitiveKind(str, Enum):
    BOX = "box"
    SPHERE = "sphere"
    CYLINDER = "cylinder"


@dataclass(frozen=True)
class TaxelArray:
    """Geometry and spring constant of a planar square taxel grid (lengths in mm)."""

    rows: int
    cols: int
    pitch: float
    taxel_radius: float
    stiffness: float
    substrate_extent: float

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise InvalidInputError(f"Array needs at least one row and column, got {self.rows}x{self.cols}")
        if self.stiffness <= 0:
            raise InvalidInputError(f"Stiffness must be positive, got {self.stiffness}")
        if self.pitch <= 0 or self.taxel_radius <= 0:
            raise InvalidInputError("Pitch and taxel radius must be positive")
        for count in (self.rows, self.cols):
            if not math.isclose(self.pitch * count, self.substrate_extent, rel_tol=1e-9):
                raise InvalidInputError(
                    f"pitch {self.pitch} x {count} taxels does not span extent {self.substrate_extent}"
                )

    @classmethod
    def square(
        cls,
        resolution: int,
        extent: float = DEFAULT_EXTENT,
        stiffness: float = DEFAULT_STIFFNESS,
    ) -> "TaxelArray":
        """Build a resolution x resolution array whose taxel spheres tile the substrate."""
        if resolution < 1:
            raise InvalidInputError(f"Resolution must be at least 1, got {resolution}")
        pitch = extent / resolution
        return cls(
            rows=resolution,
            cols=resolution,
            pitch=pitch,
            taxel_radius=pitch / 2.0,
            stiffness=stiffness,
            substrate_extent=extent,
        )

    @property
    def n(self) -> int:
        return self.rows * self.cols

    def with_stiffness(self, stiffness: float) -> "TaxelArray":
        return replace(self, stiffness=stiffness)

    def taxel_positions(self) -> np.ndarray:
        """Lateral (x, y) taxel centers, row-major; rows run along y, columns along x."""
        half = self.substrate_extent / 2.0
        ys = (np.arange(self.rows) + 0.5) * self.pitch - half
        xs = (np.arange(self.cols) + 0.5) * self.pitch - half
        grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
        return np.column_stack([grid_x.ravel(), grid_y.ravel()])

    def to_dict(self) -> Dict[str, float]:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "pitch": self.pitch,
            "taxel_radius": self.taxel_radius,
            "stiffness": self.stiffness,
            "substrate_extent": self.substrate_extent,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, float]) -> "TaxelArray":
        return cls(
            rows=int(data["rows"]),
            cols=int(data["cols"]),
            pitch=float(data["pitch"]),
            taxel_radius=float(data["taxel_radius"]),
            stiffness=float(data["stiffness"]),
            substrate_extent=float(data["substrate_extent"]),
        )


def array_family(
    extent: float = DEFAULT_EXTENT,
    stiffness: float = DEFAULT_STIFFNESS,
    resolutions: Sequence[int] = ARRAY_RESOLUTIONS,
) -> List[TaxelArray]:
    """Square arrays sharing one overall extent, finest first."""
    return [TaxelArray.square(r, extent, stiffness) for r in sorted(resolutions, reverse=True)]


@dataclass(frozen=True, eq=False)
class SphereModel:
    """An object approximated as a union of spheres resting on the plane z = 0."""

    centers: np.ndarray
    radii: np.ndarray
    name: str
    source: ModelSource = ModelSource.PRIMITIVE

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float)
        radii = np.asarray(self.radii, dtype=float)
        if centers.ndim != 2 or centers.shape[1] != 3 or len(centers) == 0:
            raise InvalidInputError("A sphere model needs a non-empty (S, 3) array of centers")
        if radii.shape != (len(centers),):
            raise InvalidInputError("Need exactly one radius per sphere")
        if np.any(radii <= 0):
            raise InvalidInputError("Sphere radii must be positive")
        lowest = float(np.min(centers[:, 2] - radii))
        if abs(lowest) > _REST_TOLERANCE:
            raise InvalidInputError(f"Model '{self.name}' does not rest on z = 0 (lowest point {lowest})")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "source", ModelSource(self.source))

    def __len__(self) -> int:
        return len(self.radii)

    def top(self) -> float:
        return float(np.max(self.centers[:, 2] + self.radii))

    def lateral_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        lo = np.min(self.centers[:, :2] - self.radii[:, None], axis=0)
        hi = np.max(self.centers[:, :2] + self.radii[:, None], axis=0)
        return lo, hi

    def centered(self) -> "SphereModel":
        """Move the lateral bounding-box center onto the array axis."""
        lo, hi = self.lateral_bounds()
        shift = np.zeros(3)
        shift[:2] = -(lo + hi) / 2.0
        return replace(self, centers=self.centers + shift)

    def transformed(
        self, rotation_deg: float = 0.0, offset_row: float = 0.0, offset_col: float = 0.0
    ) -> "SphereModel":
        """Rotate about the array's central (z) axis, then offset along columns (x) and rows (y)."""
        theta = math.radians(rotation_deg)
        cos, sin = math.cos(theta), math.sin(theta)
        rotation = np.array([[cos, -sin, 0.0], [sin, cos, 0.0], [0.0, 0.0, 1.0]])
        centers = self.centers @ rotation.T
        centers[:, 0] += offset_col
        centers[:, 1] += offset_row
        return replace(self, centers=centers)


@dataclass(frozen=True)
class TouchConfig:
    """Pose perturbation and press depth of a single touch."""

    offset_row: float = 0.0
    offset_col: float = 0.0
    rotation_deg: float = 0.0
    press_depth: float = DEFAULT_PRESS_DEPTH
    seed: int = 0

    def __post_init__(self):
        if self.press_depth <= 0:
            raise InvalidInputError(f"Press depth must be positive, got {self.press_depth}")
        if not 0.0 <= self.rotation_deg < 360.0:
            raise InvalidInputError(f"Rotation must lie in [0, 360), got {self.rotation_deg}")


@dataclass(frozen=True, eq=False)
class TactileFrame:
    """
    Per-taxel force readings (N) of one touch, row-major over the grid.

    Reconstructed frames are estimates and may hold small negative values.
    """

    values: np.ndarray
    array: TaxelArray
    label: int = 0
    touch: TouchConfig = field(default_factory=TouchConfig)
    noisy: bool = False
    perturbation_index: int = 0
    object_name: str = ""
    reconstructed: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.array.n,):
            raise InvalidInputError(
                f"Frame has {values.size} readings, array has {self.array.n} taxels"
            )
        if not self.reconstructed:
            low = SENSOR_RANGE[0]
            high = SENSOR_RANGE[1] if self.noisy else np.inf
            if np.any(values < low) or np.any(values > high):
                raise InvalidInputError(
                    f"Readings outside [{low}, {high}] for a {'noisy' if self.noisy else 'noiseless'} frame"
                )
        object.__setattr__(self, "values", values)

    def grid(self) -> np.ndarray:
        return self.values.reshape(self.array.rows, self.array.cols)


def spheres_from_vertices(vertices: Sequence[Sequence[float]], name: str) -> SphereModel:
    """
    Convert mesh vertices into a union-of-spheres model.

    Every vertex becomes a sphere center; all spheres share a radius of twice
    the mean nearest-neighbor distance between vertices. The model is shifted
    vertically so that it rests on z = 0.

    Args:
        vertices: (V, 3) vertex coordinates in mm
        name: Label of the resulting model

    Returns:
        SphereModel: One sphere per vertex

    Raises:
        InvalidInputError: If fewer than two vertices are given
        DegenerateInputError: If two vertices coincide
    """
    points = np.asarray(vertices, dtype=float)
    if points.ndim != 2 or points.shape[1] != 3:
        raise InvalidInputError("Vertices must be an (V, 3) array")
    if len(points) < 2:
        raise InvalidInputError(f"Need at least 2 vertices, got {len(points)}")

    distances, _ = cKDTree(points).query(points, k=2)
    nearest = distances[:, 1]
    if np.any(nearest == 0.0):
        raise DegenerateInputError(f"Mesh '{name}' has coincident vertices")

    radius = 2.0 * float(nearest.mean())
    centers = points.copy()
    centers[:, 2] -= centers[:, 2].min() - radius
    return SphereModel(
        centers=centers,
        radii=np.full(len(centers), radius),
        name=name,
        source=ModelSource.MESH,
    )


def _axis_points(length: float, spacing: float) -> np.ndarray:
    if length <= 0:
        return np.zeros(1)
    intervals = max(1, math.ceil(length / spacing - 1e-12))
    return np.linspace(-length / 2.0, length / 2.0, intervals + 1)


def _ring(radius: float, z: float, spacing: float) -> np.ndarray:
    if radius <= 0:
        return np.array([[0.0, 0.0, z]])
    count = max(1, math.ceil(2.0 * math.pi * radius / spacing - 1e-12))
    angles = 2.0 * math.pi * np.arange(count) / count
    return np.column_stack(
        [radius * np.cos(angles), radius * np.sin(angles), np.full(count, z)]
    )


def _box_lattice(dims: Tuple[float, float, float], spacing: float) -> np.ndarray:
    axes = [_axis_points(max(d - 2.0 * spacing, 0.0), spacing) for d in dims]
    grids = np.meshgrid(*axes, indexing="ij")
    index = np.meshgrid(*[np.arange(len(a)) for a in axes], indexing="ij")
    on_surface = np.zeros(grids[0].shape, dtype=bool)
    for idx, axis in zip(index, axes):
        on_surface |= (idx == 0) | (idx == len(axis) - 1)
    return np.column_stack([g[on_surface] for g in grids])


def _sphere_lattice(radius: float, spacing: float) -> np.ndarray:
    inner = radius - spacing
    if inner <= 1e-12:
        return np.zeros((1, 3))
    bands = max(1, math.ceil(math.pi * inner / spacing - 1e-12))
    rings = [
        _ring(inner * math.sin(phi), inner * math.cos(phi), spacing)
        for phi in np.linspace(0.0, math.pi, bands + 1)
    ]
    return np.vstack(rings)


def _cylinder_lattice(radius: float, height: float, spacing: float) -> np.ndarray:
    inner_radius = max(radius - spacing, 0.0)
    levels = _axis_points(max(height - 2.0 * spacing, 0.0), spacing)
    rings = [_ring(inner_radius, z, spacing) for z in levels]
    if inner_radius > 1e-12:
        steps = max(1, math.ceil(inner_radius / spacing - 1e-12))
        # The outermost cap ring coincides with the side rings.
        cap_radii = np.linspace(0.0, inner_radius, steps + 1)[:-1]
        for z in (levels[0], levels[-1]):
            rings.extend(_ring(r, z, spacing) for r in cap_radii)
    return np.vstack(rings)


def make_primitive(
    kind: Union[PrimitiveKind, str],
    dimensions: Sequence[float],
    sphere_spacing: float,
    name: Optional[str] = None,
) -> SphereModel:
    """
    Cover the surface of a box, sphere or upright cylinder with a sphere lattice.

    Sphere centers sit on the primitive's surface inset by the spacing, on a
    lattice no coarser than the spacing, and every sphere has radius equal to
    the spacing, so the outer envelope of the union tracks the true surface.

    Args:
        kind: box, sphere or cylinder
        dimensions: (x, y, z) for a box, (radius,) for a sphere, (radius, height) for a cylinder
        sphere_spacing: Lattice spacing and sphere radius in mm
        name: Model label; defaults to the kind

    Returns:
        SphereModel: The primitive resting on z = 0, laterally centered on the origin

    Raises:
        InvalidInputError: On non-positive or mis-sized dimensions
        CoverageError: If the spacing exceeds the smallest dimension (the radius for a sphere)
    """
    kind = PrimitiveKind(kind)
    dims = tuple(float(d) for d in dimensions)
    expected = {PrimitiveKind.BOX: 3, PrimitiveKind.SPHERE: 1, PrimitiveKind.CYLINDER: 2}[kind]
    if len(dims) != expected:
        raise InvalidInputError(f"A {kind.value} needs {expected} dimensions, got {len(dims)}")
    if sphere_spacing <= 0 or any(d <= 0 for d in dims):
        raise InvalidInputError("Dimensions and sphere spacing must be positive")

    # An inset axis shorter than the spacing collapses onto the primitive's mid-plane.
    if sphere_spacing > min(dims):
        raise CoverageError(
            f"Spacing {sphere_spacing} mm is too coarse for a {kind.value} with dimensions {dims}"
        )

    if kind is PrimitiveKind.BOX:
        centers = _box_lattice(dims, sphere_spacing)
    elif kind is PrimitiveKind.SPHERE:
        centers = _sphere_lattice(dims[0], sphere_spacing)
    else:
        centers = _cylinder_lattice(dims[0], dims[1], sphere_spacing)

    centers = np.unique(np.round(centers, 9), axis=0)
    centers[:, 2] -= centers[:, 2].min() - sphere_spacing
    return SphereModel(
        centers=centers,
        radii=np.full(len(centers), float(sphere_spacing)),
        name=name or kind.value,
        source=ModelSource.PRIMITIVE,
    )


def _warn_if_outside(array: TaxelArray, model: SphereModel) -> None:
    lo, hi = model.lateral_bounds()
    half = array.substrate_extent / 2.0
    if np.any(lo < -half) or np.any(hi > half):
        logger.warning(
            "Object '%s' extends beyond the %.1f mm substrate footprint", model.name, array.substrate_extent
        )


def simulate_touch(
    array: TaxelArray,
    model: SphereModel,
    touch: TouchConfig,
    label: int = 0,
    clearance: float = START_CLEARANCE,
) -> TactileFrame:
    """
    Press the array onto a model and return the noiseless quasistatic frame.

    Each taxel moves only along the substrate normal; its displacement is the
    smallest upward shift that clears every model sphere and the support plane
    once the substrate has been lowered by ``touch.press_depth`` from a start
    height ``clearance`` above the object's top. Readings are stiffness times
    displacement, so taxels that touch nothing read 0.
    """
    placed = model.transformed(touch.rotation_deg, touch.offset_row, touch.offset_col)
    _warn_if_outside(array, placed)

    taxel_radius = array.taxel_radius
    start = placed.top() + clearance + taxel_radius
    height = start - touch.press_depth

    # Support plane: a taxel center can never sink below one radius.
    required = np.full(array.n, taxel_radius)

    reachable = placed.centers[:, 2] + placed.radii + taxel_radius > height
    centers = placed.centers[reachable]
    reach = placed.radii[reachable] + taxel_radius
    positions = array.taxel_positions()

    for start_idx in range(0, len(centers), _SPHERE_CHUNK):
        chunk = slice(start_idx, start_idx + _SPHERE_CHUNK)
        dx = positions[:, 0:1] - centers[chunk, 0][None, :]
        dy = positions[:, 1:2] - centers[chunk, 1][None, :]
        gap = reach[chunk][None, :] ** 2 - (dx * dx + dy * dy)
        lift = np.where(
            gap > 0, centers[chunk, 2][None, :] + np.sqrt(np.maximum(gap, 0.0)), -np.inf
        )
        required = np.maximum(required, lift.max(axis=1))

    displacement = np.maximum(required - height, 0.0)
    return TactileFrame(
        values=array.stiffness * displacement,
        array=array,
        label=label,
        touch=touch,
        noisy=False,
        object_name=model.name,
    )


def add_noise(frame: TactileFrame, sigma: float, seed: int) -> TactileFrame:
    """
    Add seeded zero-mean Gaussian noise and clip to the sensor range.

    Args:
        frame: A noiseless frame
        sigma: Noise standard deviation in N
        seed: Generator seed; identical seeds give bit-identical output

    Returns:
        TactileFrame: The noisy frame

    Raises:
        InvalidInputError: If sigma is negative or the frame is already noisy
    """
    if sigma < 0:
        raise InvalidInputError(f"Noise sigma must be non-negative, got {sigma}")
    if frame.noisy:
        raise InvalidInputError("Frame already carries sensor noise")
    rng = np.random.default_rng(seed)
    values = np.clip(frame.values + rng.normal(0.0, sigma, size=frame.values.size), *SENSOR_RANGE)
    return replace(frame, values=values, noisy=True, touch=replace(frame.touch, seed=seed))


def derive_seed(base_seed: int, object_index: int, perturbation_index: int) -> int:
    """Stable 64-bit per-frame seed."""
    digest = hashlib.blake2b(
        f"{base_seed}:{object_index}:{perturbation_index}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


def perturbation_grid(
    row_offsets: Sequence[float], col_offsets: Sequence[float], rotations: Sequence[float]
) -> List[Tuple[float, float, float]]:
    """All (row offset, column offset, rotation) triples; the list position is the perturbation index."""
    return list(itertools.product(row_offsets, col_offsets, rotations))


def _noisy_touch(
    array: TaxelArray,
    model: SphereModel,
    label: int,
    perturbation_index: int,
    touch: TouchConfig,
    sigma: float,
) -> TactileFrame:
    frame = simulate_touch(array, model, touch, label=label)
    frame = replace(frame, perturbation_index=perturbation_index)
    return add_noise(frame, sigma, touch.seed)


def generate_dataset(
    array: TaxelArray,
    models: Sequence[SphereModel],
    row_offsets: Sequence[float],
    col_offsets: Sequence[float],
    rotations: Sequence[float],
    sigma: float = DEFAULT_NOISE_SIGMA,
    base_seed: int = 0,
    press_depth: float = DEFAULT_PRESS_DEPTH,
    n_jobs: int = 1,
) -> List[TactileFrame]:
    """
    Touch every model at every perturbation and add sensor noise.

    Frames are ordered object-major, then by perturbation index. The label of
    a frame is the index of its model. Per-frame noise seeds come from
    ``derive_seed`` so the output is identical for any ``n_jobs``.
    """
    if not models or not row_offsets or not col_offsets or not rotations:
        raise InvalidInputError("Models and every perturbation list must be non-empty")

    perturbations = perturbation_grid(row_offsets, col_offsets, rotations)
    jobs = []
    for label, model in enumerate(models):
        for index, (row, col, rotation) in enumerate(perturbations):
            touch = TouchConfig(
                offset_row=float(row),
                offset_col=float(col),
                rotation_deg=float(rotation),
                press_depth=press_depth,
                seed=derive_seed(base_seed, label, index),
            )
            jobs.append(delayed(_noisy_touch)(array, model, label, index, touch, sigma))

    frames = Parallel(n_jobs=n_jobs)(jobs)
    logger.info(
        "Simulated %d frames (%d objects x %d perturbations) on a %dx%d array",
        len(frames),
        len(models),
        len(perturbations),
        array.rows,
        array.cols,
    )
    return frames


def mean_frames(frames: Sequence[TactileFrame]) -> Dict[int, np.ndarray]:
    """Mean tactile image per label."""
    grouped: Dict[int, List[np.ndarray]] = {}
    for frame in frames:
        grouped.setdefault(frame.label, []).append(frame.grid())
    return {label: np.mean(grids, axis=0) for label, grids in sorted(grouped.items())}


DESK_ROSTER = (
    ("flat_box", PrimitiveKind.BOX, (160.0, 100.0, 40.0)),
    ("tall_box", PrimitiveKind.BOX, (70.0, 70.0, 120.0)),
    ("long_box", PrimitiveKind.BOX, (200.0, 50.0, 60.0)),
    ("small_ball", PrimitiveKind.SPHERE, (28.0,)),
    ("medium_ball", PrimitiveKind.SPHERE, (60.0,)),
    ("large_ball", PrimitiveKind.SPHERE, (100.0,)),
    ("upright_can", PrimitiveKind.CYLINDER, (40.0, 100.0)),
    ("flat_tin", PrimitiveKind.CYLINDER, (55.0, 40.0)),
)

REFERENCE_PRIMITIVES = (
    ("cracker_box", PrimitiveKind.BOX, (210.0, 160.0, 60.0)),
    ("cereal_box", PrimitiveKind.BOX, (240.0, 180.0, 70.0)),
    ("jello_box", PrimitiveKind.BOX, (90.0, 75.0, 35.0)),
    ("granola_bars_box", PrimitiveKind.BOX, (160.0, 90.0, 50.0)),
    ("racquetball", PrimitiveKind.SPHERE, (28.5,)),
    ("volleyball", PrimitiveKind.SPHERE, (105.0,)),
    ("basketball", PrimitiveKind.SPHERE, (120.0,)),
    ("gravy_can", PrimitiveKind.CYLINDER, (42.0, 100.0)),
    ("tuna_can", PrimitiveKind.CYLINDER, (43.0, 33.0)),
    ("salmon_can", PrimitiveKind.CYLINDER, (38.0, 60.0)),
)


def _roster(entries, sphere_spacing: float) -> List[SphereModel]:
    return [make_primitive(kind, dims, sphere_spacing, name=name) for name, kind, dims in entries]


def desk_roster(sphere_spacing: float = 4.0) -> List[SphereModel]:
    """Eight procedural primitives: three boxes, three balls, two cans."""
    return _roster(DESK_ROSTER, sphere_spacing)


def reference_roster(sphere_spacing: float = 4.0) -> List[SphereModel]:
    """The primitive objects of the reference object set; mesh objects are loaded separately."""
    return _roster(REFERENCE_PRIMITIVES, sphere_spacing)
