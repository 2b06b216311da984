"""Experiment configuration: one JSON file per experiment, plus environment overrides."""

import dataclasses
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

from dotenv import load_dotenv

from src.compression import DEFAULT_BLOCK_SIZE
from src.errors import ConfigurationError, InvalidInputError, StorageError
from src.learn import DEFAULT_TOL
from src.simulator import (
    DEFAULT_EXTENT,
    DEFAULT_NOISE_SIGMA,
    DEFAULT_PRESS_DEPTH,
    DEFAULT_STIFFNESS,
    PrimitiveKind,
    SphereModel,
    TaxelArray,
    desk_roster,
    make_primitive,
    reference_roster,
    spheres_from_vertices,
)
from src.tools.file_operations import read_json, write_json
from src.tools.mesh_operations import load_vertices

logger = logging.getLogger(__name__)

ENV_N_JOBS = "TACTILE_N_JOBS"
ENV_OUTPUT_DIR = "TACTILE_OUTPUT_DIR"

RosterSpec = Union[str, List[Dict[str, Any]]]

ROSTER_PRESETS = {"desk": desk_roster, "reference": reference_roster}

# Forces are of order 0.01 N, so useful margins need much larger C than unit-scale data.
FORCE_SCALE_C_GRID = (1.0, 10.0, 1e2, 1e3, 1e4)


@dataclass(frozen=True)
class ExperimentConfig:
    """Every constant of one experiment protocol; ``split_seeds`` drive the repeated splits."""

    name: str = "experiment"
    array_resolutions: Tuple[int, ...] = (32, 8, 4)
    extent: float = DEFAULT_EXTENT
    stiffness: float = DEFAULT_STIFFNESS
    roster: RosterSpec = "desk"
    sphere_spacing: float = 4.0
    row_offsets: Tuple[float, ...] = (0.0, 4.0, 8.0)
    col_offsets: Tuple[float, ...] = (0.0, 4.0, 8.0)
    rotations: Tuple[float, ...] = (0.0, 10.0, 20.0, 30.0, 40.0)
    press_depth: float = DEFAULT_PRESS_DEPTH
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    base_seed: int = 0
    block_size: int = DEFAULT_BLOCK_SIZE
    m_list: Tuple[int, ...] = (1024, 64, 16)
    matrix_seed: int = 0
    c_grid: Tuple[float, ...] = FORCE_SCALE_C_GRID
    tol: float = DEFAULT_TOL
    dev_fraction: float = 0.4
    val_fraction: float = 0.2
    training_fractions: Tuple[Tuple[float, float], ...] = ((0.4, 0.2), (0.2, 0.1), (0.1, 0.05))
    training_raw_sizes: Tuple[int, ...] = (64,)
    training_compressed_sizes: Tuple[int, ...] = (64, 16)
    hinge_m_list: Tuple[int, ...] = (256, 64)
    isometry_trials: int = 100
    evaluate_on_training: bool = False
    split_seeds: Tuple[int, ...] = tuple(range(10))
    output_dir: str = "results"
    n_jobs: int = 1

    def __post_init__(self):
        for name in (
            "array_resolutions",
            "row_offsets",
            "col_offsets",
            "rotations",
            "m_list",
            "c_grid",
            "training_raw_sizes",
            "training_compressed_sizes",
            "hinge_m_list",
            "split_seeds",
        ):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(
            self, "training_fractions", tuple(tuple(float(f) for f in pair) for pair in self.training_fractions)
        )
        if not isinstance(self.roster, str):
            object.__setattr__(self, "roster", [dict(entry) for entry in self.roster])
        self.validate()

    @property
    def finest(self) -> int:
        return max(self.array_resolutions)

    @property
    def n(self) -> int:
        return self.finest * self.finest

    @property
    def perturbation_count(self) -> int:
        return len(self.row_offsets) * len(self.col_offsets) * len(self.rotations)

    @property
    def raw_sizes(self) -> Tuple[int, ...]:
        return tuple(r * r for r in self.array_resolutions)

    def validate(self) -> None:
        """
        Check protocol constants.

        Raises:
            ConfigurationError: On the first invalid value
        """
        fractions = [(self.dev_fraction, self.val_fraction), *self.training_fractions]
        for dev, val in fractions:
            if dev <= 0 or val <= 0 or dev + val > 1:
                raise ConfigurationError(f"Split fractions ({dev}, {val}) must be positive and sum to at most 1")
        if not self.array_resolutions or min(self.array_resolutions) < 1:
            raise ConfigurationError("Array resolutions must be positive")
        if self.n % self.block_size:
            raise ConfigurationError(f"Block size {self.block_size} does not divide n = {self.n}")
        for m in (*self.m_list, *self.training_compressed_sizes, *self.hinge_m_list):
            if not 1 <= m <= self.n:
                raise ConfigurationError(f"Measurement count {m} outside [1, {self.n}]")
        for size in self.training_raw_sizes:
            if size not in self.raw_sizes:
                raise ConfigurationError(f"No array resolution gives {size} taxels")
        if not self.c_grid or min(self.c_grid) <= 0:
            raise ConfigurationError("C grid must be non-empty and positive")
        if not self.split_seeds:
            raise ConfigurationError("At least one split seed is required")
        if not (self.row_offsets and self.col_offsets and self.rotations):
            raise ConfigurationError("Perturbation grids must be non-empty")
        if self.perturbation_count < 3:
            raise ConfigurationError(f"Need at least 3 perturbations, got {self.perturbation_count}")
        if self.n_jobs == 0:
            raise ConfigurationError("n_jobs must be non-zero")
        if isinstance(self.roster, str) and self.roster not in ROSTER_PRESETS:
            raise ConfigurationError(f"Unknown roster preset {self.roster!r}")

    def arrays(self) -> Dict[int, TaxelArray]:
        """Taxel arrays keyed by taxel count, finest first."""
        return {
            r * r: TaxelArray.square(r, self.extent, self.stiffness)
            for r in sorted(self.array_resolutions, reverse=True)
        }

    def to_dict(self) -> Dict[str, Any]:
        data = dataclasses.asdict(self)
        for key, value in data.items():
            if isinstance(value, tuple):
                data[key] = [list(v) if isinstance(v, tuple) else v for v in value]
        return data


def desk_scale(**overrides: Any) -> ExperimentConfig:
    """Eight primitives on a 32x32 array, 45 perturbations, 40/20 splits."""
    return dataclasses.replace(ExperimentConfig(name="desk_scale"), **overrides)


def reference_scale(**overrides: Any) -> ExperimentConfig:
    """The full protocol: 64x64 down to 1x1 arrays, 360 perturbations, six training sizes."""
    base = ExperimentConfig(
        name="reference_scale",
        array_resolutions=(64, 32, 16, 8, 4, 2, 1),
        roster="reference",
        row_offsets=(0.0, 2.0, 4.0, 6.0, 8.0, 10.0),
        col_offsets=(0.0, 2.0, 4.0, 6.0, 8.0, 10.0),
        rotations=tuple(float(r) for r in range(0, 50, 5)),
        m_list=(4096, 1024, 256, 64, 16, 4, 1),
        training_fractions=(
            (0.4, 0.2),
            (0.2, 0.1),
            (0.1, 0.05),
            (0.06, 0.03),
            (0.02, 0.01),
            (0.0067, 0.0033),
        ),
        training_raw_sizes=(64,),
        training_compressed_sizes=(16,),
        hinge_m_list=(1024, 256),
    )
    return dataclasses.replace(base, **overrides)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Load an ExperimentConfig from JSON.

    Absent keys take their defaults.

    Raises:
        ConfigurationError: On unknown keys, invalid values or an unreadable file
    """
    try:
        data = read_json(path)
    except StorageError as e:
        raise ConfigurationError(f"Cannot read config {path}: {e}") from e
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"Unknown config keys: {unknown}")
    try:
        return ExperimentConfig(**data)
    except (TypeError, InvalidInputError) as e:
        raise ConfigurationError(f"Invalid config {path}: {e}") from e


def dump_config(config: ExperimentConfig, path: Union[str, Path]) -> None:
    write_json(path, config.to_dict())


def apply_environment(config: ExperimentConfig) -> ExperimentConfig:
    """Apply TACTILE_N_JOBS and TACTILE_OUTPUT_DIR from the environment or a .env file."""
    load_dotenv()
    overrides: Dict[str, Any] = {}
    if os.environ.get(ENV_N_JOBS):
        try:
            overrides["n_jobs"] = int(os.environ[ENV_N_JOBS])
        except ValueError as e:
            raise ConfigurationError(f"{ENV_N_JOBS} must be an integer") from e
    if os.environ.get(ENV_OUTPUT_DIR):
        overrides["output_dir"] = os.environ[ENV_OUTPUT_DIR]
    return dataclasses.replace(config, **overrides) if overrides else config


def model_from_spec(entry: Dict[str, Any], sphere_spacing: float) -> SphereModel:
    """
    Build one roster object.

    ``{"name", "kind", "dims"}`` makes a primitive; ``{"name", "mesh"}``
    loads a vertex file and converts it to spheres.
    """
    name = entry.get("name")
    if not name:
        raise ConfigurationError(f"Roster entry without a name: {entry}")
    try:
        if "mesh" in entry:
            return spheres_from_vertices(load_vertices(entry["mesh"]), name).centered()
        kind = PrimitiveKind(entry["kind"])
        return make_primitive(kind, tuple(float(d) for d in entry["dims"]), sphere_spacing, name=name)
    except KeyError as e:
        raise ConfigurationError(f"Roster entry {name!r} is missing {e}") from e
    except (ValueError, StorageError) as e:
        raise ConfigurationError(f"Roster entry {name!r} is invalid: {e}") from e


def build_roster(config: ExperimentConfig) -> List[SphereModel]:
    if isinstance(config.roster, str):
        return ROSTER_PRESETS[config.roster](config.sphere_spacing)
    if not config.roster:
        raise ConfigurationError("Roster is empty")
    return [model_from_spec(entry, config.sphere_spacing) for entry in config.roster]
