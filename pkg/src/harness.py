"""Experiment driver: datasets, perturbation splits, sweeps and report files."""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from src.compression import SbheMatrix, build_sbhe, compress_batch, isometry_check, norm_bound, taxel_coverage
from src.config import ExperimentConfig, build_roster
from src.errors import ConfigurationError, ReportError, StorageError
from src.learn import LabeledSet, evaluate, mean_pairwise_hinge_loss, train_dag
from src.recovery import WaveletBasis
from src.simulator import SphereModel, generate_dataset, mean_frames
from src.tools.file_operations import is_writable_directory, write_json, write_pgm, write_table

logger = logging.getLogger(__name__)

RAW = "raw"
COMPRESSED = "compressed"
SIGNAL_SIZE = "signal_size"
TRAINING_SIZE = "training_size"
ISOMETRY_SPARSITY = 8

PUBLISHED_REFERENCE = {
    "note": "Accuracies (%) reported for the 16-object, 360-perturbation protocol; reference only",
    "raw_64": {"training_60": 93.3, "training_3": 87.8},
    "compressed_16": {"training_60": 93.2, "training_3": 86.7, "training_1": 70.0},
    "random_label_16_classes": 6.25,
}


@dataclass(frozen=True, eq=False)
class Splits:
    """Disjoint perturbation-index sets."""

    development: np.ndarray
    validation: np.ndarray
    test: np.ndarray


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def make_splits(
    perturbation_count: int,
    fractions: Tuple[float, float] = (0.4, 0.2),
    seed: int = 0,
) -> Splits:
    """
    Split perturbation indices into development, validation and test sets.

    Sizes are round(fraction * P); the test set takes the remainder. The same
    perturbations are used for every object, so each split is class balanced.

    Raises:
        ConfigurationError: If P < 3, the fractions are invalid or any split is empty
    """
    dev_fraction, val_fraction = fractions
    if perturbation_count < 3:
        raise ConfigurationError(f"Need at least 3 perturbations, got {perturbation_count}")
    if dev_fraction < 0 or val_fraction < 0 or dev_fraction + val_fraction > 1:
        raise ConfigurationError(f"Invalid split fractions {fractions}")
    n_dev = _round_half_up(dev_fraction * perturbation_count)
    n_val = _round_half_up(val_fraction * perturbation_count)
    n_test = perturbation_count - n_dev - n_val
    if min(n_dev, n_val, n_test) < 1:
        raise ConfigurationError(
            f"Fractions {fractions} of {perturbation_count} perturbations give sizes {n_dev}/{n_val}/{n_test}"
        )
    order = np.random.default_rng(seed).permutation(perturbation_count)
    return Splits(
        development=np.sort(order[:n_dev]),
        validation=np.sort(order[n_dev : n_dev + n_val]),
        test=np.sort(order[n_dev + n_val :]),
    )


def check_split_hygiene(splits: Splits, perturbation_count: Optional[int] = None) -> None:
    """Raise ConfigurationError if any perturbation index is in two splits or none."""
    parts = (splits.development, splits.validation, splits.test)
    combined = np.concatenate(parts)
    if len(np.unique(combined)) != len(combined):
        raise ConfigurationError("A perturbation index appears in more than one split")
    if perturbation_count is not None and not np.array_equal(np.sort(combined), np.arange(perturbation_count)):
        raise ConfigurationError("Splits do not cover every perturbation exactly once")


def observation_indices(perturbations: np.ndarray, selected: np.ndarray) -> np.ndarray:
    """Rows whose perturbation index is in ``selected``; with object-major order row = o * P + p."""
    return np.flatnonzero(np.isin(perturbations, selected))


@dataclass(eq=False)
class ExperimentData:
    """Simulated raw signals for every array resolution of a config, sharing one observation order."""

    config: ExperimentConfig
    raw: Dict[int, np.ndarray]
    labels: np.ndarray
    perturbations: np.ndarray
    object_names: List[str]
    mean_images: Dict[int, np.ndarray]
    _matrices: Dict[int, SbheMatrix] = field(default_factory=dict)

    @property
    def classes(self) -> Tuple[int, ...]:
        return tuple(range(len(self.object_names)))

    @property
    def n(self) -> int:
        return self.config.n

    def matrix(self, m: int) -> SbheMatrix:
        if m not in self._matrices:
            self._matrices[m] = build_sbhe(self.n, m, self.config.block_size, self.config.matrix_seed)
        return self._matrices[m]

    def features(self, condition: str, size: int) -> np.ndarray:
        """Signals of one condition: a native array with ``size`` taxels, or ``size`` SBHE measurements."""
        if condition == RAW:
            if size not in self.raw:
                raise ConfigurationError(f"No simulated array has {size} taxels")
            return self.raw[size]
        if condition == COMPRESSED:
            return compress_batch(self.matrix(size), self.raw[self.n])
        raise ConfigurationError(f"Unknown condition {condition!r}")


def build_datasets(config: ExperimentConfig, models: Optional[Sequence[SphereModel]] = None) -> ExperimentData:
    """Simulate every array resolution of ``config`` once."""
    models = list(models) if models is not None else build_roster(config)
    raw: Dict[int, np.ndarray] = {}
    labels = perturbations = None
    mean_images: Dict[int, np.ndarray] = {}
    for size, array in config.arrays().items():
        frames = generate_dataset(
            array,
            models,
            config.row_offsets,
            config.col_offsets,
            config.rotations,
            sigma=config.noise_sigma,
            base_seed=config.base_seed,
            press_depth=config.press_depth,
            n_jobs=config.n_jobs,
        )
        raw[size] = np.stack([f.values for f in frames])
        if labels is None:
            labels = np.array([f.label for f in frames])
            perturbations = np.array([f.perturbation_index for f in frames])
            mean_images = mean_frames(frames)
    logger.info("Built datasets for %d objects at sizes %s", len(models), sorted(raw, reverse=True))
    return ExperimentData(
        config=config,
        raw=raw,
        labels=labels,
        perturbations=perturbations,
        object_names=[m.name for m in models],
        mean_images=mean_images,
    )


@dataclass(frozen=True, eq=False)
class CellResult:
    """One trained-and-evaluated (condition, size, axis point, seed) cell."""

    condition: str
    size: int
    axis: float
    seed: int
    accuracy: float
    confusion: np.ndarray


def run_cell(
    features: np.ndarray,
    labels: np.ndarray,
    perturbations: np.ndarray,
    classes: Tuple[int, ...],
    fractions: Tuple[float, float],
    seed: int,
    c_grid: Sequence[float],
    tol: float,
    evaluate_on_training: bool = False,
    tag: Tuple[str, int, float] = (RAW, 0, 0.0),
) -> CellResult:
    """Split by perturbation, train a DAGSVM with per-pair C selection and evaluate it."""
    perturbation_count = int(perturbations.max()) + 1
    splits = make_splits(perturbation_count, fractions, seed)
    check_split_hygiene(splits, perturbation_count)
    development = observation_indices(perturbations, splits.development)
    validation = observation_indices(perturbations, splits.validation)
    held_out = np.concatenate([splits.development, splits.validation]) if evaluate_on_training else splits.test
    test = observation_indices(perturbations, held_out)

    data = LabeledSet(features, labels, classes)
    model = train_dag(data, c_grid, split=(development, validation), seed=seed, tol=tol)
    result = evaluate(model, data.subset(test))
    condition, size, axis = tag
    return CellResult(condition, size, axis, seed, result.accuracy, result.confusion)


@dataclass(frozen=True, eq=False)
class SweepResult:
    """Per-seed accuracies (%) of one condition along one sweep axis."""

    condition: str
    size: int
    axis_name: str
    axis: Tuple[float, ...]
    seeds: Tuple[int, ...]
    accuracies: np.ndarray
    confusions: Dict[float, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        accuracies = np.asarray(self.accuracies, dtype=float)
        if accuracies.shape != (len(self.axis), len(self.seeds)):
            raise ReportError(f"Accuracy table {accuracies.shape} does not match axis x seeds")
        if np.any(accuracies < 0) or np.any(accuracies > 100):
            raise ReportError("Accuracies must lie in [0, 100]")
        object.__setattr__(self, "accuracies", accuracies)

    @property
    def tag(self) -> str:
        return f"{self.condition}-{self.size}" if self.axis_name == TRAINING_SIZE else self.condition

    @property
    def mean(self) -> np.ndarray:
        return self.accuracies.mean(axis=1)

    @property
    def std(self) -> np.ndarray:
        return self.accuracies.std(axis=1)

    @property
    def spread(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.accuracies.min(axis=1), self.accuracies.max(axis=1)

    def rows(self) -> List[Dict[str, Any]]:
        return [
            {
                "condition": self.condition,
                "size": self.size if self.axis_name == TRAINING_SIZE else int(axis),
                "axis": axis,
                "seed": seed,
                "accuracy": self.accuracies[i, j],
            }
            for i, axis in enumerate(self.axis)
            for j, seed in enumerate(self.seeds)
        ]

    def summary(self) -> Dict[str, Any]:
        low, high = self.spread
        return {
            "condition": self.condition,
            "size": self.size,
            "axis_name": self.axis_name,
            "axis": list(self.axis),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "min": low.tolist(),
            "max": high.tolist(),
        }


def _collect(
    cells: List[CellResult], condition: str, size: int, axis_name: str, axis: Sequence[float], seeds: Sequence[int]
) -> SweepResult:
    keyed = {
        (c.axis, c.seed): c
        for c in cells
        if c.condition == condition and (axis_name == SIGNAL_SIZE or c.size == size)
    }
    accuracies = np.array([[keyed[(a, s)].accuracy for s in seeds] for a in axis])
    confusions = {a: np.mean([keyed[(a, s)].confusion for s in seeds], axis=0) for a in axis}
    return SweepResult(condition, size, axis_name, tuple(axis), tuple(seeds), accuracies, confusions)


def _run_cells(
    config: ExperimentConfig, data: ExperimentData, jobs: List[Tuple[str, int, float, Tuple[float, float]]]
) -> List[CellResult]:
    features = {(cond, size): data.features(cond, size) for cond, size, _, _ in jobs}
    tasks = [
        delayed(run_cell)(
            features[(cond, size)],
            data.labels,
            data.perturbations,
            data.classes,
            fractions,
            seed,
            config.c_grid,
            config.tol,
            config.evaluate_on_training,
            (cond, size, axis),
        )
        for cond, size, axis, fractions in jobs
        for seed in config.split_seeds
    ]
    cells = Parallel(n_jobs=config.n_jobs)(tasks)
    return sorted(cells, key=lambda c: (c.condition, c.size, c.axis, c.seed))


def coverage_by_size(data: ExperimentData, sizes: Sequence[int]) -> Dict[str, float]:
    """Share of taxels each m-row operator reads at all, keyed by m."""
    return {str(m): taxel_coverage(data.matrix(m)) for m in sorted(set(sizes), reverse=True)}


def _log_coverage(data: ExperimentData, sizes: Sequence[int]) -> None:
    for m, coverage in coverage_by_size(data, sizes).items():
        if coverage < 1.0:
            logger.warning("m = %s measurements touch only %.1f%% of the taxels", m, 100.0 * coverage)


def run_signal_size_sweep(
    config: ExperimentConfig, data: Optional[ExperimentData] = None
) -> Tuple[SweepResult, SweepResult]:
    """
    Raw and compressed accuracy at every signal size in ``config.m_list``.

    Raw signals of size s come from the native array with s taxels;
    compressed signals of size s are s SBHE measurements of the finest array.

    Raises:
        ConfigurationError: If no configured array has s taxels
    """
    missing = [s for s in config.m_list if s not in config.raw_sizes]
    if missing:
        raise ConfigurationError(f"No array resolution for raw signal sizes {missing}")
    data = data or build_datasets(config)
    _log_coverage(data, config.m_list)
    fractions = (config.dev_fraction, config.val_fraction)
    jobs = [(cond, s, float(s), fractions) for cond in (RAW, COMPRESSED) for s in config.m_list]
    cells = _run_cells(config, data, jobs)
    axis = [float(s) for s in config.m_list]
    raw = _collect(cells, RAW, data.n, SIGNAL_SIZE, axis, config.split_seeds)
    compressed = _collect(cells, COMPRESSED, data.n, SIGNAL_SIZE, axis, config.split_seeds)
    logger.info(
        "Signal-size sweep: raw %s, compressed %s", raw.mean.round(1).tolist(), compressed.mean.round(1).tolist()
    )
    return raw, compressed


def run_training_size_sweep(config: ExperimentConfig, data: Optional[ExperimentData] = None) -> List[SweepResult]:
    """Accuracy against the development + validation fraction for each configured condition and size."""
    data = data or build_datasets(config)
    conditions = [(RAW, s) for s in config.training_raw_sizes] + [
        (COMPRESSED, s) for s in config.training_compressed_sizes
    ]
    _log_coverage(data, config.training_compressed_sizes)
    axis = [round(dev + val, 6) for dev, val in config.training_fractions]
    jobs = [
        (cond, size, total, fractions)
        for cond, size in conditions
        for total, fractions in zip(axis, config.training_fractions)
    ]
    cells = _run_cells(config, data, jobs)
    results = [_collect(cells, cond, size, TRAINING_SIZE, axis, config.split_seeds) for cond, size in conditions]
    for result in results:
        logger.info("Training-size sweep %s: %s", result.tag, result.mean.round(1).tolist())
    return results


def _hinge_cell(
    features: np.ndarray,
    labels: np.ndarray,
    classes: Tuple[int, ...],
    perturbations: np.ndarray,
    config: ExperimentConfig,
    seed: int,
) -> float:
    splits = make_splits(config.perturbation_count, (config.dev_fraction, config.val_fraction), seed)
    development = observation_indices(perturbations, splits.development)
    validation = observation_indices(perturbations, splits.validation)
    test = observation_indices(perturbations, splits.test)
    labeled = LabeledSet(features, labels, classes)
    model = train_dag(labeled, config.c_grid, split=(development, validation), seed=seed, tol=config.tol)
    return mean_pairwise_hinge_loss(model, labeled.subset(test))


def run_hinge_loss_trend(config: ExperimentConfig, data: Optional[ExperimentData] = None) -> Dict[str, Any]:
    """
    Test hinge loss of compressed-domain models against raw models on the finest array.

    Reports, per m, the mean pairwise hinge loss over split seeds, its gap to
    the raw models, the data norm bound R and an empirical isometry constant
    of Phi Psi. The gaps are reported, not asserted.
    """
    data = data or build_datasets(config)
    jobs = [(RAW, data.n)] + [(COMPRESSED, m) for m in sorted(config.hinge_m_list)]
    features = {job: data.features(*job) for job in jobs}
    cells = [(cond, size, seed) for cond, size in jobs for seed in config.split_seeds]
    losses = Parallel(n_jobs=config.n_jobs)(
        delayed(_hinge_cell)(features[(cond, size)], data.labels, data.classes, data.perturbations, config, seed)
        for cond, size, seed in cells
    )
    records = [
        {"condition": cond, "size": int(size), "seed": int(seed), "hinge_loss": float(loss)}
        for (cond, size, seed), loss in zip(cells, losses)
    ]
    table = pd.DataFrame(records)
    raw_mean = float(table[table.condition == RAW].hinge_loss.mean())
    basis = WaveletBasis(config.finest)
    per_m = {}
    for m in sorted(config.hinge_m_list):
        compressed_mean = float(table[(table.condition == COMPRESSED) & (table["size"] == m)].hinge_loss.mean())
        report = isometry_check(
            data.matrix(m), basis, k=min(ISOMETRY_SPARSITY, m), trials=config.isometry_trials, seed=config.matrix_seed
        )
        per_m[str(m)] = {"hinge_loss": compressed_mean, "gap": compressed_mean - raw_mean, "isometry": report.to_dict()}
    gaps = [per_m[str(m)]["gap"] for m in sorted(config.hinge_m_list)]
    return {
        "raw_hinge_loss": raw_mean,
        "norm_bound": norm_bound(data.raw[data.n]),
        "by_m": per_m,
        "gap_non_increasing_in_m": bool(all(a >= b for a, b in zip(gaps, gaps[1:]))),
        "table": records,
    }


def _confusion_table(confusion: np.ndarray, classes: Sequence[Union[int, str]]) -> pd.DataFrame:
    table = pd.DataFrame(confusion, columns=[str(c) for c in classes])
    table.insert(0, "true_class", [str(c) for c in classes])
    return table


def emit_report(
    output_dir: Union[str, Path],
    sweeps: Sequence[SweepResult],
    class_names: Optional[Sequence[str]] = None,
    mean_images: Optional[Dict[int, np.ndarray]] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> List[Path]:
    """
    Write sweep tables, a JSON summary, confusion matrices and mean-frame images.

    Layout: ``results/<axis>.csv`` with one row per axis point, condition and
    seed; ``results/summary.json``; ``results/confusion_<tag>-<axis point>.csv``
    with row percentages; ``frames/<label>_<object>.pgm``. Everything is
    validated before the first file is written.

    Raises:
        ReportError: If there are no sweeps or a confusion row does not sum to 100
        StorageError: If the output directory cannot be written
    """
    if not sweeps:
        raise ReportError("Nothing to report: no sweep results")
    output_dir = Path(output_dir)
    results_dir = output_dir / "results"
    frames_dir = output_dir / "frames"

    tables: Dict[Path, pd.DataFrame] = {}
    rows_by_axis: Dict[str, List[Dict[str, Any]]] = {}
    for sweep in sweeps:
        rows_by_axis.setdefault(sweep.axis_name, []).extend(sweep.rows())
    for axis_name, rows in rows_by_axis.items():
        table = pd.DataFrame(rows).sort_values(["condition", "size", "axis", "seed"], kind="stable")
        tables[results_dir / f"{axis_name}.csv"] = table.reset_index(drop=True)

    for sweep in sweeps:
        for axis, confusion in sorted(sweep.confusions.items()):
            sums = confusion.sum(axis=1)
            if not np.all((np.abs(sums - 100.0) < 1e-6) | (sums == 0)):
                raise ReportError(f"Confusion rows of {sweep.tag} at {axis} do not sum to 100")
            classes = class_names or list(range(confusion.shape[0]))
            point = f"{axis:g}"
            tables[results_dir / f"confusion_{sweep.tag}-{point}.csv"] = _confusion_table(confusion, classes)

    summary = {"sweeps": [s.summary() for s in sweeps], "reference": PUBLISHED_REFERENCE, **(extra or {})}

    if not is_writable_directory(output_dir):
        raise StorageError(f"Output directory is not writable: {output_dir}")

    written: List[Path] = []
    for path, table in sorted(tables.items()):
        write_table(path, table)
        written.append(path)
    summary_path = results_dir / "summary.json"
    write_json(summary_path, summary)
    written.append(summary_path)
    peak = max((float(img.max()) for img in (mean_images or {}).values()), default=0.0)
    for label, image in sorted((mean_images or {}).items()):
        name = class_names[label] if class_names else str(label)
        path = frames_dir / f"{label:02d}_{name}.pgm"
        write_pgm(path, image, max_value=peak)
        written.append(path)
    logger.info("Wrote %d report files to %s", len(written), output_dir)
    return written


def run_experiment(config: ExperimentConfig, only: Optional[str] = None) -> Dict[str, Any]:
    """
    Run the configured sweeps end to end and emit the report.

    Args:
        config: Experiment protocol
        only: "signal-size" or "training-size" to run one sweep; None runs
            both plus the hinge-loss trend

    Returns:
        Dict[str, Any]: Written paths and the headline means
    """
    if only not in (None, "signal-size", "training-size"):
        raise ConfigurationError(f"Unknown sweep {only!r}")
    data = build_datasets(config)
    sweeps: List[SweepResult] = []
    extra: Dict[str, Any] = {"config": config.name}
    compressed_sizes: List[int] = []
    if only in (None, "signal-size"):
        sweeps.extend(run_signal_size_sweep(config, data))
        compressed_sizes.extend(config.m_list)
    if only in (None, "training-size"):
        sweeps.extend(run_training_size_sweep(config, data))
        compressed_sizes.extend(config.training_compressed_sizes)
    extra["taxel_coverage"] = coverage_by_size(data, compressed_sizes)
    if only is None:
        extra["hinge_loss_trend"] = run_hinge_loss_trend(config, data)
    written = emit_report(config.output_dir, sweeps, data.object_names, data.mean_images, extra)
    return {
        "written": [str(p) for p in written],
        "means": {f"{s.axis_name}:{s.tag}": s.mean.tolist() for s in sweeps},
    }
