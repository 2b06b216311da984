"""Scrambled Block Hadamard Ensemble (SBHE) measurement operators.

The operator is Phi = Q_m W P_n: P_n scrambles the n signal entries, W is
block diagonal with orthonormal B x B Sylvester-Hadamard blocks and Q_m keeps
m of the n rows. It is stored as a seed, a permutation and a row selection;
the dense matrix is only built on request for small n.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Union

import numpy as np
from scipy.linalg import block_diag, hadamard
from typing_extensions import Protocol

from src.errors import DimensionError, InvalidInputError, SelectionError
from src.simulator import TactileFrame

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_SIZE = 32
M_PRESETS = (1024, 256, 64, 16, 4, 1)
DENSE_LIMIT = 4096


def _is_power_of_two(value: int) -> bool:
    return value >= 1 and value & (value - 1) == 0


def fwht(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """
    Orthonormal fast Walsh-Hadamard transform in Sylvester (natural) order.

    The transform is its own inverse.

    Args:
        values: Array whose length along ``axis`` is a power of two
        axis: Axis to transform

    Returns:
        np.ndarray: Transformed copy of ``values``
    """
    data = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
    size = data.shape[-1]
    if not _is_power_of_two(size):
        raise InvalidInputError(f"Transform length must be a power of 2, got {size}")
    lead = data.shape[:-1]
    half = 1
    while half < size:
        view = data.reshape(*lead, size // (2 * half), 2, half)
        upper = view[..., 0, :] + view[..., 1, :]
        lower = view[..., 0, :] - view[..., 1, :]
        data = np.stack([upper, lower], axis=-2).reshape(*lead, size)
        half *= 2
    return np.moveaxis(data / math.sqrt(size), -1, axis)


@dataclass(frozen=True, eq=False)
class SbheMatrix:
    """Implicit m x n SBHE operator."""

    n: int
    m: int
    block_size: int
    seed: int
    permutation: np.ndarray
    selected_rows: np.ndarray
    scrambled: bool = True

    def __post_init__(self):
        permutation = np.array(self.permutation, dtype=np.int64)
        rows = np.array(self.selected_rows, dtype=np.int64)
        if not np.array_equal(np.sort(permutation), np.arange(self.n)):
            raise InvalidInputError("Permutation is not a bijection on 0..n-1")
        if self.m < 1 or rows.shape != (self.m,) or len(np.unique(rows)) != self.m:
            raise SelectionError("Selected rows must be m distinct indices")
        if rows.min() < 0 or rows.max() >= self.n:
            raise SelectionError("Selected rows must lie in 0..n-1")
        permutation.setflags(write=False)
        rows.setflags(write=False)
        object.__setattr__(self, "permutation", permutation)
        object.__setattr__(self, "selected_rows", rows)

    @property
    def scale(self) -> float:
        return 1.0 / math.sqrt(self.block_size)

    @property
    def compression_factor(self) -> float:
        return self.n / self.m

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Phi x for one signal (n,) or a batch (N, n)."""
        values = np.asarray(values, dtype=float)
        if values.shape[-1] != self.n:
            raise DimensionError(f"Signal length {values.shape[-1]} does not match n = {self.n}")
        lead = values.shape[:-1]
        gathered = values[..., self.permutation]
        blocks = fwht(gathered.reshape(*lead, self.n // self.block_size, self.block_size))
        return blocks.reshape(*lead, self.n)[..., self.selected_rows]

    def adjoint(self, measurements: np.ndarray) -> np.ndarray:
        """Phi^T y for one measurement vector (m,) or a batch (N, m)."""
        measurements = np.asarray(measurements, dtype=float)
        if measurements.shape[-1] != self.m:
            raise DimensionError(f"Measurement length {measurements.shape[-1]} does not match m = {self.m}")
        lead = measurements.shape[:-1]
        full = np.zeros(lead + (self.n,))
        full[..., self.selected_rows] = measurements
        blocks = fwht(full.reshape(*lead, self.n // self.block_size, self.block_size))
        result = np.empty(lead + (self.n,))
        result[..., self.permutation] = blocks.reshape(*lead, self.n)
        return result

    def to_dense(self) -> np.ndarray:
        """Explicit matrix, for oracles and inspection only."""
        if self.n > DENSE_LIMIT:
            raise DimensionError(f"Refusing to materialize a dense operator with n = {self.n}")
        block = hadamard(self.block_size) * self.scale
        w = block_diag(*([block] * (self.n // self.block_size)))
        return w[self.selected_rows][:, np.argsort(self.permutation)]

    def to_header(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "m": self.m,
            "block_size": self.block_size,
            "seed": self.seed,
            "scrambled": self.scrambled,
        }

    @classmethod
    def from_header(cls, header: Dict[str, Any]) -> "SbheMatrix":
        return build_sbhe(
            int(header["n"]),
            int(header["m"]),
            int(header.get("block_size", DEFAULT_BLOCK_SIZE)),
            int(header["seed"]),
            scrambled=bool(header.get("scrambled", True)),
        )


@dataclass(frozen=True, eq=False)
class CompressedSignal:
    """Measurements y = Phi x with the provenance of Phi."""

    values: np.ndarray
    matrix_seed: int
    m: int
    n: int
    block_size: int
    label: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.m,):
            raise DimensionError(f"Expected {self.m} measurements, got {values.size}")
        object.__setattr__(self, "values", values)


def build_sbhe(
    n: int,
    m: int,
    block_size: int = DEFAULT_BLOCK_SIZE,
    seed: int = 0,
    scrambled: bool = True,
) -> SbheMatrix:
    """
    Draw an SBHE operator.

    Args:
        n: Signal dimension
        m: Number of measurements
        block_size: Hadamard block size B, a power of 2 dividing n
        seed: Seed of the permutation and row selection
        scrambled: When False the permutation is the identity and the first m
            rows are kept; used to inspect the plain block-Hadamard structure

    Returns:
        SbheMatrix: Operator with a uniformly random permutation and m rows
        drawn uniformly without replacement

    Raises:
        InvalidInputError: If B is not a power of 2 or m < 1
        DimensionError: If B does not divide n
        SelectionError: If m > n
    """
    if not _is_power_of_two(block_size):
        raise InvalidInputError(f"Block size must be a power of 2, got {block_size}")
    if n < 1 or n % block_size:
        raise DimensionError(f"Block size {block_size} does not divide n = {n}")
    if m > n:
        raise SelectionError(f"Cannot select {m} rows from {n}")
    if m < 1:
        raise InvalidInputError(f"Need at least one measurement, got m = {m}")

    if scrambled:
        rng = np.random.default_rng(seed)
        permutation = rng.permutation(n)
        rows = np.sort(rng.choice(n, size=m, replace=False))
    else:
        permutation = np.arange(n)
        rows = np.arange(m)
    return SbheMatrix(
        n=n,
        m=m,
        block_size=block_size,
        seed=seed,
        permutation=permutation,
        selected_rows=rows,
        scrambled=scrambled,
    )


def _signal_values(frame: Union[TactileFrame, np.ndarray]) -> np.ndarray:
    return frame.values if isinstance(frame, TactileFrame) else np.asarray(frame, dtype=float)


def compress(
    matrix: SbheMatrix, frame: Union[TactileFrame, np.ndarray], label: Optional[int] = None
) -> CompressedSignal:
    """
    Measure one frame: gather by permutation, per-block Walsh-Hadamard, row selection.

    Raises:
        DimensionError: If the frame length differs from n
    """
    values = _signal_values(frame)
    if values.shape != (matrix.n,):
        raise DimensionError(f"Frame length {values.size} does not match n = {matrix.n}")
    if label is None:
        label = frame.label if isinstance(frame, TactileFrame) else 0
    return CompressedSignal(
        values=matrix.apply(values),
        matrix_seed=matrix.seed,
        m=matrix.m,
        n=matrix.n,
        block_size=matrix.block_size,
        label=label,
    )


def compress_batch(matrix: SbheMatrix, signals: np.ndarray) -> np.ndarray:
    """Phi applied to every row of an (N, n) signal matrix."""
    signals = np.atleast_2d(np.asarray(signals, dtype=float))
    return matrix.apply(signals)


def taxel_coverage(matrix: SbheMatrix) -> float:
    """Fraction of taxels that contribute to at least one measurement."""
    touched_blocks = np.unique(matrix.selected_rows // matrix.block_size)
    return len(touched_blocks) * matrix.block_size / matrix.n


def norm_bound(signals: np.ndarray) -> float:
    """Largest l2 norm over the rows of a signal matrix."""
    signals = np.atleast_2d(np.asarray(signals, dtype=float))
    return float(np.max(np.linalg.norm(signals, axis=1)))


class RepresentationBasis(Protocol):
    n: int

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        ...


@dataclass(frozen=True)
class IsometryReport:
    """Distribution of norm ratios over random sparse vectors."""

    min_ratio: float
    max_ratio: float
    mean_ratio: float
    delta_hat: float
    ratios: np.ndarray

    def to_dict(self) -> Dict[str, float]:
        return {
            "min_ratio": self.min_ratio,
            "max_ratio": self.max_ratio,
            "mean_ratio": self.mean_ratio,
            "delta_hat": self.delta_hat,
            "trials": int(self.ratios.size),
        }


def isometry_check(
    matrix: SbheMatrix,
    basis: Optional[RepresentationBasis] = None,
    k: int = 1,
    trials: int = 100,
    seed: int = 0,
) -> IsometryReport:
    """
    Empirical restricted-isometry diagnostic of Phi Psi.

    Each trial draws a k-sparse s with a uniform support and Gaussian values
    and records ||A s|| / ||s|| for A = sqrt(n/m) Phi Psi. The sqrt(n/m)
    factor is the usual isometry normalization of a partial orthonormal
    operator; for m = n it is 1. ``delta_hat`` is max |ratio^2 - 1|.

    Args:
        matrix: Measurement operator
        basis: Representation basis; None means the identity
        k: Sparsity of the test vectors
        trials: Number of random vectors
        seed: Seed of the test vectors

    Raises:
        InvalidInputError: If k or trials is below 1, or k exceeds n
    """
    if k < 1 or trials < 1:
        raise InvalidInputError("Sparsity and trial count must both be at least 1")
    if k > matrix.n:
        raise InvalidInputError(f"Sparsity {k} exceeds n = {matrix.n}")

    rng = np.random.default_rng(seed)
    coeffs = np.zeros((trials, matrix.n))
    for trial in range(trials):
        support = rng.choice(matrix.n, size=k, replace=False)
        coeffs[trial, support] = rng.standard_normal(k)

    signals = basis.synthesize(coeffs) if basis is not None else coeffs
    measured = compress_batch(matrix, signals) * math.sqrt(matrix.n / matrix.m)
    ratios = np.linalg.norm(measured, axis=1) / np.linalg.norm(coeffs, axis=1)
    return IsometryReport(
        min_ratio=float(ratios.min()),
        max_ratio=float(ratios.max()),
        mean_ratio=float(ratios.mean()),
        delta_hat=float(np.max(np.abs(ratios**2 - 1.0))),
        ratios=ratios,
    )
