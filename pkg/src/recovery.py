"""Daubechies-2 wavelet basis and sparse recovery of full frames from measurements."""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pywt
from scipy.sparse.linalg import LinearOperator

from src.compression import CompressedSignal, SbheMatrix
from src.errors import DimensionError, InvalidInputError, OverBudgetError, ProvenanceError
from src.simulator import TactileFrame, TaxelArray

logger = logging.getLogger(__name__)

_COLUMN_CHUNK = 256


def _daubechies2() -> Tuple[float, ...]:
    return tuple(pywt.Wavelet("db2").rec_lo)


def _windows(length: int, taps: int) -> np.ndarray:
    """Periodic filter windows: row k covers samples 2k .. 2k + taps - 1 (mod length)."""
    return (2 * np.arange(length // 2)[:, None] + np.arange(taps)[None, :]) % length


@dataclass(frozen=True)
class WaveletBasis:
    """
    Orthonormal separable 2-D Daubechies-2 basis on a size x size grid.

    Boundaries are periodic, so every level is an orthogonal map and the
    decomposition can run all the way down to a single approximation
    coefficient.
    """

    size: int
    levels: Optional[int] = None
    filter: Tuple[float, ...] = field(default_factory=_daubechies2)

    def __post_init__(self):
        if self.size < 1 or self.size & (self.size - 1):
            raise InvalidInputError(f"Grid side must be a power of 2, got {self.size}")
        depth = int(math.log2(self.size))
        levels = depth if self.levels is None else int(self.levels)
        if not (min(1, depth) <= levels <= depth):
            raise InvalidInputError(f"Levels must lie in [1, {depth}], got {levels}")
        low = np.asarray(self.filter, dtype=float)
        if not math.isclose(float(low @ low), 1.0, abs_tol=1e-12):
            raise InvalidInputError("Analysis filter is not unit norm")
        if not math.isclose(float(low[:-2] @ low[2:]), 0.0, abs_tol=1e-12):
            raise InvalidInputError("Analysis filter is not orthogonal to its even shifts")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "filter", tuple(float(c) for c in low))

    @property
    def n(self) -> int:
        return self.size * self.size

    @property
    def low(self) -> np.ndarray:
        return np.asarray(self.filter)

    @property
    def high(self) -> np.ndarray:
        low = self.low
        signs = (-1.0) ** np.arange(len(low))
        return signs * low[::-1]

    def _analysis(self, data: np.ndarray) -> np.ndarray:
        length = data.shape[-1]
        windows = data[..., _windows(length, len(self.filter))]
        return np.concatenate([windows @ self.low, windows @ self.high], axis=-1)

    def _synthesis(self, data: np.ndarray) -> np.ndarray:
        length = data.shape[-1]
        half = length // 2
        approx, detail = data[..., :half], data[..., half:]
        windows = _windows(length, len(self.filter))
        out = np.zeros(data.shape)
        for tap, (lo, hi) in enumerate(zip(self.low, self.high)):
            out[..., windows[:, tap]] += lo * approx + hi * detail
        return out

    def _as_grids(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape[-2:] == (self.size, self.size):
            return values
        if values.shape[-1] != self.n:
            raise DimensionError(
                f"Expected a {self.size}x{self.size} grid or {self.n} values, got shape {values.shape}"
            )
        return values.reshape(values.shape[:-1] + (self.size, self.size))

    def forward(self, grids: np.ndarray) -> np.ndarray:
        """Multilevel 2-D analysis of one grid or a stack of grids."""
        data = np.array(self._as_grids(grids), dtype=float)
        side = self.size
        for _ in range(self.levels):
            block = self._analysis(data[..., :side, :side])
            block = np.swapaxes(self._analysis(np.swapaxes(block, -1, -2)), -1, -2)
            data[..., :side, :side] = block
            side //= 2
        return data

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        """Exact inverse of ``forward``."""
        data = np.array(self._as_grids(coeffs), dtype=float)
        side = self.size >> (self.levels - 1) if self.levels else self.size
        for _ in range(self.levels):
            block = np.swapaxes(self._synthesis(np.swapaxes(data[..., :side, :side], -1, -2)), -1, -2)
            data[..., :side, :side] = self._synthesis(block)
            side *= 2
        return data

    def analyze(self, values: np.ndarray) -> np.ndarray:
        """Flat coefficients of flat signals: (n,) -> (n,) or (N, n) -> (N, n)."""
        values = np.asarray(values, dtype=float)
        return self.forward(values).reshape(values.shape[:-1] + (self.n,))

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        """Flat signals of flat coefficients; the basis handle used by isometry checks."""
        coeffs = np.asarray(coeffs, dtype=float)
        return self.inverse(coeffs).reshape(coeffs.shape[:-1] + (self.n,))


@dataclass(frozen=True, eq=False)
class SparseCoeffs:
    """Wavelet-domain coefficients, flattened in the grid layout of the transform."""

    values: np.ndarray
    sparsity: int

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    @classmethod
    def dense(cls, values: np.ndarray) -> "SparseCoeffs":
        values = np.asarray(values, dtype=float)
        return cls(values=values, sparsity=int(np.count_nonzero(values)))

    def top_k(self, k: int) -> "SparseCoeffs":
        """Keep the k largest-magnitude coefficients; ties keep the lower index."""
        if k < 0:
            raise InvalidInputError(f"Sparsity must be non-negative, got {k}")
        keep = np.argsort(-np.abs(self.values), kind="stable")[:k]
        values = np.zeros_like(self.values)
        values[keep] = self.values[keep]
        return SparseCoeffs(values=values, sparsity=int(np.count_nonzero(values)))


def dwt2(values: np.ndarray, basis: WaveletBasis) -> SparseCoeffs:
    """
    Orthonormal multilevel 2-D Daubechies-2 transform with periodic extension.

    Args:
        values: n-vector or size x size grid
        basis: The wavelet basis

    Returns:
        SparseCoeffs: Flattened coefficient grid

    Raises:
        DimensionError: If the input is not a size x size grid
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 2 and values.shape != (basis.size, basis.size):
        raise DimensionError(f"Expected a {basis.size}x{basis.size} grid, got {values.shape}")
    if values.ndim == 1 and values.size != basis.n:
        raise DimensionError(f"Expected {basis.n} values, got {values.size}")
    if values.ndim not in (1, 2):
        raise DimensionError(f"Expected a vector or a grid, got {values.ndim} dimensions")
    return SparseCoeffs.dense(basis.forward(values).ravel())


def idwt2(coeffs: Union[SparseCoeffs, np.ndarray], basis: WaveletBasis) -> np.ndarray:
    """Inverse of ``dwt2``; returns a size x size grid."""
    values = coeffs.values if isinstance(coeffs, SparseCoeffs) else np.asarray(coeffs, dtype=float)
    if values.size != basis.n:
        raise DimensionError(f"Expected {basis.n} coefficients, got {values.size}")
    return basis.inverse(values.reshape(basis.size, basis.size))


class CompositeOperator(LinearOperator):
    """Phi Psi as an implicit linear operator from wavelet coefficients to measurements."""

    def __init__(self, matrix: SbheMatrix, basis: WaveletBasis):
        if basis.n != matrix.n:
            raise DimensionError(f"Basis has {basis.n} atoms but the operator expects n = {matrix.n}")
        super().__init__(dtype=np.float64, shape=(matrix.m, matrix.n))
        self.matrix = matrix
        self.basis = basis
        self._column_norms: Optional[np.ndarray] = None

    def _matvec(self, coeffs):
        return self.matrix.apply(self.basis.synthesize(np.ravel(coeffs)))

    def _rmatvec(self, measurements):
        return self.basis.forward(self.matrix.adjoint(np.ravel(measurements))).ravel()

    def _matmat(self, coeffs):
        return self.matrix.apply(self.basis.synthesize(np.asarray(coeffs).T)).T

    def columns(self, indices) -> np.ndarray:
        """Explicit columns for the given atom indices, shape (m, len(indices))."""
        indices = np.atleast_1d(np.asarray(indices, dtype=int))
        units = np.zeros((len(indices), self.shape[1]))
        units[np.arange(len(indices)), indices] = 1.0
        return self.matrix.apply(self.basis.synthesize(units)).T

    def column_norms(self) -> np.ndarray:
        if self._column_norms is None:
            norms = np.empty(self.shape[1])
            for start in range(0, self.shape[1], _COLUMN_CHUNK):
                stop = min(start + _COLUMN_CHUNK, self.shape[1])
                norms[start:stop] = np.linalg.norm(self.columns(np.arange(start, stop)), axis=0)
            self._column_norms = norms
        return self._column_norms


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    """Outcome of one sparse recovery."""

    frame: TactileFrame
    coeffs: SparseCoeffs
    support: Tuple[int, ...]
    iterations: int
    residual_norm: float
    residual_history: Tuple[float, ...]
    converged: bool

    @property
    def values(self) -> np.ndarray:
        return self.frame.values


def _check_provenance(signal: CompressedSignal, matrix: SbheMatrix) -> None:
    expected = (matrix.seed, matrix.m, matrix.n, matrix.block_size)
    actual = (signal.matrix_seed, signal.m, signal.n, signal.block_size)
    if expected != actual:
        raise ProvenanceError(
            f"Signal was measured with (seed, m, n, B) = {actual}, operator is {expected}"
        )


def reconstruct(
    signal: CompressedSignal,
    matrix: SbheMatrix,
    basis: WaveletBasis,
    k_max: int,
    residual_tol: float = 1e-9,
    array: Optional[TaxelArray] = None,
) -> ReconstructionResult:
    """
    Recover a full frame from its measurements by Orthogonal Matching Pursuit over Phi Psi.

    Each iteration picks the atom whose normalized correlation with the
    residual is largest (lowest index on exact ties), then re-solves least
    squares on the whole active set. Iteration stops after ``k_max`` atoms or
    once the residual norm drops to ``residual_tol``. Running out of budget is
    not an error; the result is flagged as not converged.

    Args:
        signal: Compressed signal
        matrix: The operator that produced ``signal``
        basis: Sparsifying wavelet basis
        k_max: Sparsity budget, at most m
        residual_tol: Absolute residual norm target
        array: Geometry of the estimate; defaults to a square array of the basis size

    Returns:
        ReconstructionResult: Estimate and solver trace

    Raises:
        ProvenanceError: If ``signal`` was not measured with ``matrix``
        OverBudgetError: If k_max exceeds m
    """
    _check_provenance(signal, matrix)
    if k_max > matrix.m:
        raise OverBudgetError(f"Sparsity budget {k_max} exceeds m = {matrix.m}")
    if k_max < 0 or residual_tol < 0:
        raise InvalidInputError("Sparsity budget and tolerance must be non-negative")

    operator = CompositeOperator(matrix, basis)
    y = signal.values
    residual = y.copy()
    history: List[float] = [float(np.linalg.norm(residual))]
    support: List[int] = []
    active = np.zeros((matrix.m, 0))
    solution = np.zeros(0)

    if history[-1] > residual_tol and k_max > 0:
        norms = operator.column_norms()
        usable = norms > 1e-12
        scale = np.where(usable, norms, 1.0)
        while len(support) < k_max and history[-1] > residual_tol:
            score = np.abs(operator.rmatvec(residual)) / scale
            score[~usable] = -1.0
            score[support] = -1.0
            atom = int(np.argmax(score))
            if score[atom] <= 0.0:
                break
            support.append(atom)
            active = np.column_stack([active, operator.columns([atom])])
            solution, *_ = np.linalg.lstsq(active, y, rcond=None)
            residual = y - active @ solution
            history.append(float(np.linalg.norm(residual)))

    converged = history[-1] <= residual_tol
    if not converged:
        logger.warning(
            "Recovery stopped at %d atoms with residual %.3e > %.3e", len(support), history[-1], residual_tol
        )

    coeffs = np.zeros(matrix.n)
    coeffs[support] = solution
    array = array or TaxelArray.square(basis.size)
    frame = TactileFrame(
        values=basis.synthesize(coeffs),
        array=array,
        label=signal.label,
        reconstructed=True,
    )
    return ReconstructionResult(
        frame=frame,
        coeffs=SparseCoeffs(values=coeffs, sparsity=len(support)),
        support=tuple(support),
        iterations=len(support),
        residual_norm=history[-1],
        residual_history=tuple(history),
        converged=converged,
    )


def denoising_report(
    reference: np.ndarray, noisy: np.ndarray, reconstructed: np.ndarray
) -> Dict[str, float]:
    """Distances of the raw noisy and reconstructed signals from a noiseless reference."""
    reference = np.asarray(reference, dtype=float)
    return {
        "raw_error": float(np.linalg.norm(np.asarray(noisy) - reference)),
        "reconstructed_error": float(np.linalg.norm(np.asarray(reconstructed) - reference)),
        "reference_norm": float(np.linalg.norm(reference)),
    }
