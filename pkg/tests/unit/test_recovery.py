"""Tests for the wavelet basis and OMP recovery."""

import logging

import numpy as np
import pytest
import pywt

import src.recovery as rec
from src.compression import build_sbhe, compress
from src.errors import DimensionError, InvalidInputError, OverBudgetError, ProvenanceError
from tests.utils.oracles import dense_basis


@pytest.fixture(scope="module")
def basis32():
    return rec.WaveletBasis(32)


def _planted(basis, k, rng):
    coeffs = np.zeros(basis.n)
    support = rng.choice(basis.n, size=k, replace=False)
    coeffs[support] = rng.standard_normal(k)
    return coeffs


def test_filter_is_daubechies_2():
    basis = rec.WaveletBasis(8)
    np.testing.assert_allclose(basis.low, pywt.Wavelet("db2").rec_lo)
    assert len(basis.low) == 4
    assert basis.levels == 3


def test_transform_is_perfectly_invertible_and_norm_preserving(basis32):
    """Round trip and Parseval on a batch of random frames."""
    rng = np.random.default_rng(0)
    grids = rng.standard_normal((1000, 32, 32))
    coeffs = basis32.forward(grids)
    np.testing.assert_allclose(basis32.inverse(coeffs), grids, atol=1e-10)
    np.testing.assert_allclose(
        np.linalg.norm(coeffs.reshape(1000, -1), axis=1),
        np.linalg.norm(grids.reshape(1000, -1), axis=1),
        rtol=1e-12,
    )


@pytest.mark.parametrize("size", [1, 2, 4, 8])
def test_basis_matrix_is_orthonormal(size):
    """Small bases are orthonormal, including the degenerate 2x2 case."""
    psi = dense_basis(rec.WaveletBasis(size))
    np.testing.assert_allclose(psi.T @ psi, np.eye(size * size), atol=1e-12)


def test_constant_image_has_a_single_coefficient(basis32):
    """All detail coefficients of a constant grid vanish."""
    coeffs = rec.dwt2(np.full((32, 32), 2.0), basis32)
    assert coeffs.values[0] == pytest.approx(64.0)
    np.testing.assert_allclose(coeffs.values[1:], 0.0, atol=1e-10)
    np.testing.assert_allclose(rec.idwt2(coeffs, basis32), 2.0, atol=1e-12)


def test_analyze_and_synthesize_are_flat_inverses(basis32):
    rng = np.random.default_rng(1)
    values = rng.standard_normal((3, 1024))
    np.testing.assert_allclose(basis32.synthesize(basis32.analyze(values)), values, atol=1e-10)


def test_partial_depth_keeps_coarse_block_untouched():
    rng = np.random.default_rng(2)
    grid = rng.standard_normal((8, 8))
    one_level = rec.WaveletBasis(8, levels=1)
    np.testing.assert_allclose(one_level.inverse(one_level.forward(grid)), grid, atol=1e-12)
    with pytest.raises(InvalidInputError):
        rec.WaveletBasis(8, levels=4)


def test_basis_rejects_bad_sizes():
    with pytest.raises(InvalidInputError):
        rec.WaveletBasis(6)
    with pytest.raises(InvalidInputError):
        rec.WaveletBasis(8, filter=(1.0, 1.0))


def test_dwt2_rejects_wrong_shapes(basis32):
    with pytest.raises(DimensionError):
        rec.dwt2(np.zeros((16, 16)), basis32)
    with pytest.raises(DimensionError):
        rec.dwt2(np.zeros(100), basis32)
    with pytest.raises(DimensionError):
        rec.idwt2(np.zeros(10), basis32)


def test_top_k_keeps_largest_and_prefers_lower_index():
    coeffs = rec.SparseCoeffs.dense(np.array([1.0, -3.0, 2.0, 3.0, 0.5]))
    assert coeffs.sparsity == 5
    kept = coeffs.top_k(2)
    np.testing.assert_array_equal(kept.values, [0.0, -3.0, 0.0, 3.0, 0.0])
    kept = coeffs.top_k(1)
    np.testing.assert_array_equal(kept.values, [0.0, -3.0, 0.0, 0.0, 0.0])
    assert kept.sparsity == 1


def test_composite_operator_matches_dense_product():
    """Phi Psi applied implicitly equals the explicit product, forward and adjoint."""
    basis = rec.WaveletBasis(8)
    matrix = build_sbhe(64, 24, block_size=32, seed=3)
    operator = rec.CompositeOperator(matrix, basis)
    dense = matrix.to_dense() @ dense_basis(basis)
    rng = np.random.default_rng(3)
    s = rng.standard_normal(64)
    y = rng.standard_normal(24)

    np.testing.assert_allclose(operator.matvec(s), dense @ s, atol=1e-12)
    np.testing.assert_allclose(operator.rmatvec(y), dense.T @ y, atol=1e-12)
    np.testing.assert_allclose(operator.columns([0, 5, 63]), dense[:, [0, 5, 63]], atol=1e-12)
    np.testing.assert_allclose(operator.column_norms(), np.linalg.norm(dense, axis=0), atol=1e-12)
    np.testing.assert_allclose(operator.matmat(np.eye(64)[:, :3]), dense[:, :3], atol=1e-12)


def test_composite_operator_rejects_mismatched_basis():
    with pytest.raises(DimensionError):
        rec.CompositeOperator(build_sbhe(256, 16), rec.WaveletBasis(8))


def test_planted_sparse_signals_are_recovered(basis32):
    """At n = 1024, m = 128 nearly every planted k <= 8 signal comes back exactly."""
    matrix = build_sbhe(1024, 128, block_size=32, seed=0)
    rng = np.random.default_rng(42)
    exact = 0
    for _ in range(100):
        k = int(rng.integers(1, 9))
        coeffs = _planted(basis32, k, rng)
        signal = compress(matrix, basis32.synthesize(coeffs))
        result = rec.reconstruct(signal, matrix, basis32, k_max=16, residual_tol=1e-10)
        error = np.linalg.norm(result.coeffs.values - coeffs) / np.linalg.norm(coeffs)
        exact += result.converged and error < 1e-6
    assert exact >= 99


def test_recovery_trace(basis32):
    """Residuals never grow and the support is duplicate-free."""
    matrix = build_sbhe(1024, 128, seed=1)
    rng = np.random.default_rng(7)
    coeffs = _planted(basis32, 6, rng)
    result = rec.reconstruct(compress(matrix, basis32.synthesize(coeffs)), matrix, basis32, k_max=12)

    history = np.array(result.residual_history)
    assert np.all(np.diff(history) <= 1e-12)
    assert len(set(result.support)) == len(result.support) == result.iterations
    assert result.frame.reconstructed
    assert result.frame.grid().shape == (32, 32)
    np.testing.assert_allclose(result.values, basis32.synthesize(coeffs), atol=1e-8)


def test_unconverged_recovery_is_flagged(basis32, caplog):
    """A budget smaller than the true sparsity ends unconverged with a warning."""
    matrix = build_sbhe(1024, 128, seed=2)
    coeffs = _planted(basis32, 8, np.random.default_rng(8))
    signal = compress(matrix, basis32.synthesize(coeffs))
    with caplog.at_level(logging.WARNING, logger="src.recovery"):
        result = rec.reconstruct(signal, matrix, basis32, k_max=1)
    assert not result.converged
    assert result.iterations == 1
    assert "Recovery stopped" in caplog.text


def test_zero_measurements_give_zero_frame(basis32):
    matrix = build_sbhe(1024, 64, seed=3)
    signal = compress(matrix, np.zeros(1024))
    result = rec.reconstruct(signal, matrix, basis32, k_max=8)
    assert result.converged
    assert result.iterations == 0
    np.testing.assert_array_equal(result.values, 0.0)


def test_recovery_checks_provenance_and_budget(basis32):
    """Signals from another operator and budgets beyond m are rejected."""
    matrix = build_sbhe(1024, 64, seed=3)
    other = build_sbhe(1024, 64, seed=4)
    signal = compress(other, np.ones(1024))
    with pytest.raises(ProvenanceError):
        rec.reconstruct(signal, matrix, basis32, k_max=8)
    with pytest.raises(OverBudgetError):
        rec.reconstruct(compress(matrix, np.ones(1024)), matrix, basis32, k_max=65)


def test_denoising_report():
    report = rec.denoising_report(np.zeros(4), np.array([3.0, 4.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0, 0.0]))
    assert report == {"raw_error": 5.0, "reconstructed_error": 1.0, "reference_norm": 0.0}
