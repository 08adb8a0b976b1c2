import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.fft import dctn, idctn

from jpegnoise.errors import DomainError, ShapeError
from jpegnoise.transform import (
    DCT_MATRIX, EVEN_FREQUENCIES, GENERIC_FREQUENCIES, LATTICE_FREQUENCIES, block_dct, block_idct,
    block_samples, forward_dct, inverse_dct, iter_blocks, round_half_away, tile_blocks, untile_blocks,
)

blocks = arrays(np.float64, (8, 8), elements=st.floats(-1e4, 1e4, allow_nan=False))


def test_matches_scipy_orthonormal_dct(rng):
    b = rng.uniform(-128, 128, (8, 8))
    np.testing.assert_allclose(forward_dct(b), dctn(b, norm="ortho"), atol=1e-12)
    np.testing.assert_allclose(inverse_dct(b), idctn(b, norm="ortho"), atol=1e-12)


def test_basis_is_orthonormal():
    np.testing.assert_allclose(DCT_MATRIX @ DCT_MATRIX.T, np.eye(8), atol=1e-14)


def test_dc_of_constant_block():
    # orthonormal scaling: DC = 8 * mean, every AC term vanishes
    Y = forward_dct(np.full((8, 8), 5.0))
    assert Y[0, 0] == pytest.approx(40.0)
    assert np.abs(Y.ravel()[1:]).max() < 1e-12


@given(blocks)
def test_round_trip(b):
    np.testing.assert_allclose(inverse_dct(forward_dct(b)), b, atol=1e-9)


@given(blocks)
@settings(max_examples=50)
def test_parseval(b):
    assert np.sum(forward_dct(b) ** 2) == pytest.approx(np.sum(b ** 2), rel=1e-12, abs=1e-9)


def test_rejects_bad_shape_and_nonfinite():
    with pytest.raises(ShapeError):
        forward_dct(np.zeros((8, 7)))
    with pytest.raises(DomainError):
        forward_dct(np.full((8, 8), np.nan))
    with pytest.raises(ShapeError):
        tile_blocks(np.zeros((12, 16)))


def test_round_half_away_from_zero():
    v = np.array([-2.5, -1.5, -0.5, 0.5, 1.5, 2.5, 0.49999, -0.50001])
    np.testing.assert_array_equal(round_half_away(v), [-3, -2, -1, 1, 2, 3, 0, -1])


def test_tiling_round_trip_and_layout(rng):
    X = rng.integers(0, 256, (16, 24)).astype(float)
    t = tile_blocks(X)
    assert t.shape == (2, 3, 8, 8)
    np.testing.assert_array_equal(t[1, 2], X[8:16, 16:24])
    np.testing.assert_array_equal(untile_blocks(t), X)
    coords = [c for c, _ in iter_blocks(X)]
    assert coords[0] == (0, 0) and coords[-1] == (1, 2)


def test_block_dct_acts_per_block(rng):
    X = rng.uniform(0, 255, (16, 16))
    Y = block_dct(X)
    np.testing.assert_allclose(Y[8:, :8], forward_dct(X[8:, :8]), atol=1e-12)
    np.testing.assert_allclose(block_idct(Y), X, atol=1e-9)
    assert block_samples(Y).shape == (4, 64)


def test_lattice_frequencies_of_integer_blocks(rng):
    # for integer blocks exactly these coefficients are multiples of 1/8
    Y = np.stack([forward_dct(rng.integers(-50, 50, (8, 8)).astype(float)).ravel() for _ in range(200)])
    on_lattice = [u for u in range(64) if np.allclose(Y[:, u] * 8, np.round(Y[:, u] * 8), atol=1e-9)]
    assert tuple(on_lattice) == LATTICE_FREQUENCIES


def test_frequency_partition():
    assert len(EVEN_FREQUENCIES) == 16 and len(GENERIC_FREQUENCIES) == 48
    assert set(EVEN_FREQUENCIES) | set(GENERIC_FREQUENCIES) == set(range(64))
    assert set(LATTICE_FREQUENCIES) <= set(EVEN_FREQUENCIES)
