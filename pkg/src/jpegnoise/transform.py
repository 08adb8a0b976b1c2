"""8x8 orthonormal block DCT, block tiling and the integer rounding operator.

Planes are 2-D ``numpy`` arrays whose sides are multiples of 8. A *spectral
plane* has the same shape as its pixel plane; each 8x8 tile holds the DCT
coefficients of the co-located pixel block, DC in the top-left corner.
Coefficient and pixel indices within a block run row-major, so index 0 of a
flattened block is the DC term.
"""
from __future__ import annotations

from typing import Iterator

import numpy as np

from .errors import DomainError, ShapeError

BLOCK = 8


def _dct_matrix() -> np.ndarray:
    k = np.arange(BLOCK)[:, None]
    n = np.arange(BLOCK)[None, :]
    c = np.cos(np.pi * (2 * n + 1) * k / (2 * BLOCK))
    scale = np.full((BLOCK, 1), np.sqrt(2.0 / BLOCK))
    scale[0, 0] = np.sqrt(1.0 / BLOCK)
    return scale * c


#: Orthonormal DCT-II basis, ``DCT_MATRIX @ DCT_MATRIX.T == I``.
DCT_MATRIX = _dct_matrix()
DCT_MATRIX.flags.writeable = False


def _require_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{what} contains non-finite values")


def _require_blocks(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-2:] != (BLOCK, BLOCK):
        raise ShapeError(f"expected trailing shape (8, 8), got {a.shape}")
    return a


def forward_dct(block) -> np.ndarray:
    """2-D orthonormal DCT-II of one block or a stack of blocks ``(..., 8, 8)``."""
    b = _require_blocks(block)
    _require_finite(b, "pixel block")
    return DCT_MATRIX @ b @ DCT_MATRIX.T


def inverse_dct(block) -> np.ndarray:
    """Inverse of :func:`forward_dct` (the transpose of the unitary basis)."""
    s = _require_blocks(block)
    _require_finite(s, "spectrum block")
    return DCT_MATRIX.T @ s @ DCT_MATRIX


def round_half_away(v):
    """Nearest integer, ties rounded away from zero. Works on scalars and arrays."""
    a = np.asarray(v, dtype=np.float64)
    _require_finite(a, "rounding input")
    out = np.copysign(np.floor(np.abs(a) + 0.5), a)
    # copysign keeps -0.0; normalise so results compare cleanly
    out = out + 0.0
    if out.ndim == 0:
        return int(out)
    return out


#: The rounding operator used by every module. Swap it here to probe
#: sensitivity to the tie-break convention.
round_int = round_half_away


def check_plane(plane, name: str = "plane") -> np.ndarray:
    a = np.asarray(plane)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    h, w = a.shape
    if h == 0 or w == 0 or h % BLOCK or w % BLOCK:
        raise ShapeError(f"{name} dimensions {w}x{h} are not positive multiples of 8")
    return a


def tile_blocks(plane) -> np.ndarray:
    """Split a plane into non-overlapping 8x8 blocks.

    Returns a view of shape ``(rows, cols, 8, 8)``; block ``[r, c]`` covers
    pixel rows ``8r..8r+7`` and columns ``8c..8c+7``.
    """
    a = check_plane(plane)
    h, w = a.shape
    return a.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK).swapaxes(1, 2)


def untile_blocks(blocks) -> np.ndarray:
    b = np.asarray(blocks)
    if b.ndim != 4 or b.shape[2:] != (BLOCK, BLOCK):
        raise ShapeError(f"expected (rows, cols, 8, 8) blocks, got {b.shape}")
    r, c = b.shape[:2]
    return b.swapaxes(1, 2).reshape(r * BLOCK, c * BLOCK)


def iter_blocks(plane) -> Iterator[tuple[tuple[int, int], np.ndarray]]:
    """Yield ``((row, col), block)`` pairs in row-major block order."""
    blocks = tile_blocks(plane)
    for r in range(blocks.shape[0]):
        for c in range(blocks.shape[1]):
            yield (r, c), blocks[r, c]


def block_dct(plane) -> np.ndarray:
    """Blockwise forward DCT of a whole plane, returned as a spectral plane."""
    return untile_blocks(forward_dct(tile_blocks(np.asarray(plane, dtype=np.float64))))


def block_idct(plane) -> np.ndarray:
    return untile_blocks(inverse_dct(tile_blocks(np.asarray(plane, dtype=np.float64))))


def block_samples(plane) -> np.ndarray:
    """Rearrange a plane to ``(n_blocks, 64)``; column ``i`` is in-block index ``i``."""
    blocks = tile_blocks(plane)
    return blocks.reshape(-1, BLOCK * BLOCK)


def _even_even(u: int) -> bool:
    return (u // BLOCK) % 2 == 0 and (u % BLOCK) % 2 == 0


# DCT of an integer block at these frequencies is an integer multiple of 1/8.
LATTICE_FREQUENCIES = (0, 4, 32, 36)
# Both indices even: basis entries are built from cos(pi/8), cos(3pi/8) and
# sqrt(2)/2 only, so coefficients of integer blocks sit on a rank <= 2 module
# and their fine-scale distribution is visibly discrete.
EVEN_FREQUENCIES = tuple(u for u in range(BLOCK * BLOCK) if _even_even(u))
# At least one odd index: rank-4 coefficient module, effectively continuous.
GENERIC_FREQUENCIES = tuple(u for u in range(BLOCK * BLOCK) if not _even_even(u))
