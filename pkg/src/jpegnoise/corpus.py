"""Natural-image proxies for simulation and benchmarks.

The synthetic generator follows the usual coefficient model for photographs:
a smooth low-pass luminance field (roughly Gaussian block means) plus
per-block AC texture with zero-mean Laplacian coefficients whose spread
decays with frequency. Photographic patches come from the sample images
bundled with scikit-image, when it is installed.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .transform import BLOCK, block_idct, untile_blocks


def synthetic_image(rng: np.random.Generator, size: int | tuple[int, int] = 256) -> np.ndarray:
    """One integer-valued 8-bit image of ``size`` (side or ``(height, width)``)."""
    h, w = (size, size) if np.isscalar(size) else size
    field = gaussian_filter(rng.standard_normal((h, w)), sigma=rng.uniform(3.0, 12.0), mode="wrap")
    field -= field.mean()
    field *= rng.uniform(0.8, 2.5) / max(field.std(), 1e-12)
    field += rng.uniform(-0.8, 0.8)
    # logistic tone curve keeps whole patches from saturating
    field = 16.0 + 224.0 / (1.0 + np.exp(-field))

    i = np.arange(BLOCK)
    freq = i[:, None] + i[None, :]
    amplitude = rng.uniform(2.0, 10.0)
    decay = rng.uniform(0.72, 0.9)
    scale = amplitude * decay ** freq
    scale[0, 0] = 0.0
    # block activity varies across the image, as in photographs
    activity = np.exp(0.5 * rng.standard_normal((h // BLOCK, w // BLOCK, 1, 1)))
    coeffs = rng.laplace(0.0, 1.0, (h // BLOCK, w // BLOCK, BLOCK, BLOCK)) * scale * activity
    texture = block_idct(untile_blocks(coeffs))
    return np.clip(np.round(field + texture), 0, 255)


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """Independent generators, one per item, so results do not depend on evaluation order."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def synthetic_corpus(seed: int, n: int, size: int | tuple[int, int] = 256) -> list[np.ndarray]:
    return [synthetic_image(rng, size) for rng in spawn_rngs(seed, n)]


PHOTO_NAMES = ("camera", "moon", "grass", "gravel", "brick", "coins", "clock", "text", "page", "cell")


def _photos() -> list[np.ndarray]:
    try:
        from skimage import data
    except ImportError:  # pragma: no cover - optional dependency
        return []
    out = []
    for name in PHOTO_NAMES:
        try:
            img = getattr(data, name)()
        except Exception:  # pragma: no cover - missing sample file
            continue
        if img.ndim == 2:
            out.append(np.asarray(img, dtype=np.float64))
    return out


def photo_patches(rng: np.random.Generator, n: int, size: int = 128) -> list[np.ndarray]:
    """Random block-aligned crops of the bundled photographs (empty if unavailable)."""
    photos = [p for p in _photos() if min(p.shape) >= size]
    if not photos:
        return []
    out = []
    for _ in range(n):
        p = photos[rng.integers(len(photos))]
        r = rng.integers(0, (p.shape[0] - size) // BLOCK + 1) * BLOCK
        c = rng.integers(0, (p.shape[1] - size) // BLOCK + 1) * BLOCK
        out.append(p[r : r + size, c : c + size].copy())
    return out


def load_corpus(directory: str | Path, size: int | None = None) -> list[np.ndarray]:
    """Read every PGM in ``directory``; optionally center-crop each to ``size``."""
    from .formats import read_pgm

    planes = []
    for path in sorted(Path(directory).glob("*.pgm")):
        plane = read_pgm(path).plane
        if size is not None:
            if min(plane.shape) < size:
                continue
            r = ((plane.shape[0] - size) // 2) // BLOCK * BLOCK
            c = ((plane.shape[1] - size) // 2) // BLOCK * BLOCK
            plane = plane[r : r + size, c : c + size]
        planes.append(np.asarray(plane, dtype=np.float64))
    return planes
