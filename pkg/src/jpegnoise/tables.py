"""Quantization tables and the IJG quality-factor table generator."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ConfigError

# Standard luminance table (ITU-T T.81 Annex K), row-major.
IJG_LUMINANCE = (
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
)  # fmt: skip


@dataclass(frozen=True)
class QuantTable:
    """64 integer quantization steps in row-major block order (index 0 is DC)."""

    steps: tuple[int, ...]

    def __post_init__(self):
        steps = tuple(self.steps)
        if len(steps) != 64:
            raise ConfigError(f"quantization table needs 64 steps, got {len(steps)}")
        out = []
        for s in steps:
            if isinstance(s, (float, np.floating)) and not float(s).is_integer():
                raise ConfigError(f"quantization step {s!r} is not an integer")
            s = int(s)
            if s < 1:
                raise ConfigError(f"quantization step {s} is < 1")
            out.append(s)
        object.__setattr__(self, "steps", tuple(out))

    @classmethod
    def constant(cls, q: int) -> "QuantTable":
        return cls((q,) * 64)

    @classmethod
    def from_values(cls, values: Iterable) -> "QuantTable":
        return cls(tuple(np.asarray(list(values)).ravel().tolist()))

    def as_block(self) -> np.ndarray:
        return np.asarray(self.steps, dtype=np.float64).reshape(8, 8)

    def plane(self, shape: tuple[int, int]) -> np.ndarray:
        """Steps tiled over a plane of ``shape`` so they align with block coefficients."""
        h, w = shape
        return np.tile(self.as_block(), (h // 8, w // 8))

    @property
    def dc(self) -> int:
        return self.steps[0]

    @property
    def min_step(self) -> int:
        return min(self.steps)

    @property
    def max_step(self) -> int:
        return max(self.steps)

    def has_unit_step(self) -> bool:
        return self.min_step == 1

    def digest(self) -> str:
        return hashlib.sha256(",".join(map(str, self.steps)).encode()).hexdigest()[:16]

    def to_text(self) -> str:
        rows = [" ".join(f"{s:3d}" for s in self.steps[r * 8 : r * 8 + 8]) for r in range(8)]
        return "\n".join(rows) + "\n"


def parse_table_text(text: str) -> QuantTable:
    """Parse a table from whitespace/comma separated text.

    A single number means a constant table. ``#`` starts a comment.
    """
    tokens = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(t for t in line.replace(",", " ").split() if t)
    try:
        values = [int(t) for t in tokens]
    except ValueError as exc:
        raise ConfigError(f"non-integer entry in table text: {exc}") from None
    if len(values) == 1:
        return QuantTable.constant(values[0])
    return QuantTable(tuple(values))


def ijg_scale(quality: int) -> int:
    if not 1 <= quality <= 100:
        raise ConfigError(f"quality factor must be in 1..100, got {quality}")
    return 5000 // quality if quality < 50 else 200 - 2 * quality


def ijg_table(quality: int, base: Iterable[int] = IJG_LUMINANCE, baseline: bool = True) -> QuantTable:
    """Scale ``base`` the way libjpeg's ``jpeg_set_quality`` does."""
    scale = ijg_scale(quality)
    b = np.asarray(list(base), dtype=np.int64)
    q = (b * scale + 50) // 100
    q = np.clip(q, 1, 255 if baseline else 32767)
    return QuantTable(tuple(q.tolist()))
