"""Identical re-compression detection from the rounding-noise variance.

The decoder's float output ``IDCT(coefficients * q)`` is rebuilt from the
stored coefficients; the variance of its distance to the nearest integer
shrinks when the same table has been applied twice. This only separates
the two classes when the table holds at least one unit step: otherwise the
second cycle reproduces the first exactly and the detector declines.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .codec import compress, quantized_coefficients
from .errors import ConfigError, IntegrityError
from .tables import QuantTable
from .transform import block_idct, check_plane, round_int

ROUNDING_BOUND = 1.0 / 12.0


class Verdict(str, enum.Enum):
    SINGLE = "SINGLE"
    IDENTICAL_DOUBLE = "IDENTICAL_DOUBLE"
    OUT_OF_DOMAIN = "OUT_OF_DOMAIN"


def table_class(table: QuantTable) -> str:
    """Key for per-table thresholds: minimum step and table digest."""
    return f"min{table.min_step}-{table.digest()}"


@dataclass(frozen=True)
class DetectorConfig:
    T: float
    per_table: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for t in [self.T, *self.per_table.values()]:
            if not 0 < t < ROUNDING_BOUND:
                raise ConfigError(f"threshold {t} outside (0, 1/12)")

    def threshold_for(self, table: QuantTable) -> float:
        return self.per_table.get(table_class(table), self.T)


@dataclass(frozen=True)
class DetectionReport:
    sigma2_all: float
    verdict: Verdict
    table: QuantTable
    threshold: float

    @property
    def min_step(self) -> int:
        return self.table.min_step

    def row(self) -> dict:
        return {"sigma2_all": self.sigma2_all, "verdict": self.verdict.value, "min_step": self.min_step}


def dequantize(coeffs, table: QuantTable, *, dequantized: bool = False) -> np.ndarray:
    """Dequantized coefficient plane, checking it lies on the table's lattice."""
    c = check_plane(np.asarray(coeffs, dtype=np.float64), "coefficient plane")
    if not np.all(np.isfinite(c)):
        raise IntegrityError("coefficient plane has non-finite entries")
    q = table.plane(c.shape)
    levels = c / q if dequantized else c
    if not np.all(levels == np.round(levels)):
        what = "dequantized coefficients are not multiples of their steps" if dequantized \
            else "quantized coefficients are not integers"
        raise IntegrityError(what)
    return c if dequantized else c * q


def rounding_noise_stat(coeffs, table: QuantTable, *, dequantized: bool = False,
                        level_shift: bool = False) -> float:
    """Pooled variance of the rounding noise of the decoded float image."""
    Xt = block_idct(dequantize(coeffs, table, dequantized=dequantized))
    if level_shift:
        Xt = Xt + 128.0
    x = Xt - round_int(Xt)
    return float(np.var(x))


def decide(sigma2: float, table: QuantTable, threshold: float) -> Verdict:
    if not table.has_unit_step():
        return Verdict.OUT_OF_DOMAIN
    return Verdict.SINGLE if sigma2 > threshold else Verdict.IDENTICAL_DOUBLE


def detect(coeffs, table: QuantTable, config: DetectorConfig, *, dequantized: bool = False,
           level_shift: bool = False) -> DetectionReport:
    s2 = rounding_noise_stat(coeffs, table, dequantized=dequantized, level_shift=level_shift)
    t = config.threshold_for(table)
    return DetectionReport(sigma2_all=s2, verdict=decide(s2, table, t), table=table, threshold=t)


def simulate_pair(X0, table: QuantTable, *, level_shift: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Stored coefficients of a single and of an identically double compressed copy of ``X0``."""
    single = quantized_coefficients(X0, table, level_shift=level_shift)
    once = compress(X0, [table], level_shift=level_shift)
    double = quantized_coefficients(once, table, level_shift=level_shift)
    return single, double


# ------------------------------------------------------------------ calibration

@dataclass(frozen=True)
class DetectorCalibration:
    config: DetectorConfig
    balanced_accuracy: float
    n_single: int
    n_double: int


def balanced_accuracy(single_stats, double_stats, T: float) -> float:
    s = np.asarray(single_stats, dtype=np.float64)
    d = np.asarray(double_stats, dtype=np.float64)
    return 0.5 * (np.mean(s > T) + np.mean(d <= T))


def calibrate_threshold(single_stats: Sequence[float], double_stats: Sequence[float]) -> DetectorCalibration:
    """Threshold maximizing balanced accuracy between the two classes.

    Candidates are midpoints between consecutive pooled statistics. Among
    tied candidates the middle of the widest plateau is taken. Training data
    in which double-compressed images show the larger variance contradicts
    the detector's premise and is rejected.
    """
    s = np.asarray(single_stats, dtype=np.float64)
    d = np.asarray(double_stats, dtype=np.float64)
    if s.size == 0 or d.size == 0:
        raise ConfigError("calibration needs both single and double examples")
    if np.median(d) > np.median(s):
        raise ConfigError("double-compressed statistics exceed single ones: labels look swapped")
    pool = np.unique(np.concatenate([s, d]))
    cands = (pool[:-1] + pool[1:]) / 2 if pool.size > 1 else pool
    cands = cands[(cands > 0) & (cands < ROUNDING_BOUND)]
    if cands.size == 0:
        raise ConfigError("no admissible threshold in (0, 1/12)")
    acc = np.array([balanced_accuracy(s, d, t) for t in cands])
    best = np.flatnonzero(acc == acc.max())
    # longest run of consecutive best candidates, then its middle
    runs = np.split(best, np.flatnonzero(np.diff(best) != 1) + 1)
    run = max(runs, key=len)
    T = float(cands[run[len(run) // 2]])
    return DetectorCalibration(DetectorConfig(T), float(acc.max()), int(s.size), int(d.size))
