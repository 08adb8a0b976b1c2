"""First-cycle quantization step estimation from a decompressed image.

The image is re-transformed and requantized with every candidate step ``q``;
``S(q)``, the mean squared requantization noise, dips to a local minimum at
the step used by the original compression. The decision rule keeps the
largest local minimum below ``t_xi``; when there is none it separates step 2
from step 1 with ``t_c`` applied to ``S(2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.ndimage import distance_transform_edt

from .errors import ConfigError, DomainError
from .transform import block_dct, block_samples, round_int

ALL = "all"
DEFAULT_QMAX = 64
# fewer blocks than this and the estimate is flagged
MIN_CONFIDENT_BLOCKS = 16


@dataclass(frozen=True)
class EstimatorConfig:
    t_c: float = 0.2
    t_xi: float = 0.25
    q_max: int = DEFAULT_QMAX
    exclude_zeros: bool = False
    level_shift: bool = False

    def __post_init__(self):
        if self.q_max < 2:
            raise ConfigError("q_max must be >= 2")
        if not (self.t_c > 0 and self.t_xi > 0):
            raise ConfigError("thresholds must be positive")


@dataclass(frozen=True)
class VarCurve:
    q_values: np.ndarray
    s_var: np.ndarray
    n_samples: int
    minima: tuple[int, ...] = ()

    def at(self, q: int) -> float:
        return float(self.s_var[q - 1])

    def rows(self) -> list[dict]:
        mins = set(self.minima)
        return [{"q": int(q), "s_var": float(s), "is_local_min": int(q) in mins}
                for q, s in zip(self.q_values, self.s_var)]


def _coefficients(image, u, *, exclude_zeros: bool, level_shift: bool) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    Y = block_samples(block_dct(img - (128.0 if level_shift else 0.0)))
    if u is None or u == ALL:
        c = Y.ravel()
    else:
        if not 0 <= int(u) < 64:
            raise DomainError(f"frequency index {u} outside 0..63")
        c = Y[:, int(u)]
    if exclude_zeros:
        c = c[round_int(c) != 0]
    return c


def curve_from_coefficients(coeffs, q_max: int = DEFAULT_QMAX) -> VarCurve:
    c = np.asarray(coeffs, dtype=np.float64).ravel()
    if c.size == 0:
        raise DomainError("no coefficients left to build S(q)")
    if q_max < 2:
        raise DomainError("q_max must be >= 2")
    qs = np.arange(1, q_max + 1)
    s = np.empty(q_max)
    for i, q in enumerate(qs):
        y = c - round_int(c / q) * q
        s[i] = np.mean(y * y)
    curve = VarCurve(q_values=qs, s_var=s, n_samples=int(c.size))
    return VarCurve(qs, s, curve.n_samples, tuple(local_minima(curve)))


def svar_curve(image, u=ALL, q_max: int = DEFAULT_QMAX, *, exclude_zeros: bool = False,
               level_shift: bool = False) -> VarCurve:
    """S(q) for q = 1..q_max at frequency ``u`` (row-major 0..63) or pooled (``"all"``)."""
    return curve_from_coefficients(
        _coefficients(image, u, exclude_zeros=exclude_zeros, level_shift=level_shift), q_max)


def local_minima(curve: VarCurve) -> list[int]:
    """Steps ``q >= 3`` strictly below both neighbours.

    ``q = 2`` is never reported (it has no left neighbour among candidate
    steps); the estimator handles it with a separate threshold. The last
    sampled step has no right neighbour and is skipped too.
    """
    s = np.asarray(curve.s_var)
    if s.size < 3:
        raise DomainError("curve too short for a local-minimum search")
    q = np.asarray(curve.q_values)
    inner = (s[1:-1] < s[:-2]) & (s[1:-1] < s[2:])
    return [int(v) for v in q[1:-1][inner] if v >= 3]


@dataclass(frozen=True)
class StepEstimate:
    step: int
    branch: str
    curve: VarCurve
    low_confidence: bool = False
    n_blocks: int = 0


def decide(curve: VarCurve, t_c: float, t_xi: float) -> tuple[int, str]:
    """Apply the three-branch rule to a built curve. Returns ``(step, branch)``."""
    cands = [q for q in curve.minima if curve.at(q) < t_xi]
    if cands:
        q_hat = max(cands)
        if q_hat >= 2:
            return q_hat, "local_min"
    if curve.at(2) < t_c:
        return 2, "t_c"
    return 1, "default"


def estimate_step(image, u=ALL, config: EstimatorConfig = EstimatorConfig()) -> StepEstimate:
    img = np.asarray(image, dtype=np.float64)
    curve = svar_curve(img, u, max(config.q_max, 3), exclude_zeros=config.exclude_zeros,
                       level_shift=config.level_shift)
    step, branch = decide(curve, config.t_c, config.t_xi)
    n_blocks = img.size // 64
    return StepEstimate(step=step, branch=branch, curve=curve,
                        low_confidence=n_blocks < MIN_CONFIDENT_BLOCKS, n_blocks=n_blocks)


@dataclass(frozen=True)
class TableEstimate:
    steps: tuple[int, ...]
    low_confidence: bool
    per_frequency: bool
    estimates: tuple[StepEstimate, ...] = field(repr=False, default=())


def estimate_table(image, config: EstimatorConfig = EstimatorConfig(), *,
                   per_frequency: bool = False) -> TableEstimate:
    """64 step estimates. Pooled mode runs one estimate over all frequencies."""
    if not per_frequency:
        est = estimate_step(image, ALL, config)
        return TableEstimate((est.step,) * 64, est.low_confidence, False, (est,))
    ests = []
    for u in range(64):
        try:
            ests.append(estimate_step(image, u, config))
        except DomainError:
            # every coefficient excluded: nothing to say about this frequency
            ests.append(None)
    steps = tuple(e.step if e is not None else 1 for e in ests)
    low = any(e is None or e.low_confidence for e in ests)
    return TableEstimate(steps, low, True, tuple(e for e in ests if e is not None))


# ------------------------------------------------------------------ calibration

@dataclass(frozen=True)
class Calibration:
    config: EstimatorConfig
    accuracy: float
    n_images: int


CALIBRATION_GRID = np.linspace(0.0, 1.0 / 3.0, 401)[1:]


def calibrate_thresholds(images: Sequence, steps: Sequence[int], *, q_max: int = DEFAULT_QMAX,
                         exclude_zeros: bool = False, level_shift: bool = False,
                         grid: np.ndarray | None = None) -> Calibration:
    """Grid-search ``t_c`` and ``t_xi`` for the best pooled-mode accuracy on a training set.

    Requires at least two distinct true steps including 1 and 2. Thresholds
    are searched on ``(0, 1/3]`` with ``t_c < t_xi``; among equally accurate
    pairs the one farthest from any worse pair is kept.
    """
    steps = [int(s) for s in steps]
    if len(images) != len(steps) or not images:
        raise ConfigError("need one true step per training image")
    if len(set(steps)) < 2 or not {1, 2} <= set(steps):
        raise ConfigError("training set must contain at least steps 1 and 2")
    curves = [svar_curve(im, ALL, q_max, exclude_zeros=exclude_zeros, level_shift=level_shift)
              for im in images]
    g = np.asarray(grid if grid is not None else CALIBRATION_GRID, dtype=np.float64)
    truth = np.asarray(steps)

    # t_c only matters when no minimum survives t_xi
    s2 = np.array([c.at(2) for c in curves])
    # fallback prediction for every t_c at once: (grid, images)
    pred_fallback = np.where(s2[None, :] < g[:, None], 2, 1) == truth[None, :]
    correct = np.zeros((g.size, g.size))
    for j, t_xi in enumerate(g):
        lm = np.array([max((q for q in c.minima if c.at(q) < t_xi), default=0) for c in curves])
        has = lm >= 2
        correct[:, j] = np.count_nonzero(has & (lm == truth)) + pred_fallback[:, ~has].sum(axis=1)
    valid = g[:, None] < g[None, :]
    acc = np.where(valid, correct / len(curves), -1.0)
    best = acc.max()
    mask = acc == best
    dist = distance_transform_edt(mask)
    i, j = np.unravel_index(np.argmax(dist), dist.shape)
    cfg = EstimatorConfig(t_c=float(g[i]), t_xi=float(g[j]), q_max=q_max,
                          exclude_zeros=exclude_zeros, level_shift=level_shift)
    return Calibration(cfg, float(best), len(curves))


def global_minimum_baseline(curve: VarCurve, q_min: int = 2) -> int:
    """Naive comparator: the step with the smallest ``S(q)`` for ``q >= q_min``."""
    s = np.asarray(curve.s_var)[q_min - 1 :]
    return int(np.argmin(s)) + q_min
