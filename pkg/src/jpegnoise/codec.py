"""Multi-cycle lossy JPEG simulation with full noise bookkeeping.

One cycle maps an integer plane ``X`` to ``Xnext``::

    Y      = DCT(X)                  (blockwise)
    Ytilde = round(Y / q) * q        (quantize + dequantize)
    Xtilde = IDCT(Ytilde)
    Xnext  = round(Xtilde)

and the four noises of cycle ``k`` are::

    quant_noise  y(k)      = Y(k) - Ytilde(k)
    round_noise  x(k->k+1) = Xtilde(k) - X(k+1)
    aux_spatial  x(k)      = X(k) - Xtilde(k)
    aux_dct      y(k->k+1) = Ytilde(k) - Y(k+1)

Entropy coding is lossless and therefore skipped. Cycles are numbered from 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import IntegrityError, ShapeError
from .tables import QuantTable
from .transform import block_dct, block_idct, block_samples, check_plane, round_int

NOISE_KINDS = ("quant_noise", "round_noise", "aux_spatial", "aux_dct")
_SPECTRAL = {"quant_noise", "aux_dct"}
LEVEL_SHIFT = 128.0


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class CycleRecord:
    X: np.ndarray
    Y: np.ndarray
    Ytilde: np.ndarray
    Xtilde: np.ndarray
    Xnext: np.ndarray
    table: QuantTable
    level_shift: bool = False
    clip: bool = False


@dataclass(frozen=True)
class NoiseSet:
    quant_noise: np.ndarray
    round_noise: np.ndarray
    aux_spatial: np.ndarray
    aux_dct: np.ndarray

    def get(self, kind: str) -> np.ndarray:
        if kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {kind!r}; expected one of {NOISE_KINDS}")
        return getattr(self, kind)


@dataclass(frozen=True)
class CompressionTrace:
    source: np.ndarray
    cycles: tuple[CycleRecord, ...]
    noises: tuple[NoiseSet, ...] = field(default=())

    def __post_init__(self):
        if not self.cycles:
            raise ValueError("a trace needs at least one cycle")
        if len(self.cycles) != len(self.noises):
            raise ValueError("cycles and noises must have equal length")

    @property
    def n_cycles(self) -> int:
        return len(self.cycles)

    @property
    def tables(self) -> list[QuantTable]:
        return [c.table for c in self.cycles]

    def cycle(self, k: int) -> CycleRecord:
        return self.cycles[self._index(k)]

    def noise(self, k: int) -> NoiseSet:
        return self.noises[self._index(k)]

    def _index(self, k: int) -> int:
        if not 1 <= k <= len(self.cycles):
            raise IndexError(f"cycle {k} outside 1..{len(self.cycles)}")
        return k - 1

    @property
    def output(self) -> np.ndarray:
        return self.cycles[-1].Xnext


def quantize(Y, table: QuantTable | np.ndarray):
    """Quantize-dequantize a spectral block or plane.

    ``table`` may be a :class:`QuantTable` (tiled over ``Y``) or an array of
    steps broadcastable against ``Y``. Returns ``(Ytilde, y)`` with
    ``y = Y - Ytilde``.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if isinstance(table, QuantTable):
        if Y.shape == (8, 8):
            q = table.as_block()
        else:
            q = table.plane(check_plane(Y, "spectral plane").shape)
    else:
        q = np.asarray(table, dtype=np.float64)
    Ytilde = round_int(Y / q) * q
    return Ytilde, Y - Ytilde


def _is_integer_plane(X: np.ndarray) -> bool:
    return bool(np.all(np.isfinite(X)) and np.all(X == np.round(X)))


def encode_decode_cycle(X, table: QuantTable, *, level_shift: bool = False,
                        clip: bool = False) -> CycleRecord:
    X = check_plane(np.asarray(X, dtype=np.float64), "input plane")
    if not _is_integer_plane(X):
        raise IntegrityError("cycle input must be integer valued")
    shift = LEVEL_SHIFT if level_shift else 0.0
    Y = block_dct(X - shift)
    Ytilde, _ = quantize(Y, table)
    Xtilde = block_idct(Ytilde) + shift
    Xnext = round_int(Xtilde)
    if clip:
        Xnext = np.clip(Xnext, 0.0, 255.0)
    return CycleRecord(
        X=_frozen(X), Y=_frozen(Y), Ytilde=_frozen(Ytilde), Xtilde=_frozen(Xtilde),
        Xnext=_frozen(Xnext), table=table, level_shift=level_shift, clip=clip,
    )


def extract_noises(record: CycleRecord, X_next) -> NoiseSet:
    """Compute the four noises of a cycle given the next cycle's input plane."""
    X_next = np.asarray(X_next, dtype=np.float64)
    if X_next.shape != record.X.shape:
        raise ShapeError(f"next-cycle input shape {X_next.shape} != {record.X.shape}")
    shift = LEVEL_SHIFT if record.level_shift else 0.0
    Y_next = block_dct(X_next - shift)
    return NoiseSet(
        quant_noise=_frozen(record.Y - record.Ytilde),
        round_noise=_frozen(record.Xtilde - X_next),
        aux_spatial=_frozen(record.X - record.Xtilde),
        aux_dct=_frozen(record.Ytilde - Y_next),
    )


def run_cycles(X0, tables: Sequence[QuantTable], *, level_shift: bool = False,
               clip: bool = False) -> CompressionTrace:
    if len(tables) < 1:
        raise ValueError("run_cycles needs at least one table")
    X = np.asarray(X0, dtype=np.float64)
    source = _frozen(X.copy())
    cycles, noises = [], []
    for table in tables:
        rec = encode_decode_cycle(X, table, level_shift=level_shift, clip=clip)
        cycles.append(rec)
        noises.append(extract_noises(rec, rec.Xnext))
        X = rec.Xnext
    return CompressionTrace(source=source, cycles=tuple(cycles), noises=tuple(noises))


def compress(X0, tables: Sequence[QuantTable], **kw) -> np.ndarray:
    """Decoded integer plane after running ``tables`` in sequence."""
    X = np.asarray(X0, dtype=np.float64)
    for table in tables:
        X = encode_decode_cycle(X, table, **kw).Xnext
    return X


def quantized_coefficients(X, table: QuantTable, *, level_shift: bool = False) -> np.ndarray:
    """Integer coefficient plane ``round(DCT(X)/q)`` as a JPEG file would store it."""
    shift = LEVEL_SHIFT if level_shift else 0.0
    Y = block_dct(np.asarray(X, dtype=np.float64) - shift)
    return round_int(Y / table.plane(Y.shape))


def per_index_stats(trace: CompressionTrace, which: str, k: int):
    """Per in-block index sample mean and variance of one noise plane.

    Spectral noises are indexed by frequency ``u``, pixel-domain noises by
    position ``m``; both in row-major order. Returns two arrays of length 64.
    """
    plane = trace.noise(k).get(which)
    s = block_samples(plane)
    return s.mean(axis=0), s.var(axis=0)


def is_spectral(kind: str) -> bool:
    return kind in _SPECTRAL


# -- integrity checks -------------------------------------------------------------

@dataclass(frozen=True)
class IdentityReport:
    """Worst-case deviations of the noise identities on one cycle."""

    cycle: int
    aux_spatial_vs_idct: float
    aux_dct_vs_dct: float
    round_vs_aux: float
    ties: int
    lattice: float
    quant_support: float
    round_support: float

    def ok(self, tol: float = 1e-9) -> bool:
        return (
            self.aux_spatial_vs_idct <= tol
            and self.aux_dct_vs_dct <= tol
            and self.round_vs_aux <= tol
            and self.lattice <= tol
            and self.quant_support <= tol
            and self.round_support <= tol
        )


def check_identities(trace: CompressionTrace, tie_tol: float = 1e-9) -> list[IdentityReport]:
    """Evaluate the noise identities on every cycle of ``trace``.

    ``round_vs_aux`` compares ``x(k->k+1)`` with ``-(x(k) - round(x(k)))``.
    Where ``Xtilde`` sits on a half-integer no rounding rule satisfies that
    identity and ``x(k)`` at the same time (the two sides are +0.5 and -0.5),
    so those samples are counted in ``ties`` and compared by magnitude only.
    Clipped traces are checked too; saturated pixels then show up as
    support violations.
    """
    reports = []
    for k, (rec, nz) in enumerate(zip(trace.cycles, trace.noises), start=1):
        d6 = np.max(np.abs(nz.aux_spatial - block_idct(nz.quant_noise)))
        d7 = np.max(np.abs(nz.aux_dct - block_dct(nz.round_noise)))
        aux = nz.aux_spatial
        rhs = -(aux - round_int(aux))
        frac = np.abs(np.abs(rec.Xtilde - np.floor(rec.Xtilde)) - 0.5)
        tie = frac <= tie_tol
        diff = np.where(tie, np.abs(np.abs(nz.round_noise) - np.abs(rhs)), np.abs(nz.round_noise - rhs))
        q = rec.table.plane(rec.Y.shape)
        ratio = rec.Ytilde / q
        lattice = np.max(np.abs(ratio - np.round(ratio)) * q)
        qs = np.max(np.abs(nz.quant_noise) - q / 2)
        rs = np.max(np.abs(nz.round_noise)) - 0.5
        reports.append(IdentityReport(
            cycle=k, aux_spatial_vs_idct=float(d6), aux_dct_vs_dct=float(d7),
            round_vs_aux=float(np.max(diff)), ties=int(np.count_nonzero(tie)),
            lattice=float(lattice), quant_support=float(max(qs, 0.0)),
            round_support=float(max(rs, 0.0)),
        ))
    return reports
