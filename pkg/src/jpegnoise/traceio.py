"""On-disk layout for compression traces.

A trace directory holds::

    manifest.json             cycle count, plane shape, tables, flags
    source.plane              integer input plane
    cycle_<k>/<name>.plane    X, Y, Ytilde, Xtilde, Xnext and the four noises

Planes use the binary plane-file format of :mod:`jpegnoise.formats`
(integer planes as int32, everything else as float64). Loading does not
re-validate the signals, so a tampered trace can still be inspected with
:func:`jpegnoise.codec.check_identities`.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .codec import NOISE_KINDS, CompressionTrace, CycleRecord, NoiseSet
from .errors import ParseError
from .formats import read_plane, write_plane
from .tables import QuantTable

MANIFEST = "manifest.json"
LAYOUT_VERSION = 1
_SIGNALS = ("X", "Y", "Ytilde", "Xtilde", "Xnext")
_INTEGER = {"X", "Xnext"}


def save_trace(trace: CompressionTrace, directory: str | Path) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    write_plane(out / "source.plane", trace.source, "int32")
    for k, (rec, nz) in enumerate(zip(trace.cycles, trace.noises), start=1):
        d = out / f"cycle_{k}"
        d.mkdir(exist_ok=True)
        for name in _SIGNALS:
            write_plane(d / f"{name}.plane", getattr(rec, name), "int32" if name in _INTEGER else "float64")
        for kind in NOISE_KINDS:
            write_plane(d / f"{kind}.plane", nz.get(kind), "float64")
    first = trace.cycles[0]
    manifest = {
        "layout_version": LAYOUT_VERSION,
        "n_cycles": trace.n_cycles,
        "height": int(trace.source.shape[0]),
        "width": int(trace.source.shape[1]),
        "tables": [list(t.steps) for t in trace.tables],
        "level_shift": bool(first.level_shift),
        "clip": bool(first.clip),
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
    return out


def load_trace(directory: str | Path) -> CompressionTrace:
    d = Path(directory)
    try:
        manifest = json.loads((d / MANIFEST).read_text())
        n = int(manifest["n_cycles"])
        tables = [QuantTable(tuple(int(s) for s in t)) for t in manifest["tables"]]
        level_shift = bool(manifest.get("level_shift", False))
        clip = bool(manifest.get("clip", False))
    except FileNotFoundError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"{d / MANIFEST}: malformed trace manifest ({exc})") from None
    if n < 1 or len(tables) != n:
        raise ParseError(f"{d / MANIFEST}: cycle count does not match the table list")
    source = read_plane(d / "source.plane").astype(np.float64)
    cycles, noises = [], []
    for k in range(1, n + 1):
        c = d / f"cycle_{k}"
        sig = {name: read_plane(c / f"{name}.plane").astype(np.float64) for name in _SIGNALS}
        cycles.append(CycleRecord(**sig, table=tables[k - 1], level_shift=level_shift, clip=clip))
        noises.append(NoiseSet(**{kind: read_plane(c / f"{kind}.plane") for kind in NOISE_KINDS}))
    return CompressionTrace(source=source, cycles=tuple(cycles), noises=tuple(noises))
