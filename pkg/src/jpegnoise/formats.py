"""File formats: PGM images, JPEG marker segments, raw plane files and CSV reports.

Plane file layout (little-endian)::

    offset  size  field
    0       4     magic  b"JNPL"
    4       1     dtype tag: 1 = int32, 2 = float64
    5       3     reserved, zero
    8       4     width  (uint32)
    12      4     height (uint32)
    16      ...   row-major payload, width*height items

The JPEG reader walks marker segments only (SOI, APPn/COM skip, DQT,
SOF0/1/2, SOS stop). Entropy-coded data is never decoded.
"""
from __future__ import annotations

import csv
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, JpegNoiseError, ParseError, ShapeError
from .tables import QuantTable

log = logging.getLogger(__name__)

MAX_PIXELS = 1 << 28

# ---------------------------------------------------------------- zigzag order

def _zigzag_order() -> np.ndarray:
    idx = sorted(((r, c) for r in range(8) for c in range(8)),
                 key=lambda rc: (rc[0] + rc[1], rc[0] if (rc[0] + rc[1]) % 2 else rc[1]))
    return np.array([r * 8 + c for r, c in idx])


#: ``ZIGZAG[k]`` is the row-major index of the k-th coefficient in zigzag order.
ZIGZAG = _zigzag_order()
ZIGZAG.flags.writeable = False


def zigzag_to_rowmajor(values: Sequence) -> list:
    if len(values) != 64:
        raise ValueError("zigzag sequence must have 64 entries")
    out = [None] * 64
    for k, v in enumerate(values):
        out[ZIGZAG[k]] = v
    return out


def rowmajor_to_zigzag(values: Sequence) -> list:
    if len(values) != 64:
        raise ValueError("row-major sequence must have 64 entries")
    return [values[i] for i in ZIGZAG]


# ------------------------------------------------------------------------- PGM

@dataclass
class PgmImage:
    plane: np.ndarray
    maxval: int
    warnings: list[str] = field(default_factory=list)


def _pgm_tokens(data: bytes, count: int):
    """Read ``count`` header tokens; return them and the offset after the last one."""
    tokens = []
    i, n = 2, len(data)
    while len(tokens) < count:
        while i < n and (data[i] in b" \t\r\n\f\v" or data[i] == 0x23):
            if data[i] == 0x23:
                while i < n and data[i] not in b"\r\n":
                    i += 1
            else:
                i += 1
        start = i
        while i < n and data[i] not in b" \t\r\n\f\v#":
            i += 1
        if start == i:
            raise ParseError("truncated PGM header")
        tok = data[start:i]
        if not tok.isdigit() or len(tok) > 9:
            raise ParseError(f"bad PGM header token {tok[:16]!r}")
        tokens.append(int(tok))
    return tokens, i


def parse_pgm(data: bytes) -> PgmImage:
    """Decode P2 (ascii) or P5 (binary) PGM bytes into an integer plane.

    Sides that are not multiples of 8 are center-cropped to the largest
    8-aligned region; a warning is recorded.
    """
    if len(data) < 2 or data[:2] not in (b"P2", b"P5"):
        raise ParseError("not a P2/P5 PGM file")
    (width, height, maxval), pos = _pgm_tokens(data, 3)
    if width == 0 or height == 0:
        raise ParseError("PGM has zero size")
    if width * height > MAX_PIXELS:
        raise ParseError(f"PGM too large: {width}x{height}")
    if not 0 < maxval <= 65535:
        raise ParseError(f"PGM maxval {maxval} outside 1..65535")
    if data[:2] == b"P5":
        if pos >= len(data) or data[pos] not in b" \t\r\n\f\v":
            raise ParseError("missing whitespace after PGM maxval")
        pos += 1
        dt = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = width * height * dt.itemsize
        if len(data) - pos < need:
            raise ParseError(f"truncated PGM payload: need {need} bytes, have {len(data) - pos}")
        pixels = np.frombuffer(data, dtype=dt, count=width * height, offset=pos).astype(np.int64)
    else:
        body = data[pos:].split()
        if len(body) < width * height:
            raise ParseError("truncated ascii PGM payload")
        body = body[: width * height]
        if not all(t.isdigit() and len(t) <= 6 for t in body):
            raise ParseError("non-numeric ascii PGM sample")
        pixels = np.array([int(t) for t in body], dtype=np.int64)
    if pixels.size and pixels.max() > maxval:
        raise ParseError("PGM sample exceeds maxval")
    plane = pixels.reshape(height, width)
    warnings = []
    h8, w8 = height // 8 * 8, width // 8 * 8
    if h8 == 0 or w8 == 0:
        raise ShapeError(f"PGM {width}x{height} is smaller than one 8x8 block")
    if (h8, w8) != (height, width):
        r, c = (height - h8) // 2, (width - w8) // 2
        plane = plane[r : r + h8, c : c + w8]
        msg = f"cropped {width}x{height} to {w8}x{h8} (offset {c},{r})"
        warnings.append(msg)
        log.warning(msg)
    return PgmImage(plane=plane.astype(np.float64), maxval=maxval, warnings=warnings)


def read_pgm(path: str | Path) -> PgmImage:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc
    try:
        return parse_pgm(data)
    except JpegNoiseError as exc:
        raise type(exc)(f"{path}: {exc}") from None


def encode_pgm(plane, *, ascii: bool = False, maxval: int | None = None) -> bytes:
    a = np.asarray(plane)
    if a.ndim != 2 or a.size == 0:
        raise ShapeError("PGM needs a non-empty 2-D plane")
    if not np.all(a == np.round(a)) or a.min() < 0:
        raise ValueError("PGM samples must be non-negative integers")
    a = a.astype(np.int64)
    maxval = int(maxval if maxval is not None else max(255, int(a.max())))
    if a.max() > maxval or maxval > 65535:
        raise ValueError("PGM samples exceed maxval")
    h, w = a.shape
    if ascii:
        rows = "\n".join(" ".join(str(v) for v in row) for row in a)
        return f"P2\n{w} {h}\n{maxval}\n".encode() + rows.encode() + b"\n"
    dt = ">u2" if maxval > 255 else "u1"
    return f"P5\n{w} {h}\n{maxval}\n".encode() + a.astype(dt).tobytes()


def write_pgm(path: str | Path, plane, **kw) -> None:
    Path(path).write_bytes(encode_pgm(plane, **kw))


# ------------------------------------------------------------------ JPEG markers

SOI, EOI, SOS, DQT = 0xD8, 0xD9, 0xDA, 0xDB
SOF_MARKERS = {0xC0: "SOF0", 0xC1: "SOF1", 0xC2: "SOF2"}
STANDALONE = set(range(0xD0, 0xD8)) | {0x01}


@dataclass
class JpegHeaderInfo:
    quant_tables: dict[int, QuantTable] = field(default_factory=dict)
    precision: dict[int, int] = field(default_factory=dict)
    width: int | None = None
    height: int | None = None
    sample_precision: int | None = None
    frame_type: str | None = None
    components: list[tuple[int, int, int, int]] = field(default_factory=list)
    markers: list[str] = field(default_factory=list)

    def table_for_component(self, index: int = 0) -> QuantTable:
        """Table used by the ``index``-th frame component (luminance by default)."""
        if not self.components:
            if not self.quant_tables:
                raise ParseError("no quantization tables")
            return self.quant_tables[min(self.quant_tables)]
        tq = self.components[index][3]
        if tq not in self.quant_tables:
            raise ParseError(f"component {index} references missing table {tq}")
        return self.quant_tables[tq]


def _parse_dqt(payload: bytes, info: JpegHeaderInfo) -> None:
    i = 0
    while i < len(payload):
        pq, tq = payload[i] >> 4, payload[i] & 0x0F
        i += 1
        if pq not in (0, 1):
            raise ParseError(f"DQT precision {pq} invalid")
        if tq > 3:
            raise ParseError(f"DQT table id {tq} invalid")
        size = 64 * (pq + 1)
        if len(payload) - i < size:
            raise ParseError("DQT segment shorter than its tables")
        fmt = ">64H" if pq else "64B"
        zz = struct.unpack_from(fmt, payload, i)
        i += size
        try:
            table = QuantTable(tuple(zigzag_to_rowmajor(zz)))
        except ConfigError as exc:
            raise ParseError(f"DQT table {tq}: {exc}") from None
        info.quant_tables[tq] = table
        info.precision[tq] = 16 if pq else 8


def _parse_sof(payload: bytes, info: JpegHeaderInfo, name: str) -> None:
    if len(payload) < 6:
        raise ParseError(f"{name} segment too short")
    p, h, w, nf = struct.unpack_from(">BHHB", payload, 0)
    if len(payload) < 6 + 3 * nf:
        raise ParseError(f"{name} component list truncated")
    info.sample_precision, info.height, info.width, info.frame_type = p, h, w, name
    info.components = []
    for k in range(nf):
        cid, hv, tq = payload[6 + 3 * k : 9 + 3 * k]
        info.components.append((cid, hv >> 4, hv & 0x0F, tq))


def parse_jpeg_markers(data: bytes) -> JpegHeaderInfo:
    """Walk JPEG marker segments up to the first SOS and decode DQT/SOF headers."""
    data = bytes(data)
    if len(data) < 2 or data[0] != 0xFF or data[1] != SOI:
        raise ParseError("missing SOI marker")
    info = JpegHeaderInfo(markers=["SOI"])
    i, n = 2, len(data)
    while True:
        if i >= n:
            raise ParseError("truncated stream: no SOS/EOI")
        if data[i] != 0xFF:
            raise ParseError(f"expected marker at offset {i}, found 0x{data[i]:02X}")
        while i < n and data[i] == 0xFF:
            i += 1
        if i >= n:
            raise ParseError("truncated stream inside marker")
        marker = data[i]
        i += 1
        if marker == 0x00:
            raise ParseError(f"stuffed byte outside entropy data at offset {i - 2}")
        if marker == EOI:
            info.markers.append("EOI")
            return info
        if marker in STANDALONE:
            info.markers.append(f"RST{marker - 0xD0}" if marker >= 0xD0 else "TEM")
            continue
        if marker == SOI:
            raise ParseError("unexpected second SOI")
        if n - i < 2:
            raise ParseError("truncated segment length")
        length = (data[i] << 8) | data[i + 1]
        if length < 2:
            raise ParseError(f"bad segment length {length} at offset {i}")
        if n - i < length:
            raise ParseError("segment runs past end of stream")
        payload = data[i + 2 : i + length]
        i += length
        if marker == DQT:
            info.markers.append("DQT")
            _parse_dqt(payload, info)
        elif marker in SOF_MARKERS:
            info.markers.append(SOF_MARKERS[marker])
            _parse_sof(payload, info, SOF_MARKERS[marker])
        elif marker == SOS:
            info.markers.append("SOS")
            return info
        elif 0xE0 <= marker <= 0xEF:
            info.markers.append(f"APP{marker - 0xE0}")
        else:
            info.markers.append(f"0x{marker:02X}")


def read_jpeg_header(path: str | Path) -> JpegHeaderInfo:
    return parse_jpeg_markers(Path(path).read_bytes())


def dqt_segment(tables: Mapping[int, QuantTable]) -> bytes:
    """Encode a DQT segment; tables with any step > 255 use 16-bit precision."""
    body = b""
    for tq, table in sorted(tables.items()):
        zz = rowmajor_to_zigzag(table.steps)
        if max(zz) > 255:
            body += bytes([0x10 | tq]) + struct.pack(">64H", *zz)
        else:
            body += bytes([tq]) + bytes(zz)
    return b"\xff\xdb" + struct.pack(">H", len(body) + 2) + body


def header_bytes(table: QuantTable, width: int, height: int) -> bytes:
    """Minimal grayscale baseline header: SOI, DQT, SOF0, SOS (no scan data)."""
    sof = struct.pack(">BHHB", 8, height, width, 1) + bytes([1, 0x11, 0])
    sos = bytes([1, 1, 0x00, 0, 63, 0])
    return (b"\xff\xd8" + dqt_segment({0: table})
            + b"\xff\xc0" + struct.pack(">H", len(sof) + 2) + sof
            + b"\xff\xda" + struct.pack(">H", len(sos) + 2) + sos)


# ------------------------------------------------------------------ plane files

PLANE_MAGIC = b"JNPL"
_DTYPES = {1: np.dtype("<i4"), 2: np.dtype("<f8")}
_TAGS = {"int32": 1, "float64": 2}
_HEADER = struct.Struct("<4sB3xII")


def encode_plane(plane, dtype: str | None = None) -> bytes:
    a = np.asarray(plane)
    if a.ndim != 2 or a.size == 0:
        raise ShapeError(f"plane must be non-empty 2-D, got shape {a.shape}")
    if dtype is None:
        dtype = "int32" if np.issubdtype(a.dtype, np.integer) else "float64"
    if dtype not in _TAGS:
        raise ValueError(f"unsupported plane dtype {dtype!r}")
    tag = _TAGS[dtype]
    if tag == 1:
        if not np.all(a == np.round(a)) or np.abs(a).max() > 2**31 - 1:
            raise ValueError("plane values do not fit int32")
    h, w = a.shape
    return _HEADER.pack(PLANE_MAGIC, tag, w, h) + a.astype(_DTYPES[tag]).tobytes()


def decode_plane(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise ParseError("plane file shorter than its header")
    magic, tag, w, h = _HEADER.unpack_from(data)
    if magic != PLANE_MAGIC:
        raise ParseError("bad plane file magic")
    if tag not in _DTYPES:
        raise ParseError(f"unknown plane dtype tag {tag}")
    if w == 0 or h == 0 or w * h > MAX_PIXELS:
        raise ParseError(f"bad plane dimensions {w}x{h}")
    dt = _DTYPES[tag]
    if len(data) - _HEADER.size != w * h * dt.itemsize:
        raise ParseError("plane payload length does not match header")
    a = np.frombuffer(data, dtype=dt, offset=_HEADER.size).reshape(h, w)
    return a.astype(np.float64) if tag == 2 else a.astype(np.int64)


def write_plane(path: str | Path, plane, dtype: str | None = None) -> None:
    path = Path(path)
    data = encode_plane(plane, dtype)
    try:
        path.write_bytes(data)
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


def read_plane(path: str | Path) -> np.ndarray:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc
    try:
        return decode_plane(data)
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from None


# -------------------------------------------------------------------------- CSV

def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return str(int(v))
    return v


def write_csv_report(path: str | Path, rows: Iterable[Mapping], fieldnames: Sequence[str]) -> None:
    """Write rows as CSV with LF line endings and round-trip exact floats."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(fieldnames), lineterminator="\n", extrasaction="ignore")
            w.writeheader()
            for row in rows:
                w.writerow({k: _cell(v) for k, v in row.items()})
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


def read_csv_report(path: str | Path) -> list[dict[str, str]]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
