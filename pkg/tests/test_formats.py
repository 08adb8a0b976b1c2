import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jpegnoise.errors import ConfigError, ParseError, ShapeError
from jpegnoise.formats import (
    ZIGZAG, decode_plane, dqt_segment, encode_pgm, encode_plane, header_bytes, parse_jpeg_markers,
    parse_pgm, read_csv_report, rowmajor_to_zigzag, write_csv_report, zigzag_to_rowmajor,
)
from jpegnoise.tables import IJG_LUMINANCE, QuantTable, ijg_table, parse_table_text

steps = st.lists(st.integers(1, 65535), min_size=64, max_size=64)


# -- tables ---------------------------------------------------------------------------

def test_ijg_quality_scaling():
    assert ijg_table(50).steps == IJG_LUMINANCE
    assert ijg_table(100).steps == (1,) * 64
    t90 = ijg_table(90)
    assert t90.dc == 3 and t90.min_step == 2 and not t90.has_unit_step()
    assert ijg_table(95).has_unit_step()
    assert ijg_table(1).max_step == 255  # baseline clamp


@pytest.mark.parametrize("bad", [(0,) * 64, (1,) * 63, (1.5,) * 64])
def test_table_validation(bad):
    with pytest.raises(ConfigError):
        QuantTable(bad)


def test_table_text_round_trip():
    t = ijg_table(80)
    assert parse_table_text(t.to_text()) == t
    assert parse_table_text("7  # constant") == QuantTable.constant(7)
    with pytest.raises(ConfigError):
        parse_table_text("1 2 x")


# -- zigzag and DQT ----------------------------------------------------------------------

def test_zigzag_known_prefix():
    assert list(ZIGZAG[:10]) == [0, 1, 8, 16, 9, 2, 3, 10, 17, 24]
    assert sorted(ZIGZAG) == list(range(64))


@given(steps)
def test_zigzag_round_trip(values):
    assert zigzag_to_rowmajor(rowmajor_to_zigzag(values)) == values


@given(steps)
def test_dqt_round_trip(values):
    t = QuantTable(tuple(values))
    info = parse_jpeg_markers(b"\xff\xd8" + dqt_segment({2: t}) + b"\xff\xd9")
    assert info.quant_tables[2] == t
    assert info.precision[2] == (16 if max(values) > 255 else 8)


def test_header_bytes_parse():
    info = parse_jpeg_markers(header_bytes(ijg_table(75), 64, 32))
    assert info.markers == ["SOI", "DQT", "SOF0", "SOS"]
    assert (info.width, info.height) == (64, 32)
    assert info.table_for_component(0) == ijg_table(75)


@pytest.mark.parametrize("data", [
    b"", b"\xff", b"\x00\xd8", b"\xff\xd8", b"\xff\xd8\xff", b"\xff\xd8\xff\xdb\x00",
    b"\xff\xd8\xff\xdb\x00\x01", b"\xff\xd8\xff\xdb\x00\x43\x00", b"\xff\xd8\xff\xdb\x00\x03\x25",
    b"\xff\xd8\x12", b"\xff\xd8\xff\xd8", b"\xff\xd8\xff\x00",
])
def test_marker_parser_rejects_malformed(data):
    with pytest.raises(ParseError):
        parse_jpeg_markers(data)


def test_zero_step_in_dqt_is_parse_error():
    seg = b"\xff\xdb" + struct.pack(">H", 67) + b"\x00" + bytes(64)
    with pytest.raises(ParseError):
        parse_jpeg_markers(b"\xff\xd8" + seg + b"\xff\xd9")


def test_missing_component_table():
    sof = struct.pack(">BHHB", 8, 8, 8, 1) + bytes([1, 0x11, 3])
    data = b"\xff\xd8\xff\xc0" + struct.pack(">H", len(sof) + 2) + sof + b"\xff\xd9"
    with pytest.raises(ParseError):
        parse_jpeg_markers(data).table_for_component(0)


# -- PGM ----------------------------------------------------------------------------

@pytest.mark.parametrize("ascii_", [False, True])
@pytest.mark.parametrize("maxval", [255, 1023])
def test_pgm_round_trip(rng, ascii_, maxval):
    X = rng.integers(0, maxval + 1, (16, 24))
    img = parse_pgm(encode_pgm(X, ascii=ascii_, maxval=maxval))
    np.testing.assert_array_equal(img.plane, X)
    assert img.maxval == maxval and not img.warnings


def test_pgm_comments_and_crop():
    data = b"P2\n# comment\n10 9 # more\n255\n" + b" ".join(b"%d" % (i % 200) for i in range(90))
    img = parse_pgm(data)
    assert img.plane.shape == (8, 8)
    assert img.warnings and "cropped" in img.warnings[0]


@pytest.mark.parametrize("data", [
    b"P6\n1 1\n255\n\x00", b"P5\n8 8\n255\n" + bytes(10), b"P5\n0 8\n255\n", b"P5\n8 8\n70000\n",
    b"P2\n8 8\n255\n1 2 3", b"P5 8 8 255", b"P2\n8 1\n9\n" + b"10 " * 8,
])
def test_pgm_rejects_malformed(data):
    with pytest.raises(ParseError):
        parse_pgm(data)


def test_pgm_too_small():
    with pytest.raises(ShapeError):
        parse_pgm(b"P5\n4 4\n255\n" + bytes(16))


# -- plane files and CSV ------------------------------------------------------------

def test_plane_round_trip(rng):
    f = rng.normal(size=(8, 16))
    np.testing.assert_array_equal(decode_plane(encode_plane(f)), f)
    i = rng.integers(-1000, 1000, (16, 8))
    out = decode_plane(encode_plane(i, "int32"))
    assert np.issubdtype(out.dtype, np.integer)
    np.testing.assert_array_equal(out, i)


@pytest.mark.parametrize("data", [b"", b"XXXX" + bytes(12), encode_plane(np.zeros((8, 8)))[:-1]])
def test_plane_rejects_malformed(data):
    with pytest.raises(ParseError):
        decode_plane(data)


def test_csv_report_round_trip(tmp_path):
    rows = [{"a": 1, "b": 0.5, "c": True}, {"a": 2, "b": float("nan"), "c": False}]
    write_csv_report(tmp_path / "r.csv", rows, ("a", "b", "c"))
    back = read_csv_report(tmp_path / "r.csv")
    assert [r["a"] for r in back] == ["1", "2"]
    assert back[0]["b"] == "0.5"
