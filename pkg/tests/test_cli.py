import json

import numpy as np
import pytest

from jpegnoise import cli
from jpegnoise.codec import compress, quantized_coefficients
from jpegnoise.corpus import synthetic_corpus
from jpegnoise.formats import read_csv_report, write_pgm, write_plane
from jpegnoise.tables import QuantTable, ijg_table


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    im = synthetic_corpus(11, 1, 128)[0]
    write_pgm("img.pgm", im)
    write_pgm("c5.pgm", compress(im, [QuantTable.constant(5)]))
    write_plane("q100.plane", quantized_coefficients(im, ijg_table(100)), "int32")
    write_plane("q90.plane", quantized_coefficients(im, ijg_table(90)), "int32")
    return tmp_path


def run(*args):
    return cli.main([str(a) for a in args])


def manifest(path):
    return json.loads(open(path).read())


def test_gen_table(work, capsys):
    assert run("gen-table", "--quality", 75, "--out", "t.txt", "--jpeg-header", "h.jpg") == 0
    assert capsys.readouterr().out.split()[0] == str(ijg_table(75).dc)
    m = manifest("t.csv.manifest.json")
    assert m["command"] == "gen-table" and m["version"] and m["timestamp"]
    assert len(read_csv_report("t.csv")) == 64
    assert run("detect-recompress", "--coeffs", "q90.plane", "--jpeg", "h.jpg") == 0


def test_simulate_writes_trace(work):
    (work / "t.txt").write_text(ijg_table(80).to_text())
    assert run("simulate", "--input", "img.pgm", "--tables", "const:3", "t.txt", "--out", "tr") == 0
    assert (work / "tr" / "cycle_2" / "aux_dct.plane").exists()
    assert len(read_csv_report(work / "tr" / "noise_summary.csv")) == 8
    m = manifest(work / "tr" / "run_manifest.json")
    assert set(m["inputs"]) == {"img.pgm", "t.txt"}


def test_estimate(work, capsys):
    assert run("estimate-qstep", "--input", "c5.pgm", "--report", "e.csv", "--emit-curve", "curve.csv") == 0
    assert capsys.readouterr().out.strip() == "5"
    assert read_csv_report("e.csv")[0]["step"] == "5"
    assert len(read_csv_report("curve.csv")) == 64
    assert run("estimate-qstep", "--input", "c5.pgm", "--mode", "per-freq", "--report", "p.csv") == 0
    assert len(read_csv_report("p.csv")) == 64


def test_calibrate_then_detect(work, capsys):
    assert run("calibrate-detector", "--size", 64, "--n-images", 16, "--out", "det.toml") == 0
    assert run("detect-recompress", "--coeffs", "q100.plane", "--table", "ijg:100",
               "--config", "det.toml", "--report", "d.csv") == 0
    row = read_csv_report("d.csv")[0]
    assert row["verdict"] in ("SINGLE", "IDENTICAL_DOUBLE") and row["min_step"] == "1"
    m = manifest("d.csv.manifest.json")
    assert set(m["inputs"]) == {"q100.plane", "det.toml"}


def test_out_of_domain_warns_and_succeeds(work, capsys):
    assert run("detect-recompress", "--coeffs", "q90.plane", "--table", "ijg:90", "--report", "d.csv") == 0
    out = capsys.readouterr()
    assert "OUT_OF_DOMAIN" in out.out and "warning" in out.err
    assert manifest("d.csv.manifest.json")["config"]["threshold"] is None


@pytest.mark.parametrize("args, code", [
    (("detect-recompress", "--coeffs", "q90.plane", "--table", "missing.txt"), cli.EXIT_CONFIG),
    (("detect-recompress", "--coeffs", "q100.plane", "--table", "ijg:100"), cli.EXIT_CONFIG),
    (("detect-recompress", "--coeffs", "img.pgm", "--table", "ijg:90"), cli.EXIT_PARSE),
    (("detect-recompress", "--coeffs", "nope.plane", "--table", "ijg:90"), cli.EXIT_IO),
    (("detect-recompress", "--coeffs", "q90.plane", "--table", "ijg:90", "--dequantized"), cli.EXIT_INTEGRITY),
    (("calibrate-qstep", "--steps", "4", "--size", 32, "--n-per-step", 2, "--out", "x.toml"), cli.EXIT_CONFIG),
    (("calibrate-detector", "--single-coeffs", "q100.plane", "--out", "x.toml"), cli.EXIT_CONFIG),
    (("estimate-qstep", "--input", "img.pgm", "--config", "nope.toml"), cli.EXIT_CONFIG),
    (("estimate-qstep", "--input", "q90.plane"), cli.EXIT_PARSE),
    (("gen-table", "--quality", 0, "--out", "t.txt"), cli.EXIT_CONFIG),
])
def test_exit_codes(work, args, code):
    assert run(*args) == code


def test_usage_error(work):
    with pytest.raises(SystemExit) as exc:
        run("estimate-qstep")
    assert exc.value.code == cli.EXIT_USAGE


def test_shape_error_exit(work):
    (work / "tiny.pgm").write_bytes(b"P5\n4 4\n255\n" + bytes(16))
    assert run("estimate-qstep", "--input", "tiny.pgm") == cli.EXIT_DATA


def test_calibrate_qstep_writes_usable_config(work):
    assert run("calibrate-qstep", "--steps", "1-4", "--size", 64, "--n-per-step", 4, "--out", "th.toml") == 0
    assert run("estimate-qstep", "--input", "c5.pgm", "--config", "th.toml", "--report", "e.csv") == 0
    assert manifest("th.csv.manifest.json")["seed"] == 0


def test_benchmark_matrix(work):
    assert run("benchmark", "--task", "estimate", "--sizes", "64,32", "--steps", "1,3",
               "--n-images", 20, "--report", "b.csv", "--detail", "bd.csv") == 0
    rows = read_csv_report("b.csv")
    assert [r["step"] for r in rows] == ["1", "3"] and set(rows[0]) == {"step", "64", "32"}
    assert len(read_csv_report("bd.csv")) == 4


def test_validate_model_is_deterministic(work):
    args = ("validate-model", "--n-images", 3, "--size", 64, "--seed", 4)
    codes = [run(*args, "--report", name) for name in ("v1.csv", "v2.csv")]
    # a three-image corpus is too small for the statistical checks, but no exact check may fail
    assert codes == [cli.EXIT_CHECK_FAILED] * 2
    assert not any(cli.is_integrity_check(r["name"]) for r in read_csv_report("v1.csv") if r["verdict"] == "fail")
    assert open("v1.csv").read() == open("v2.csv").read()
    assert manifest("v1.csv.manifest.json")["seed"] == 4


def test_validate_model_flags_tampered_trace(work):
    assert run("simulate", "--input", "img.pgm", "--tables", "ijg:75", "--out", "tr") == 0
    bad = np.zeros((128, 128))
    bad[0, 0] = 0.75
    write_plane(work / "tr" / "cycle_1" / "round_noise.plane", bad, "float64")
    code = run("validate-model", "--n-images", 2, "--size", 64, "--trace", "tr", "--report", "v.csv")
    assert code == cli.EXIT_INTEGRITY
    failed = {r["name"] for r in read_csv_report("v.csv") if r["verdict"] == "fail"}
    assert "supplied_identity_round_from_aux" in failed


def test_empty_corpus_is_config_error(work):
    (work / "empty").mkdir()
    assert run("validate-model", "--corpus", "empty", "--report", "v.csv") == cli.EXIT_CONFIG
