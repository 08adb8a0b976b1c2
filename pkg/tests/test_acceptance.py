"""End-to-end acceptance criteria, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line (collected into the
terminal summary by ``conftest.py``) and then asserts. Seeds are fixed, so a
run is reproducible; the statistical criteria are evaluated once at that seed.
Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from jpegnoise.benchmark import calibrate_estimator, detection_benchmark, estimation_benchmark
from jpegnoise.codec import run_cycles
from jpegnoise.corpus import synthetic_corpus
from jpegnoise.errors import ParseError, ShapeError
from jpegnoise.formats import (
    dqt_segment, encode_pgm, header_bytes, parse_jpeg_markers, parse_pgm, rowmajor_to_zigzag, zigzag_to_rowmajor,
)
from jpegnoise.recompress import Verdict, decide
from jpegnoise.tables import QuantTable, ijg_table
from jpegnoise.validation import (
    REQUANT_SETTINGS, analytic_checks, dc_variance_checks, identical_rounding_check, identity_checks,
    recompression_checks, requant_fit_check, rounding_fit_check, svar_ordering_checks,
)

pytestmark = pytest.mark.acceptance

SEED = 0
N_IMAGES = 100
SIZE = 256
ALPHA = 0.01


@pytest.fixture(scope="module")
def corpus():
    return synthetic_corpus(SEED, N_IMAGES, SIZE)


def report(number, title, checks, elapsed=None, limit=None):
    """checks: list of (label, passed, detail)."""
    if limit is not None:
        checks = checks + [(f"runtime < {limit:.0f} s", elapsed < limit, f"{elapsed:.1f} s")]
    ok = all(passed for _, passed, _ in checks)
    failed = [f"{label} ({detail})" for label, passed, detail in checks if not passed]
    summary = "; ".join(failed) if failed else f"{len(checks)} checks"
    if elapsed is not None:
        summary += f" [{elapsed:.1f} s]"
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}: {summary}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    for label, passed, detail in checks:
        print(f"    {'ok  ' if passed else 'FAIL'} {label}: {detail}")
    assert ok, line


def rows_as_checks(rows):
    return [(r.name, r.passed, f"{r.statistic:.4g} vs {r.threshold:.4g} {r.detail}".strip()) for r in rows]


def test_criterion_1_identities():
    t0 = time.perf_counter()
    images = synthetic_corpus(SEED + 1, 20, SIZE)
    tables = [ijg_table(75), QuantTable.constant(3), ijg_table(90)]
    traces = [run_cycles(im, tables) for im in images]
    traces += [run_cycles(im, [ijg_table(50)] * 3, level_shift=True) for im in images[:5]]
    rows = identity_checks(traces)
    cycles = sum(t.n_cycles for t in traces)
    checks = rows_as_checks(rows) + [("trace count", len(images) >= 20 and cycles >= 60, f"{cycles} cycles")]
    report(1, "exact noise identities", checks, time.perf_counter() - t0, 60)


def test_criterion_2_analytic():
    t0 = time.perf_counter()
    rows = analytic_checks()  # var in [1e-4, 10] (13 log-spaced values), q = 1..16
    report(2, "analytic laws vs oracles", rows_as_checks(rows), time.perf_counter() - t0, 60)


def test_criterion_3_first_cycle(corpus):
    t0 = time.perf_counter()
    rows = dc_variance_checks(corpus, (4, 10, 16), tol=0.05)
    tables = [ijg_table(q) for q in (50, 60, 70, 75, 80, 85, 90, 95)]
    rows.append(rounding_fit_check(corpus, tables, ALPHA, min_rate=0.8))
    report(3, "first-cycle noise laws", rows_as_checks(rows), time.perf_counter() - t0)


def test_criterion_4_higher_cycles(corpus):
    t0 = time.perf_counter()
    rows = [requant_fit_check(corpus, steps, ALPHA, seed=SEED) for steps in REQUANT_SETTINGS]
    rows.append(identical_rounding_check(corpus, ijg_table(75), 2, ALPHA, min_rate=0.95))
    rows.append(identical_rounding_check(corpus, ijg_table(75), 3, ALPHA, min_rate=0.95))
    report(4, "higher-cycle noise laws", rows_as_checks(rows), time.perf_counter() - t0, 600)


def test_criterion_5_step_estimation(corpus):
    t0 = time.perf_counter()
    checks = rows_as_checks(svar_ordering_checks(corpus, range(2, 11), q_max=64))
    cal = calibrate_estimator(steps=range(1, 11), size=SIZE, n_per_step=20, seed=SEED + 5)
    sizes = (256, 128, 64, 32)
    rows = estimation_benchmark(range(1, 11), sizes, N_IMAGES, SEED, cal.config)
    acc = {(r["step"], r["size"]): r["accuracy"] for r in rows}
    for q in range(1, 11):
        checks.append((f"accuracy q={q} at 256", acc[q, 256] >= 0.95, f"{acc[q, 256]:.2f}"))
        seq = [acc[q, s] for s in sizes]
        checks.append((f"accuracy q={q} nonincreasing 256->32", all(a >= b for a, b in zip(seq, seq[1:])),
                       " ".join(f"{a:.2f}" for a in seq)))
    report(5, "step ordering and estimation", checks, time.perf_counter() - t0)


def test_criterion_6_recompression(corpus):
    t0 = time.perf_counter()
    checks = rows_as_checks(recompression_checks(corpus, ijg_table(100), ALPHA)[:1])
    rows = {(r["quality"], r["size"]): r for r in detection_benchmark((100, 90), (128, 32), 2 * N_IMAGES, SEED)}
    for size, need in ((128, 0.95), (32, 0.85)):
        r = rows[100, size]
        checks.append((f"balanced accuracy QF100 at {size}", r["balanced_accuracy"] >= need,
                       f"{r['balanced_accuracy']:.3f} (T={r['threshold']:.4f}, {r['n_test']} test pairs)"))
        checks.append((f"mean order QF100 at {size}", r["mean_double"] < r["mean_single"],
                       f"single {r['mean_single']:.5f} double {r['mean_double']:.5f}"))
        r90 = rows[90, size]
        checks.append((f"QF90 out of domain at {size}", bool(r90["out_of_domain"]),
                       f"single {r90['mean_single']:.5f} double {r90['mean_double']:.5f}"))
    checks += rows_as_checks(recompression_checks(corpus, ijg_table(90), ALPHA))
    checks.append(("verdict for a table without unit steps",
                   decide(0.0, QuantTable.constant(2), 0.05) is Verdict.OUT_OF_DOMAIN, "constant 2"))
    report(6, "identical re-compression detection", checks, time.perf_counter() - t0)


def _mutate(rng, seed_inputs):
    data = bytearray(seed_inputs[rng.integers(len(seed_inputs))])
    op = rng.integers(5)
    if op == 0 or not data:
        return bytes(rng.integers(0, 256, rng.integers(0, 64), dtype=np.uint8))
    if op == 1:
        for _ in range(rng.integers(1, 8)):
            data[rng.integers(len(data))] = rng.integers(256)
        return bytes(data)
    if op == 2:
        return bytes(data[: rng.integers(len(data))])
    if op == 3:
        i = rng.integers(len(data))
        return bytes(data[:i] + bytes(rng.integers(0, 256, rng.integers(1, 16), dtype=np.uint8)) + data[i:])
    i, j = sorted(rng.integers(0, len(data), 2))
    return bytes(data[:i] + data[j:] + data[i:j])


def _fuzz(parser, seeds, n, rng):
    crashes, slowest = [], 0.0
    for _ in range(n):
        data = _mutate(rng, seeds)
        t = time.perf_counter()
        try:
            parser(data)
        except (ParseError, ShapeError):
            pass
        except Exception as exc:  # anything else is a crash
            crashes.append(f"{type(exc).__name__}: {exc}")
        slowest = max(slowest, time.perf_counter() - t)
    return crashes, slowest


def test_criterion_7_parsers():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED + 7)
    jpeg_seeds = [header_bytes(ijg_table(q), 64, 48) for q in (10, 50, 90, 100)]
    jpeg_seeds.append(b"\xff\xd8" + dqt_segment({0: ijg_table(75), 1: QuantTable.constant(300)}) + b"\xff\xd9")
    pgm_seeds = [encode_pgm(rng.integers(0, 256, (16, 16))), encode_pgm(rng.integers(0, 1024, (8, 24)), maxval=1023),
                 encode_pgm(rng.integers(0, 256, (9, 10)), ascii=True), b"P2\n# c\n8 8\n255\n" + b"7 " * 64]
    n = 100_000
    j_crash, j_slow = _fuzz(parse_jpeg_markers, jpeg_seeds, n, rng)
    p_crash, p_slow = _fuzz(parse_pgm, pgm_seeds, n, rng)
    zz_ok = all(
        parse_jpeg_markers(b"\xff\xd8" + dqt_segment({0: t}) + b"\xff\xd9").quant_tables[0] == t
        and zigzag_to_rowmajor(rowmajor_to_zigzag(list(t.steps))) == list(t.steps)
        for t in [ijg_table(q) for q in range(1, 101)] + [QuantTable(tuple(range(1, 65)))]
    )
    checks = [
        (f"JPEG marker parser, {n} fuzzed inputs", not j_crash, f"{len(j_crash)} crashes, slowest {j_slow * 1e3:.1f} ms"
         + (f", first: {j_crash[0]}" if j_crash else "")),
        (f"PGM reader, {n} fuzzed inputs", not p_crash, f"{len(p_crash)} crashes, slowest {p_slow * 1e3:.1f} ms"
         + (f", first: {p_crash[0]}" if p_crash else "")),
        ("no hangs", max(j_slow, p_slow) < 1.0, f"slowest input {max(j_slow, p_slow) * 1e3:.1f} ms"),
        ("DQT zigzag round trip exact", zz_ok, "101 tables"),
    ]
    report(7, "parser robustness", checks, time.perf_counter() - t0)
