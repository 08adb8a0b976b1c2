"""Command-line interface: ``jpegnoise <command> ...``.

Every command writes a CSV report and a JSON run manifest (command, resolved
configuration, input digests, seed, version, timestamp). Exit codes:

    0 success            1 a validation check failed   2 usage error
    3 configuration      4 unparsable input            5 integrity violation
    6 I/O failure        7 unusable data (shape/domain)
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import config as cfgmod
from .errors import ConfigError, DomainError, IntegrityError, ParseError, ShapeError

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_PARSE = 4
EXIT_INTEGRITY = 5
EXIT_IO = 6
EXIT_DATA = 7


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


# -- manifests ----------------------------------------------------------------------

def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    p = Path(path)
    if p.is_dir():
        for f in sorted(p.rglob("*")):
            if f.is_file():
                h.update(str(f.relative_to(p)).encode())
                h.update(f.read_bytes())
    else:
        h.update(p.read_bytes())
    return h.hexdigest()


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v) if np.isfinite(v) else None
    return v


def write_manifest(path: str | Path, command: str, config: dict, inputs: Sequence[str | Path] = (),
                   seed: int | None = None) -> None:
    manifest = {
        "command": command,
        "config": _jsonable(config),
        "inputs": {str(p): file_digest(p) for p in inputs},
        "seed": seed,
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _manifest_path(args, primary: str | Path | None) -> Path:
    if getattr(args, "manifest", None):
        return Path(args.manifest)
    if primary is not None:
        p = Path(primary)
        return p / "run_manifest.json" if p.is_dir() else p.with_name(p.name + ".manifest.json")
    return Path(f"{args.command}.manifest.json")


# -- shared loaders -----------------------------------------------------------------

def load_table(text: str):
    """``ijg:<quality>``, ``const:<step>`` or a path to a table text file."""
    from .tables import QuantTable, ijg_table, parse_table_text

    if text.startswith("ijg:"):
        try:
            return ijg_table(int(text[4:]))
        except ValueError:
            raise ConfigError(f"bad quality in {text!r}") from None
    if text.startswith("const:"):
        try:
            return QuantTable.constant(int(text[6:]))
        except ValueError:
            raise ConfigError(f"bad step in {text!r}") from None
    p = Path(text)
    if not p.is_file():
        raise ConfigError(f"{text}: table file not found")
    return parse_table_text(p.read_text())


def _load_image(path: str) -> np.ndarray:
    from .formats import read_pgm

    img = read_pgm(path)
    for w in img.warnings:
        _warn(f"{path}: {w}")
    return np.asarray(img.plane, dtype=np.float64)


def _config_values(path: str | None) -> dict:
    return cfgmod.read_config(path) if path else {}


def _corpus(args, size: int, n: int) -> list[np.ndarray]:
    from .corpus import load_corpus, synthetic_corpus

    if getattr(args, "corpus", None):
        images = load_corpus(args.corpus, size)
        if not images:
            raise ConfigError(f"{args.corpus}: no usable PGM images of at least {size}x{size}")
        return images[:n] if n else images
    return synthetic_corpus(args.seed, n, size)


def _write_rows(path, rows, fields):
    from .formats import write_csv_report

    write_csv_report(path, rows, fields)


# -- commands -----------------------------------------------------------------------

def cmd_simulate(args) -> int:
    from .codec import NOISE_KINDS, run_cycles
    from .traceio import save_trace

    tables = [load_table(t) for t in args.tables]
    X0 = _load_image(args.input)
    trace = run_cycles(X0, tables, level_shift=args.level_shift, clip=args.clip)
    out = save_trace(trace, args.out)
    rows = []
    for k in range(1, trace.n_cycles + 1):
        nz = trace.noise(k)
        for kind in NOISE_KINDS:
            a = nz.get(kind)
            rows.append({"cycle": k, "noise": kind, "mean": float(a.mean()), "variance": float(a.var()),
                         "max_abs": float(np.abs(a).max())})
    _write_rows(out / "noise_summary.csv", rows, ("cycle", "noise", "mean", "variance", "max_abs"))
    write_manifest(_manifest_path(args, out), "simulate",
                   {"tables": [t.steps for t in tables], "clip": args.clip, "level_shift": args.level_shift},
                   [args.input, *[t for t in args.tables if Path(t).is_file()]])
    print(f"{trace.n_cycles}-cycle trace written to {out}")
    return EXIT_OK


def is_integrity_check(name: str) -> bool:
    """Exact checks, as opposed to statistical ones."""
    name = name.removeprefix("supplied_")
    return name.startswith(("identity_", "integrity_")) or (name.startswith("bound_") and name.endswith("_support"))


def cmd_validate_model(args) -> int:
    from .traceio import load_trace
    from .validation import CheckResult, run_validation

    images = _corpus(args, args.size, args.n_images)
    traces = [load_trace(t) for t in args.trace]
    rows = run_validation(images, alpha=args.alpha, extra_traces=traces,
                          log=(lambda m: print(f"checking {m}", file=sys.stderr)) if args.verbose else None)
    _write_rows(args.report, [r.row() for r in rows], CheckResult.FIELDS)
    inputs = ([args.corpus] if args.corpus else []) + list(args.trace)
    write_manifest(_manifest_path(args, args.report), "validate-model",
                   {"n_images": len(images), "size": args.size, "alpha": args.alpha}, inputs, args.seed)
    failed = [r for r in rows if not r.passed]
    for r in rows:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}  {r.statistic:.6g} (threshold {r.threshold:.6g})")
    if any(is_integrity_check(r.name) for r in failed):
        return EXIT_INTEGRITY
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def cmd_estimate_qstep(args) -> int:
    from .qstep import estimate_step, estimate_table

    values = cfgmod.merge(_config_values(args.config), {
        "q_max": args.qmax, "t_c": args.t_c, "t_xi": args.t_xi,
        "exclude_zeros": True if args.exclude_zeros else None,
        "level_shift": True if args.level_shift else None,
    })
    config = cfgmod.estimator_config(values)
    image = _load_image(args.input)
    if args.mode == "pooled":
        est = estimate_step(image, config=config)
        rows = [{"u": "all", "step": est.step, "branch": est.branch, "low_confidence": est.low_confidence}]
        curve = est.curve
        print(est.step)
    else:
        tab = estimate_table(image, config, per_frequency=True)
        rows = [{"u": u, "step": s, "branch": "", "low_confidence": tab.low_confidence}
                for u, s in enumerate(tab.steps)]
        curve = None
        for r in range(8):
            print(" ".join(f"{s:3d}" for s in tab.steps[r * 8 : r * 8 + 8]))
        if args.emit_curve:
            from .qstep import svar_curve
            curve = svar_curve(image, "all", config.q_max, exclude_zeros=config.exclude_zeros,
                               level_shift=config.level_shift)
    if rows[0]["low_confidence"]:
        _warn("few blocks; estimate has low confidence")
    if args.emit_curve:
        _write_rows(args.emit_curve, curve.rows(), ("q", "s_var", "is_local_min"))
    if args.report:
        _write_rows(args.report, rows, ("u", "step", "branch", "low_confidence"))
    inputs = [args.input] + ([args.config] if args.config else [])
    write_manifest(_manifest_path(args, args.report or args.emit_curve), "estimate-qstep",
                   {"mode": args.mode, **cfgmod.estimator_values(config)}, inputs)
    return EXIT_OK


def _detector_table(args):
    from .formats import read_jpeg_header

    if args.table:
        return load_table(args.table)
    return read_jpeg_header(args.jpeg).table_for_component(0)


def cmd_detect_recompress(args) -> int:
    from .formats import read_plane
    from .recompress import Verdict, decide, rounding_noise_stat

    table = _detector_table(args)
    coeffs = read_plane(args.coeffs)
    values = cfgmod.merge(_config_values(args.config), {"T": args.threshold})
    s2 = rounding_noise_stat(coeffs, table, dequantized=args.dequantized, level_shift=args.level_shift)
    if table.has_unit_step():
        if "T" not in values:
            raise ConfigError("no detector threshold: pass --config or --threshold")
        threshold = cfgmod.detector_config(values).threshold_for(table)
    else:
        threshold = float(values.get("T", float("nan")))
    verdict = decide(s2, table, threshold)
    if verdict is Verdict.OUT_OF_DOMAIN:
        _warn("table has no unit step; identical re-compression cannot be detected")
    row = {"sigma2_all": s2, "verdict": verdict.value, "min_step": table.min_step}
    if args.report:
        _write_rows(args.report, [row], ("sigma2_all", "verdict", "min_step"))
    inputs = [args.coeffs] + [p for p in (args.table, args.jpeg, args.config) if p and Path(p).is_file()]
    write_manifest(_manifest_path(args, args.report), "detect-recompress",
                   {"threshold": threshold, "table": table.steps, "dequantized": args.dequantized,
                    "level_shift": args.level_shift}, inputs)
    print(verdict.value)
    return EXIT_OK


def _parse_ints(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out:
        raise ConfigError(f"empty integer list {text!r}")
    return out


def cmd_calibrate_qstep(args) -> int:
    from .codec import compress
    from .qstep import calibrate_thresholds
    from .tables import QuantTable

    steps = _parse_ints(args.steps)
    raw = _corpus(args, args.size, args.n_per_step)
    images, truth = [], []
    for q in steps:
        for im in raw:
            images.append(compress(im, [QuantTable.constant(q)]))
            truth.append(q)
    cal = calibrate_thresholds(images, truth, q_max=args.qmax, exclude_zeros=args.exclude_zeros)
    values = cfgmod.estimator_values(cal.config)
    values["seed"] = args.seed
    cfgmod.write_config(args.out, values)
    rows = [{"t_c": cal.config.t_c, "t_xi": cal.config.t_xi, "accuracy": cal.accuracy, "n_images": cal.n_images}]
    report = args.report or Path(args.out).with_suffix(".csv")
    _write_rows(report, rows, ("t_c", "t_xi", "accuracy", "n_images"))
    write_manifest(_manifest_path(args, report), "calibrate-qstep",
                   {"steps": steps, "size": args.size, "n_per_step": args.n_per_step, **values},
                   [args.corpus] if args.corpus else [], args.seed)
    print(f"t_c={cal.config.t_c:.6g} t_xi={cal.config.t_xi:.6g} training accuracy={cal.accuracy:.4f}")
    return EXIT_OK


def cmd_calibrate_detector(args) -> int:
    from .formats import read_plane
    from .recompress import calibrate_threshold, rounding_noise_stat, simulate_pair

    table = load_table(args.table)
    if args.single_coeffs or args.double_coeffs:
        single = [rounding_noise_stat(read_plane(p), table, dequantized=args.dequantized) for p in args.single_coeffs]
        double = [rounding_noise_stat(read_plane(p), table, dequantized=args.dequantized) for p in args.double_coeffs]
        inputs = list(args.single_coeffs) + list(args.double_coeffs)
    else:
        single, double = [], []
        for im in _corpus(args, args.size, args.n_images):
            s, d = simulate_pair(im, table)
            single.append(rounding_noise_stat(s, table))
            double.append(rounding_noise_stat(d, table))
        inputs = [args.corpus] if args.corpus else []
    if not table.has_unit_step():
        _warn("table has no unit step; the detector will report OUT_OF_DOMAIN for it")
    cal = calibrate_threshold(single, double)
    values = cfgmod.detector_values(cal.config)
    values["seed"] = args.seed
    cfgmod.write_config(args.out, values)
    report = args.report or Path(args.out).with_suffix(".csv")
    _write_rows(report, [{"T": cal.config.T, "balanced_accuracy": cal.balanced_accuracy,
                          "n_single": cal.n_single, "n_double": cal.n_double}],
                ("T", "balanced_accuracy", "n_single", "n_double"))
    write_manifest(_manifest_path(args, report), "calibrate-detector",
                   {"table": table.steps, "size": args.size, "n_images": args.n_images, **values}, inputs, args.seed)
    print(f"T={cal.config.T:.6g} training balanced accuracy={cal.balanced_accuracy:.4f}")
    return EXIT_OK


def _matrix(rows, key: str, sizes, value: str) -> tuple[list[dict], list[str]]:
    fields = [key] + [str(s) for s in sizes]
    out = {}
    for r in rows:
        out.setdefault(r[key], {key: r[key]})[str(r["size"])] = r[value]
    return list(out.values()), fields


def cmd_benchmark(args) -> int:
    from . import benchmark as bm
    from .corpus import load_corpus

    sizes = _parse_ints(args.sizes)
    source = bm.synthetic_source
    inputs = []
    if args.corpus:
        images = load_corpus(args.corpus)
        if not images:
            raise ConfigError(f"{args.corpus}: no PGM images")
        if len(images) < bm.MIN_CORPUS:
            _warn(f"corpus has only {len(images)} images")
        source = bm.crop_source(images)
        inputs.append(args.corpus)
    if args.task == "estimate":
        steps = _parse_ints(args.steps)
        if args.config:
            config = cfgmod.estimator_config(cfgmod.read_config(args.config))
            inputs.append(args.config)
        else:
            config = bm.calibrate_estimator(size=max(sizes), seed=args.seed, source=source, workers=args.workers).config
        rows = bm.estimation_benchmark(steps, sizes, args.n_images, args.seed, config, source, args.workers)
        matrix, fields = _matrix(rows, "step", sizes, "accuracy")
        detail_fields = bm.ESTIMATION_FIELDS
        snapshot = {"task": "estimate", "steps": steps, **cfgmod.estimator_values(config)}
    else:
        qualities = _parse_ints(args.qualities)
        rows = bm.detection_benchmark(qualities, sizes, args.n_images, args.seed, force=args.force,
                                      source=source, workers=args.workers)
        matrix, fields = _matrix(rows, "quality", sizes, "balanced_accuracy")
        detail_fields = bm.DETECTION_FIELDS
        snapshot = {"task": "detect", "qualities": qualities, "force": args.force}
    _write_rows(args.report, matrix, fields)
    if args.detail:
        _write_rows(args.detail, rows, detail_fields)
    write_manifest(_manifest_path(args, args.report), "benchmark",
                   {**snapshot, "sizes": sizes, "n_images": args.n_images}, inputs, args.seed)
    print(",".join(fields))
    for r in matrix:
        print(",".join(str(r.get(f, "")) for f in fields))
    return EXIT_OK


def cmd_gen_table(args) -> int:
    from .formats import header_bytes
    from .tables import IJG_LUMINANCE, ijg_table

    base = IJG_LUMINANCE if args.base is None else load_table(args.base).steps
    table = ijg_table(args.quality, base, baseline=not args.no_baseline)
    Path(args.out).write_text(table.to_text())
    report = args.report or Path(args.out).with_suffix(".csv")
    _write_rows(report, [{"u": u, "step": s} for u, s in enumerate(table.steps)], ("u", "step"))
    if args.jpeg_header:
        Path(args.jpeg_header).write_bytes(header_bytes(table, 8, 8))
    write_manifest(_manifest_path(args, report), "gen-table",
                   {"quality": args.quality, "baseline": not args.no_baseline, "table": table.steps},
                   [args.base] if args.base and Path(args.base).is_file() else [])
    print(table.to_text(), end="")
    return EXIT_OK


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jpegnoise", description="JPEG noise simulation, step estimation "
                                "and identical re-compression detection.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=False):
        sp.add_argument("--manifest", help="run manifest path (default: next to the report)")
        if seed:
            sp.add_argument("--seed", type=int, default=0, help="random seed (default 0)")

    s = sub.add_parser("simulate", help="run compression cycles and store the full trace")
    s.add_argument("--input", required=True, help="PGM image")
    s.add_argument("--tables", nargs="+", required=True,
                   help="one table per cycle: file, ijg:<quality> or const:<step>")
    s.add_argument("--out", required=True, help="trace directory")
    s.add_argument("--clip", action="store_true", help="clip decoded pixels to 0..255")
    s.add_argument("--level-shift", action="store_true", help="subtract 128 before the DCT")
    common(s)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("validate-model", help="check identities, bounds and noise laws on a corpus")
    s.add_argument("--corpus", help="directory of PGM images (default: synthetic)")
    s.add_argument("--n-images", type=int, default=100)
    s.add_argument("--size", type=int, default=256)
    s.add_argument("--alpha", type=float, default=0.01)
    s.add_argument("--trace", action="append", default=[], help="extra trace directory to integrity-check")
    s.add_argument("--report", required=True)
    s.add_argument("-v", "--verbose", action="store_true")
    common(s, seed=True)
    s.set_defaults(func=cmd_validate_model)

    s = sub.add_parser("estimate-qstep", help="estimate the first-cycle quantization step")
    s.add_argument("--input", required=True)
    s.add_argument("--mode", choices=("pooled", "per-freq"), default="pooled")
    s.add_argument("--qmax", type=int)
    s.add_argument("--config")
    s.add_argument("--t-c", type=float, dest="t_c")
    s.add_argument("--t-xi", type=float, dest="t_xi")
    s.add_argument("--exclude-zeros", action="store_true")
    s.add_argument("--level-shift", action="store_true")
    s.add_argument("--emit-curve")
    s.add_argument("--report")
    common(s)
    s.set_defaults(func=cmd_estimate_qstep)

    s = sub.add_parser("detect-recompress", help="detect identical re-compression from a coefficient plane")
    s.add_argument("--coeffs", required=True, help="plane file of quantized (or dequantized) coefficients")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--table", help="table file, ijg:<quality> or const:<step>")
    g.add_argument("--jpeg", help="JPEG file whose DQT supplies the table")
    s.add_argument("--config")
    s.add_argument("--threshold", type=float)
    s.add_argument("--dequantized", action="store_true", help="plane holds dequantized coefficients")
    s.add_argument("--level-shift", action="store_true")
    s.add_argument("--report")
    common(s)
    s.set_defaults(func=cmd_detect_recompress)

    s = sub.add_parser("calibrate-qstep", help="fit the estimator thresholds on training images")
    s.add_argument("--corpus")
    s.add_argument("--steps", default="1-10")
    s.add_argument("--size", type=int, default=256)
    s.add_argument("--n-per-step", type=int, default=20)
    s.add_argument("--qmax", type=int, default=64)
    s.add_argument("--exclude-zeros", action="store_true")
    s.add_argument("--out", required=True, help="config file to write")
    s.add_argument("--report")
    common(s, seed=True)
    s.set_defaults(func=cmd_calibrate_qstep)

    s = sub.add_parser("calibrate-detector", help="fit the detector threshold")
    s.add_argument("--table", default="ijg:100")
    s.add_argument("--corpus")
    s.add_argument("--size", type=int, default=128)
    s.add_argument("--n-images", type=int, default=100)
    s.add_argument("--single-coeffs", nargs="*", default=[])
    s.add_argument("--double-coeffs", nargs="*", default=[])
    s.add_argument("--dequantized", action="store_true")
    s.add_argument("--out", required=True)
    s.add_argument("--report")
    common(s, seed=True)
    s.set_defaults(func=cmd_calibrate_detector)

    s = sub.add_parser("benchmark", help="accuracy matrices over image sizes")
    s.add_argument("--task", choices=("estimate", "detect"), required=True)
    s.add_argument("--sizes", default="256,128,64,32,16")
    s.add_argument("--steps", default="1-7,10,13")
    s.add_argument("--qualities", default="100,98,95,93")
    s.add_argument("--n-images", type=int, default=100)
    s.add_argument("--corpus")
    s.add_argument("--config")
    s.add_argument("--force", action="store_true", help="score tables without a unit step anyway")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--report", required=True)
    s.add_argument("--detail")
    common(s, seed=True)
    s.set_defaults(func=cmd_benchmark)

    s = sub.add_parser("gen-table", help="IJG-style scaled quantization table")
    s.add_argument("--quality", type=int, required=True)
    s.add_argument("--base")
    s.add_argument("--no-baseline", action="store_true", help="allow steps above 255")
    s.add_argument("--out", required=True)
    s.add_argument("--report")
    s.add_argument("--jpeg-header", help="also write a minimal JPEG header carrying the table")
    common(s)
    s.set_defaults(func=cmd_gen_table)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except (ShapeError, DomainError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
