"""Accuracy matrices for step estimation and identical re-compression detection.

Rows are plain dicts ready for :func:`jpegnoise.formats.write_csv_report`.
Each image gets its own generator spawned from the run seed, so results do
not depend on the number of workers.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

from .codec import compress
from .corpus import spawn_rngs, synthetic_image
from .errors import ConfigError
from .qstep import EstimatorConfig, calibrate_thresholds, estimate_step, global_minimum_baseline
from .recompress import balanced_accuracy, calibrate_threshold, rounding_noise_stat, simulate_pair
from .tables import QuantTable, ijg_table

DEFAULT_STEPS = (1, 2, 3, 4, 5, 6, 7, 10, 13)
DEFAULT_SIZES = (256, 128, 64, 32, 16)
DEFAULT_QUALITIES = (100, 98, 95, 93)
MIN_CORPUS = 20

ESTIMATION_FIELDS = ("step", "size", "n_images", "accuracy", "baseline_accuracy")
DETECTION_FIELDS = ("quality", "size", "n_train", "n_test", "min_step", "out_of_domain",
                    "threshold", "balanced_accuracy", "mean_single", "mean_double")

ImageSource = Callable[[int, int, int], list]


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def synthetic_source(size: int, n: int, seed: int) -> list[np.ndarray]:
    return [synthetic_image(rng, size) for rng in spawn_rngs(seed, n)]


def crop_source(images: Sequence[np.ndarray]) -> ImageSource:
    """Random block-aligned crops of a fixed corpus, ``n`` per call."""
    def source(size: int, n: int, seed: int) -> list[np.ndarray]:
        usable = [im for im in images if min(im.shape) >= size]
        if not usable:
            raise ConfigError(f"no corpus image is at least {size}x{size}")
        out = []
        for rng in spawn_rngs(seed, n):
            im = usable[rng.integers(len(usable))]
            r = rng.integers(0, (im.shape[0] - size) // 8 + 1) * 8
            c = rng.integers(0, (im.shape[1] - size) // 8 + 1) * 8
            out.append(im[r : r + size, c : c + size])
        return out
    return source


def _size_seed(seed: int, size: int, salt: int = 0) -> int:
    return int(np.random.SeedSequence([seed, size, salt]).generate_state(1)[0])


def calibrate_estimator(steps: Sequence[int] = tuple(range(1, 11)), size: int = 256, n_per_step: int = 20,
                        seed: int = 0, source: ImageSource = synthetic_source, q_max: int = 64,
                        workers: int = 1):
    """Calibrate the estimator thresholds on freshly drawn training images."""
    raw = source(size, n_per_step, _size_seed(seed, size, 1))
    pairs = [(im, q) for q in steps for im in raw]
    images = _map(lambda p: compress(p[0], [QuantTable.constant(p[1])]), pairs, workers)
    return calibrate_thresholds(images, [q for _, q in pairs], q_max=q_max)


def estimation_benchmark(steps: Sequence[int] = DEFAULT_STEPS, sizes: Sequence[int] = DEFAULT_SIZES,
                         n_images: int = 100, seed: int = 0, config: EstimatorConfig = EstimatorConfig(),
                         source: ImageSource = synthetic_source, workers: int = 1) -> list[dict]:
    """Fraction of images whose pooled step estimate equals the true constant step."""
    if n_images < MIN_CORPUS:
        warnings.warn(f"only {n_images} images per cell; accuracies are coarse", stacklevel=2)
    rows = []
    for size in sizes:
        raw = source(size, n_images, _size_seed(seed, size))
        for q in steps:
            table = QuantTable.constant(q)

            def one(im):
                est = estimate_step(compress(im, [table]), config=config)
                return est.step == q, global_minimum_baseline(est.curve) == q

            hits = np.array(_map(one, raw, workers))
            rows.append({"step": q, "size": size, "n_images": len(raw),
                         "accuracy": float(hits[:, 0].mean()), "baseline_accuracy": float(hits[:, 1].mean())})
    return rows


def detection_benchmark(qualities: Sequence[int] = DEFAULT_QUALITIES, sizes: Sequence[int] = DEFAULT_SIZES,
                        n_images: int = 200, seed: int = 0, *, force: bool = False,
                        source: ImageSource = synthetic_source, workers: int = 1) -> list[dict]:
    """Balanced accuracy of the detector, calibrated on one half of the images and tested on the other.

    Tables without a unit step are reported as out of domain; ``force``
    calibrates and scores them anyway (expect chance level).
    """
    if n_images < 2 * MIN_CORPUS:
        warnings.warn(f"only {n_images} images per cell; accuracies are coarse", stacklevel=2)
    rows = []
    for size in sizes:
        raw = source(size, n_images, _size_seed(seed, size, 2))
        for qf in qualities:
            table = ijg_table(qf)

            def one(im):
                s, d = simulate_pair(im, table)
                return rounding_noise_stat(s, table), rounding_noise_stat(d, table)

            st = np.array(_map(one, raw, workers))
            train, test = st[0::2], st[1::2]
            ood = not table.has_unit_step()
            row = {"quality": qf, "size": size, "n_train": len(train), "n_test": len(test),
                   "min_step": table.min_step, "out_of_domain": ood, "threshold": math.nan,
                   "balanced_accuracy": math.nan, "mean_single": float(st[:, 0].mean()),
                   "mean_double": float(st[:, 1].mean())}
            if not ood or force:
                try:
                    cal = calibrate_threshold(train[:, 0], train[:, 1])
                    row["threshold"] = cal.config.T
                    row["balanced_accuracy"] = float(balanced_accuracy(test[:, 0], test[:, 1], cal.config.T))
                except ConfigError:
                    row["balanced_accuracy"] = 0.5
            rows.append(row)
    return rows
