import numpy as np
import pytest

from jpegnoise.codec import compress
from jpegnoise.errors import ConfigError, DomainError
from jpegnoise.qstep import (
    EstimatorConfig, calibrate_thresholds, curve_from_coefficients, decide, estimate_step, estimate_table,
    global_minimum_baseline, local_minima, svar_curve,
)
from jpegnoise.tables import QuantTable


def test_curve_by_hand():
    # coefficients on multiples of 6: zero noise at every divisor of 6
    c = np.arange(-60, 61, 6, dtype=float)
    curve = curve_from_coefficients(c, q_max=8)
    for q in (1, 2, 3, 6):
        assert curve.at(q) == 0.0
    assert curve.at(4) > 0 and curve.at(5) > 0
    # q = 4: residues of multiples of 6 alternate between 0 and +-2
    assert curve.at(4) == pytest.approx(np.mean((c - np.round(c / 4 + 1e-9 * np.sign(c)) * 4) ** 2))


def test_local_minima_rules():
    c = np.arange(-600, 601, 5, dtype=float) + 0.01
    curve = curve_from_coefficients(c, q_max=12)
    # half of the multiples of 5 fall midway between multiples of 10
    assert 5 in curve.minima and 10 not in curve.minima
    assert all(q >= 3 for q in local_minima(curve))


def test_decide_branches():
    c = curve_from_coefficients(np.arange(-400, 401, 4, dtype=float), q_max=10)
    assert decide(c, 0.1, 0.2) == (4, "local_min")
    flat = curve_from_coefficients(np.random.default_rng(0).uniform(-50, 50, 5000), q_max=10)
    assert decide(flat, 0.01, 0.02) == (1, "default")
    assert decide(flat, 1.0, 0.0) == (2, "t_c")


@pytest.mark.parametrize("q", [1, 2, 3, 5, 7, 10])
def test_recovers_constant_step(small_corpus, q):
    cfg = EstimatorConfig(t_c=0.17, t_xi=0.28)
    hits = [estimate_step(compress(im, [QuantTable.constant(q)]), config=cfg).step == q for im in small_corpus]
    assert sum(hits) >= len(hits) - 1


def test_per_frequency_table(small_corpus):
    im = compress(small_corpus[0], [QuantTable.constant(6)])
    tab = estimate_table(im, EstimatorConfig(t_c=0.17, t_xi=0.28), per_frequency=True)
    assert len(tab.steps) == 64 and tab.per_frequency
    assert np.median(tab.steps) == 6
    pooled = estimate_table(im)
    assert set(pooled.steps) == {pooled.estimates[0].step}


def test_low_confidence_flag():
    im = compress(np.random.default_rng(0).integers(0, 256, (16, 16)).astype(float), [QuantTable.constant(3)])
    assert estimate_step(im).low_confidence


def test_exclude_zeros_and_bad_index():
    im = np.zeros((16, 16))
    with pytest.raises(DomainError):
        svar_curve(im, 5, exclude_zeros=True)
    with pytest.raises(DomainError):
        svar_curve(im, 64)


def test_calibration(small_corpus):
    images, steps = [], []
    for q in (1, 2, 3, 4):
        for im in small_corpus:
            images.append(compress(im, [QuantTable.constant(q)]))
            steps.append(q)
    cal = calibrate_thresholds(images, steps, q_max=16)
    assert cal.config.t_c < cal.config.t_xi
    assert cal.accuracy >= 0.9 and cal.n_images == len(images)
    with pytest.raises(ConfigError):
        calibrate_thresholds(images[:6], [3] * 6)


def test_global_minimum_baseline_prefers_multiples():
    c = np.arange(-399, 400, 3, dtype=float) + 0.01
    assert global_minimum_baseline(curve_from_coefficients(c, 12)) == 3


def test_mixed_table_per_frequency():
    from jpegnoise.corpus import synthetic_corpus

    steps = (1,) + (3,) * 63
    im = compress(synthetic_corpus(8, 1, 256)[0], [QuantTable(steps)])
    tab = estimate_table(im, EstimatorConfig(t_c=0.17, t_xi=0.28), per_frequency=True)
    assert tab.steps[0] == 1
    assert np.mean(np.array(tab.steps[1:]) == 3) >= 0.9
