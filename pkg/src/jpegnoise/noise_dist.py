"""Analytic laws of JPEG noises.

Every law is a small frozen dataclass exposing ``pdf``, ``cdf``, ``mean``,
``variance``, ``support`` and ``sample``. Quantized laws live on the
half-open interval ``[-q/2, q/2)``.

The quantized-Gaussian density is evaluated with its cosine (characteristic
function) series; :func:`folded_pdf` evaluates the same density as a direct
sum of shifted copies of the source density. The two are independent routes
to one function and are cross-checked in the tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, special, stats

from .errors import DomainError
from .tables import QuantTable
from .transform import round_int

SERIES_TOL = 1e-15
# tail mass beyond this many standard deviations of a Gaussian is < 1e-30
GAUSS_SPAN = 12.0
# e**-70 < 1e-30: Laplacian tail cut in units of the scale 1/lambda
LAPLACE_SPAN = 70.0
MAX_SERIES_TERMS = 1_000_000


def _check_q(q) -> int:
    if int(q) != q or q < 1:
        raise DomainError(f"quantization step must be an integer >= 1, got {q!r}")
    return int(q)


def _check_support(s, q: float) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    if not np.all(np.isfinite(s)) or np.any(s < -q / 2) or np.any(s >= q / 2):
        raise DomainError(f"argument outside support [-{q}/2, {q}/2)")
    return s


class NoiseDistribution:
    """Common interface. Subclasses are frozen dataclasses."""

    def pdf(self, s):
        raise NotImplementedError

    def cdf(self, s):
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def variance(self) -> float:
        raise NotImplementedError

    def std(self) -> float:
        return math.sqrt(self.variance())

    def support(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    def effective_range(self) -> tuple[float, float]:
        """Interval outside which the probability mass is below 1e-30."""
        return self.support()

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def bin_probabilities(self, edges) -> np.ndarray:
        return np.diff(self.cdf(np.asarray(edges, dtype=np.float64)))


@dataclass(frozen=True)
class Uniform(NoiseDistribution):
    a: float
    b: float

    def __post_init__(self):
        if not self.b > self.a:
            raise DomainError("uniform law needs b > a")

    def pdf(self, s):
        s = np.asarray(s, dtype=np.float64)
        return np.where((s >= self.a) & (s < self.b), 1.0 / (self.b - self.a), 0.0)

    def cdf(self, s):
        return np.clip((np.asarray(s, dtype=np.float64) - self.a) / (self.b - self.a), 0.0, 1.0)

    def mean(self):
        return 0.5 * (self.a + self.b)

    def variance(self):
        return (self.b - self.a) ** 2 / 12.0

    def support(self):
        return (self.a, self.b)

    def sample(self, rng, n):
        return rng.uniform(self.a, self.b, n)


@dataclass(frozen=True)
class Gaussian(NoiseDistribution):
    mu: float
    var: float

    def __post_init__(self):
        if not self.var > 0:
            raise DomainError("Gaussian variance must be > 0")

    def pdf(self, s):
        return stats.norm.pdf(s, self.mu, math.sqrt(self.var))

    def cdf(self, s):
        return stats.norm.cdf(s, self.mu, math.sqrt(self.var))

    def mean(self):
        return self.mu

    def variance(self):
        return self.var

    def effective_range(self):
        d = GAUSS_SPAN * math.sqrt(self.var)
        return (self.mu - d, self.mu + d)

    def sample(self, rng, n):
        return rng.normal(self.mu, math.sqrt(self.var), n)


@dataclass(frozen=True)
class Laplacian(NoiseDistribution):
    """Laplacian with rate ``lam``: density ``lam/2 * exp(-lam*|s - mu|)``."""

    mu: float
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError("Laplacian rate must be > 0")

    @classmethod
    def from_variance(cls, var: float, mu: float = 0.0) -> "Laplacian":
        return cls(mu, lambda_from_variance(var))

    def pdf(self, s):
        return 0.5 * self.lam * np.exp(-self.lam * np.abs(np.asarray(s, dtype=np.float64) - self.mu))

    def cdf(self, s):
        return stats.laplace.cdf(s, self.mu, 1.0 / self.lam)

    def mean(self):
        return self.mu

    def variance(self):
        return 2.0 / self.lam**2

    def effective_range(self):
        d = LAPLACE_SPAN / self.lam
        return (self.mu - d, self.mu + d)

    def sample(self, rng, n):
        return rng.laplace(self.mu, 1.0 / self.lam, n)


def lambda_from_variance(var: float) -> float:
    if not var > 0:
        raise DomainError("variance must be > 0")
    return math.sqrt(2.0 / var)


def _fold(z, q):
    return z - round_int(np.asarray(z, dtype=np.float64) / q) * q


def _series_terms(a: float) -> int:
    """Smallest N with exp(-a * (N+1)**2) < SERIES_TOL."""
    if a <= 0:
        raise DomainError("series exponent must be positive")
    n = math.ceil(math.sqrt(-math.log(SERIES_TOL) / a))
    return int(min(max(n, 1), MAX_SERIES_TERMS))


@dataclass(frozen=True)
class QuantizedGaussian(NoiseDistribution):
    """Law of ``Z - round(Z/q)*q`` for ``Z ~ N(0, var)``."""

    var: float
    q: int

    def __post_init__(self):
        if not self.var > 0:
            raise DomainError("variance must be > 0")
        object.__setattr__(self, "q", _check_q(self.q))

    def pdf(self, s):
        return quantized_gaussian_pdf(self.var, self.q, s)

    def cdf(self, s):
        s = np.clip(np.asarray(s, dtype=np.float64), -self.q / 2, self.q / 2)
        a = 2 * math.pi**2 * self.var / self.q**2
        n = np.arange(1, _series_terms(a) + 1, dtype=np.float64)
        w = np.exp(-a * n * n) / (math.pi * n)
        # term-wise integral of the cosine series from -q/2
        sines = np.sin(2 * math.pi * np.multiply.outer(s, n) / self.q)
        return np.clip((s + self.q / 2) / self.q + (sines * w).sum(axis=-1), 0.0, 1.0)

    def mean(self):
        return 0.0

    def variance(self):
        return quantized_gaussian_variance(self.var, self.q)

    def support(self):
        return (-self.q / 2, self.q / 2)

    def sample(self, rng, n):
        return _fold(rng.normal(0.0, math.sqrt(self.var), n), self.q)


@dataclass(frozen=True)
class QuantizedLaplacian(NoiseDistribution):
    """Law of ``Z - round(Z/q)*q`` for zero-mean Laplacian ``Z`` with rate ``lam``.

    Summing the geometric series of shifted Laplacian densities gives
    ``f(s) = lam/2 * cosh(lam*(|s| - q/2)) / sinh(lam*q/2)``.
    """

    lam: float
    q: int

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError("Laplacian rate must be > 0")
        object.__setattr__(self, "q", _check_q(self.q))

    def _ratio(self, s, sign: float):
        # (exp(lam(|s|-h)) + sign*exp(-lam(|s|-h))) / (2 sinh(lam h)), overflow-free
        a = np.abs(np.asarray(s, dtype=np.float64))
        h = self.q / 2
        lam = self.lam
        return (np.exp(lam * (a - 2 * h)) + sign * np.exp(-lam * a)) / -np.expm1(-2 * lam * h)

    def pdf(self, s):
        s = _check_support(s, self.q)
        return 0.5 * self.lam * self._ratio(s, 1.0)

    def cdf(self, s):
        s = np.clip(np.asarray(s, dtype=np.float64), -self.q / 2, self.q / 2)
        return 0.5 + 0.5 * np.sign(s) * (1.0 + self._ratio(s, -1.0))

    def mean(self):
        return 0.0

    def variance(self):
        h = self.q / 2
        x = self.lam * h
        if x < 0.2:
            # Taylor series of 2/x^2 - 2/(x sinh x); the closed form cancels badly here
            x2 = x * x
            g = 1 / 3 - x2 * (7 / 180 - x2 * (31 / 7560 - x2 * (127 / 302400 - x2 * 73 / 1710720)))
            return h * h * g
        # 2/lam^2 - 2h / (lam sinh(lam h)), with sinh written via exp(-x)
        tail = 4.0 * h * math.exp(-x) / (self.lam * -math.expm1(-2 * x))
        return 2.0 / self.lam**2 - tail

    def support(self):
        return (-self.q / 2, self.q / 2)

    def sample(self, rng, n):
        return _fold(rng.laplace(0.0, 1.0 / self.lam, n), self.q)


@dataclass(frozen=True)
class Mixture(NoiseDistribution):
    """Finite mixture; used as the coefficient law of a requantized lattice."""

    components: tuple[NoiseDistribution, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if len(w) != len(self.components) or len(w) == 0 or np.any(w < 0) or w.sum() <= 0:
            raise DomainError("mixture weights must be non-negative and match components")
        object.__setattr__(self, "weights", tuple((w / w.sum()).tolist()))

    def pdf(self, s):
        return sum(w * c.pdf(s) for c, w in zip(self.components, self.weights))

    def cdf(self, s):
        return sum(w * c.cdf(s) for c, w in zip(self.components, self.weights))

    def mean(self):
        return sum(w * c.mean() for c, w in zip(self.components, self.weights))

    def variance(self):
        m = self.mean()
        return sum(w * (c.variance() + (c.mean() - m) ** 2) for c, w in zip(self.components, self.weights))

    def effective_range(self):
        ranges = [c.effective_range() for c in self.components]
        return (min(r[0] for r in ranges), max(r[1] for r in ranges))

    def sample(self, rng, n):
        idx = rng.choice(len(self.components), size=n, p=self.weights)
        out = np.empty(n)
        for i, c in enumerate(self.components):
            sel = idx == i
            out[sel] = c.sample(rng, int(sel.sum()))
        return out


@dataclass(frozen=True)
class Folded(NoiseDistribution):
    """Quantization-noise law of an arbitrary coefficient law (generic folding sum)."""

    source: NoiseDistribution
    q: int

    def __post_init__(self):
        object.__setattr__(self, "q", _check_q(self.q))

    def _shifts(self) -> np.ndarray:
        lo, hi = self.source.effective_range()
        q = self.q
        return np.arange(math.floor(lo / q) - 1, math.ceil(hi / q) + 2, dtype=np.float64) * q

    def pdf(self, s):
        return folded_pdf(self.source, self.q, s)

    def cdf(self, s):
        s = np.clip(np.asarray(s, dtype=np.float64), -self.q / 2, self.q / 2)
        k = self._shifts()
        upper = self.source.cdf(np.add.outer(s, k))
        lower = self.source.cdf(k - self.q / 2)
        return np.clip((upper - lower).sum(axis=-1), 0.0, 1.0)

    def mean(self):
        return _moment(self, lambda s: s)

    def variance(self):
        m = self.mean()
        return _moment(self, lambda s: (s - m) ** 2)

    def support(self):
        return (-self.q / 2, self.q / 2)

    def sample(self, rng, n):
        return _fold(self.source.sample(rng, n), self.q)


def _moment(dist: NoiseDistribution, g) -> float:
    lo, hi = dist.support()
    val, _ = integrate.quad(lambda s: g(s) * float(dist.pdf(s)), lo, hi - 1e-15 * max(1.0, abs(hi)),
                            limit=400, epsabs=1e-13, epsrel=1e-12)
    return val


# -- density and variance evaluations ---------------------------------------------

def folded_pdf(f_Y: NoiseDistribution, q: int, s):
    """Quantization-noise density of coefficient law ``f_Y`` at ``s``: sum_k f_Y(kq + s).

    Only shifts reaching the effective range of ``f_Y`` are summed.
    """
    q = _check_q(q)
    s = _check_support(s, q)
    lo, hi = f_Y.effective_range()
    kmin = math.floor((lo - q / 2) / q)
    kmax = math.ceil((hi + q / 2) / q)
    k = np.arange(kmin, kmax + 1, dtype=np.float64) * q
    vals = f_Y.pdf(np.add.outer(s, k))
    return np.asarray(vals).sum(axis=-1)


def quantized_gaussian_pdf(var: float, q: int, s):
    """Cosine-series density of the quantized-Gaussian law QN(var, q).

    Terms ``exp(-2 pi^2 n^2 var / q^2) cos(2 pi n s / q)`` are summed until the
    weight drops below 1e-15.
    """
    if not var > 0:
        raise DomainError("variance must be > 0")
    q = _check_q(q)
    s = _check_support(s, q)
    a = 2 * math.pi**2 * var / q**2
    n = np.arange(1, _series_terms(a) + 1, dtype=np.float64)
    w = np.exp(-a * n * n)
    cosines = np.cos(2 * math.pi * np.multiply.outer(s, n) / q)
    return 1.0 / q + (2.0 / q) * (cosines * w).sum(axis=-1)


def quantized_gaussian_variance(var: float, q: int) -> float:
    """Variance of QN(var, q); never exceeds the uniform value q^2/12."""
    if not var > 0:
        raise DomainError("variance must be > 0")
    q = _check_q(q)
    if q / (2 * math.sqrt(var)) > 10.0:
        # mass beyond +-q/2 is < 1e-23: the noise is the signal itself
        return float(var)
    a = 2 * math.pi**2 * var / q**2
    n = np.arange(1, _series_terms(a) + 1, dtype=np.float64)
    terms = np.where(n % 2 == 1, -1.0, 1.0) / (n * n) * np.exp(-a * n * n)
    # smallest terms first; the alternating series starting negative is <= 0
    tail = min(float(np.sum(terms[::-1])), 0.0)
    return q * q / 12.0 + q * q / math.pi**2 * tail


def uniformity_diagnostic(sigma: float, q: int) -> dict:
    """How far the quantized-Gaussian law QN(sigma^2, q) is from uniform.

    Returns ``sigma/q`` and the largest relative deviation of the density from
    ``1/q``. Used for the DC term, whose uniform model holds only when the
    coefficient spread is wide compared with the step.
    """
    q = _check_q(q)
    a = 2 * math.pi**2 * sigma**2 / q**2
    n = np.arange(1, _series_terms(a) + 1, dtype=np.float64)
    return {"sigma_over_q": sigma / q, "max_rel_deviation": float(2 * np.exp(-a * n * n).sum())}


# -- model builders ---------------------------------------------------------------

@dataclass(frozen=True)
class FirstCycleModels:
    quant: tuple[NoiseDistribution, ...]
    rounding: tuple[NoiseDistribution, ...] | None


def first_cycle_models(table: QuantTable, *, ac_variance: Sequence[float] | None = None,
                       ac_lambda: Sequence[float] | None = None,
                       spatial_variance: Sequence[float] | float | None = None) -> FirstCycleModels:
    """Per-frequency first-cycle quantization-noise laws and per-position rounding laws.

    DC noise is uniform on ``[-q/2, q/2)``; AC noise is quantized-Laplacian
    with the coefficient rate given directly (``ac_lambda``) or through the
    coefficient variance (``ac_variance``). Both sequences have 64 entries
    and entry 0 is ignored. ``spatial_variance`` is the variance of the
    spatial auxiliary noise, per position or pooled.
    """
    if (ac_variance is None) == (ac_lambda is None):
        raise DomainError("give exactly one of ac_variance or ac_lambda")
    if ac_lambda is None:
        lam = [math.inf] + [lambda_from_variance(v) for v in list(ac_variance)[1:]]
    else:
        lam = list(ac_lambda)
    if len(lam) != 64:
        raise DomainError("need 64 per-frequency parameters")
    quant = [Uniform(-table.dc / 2, table.dc / 2)]
    quant += [QuantizedLaplacian(lam[u], table.steps[u]) for u in range(1, 64)]
    rounding = None
    if spatial_variance is not None:
        sv = np.broadcast_to(np.asarray(spatial_variance, dtype=np.float64), (64,))
        rounding = tuple(QuantizedGaussian(float(v), 1) for v in sv)
    return FirstCycleModels(quant=tuple(quant), rounding=rounding)


@dataclass(frozen=True)
class VarianceBounds:
    quant: np.ndarray
    rounding: np.ndarray
    aux_spatial: np.ndarray
    aux_dct: np.ndarray


def variance_bounds(table: QuantTable) -> VarianceBounds:
    q2 = np.asarray(table.steps, dtype=np.float64) ** 2 / 12.0
    return VarianceBounds(
        quant=q2,
        rounding=np.full(64, 1.0 / 12.0),
        aux_spatial=np.full(64, q2.max()),
        aux_dct=np.full(64, 1.0 / 12.0),
    )


def divisible(q_prev: int, q_cur: int) -> bool:
    """Divisible quantization condition: ``q_cur >= 2`` and ``q_cur`` divides ``q_prev``."""
    return q_cur >= 2 and q_prev % q_cur == 0


def lattice_law(q_prev: int, q_cur: int, aux_variance: float) -> Mixture:
    """Coefficient law of a requantized coefficient with a wide first-cycle spread.

    Dequantized values sit on multiples of ``q_prev``; modulo ``q_cur`` only
    ``q_cur / gcd`` residues occur, equally often when the coefficient law is
    wide. Each residue is blurred by the Gaussian auxiliary noise.
    """
    period = q_cur // math.gcd(q_prev, q_cur)
    comps = tuple(Gaussian(float(r * q_prev), aux_variance) for r in range(period))
    return Mixture(comps, (1.0,) * period)


def higher_cycle_model(q_prev: int, q_cur: int, aux_variance: float,
                       coefficient_law: NoiseDistribution | None = None) -> NoiseDistribution:
    """Law of the quantization noise in cycle ``k+1`` given steps of cycles ``k`` and ``k+1``.

    Without ``coefficient_law`` the non-divisible case falls back to
    :func:`lattice_law`.
    """
    q_prev, q_cur = _check_q(q_prev), _check_q(q_cur)
    if q_cur == 1:
        return QuantizedGaussian(aux_variance, 1)
    if divisible(q_prev, q_cur):
        return Gaussian(0.0, aux_variance)
    law = coefficient_law if coefficient_law is not None else lattice_law(q_prev, q_cur, aux_variance)
    return Folded(law, q_cur)


# -- goodness of fit --------------------------------------------------------------

MIN_FIT_SAMPLES = 1000
MIN_EXPECTED = 5.0


@dataclass(frozen=True)
class FitResult:
    statistic: float
    df: int
    p_value: float
    n: int
    sample_variance: float
    model_variance: float
    variance_z: float
    variance_p: float
    alpha: float
    passed: bool

    CSV_FIELDS = ("n", "statistic", "df", "p_value", "sample_variance", "model_variance",
                  "variance_z", "variance_p", "alpha", "passed")

    def as_row(self) -> dict:
        return {f: getattr(self, f) for f in self.CSV_FIELDS}


def _merge_bins(edges: np.ndarray, expected: np.ndarray, min_expected: float):
    """Merge adjacent bins left to right until each expects at least ``min_expected``."""
    keep = [0]
    acc = 0.0
    for i, e in enumerate(expected):
        acc += e
        if acc >= min_expected:
            keep.append(i + 1)
            acc = 0.0
    if keep[-1] != len(expected):
        if len(keep) > 1:
            keep[-1] = len(expected)
        else:
            keep.append(len(expected))
    return edges[keep]


def default_edges(model: NoiseDistribution, bin_width: float | None = None,
                  support: tuple[float, float] | None = None) -> np.ndarray:
    """Histogram edges for :func:`fit_test`.

    Bounded ranges (the model's support, or ``support`` when given) are cut
    into bins of width ``(hi - lo)/32``; the outermost edges become infinite
    so model mass outside the range lands in the end bins. Unbounded models
    without ``support`` use ``sd/8`` bins over ``mean +- 4 sd`` plus open tails.
    """
    lo, hi = support if support is not None else model.support()
    if math.isfinite(lo) and math.isfinite(hi):
        width = bin_width or (hi - lo) / 32.0
        n = max(int(round((hi - lo) / width)), 1)
        edges = np.linspace(lo, hi, n + 1)
        edges[0], edges[-1] = -np.inf, np.inf
        return edges
    mu, sd = model.mean(), model.std()
    width = bin_width or sd / 8.0
    n = max(int(math.ceil(4 * sd / width)), 1)
    inner = mu + np.arange(-n, n + 1) * width
    return np.concatenate([[-np.inf], inner, [np.inf]])


def fit_test(samples, model: NoiseDistribution, alpha: float = 0.01, *,
             bin_width: float | None = None, ddof: int = 0,
             support: tuple[float, float] | None = None) -> FitResult:
    """Chi-square goodness of fit plus a sample-variance check.

    Binning follows :func:`default_edges`; pass ``support=(-q/2, q/2)`` to
    test an unbounded law against folded data. Bins expecting fewer than 5
    samples are merged. The two
    checks share ``alpha`` (each run at ``alpha/2``); ``ddof`` counts model
    parameters estimated from the same samples.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    n = x.size
    if n < MIN_FIT_SAMPLES:
        raise DomainError(f"fit_test needs at least {MIN_FIT_SAMPLES} samples, got {n}")
    edges = default_edges(model, bin_width, support)
    expected = model.bin_probabilities(edges) * n
    edges = _merge_bins(edges, expected, MIN_EXPECTED)
    probs = model.bin_probabilities(edges)
    probs = probs / probs.sum()
    # the last finite bin is half-open [a, b); np.histogram closes it, so use searchsorted
    idx = np.searchsorted(edges, x, side="right") - 1
    observed = np.bincount(np.clip(idx, 0, len(edges) - 2), minlength=len(edges) - 1)
    exp_counts = probs * n
    nz = exp_counts > 0
    stat = float(np.sum((observed[nz] - exp_counts[nz]) ** 2 / exp_counts[nz]))
    df = max(int(nz.sum()) - 1 - ddof, 1)
    p = float(stats.chi2.sf(stat, df))

    svar = float(x.var())
    mvar = float(model.variance())
    m4 = float(np.mean((x - x.mean()) ** 4))
    se = math.sqrt(max(m4 - svar**2, 1e-300) / n)
    z = (svar - mvar) / se
    pv = float(2 * stats.norm.sf(abs(z)))
    passed = p >= alpha / 2 and pv >= alpha / 2
    return FitResult(stat, df, p, n, svar, mvar, float(z), pv, alpha, passed)


@dataclass(frozen=True)
class TwoSampleResult:
    statistic: float
    p_value: float
    alpha: float

    @property
    def indistinguishable(self) -> bool:
        return self.p_value >= self.alpha


def two_sample_test(a, b, alpha: float = 0.01) -> TwoSampleResult:
    """Two-sample Kolmogorov-Smirnov test; ``indistinguishable`` when not rejected."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise DomainError("two-sample test needs non-empty samples")
    if np.array_equal(np.sort(a), np.sort(b)):
        return TwoSampleResult(0.0, 1.0, alpha)
    res = stats.ks_2samp(a, b)
    return TwoSampleResult(float(res.statistic), float(res.pvalue), alpha)


def erfc_tail(k_sigma: float) -> float:
    """Two-sided Gaussian tail mass beyond ``k_sigma`` standard deviations."""
    return float(special.erfc(k_sigma / math.sqrt(2)))
