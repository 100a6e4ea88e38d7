"""Exact counting probabilities and path-distance CDFs for the Manhattan Cox process.

Facilities sit on the lines of a Manhattan Poisson line process plus the two
lines through the typical intersection at the origin. ``P_k(r)`` is the
probability of exactly ``k`` facilities in the L1 ball ``B(r)``; the CDF of the
path distance to the ``k``-th nearest facility is ``1 - sum_{j<k} P_j(r)``.

Three routes compute ``P_k``:

* :func:`pk_partition` sums over the integer partitions of ``k`` (production);
* :func:`pk_faa_di_bruno` expands the probability generating function with
  partial Bell polynomials;
* :func:`pk_via_lt_quadrature` integrates a Poisson mass against the density
  of the total street length inside ``B(r)``.

All lengths are km and all intensities km^-1.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np

from . import kernels
from .numerics import (
    MAX_PARTITION_K,
    bell_partial_table,
    hyp0f1_regularized,
    integer_partitions,
    partition_multiplicities,
    regularized_lower_gamma,
)

log = logging.getLogger(__name__)

# accept a double-precision alternating sum while |terms| / |sum| stays below this
_CANCEL_LIMIT = 1e6

__all__ = [
    "ModelParams",
    "DistanceCdf",
    "NumericInconsistencyError",
    "QuadratureError",
    "VARIANTS",
    "a_coeff",
    "a_coeffs",
    "p0",
    "pk_partition",
    "pk_partition_terms",
    "pk_table",
    "pk_series_table",
    "pk_closed_form",
    "pk_faa_di_bruno",
    "g_derivatives",
    "pk_via_lt_quadrature",
    "lt_pdf",
    "lt_pdf_closed_form",
    "lt_mgf",
    "lt_mean",
    "nlos_pk",
    "cdf_path_distance",
    "cdf_table",
    "ppp_knn",
    "count_mgf",
    "count_truncation",
    "expected_count",
]

VARIANTS = ("full", "nlos")

# stands in for log(0) so that 0 * log(0) evaluates to 0 in the matrix products
_LOG_ZERO = -1e300
_CDF_SLACK = 1e-12


class NumericInconsistencyError(ArithmeticError):
    """Probabilities that should sum to at most one exceeded it materially."""


class QuadratureError(ArithmeticError):
    """The street-length quadrature failed its self-consistency check."""


@dataclass(frozen=True)
class ModelParams:
    """Intensities of the Manhattan Cox process, all in km^-1.

    ``lambda_v`` counts vertical streets per km along a horizontal line and
    ``lambda_h`` horizontal streets per km along a vertical line. ``lambda_g``
    is the facility intensity along every street.
    """

    lambda_v: float
    lambda_h: float
    lambda_g: float

    def __post_init__(self):
        for name in ("lambda_v", "lambda_h", "lambda_g"):
            val = getattr(self, name)
            if not (val >= 0 and math.isfinite(val)):
                raise ValueError(f"{name} must be finite and >= 0, got {val}")
            object.__setattr__(self, name, float(val))

    @classmethod
    def equal(cls, lam, lambda_g):
        return cls(lam, lam, lambda_g)

    @property
    def line_sum(self):
        """``lambda_v + lambda_h``."""
        return self.lambda_v + self.lambda_h

    @property
    def is_equal(self):
        return self.lambda_v == self.lambda_h

    @property
    def lam(self):
        """Equivalent equal intensity ``2 lv lh / (lv + lh)``."""
        s = self.line_sum
        if s == 0:
            return 0.0
        return 2.0 * self.lambda_v * self.lambda_h / s

    def with_lambda_g(self, lambda_g):
        return ModelParams(self.lambda_v, self.lambda_h, lambda_g)

    def as_dict(self):
        return {"lambda_v": self.lambda_v, "lambda_h": self.lambda_h, "lambda_g": self.lambda_g}


@dataclass(frozen=True, eq=False)
class DistanceCdf:
    """CDF of the ``k``-th nearest distance tabulated on a radius grid."""

    k: int
    radii: np.ndarray
    probs: np.ndarray
    source: str
    params: object = None

    def __post_init__(self):
        radii = np.array(self.radii, dtype=np.float64)
        probs = np.array(self.probs, dtype=np.float64)
        if radii.ndim != 1 or radii.shape != probs.shape or radii.size == 0:
            raise ValueError("radii and probs must be equal-length nonempty 1-D arrays")
        if radii[0] < 0 or np.any(np.diff(radii) <= 0):
            raise ValueError("radii must be nonnegative and strictly increasing")
        if np.any(probs < -_CDF_SLACK) or np.any(probs > 1 + _CDF_SLACK):
            raise ValueError("probabilities must lie in [0, 1]")
        if np.any(np.diff(probs) < -1e-10):
            raise ValueError("CDF values must be nondecreasing")
        if self.source not in ("analytic", "simulated", "empirical"):
            raise ValueError(f"unknown source {self.source!r}")
        probs = np.clip(probs, 0.0, 1.0)
        radii.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "k", int(self.k))


# ---------------------------------------------------------------------------
# per-line counts
# ---------------------------------------------------------------------------

def _one_minus_a0(x):
    # 1 - (1 - e^-x)/x without cancellation for small x
    if x < 1e-2:
        # alternating series sum_{n>=1} (-1)^(n+1) x^n / (n+1)!
        total = 0.0
        term = 1.0
        for n in range(1, 12):
            term *= x / (n + 1)
            total += term if n % 2 else -term
        return total
    return (x + math.expm1(-x)) / x


def a_coeff(q, lambda_g, r):
    """Probability that a uniformly placed crossing street has ``q`` facilities in ``B(r)``.

    Equals ``P(q + 1, 2 lambda_g r) / (2 lambda_g r)`` with ``P`` the
    regularized lower incomplete gamma function.
    """
    q = int(q)
    if q < 0:
        raise ValueError(f"q must be >= 0, got {q}")
    if not r > 0:
        raise ValueError(f"r must be > 0, got {r}")
    if lambda_g < 0:
        raise ValueError(f"lambda_g must be >= 0, got {lambda_g}")
    x = 2.0 * lambda_g * r
    if x == 0.0:
        return 1.0 if q == 0 else 0.0
    if q == 0:
        return -math.expm1(-x) / x
    return regularized_lower_gamma(q + 1, x) / x


def a_coeffs(q_max, lambda_g, r):
    """Array ``[a_0, ..., a_{q_max}]``."""
    return np.array([a_coeff(q, lambda_g, r) for q in range(q_max + 1)])


def _check_variant(variant):
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")


def _log_factors(params, r, k_max, variant):
    """``log P_0`` and ``log c_q`` (q = 1..k_max) at a single radius ``r > 0``.

    ``P_{k|xi} = P_0 * prod_q c_q^{f_q} / f_q!`` over the distinct parts of xi.
    """
    s = params.line_sum
    lg = params.lambda_g
    a = a_coeffs(max(k_max, 1), lg, r)
    x = 2.0 * lg * r
    one_minus_a0 = _one_minus_a0(x) if x > 0 else 0.0
    if variant == "full":
        log_p0 = -4.0 * lg * r - 2.0 * s * r * one_minus_a0
        c1 = 2.0 * (2.0 * lg + s * a[1]) * r
    else:
        log_p0 = -2.0 * s * r * one_minus_a0
        c1 = 2.0 * s * a[1] * r
    c = 2.0 * s * a[1 : k_max + 1] * r
    if k_max >= 1:
        c[0] = c1
    with np.errstate(divide="ignore"):
        logc = np.where(c > 0, np.log(np.where(c > 0, c, 1.0)), _LOG_ZERO)
    return log_p0, logc


@lru_cache(maxsize=64)
def _partition_data(k):
    mat = partition_multiplicities(k).astype(np.float64)
    from scipy.special import gammaln

    lgsum = gammaln(mat + 1.0).sum(axis=1)
    mat.setflags(write=False)
    lgsum.setflags(write=False)
    return mat, lgsum


def _check_k(k, limit=MAX_PARTITION_K):
    k = int(k)
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    if k > limit:
        raise ValueError(f"k={k} exceeds the supported maximum {limit}")
    return k


def _log_fact(k):
    from scipy.special import gammaln

    return gammaln(np.arange(k + 1, dtype=np.float64) + 1.0)


def _log_terms(log_p0, logc, k):
    # log P_{k|xi} for every partition xi of k, in integer_partitions order
    if k == 0:
        return np.array([log_p0])
    mat, lgsum = _partition_data(k)
    return log_p0 + mat @ logc[:k] - lgsum


def _pk_single(params, r, k, variant):
    if not r > 0:
        raise ValueError(f"r must be > 0, got {r}")
    log_p0, logc = _log_factors(params, float(r), k, variant)
    return math.exp(kernels.partition_logsumexp(log_p0, logc, _log_fact(k), k))


def p0(params, r):
    """Probability that ``B(r)`` holds no facility."""
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r}")
    if r == 0:
        return 1.0
    log_p0, _ = _log_factors(params, float(r), 0, "full")
    return math.exp(log_p0)


def pk_partition(params, r, k):
    """``P_k(r)`` as a sum over the integer partitions of ``k``.

    Each partition contributes ``P_0`` times, for every distinct part ``q`` of
    multiplicity ``f``, the factor ``c_q^f / f!`` where
    ``c_1 = 2 (2 lambda_g + (lambda_v + lambda_h) a_1) r`` and
    ``c_q = 2 (lambda_v + lambda_h) a_q r`` for ``q > 1``. Partitions are
    enumerated one at a time in descending-lex order and never stored; each
    term is formed in log space and folded into a running max-shifted sum.
    The cost grows like ``p(k)``, about 1e8 partitions at ``k = 100``.
    """
    k = _check_k(k)
    return _pk_single(params, r, k, "full")


def nlos_pk(params, r, k):
    """``P_k(r)`` counting only facilities off the two typical lines."""
    k = _check_k(k)
    return _pk_single(params, r, k, "nlos")


def pk_partition_terms(params, r, k, variant="full"):
    """Per-partition contributions ``[(Partition, P_{k|xi}), ...]`` to ``P_k``."""
    k = _check_k(k)
    _check_variant(variant)
    if not r > 0:
        raise ValueError(f"r must be > 0, got {r}")
    log_p0, logc = _log_factors(params, float(r), k, variant)
    terms = np.exp(_log_terms(log_p0, logc, k))
    return list(zip(integer_partitions(k), terms.tolist()))


def pk_table(params, radii, k_max, variant="full"):
    """``P_0 .. P_{k_max}`` at each radius; shape ``(len(radii), k_max + 1)``.

    ``r = 0`` rows are ``[1, 0, 0, ...]``.
    """
    k_max = _check_k(k_max)
    _check_variant(variant)
    radii = np.atleast_1d(np.asarray(radii, dtype=np.float64))
    if np.any(radii < 0):
        raise ValueError("radii must be >= 0")
    out = np.zeros((radii.size, k_max + 1))
    for row, r in enumerate(radii):
        if r == 0:
            out[row, 0] = 1.0
            continue
        log_p0, logc = _log_factors(params, float(r), k_max, variant)
        lf = _log_fact(k_max)
        for k in range(k_max + 1):
            out[row, k] = math.exp(kernels.partition_logsumexp(log_p0, logc, lf, k))
    return out


_SERIES_RESCALE = 1e200


def pk_series_table(params, radii, k_max, variant="full"):
    """Same table as :func:`pk_table` from the power-series recurrence.

    The partition sum is the ``z^k`` coefficient of ``P_0 exp(sum_q c_q z^q)``,
    whose coefficients obey ``k P_k = sum_{q=1}^k q c_q P_{k-q}``. All terms
    are nonnegative, so this O(k^2) recurrence is stable; it serves as a fast
    oracle where ``p(k)`` is too large to enumerate.
    """
    k_max = int(k_max)
    _check_variant(variant)
    radii = np.atleast_1d(np.asarray(radii, dtype=np.float64))
    out = np.zeros((radii.size, k_max + 1))
    for row, r in enumerate(radii):
        if r == 0:
            out[row, 0] = 1.0
            continue
        log_p0, logc = _log_factors(params, float(r), max(k_max, 1), variant)
        c = np.exp(logc)
        qc = np.arange(1, c.size + 1) * c
        # run on P_k / P_0 and rescale when it grows large; the recurrence is
        # linear, so rescaling every earlier entry keeps it exact
        Q = np.zeros(k_max + 1)
        Q[0] = 1.0
        shift = log_p0
        for k in range(1, k_max + 1):
            Q[k] = float(np.dot(qc[:k], Q[k - 1 :: -1][:k])) / k
            if Q[k] > _SERIES_RESCALE:
                Q[: k + 1] /= _SERIES_RESCALE
                shift += math.log(_SERIES_RESCALE)
        with np.errstate(divide="ignore"):
            out[row] = np.exp(np.log(Q) + shift)
    return out


def _cdf_from_pk(pk_rows, k):
    partial = pk_rows[..., :k].sum(axis=-1)
    excess = partial - 1.0
    if np.any(excess > _CDF_SLACK):
        raise NumericInconsistencyError(
            f"partial sums of P_j exceed 1 by {float(np.max(excess)):.3e}"
        )
    return np.clip(1.0 - partial, 0.0, 1.0)


def cdf_path_distance(params, r, k, variant="full"):
    """``P(R_k <= r) = 1 - sum_{j<k} P_j(r)`` for the chosen variant."""
    k = int(k)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    _check_variant(variant)
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r}")
    if r == 0:
        return 0.0
    rows = pk_table(params, [r], k - 1, variant)
    return float(_cdf_from_pk(rows, k)[0])


def cdf_table(params, radii, k_max, variant="full"):
    """List of :class:`DistanceCdf` for ``k = 1 .. k_max`` on a shared grid."""
    k_max = int(k_max)
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    radii = np.asarray(radii, dtype=np.float64)
    rows = pk_table(params, radii, k_max - 1, variant)
    return [
        DistanceCdf(k, radii, _cdf_from_pk(rows, k), "analytic", params)
        for k in range(1, k_max + 1)
    ]


# ---------------------------------------------------------------------------
# closed forms for k <= 3 (literal transcriptions, test oracle)
# ---------------------------------------------------------------------------

def _require_equal(params, what):
    if not params.is_equal:
        raise ValueError(f"{what} requires lambda_v == lambda_h")


def pk_closed_form(params, r, k):
    """Hand-derived expressions for ``P_0 .. P_3`` (equal street intensities)."""
    _require_equal(params, "pk_closed_form")
    k = int(k)
    if k < 0 or k > 3:
        raise ValueError(f"closed forms exist for k in 0..3 only, got {k}")
    lam = params.lambda_v
    lg = params.lambda_g
    if r == 0:
        return 1.0 if k == 0 else 0.0
    a0 = (1 - math.exp(-2 * lg * r)) / (2 * lg * r) if lg > 0 else 1.0
    P0 = math.exp(-4 * lg * r) * math.exp(-4 * lam * r * (1 - a0))
    if k == 0:
        return P0
    e = math.exp(-2 * r * lg)
    first = 4 * r * lg + 4 * r * lam * (a0 - e)
    if k == 1:
        return P0 * first
    second = a0 - e - r * lg * e
    if k == 2:
        return 0.5 * P0 * first**2 + 4 * lam * r * P0 * second
    third = a0 - e - r * lg * e - (2.0 / 3.0) * r**2 * lg**2 * e
    return (
        P0 * first**3 / 6.0
        + 4 * lam * r * P0 * first * second
        + 4 * r * lam * P0 * third
    )


# ---------------------------------------------------------------------------
# Faa di Bruno route
# ---------------------------------------------------------------------------

_FAA_MAX_K = 30


def g_derivatives(params, r, m_max):
    """Derivatives ``g^{(m)}(0)``, m = 1..m_max, of the log-PGF of the count in ``B(r)``.

    ``g(t) = 4 r lambda_g (t - 1) + 4 lambda r (h(t) - 1)`` with
    ``h(t) = (exp(2 r lambda_g (t - 1)) - 1) / (2 r lambda_g (t - 1))``.
    Then ``g'(0) = 4 r (lambda_g + lambda a_1)`` and
    ``g^{(m)}(0) = 4 lambda r m! a_m`` for ``m >= 2``.
    """
    _require_equal(params, "g_derivatives")
    lam = params.lambda_v
    lg = params.lambda_g
    a = a_coeffs(m_max, lg, r)
    out = np.empty(m_max)
    for m in range(1, m_max + 1):
        if m == 1:
            out[0] = 4.0 * r * (lg + lam * a[1])
        else:
            out[m - 1] = 4.0 * lam * r * math.factorial(m) * a[m]
    return out


def pk_faa_di_bruno(params, r, k):
    """``P_k = (P_0 / k!) sum_m B_{k,m}(g'(0), ..., g^{(k-m+1)}(0))``."""
    _require_equal(params, "pk_faa_di_bruno")
    k = int(k)
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    if k > _FAA_MAX_K:
        raise ValueError(f"Faa di Bruno route supports k <= {_FAA_MAX_K}, got {k}")
    if not r > 0:
        raise ValueError(f"r must be > 0, got {r}")
    P0 = p0(params, r)
    if k == 0:
        return P0
    B = bell_partial_table(g_derivatives(params, r, k), k)
    return P0 / math.factorial(k) * float(B[k, 1 : k + 1].sum())


# ---------------------------------------------------------------------------
# total street length L_t inside B(r)
# ---------------------------------------------------------------------------

def _line_count_cutoff(mean):
    # Poisson(mean) mass beyond this many lines is far below double precision
    return int(math.ceil(mean + 10.0 * math.sqrt(mean) + 20.0))


def _line_count_weights(mean, n_max):
    n = np.arange(n_max + 1, dtype=np.float64)
    from scipy.special import gammaln

    with np.errstate(divide="ignore"):
        logw = n * math.log(mean) - mean - gammaln(n + 1.0)
    return np.exp(logw)


def lt_mean(lam, r):
    """``E[L_t] = 4 r + 4 lambda r^2``."""
    return 4.0 * r + 4.0 * lam * r * r


def _check_lt_args(lam, r, l):
    if not r > 0:
        raise ValueError(f"r must be > 0, got {r}")
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    if l < 4.0 * r:
        raise ValueError(f"L_t is at least 4r = {4 * r}, got l = {l}")


def _lt_density_mixture(lam, r, l):
    # Poisson-weighted Irwin-Hall densities, shifted by 4r and scaled by 2r
    mean = 4.0 * lam * r
    if mean == 0.0:
        return 0.0
    u = (l - 4.0 * r) / (2.0 * r)
    # past the bulk only n > u lines reach u; keep enough of them for relative accuracy
    n_max = int(u) + _line_count_cutoff(mean)
    w = _line_count_weights(mean, n_max)
    i = int(math.floor(u))
    phi = u - i
    return float(kernels.ih_mixture(w, np.array([phi]))[0, i]) / (2.0 * r)


def _lt_0f1_terms(x, u):
    terms = [x * hyp0f1_regularized(2, x * u)]
    for j in range(1, int(math.floor(u)) + 1):
        v = u - j
        terms.append((-x) ** j / math.factorial(j) * v ** (j - 1) * hyp0f1_regularized(j, x * v))
    return terms


def _lt_0f1_mp(x, u, dps):
    with mpmath.workdps(dps):
        x = mpmath.mpf(x)
        u = mpmath.mpf(u)
        total = x * mpmath.hyp0f1(2, x * u)
        for j in range(1, int(mpmath.floor(u)) + 1):
            v = u - j
            total += (-x) ** j / mpmath.factorial(j) * v ** (j - 1) * mpmath.hyp0f1(j, x * v) / mpmath.factorial(j - 1)
        return total, mpmath.exp(-x)


def lt_pdf_closed_form(lam, r, l):
    """Density of ``L_t`` for ``l >= 4r`` via regularized ``0F1`` terms.

    Reorders the mixture sum so each alternating index carries one ``0F1``
    factor. The alternating terms cancel heavily once ``4 lambda r`` is
    large; when double precision would lose more than half its digits the
    sum is redone in mpmath with as many extra digits as the cancellation
    needs. Used as a cross-check against the mixture form.
    """
    _check_lt_args(lam, r, l)
    x = 4.0 * lam * r
    u = (l - 4.0 * r) / (2.0 * r)
    terms = _lt_0f1_terms(x, u)
    total = math.fsum(terms)
    size = math.fsum(abs(t) for t in terms)
    if size <= _CANCEL_LIMIT * abs(total):
        return math.exp(-x) / (2.0 * r) * total
    dps = 30 + int(math.log10(size))
    for _ in range(6):
        exact, ex = _lt_0f1_mp(x, u, dps)
        if exact != 0 and size / abs(float(exact)) < 10.0 ** (dps - 20):
            break
        dps *= 2
    return float(ex * exact) / (2.0 * r)


def lt_pdf(lam, r, l, cross_check=True, tol=1e-6):
    """Mixed distribution of the total street length ``L_t`` inside ``B(r)``.

    Returns ``(atom_weight, density)``: the point mass ``exp(-4 lambda r)`` at
    ``l = 4r`` and the density of the continuous part at ``l`` (right limit at
    ``l = 4r``). With ``cross_check`` the ``0F1`` form is also evaluated and a
    relative disagreement above ``tol`` is logged as a warning.
    """
    _check_lt_args(lam, r, l)
    atom = math.exp(-4.0 * lam * r)
    dens = _lt_density_mixture(lam, r, l)
    if cross_check and lam > 0:
        alt = lt_pdf_closed_form(lam, r, l)
        scale = max(abs(dens), 1e-300)
        if abs(alt - dens) > tol * scale:
            log.warning(
                "L_t density forms disagree at lambda=%g r=%g l=%g: mixture=%.12g 0F1=%.12g",
                lam, r, l, dens, alt,
            )
    return atom, dens


def lt_mgf(lam, r, t):
    """Moment generating function ``E[exp(t L_t)]``."""
    t = float(t)
    y = 2.0 * r * t
    ratio = 1.0 if y == 0.0 else math.expm1(y) / y if y < 700 else math.inf
    expo = 4.0 * r * t + 4.0 * lam * r * (ratio - 1.0)
    if not expo < 709.0:
        raise OverflowError(f"MGF of L_t overflows at t={t}")
    return math.exp(expo)


_GL_ORDERS = (16, 24)


def _lt_quadrature_all(lam, lambda_g, r, k_max, order):
    mean = 4.0 * lam * r
    ks = np.arange(k_max + 1, dtype=np.float64)
    from scipy.special import gammaln

    def poisson_logpmf(mu):
        mu = np.asarray(mu, dtype=np.float64)
        with np.errstate(divide="ignore"):
            return -mu[..., None] + ks * np.log(mu)[..., None] - gammaln(ks + 1.0)

    if lambda_g == 0.0:
        res = np.zeros(k_max + 1)
        res[0] = 1.0
        return res
    base = math.exp(-mean) * np.exp(poisson_logpmf(4.0 * lambda_g * r))
    if mean == 0.0:
        return base
    n_max = _line_count_cutoff(mean)
    weights = _line_count_weights(mean, n_max)
    # split unit cells so the facility-count decay exp(-2 r lambda_g u) stays resolvable
    sub = max(1, int(math.ceil(2.0 * r * lambda_g / 2.0)))
    xg, wg = np.polynomial.legendre.leggauss(order)
    phis = ((np.arange(sub)[:, None] + (xg[None, :] + 1.0) / 2.0) / sub).ravel()
    wq = np.tile(wg / (2.0 * sub), sub)
    mix = kernels.ih_mixture(weights, phis)  # (G, n_max)
    u = phis[:, None] + np.arange(mix.shape[1])[None, :]
    logpk = poisson_logpmf(lambda_g * (4.0 * r + 2.0 * r * u))  # (G, n_max, k+1)
    contrib = np.einsum("g,gi,gik->k", wq, mix, np.exp(logpk))
    return base + contrib


def pk_via_lt_quadrature(params, r, k, rtol=1e-9):
    """``P_k`` by averaging ``Poisson(lambda_g l)`` over the law of ``L_t``.

    The atom at ``l = 4r`` is added exactly; the continuous part is integrated
    with Gauss-Legendre rules on the cells between the density's kinks. Two
    rule orders are compared and a disagreement above ``rtol`` raises
    :class:`QuadratureError`.
    """
    _require_equal(params, "pk_via_lt_quadrature")
    k = int(k)
    if k < 0 or k > 10:
        raise ValueError(f"quadrature route supports 0 <= k <= 10, got {k}")
    if not r > 0:
        raise ValueError(f"r must be > 0, got {r}")
    lo, hi = (
        _lt_quadrature_all(params.lambda_v, params.lambda_g, r, k, order)[k]
        for order in _GL_ORDERS
    )
    if abs(hi - lo) > rtol * abs(hi) + 1e-300:
        raise QuadratureError(
            f"quadrature orders disagree for k={k}, r={r}: {lo!r} vs {hi!r}"
        )
    return float(hi)


# ---------------------------------------------------------------------------
# counting-law utilities
# ---------------------------------------------------------------------------

def expected_count(params, r, variant="full"):
    """Mean number of facilities in ``B(r)``."""
    _check_variant(variant)
    s = params.line_sum
    lines = 2.0 * s * r * r
    typical = 4.0 * r if variant == "full" else 0.0
    return params.lambda_g * (typical + lines)


def count_mgf(params, r, t, variant="full"):
    """``log E[exp(t N)]`` for the facility count ``N`` in ``B(r)``."""
    _check_variant(variant)
    z = params.lambda_g * math.expm1(t)
    y = 2.0 * r * z
    h = 1.0 if y == 0.0 else math.expm1(y) / y
    out = 2.0 * params.line_sum * r * (h - 1.0)
    if variant == "full":
        out += 4.0 * r * z
    return out


def count_truncation(params, r, tol=1e-10, variant="full", k_limit=MAX_PARTITION_K):
    """Smallest ``K`` with ``P(N > K) < tol`` by a Chernoff bound on the count MGF.

    ``P(N >= K + 1) <= min_t E[exp(t N)] exp(-t (K + 1))``; the minimum is taken
    over a log-spaced grid of ``t`` (the exponent is convex in ``t``).
    """
    mean = expected_count(params, r, variant)
    if mean == 0.0:
        return 0
    ts = np.geomspace(1e-4, 12.0, 600)
    logm = np.empty_like(ts)
    for i, t in enumerate(ts):
        try:
            logm[i] = count_mgf(params, r, t, variant)
        except OverflowError:
            logm[i] = math.inf
    log_tol = math.log(tol)
    for K in range(int(mean), k_limit + 1):
        if np.min(logm - ts * (K + 1)) < log_tol:
            return K
    raise ValueError(
        f"count tail stays above {tol} beyond k={k_limit} (mean count {mean:.3g})"
    )


# ---------------------------------------------------------------------------
# planar PPP baseline
# ---------------------------------------------------------------------------

def ppp_knn(mu, k, r):
    """Density and CDF of the Euclidean ``k``-th neighbour distance in a planar PPP."""
    if not mu > 0:
        raise ValueError(f"mu must be > 0, got {mu}")
    k = int(k)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r}")
    if r == 0:
        return 0.0, 0.0
    if math.isinf(r):
        return 0.0, 1.0
    z = mu * math.pi * r * r
    pdf = math.exp(math.log(2.0) - z + k * math.log(z) - math.log(r) - math.lgamma(k))
    return pdf, regularized_lower_gamma(k, z)
