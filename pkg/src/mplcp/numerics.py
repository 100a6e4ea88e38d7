"""Special functions and combinatorial primitives."""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "Partition",
    "regularized_lower_gamma",
    "regularized_upper_gamma",
    "integer_partitions",
    "partition_count",
    "partition_multiplicities",
    "bell_partial",
    "bell_partial_table",
    "irwin_hall_pdf",
    "hyp0f1_regularized",
    "log_factorial",
    "MAX_PARTITION_K",
]

MAX_PARTITION_K = 200

_GAMMA_EPS = 1e-15
_GAMMA_TINY = 1e-300
_GAMMA_MAXITER = 10_000


@dataclass(frozen=True)
class Partition:
    """Integer partition stored as ``(part, multiplicity)`` pairs.

    Parts are distinct and sorted in descending order.
    """

    parts: tuple

    def __post_init__(self):
        qs = [q for q, _ in self.parts]
        if any(q < 1 or f < 1 for q, f in self.parts):
            raise ValueError(f"parts and multiplicities must be >= 1: {self.parts}")
        if qs != sorted(set(qs), reverse=True):
            raise ValueError(f"parts must be distinct and descending: {self.parts}")

    @classmethod
    def from_parts(cls, values):
        """Build from a flat sequence such as ``(3, 1, 1)``."""
        counts = {}
        for v in values:
            counts[int(v)] = counts.get(int(v), 0) + 1
        return cls(tuple(sorted(counts.items(), reverse=True)))

    @property
    def k(self):
        return sum(q * f for q, f in self.parts)

    @property
    def size(self):
        """Number of summands, counted with multiplicity."""
        return sum(f for _, f in self.parts)

    def multiplicity(self, q):
        for part, f in self.parts:
            if part == q:
                return f
        return 0

    def as_tuple(self):
        """Flat descending tuple, e.g. ``(3, 1, 1)``."""
        return tuple(q for q, f in self.parts for _ in range(f))

    def __str__(self):
        return "{" + ",".join(str(v) for v in self.as_tuple()) + "}"


# ---------------------------------------------------------------------------
# incomplete gamma
# ---------------------------------------------------------------------------

def _gamma_series(a, x):
    # P(a, x) by the power series, valid and fast for x < a + 1
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(_GAMMA_MAXITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _GAMMA_EPS:
            break
    else:  # pragma: no cover
        raise ArithmeticError(f"incomplete gamma series did not converge (a={a}, x={x})")
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a, x):
    # Q(a, x) by the Legendre continued fraction (modified Lentz), x >= a + 1
    b = x + 1.0 - a
    c = 1.0 / _GAMMA_TINY
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_MAXITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _GAMMA_TINY:
            d = _GAMMA_TINY
        c = b + an / c
        if abs(c) < _GAMMA_TINY:
            c = _GAMMA_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _GAMMA_EPS:
            break
    else:  # pragma: no cover
        raise ArithmeticError(f"incomplete gamma fraction did not converge (a={a}, x={x})")
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def _check_gamma_args(a, x):
    if not a > 0:
        raise ValueError(f"regularized gamma needs a > 0, got {a}")
    if not x >= 0:
        raise ValueError(f"regularized gamma needs x >= 0, got {x}")


def regularized_lower_gamma(a, x):
    """Regularized lower incomplete gamma ``P(a, x)``.

    ``P(a, x) = (1 / Gamma(a)) * int_0^x t^(a-1) e^(-t) dt``. Uses the power
    series for ``x < a + 1`` and the continued fraction for the complement
    otherwise.
    """
    a = float(a)
    x = float(x)
    _check_gamma_args(a, x)
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(_gamma_series(a, x), 1.0)
    return max(1.0 - _gamma_cf(a, x), 0.0)


def regularized_upper_gamma(a, x):
    """Complement ``Q(a, x) = 1 - P(a, x)``, computed without subtraction where possible."""
    a = float(a)
    x = float(x)
    _check_gamma_args(a, x)
    if x == 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return max(1.0 - _gamma_series(a, x), 0.0)
    return min(_gamma_cf(a, x), 1.0)


# ---------------------------------------------------------------------------
# partitions
# ---------------------------------------------------------------------------

def _descending_partitions(n, largest):
    if n == 0:
        yield ()
        return
    for first in range(min(n, largest), 0, -1):
        for rest in _descending_partitions(n - first, first):
            yield (first,) + rest


def _check_partition_k(k):
    if k < 0:
        raise ValueError(f"cannot partition a negative integer: {k}")
    if k > MAX_PARTITION_K:
        raise ValueError(f"k={k} exceeds the enumeration limit {MAX_PARTITION_K}")


def integer_partitions(k):
    """All partitions of ``k``, largest part first, in descending-lex order.

    ``integer_partitions(3)`` gives ``{3}, {2,1}, {1,1,1}``; ``k = 0`` gives a
    single empty partition.
    """
    k = int(k)
    _check_partition_k(k)
    return [Partition.from_parts(p) for p in _descending_partitions(k, k)]


@lru_cache(maxsize=None)
def partition_count(k):
    """p(k) by Euler's pentagonal-number recurrence (exact integers)."""
    if k < 0:
        return 0
    p = [1] + [0] * k
    for n in range(1, k + 1):
        total = 0
        j = 1
        while True:
            g1 = j * (3 * j - 1) // 2
            if g1 > n:
                break
            sign = 1 if j % 2 else -1
            total += sign * p[n - g1]
            g2 = j * (3 * j + 1) // 2
            if g2 <= n:
                total += sign * p[n - g2]
            j += 1
        p[n] = total
    return p[k]


@lru_cache(maxsize=64)
def partition_multiplicities(k):
    """Multiplicity matrix of the partitions of ``k`` (read-only).

    Row ``j`` holds, at column ``q - 1``, how often the part ``q`` occurs in the
    ``j``-th partition of :func:`integer_partitions` order. Shape is
    ``(p(k), k)``; for ``k = 0`` it is ``(1, 0)``.
    """
    k = int(k)
    _check_partition_k(k)
    rows = list(_descending_partitions(k, k))
    mat = np.zeros((len(rows), k), dtype=np.int16)
    for j, parts in enumerate(rows):
        for q in parts:
            mat[j, q - 1] += 1
    mat.setflags(write=False)
    return mat


# ---------------------------------------------------------------------------
# Bell polynomials
# ---------------------------------------------------------------------------

def bell_partial_table(xs, k_max):
    """Table ``B[n, m]`` of partial Bell polynomials for ``0 <= m <= n <= k_max``.

    Uses ``B_{n,m} = sum_{j=1}^{n-m+1} C(n-1, j-1) x_j B_{n-j, m-1}`` with
    ``B_{0,0} = 1``. ``xs[0]`` is ``x_1``.
    """
    xs = [float(v) for v in xs]
    if len(xs) < k_max:
        xs = xs + [0.0] * (k_max - len(xs))
    B = np.zeros((k_max + 1, k_max + 1))
    B[0, 0] = 1.0
    for n in range(1, k_max + 1):
        for m in range(1, n + 1):
            acc = 0.0
            for j in range(1, n - m + 2):
                acc += math.comb(n - 1, j - 1) * xs[j - 1] * B[n - j, m - 1]
            B[n, m] = acc
    return B


def bell_partial(k, m, xs):
    """Partial exponential Bell polynomial ``B_{k,m}(x_1, ..., x_{k-m+1})``."""
    k = int(k)
    m = int(m)
    if m < 1 or m > k:
        raise ValueError(f"bell_partial needs 1 <= m <= k, got k={k}, m={m}")
    if len(xs) < k - m + 1:
        raise ValueError(f"need {k - m + 1} arguments, got {len(xs)}")
    return float(bell_partial_table(list(xs)[: k - m + 1], k)[k, m])


# ---------------------------------------------------------------------------
# Irwin-Hall, 0F1, log-factorial
# ---------------------------------------------------------------------------

# beyond this n the alternating sum loses too many digits; switch to the
# B-spline recurrence (nonnegative weights, no cancellation)
_IH_ALTERNATING_MAX_N = 20


def _irwin_hall_alternating(n, u):
    terms = [
        (-1) ** j * math.comb(n, j) * (u - j) ** (n - 1)
        for j in range(0, int(math.floor(u)) + 1)
    ]
    return math.fsum(terms) / math.factorial(n - 1)


def _irwin_hall_recurrence(n, u):
    from .kernels import ih_mixture_numpy

    i = int(math.floor(u))
    phi = u - i
    w = np.zeros(n + 1)
    w[n] = 1.0
    return float(ih_mixture_numpy(w, np.array([phi]))[0, i])


def irwin_hall_pdf(n, u, method="auto"):
    """Density at ``u`` of the sum of ``n`` iid Uniform(0, 1) variables.

    ``method`` is ``"alternating"`` (the classical finite alternating sum,
    compensated with ``math.fsum``), ``"recurrence"`` (B-spline recurrence) or
    ``"auto"`` (alternating for ``n <= 20``).
    """
    n = int(n)
    if n < 1:
        raise ValueError(f"Irwin-Hall needs n >= 1, got {n}")
    u = float(u)
    if u < 0.0 or u > n:
        return 0.0
    if n == 1:
        return 1.0 if u < 1.0 else 0.0
    if u == n:
        return 0.0
    if method == "auto":
        method = "alternating" if n <= _IH_ALTERNATING_MAX_N else "recurrence"
    if method == "alternating":
        # the density is symmetric about n/2; the lower half needs far fewer terms
        return max(_irwin_hall_alternating(n, min(u, n - u)), 0.0)
    if method == "recurrence":
        return _irwin_hall_recurrence(n, u)
    raise ValueError(f"unknown method {method!r}")


def hyp0f1_regularized(a, z):
    """Regularized confluent limit function ``sum_k z^k / (Gamma(a + k) k!)``.

    Nonpositive integer ``a`` is allowed: terms with ``a + k <= 0`` vanish.
    """
    a = float(a)
    z = float(z)
    k = 0
    if a <= 0 and a == math.floor(a):
        k = int(1 - a)
    # first nonvanishing term, from logs to dodge overflow in Gamma / k!
    if z == 0.0:
        return _rgamma(a) if k == 0 else 0.0
    log_mag = k * math.log(abs(z)) - math.lgamma(k + 1)
    gsign = 1.0
    if a + k > 0:
        log_mag -= math.lgamma(a + k)
    else:
        lg, gsign = _lgamma_sign(a + k)
        log_mag -= lg
    term = gsign * math.copysign(1.0, z) ** k * math.exp(log_mag)
    total = term
    while True:
        ratio = z / ((a + k) * (k + 1))
        term *= ratio
        total += term
        k += 1
        # ratio < 1/2 bounds the remainder by the next term
        if abs(ratio) < 0.5 and abs(term) <= 1e-17 * max(1.0, abs(total)):
            break
        if k > 100_000:  # pragma: no cover
            raise ArithmeticError(f"0F1 series did not converge (a={a}, z={z})")
    return total


def _rgamma(a):
    if a <= 0 and a == math.floor(a):
        return 0.0
    return 1.0 / math.gamma(a)


def _lgamma_sign(x):
    lg = math.lgamma(x)
    sign = math.copysign(1.0, math.gamma(x)) if x < 171 else 1.0
    return lg, sign


def log_factorial(n):
    """``ln(n!)`` via ``lgamma``."""
    n = int(n)
    if n < 0:
        raise ValueError(f"log_factorial needs n >= 0, got {n}")
    if n < 2:
        return 0.0
    return math.lgamma(n + 1.0)
