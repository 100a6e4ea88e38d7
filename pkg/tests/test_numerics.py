import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from mplcp.numerics import (
    MAX_PARTITION_K,
    Partition,
    bell_partial,
    bell_partial_table,
    hyp0f1_regularized,
    integer_partitions,
    irwin_hall_pdf,
    log_factorial,
    partition_count,
    partition_multiplicities,
    regularized_lower_gamma,
    regularized_upper_gamma,
)


# ---------------------------------------------------------------- gamma

@pytest.mark.parametrize(
    "a, x",
    [(1, 0.5), (2, 1e-8), (3, 2.0), (6, 1.0), (10, 30.0), (0.5, 0.25), (50, 49.0), (200, 180.0)],
)
def test_lower_gamma_matches_scipy(a, x):
    assert regularized_lower_gamma(a, x) == pytest.approx(special.gammainc(a, x), rel=1e-13, abs=1e-300)
    assert regularized_upper_gamma(a, x) == pytest.approx(special.gammaincc(a, x), rel=1e-12, abs=1e-300)


def test_lower_gamma_trivial_values():
    assert regularized_lower_gamma(3, 0) == 0.0
    assert regularized_lower_gamma(3, math.inf) == 1.0
    # P(1, x) = 1 - e^-x
    assert regularized_lower_gamma(1, 0.7) == pytest.approx(-math.expm1(-0.7), rel=1e-15)


def test_lower_gamma_rejects_bad_args():
    with pytest.raises(ValueError):
        regularized_lower_gamma(0, 1.0)
    with pytest.raises(ValueError):
        regularized_lower_gamma(1, -1.0)


@given(st.floats(0.05, 80), st.floats(0, 120))
def test_gamma_complements_sum_to_one(a, x):
    assert regularized_lower_gamma(a, x) + regularized_upper_gamma(a, x) == pytest.approx(1.0, abs=1e-13)


@given(st.integers(1, 30), st.floats(0, 60), st.floats(0, 5))
def test_lower_gamma_monotone_in_x(a, x, dx):
    assert regularized_lower_gamma(a, x + dx) >= regularized_lower_gamma(a, x) - 1e-15


# ---------------------------------------------------------------- partitions

def test_partitions_of_five_in_table_order():
    got = [str(p) for p in integer_partitions(5)]
    assert got == ["{5}", "{4,1}", "{3,2}", "{3,1,1}", "{2,2,1}", "{2,1,1,1}", "{1,1,1,1,1}"]


def test_partitions_small_cases():
    assert [p.as_tuple() for p in integer_partitions(0)] == [()]
    assert [p.as_tuple() for p in integer_partitions(3)] == [(3,), (2, 1), (1, 1, 1)]
    assert len(integer_partitions(9)) == 30


@pytest.mark.parametrize("k, p", [(0, 1), (1, 1), (5, 7), (10, 42), (20, 627), (50, 204226), (100, 190569292)])
def test_partition_count_known_values(k, p):
    assert partition_count(k) == p


@pytest.mark.parametrize("k", range(0, 19))
def test_enumeration_matches_pentagonal_count(k):
    parts = integer_partitions(k)
    assert len(parts) == partition_count(k)
    assert len({p.as_tuple() for p in parts}) == len(parts)
    assert all(p.k == k for p in parts)


def test_enumeration_limit():
    with pytest.raises(ValueError):
        integer_partitions(MAX_PARTITION_K + 1)
    with pytest.raises(ValueError):
        integer_partitions(-1)


def test_multiplicity_matrix_rows_follow_enumeration():
    k = 7
    mat = partition_multiplicities(k)
    assert mat.shape == (partition_count(k), k)
    assert not mat.flags.writeable
    for row, part in zip(mat, integer_partitions(k)):
        assert [part.multiplicity(q) for q in range(1, k + 1)] == row.tolist()
    assert np.all(mat @ np.arange(1, k + 1) == k)


def test_partition_type_validation():
    p = Partition.from_parts([1, 3, 1])
    assert p.parts == ((3, 1), (1, 2))
    assert p.size == 3 and p.k == 5 and str(p) == "{3,1,1}"
    with pytest.raises(ValueError):
        Partition(((1, 1), (2, 1)))
    with pytest.raises(ValueError):
        Partition(((2, 0),))


# ---------------------------------------------------------------- Bell polynomials

def test_bell_partial_stirling_numbers():
    ones = [1.0] * 10
    # B_{n,m}(1, 1, ...) = S(n, m)
    assert bell_partial(4, 2, ones) == 7
    assert bell_partial(6, 3, ones) == 90
    assert bell_partial(10, 4, ones) == 34105


def test_bell_partial_explicit_polynomial():
    x = [0.3, -1.2, 2.5, 0.7]
    # B_{5,2} = 5 x1 x4 + 10 x2 x3
    assert bell_partial(5, 2, x) == pytest.approx(5 * x[0] * x[3] + 10 * x[1] * x[2], rel=1e-14)
    assert bell_partial(3, 3, x) == pytest.approx(x[0] ** 3, rel=1e-15)


def test_bell_table_lah_numbers():
    # x_j = j! gives the unsigned Lah numbers C(n-1, m-1) n! / m!
    n_max = 8
    B = bell_partial_table([math.factorial(j) for j in range(1, n_max + 1)], n_max)
    for n in range(1, n_max + 1):
        for m in range(1, n + 1):
            lah = math.comb(n - 1, m - 1) * math.factorial(n) // math.factorial(m)
            assert B[n, m] == lah


def test_bell_partial_argument_checks():
    with pytest.raises(ValueError):
        bell_partial(3, 0, [1, 1, 1])
    with pytest.raises(ValueError):
        bell_partial(5, 2, [1, 1])


# ---------------------------------------------------------------- Irwin-Hall

def _ih_mp(n, u):
    mp.mp.dps = 50
    u = mp.mpf(u)
    s = sum((-1) ** j * mp.binomial(n, j) * (u - j) ** (n - 1) for j in range(int(mp.floor(u)) + 1))
    return float(s / mp.factorial(n - 1))


@pytest.mark.parametrize("n, u", [(2, 0.5), (2, 1.5), (3, 1.5), (5, 2.2), (12, 6.0), (20, 3.3), (30, 15.0), (60, 27.5)])
def test_irwin_hall_against_high_precision(n, u):
    assert irwin_hall_pdf(n, u) == pytest.approx(_ih_mp(n, u), rel=1e-11)


def test_irwin_hall_methods_agree():
    for n in (3, 8, 15, 20):
        for u in np.linspace(0.1, n - 0.1, 7):
            a = irwin_hall_pdf(n, u, method="alternating")
            b = irwin_hall_pdf(n, u, method="recurrence")
            assert a == pytest.approx(b, rel=1e-10, abs=1e-300)


def test_irwin_hall_support_and_unit_case():
    assert irwin_hall_pdf(1, 0.3) == 1.0
    assert irwin_hall_pdf(4, -0.1) == 0.0
    assert irwin_hall_pdf(4, 4.0) == 0.0
    with pytest.raises(ValueError):
        irwin_hall_pdf(0, 0.5)
    with pytest.raises(ValueError):
        irwin_hall_pdf(3, 1.0, method="bogus")


@pytest.mark.parametrize("n", [2, 7, 25, 45])
def test_irwin_hall_integrates_to_one(n):
    from scipy.integrate import quad

    total = sum(quad(lambda u: irwin_hall_pdf(n, u), i, i + 1)[0] for i in range(n))
    assert total == pytest.approx(1.0, abs=1e-9)


# ---------------------------------------------------------------- 0F1, log factorial

@pytest.mark.parametrize("a, z", [(1, 1.0), (2, 4.0), (0.5, -3.0), (3.5, 12.0), (5, 100.0), (1.5, -40.0)])
def test_hyp0f1_matches_scipy(a, z):
    expect = special.hyp0f1(a, z) / special.gamma(a)
    assert hyp0f1_regularized(a, z) == pytest.approx(expect, rel=1e-12)


def test_hyp0f1_bessel_identity():
    # 0F1~(nu + 1; x^2 / 4) = (x / 2)^-nu I_nu(x)
    for nu in (0, 1, 3):
        for x in (0.5, 3.0, 9.0):
            expect = (x / 2) ** (-nu) * special.iv(nu, x)
            assert hyp0f1_regularized(nu + 1, x * x / 4) == pytest.approx(expect, rel=1e-13)


def test_hyp0f1_nonpositive_integer_parameter():
    # 0F1~(-m; z) = z^(m+1) 0F1~(m + 2; z)
    for m in (0, 1, 3):
        for z in (0.4, 2.5, -1.5):
            assert hyp0f1_regularized(-m, z) == pytest.approx(z ** (m + 1) * hyp0f1_regularized(m + 2, z), rel=1e-12)
    assert hyp0f1_regularized(0, 0.0) == 0.0
    assert hyp0f1_regularized(2, 0.0) == 1.0


def test_log_factorial():
    assert log_factorial(0) == 0.0
    assert log_factorial(10) == pytest.approx(math.log(3628800), rel=1e-15)
    with pytest.raises(ValueError):
        log_factorial(-1)
