import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mplcp.analytic import ModelParams, cdf_path_distance, nlos_pk, pk_series_table
from mplcp.applications import (
    InfeasibleTargetError,
    RadioScenario,
    TravelScenario,
    db_to_linear,
    linear_to_db,
    min_facility_intensity,
    nlos_load_distribution,
    nlos_load_pmf,
    simulate_travel_times,
    snr_cdf,
    snr_cdf_curve,
    snr_radius_km,
    travel_time_cdf,
    travel_time_curve,
)


def test_db_round_trip():
    assert db_to_linear(-20) == pytest.approx(0.01)
    assert db_to_linear(0) == 1.0
    np.testing.assert_allclose(linear_to_db(db_to_linear(np.array([-6.0, 3.0]))), [-6.0, 3.0])


@pytest.mark.parametrize("kw", [dict(q=0.0), dict(q=1.5), dict(v=0.0), dict(truncation=0)])
def test_travel_scenario_validation(kw):
    base = dict(params=ModelParams.equal(5, 1), q=0.5, v=10.0)
    base.update(kw)
    with pytest.raises(ValueError):
        TravelScenario(**base)


def test_travel_time_rejects_negative_tau():
    s = TravelScenario(ModelParams.equal(5, 1), 0.5, 10.0)
    with pytest.raises(ValueError):
        travel_time_cdf(s, -1.0)


@pytest.mark.parametrize("q", [1.0, 0.5, 0.2])
def test_travel_time_is_first_distance_under_thinning(q):
    # a geometric mixture of k-th nearest CDFs is the nearest CDF at lambda_g * q
    p = ModelParams(6.0, 3.0, 2.0)
    v = 12.0
    s = TravelScenario(p, q, v, truncation=60)
    for tau in (10.0, 30.0, 80.0):
        r = v * tau / 1000
        got = travel_time_cdf(s, tau)
        thinned = cdf_path_distance(p.with_lambda_g(q * p.lambda_g), r, 1)
        assert got.tail_bound == pytest.approx((1 - q) ** 60)
        assert got.value == pytest.approx(thinned, abs=got.tail_bound + 1e-10)


def test_travel_time_bound_brackets_mixture():
    p = ModelParams.equal(5.0, 1.0)
    lo = travel_time_cdf(TravelScenario(p, 0.3, 10.0, truncation=5), 60)
    hi = travel_time_cdf(TravelScenario(p, 0.3, 10.0, truncation=80), 60)
    assert lo.value <= hi.value <= lo.value + lo.tail_bound + 1e-12


def test_travel_time_curve_monotone():
    s = TravelScenario(ModelParams.equal(5.0, 1.0), 0.5, 10.0)
    vals, bound = travel_time_curve(s, np.linspace(0, 300, 31))
    assert vals[0] == 0.0
    assert np.all(np.diff(vals) >= -1e-14)
    assert 0 < bound < 1e-5


def test_travel_time_simulation_agrees():
    p = ModelParams(5.0, 5.0, 1.0)
    q, v = 0.4, 10.0
    times = simulate_travel_times(p, q, v, runs=3000, seed=2)
    s = TravelScenario(p, q, v, truncation=40)
    taus = np.linspace(0, 200, 41)
    vals, _ = travel_time_curve(s, taus)
    emp = np.searchsorted(np.sort(times), taus, side="right") / times.size
    assert np.max(np.abs(emp - vals)) < 1.95 / math.sqrt(times.size)


@settings(max_examples=15)
@given(st.floats(0.05, 0.95), st.floats(0.1, 3.0))
def test_coverage_increases_with_lambda_g(q, lg):
    p = ModelParams(5.0, 5.0, lg)
    a = travel_time_cdf(TravelScenario(p, q, 10.0), 60).value
    b = travel_time_cdf(TravelScenario(p.with_lambda_g(lg * 1.5), q, 10.0), 60).value
    assert b >= a - 1e-12


def test_min_facility_intensity_hits_target():
    lg = min_facility_intensity(5, 5, 0.5, 10.0, 60.0, 0.9, tol=1e-6)
    cov = lambda x: travel_time_cdf(TravelScenario(ModelParams(5, 5, x), 0.5, 10.0), 60.0).value
    assert cov(lg) >= 0.9
    assert cov(lg - 1e-5) < 0.9
    # more time or more available facilities need fewer facilities
    assert min_facility_intensity(5, 5, 0.5, 10.0, 120.0, 0.9) < lg
    assert min_facility_intensity(5, 5, 0.9, 10.0, 60.0, 0.9) < lg


def test_min_facility_intensity_edges():
    with pytest.raises(ValueError):
        min_facility_intensity(5, 5, 0.5, 10.0, 60.0, 1.0)
    with pytest.raises(InfeasibleTargetError):
        min_facility_intensity(5, 5, 0.5, 10.0, 60.0, 0.999, upper=0.5)


# ---------------------------------------------------------------- radio


def _radio(**kw):
    base = dict(params=ModelParams.equal(5.0, 10.0), eta=3.0, diffraction_loss_db=20.0, n0=1e-8)
    base.update(kw)
    return RadioScenario(**base)


def test_snr_radius_is_in_metres_then_km():
    rs = _radio()
    # (theta N0 / L)^(-1/eta) metres
    assert snr_radius_km(rs, 1.0) == pytest.approx((1e-8 / 0.01) ** (-1 / 3) / 1000)
    assert snr_radius_km(rs, 1.0) == pytest.approx(0.1, rel=1e-12)
    with pytest.raises(ValueError):
        snr_radius_km(rs, 0.0)


@pytest.mark.parametrize("kw", [dict(eta=0.0), dict(n0=0.0)])
def test_radio_validation(kw):
    with pytest.raises(ValueError):
        _radio(**kw)


def test_snr_cdf_is_nlos_count_tail():
    rs = _radio(theta=-3.0, theta_in_db=True)
    r = snr_radius_km(rs, db_to_linear(-3.0))
    for k in (1, 2, 5):
        expect = sum(nlos_pk(rs.params, r, j) for j in range(k))
        assert snr_cdf(rs, k) == pytest.approx(expect, rel=1e-12)
    with pytest.raises(ValueError):
        snr_cdf(rs, 0)


def test_snr_cdf_curve_shape_and_order():
    rs = _radio()
    th = np.linspace(-20, 10, 16)
    F = snr_cdf_curve(rs, th, 4)
    assert F.shape == (16, 4)
    assert np.all(np.diff(F, axis=0) >= -1e-14)  # higher threshold, more outage
    assert np.all(np.diff(F, axis=1) >= -1e-14)  # farther vehicle, weaker signal
    assert F[3, 1] == pytest.approx(snr_cdf(_radio(theta=th[3], theta_in_db=True), 2), rel=1e-10)


def test_load_pmf_sums_to_one_and_matches_series():
    rs = _radio()
    edge = db_to_linear(-6.0)
    pmf, r = nlos_load_distribution(rs, edge, tol=1e-10)
    assert pmf.sum() == pytest.approx(1.0, abs=1e-8)
    ref = pk_series_table(rs.params, [r], pmf.size - 1, "nlos")[0]
    np.testing.assert_allclose(pmf, ref, rtol=1e-10, atol=1e-300)
    assert nlos_load_pmf(rs, edge, 3) == pytest.approx(pmf[3], rel=1e-12)
    with pytest.raises(ValueError):
        nlos_load_pmf(rs, 0.0, 1)
