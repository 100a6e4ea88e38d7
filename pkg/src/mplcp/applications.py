"""Travel time, facility dimensioning and V2X SNR / load distributions.

The analytic layer works in km and km^-1. Conversions from m/s, seconds and
dB happen here and nowhere else. Pathloss distances are in metres: the
received SNR of a non-line-of-sight vehicle at path distance ``d`` metres is
``L * d^-eta / N0`` with ``L`` the linear diffraction gain.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .analytic import ModelParams, count_truncation, nlos_pk, pk_table

__all__ = [
    "TravelScenario",
    "RadioScenario",
    "BoundedProbability",
    "InfeasibleTargetError",
    "db_to_linear",
    "linear_to_db",
    "travel_time_cdf",
    "travel_time_curve",
    "min_facility_intensity",
    "snr_radius_km",
    "snr_cdf",
    "snr_cdf_curve",
    "nlos_load_pmf",
    "nlos_load_distribution",
    "simulate_travel_times",
]

DEFAULT_TRUNCATION = 20


class InfeasibleTargetError(ValueError):
    """The coverage target is not met even at the upper intensity bracket."""


class BoundedProbability(NamedTuple):
    """A probability together with a bound on the mass the truncation dropped."""

    value: float
    tail_bound: float


def db_to_linear(db):
    out = 10.0 ** (np.asarray(db, dtype=np.float64) / 10.0)
    return float(out) if out.ndim == 0 else out


def linear_to_db(x):
    return 10.0 * np.log10(x)


@dataclass(frozen=True)
class TravelScenario:
    params: ModelParams
    q: float
    v: float  # m/s
    truncation: int = DEFAULT_TRUNCATION

    def __post_init__(self):
        if not 0 < self.q <= 1:
            raise ValueError(f"availability q must lie in (0, 1], got {self.q}")
        if not self.v > 0:
            raise ValueError(f"speed v must be > 0, got {self.v}")
        if int(self.truncation) < 1:
            raise ValueError(f"truncation must be >= 1, got {self.truncation}")


@dataclass(frozen=True)
class RadioScenario:
    """Broadcast from a roadside unit at the typical intersection.

    ``theta`` is the SNR threshold, in dB when ``theta_in_db`` is set.
    ``diffraction_loss_db`` is a positive loss (20 means a linear gain of 0.01).
    """

    params: ModelParams
    eta: float
    diffraction_loss_db: float
    n0: float
    theta: float = 1.0
    theta_in_db: bool = False

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"pathloss exponent must be > 0, got {self.eta}")
        if not self.n0 > 0:
            raise ValueError(f"noise power must be > 0, got {self.n0}")

    @property
    def gain(self):
        return db_to_linear(-self.diffraction_loss_db)

    @property
    def theta_linear(self):
        return db_to_linear(self.theta) if self.theta_in_db else float(self.theta)


# ---------------------------------------------------------------------------
# travel time
# ---------------------------------------------------------------------------

def _travel_mix(s, radii_km):
    T = int(s.truncation)
    rows = pk_table(s.params, radii_km, T - 1)
    # F_{R_i} = 1 - sum_{j<i} P_j
    F = np.clip(1.0 - np.cumsum(rows, axis=1), 0.0, 1.0)  # column i-1 -> F_{R_i}
    i = np.arange(1, T + 1)
    wts = s.q * (1.0 - s.q) ** (i - 1)
    return F @ wts


def travel_time_curve(s, taus):
    """Vectorized :func:`travel_time_cdf` over an array of times (seconds)."""
    taus = np.asarray(taus, dtype=np.float64)
    if np.any(taus < 0):
        raise ValueError("travel times must be >= 0")
    radii = s.v * taus / 1000.0
    return _travel_mix(s, radii), (1.0 - s.q) ** int(s.truncation)


def travel_time_cdf(s, tau):
    """Probability of reaching the nearest available facility within ``tau`` seconds.

    A geometric mixture of the k-th nearest CDFs, truncated after
    ``s.truncation`` terms; ``tail_bound = (1 - q)^truncation`` bounds the
    dropped mass.
    """
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    vals, bound = travel_time_curve(s, [tau])
    return BoundedProbability(float(vals[0]), float(bound))


def min_facility_intensity(
    lambda_v,
    lambda_h,
    q,
    v,
    tau_target,
    prob_target,
    truncation=DEFAULT_TRUNCATION,
    upper=1e3,
    tol=1e-4,
):
    """Smallest facility intensity (km^-1) meeting a travel-time coverage target.

    Bisection on ``lambda_g`` over ``[0, upper]`` for
    ``travel_time_cdf(tau_target) >= prob_target``. The coverage probability
    must be monotone in ``lambda_g``; every probe is checked against the
    bracket and a violation raises ``ArithmeticError``.
    """
    if not 0 < prob_target < 1:
        raise ValueError(f"prob_target must lie in (0, 1), got {prob_target}")

    def coverage(lg):
        s = TravelScenario(ModelParams(lambda_v, lambda_h, lg), q, v, truncation)
        return travel_time_cdf(s, tau_target).value

    lo, hi = 0.0, float(upper)
    f_lo, f_hi = coverage(lo), coverage(hi)
    if f_hi < prob_target:
        raise InfeasibleTargetError(
            f"coverage {f_hi:.4f} at lambda_g={upper} stays below target {prob_target}"
        )
    if f_lo >= prob_target:
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        f_mid = coverage(mid)
        if not f_lo - 1e-12 <= f_mid <= f_hi + 1e-12:
            raise ArithmeticError(
                f"coverage not monotone in lambda_g near {mid}: {f_lo}, {f_mid}, {f_hi}"
            )
        if f_mid >= prob_target:
            hi, f_hi = mid, f_mid
        else:
            lo, f_lo = mid, f_mid
    return hi


def simulate_travel_times(params, q, v, runs, seed, window_half=None, threads=None):
    """Travel times (s) to the nearest available facility over simulated runs."""
    from .simulator import SimConfig, default_window, simulate_knn

    if window_half is None:
        window_half = default_window(params.with_lambda_g(q * params.lambda_g), 1)
    cfg = SimConfig(window_half=window_half, runs=runs, seed=seed, k_max=1)
    res = simulate_knn(params, cfg, q=q, threads=threads, check_window=False)
    return res.distances[:, 0] * 1000.0 / v


# ---------------------------------------------------------------------------
# SNR and cell load
# ---------------------------------------------------------------------------

def snr_radius_km(rs, theta_linear):
    """Path distance (km) at which the NLoS SNR equals ``theta_linear``."""
    if not theta_linear > 0:
        raise ValueError(f"SNR threshold must be > 0, got {theta_linear}")
    metres = (theta_linear * rs.n0 / rs.gain) ** (-1.0 / rs.eta)
    return metres / 1000.0


def snr_cdf(rs, k):
    """``P(SNR_k <= theta)`` for the ``k``-th nearest NLoS vehicle."""
    k = int(k)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    theta = rs.theta_linear
    if not theta > 0:
        raise ValueError(f"SNR threshold must be > 0, got {theta}")
    r = snr_radius_km(rs, theta)
    if math.isinf(r):
        return 0.0
    if r == 0:
        return 1.0
    rows = pk_table(rs.params, [r], k - 1, "nlos")
    return float(min(1.0, rows[0].sum()))


def snr_cdf_curve(rs, thetas_db, k_max):
    """SNR CDFs for ``k = 1..k_max``; shape ``(len(thetas_db), k_max)``."""
    thetas = db_to_linear(np.asarray(thetas_db, dtype=np.float64))
    radii = np.array([snr_radius_km(rs, t) for t in np.atleast_1d(thetas)])
    rows = pk_table(rs.params, radii, k_max - 1, "nlos")
    return np.clip(np.cumsum(rows, axis=1), 0.0, 1.0)


def _cell_radius(rs, edge_snr):
    if not edge_snr > 0:
        raise ValueError(f"edge SNR must be > 0 (linear), got {edge_snr}")
    return snr_radius_km(rs, edge_snr)


def nlos_load_pmf(rs, edge_snr, n):
    """Probability of exactly ``n`` NLoS vehicles in the cell whose edge SNR is ``edge_snr`` (linear)."""
    return nlos_pk(rs.params, _cell_radius(rs, edge_snr), n)


def nlos_load_distribution(rs, edge_snr, tol=1e-10):
    """PMF of the NLoS cell load up to a Chernoff-bounded truncation.

    Returns ``(pmf, radius_km)``; the omitted tail mass is below ``tol``.
    """
    r = _cell_radius(rs, edge_snr)
    K = count_truncation(rs.params, r, tol=tol, variant="nlos")
    return pk_table(rs.params, [r], K, "nlos")[0], r
