"""Monte Carlo sampling of the Manhattan Cox process around the typical intersection.

Every run draws from its own stream derived from ``(seed, run_index)``, so the
output of :func:`simulate_knn` does not depend on how runs are spread over
worker threads.
"""

import logging
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .analytic import DistanceCdf, cdf_path_distance

log = logging.getLogger(__name__)

__all__ = [
    "SimConfig",
    "GridRealization",
    "SimResult",
    "InsufficientPointsError",
    "run_stream",
    "default_threads",
    "default_window",
    "sample_mplcp",
    "extend_realization",
    "thin_realization",
    "facility_coordinates",
    "path_distances",
    "knn_path_distances",
    "nlos_knn_path_distances",
    "count_within",
    "sample_lt",
    "sample_lt_many",
    "simulate_knn",
    "simulate_counts",
    "empirical_cdf",
]

REFERENCE_WINDOW_HALF = 10.0  # km; a 400 km^2 square
_WINDOW_TAIL = 1e-4
_CHUNK = 512
_MAX_DOUBLINGS = 12


class InsufficientPointsError(RuntimeError):
    """Fewer facilities in the window than requested neighbours."""

    def __init__(self, found, wanted):
        super().__init__(f"only {found} facilities in the window, need {wanted}; enlarge the window")
        self.found = found
        self.wanted = wanted


@dataclass(frozen=True)
class SimConfig:
    window_half: float
    runs: int
    seed: int
    k_max: int

    def __post_init__(self):
        if not self.window_half > 0:
            raise ValueError(f"window_half must be > 0, got {self.window_half}")
        if int(self.runs) < 1:
            raise ValueError(f"runs must be >= 1, got {self.runs}")
        if int(self.k_max) < 1:
            raise ValueError(f"k_max must be >= 1, got {self.k_max}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True, eq=False)
class GridRealization:
    """One sample of the process inside ``[-w, w]^2``.

    Lines are stored flat: ``v_x[i]`` is the abscissa of vertical line ``i``
    and ``v_fac_y[j]`` the ordinate of a facility on line ``v_fac_line[j]``.
    Horizontal lines mirror this. ``typical_x`` holds abscissas of facilities
    on the horizontal line through the origin, ``typical_y`` ordinates of
    those on the vertical one.
    """

    window_half: float
    v_x: np.ndarray
    v_fac_line: np.ndarray
    v_fac_y: np.ndarray
    h_y: np.ndarray
    h_fac_line: np.ndarray
    h_fac_x: np.ndarray
    typical_x: np.ndarray
    typical_y: np.ndarray

    @property
    def vlines(self):
        return [(float(x), np.sort(self.v_fac_y[self.v_fac_line == i])) for i, x in enumerate(self.v_x)]

    @property
    def hlines(self):
        return [(float(y), np.sort(self.h_fac_x[self.h_fac_line == i])) for i, y in enumerate(self.h_y)]

    @property
    def n_facilities(self):
        return self.v_fac_y.size + self.h_fac_x.size + self.typical_x.size + self.typical_y.size


@dataclass
class SimResult:
    """Per-run sorted distances (``runs x k_max``) plus window bookkeeping."""

    distances: np.ndarray
    window_half: float
    extended_runs: int = 0
    config: SimConfig = None
    meta: dict = field(default_factory=dict)


def run_stream(seed, run):
    """Independent generator for run ``run`` of a simulation seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(run),))))


def default_threads():
    """Worker threads from ``MPLCP_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("MPLCP_THREADS", "1")))
    except ValueError:
        return 1


def default_window(params, k_max, variant="full", tail=_WINDOW_TAIL):
    """Half-width ``w`` with ``P(R_{k_max} > w) < tail`` under the analytic model.

    Falls back to the 10 km half-width when the model gives no usable answer.
    """
    if params.lambda_g == 0:
        return REFERENCE_WINDOW_HALF
    w = 0.05
    for _ in range(40):
        try:
            if 1.0 - cdf_path_distance(params, w, k_max, variant) < tail:
                return w
        except (ValueError, ArithmeticError):
            return REFERENCE_WINDOW_HALF
        w *= 1.25
    return REFERENCE_WINDOW_HALF


def _on_lines(stream, n_lines, lambda_g, lo, hi):
    # facilities on n_lines parallel lines, coordinate uniform on [lo, hi]
    if n_lines == 0:
        return np.empty(0, dtype=np.int64), np.empty(0)
    counts = stream.poisson(lambda_g * (hi - lo), size=n_lines)
    line = np.repeat(np.arange(n_lines, dtype=np.int64), counts)
    return line, stream.uniform(lo, hi, size=line.size)


def sample_mplcp(params, cfg, stream):
    """Draw lines and facilities inside ``[-w, w]^2`` (``w = cfg.window_half``)."""
    w = float(cfg.window_half)
    lg = params.lambda_g
    v_x = stream.uniform(-w, w, size=stream.poisson(params.lambda_v * 2 * w))
    h_y = stream.uniform(-w, w, size=stream.poisson(params.lambda_h * 2 * w))
    v_line, v_y = _on_lines(stream, v_x.size, lg, -w, w)
    h_line, h_x = _on_lines(stream, h_y.size, lg, -w, w)
    tx = stream.uniform(-w, w, size=stream.poisson(lg * 2 * w))
    ty = stream.uniform(-w, w, size=stream.poisson(lg * 2 * w))
    return GridRealization(w, v_x, v_line, v_y, h_y, h_line, h_x, tx, ty)


def _band(stream, n, w):
    # n points uniform on [-2w, -w) U (w, 2w]
    mag = stream.uniform(w, 2 * w, size=n)
    sign = np.where(stream.random(size=n) < 0.5, -1.0, 1.0)
    return sign * mag


def extend_realization(real, params, stream):
    """Grow a realization from half-width ``w`` to ``2w`` without resampling its interior.

    New lines are drawn in the added bands and every existing line gets the
    facilities of its new stretch, so the result is an exact sample on the
    larger window.
    """
    w = real.window_half
    lg = params.lambda_g
    nv_old, nh_old = real.v_x.size, real.h_y.size
    new_v = _band(stream, stream.poisson(params.lambda_v * 2 * w), w)
    new_h = _band(stream, stream.poisson(params.lambda_h * 2 * w), w)

    def grow(old_line, old_coord, n_old, n_new):
        # extra stretch of the old lines, then full length of the new lines
        counts = stream.poisson(lg * 2 * w, size=n_old)
        l1 = np.repeat(np.arange(n_old, dtype=np.int64), counts)
        c1 = _band(stream, l1.size, w)
        l2, c2 = _on_lines(stream, n_new, lg, -2 * w, 2 * w)
        return (
            np.concatenate([old_line, l1, l2 + n_old]),
            np.concatenate([old_coord, c1, c2]),
        )

    v_line, v_y = grow(real.v_fac_line, real.v_fac_y, nv_old, new_v.size)
    h_line, h_x = grow(real.h_fac_line, real.h_fac_x, nh_old, new_h.size)
    tx = np.concatenate([real.typical_x, _band(stream, stream.poisson(lg * 2 * w), w)])
    ty = np.concatenate([real.typical_y, _band(stream, stream.poisson(lg * 2 * w), w)])
    return GridRealization(
        2 * w,
        np.concatenate([real.v_x, new_v]), v_line, v_y,
        np.concatenate([real.h_y, new_h]), h_line, h_x,
        tx, ty,
    )


def thin_realization(real, q, stream):
    """Keep each facility independently with probability ``q``."""
    keep = [stream.random(size=a.size) < q for a in (real.v_fac_y, real.h_fac_x, real.typical_x, real.typical_y)]
    return GridRealization(
        real.window_half,
        real.v_x, real.v_fac_line[keep[0]], real.v_fac_y[keep[0]],
        real.h_y, real.h_fac_line[keep[1]], real.h_fac_x[keep[1]],
        real.typical_x[keep[2]], real.typical_y[keep[3]],
    )


def facility_coordinates(real, include_typical=True):
    """All facility positions as an ``(n, 2)`` array (typical lines last)."""
    parts = [
        np.column_stack([real.v_x[real.v_fac_line], real.v_fac_y]),
        np.column_stack([real.h_fac_x, real.h_y[real.h_fac_line]]),
    ]
    if include_typical:
        parts.append(np.column_stack([real.typical_x, np.zeros_like(real.typical_x)]))
        parts.append(np.column_stack([np.zeros_like(real.typical_y), real.typical_y]))
    return np.concatenate(parts).reshape(-1, 2)


def path_distances(real, include_typical=True):
    """Unsorted grid distances ``|x| + |y|`` of every facility, same order as
    :func:`facility_coordinates`.

    Any street crosses one of the two typical lines, so walking along that
    typical line and then along the street is a shortest route.
    """
    parts = [
        np.abs(real.v_x[real.v_fac_line]) + np.abs(real.v_fac_y),
        np.abs(real.h_y[real.h_fac_line]) + np.abs(real.h_fac_x),
    ]
    if include_typical:
        parts += [np.abs(real.typical_x), np.abs(real.typical_y)]
    return np.concatenate(parts)


def knn_path_distances(real, k_max):
    """The ``k_max`` smallest path distances from the origin, ascending."""
    d = path_distances(real, include_typical=True)
    if d.size < k_max:
        raise InsufficientPointsError(d.size, k_max)
    return np.sort(d)[:k_max]


def nlos_knn_path_distances(real, k_max):
    """As :func:`knn_path_distances`, ignoring facilities on the typical lines."""
    d = path_distances(real, include_typical=False)
    if d.size < k_max:
        raise InsufficientPointsError(d.size, k_max)
    return np.sort(d)[:k_max]


def count_within(real, r, include_typical=True):
    """Number of facilities with path distance at most ``r``."""
    return int(np.count_nonzero(path_distances(real, include_typical) <= r))


def sample_lt(lam, r, stream):
    """One draw of the total street length inside ``B(r)``."""
    if not r > 0:
        raise ValueError(f"r must be > 0, got {r}")
    n = stream.poisson(4.0 * lam * r)
    return 4.0 * r + float(stream.uniform(0.0, 2.0 * r, size=n).sum())


def sample_lt_many(lam, r, size, stream):
    """``size`` independent draws of the total street length, vectorized."""
    if not r > 0:
        raise ValueError(f"r must be > 0, got {r}")
    n = stream.poisson(4.0 * lam * r, size=size)
    seg = np.repeat(np.arange(size), n)
    lengths = stream.uniform(0.0, 2.0 * r, size=seg.size)
    return 4.0 * r + np.bincount(seg, weights=lengths, minlength=size)


# ---------------------------------------------------------------------------
# parallel harness
# ---------------------------------------------------------------------------

def _run_chunk(params, cfg, variant, q, start, stop):
    k = cfg.k_max
    include_typical = variant == "full"
    reals, streams, pieces = [], [], []
    for run in range(start, stop):
        stream = run_stream(cfg.seed, run)
        real = sample_mplcp(params, cfg, stream)
        if q < 1.0:
            real = thin_realization(real, q, stream)
        reals.append(real)
        streams.append(stream)
        pieces.append(path_distances(real, include_typical))
    offsets = np.zeros(len(pieces) + 1, dtype=np.int64)
    np.cumsum([p.size for p in pieces], out=offsets[1:])
    flat = np.concatenate(pieces) if pieces else np.empty(0)
    out = kernels.knn_smallest(flat, offsets, k)
    w = cfg.window_half
    extended = 0
    # k-th distance beyond w may hide closer facilities outside the square
    for j in np.flatnonzero(~(out[:, k - 1] <= w)):
        real, stream = reals[j], streams[j]
        for _ in range(_MAX_DOUBLINGS):
            grown = extend_realization(real, params, stream)
            if q < 1.0:
                # only the newly added facilities still need thinning
                grown = _thin_new(real, grown, q, stream)
            real = grown
            d = np.sort(path_distances(real, include_typical))
            if d.size >= k and d[k - 1] <= real.window_half:
                out[j] = d[:k]
                break
        else:
            raise InsufficientPointsError(int(np.isfinite(out[j]).sum()), k)
        extended += 1
    return out, extended


def _thin_new(old, grown, q, stream):
    def split(a_old, a_new):
        n_old = a_old.size
        keep = np.ones(a_new.size, dtype=bool)
        keep[n_old:] = stream.random(size=a_new.size - n_old) < q
        return keep

    kv = split(old.v_fac_y, grown.v_fac_y)
    kh = split(old.h_fac_x, grown.h_fac_x)
    kx = split(old.typical_x, grown.typical_x)
    ky = split(old.typical_y, grown.typical_y)
    return GridRealization(
        grown.window_half,
        grown.v_x, grown.v_fac_line[kv], grown.v_fac_y[kv],
        grown.h_y, grown.h_fac_line[kh], grown.h_fac_x[kh],
        grown.typical_x[kx], grown.typical_y[ky],
    )


def simulate_knn(params, cfg, variant="full", q=1.0, threads=None, check_window=True):
    """Sorted ``k_max`` nearest path distances for ``cfg.runs`` independent runs.

    ``variant="nlos"`` drops the facilities on the two typical lines and
    ``q < 1`` keeps each facility independently with probability ``q``. Runs
    whose ``k_max``-th distance exceeds the window half-width are grown to a
    doubled window and counted in ``SimResult.extended_runs``.
    """
    if variant not in ("full", "nlos"):
        raise ValueError(f"unknown variant {variant!r}")
    if not 0 < q <= 1:
        raise ValueError(f"q must lie in (0, 1], got {q}")
    if check_window and q == 1.0:
        try:
            tail = 1.0 - cdf_path_distance(params, cfg.window_half, cfg.k_max, variant)
        except (ValueError, ArithmeticError):
            tail = 0.0
        if tail >= _WINDOW_TAIL:
            warnings.warn(
                f"window half-width {cfg.window_half} km leaves P(R_{cfg.k_max} > w) = {tail:.2e}",
                stacklevel=2,
            )
    threads = threads or default_threads()
    bounds = [(s, min(s + _CHUNK, cfg.runs)) for s in range(0, cfg.runs, _CHUNK)]
    if threads == 1 or len(bounds) == 1:
        results = [_run_chunk(params, cfg, variant, q, a, b) for a, b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda ab: _run_chunk(params, cfg, variant, q, *ab), bounds))
    distances = np.concatenate([r[0] for r in results])
    extended = sum(r[1] for r in results)
    if extended:
        log.info("%d of %d runs needed a larger window", extended, cfg.runs)
    return SimResult(distances, cfg.window_half, extended, cfg)


def _count_chunk(params, cfg, r, include_typical, start, stop):
    out = np.empty(stop - start, dtype=np.int64)
    for j, run in enumerate(range(start, stop)):
        real = sample_mplcp(params, cfg, run_stream(cfg.seed, run))
        out[j] = count_within(real, r, include_typical)
    return out


def simulate_counts(params, r, runs, seed, variant="full", threads=None):
    """Facility counts inside ``B(r)`` over independent runs (window half-width ``r``).

    Every point of ``B(r)`` lies in ``[-r, r]^2`` so no edge effect arises.
    """
    cfg = SimConfig(window_half=r, runs=runs, seed=seed, k_max=1)
    include_typical = variant == "full"
    threads = threads or default_threads()
    bounds = [(s, min(s + _CHUNK, runs)) for s in range(0, runs, _CHUNK)]
    if threads == 1:
        parts = [_count_chunk(params, cfg, r, include_typical, a, b) for a, b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda ab: _count_chunk(params, cfg, r, include_typical, *ab), bounds))
    return np.concatenate(parts)


def empirical_cdf(samples, grid, k=1, params=None, source="simulated"):
    """Fraction of ``samples`` at or below each grid radius."""
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size == 0:
        raise ValueError("empirical CDF of an empty sample")
    srt = np.sort(samples)
    grid = np.asarray(grid, dtype=np.float64)
    probs = np.searchsorted(srt, grid, side="right") / srt.size
    return DistanceCdf(k, grid, probs, source, params)
