"""Hot inner loops, each with a numba and a pure-numpy implementation.

The public names (``ih_mixture``, ``partition_logsumexp``, ``knn_smallest``,
``dijkstra``) dispatch on
``mplcp._accel.USE_NUMBA``. Both variants are importable directly (``*_numba``
and ``*_numpy``) so tests and the benchmark can compare them.
"""

import heapq

import numpy as np

from ._accel import USE_NUMBA, njit

__all__ = [
    "ih_mixture",
    "ih_mixture_numpy",
    "ih_mixture_numba",
    "knn_smallest",
    "knn_smallest_numpy",
    "knn_smallest_numba",
    "dijkstra",
    "dijkstra_numpy",
    "dijkstra_numba",
    "partition_logsumexp",
    "partition_logsumexp_numpy",
    "partition_logsumexp_numba",
]


# ---------------------------------------------------------------------------
# Poisson mixture of Irwin-Hall densities on a unit-shifted lattice
# ---------------------------------------------------------------------------

def ih_mixture_numpy(weights, phis):
    """Evaluate ``sum_n weights[n] * IH_n(phi + i)`` for all lattice points.

    ``IH_n`` is the density of a sum of ``n`` Uniform(0, 1) variables. It is
    built with the B-spline recurrence

        IH_n(x) = (x IH_{n-1}(x) + (n - x) IH_{n-1}(x - 1)) / (n - 1),

    whose coefficients are nonnegative on the support, so there is none of the
    cancellation of the alternating-sum form. All points ``phi + i`` sharing a
    fractional part ``phi`` reuse one recurrence table.

    Parameters
    ----------
    weights : ndarray, shape (N + 1,)
        Mixture weights; ``weights[0]`` is ignored (no density for n = 0).
    phis : ndarray, shape (G,)
        Fractional offsets in ``[0, 1)``.

    Returns
    -------
    ndarray, shape (G, N)
        Entry ``[g, i]`` is the mixture density at ``phis[g] + i``.
    """
    weights = np.asarray(weights, dtype=np.float64)
    phis = np.asarray(phis, dtype=np.float64)
    n_max = weights.shape[0] - 1
    G = phis.shape[0]
    out = np.zeros((G, max(n_max, 1)))
    if n_max < 1:
        return out
    idx = np.arange(n_max + 1, dtype=np.float64)
    x = phis[:, None] + idx[None, :]
    table = np.zeros((G, n_max + 1))
    table[:, 0] = 1.0
    out += weights[1] * table[:, :n_max]
    shifted = np.empty_like(table)
    for n in range(2, n_max + 1):
        shifted[:, 0] = 0.0
        shifted[:, 1:] = table[:, :-1]
        table = (x * table + (n - x) * shifted) / (n - 1)
        # entries with i >= n sit outside the support
        table[:, n:] = 0.0
        if weights[n] != 0.0:
            out += weights[n] * table[:, :n_max]
    return out


@njit(cache=True, nogil=True)
def ih_mixture_numba(weights, phis):
    n_max = weights.shape[0] - 1
    G = phis.shape[0]
    out = np.zeros((G, max(n_max, 1)))
    if n_max < 1:
        return out
    table = np.zeros(n_max + 1)
    for g in range(G):
        phi = phis[g]
        table[:] = 0.0
        table[0] = 1.0
        w = weights[1]
        out[g, 0] += w
        for n in range(2, n_max + 1):
            inv = 1.0 / (n - 1)
            # descending i so table[i - 1] still holds the previous row
            for i in range(n - 1, -1, -1):
                xi = phi + i
                prev = table[i - 1] if i > 0 else 0.0
                table[i] = (xi * table[i] + (n - xi) * prev) * inv
            w = weights[n]
            if w != 0.0:
                for i in range(n):
                    out[g, i] += w * table[i]
    return out


# ---------------------------------------------------------------------------
# log of the sum over integer partitions of prod_q c_q^f / f!
# ---------------------------------------------------------------------------

def _zs1(k):
    # partitions of k in descending-lex order (Zoghbi & Stojmenovic, ZS1)
    x = [1] * (k + 1)
    x[1] = k
    m = h = 1
    yield x[1 : m + 1]
    while x[1] != 1:
        if x[h] == 2:
            m += 1
            x[h] = 1
            h -= 1
        else:
            r = x[h] - 1
            t = m - h + 1
            x[h] = r
            while t >= r:
                h += 1
                x[h] = r
                t -= r
            if t == 0:
                m = h
            else:
                m = h + 1
                if t > 1:
                    h += 1
                    x[h] = t
        yield x[1 : m + 1]


def partition_logsumexp_numpy(log_p0, logc, log_fact, k, batch=1 << 15):
    """``log sum_xi exp(log_p0 + sum_q (f_q logc[q-1] - log_fact[f_q]))`` over partitions of ``k``.

    Partitions are generated lazily and reduced in batches of ``batch`` rows,
    so memory stays bounded however large ``p(k)`` is.
    """
    if k == 0:
        return float(log_p0)
    logc = np.asarray(logc, dtype=np.float64)[:k]
    log_fact = np.asarray(log_fact, dtype=np.float64)
    acc = []
    rows = []
    gen = _zs1(k)
    while True:
        rows.clear()
        for part in gen:
            rows.append(part[:])
            if len(rows) == batch:
                break
        if not rows:
            break
        lens = np.fromiter((len(r) for r in rows), dtype=np.int64, count=len(rows))
        parts = np.fromiter((q for r in rows for q in r), dtype=np.int64, count=int(lens.sum()))
        row = np.repeat(np.arange(len(rows)), lens)
        mult = np.bincount(row * k + parts - 1, minlength=len(rows) * k).reshape(len(rows), k)
        # absent parts contribute nothing, even where logc is -inf
        with np.errstate(invalid="ignore"):
            weighted = np.where(mult > 0, mult * logc, 0.0)
        terms = log_p0 + weighted.sum(axis=1) - log_fact[mult].sum(axis=1)
        mx = terms.max()
        if np.isfinite(mx):
            acc.append(mx + np.log(np.exp(terms - mx).sum()))
        if len(rows) < batch:
            break
    if not acc:
        return -np.inf
    acc = np.array(acc)
    mx = acc.max()
    return float(mx + np.log(np.exp(acc - mx).sum()))


@njit(cache=True, nogil=True)
def partition_logsumexp_numba(log_p0, logc, log_fact, k):
    if k == 0:
        return log_p0
    x = np.ones(k + 1, dtype=np.int64)
    x[1] = k
    m = 1
    h = 1
    mx = -np.inf
    s = 0.0
    while True:
        # term of the partition x[1..m]: runs of equal parts give f_q
        t = log_p0
        i = 1
        while i <= m:
            q = x[i]
            j = i
            while j <= m and x[j] == q:
                j += 1
            f = j - i
            t += f * logc[q - 1] - log_fact[f]
            i = j
        # streaming max-shifted sum
        if t > mx:
            s = s * np.exp(mx - t) + 1.0
            mx = t
        elif t > -np.inf:
            s += np.exp(t - mx)
        if x[1] == 1:
            break
        if x[h] == 2:
            m += 1
            x[h] = 1
            h -= 1
        else:
            r = x[h] - 1
            rem = m - h + 1
            x[h] = r
            while rem >= r:
                h += 1
                x[h] = r
                rem -= r
            if rem == 0:
                m = h
            else:
                m = h + 1
                if rem > 1:
                    h += 1
                    x[h] = rem
    if s == 0.0:
        return -np.inf
    return mx + np.log(s)


# ---------------------------------------------------------------------------
# k smallest values per ragged segment
# ---------------------------------------------------------------------------

def knn_smallest_numpy(values, offsets, k):
    """Return the ``k`` smallest entries of each segment, ascending.

    Segment ``j`` is ``values[offsets[j]:offsets[j + 1]]``. Rows of segments
    with fewer than ``k`` entries are padded with ``inf``.
    """
    values = np.asarray(values, dtype=np.float64)
    offsets = np.asarray(offsets, dtype=np.int64)
    n_seg = offsets.shape[0] - 1
    out = np.full((n_seg, k), np.inf)
    if values.size == 0 or n_seg == 0:
        return out
    seg = np.repeat(np.arange(n_seg), np.diff(offsets))
    order = np.lexsort((values, seg))
    seg_sorted = seg[order]
    rank = np.arange(values.size) - offsets[seg_sorted]
    keep = rank < k
    out[seg_sorted[keep], rank[keep]] = values[order][keep]
    return out


@njit(cache=True, nogil=True)
def knn_smallest_numba(values, offsets, k):
    n_seg = offsets.shape[0] - 1
    out = np.full((n_seg, k), np.inf)
    for j in range(n_seg):
        lo = offsets[j]
        hi = offsets[j + 1]
        if hi > lo:
            s = np.sort(values[lo:hi])
            m = min(k, hi - lo)
            for i in range(m):
                out[j, i] = s[i]
    return out


# ---------------------------------------------------------------------------
# single-source Dijkstra on a CSR graph
# ---------------------------------------------------------------------------

def dijkstra_numpy(indptr, indices, weights, source):
    """Shortest-path distances from ``source`` (interpreted heap version)."""
    n = len(indptr) - 1
    dist = np.full(n, np.inf)
    dist[source] = 0.0
    done = np.zeros(n, dtype=bool)
    heap = [(0.0, int(source))]
    indptr = np.asarray(indptr).tolist()
    indices = np.asarray(indices).tolist()
    weights = np.asarray(weights, dtype=np.float64).tolist()
    dl = dist.tolist()
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for e in range(indptr[u], indptr[u + 1]):
            v = indices[e]
            nd = d + weights[e]
            if nd < dl[v]:
                dl[v] = nd
                heapq.heappush(heap, (nd, v))
    return np.asarray(dl)


@njit(cache=True, nogil=True)
def dijkstra_numba(indptr, indices, weights, source):
    n = indptr.shape[0] - 1
    dist = np.full(n, np.inf)
    done = np.zeros(n, dtype=np.bool_)
    dist[source] = 0.0
    heap = [(0.0, np.int64(source))]
    while len(heap) > 0:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for e in range(indptr[u], indptr[u + 1]):
            v = indices[e]
            nd = d + weights[e]
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, np.int64(v)))
    return dist


if USE_NUMBA:
    def ih_mixture(weights, phis):
        return ih_mixture_numba(
            np.ascontiguousarray(weights, dtype=np.float64),
            np.ascontiguousarray(phis, dtype=np.float64),
        )

    def knn_smallest(values, offsets, k):
        return knn_smallest_numba(
            np.ascontiguousarray(values, dtype=np.float64),
            np.ascontiguousarray(offsets, dtype=np.int64),
            int(k),
        )

    def partition_logsumexp(log_p0, logc, log_fact, k):
        return partition_logsumexp_numba(
            float(log_p0),
            np.ascontiguousarray(logc, dtype=np.float64),
            np.ascontiguousarray(log_fact, dtype=np.float64),
            int(k),
        )

    def dijkstra(indptr, indices, weights, source):
        return dijkstra_numba(
            np.ascontiguousarray(indptr, dtype=np.int64),
            np.ascontiguousarray(indices, dtype=np.int64),
            np.ascontiguousarray(weights, dtype=np.float64),
            int(source),
        )
else:
    ih_mixture = ih_mixture_numpy
    knn_smallest = knn_smallest_numpy
    dijkstra = dijkstra_numpy
    partition_logsumexp = partition_logsumexp_numpy
