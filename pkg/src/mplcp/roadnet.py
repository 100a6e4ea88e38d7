"""Road graphs from segment lists, facility placement and network distances.

Segment List format: one straight segment per line as ``x1 y1 x2 y2`` in
projected km; lines starting with ``#`` and blank lines are ignored. Query
files hold ``x y`` per line and are matched to the nearest graph node.
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from . import kernels
from .analytic import DistanceCdf

__all__ = [
    "RoadGraph",
    "FacilityPlacement",
    "IntensityEstimate",
    "SegmentParseError",
    "InsufficientFacilitiesError",
    "DEFAULT_SNAP_TOL",
    "load_segments",
    "parse_segments",
    "save_segments",
    "load_query_points",
    "match_query_nodes",
    "place_facilities",
    "augmented_graph",
    "k_shortest_network_distances",
    "network_knn",
    "estimate_intensities",
    "realization_to_network",
    "synthetic_manhattan_grid",
    "ks_distance",
    "segments_to_graph",
    "empirical_distance_cdf",
    "simulate_network_knn",
    "ppp_cdf_table",
]

DEFAULT_SNAP_TOL = 0.005  # km
_HEADER = "# segment list: x1 y1 x2 y2 (km)\n"
_BAND = math.radians(22.5)
_ON_LINE = 1e-9  # km; crossings this close to the probe node or the probe ends


class SegmentParseError(ValueError):
    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.lineno = lineno


class InsufficientFacilitiesError(RuntimeError):
    def __init__(self, reachable, wanted):
        super().__init__(f"only {reachable} facilities reachable from the source, need {wanted}")
        self.reachable = reachable
        self.wanted = wanted


def _csr(n, src, dst, w):
    order = np.argsort(src, kind="stable")
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    return indptr, dst[order].astype(np.int64), w[order].astype(np.float64)


@dataclass(frozen=True, eq=False)
class RoadGraph:
    """Undirected planar graph with straight, length-weighted edges.

    ``edges[e] = (a, b)`` joins ``nodes[a]`` and ``nodes[b]``; ``lengths[e]`` is
    their Euclidean distance. ``indptr / indices / weights`` is the symmetric
    CSR adjacency used by Dijkstra.
    """

    nodes: np.ndarray
    edges: np.ndarray
    lengths: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    n_components: int

    @classmethod
    def from_edges(cls, nodes, edges):
        nodes = np.asarray(nodes, dtype=np.float64).reshape(-1, 2)
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        n = nodes.shape[0]
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise ValueError("edge endpoint out of range")
        lengths = np.hypot(*(nodes[edges[:, 1]] - nodes[edges[:, 0]]).T) if edges.size else np.empty(0)
        if np.any(lengths <= 0):
            raise ValueError("zero-length edges are not allowed")
        src = np.concatenate([edges[:, 0], edges[:, 1]])
        dst = np.concatenate([edges[:, 1], edges[:, 0]])
        w = np.concatenate([lengths, lengths])
        indptr, indices, weights = _csr(n, src, dst, w)
        adj = coo_matrix((np.ones(src.size), (src, dst)), shape=(n, n))
        n_comp = connected_components(adj, directed=False)[0] if n else 0
        for a in (nodes, edges, lengths, indptr, indices, weights):
            a.setflags(write=False)
        return cls(nodes, edges, lengths, indptr, indices, weights, int(n_comp))

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    @property
    def total_length(self):
        return float(self.lengths.sum())

    def rotated(self, angle):
        """Copy rotated counter-clockwise by ``angle`` radians about the origin."""
        c, s = math.cos(angle), math.sin(angle)
        rot = np.array([[c, -s], [s, c]])
        return RoadGraph.from_edges(self.nodes @ rot.T, self.edges)


@dataclass(frozen=True, eq=False)
class FacilityPlacement:
    """Facilities on graph edges, sorted by ``(edge, offset)``.

    ``offsets`` are km from ``nodes[edges[edge, 0]]``; ``coords`` the planar
    positions.
    """

    edge: np.ndarray
    offsets: np.ndarray
    coords: np.ndarray

    @property
    def size(self):
        return self.edge.size

    def per_edge(self, n_edges):
        """List of offset arrays, one per edge."""
        bounds = np.searchsorted(self.edge, np.arange(n_edges + 1))
        return [self.offsets[bounds[e] : bounds[e + 1]] for e in range(n_edges)]

    @classmethod
    def from_offsets(cls, g, edge, offsets):
        edge = np.asarray(edge, dtype=np.int64)
        offsets = np.asarray(offsets, dtype=np.float64)
        if np.any(offsets < 0) or np.any(offsets > g.lengths[edge]):
            raise ValueError("facility offsets must lie within their edge")
        order = np.lexsort((offsets, edge))
        edge, offsets = edge[order], offsets[order]
        a = g.nodes[g.edges[edge, 0]]
        b = g.nodes[g.edges[edge, 1]]
        with np.errstate(invalid="ignore", divide="ignore"):
            t = (offsets / g.lengths[edge])[:, None]
        coords = a + t * (b - a)
        return cls(edge, offsets, coords.reshape(-1, 2))


# ---------------------------------------------------------------------------
# segment files
# ---------------------------------------------------------------------------

def parse_segments(lines, source="<segments>"):
    """Parse Segment List lines into an ``(m, 4)`` array."""
    rows = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 4:
            raise SegmentParseError(source, lineno, f"expected 4 numbers, got {len(fields)}")
        try:
            vals = [float(f) for f in fields]
        except ValueError as exc:
            raise SegmentParseError(source, lineno, str(exc)) from None
        if not all(math.isfinite(v) for v in vals):
            raise SegmentParseError(source, lineno, "non-finite coordinate")
        rows.append(vals)
    if not rows:
        raise ValueError(f"{source}: no segments found")
    return np.array(rows, dtype=np.float64)


def _snap(points, tol):
    # cluster points closer than tol (transitively); representative = first occurrence
    n = points.shape[0]
    pairs = cKDTree(points).query_pairs(tol, output_type="ndarray") if tol > 0 else np.empty((0, 2), int)
    if pairs.size:
        adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        _, labels = connected_components(adj, directed=False)
    else:
        # exact duplicates still merge when tol is 0
        _, labels = np.unique(points, axis=0, return_inverse=True)
        labels = labels.ravel()
    # renumber clusters by first appearance so node order follows the file
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    remap = np.empty(order.size, dtype=np.int64)
    remap[order] = np.arange(order.size)
    node_of = remap[labels]
    return points[np.sort(first)], node_of


def segments_to_graph(segs, snap_tol=DEFAULT_SNAP_TOL):
    """Build a :class:`RoadGraph` from an ``(m, 4)`` segment array.

    Returns ``(graph, dropped)`` where ``dropped`` counts segments that
    collapsed to a point or duplicated an earlier edge after snapping.
    """
    segs = np.asarray(segs, dtype=np.float64).reshape(-1, 4)
    pts = segs.reshape(-1, 2)
    nodes, node_of = _snap(pts, snap_tol)
    ends = node_of.reshape(-1, 2)
    keep = []
    seen = set()
    for a, b in ends.tolist():
        key = (min(a, b), max(a, b))
        if a == b or key in seen:
            continue
        seen.add(key)
        keep.append((a, b))
    g = RoadGraph.from_edges(nodes, np.array(keep, dtype=np.int64).reshape(-1, 2))
    return g, len(ends) - len(keep)


def load_segments(path, snap_tol=DEFAULT_SNAP_TOL):
    """Read a Segment List file; endpoints within ``snap_tol`` km merge into one node."""
    path = Path(path)
    with path.open() as fh:
        segs = parse_segments(fh, str(path))
    g, _ = segments_to_graph(segs, snap_tol)
    return g


def save_segments(g, path):
    """Write ``g`` as a Segment List, one edge per line in edge order."""
    a = g.nodes[g.edges[:, 0]]
    b = g.nodes[g.edges[:, 1]]
    with Path(path).open("w") as fh:
        fh.write(_HEADER)
        for (x1, y1), (x2, y2) in zip(a.tolist(), b.tolist()):
            fh.write(f"{x1!r} {y1!r} {x2!r} {y2!r}\n")


def load_query_points(path):
    """Read ``x y`` rows (km) from a query file."""
    rows = []
    with Path(path).open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 2:
                raise SegmentParseError(path, lineno, f"expected 2 numbers, got {len(fields)}")
            try:
                rows.append([float(fields[0]), float(fields[1])])
            except ValueError as exc:
                raise SegmentParseError(path, lineno, str(exc)) from None
    if not rows:
        raise ValueError(f"{path}: no query points found")
    return np.array(rows)


def match_query_nodes(g, points, snap_tol=DEFAULT_SNAP_TOL):
    """Nearest node id for every query point; each must lie within ``snap_tol``."""
    dist, idx = cKDTree(g.nodes).query(np.asarray(points, dtype=np.float64).reshape(-1, 2))
    far = np.flatnonzero(dist > snap_tol)
    if far.size:
        raise ValueError(
            f"query point {far[0]} is {dist[far[0]]:.4g} km from the nearest node (tolerance {snap_tol})"
        )
    return idx.astype(np.int64)


# ---------------------------------------------------------------------------
# facilities and shortest paths
# ---------------------------------------------------------------------------

def place_facilities(g, lambda_g, stream):
    """Independent Poisson(``lambda_g`` * length) facilities, uniform along each edge."""
    if lambda_g < 0:
        raise ValueError(f"lambda_g must be >= 0, got {lambda_g}")
    counts = stream.poisson(lambda_g * g.lengths)
    edge = np.repeat(np.arange(g.n_edges, dtype=np.int64), counts)
    offsets = stream.random(size=edge.size) * g.lengths[edge]
    return FacilityPlacement.from_offsets(g, edge, offsets)


def augmented_graph(g, fp):
    """CSR adjacency where each facility is a vertex splitting its edge.

    Facility ``j`` becomes vertex ``g.n_nodes + j``.
    """
    n = g.n_nodes
    m = g.n_edges
    nf = fp.size
    # chain points per edge: start node, facilities by offset, end node
    edge_id = np.concatenate([np.arange(m), fp.edge, np.arange(m)])
    pos = np.concatenate([np.zeros(m), fp.offsets, g.lengths])
    rank = np.concatenate([np.zeros(m), np.ones(nf), np.full(m, 2.0)])
    vert = np.concatenate([g.edges[:, 0], n + np.arange(nf), g.edges[:, 1]])
    order = np.lexsort((rank, pos, edge_id))
    edge_id, pos, vert = edge_id[order], pos[order], vert[order]
    same = edge_id[1:] == edge_id[:-1]
    a, b = vert[:-1][same], vert[1:][same]
    w = (pos[1:] - pos[:-1])[same]
    indptr, indices, weights = _csr(
        n + nf, np.concatenate([a, b]), np.concatenate([b, a]), np.concatenate([w, w])
    )
    return indptr, indices, weights


def _facility_distances(n_nodes, csr, source):
    dist = kernels.dijkstra(*csr, source)
    return dist[n_nodes:]


def k_shortest_network_distances(g, source, fp, k_max):
    """The ``k_max`` smallest shortest-path distances from node ``source`` to facilities."""
    source = int(source)
    if not 0 <= source < g.n_nodes:
        raise ValueError(f"source node {source} does not exist")
    d = _facility_distances(g.n_nodes, augmented_graph(g, fp), source)
    d = np.sort(d[np.isfinite(d)])
    if d.size < k_max:
        raise InsufficientFacilitiesError(d.size, k_max)
    return d[:k_max]


def network_knn(g, sources, fp, k_max):
    """``k_max`` nearest facility distances for several sources, ``inf`` where unreachable."""
    csr = augmented_graph(g, fp)
    out = np.full((len(sources), k_max), np.inf)
    for i, s in enumerate(sources):
        d = np.sort(_facility_distances(g.n_nodes, csr, int(s)))[:k_max]
        out[i, : d.size] = d
    return out


# ---------------------------------------------------------------------------
# street intensities
# ---------------------------------------------------------------------------

class IntensityEstimate(NamedTuple):
    lambda_h: float
    lambda_v: float
    lam: float
    n_horizontal: int
    n_vertical: int
    n_diagonal: int


def _classify(g):
    d = g.nodes[g.edges[:, 1]] - g.nodes[g.edges[:, 0]]
    ang = np.mod(np.arctan2(d[:, 1], d[:, 0]), np.pi)
    horiz = (ang <= _BAND) | (ang >= np.pi - _BAND)
    vert = np.abs(ang - np.pi / 2) <= _BAND
    return horiz, vert


def _crossings(g, mask, level, axis):
    # coordinates along the probe line (axis 0: line y = level) where masked edges cross it
    a = g.nodes[g.edges[mask, 0]]
    b = g.nodes[g.edges[mask, 1]]
    other = 1 - axis
    lo = np.minimum(a[:, other], b[:, other])
    hi = np.maximum(a[:, other], b[:, other])
    hit = (lo <= level) & (level <= hi) & (hi > lo)
    a, b = a[hit], b[hit]
    t = (level - a[:, other]) / (b[:, other] - a[:, other])
    return a[:, axis] + t * (b[:, axis] - a[:, axis])


def _palm_counts(xs, centre, radius, lo, hi):
    # streets crossing the probe segment, other than the probe node's own street
    xs = xs[np.abs(xs - centre) <= radius + _ON_LINE]
    # a street meeting the probe line at a node shows up once per incident edge
    xs = np.unique(np.round(xs, 9))
    n = int(np.count_nonzero(np.abs(xs - centre) > _ON_LINE))
    length = max(0.0, min(centre + radius, hi) - max(centre - radius, lo))
    return n, length


def estimate_intensities(g, probe, radius=math.inf):
    """Street intensities near the probe nodes.

    Edges within 22.5 degrees of an axis are horizontal or vertical; the rest
    count as diagonal and are reported but ignored. Through each probe node a
    horizontal probe line of half-length ``radius`` collects the crossings of
    vertical streets (and a vertical probe line those of horizontal streets),
    leaving out the probe node's own street. The intensity is the pooled
    crossing count over the pooled probe length, with each probe line clipped
    to the bounding box of the map. Seen from a node, the other streets of a
    Poisson line process are again Poisson, so the estimate is unbiased; on a
    regular grid it is exact when the radius is a multiple of the spacing.
    The default infinite radius probes whole lines across the map.
    """
    probe = np.atleast_1d(np.asarray(probe, dtype=np.int64))
    if probe.size == 0:
        raise ValueError("need at least one probe node")
    if not radius > 0:
        raise ValueError(f"radius must be > 0, got {radius}")
    horiz, vert = _classify(g)
    n_h, n_v = int(horiz.sum()), int(vert.sum())
    n_diag = g.n_edges - int((horiz | vert).sum())
    if n_h + n_v == 0:
        raise ValueError("no horizontal or vertical edges to estimate intensities from")
    (xmin, ymin), (xmax, ymax) = g.nodes.min(axis=0), g.nodes.max(axis=0)
    count_v = len_v = count_h = len_h = 0.0
    for p in probe:
        px, py = g.nodes[p]
        c, l = _palm_counts(_crossings(g, vert, py, 0), px, radius, xmin, xmax)
        count_v += c
        len_v += l
        c, l = _palm_counts(_crossings(g, horiz, px, 1), py, radius, ymin, ymax)
        count_h += c
        len_h += l
    lam_v = count_v / len_v if len_v > 0 else 0.0
    lam_h = count_h / len_h if len_h > 0 else 0.0
    lam = 2.0 * lam_v * lam_h / (lam_v + lam_h) if lam_v + lam_h > 0 else 0.0
    return IntensityEstimate(float(lam_h), float(lam_v), float(lam), n_h, n_v, n_diag)


# ---------------------------------------------------------------------------
# synthetic Manhattan grids
# ---------------------------------------------------------------------------

def realization_to_network(real):
    """Turn a simulator realization into a road graph plus its facility placement.

    Streets are the sampled lines plus the two typical lines, clipped to the
    window; nodes are all crossings and the window-boundary endpoints. Node 0
    is the origin.
    """
    w = real.window_half
    # index 0 is the typical line, then the sampled lines in storage order
    X = np.concatenate([[0.0], real.v_x])
    Y = np.concatenate([[0.0], real.h_y])
    xs_sorted = np.sort(X)
    ys_sorted = np.sort(Y)
    nX, nY = X.size, Y.size
    # crossing node i * nY + j is where street X[i] meets street Y[j]
    cx, cy = np.meshgrid(X, Y, indexing="ij")
    crossings = np.column_stack([cx.ravel(), cy.ravel()])
    vend = np.column_stack([np.repeat(X, 2), np.tile([-w, w], nX)])
    hend = np.column_stack([np.tile([-w, w], nY), np.repeat(Y, 2)])
    nodes = np.concatenate([crossings, vend, hend])
    base_v = nX * nY
    base_h = base_v + 2 * nX

    col_of_y = np.argsort(Y)  # rank -> street index
    row_of_x = np.argsort(X)

    # vertical streets: nodes bottom end, crossings by increasing y, top end
    vchain = np.empty((nX, nY + 2), dtype=np.int64)
    vchain[:, 0] = base_v + 2 * np.arange(nX)
    vchain[:, 1:-1] = np.arange(nX)[:, None] * nY + col_of_y[None, :]
    vchain[:, -1] = base_v + 2 * np.arange(nX) + 1
    hchain = np.empty((nY, nX + 2), dtype=np.int64)
    hchain[:, 0] = base_h + 2 * np.arange(nY)
    hchain[:, 1:-1] = row_of_x[None, :] * nY + np.arange(nY)[:, None]
    hchain[:, -1] = base_h + 2 * np.arange(nY) + 1
    v_edges = np.stack([vchain[:, :-1], vchain[:, 1:]], axis=-1).reshape(-1, 2)
    h_edges = np.stack([hchain[:, :-1], hchain[:, 1:]], axis=-1).reshape(-1, 2)
    g = RoadGraph.from_edges(nodes, np.concatenate([v_edges, h_edges]))

    # facility -> edge: edge index in v_edges of street i, segment s is i*(nY+1)+s
    ybreaks = np.concatenate([[-w], ys_sorted])
    xbreaks = np.concatenate([[-w], xs_sorted])
    edges, offsets = [], []

    def on_vertical(street, coord):
        seg = np.searchsorted(ybreaks, coord, side="right") - 1
        edges.append(street * (nY + 1) + seg)
        offsets.append(coord - ybreaks[seg])

    def on_horizontal(street, coord):
        seg = np.searchsorted(xbreaks, coord, side="right") - 1
        edges.append(v_edges.shape[0] + street * (nX + 1) + seg)
        offsets.append(coord - xbreaks[seg])

    # street index 0 is the typical line in both directions
    on_vertical(np.zeros(real.typical_y.size, dtype=np.int64), real.typical_y)
    on_horizontal(np.zeros(real.typical_x.size, dtype=np.int64), real.typical_x)
    on_vertical(1 + real.v_fac_line, real.v_fac_y)
    on_horizontal(1 + real.h_fac_line, real.h_fac_x)
    fp = FacilityPlacement.from_offsets(g, np.concatenate(edges), np.concatenate(offsets))
    return g, fp


def synthetic_manhattan_grid(params, window_half, stream, return_realization=False):
    """Sample a Manhattan line process in ``[-w, w]^2`` and materialize it as a graph.

    The two lines through the origin are always present and node 0 is the
    origin. With ``return_realization`` the simulator realization (including
    facilities drawn at ``params.lambda_g``) is returned too.
    """
    from .simulator import SimConfig, sample_mplcp

    cfg = SimConfig(window_half=window_half, runs=1, seed=0, k_max=1)
    real = sample_mplcp(params, cfg, stream)
    g, _ = realization_to_network(real)
    return (g, real) if return_realization else g


def ks_distance(a, b):
    """Sup-norm difference of two CDF tables on the same radius grid."""
    if a.radii.shape != b.radii.shape or not np.array_equal(a.radii, b.radii):
        raise ValueError("CDF tables are tabulated on different radius grids")
    return float(np.max(np.abs(a.probs - b.probs)))


def empirical_distance_cdf(samples, radii, k):
    """Empirical CDF with unreachable (``inf``) samples counted as beyond every radius."""
    samples = np.asarray(samples, dtype=np.float64)
    srt = np.sort(samples)
    probs = np.searchsorted(srt, radii, side="right") / srt.size
    return DistanceCdf(k, radii, probs, "empirical")


def _network_chunk(g, sources, lambda_g, seed, k_max, start, stop):
    from .simulator import run_stream

    out = np.empty((stop - start, len(sources), k_max))
    for i, run in enumerate(range(start, stop)):
        fp = place_facilities(g, lambda_g, run_stream(seed, run))
        out[i] = network_knn(g, sources, fp, k_max)
    return out


def simulate_network_knn(g, sources, lambda_g, runs, seed, k_max, threads=None):
    """Facility realizations on a fixed map; ``k_max`` nearest network distances per source.

    Returns an array of shape ``(runs, len(sources), k_max)`` with ``inf``
    where fewer than ``k`` facilities were reachable. Run ``i`` uses the
    stream ``(seed, i)``, so the result does not depend on ``threads``.
    """
    from concurrent.futures import ThreadPoolExecutor

    from .simulator import _CHUNK, default_threads

    if int(runs) < 1:
        raise ValueError(f"runs must be >= 1, got {runs}")
    sources = [int(s) for s in sources]
    threads = default_threads() if threads is None else max(1, int(threads))
    bounds = [(s, min(s + _CHUNK, runs)) for s in range(0, runs, _CHUNK)]
    job = lambda b: _network_chunk(g, sources, lambda_g, seed, k_max, *b)  # noqa: E731
    if threads == 1 or len(bounds) == 1:
        parts = [job(b) for b in bounds]
    else:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(job, bounds))
    return np.concatenate(parts)


def ppp_cdf_table(mu, radii, k_max):
    """Euclidean k-th neighbour CDFs of a planar PPP of intensity ``mu`` (km^-2)."""
    from .analytic import ppp_knn

    radii = np.asarray(radii, dtype=np.float64)
    return [
        DistanceCdf(k, radii, np.array([ppp_knn(mu, k, float(r))[1] for r in radii]), "analytic")
        for k in range(1, int(k_max) + 1)
    ]
