"""Regenerate the bundled synthetic map fixture.

Writes ``manhattan_sample.seg`` (an exact Manhattan line process sample,
clipped to a square), ``manhattan_sample.queries`` (15 probe nodes on a 5 x 3
lattice near the centre) and ``manhattan_sample.json`` with node / edge counts
taken by a plain-text count of the written file, not by the library.

    python3 scripts/make_fixture.py [outdir]
"""

import json
import sys
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from mplcp.analytic import ModelParams
from mplcp.roadnet import DEFAULT_SNAP_TOL, save_segments, synthetic_manhattan_grid
from mplcp.simulator import run_stream

LAMBDA_V = 12.5
LAMBDA_H = 5.9
WINDOW_HALF = 1.5
BASE_SEED = 20_240_901
# keep every node pair clear of the snapping radius so snapping is a no-op
MIN_SEPARATION = 0.006


def count_text(path):
    """Count distinct endpoints, segments and components straight from the text."""
    segs = []
    for line in Path(path).read_text().splitlines():
        if line.strip() and not line.startswith("#"):
            x1, y1, x2, y2 = line.split()
            segs.append(((x1, y1), (x2, y2)))
    ids = {}
    for a, b in segs:
        ids.setdefault(a, len(ids))
        ids.setdefault(b, len(ids))
    parent = list(range(len(ids)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in segs:
        parent[find(ids[a])] = find(ids[b])
    comps = len({find(i) for i in range(len(ids))})
    return len(ids), len(segs), comps


def main(outdir):
    outdir = Path(outdir)
    params = ModelParams(LAMBDA_V, LAMBDA_H, 0.0)
    for attempt in range(10_000):
        g = synthetic_manhattan_grid(params, WINDOW_HALF, run_stream(BASE_SEED, attempt))
        sep = cKDTree(g.nodes).query(g.nodes, k=2)[0][:, 1].min()
        if sep > MIN_SEPARATION:
            break
    else:
        raise SystemExit("no realization with the required node separation")

    seg = outdir / "manhattan_sample.seg"
    save_segments(g, seg)

    # probe nodes: crossings nearest to a 5 x 3 lattice in the central 1 x 0.5 km
    tx, ty = np.meshgrid(np.linspace(-0.5, 0.5, 5), np.linspace(-0.25, 0.25, 3))
    targets = np.column_stack([tx.ravel(), ty.ravel()])
    interior = np.flatnonzero(np.abs(g.nodes).max(axis=1) < WINDOW_HALF)
    _, idx = cKDTree(g.nodes[interior]).query(targets)
    probes = interior[idx]
    with (outdir / "manhattan_sample.queries").open("w") as fh:
        fh.write("# x y (km), probe nodes of manhattan_sample.seg\n")
        for x, y in g.nodes[probes].tolist():
            fh.write(f"{x!r} {y!r}\n")

    n_nodes, n_edges, n_comp = count_text(seg)
    meta = {
        "lambda_v": LAMBDA_V,
        "lambda_h": LAMBDA_H,
        "window_half_km": WINDOW_HALF,
        "seed": BASE_SEED,
        "stream": attempt,
        "min_node_separation_km": float(sep),
        "snap_tol_km": DEFAULT_SNAP_TOL,
        "n_nodes": n_nodes,
        "n_edges": n_edges,
        "n_components": n_comp,
        "n_queries": int(len(probes)),
        "total_length_km": round(g.total_length, 9),
    }
    (outdir / "manhattan_sample.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(json.dumps(meta, indent=2))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "src/mplcp/data")
