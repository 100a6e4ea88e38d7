"""Time the numba kernels against their pure-numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel is called once untimed (numba compiles on first use), then the
best of ``--repeat`` wall-clock timings is reported. Results are also checked
for agreement between the two variants.
"""

import argparse
import time

import numpy as np
from scipy.special import gammaln

from mplcp import kernels
from mplcp.analytic import ModelParams
from mplcp.numerics import partition_count
from mplcp.roadnet import augmented_graph, realization_to_network
from mplcp.simulator import SimConfig, run_stream, sample_mplcp


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases():
    rng = np.random.default_rng(0)

    w = np.exp(-4.0) * 4.0 ** np.arange(61) / np.exp(gammaln(np.arange(61) + 1.0))
    phis = rng.random(256)
    yield "ih_mixture (60 lines, 256 offsets)", kernels.ih_mixture_numpy, kernels.ih_mixture_numba, (w, phis)

    k = 45
    logc = rng.normal(size=k)
    lf = gammaln(np.arange(k + 2) + 1.0)
    yield (f"partition_logsumexp (k={k}, {partition_count(k)} partitions)", kernels.partition_logsumexp_numpy,
           kernels.partition_logsumexp_numba, (-2.0, logc, lf, k))

    values = rng.random(200_000)
    offsets = np.sort(np.concatenate([[0, values.size], rng.integers(0, values.size, 4999)])).astype(np.int64)
    yield "knn_smallest (5000 segments, k=10)", kernels.knn_smallest_numpy, kernels.knn_smallest_numba, \
        (values, offsets, 10)

    real = sample_mplcp(ModelParams(12.0, 12.0, 2.0), SimConfig(3.0, 1, 0, 1), run_stream(1, 0))
    g, fp = realization_to_network(real)
    indptr, indices, weights = (np.ascontiguousarray(a) for a in augmented_graph(g, fp))
    yield (f"dijkstra ({indptr.size - 1} vertices)", kernels.dijkstra_numpy, kernels.dijkstra_numba,
           (indptr.astype(np.int64), indices.astype(np.int64), weights, 0))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'kernel':48s} {'numpy (s)':>10s} {'numba (s)':>10s} {'speedup':>8s}  agree")
    for name, f_np, f_nb, fargs in cases():
        t_np, a = best_of(lambda: f_np(*fargs), args.repeat)
        t_nb, b = best_of(lambda: f_nb(*fargs), args.repeat)
        agree = np.allclose(a, b, rtol=1e-10, atol=0.0)
        print(f"{name:48s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f}  {agree}")


if __name__ == "__main__":
    main()
