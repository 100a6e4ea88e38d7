"""Command-line interface: every computation as a subcommand emitting CSV.

Units on the command line: intensities km^-1, radii km, speeds m/s, times s,
SNR and losses dB. Every run that writes ``--out FILE`` also writes
``FILE.manifest.json``; ``mplcp rerun FILE.manifest.json`` replays it.
"""

import argparse
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import analytic, applications, roadnet, simulator
from .analytic import ModelParams

log = logging.getLogger("mplcp")

MANIFEST_SUFFIX = ".manifest.json"


class UsageError(Exception):
    """Invalid parameters; reported with exit status 2."""


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".12g")


class CsvTable:
    def __init__(self, header):
        self.header = list(header)
        self.rows = []

    def add(self, *values):
        self.rows.append(values)

    def render(self):
        lines = [",".join(self.header)]
        lines += [",".join(_fmt(v) for v in row) for row in self.rows]
        return "\n".join(lines) + "\n"


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------

def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _add_model(p, lambda_g=True, default_lambda=None, default_lambda_g=None):
    p.add_argument("--lambda", dest="lam", type=float, default=default_lambda,
                   help="street intensity for both directions (km^-1)")
    p.add_argument("--lambda-v", type=float, help="vertical street intensity (km^-1)")
    p.add_argument("--lambda-h", type=float, help="horizontal street intensity (km^-1)")
    if lambda_g:
        p.add_argument("--lambda-g", type=float, default=default_lambda_g,
                       help="facility intensity along streets (km^-1)")


def _model(args, lambda_g=None):
    lv = args.lambda_v if args.lambda_v is not None else args.lam
    lh = args.lambda_h if args.lambda_h is not None else args.lam
    if lv is None or lh is None:
        raise UsageError("give --lambda or both --lambda-v and --lambda-h")
    lg = getattr(args, "lambda_g", None) if lambda_g is None else lambda_g
    if lg is None:
        raise UsageError("--lambda-g is required")
    try:
        return ModelParams(lv, lh, lg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _add_grid(p, name, lo, hi, steps, unit):
    p.add_argument(f"--{name}-min", type=float, default=lo, help=f"grid start ({unit})")
    p.add_argument(f"--{name}-max", type=float, default=hi, help=f"grid end ({unit})")
    p.add_argument(f"--{name}-steps", type=_positive_int, default=steps, help="number of grid points")


def _grid(args, name):
    lo = getattr(args, f"{name}_min")
    hi = getattr(args, f"{name}_max")
    n = getattr(args, f"{name}_steps")
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo or (n > 1 and hi == lo):
        raise UsageError(f"invalid {name} grid [{lo}, {hi}] with {n} points")
    return np.linspace(lo, hi, n)


def _add_out(p):
    p.add_argument("--out", help="write CSV here (plus a manifest sidecar) instead of stdout")


def _add_threads(p):
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="worker threads (default: $MPLCP_THREADS or 1); never changes results")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_cdf(args, inputs):
    params = _model(args)
    radii = _grid(args, "r")
    if np.any(radii < 0):
        raise UsageError("radii must be >= 0")
    K = args.k
    if args.method == "partition":
        rows = analytic.pk_table(params, radii, K - 1, args.variant)
    else:
        if args.variant != "full":
            raise UsageError(f"--method {args.method} supports only --variant full")
        fn = analytic.pk_faa_di_bruno if args.method == "faa" else analytic.pk_via_lt_quadrature
        rows = np.zeros((radii.size, K))
        rows[:, 0] = 1.0  # r = 0: no facility is strictly inside
        try:
            for i in np.flatnonzero(radii > 0):
                rows[i] = [fn(params, float(radii[i]), j) for j in range(K)]
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    F = np.clip(1.0 - np.cumsum(rows, axis=1), 0.0, 1.0)
    t = CsvTable(["r", "k", "F"])
    for k in range(1, K + 1):
        for i, r in enumerate(radii):
            t.add(r, k, F[i, k - 1])
    return t


def cmd_simulate(args, inputs):
    params = _model(args)
    radii = _grid(args, "r")
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    window = args.window if args.window is not None else simulator.default_window(params, args.k, args.variant)
    try:
        cfg = simulator.SimConfig(window_half=window, runs=args.runs, seed=args.seed, k_max=args.k)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    res = simulator.simulate_knn(params, cfg, variant=args.variant, threads=args.threads)
    tab = analytic.cdf_table(params, radii, args.k, args.variant)
    t = CsvTable(["r", "k", "empirical", "analytic", "ks"])
    for k in range(1, args.k + 1):
        emp = simulator.empirical_cdf(res.distances[:, k - 1], radii, k)
        ks = roadnet.ks_distance(emp, tab[k - 1])
        for i, r in enumerate(radii):
            t.add(r, k, emp.probs[i], tab[k - 1].probs[i], ks)
    return t


def cmd_lt(args, inputs):
    if not args.lam >= 0 or not args.r > 0:
        raise UsageError("need --lambda >= 0 and --r > 0")
    if args.l_min is None:
        args.l_min = 4.0 * args.r
    if args.l_max is None:
        args.l_max = 12.0 * args.r
    ls = _grid(args, "l")
    if np.any(ls < 0):
        raise UsageError("lengths must be >= 0")
    t = CsvTable(["l", "density", "density_0f1", "atom"])
    atom = math.exp(-4.0 * args.lam * args.r)
    for l in ls:
        _, dens = analytic.lt_pdf(args.lam, args.r, float(l), cross_check=False)
        alt = analytic.lt_pdf_closed_form(args.lam, args.r, float(l)) if l >= 4 * args.r and args.lam > 0 else dens
        t.add(l, dens, alt, atom)
    return t


def _travel_scenario(args):
    try:
        return applications.TravelScenario(_model(args), args.q, args.v, args.truncation)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_travel_time(args, inputs):
    s = _travel_scenario(args)
    taus = _grid(args, "tau")
    try:
        F, bound = applications.travel_time_curve(s, taus)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cols = ["tau", "F", "tail_bound"]
    sim = None
    if args.sim_runs:
        times = applications.simulate_travel_times(s.params, s.q, s.v, args.sim_runs, args.seed,
                                                   threads=args.threads)
        sim = np.searchsorted(np.sort(times), taus, side="right") / times.size
        cols.append("simulated")
    t = CsvTable(cols)
    for i, tau in enumerate(taus):
        row = [tau, F[i], bound] + ([sim[i]] if sim is not None else [])
        t.add(*row)
    return t


def cmd_dimension(args, inputs):
    lv = args.lambda_v if args.lambda_v is not None else args.lam
    lh = args.lambda_h if args.lambda_h is not None else args.lam
    if lv is None or lh is None:
        raise UsageError("give --lambda or both --lambda-v and --lambda-h")
    try:
        lg = applications.min_facility_intensity(lv, lh, args.q, args.v, args.tau, args.target,
                                                 truncation=args.truncation, upper=args.upper)
        s = applications.TravelScenario(ModelParams(lv, lh, lg), args.q, args.v, args.truncation)
    except applications.InfeasibleTargetError as exc:
        raise UsageError(str(exc)) from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cov = applications.travel_time_cdf(s, args.tau)
    t = CsvTable(["lambda_g", "coverage", "tail_bound"])
    t.add(lg, cov.value, cov.tail_bound)
    return t


def _radio(args):
    try:
        return applications.RadioScenario(_model(args), args.eta, args.loss_db, args.n0)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_snr(args, inputs):
    rs = _radio(args)
    thetas = _grid(args, "theta")
    F = applications.snr_cdf_curve(rs, thetas, args.k)
    t = CsvTable(["theta_db", "k", "F"])
    for k in range(1, args.k + 1):
        for i, th in enumerate(thetas):
            t.add(th, k, F[i, k - 1])
    return t


def cmd_load(args, inputs):
    rs = _radio(args)
    pmf, r = applications.nlos_load_distribution(rs, applications.db_to_linear(args.edge_snr_db), tol=args.tol)
    log.info("cell radius %.6g km, %d terms, mass %.15g", r, pmf.size, pmf.sum())
    t = CsvTable(["n", "pmf"])
    for n, p in enumerate(pmf):
        t.add(n, p)
    return t


def _load_map(args, inputs):
    seg = Path(args.segments)
    qry = Path(args.queries)
    for p in (seg, qry):
        if not p.is_file():
            raise UsageError(f"no such file: {p}")
        inputs[str(p)] = _sha256(p)
    try:
        g = roadnet.load_segments(seg, args.snap_tol)
        ids = roadnet.match_query_nodes(g, roadnet.load_query_points(qry), args.snap_tol)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    log.info("%d nodes, %d edges, %d components, %.4g km of street",
             g.n_nodes, g.n_edges, g.n_components, g.total_length)
    return g, ids


def _probe_radius(args):
    return math.inf if args.radius is None else args.radius


def cmd_map_estimate(args, inputs):
    g, ids = _load_map(args, inputs)
    try:
        est = roadnet.estimate_intensities(g, ids, _probe_radius(args))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    t = CsvTable(list(roadnet.IntensityEstimate._fields))
    t.add(*est)
    return t


def cmd_map_validate(args, inputs):
    g, ids = _load_map(args, inputs)
    if not args.lambda_g > 0:
        raise UsageError("--lambda-g must be > 0")
    if args.lambda_v is not None and args.lambda_h is not None:
        lv, lh = args.lambda_v, args.lambda_h
    else:
        est = roadnet.estimate_intensities(g, ids, _probe_radius(args))
        log.info("estimated lambda_h=%.4g lambda_v=%.4g lambda=%.4g", est.lambda_h, est.lambda_v, est.lam)
        lv, lh = (est.lam, est.lam) if args.equal else (est.lambda_v, est.lambda_h)
    params = ModelParams(lv, lh, args.lambda_g)
    radii = _grid(args, "r")
    S = roadnet.simulate_network_knn(g, ids, args.lambda_g, args.runs, args.seed, args.k, threads=args.threads)
    n_short = int(np.isinf(S).sum())
    if n_short:
        log.warning("%d (run, probe, k) samples had too few reachable facilities", n_short)
    model = analytic.cdf_table(params, radii, args.k)
    ppp = roadnet.ppp_cdf_table(params.line_sum * args.lambda_g, radii, args.k)
    t = CsvTable(["k", "radius", "empirical", "mplcp", "ppp"])
    for k in range(1, args.k + 1):
        emp = roadnet.empirical_distance_cdf(S[:, :, k - 1].ravel(), radii, k)
        log.info("k=%d  KS mplcp=%.4f  KS ppp=%.4f", k,
                 roadnet.ks_distance(emp, model[k - 1]), roadnet.ks_distance(emp, ppp[k - 1]))
        for i, r in enumerate(radii):
            t.add(k, r, emp.probs[i], model[k - 1].probs[i], ppp[k - 1].probs[i])
    return t


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="mplcp", description=__doc__.splitlines()[0], allow_abbrev=False)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("cdf", help="analytic CDF of the k-th nearest path distance")
    _add_model(p)
    p.add_argument("--k", type=_positive_int, default=1, help="largest neighbour order")
    _add_grid(p, "r", 0.0, 2.0, 201, "km")
    p.add_argument("--method", choices=["partition", "faa", "quadrature"], default="partition")
    p.add_argument("--variant", choices=["full", "nlos"], default="full")
    _add_out(p)
    p.set_defaults(func=cmd_cdf)

    p = sub.add_parser("simulate", help="Monte Carlo CDF with KS distance to the analytic curve")
    _add_model(p)
    p.add_argument("--k", type=_positive_int, default=1)
    p.add_argument("--runs", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window", type=float, default=None,
                   help="window half-width in km (default: adaptive from the analytic tail)")
    p.add_argument("--variant", choices=["full", "nlos"], default="full")
    _add_grid(p, "r", 0.0, 2.0, 201, "km")
    _add_threads(p)
    _add_out(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("lt", help="distribution of the total street length inside the L1 ball")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--r", type=float, required=True, help="ball radius (km)")
    p.add_argument("--l-min", type=float, default=None)
    p.add_argument("--l-max", type=float, default=None)
    p.add_argument("--l-steps", type=_positive_int, default=201)
    _add_out(p)
    p.set_defaults(func=cmd_lt)

    p = sub.add_parser("travel-time", help="travel time to the nearest available facility")
    _add_model(p)
    p.add_argument("--q", type=float, required=True, help="availability probability")
    p.add_argument("--v", type=float, required=True, help="speed (m/s)")
    p.add_argument("--truncation", type=_positive_int, default=applications.DEFAULT_TRUNCATION)
    _add_grid(p, "tau", 0.0, 300.0, 301, "s")
    p.add_argument("--sim-runs", type=int, default=0, help="also simulate with geometric thinning")
    p.add_argument("--seed", type=int, default=0)
    _add_threads(p)
    _add_out(p)
    p.set_defaults(func=cmd_travel_time)

    p = sub.add_parser("dimension", help="minimum facility intensity for a travel-time target")
    _add_model(p, lambda_g=False)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--v", type=float, required=True, help="speed (m/s)")
    p.add_argument("--tau", type=float, required=True, help="travel-time budget (s)")
    p.add_argument("--target", type=float, required=True, help="coverage probability target")
    p.add_argument("--truncation", type=_positive_int, default=applications.DEFAULT_TRUNCATION)
    p.add_argument("--upper", type=float, default=1e3, help="upper search bracket (km^-1)")
    _add_out(p)
    p.set_defaults(func=cmd_dimension)

    for name, fn, hlp in (("snr", cmd_snr, "SNR CDF of the k-th nearest NLoS vehicle"),
                          ("load", cmd_load, "PMF of the NLoS cell load")):
        p = sub.add_parser(name, help=hlp)
        _add_model(p)
        p.add_argument("--eta", type=float, default=3.0, help="pathloss exponent")
        p.add_argument("--loss-db", type=float, default=20.0, help="corner diffraction loss (dB)")
        p.add_argument("--n0", type=float, default=1e-8, help="noise power (linear)")
        if name == "snr":
            p.add_argument("--k", type=_positive_int, default=1)
            _add_grid(p, "theta", -20.0, 20.0, 161, "dB")
        else:
            p.add_argument("--edge-snr-db", type=float, default=-6.0, help="SNR at the cell edge (dB)")
            p.add_argument("--tol", type=float, default=1e-10, help="bound on the dropped tail mass")
        _add_out(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("map", help="road-map intensity estimation and Dijkstra validation")
    msub = p.add_subparsers(dest="map_command", required=True, metavar="ACTION")
    for name, fn, hlp in (("estimate", cmd_map_estimate, "estimate street intensities near the probes"),
                          ("validate", cmd_map_validate, "empirical network CDFs vs MPLCP and PPP")):
        m = msub.add_parser(name, help=hlp)
        m.add_argument("--segments", required=True, help="segment list file")
        m.add_argument("--queries", required=True, help="probe point file")
        m.add_argument("--snap-tol", type=float, default=roadnet.DEFAULT_SNAP_TOL, help="km")
        m.add_argument("--radius", type=float, default=None,
                       help="intensity probe half-length (km); default: whole lines across the map")
        if name == "validate":
            m.add_argument("--lambda-g", type=float, required=True)
            m.add_argument("--lambda-v", type=float, default=None, help="skip estimation")
            m.add_argument("--lambda-h", type=float, default=None, help="skip estimation")
            m.add_argument("--equal", action="store_true",
                           help="use the harmonic-mean intensity for both directions")
            m.add_argument("--runs", type=_positive_int, default=1000)
            m.add_argument("--seed", type=int, default=0)
            m.add_argument("--k", type=_positive_int, default=5)
            _add_grid(m, "r", 0.0, 1.5, 151, "km")
            _add_threads(m)
        _add_out(m)
        m.set_defaults(func=fn)

    p = sub.add_parser("rerun", help="replay a manifest, optionally checking the output hash")
    p.add_argument("manifest")
    p.add_argument("--out", help="write here instead of the recorded output path")
    _add_threads(p)
    p.add_argument("--check", action="store_true", help="exit 1 unless the CSV bytes match the record")
    p.set_defaults(func=None)
    return ap


# ---------------------------------------------------------------------------
# manifests and entry point
# ---------------------------------------------------------------------------

_VOLATILE = {"func", "out", "threads", "verbose"}


def _manifest(argv, args, inputs, out, digest):
    params = {k: v for k, v in sorted(vars(args).items()) if k not in _VOLATILE}
    return {
        "tool": "mplcp",
        "version": __version__,
        "command": args.command if args.command != "map" else f"map {args.map_command}",
        "argv": list(argv),
        "params": params,
        "seed": params.get("seed"),
        "inputs": inputs,
        "outputs": {out: digest} if out else {},
    }


def _strip_option(argv, name):
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == name:
            skip = True
            continue
        if a.startswith(name + "="):
            continue
        out.append(a)
    return out


def _rerun(ns, parser):
    path = Path(ns.manifest)
    try:
        man = json.loads(path.read_text())
        argv = list(man["argv"])
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read manifest {path}: {exc}") from None
    for f, digest in man.get("inputs", {}).items():
        if not Path(f).is_file() or _sha256(f) != digest:
            raise UsageError(f"input {f} changed since the manifest was written")
    recorded = next(iter(man.get("outputs", {}).items()), (None, None))
    argv = _strip_option(_strip_option(argv, "--out"), "--threads")
    if ns.threads is not None:
        argv += ["--threads", str(ns.threads)]
    out = ns.out or recorded[0]
    if out:
        argv += ["--out", out]
    args = parser.parse_args(argv)
    text, digest = _execute(argv, args)
    if ns.check and recorded[1] is not None and digest != recorded[1]:
        print(f"output differs from {recorded[0]}", file=sys.stderr)
        return 1
    return 0


def _execute(argv, args):
    inputs = {}
    table = args.func(args, inputs)
    text = table.render()
    digest = hashlib.sha256(text.encode()).hexdigest()
    if args.out:
        out = Path(args.out)
        out.write_text(text)
        man = _manifest(argv, args, inputs, str(out), digest)
        Path(str(out) + MANIFEST_SUFFIX).write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(text)
    return text, digest


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        if args.command == "rerun":
            return _rerun(args, parser)
        _execute(argv, args)
        return 0
    except (UsageError, ValueError) as exc:
        print(f"mplcp: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
