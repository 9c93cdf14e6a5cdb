"""Command-line front end.

Ten subcommands cover the package's capabilities: verify (hypothesis
report), predict (drift/variance table), classify (zone atlas), simulate
(ensemble moments), clt (distributional gate), stopping (exit times),
martingale (generator residual), reeb (level-set graph), measure (strip
census), charfn (characteristic function).

Exit codes are stable across subcommands: 0 success, 1 a scientific gate
failed, 2 usage or configuration error.  All tables are CSV with a header
row; all reports are JSON; Reeb graphs are additionally written as
Graphviz DOT.  Outputs are deterministic for a fixed config and seed;
--deterministic also suppresses the timestamp comment in CSV files and
the "generated" field in JSON reports, making bytes reproducible.
"""

import argparse
import csv
import json
import math
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import ensemble, hypotheses, normal_form, resonance, strips
from .config import ConfigError, load_config
from .dynamics import PhasePoint

GOLDEN_MEAN = (math.sqrt(5.0) - 1.0) / 2.0

EXIT_OK = 0
EXIT_GATE = 1
EXIT_USAGE = 2


def _timestamp():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_csv(path, header, rows, deterministic):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if not deterministic:
            fh.write(f"# generated: {_timestamp()}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path, payload, deterministic):
    doc = dict(payload)
    if not deterministic:
        doc["generated"] = _timestamp()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _prepare(args):
    """Load config, apply flag overrides, make the output directory."""
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    os.makedirs(cfg.out_dir, exist_ok=True)
    return cfg


def _start_point(args, cfg):
    r0 = args.r0 if args.r0 is not None else GOLDEN_MEAN
    theta0 = getattr(args, "theta0", 0.0) or 0.0
    return PhasePoint(theta0, r0)


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def cmd_verify(args):
    cfg = _prepare(args)
    fam = cfg.family()
    report = hypotheses.build_report(fam, window=(0.0, 1.0))
    path = os.path.join(cfg.out_dir, "h-report.json")
    doc = report.to_dict()
    _write_json(path, doc, args.deterministic)
    print(f"wrote {path} (verdict: {report.verdict})")
    return EXIT_GATE if report.verdict == "fails" else EXIT_OK


def cmd_predict(args):
    cfg = _prepare(args)
    fam = cfg.family()
    zp = cfg.zone_params()
    gamma = zp.gamma
    r_values = np.linspace(args.r_min, args.r_max, args.grid)
    theta_avg = np.arange(256) / 256.0
    rows = []
    frames = {}
    for r in r_values:
        sc = strips.classify(float(r), zp)
        tag, p, q = sc.tag, sc.p, sc.q
        if tag == "TI":
            b = float(normal_form.drift_b(fam, gamma, float(r), guard=False))
            s2 = float(normal_form.variance_sigma2(fam, float(r)))
        elif tag == "IR":
            bt, st = normal_form.ir_drift_variance(fam, p, q, theta_avg, gamma)
            b, s2 = float(np.mean(bt)), float(np.mean(st))
        else:
            if (p, q) not in frames:
                frames[(p, q)] = resonance.composite_map(fam, p, q, gamma)
            frame = frames[(p, q)]
            if tag == "RR":
                R = (float(r) - frame.r0) / math.sqrt(fam.epsilon)
                bb, ss = resonance.rr_drift_variance(frame, theta_avg, R)
                b, s2 = float(np.mean(bb)), float(np.mean(ss))
            else:  # TZ1 / TZ2: no modeled drift, variance from translates
                b = float("nan")
                s2 = float(np.mean(
                    resonance.tz_variance(frame, theta_avg, float(r))
                ))
        rows.append([
            f"{r:.12g}", tag, p if p is not None else "",
            q if q is not None else "", f"{b:.12g}", f"{s2:.12g}",
        ])
    path = os.path.join(cfg.out_dir, "prediction.csv")
    _write_csv(path, ["r", "class", "p", "q", "b", "sigma2"], rows,
               args.deterministic)
    print(f"wrote {path} ({len(rows)} rows)")
    return EXIT_OK


def cmd_classify(args):
    cfg = _prepare(args)
    zp = cfg.zone_params()
    r_values = np.linspace(args.r_min, args.r_max, args.grid)
    rows = []
    for r in r_values:
        sc = strips.classify(float(r), zp)
        rows.append([
            f"{r:.12g}", sc.tag,
            sc.p if sc.p is not None else "",
            sc.q if sc.q is not None else "",
            f"{sc.dist:.12g}" if sc.dist is not None else "",
        ])
    path = os.path.join(cfg.out_dir, "atlas.csv")
    _write_csv(path, ["r", "tag", "p", "q", "dist"], rows, args.deterministic)
    print(f"wrote {path} ({len(rows)} rows)")
    return EXIT_OK


def cmd_simulate(args):
    cfg = _prepare(args)
    fam = cfg.family()
    x0 = _start_point(args, cfg)
    stats = ensemble.run_ensemble(
        fam, x0, cfg.n, cfg.M, cfg.master_seed, thin=cfg.thin,
        budget=cfg.budget, bins=(args.bins or None), threads=args.threads,
    )
    payload = stats.to_dict()
    payload["master_seed"] = cfg.master_seed
    path = os.path.join(cfg.out_dir, "ensemble.json")
    _write_json(path, payload, args.deterministic)
    written = [path]
    if args.bins and "csv" in cfg.formats and stats.histogram is not None:
        counts, edges = stats.histogram
        hist_path = os.path.join(cfg.out_dir, "histogram.csv")
        rows = [
            [f"{edges[i]:.12g}", f"{edges[i + 1]:.12g}", int(counts[i])]
            for i in range(len(counts))
        ]
        _write_csv(hist_path, ["bin_lo", "bin_hi", "count"], rows,
                   args.deterministic)
        written.append(hist_path)
    if args.raw:
        stats.sample.astype("<f8").tofile(args.raw)
        written.append(args.raw)
    print("wrote " + ", ".join(written))
    return EXIT_OK


def cmd_clt(args):
    cfg = _prepare(args)
    fam = cfg.family()
    x0 = _start_point(args, cfg)
    zp = cfg.zone_params()
    sc = strips.classify(x0.r, zp)
    if sc.tag == "TI":
        pred = normal_form.DiffusionPrediction.totally_irrational(fam, zp.gamma)
    elif sc.tag == "IR":
        pred = normal_form.DiffusionPrediction.imaginary_rational(
            fam, sc.p, sc.q, zp.gamma)
    else:
        raise ConfigError(
            f"start action r0 = {x0.r} classifies as {sc.tag}; the vertical "
            "CLT gate applies to TI or IR starts"
        )
    stats = ensemble.run_ensemble(
        fam, x0, cfg.n, cfg.M, cfg.master_seed, budget=cfg.budget,
        threads=args.threads,
    )
    report = ensemble.clt_test(stats, pred, ks_threshold=args.ks_threshold)
    payload = report.to_dict()
    payload["sample"] = stats.to_dict()
    path = os.path.join(cfg.out_dir, "clt.json")
    _write_json(path, payload, args.deterministic)
    print(f"wrote {path} (passed: {report.passed}, ks = {report.ks:.5f})")
    return EXIT_OK if report.passed else EXIT_GATE


def cmd_stopping(args):
    cfg = _prepare(args)
    fam = cfg.family()
    x0 = _start_point(args, cfg)
    st = ensemble.stopping_times(
        fam, x0, args.beta, cfg.M, cfg.master_seed, budget=cfg.budget,
    )
    payload = st.to_dict()
    path = os.path.join(cfg.out_dir, "stopping.json")
    _write_json(path, payload, args.deterministic)
    written = [path]
    if "csv" in cfg.formats:
        counts, edges = st.histogram(bins=50)
        hist_path = os.path.join(cfg.out_dir, "exit-times.csv")
        rows = [
            [f"{edges[i]:.12g}", f"{edges[i + 1]:.12g}", int(counts[i])]
            for i in range(len(counts))
        ]
        _write_csv(hist_path, ["bin_lo", "bin_hi", "count"], rows,
                   args.deterministic)
        written.append(hist_path)
    print("wrote " + ", ".join(written))
    return EXIT_OK


def cmd_martingale(args):
    cfg = _prepare(args)
    fam = cfg.family()
    x0 = _start_point(args, cfg)
    zp = cfg.zone_params()
    sc = strips.classify(x0.r, zp)
    if sc.tag == "TI":
        pred = normal_form.DiffusionPrediction.totally_irrational(fam, zp.gamma)
    elif sc.tag == "IR":
        pred = normal_form.DiffusionPrediction.imaginary_rational(
            fam, sc.p, sc.q, zp.gamma)
    else:
        raise ConfigError(
            f"start action r0 = {x0.r} classifies as {sc.tag}; the "
            "martingale residual applies to TI or IR starts"
        )
    if args.f == "r":
        f = lambda r: r
        df = lambda r: np.ones_like(np.asarray(r, dtype=float))
        d2f = lambda r: np.zeros_like(np.asarray(r, dtype=float))
    else:
        f = lambda r: r * r
        df = lambda r: 2.0 * np.asarray(r, dtype=float)
        d2f = lambda r: np.full_like(np.asarray(r, dtype=float), 2.0)
    report = ensemble.martingale_residual(
        fam, pred, f, args.lam, x0, args.beta, cfg.M, cfg.master_seed,
        df=df, d2f=d2f, budget=cfg.budget, zp=zp,
    )
    payload = report.to_dict()
    payload["f"] = args.f
    path = os.path.join(cfg.out_dir, "martingale.json")
    _write_json(path, payload, args.deterministic)
    print(f"wrote {path} (residual = {report.residual:.3e}, "
          f"z = {report.z:.2f})")
    return EXIT_OK


def cmd_reeb(args):
    cfg = _prepare(args)
    fam = cfg.family()
    frame = resonance.composite_map(fam, args.p, args.q,
                                    cfg.zone_params().gamma)
    graph = resonance.reeb_graph(frame, K3=args.k3, grid=args.grid)
    path = os.path.join(cfg.out_dir, "reeb.json")
    _write_json(path, graph.to_dict(), args.deterministic)
    dot_path = os.path.join(cfg.out_dir, "reeb.dot")
    with open(dot_path, "w", encoding="utf-8") as fh:
        fh.write(graph.to_dot())
        fh.write("\n")
    print(f"wrote {path}, {dot_path} "
          f"({graph.n_internal_vertices} internal vertices, "
          f"{len(graph.edges)} edges)")
    return EXIT_OK


def cmd_measure(args):
    cfg = _prepare(args)
    zp = cfg.zone_params()
    rng = np.random.default_rng(cfg.master_seed)
    sm = strips.rational_strip_measure(
        zp, (args.w_min, args.w_max), strict=False, samples=args.samples,
        rng=rng,
    )
    ok = (sm.count <= sm.count_bound and sm.measure_ok and sm.uniqueness_ok)
    payload = {
        "window": [args.w_min, args.w_max],
        "count": sm.count,
        "count_bound": sm.count_bound,
        "measured": sm.measured,
        "measure_cap": sm.measure_cap,
        "gap_margin": sm.gap_margin,
        "measure_ok": sm.measure_ok,
        "uniqueness_ok": sm.uniqueness_ok,
        "passed": ok,
    }
    path = os.path.join(cfg.out_dir, "measure.json")
    _write_json(path, payload, args.deterministic)
    print(f"wrote {path} (passed: {ok})")
    return EXIT_OK if ok else EXIT_GATE


def cmd_charfn(args):
    cfg = _prepare(args)
    t_grid = np.linspace(-args.t_max, args.t_max, args.t_points)
    if args.alpha is not None:
        alpha = args.alpha
        v_seq = np.cos(2.0 * np.pi * alpha * np.arange(cfg.n))
    else:
        v_seq = np.ones(cfg.n)
    table = ensemble.empirical_char_function(
        v_seq, cfg.M, cfg.n, t_grid, master_seed=cfg.master_seed,
    )
    rows = [
        [f"{t:.12g}", f"{re:.12g}", f"{im:.12g}", f"{tg:.12g}"]
        for t, re, im, tg in table.to_rows()
    ]
    csv_path = os.path.join(cfg.out_dir, "charfn.csv")
    _write_csv(csv_path, ["t", "phi_re", "phi_im", "target"], rows,
               args.deterministic)
    payload = {
        "sigma2": table.sigma2,
        "sup_error": table.sup_error,
        "n": cfg.n,
        "M": cfg.M,
    }
    json_path = os.path.join(cfg.out_dir, "charfn.json")
    _write_json(json_path, payload, args.deterministic)
    print(f"wrote {csv_path}, {json_path} (sup error "
          f"{table.sup_error:.5f})")
    return EXIT_OK


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------

def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH",
                        help="JSON run configuration")
    common.add_argument("--seed", type=int, default=None, metavar="U64",
                        help="override run.master_seed")
    common.add_argument("--threads", type=int,
                        default=os.cpu_count() or 1, metavar="N",
                        help="worker threads for ensemble batches")
    common.add_argument("--deterministic", action="store_true",
                        help="suppress timestamps; byte-reproducible output")
    common.add_argument("--out", default=None, metavar="DIR",
                        help="override output.directory")

    parser = argparse.ArgumentParser(
        prog="randtwist",
        description="Random twist-map compositions: simulation and "
                    "diffusion-limit analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("verify", parents=[common],
                   help="hypothesis checks; writes h-report.json")

    p = sub.add_parser("predict", parents=[common],
                       help="drift/variance table over an action range")
    p.add_argument("--r-min", type=float, default=0.0)
    p.add_argument("--r-max", type=float, default=1.0)
    p.add_argument("--grid", type=int, default=201)

    p = sub.add_parser("classify", parents=[common],
                       help="zone atlas over an action range")
    p.add_argument("--r-min", type=float, default=0.0)
    p.add_argument("--r-max", type=float, default=1.0)
    p.add_argument("--grid", type=int, default=201)

    p = sub.add_parser("simulate", parents=[common],
                       help="ensemble displacement moments")
    p.add_argument("--r0", type=float, default=None,
                   help="start action (default: golden mean)")
    p.add_argument("--theta0", type=float, default=0.0)
    p.add_argument("--bins", type=int, default=0,
                   help="histogram bins (0 = no histogram)")
    p.add_argument("--raw", metavar="PATH", default=None,
                   help="dump raw displacements (little-endian float64)")

    p = sub.add_parser("clt", parents=[common],
                       help="CLT gate against the predicted normal")
    p.add_argument("--r0", type=float, default=None)
    p.add_argument("--theta0", type=float, default=0.0)
    p.add_argument("--ks-threshold", type=float, default=None)

    p = sub.add_parser("stopping", parents=[common],
                       help="exit times from the eps^beta strip")
    p.add_argument("--r0", type=float, default=None)
    p.add_argument("--theta0", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=0.2)

    p = sub.add_parser("martingale", parents=[common],
                       help="discounted generator residual")
    p.add_argument("--r0", type=float, default=None)
    p.add_argument("--theta0", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=0.2)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--f", choices=["r", "r2"], default="r")

    p = sub.add_parser("reeb", parents=[common],
                       help="level-set graph of the resonant pendulum")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--k3", type=float, default=None)
    p.add_argument("--grid", type=int, default=512)

    p = sub.add_parser("measure", parents=[common],
                       help="Farey census of rational strips")
    p.add_argument("--w-min", type=float, default=0.0)
    p.add_argument("--w-max", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=0,
                   help="random sub-strips for uniqueness spot checks")

    p = sub.add_parser("charfn", parents=[common],
                       help="empirical characteristic function")
    p.add_argument("--t-max", type=float, default=3.0)
    p.add_argument("--t-points", type=int, default=61)
    p.add_argument("--alpha", type=float, default=None,
                   help="use v_k = cos(2 pi k alpha) instead of v_k = 1")

    return parser


_COMMANDS = {
    "verify": cmd_verify,
    "predict": cmd_predict,
    "classify": cmd_classify,
    "simulate": cmd_simulate,
    "clt": cmd_clt,
    "stopping": cmd_stopping,
    "martingale": cmd_martingale,
    "reeb": cmd_reeb,
    "measure": cmd_measure,
    "charfn": cmd_charfn,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, NotImplementedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
