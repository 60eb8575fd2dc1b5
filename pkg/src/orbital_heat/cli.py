"""Command line: orbit counts, kernel checks and graph-model experiments.

Every command writes CSV/JSON under ``--out`` (a directory) and prints the
JSON summary. Exit codes: 0 success, 1 bad input, 2 a resource limit or
tolerance failed (incomplete ball, inadequate tail, short fit window, a
verification that did not pass).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, analysis, discretise as disc, graphs, heat, orbits, walks
from .groups import resolve_group
from .hyperbolic import BASEPOINT, PointH3

EXIT_OK, EXIT_INPUT, EXIT_LIMIT = 0, 1, 2


class CommandFailed(Exception):
    """A check ran but did not pass; the report is still written."""


# --- argument helpers ----------------------------------------------------------


def parse_int(text: str) -> int:
    """Integers, also written as powers like 2^14."""
    text = str(text).strip()
    if "^" in text:
        base, _, exp = text.partition("^")
        return int(base) ** int(exp)
    return int(text)


def parse_grid(text: str, log: bool = False) -> np.ndarray:
    """``a:b:n`` (n points from a to b, geometric with ``log``) or ``v1,v2,...``."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid {text!r} is not a:b:n")
        a, b, n = float(parts[0]), float(parts[1]), parse_int(parts[2])
        if n < 1:
            raise ValueError("grid needs n >= 1")
        return np.geomspace(a, b, n) if log else np.linspace(a, b, n)
    return np.array([float(v) for v in text.split(",") if v.strip()])


def parse_point(text: str) -> PointH3:
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 3:
        raise ValueError("points are written x1,x2,h")
    return PointH3(*vals)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def _config(args) -> dict:
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def write_report(args, stem: str, report: dict) -> dict:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"provenance": {"tool": "orbital-heat", "version": __version__, "config": _config(args)}, **report}
    doc = _clean(doc)
    text = json.dumps(doc, sort_keys=True, indent=1) + "\n"
    (out / f"{stem}.json").write_text(text)
    sys.stdout.write(text)
    return doc


def write_rows(args, stem: str, header, rows) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"{stem}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _ball(args, x=None, y=None):
    group = resolve_group(args.group)
    x = parse_point(args.x) if x is None and args.x else (x or BASEPOINT)
    y = parse_point(args.y) if y is None and args.y else (y or BASEPOINT)
    ball = orbits.enumerate_ball(group, x, y, args.radius, max_elements=args.max_elements)
    ball.require_complete()
    return group, ball


# --- count ---------------------------------------------------------------------


def cmd_count(args) -> int:
    group, ball = _ball(args)
    rho, counts = ball.jumps()
    write_rows(args, "count", ["rho", "N", "N_tilde"],
               [(float(r), int(n), n * math.exp(-2 * r)) for r, n in zip(rho, counts)])
    try:
        est = orbits.critical_exponent_estimate(ball)
        exponent = {"estimate": est.estimate, "stderr": est.stderr, "band": list(est.band),
                    "window": list(est.window)}
    except ValueError as exc:
        exponent = {"estimate": None, "reason": str(exc)}
    rho0 = min(args.rho0, ball.radius)
    write_report(args, "count", {
        "group": group.name, "radius": ball.radius, "elements": len(ball), "jumps": len(rho),
        "critical_exponent": exponent,
        "rough_decrease": {"rho0": rho0, "sup": orbits.rough_decrease_report(ball, rho0)},
    })
    return EXIT_OK


# --- verify --------------------------------------------------------------------


STIELTJES_TOL = 1e-10


def verify_stieltjes(args) -> dict:
    _, ball = _ball(args)
    ts = parse_grid(args.time_grid or "1,2,4")
    rows = [(float(t), heat.stieltjes_check(ball, float(t))) for t in ts]
    worst = max(r for _, r in rows)
    return {"residuals": [{"t": t, "residual": r} for t, r in rows], "tolerance": STIELTJES_TOL,
            "max_residual": worst, "pass": worst <= STIELTJES_TOL}


def verify_upper_bound(args) -> dict:
    _, ball = _ball(args)
    lo, hi = args.rho_min, min(args.rho_max, ball.radius)
    grid = np.linspace(lo, hi, 241)
    jumps = ball.jumps()[0]
    rhos = np.union1d(grid, jumps[(jumps >= lo) & (jumps <= hi)])
    rows, sup = heat.upper_bound_table(ball, rhos)
    heat.write_ratio_csv(rows, Path(args.out) / "verify_upper_bound.csv")
    return {"rho_range": [lo, hi], "points": len(rows), "sup_ratio": float(sup[-1]) if len(sup) else None,
            "max_tail_ratio": max((r.tail_ratio for r in rows), default=0.0),
            "pass": bool(len(sup) and math.isfinite(sup[-1]))}


def verify_sandwich(args) -> dict:
    ts = parse_grid(args.time_grid or "1.5:20:64")
    c = heat.sandwich_constants(float(ts.min()), float(ts.max()), max(len(ts), 2), 64)
    return {"c_lower": c.c_lower, "c_upper": c.c_upper, "t_range": list(c.t_range),
            "pass": c.c_lower > 0 and math.isfinite(c.c_upper)}


def verify_chop(args) -> dict:
    ts = parse_grid(args.time_grid or "10:10000:25", log=True)
    ks = args.k or [2.0, 4.0]
    alpha = args.alpha
    profile = (lambda r: r ** -alpha) if alpha else (lambda r: 1.0)
    rows, out = [], []
    for k in ks:
        r1 = r3 = 0.0
        for t in ts:
            res = heat.chopped_integrals(profile, float(t), float(k), alpha, clip=True)
            rows.append((float(t), float(k), res.I1, res.I2, res.I3, res.ratio1, res.ratio3))
            r1, r3 = max(r1, res.ratio1), max(r3, res.ratio3)
        out.append({"k": k, "sup_ratio1": r1, "sup_ratio3": r3})
    write_rows(args, "verify_chop", ["t", "k", "I1", "I2", "I3", "ratio1", "ratio3"], rows)
    ok = all(math.isfinite(o["sup_ratio1"]) and math.isfinite(o["sup_ratio3"]) for o in out)
    return {"alpha": alpha, "profile": "rho^-alpha", "t_range": [float(ts.min()), float(ts.max())],
            "per_k": out, "pass": ok}


def verify_gaussian_tail(args) -> dict:
    ks = args.k or [0.5, 1.0, 2.0, 4.0, 8.0]
    res = [heat.gaussian_tail_check(float(k)) for k in ks]
    return {"checks": [{"k": r.k, "estimate": r.estimate, "remainder": r.remainder, "bound": r.bound,
                        "ok": r.ok} for r in res], "pass": all(r.ok for r in res)}


def verify_log_limit(args) -> dict:
    _, ball = _ball(args)
    ts = parse_grid(args.time_grid or "1:4:7")
    fit = heat.log_limit_estimate(ball, ts)
    return {"slope": fit.slope, "power": fit.power, "naive_slope": fit.naive_slope,
            "window": list(fit.window), "max_tail_ratio": fit.max_tail_ratio, "rms": fit.rms, "pass": True}


VERIFY = {
    "stieltjes": verify_stieltjes,
    "upper-bound": verify_upper_bound,
    "sandwich": verify_sandwich,
    "chop": verify_chop,
    "gaussian-tail": verify_gaussian_tail,
    "log-limit": verify_log_limit,
}


def cmd_verify(args) -> int:
    Path(args.out).mkdir(parents=True, exist_ok=True)
    report = VERIFY[args.check](args)
    stem = "verify_" + args.check.replace("-", "_")
    write_report(args, stem, {"check": args.check, **report})
    if not report["pass"]:
        raise CommandFailed(f"{args.check} did not pass")
    return EXIT_OK


# --- graph ---------------------------------------------------------------------


def _build(args, depth: int, explicit: bool = False) -> graphs.WeightedGraph:
    if args.model == "star":
        return graphs.build_star(args.d, depth)
    if args.model == "mixed":
        return graphs.build_mixed(args.d, args.p, depth, args.gf_model, lumped=not explicit)
    raise ValueError(f"{args.analysis} is not defined for the {args.model} model")


def graph_decay(args) -> dict:
    n = parse_int(args.n)
    if args.model == "absorbed":
        s = walks.absorbed_ray_return(n)
        series, default = s.p_return, (2**6, n)
    else:
        G = _build(args, n + 1)
        root = G.root()
        series, default = walks.walk_kernel(G, root, root, n).density, (2**8, n)
    window = tuple(parse_int(v) for v in args.window.split(":")) if args.window else default
    fit = walks.decay_fit(np.arange(1, n + 1), series, window)
    walks.write_series_csv(np.arange(1, n + 1), series, Path(args.out) / f"graph_{args.model}_decay.csv")
    return {"fit": fit.to_dict()}


def _radii(args, default):
    return [parse_int(v) for v in args.r.split(",")] if args.r else default


def graph_poincare(args) -> dict:
    radii = _radii(args, [2, 4, 8, 16, 32, 64])
    rows = []
    for r in radii:
        if args.model == "mixed" and args.gf_model == "binary_tree" and args.p and 2 * r + 1 > 12:
            raise ValueError("Poincare on the mixed tree model needs the explicit tree: keep r <= 5")
        G = _build(args, 2 * r + 1, explicit=True)
        best, lam = analysis.random_poincare_check(G, G.root(), r, args.trials, args.seed)
        rows.append((r, lam, best))
    write_rows(args, f"graph_{args.model}_poincare", ["r", "P", "random_max"], rows)
    out = {"values": [{"r": r, "P": p, "random_max": b} for r, p, b in rows],
           "dominated": all(b <= p for _, p, b in rows)}
    if args.model == "star":
        out["bound_2d3"] = 2 * args.d**3
        out["within_bound"] = all(p <= 2 * args.d**3 for _, p, _ in rows)
    return out


def graph_sobolev(args) -> dict:
    depth = args.depth or 257
    G = _build(args, depth, explicit=True)
    rep = analysis.sobolev_report(G, 2, 6, trials=args.trials_sobolev, seed=args.seed)
    write_rows(args, f"graph_{args.model}_sobolev", ["radius", "ratio"],
               [(int(r), float(v)) for r, v in zip(rep.radii, rep.ratios)])
    return {"q": 2, "p": 6, "sup": rep.sup,
            "by_radius": [{"radius": int(r), "ratio": float(v), "profile": n}
                          for r, v, n in zip(rep.radii, rep.ratios, rep.best_profile)]}


def graph_doubling(args) -> dict:
    r_max = parse_int(args.r) if args.r else 64
    G = _build(args, 2 * r_max + 1)
    rep = analysis.doubling_constant(G, G.root(), r_max)
    write_rows(args, f"graph_{args.model}_doubling", ["r", "ratio"],
               [(r, float(v)) for r, v in enumerate(rep.ratios, start=1)])
    return {"constant": rep.constant, "r_max": r_max, "last_ratio": float(rep.ratios[-1])}


def graph_spectrum(args) -> dict:
    if args.model == "star":
        builder, label = (lambda L: graphs.build_ray(L, "unit")), "unit_ray"
    elif args.model == "mixed":
        if args.gf_model == "binary_tree":
            builder, label = graphs.build_tree, "binary_tree"
        else:
            builder, label = (lambda L: graphs.build_ray(L, "exp")), "exp_ray"
    else:
        raise ValueError("spectrum is not defined for the absorbed model")
    depths = tuple(parse_int(v) for v in args.depths.split(","))
    sw = analysis.spectral_bottom_sweep(builder, depths)
    write_rows(args, f"graph_{args.model}_spectrum", ["L", "lambda0", "estimate"],
               list(zip(sw.depths, sw.raw.tolist(), sw.estimates.tolist())))
    return {"component": label, "depths": list(sw.depths), "raw": sw.raw, "estimates": sw.estimates,
            "estimate": sw.estimate, "spread": sw.spread, "loglog_slope": sw.loglog_slope}


def graph_volume(args) -> dict:
    r_max = parse_int(args.r) if args.r else 10_000
    # mixed: one degenerate ray on its own; the GF parts grow exponentially
    # and would hide the cubic growth the measurement is about
    if args.model == "mixed":
        G, component = graphs.build_ray(r_max, "quadratic"), "weighted_ray"
    else:
        G, component = _build(args, r_max), "star"
    vol = graphs.ball_volumes(G, G.root(), r_max)
    r = np.arange(r_max + 1)
    write_rows(args, f"graph_{args.model}_volume", ["r", "volume"], [(int(a), float(v)) for a, v in zip(r, vol)])
    sel = r >= 3
    scaled = vol[sel] / r[sel].astype(float) ** 3 if sel.any() else np.empty(0)
    return {"component": component, "r_max": r_max, "min_vol_over_r3": float(scaled.min()) if len(scaled) else None,
            "max_vol_over_r3": float(scaled.max()) if len(scaled) else None}


GRAPH = {
    "decay": graph_decay,
    "poincare": graph_poincare,
    "sobolev": graph_sobolev,
    "doubling": graph_doubling,
    "spectrum": graph_spectrum,
    "volume": graph_volume,
}


def cmd_graph(args) -> int:
    if args.model == "absorbed" and args.analysis != "decay":
        raise ValueError("the absorbed model only supports decay")
    Path(args.out).mkdir(parents=True, exist_ok=True)
    report = GRAPH[args.analysis](args)
    write_report(args, f"graph_{args.model}_{args.analysis}",
                 {"model": args.model, "analysis": args.analysis, **report})
    return EXIT_OK


# --- discretise ----------------------------------------------------------------


def cmd_discretise(args) -> int:
    if args.single_point:
        points = [BASEPOINT]
    else:
        group, ball = _ball(args)
        if args.cloud == "orbit":
            points = disc.orbit_points(ball)
        else:
            points = disc.cayley_cloud(group, ball, disc.CLOUD_SPACING * args.eps)
    G, net = disc.discretise(points, args.eps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    graphs.save_graph(G, out / "net_graph.json")
    rep = disc.quasi_isometry_report(G, net)
    write_report(args, "discretise", {"cloud_points": len(points), "quasi_isometry": rep.to_dict()})
    if not rep.connected:
        raise CommandFailed("the net graph is disconnected")
    return EXIT_OK


# --- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="orbital-heat", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, default=0)

    def group_opts(p, required=True):
        p.add_argument("--group", required=required, help="builtin (e.g. cyclic:1.0) or JSON group file")
        p.add_argument("--radius", type=float, default=10.0)
        p.add_argument("--x", help="point x as x1,x2,h (default j)")
        p.add_argument("--y", help="point y as x1,x2,h (default j)")
        p.add_argument("--max-elements", type=int, default=orbits.DEFAULT_MAX_ELEMENTS)

    p = sub.add_parser("count", help="orbit counting function and summary")
    common(p)
    group_opts(p)
    p.add_argument("--rho0", type=float, default=1.0, help="start of the rough-decrease scan")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("verify", help="heat kernel identities and bounds")
    p.add_argument("check", choices=sorted(VERIFY))
    common(p)
    group_opts(p, required=False)
    p.add_argument("--time-grid", help="a:b:n or comma list")
    p.add_argument("--k", type=float, action="append", help="window half-width(s); repeatable")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--rho-min", type=float, default=4.0)
    p.add_argument("--rho-max", type=float, default=10.0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("graph", help="graph-model experiments")
    p.add_argument("model", choices=["star", "mixed", "absorbed"])
    p.add_argument("analysis", choices=sorted(GRAPH))
    common(p)
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--gf-model", choices=list(graphs.GF_MODELS), default="binary_tree")
    p.add_argument("--n", default="2^14", help="walk length (2^k accepted)")
    p.add_argument("--window", help="fit window lo:hi (2^k accepted)")
    p.add_argument("--r", help="radius (or comma list for poincare)")
    p.add_argument("--depth", type=int, help="graph depth for sobolev")
    p.add_argument("--depths", default="16,32,64", help="truncation depths for spectrum")
    p.add_argument("--trials", type=int, default=10_000, help="random functions per Poincare radius")
    p.add_argument("--trials-sobolev", type=int, default=32)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("discretise", help="epsilon-net of an orbit and its quasi-isometry constants")
    common(p)
    group_opts(p, required=False)
    p.add_argument("--eps", type=float, default=0.4)
    p.add_argument("--cloud", choices=["cayley", "orbit"], default="cayley",
                   help="orbit points only, or densified along Cayley edges (default)")
    p.add_argument("--single-point", action="store_true")
    p.set_defaults(func=cmd_discretise)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    if getattr(args, "group", None) is None and args.command in ("verify", "discretise"):
        needs = args.command == "discretise" and not args.single_point
        needs |= args.command == "verify" and args.check in ("stieltjes", "upper-bound", "log-limit")
        if needs:
            print("error: --group is required here", file=sys.stderr)
            return EXIT_INPUT
    try:
        return args.func(args)
    except (orbits.IncompleteBall, heat.InadequateTail, CommandFailed) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    except ValueError as exc:
        # fit windows that are too short are a resource problem, not bad input
        code = EXIT_LIMIT if "dyadic" in str(exc) else EXIT_INPUT
        print(f"error: {exc}", file=sys.stderr)
        return code
    except (KeyError, FileNotFoundError, json.JSONDecodeError, orbits.DiscretenessSuspect) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
