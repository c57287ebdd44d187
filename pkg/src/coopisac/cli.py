"""Command-line entry point: plot data and the closed-form validation table."""
from __future__ import annotations

import argparse
import json
import math
import os
import subprocess
import sys
from dataclasses import replace
from typing import Callable, Optional, Sequence

from . import __version__
from .communication import (
    exhaustive_cluster_size,
    kappa_c,
    optimal_cluster_size,
    rate_coop,
    rate_single,
)
from .config import ExperimentConfig, default_config_json, load_config, with_overrides
from .errors import ConfigError, DomainError
from .monte_carlo import (
    McConfig,
    SensingAcceptance,
    simulate_acceptance,
    simulate_crlb,
    simulate_gdop,
    simulate_rate,
)
from .sensing import (
    crlb_closed_form,
    crlb_with_acceptance,
    gdop_approx,
    gdop_asymptotic,
    kappa_s,
    sensing_optimal_n,
    zeta_sq,
)
from .svg import line_chart
from .tradeoff import (
    KM,
    BackhaulParams,
    RateTable,
    boundary_scan,
    frontier_corners,
    time_sharing_baseline,
    weighted_sum_optimize,
)

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG = 0, 1, 2


# ------------------------------------------------------------------ output

def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _version() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=os.path.dirname(__file__), capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


class Writer:
    """Writes tables in the chosen format plus a metadata sidecar per table."""

    def __init__(self, cfg: ExperimentConfig, command: str, fmt: str, svg: bool):
        self.cfg, self.command, self.fmt, self.svg = cfg, command, fmt, svg
        os.makedirs(cfg.output_dir, exist_ok=True)
        self.written: list[str] = []

    def table(self, name: str, columns: Sequence[str], rows: Sequence[Sequence], extra: Optional[dict] = None) -> str:
        path = os.path.join(self.cfg.output_dir, f"{name}.{self.fmt}")
        if self.fmt == "csv":
            with open(path, "w", newline="") as fh:
                fh.write(",".join(columns) + "\n")
                for r in rows:
                    fh.write(",".join(_cell(v) for v in r) + "\n")
        else:
            recs = [{c: (None if isinstance(v, float) and not math.isfinite(v) else v)
                     for c, v in zip(columns, r)} for r in rows]
            with open(path, "w") as fh:
                json.dump(recs, fh, indent=1)
                fh.write("\n")
        meta = {
            "command": self.command,
            "table": name,
            "columns": list(columns),
            "rows": len(rows),
            "config_sha256": self.cfg.digest(),
            "master_seed": self.cfg.mc.master_seed,
            "trials": self.cfg.mc.trials,
            "version": _version(),
        }
        if extra:
            meta.update(extra)
        with open(path + ".meta.json", "w") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)
            fh.write("\n")
        self.written.append(path)
        return path

    def chart(self, name: str, series: dict, **labels) -> None:
        if not self.svg:
            return
        with open(os.path.join(self.cfg.output_dir, f"{name}.svg"), "w") as fh:
            fh.write(line_chart(series, **labels))


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


# --------------------------------------------------------------- commands

def _sensing_zeta(cfg: ExperimentConfig) -> float:
    """|zeta|^2 with all power on sensing, for distances in km."""
    return zeta_sq(cfg.network.sensing(cfg.network.p_t), KM)


def cmd_gdop(cfg: ExperimentConfig, args, out: Writer) -> int:
    rows = []
    for N in range(args.n_min, args.n_max + 1):
        est = simulate_gdop(N, cfg.mc)
        rows.append((N, est.mean, est.std_error, gdop_approx(N), gdop_asymptotic(N)))
    out.table("gdop", ("N", "gdop_mc", "gdop_mc_stderr", "gdop_approx", "gdop_asymptotic"), rows)
    out.chart("gdop", {
        "mc": ([r[0] for r in rows], [r[1] for r in rows]),
        "approx": ([r[0] for r in rows], [r[3] for r in rows]),
        "asymptotic": ([r[0] for r in rows], [r[4] for r in rows]),
    }, title="GDoP", xlabel="N", ylabel="GDoP")
    return EXIT_OK


def cmd_crlb(cfg: ExperimentConfig, args, out: Writer) -> int:
    net = cfg.network
    zs = _sensing_zeta(cfg)
    acc = SensingAcceptance(net.mu_s, net.psi) if args.acceptance else None
    n_best = sensing_optimal_n(net.mu_s, net.psi, max(args.n_max, 2))
    rows = []
    for N in range(args.n_min, args.n_max + 1):
        est = simulate_crlb(N, net.sensing(), net.lambda_b, cfg.mc, acceptance=acc, zeta_sq_value=zs)
        root = math.sqrt(est.mean)
        se = est.std_error / (2.0 * root) if root > 0 else math.nan
        closed = math.sqrt(crlb_closed_form(N, net.lambda_b, net.beta, zs))
        with_acc = math.sqrt(crlb_with_acceptance(N, net.lambda_b, zs, net.mu_s, net.psi))
        rows.append((N, root, se, closed, with_acc, N == n_best))
    out.table(
        "crlb",
        ("N", "root_crlb_mc", "stderr", "root_crlb_closed", "root_crlb_with_acceptance", "acceptance_minimum"),
        rows, {"length_unit": "km", "zeta_sq": zs, "acceptance_in_mc": bool(args.acceptance)},
    )
    out.chart("crlb", {
        "mc": ([r[0] for r in rows], [r[1] for r in rows]),
        "closed": ([r[0] for r in rows], [r[3] for r in rows]),
        "with acceptance": ([r[0] for r in rows], [r[4] for r in rows]),
    }, title="root CRLB", xlabel="N", ylabel="km")
    return EXIT_OK


def cmd_rate(cfg: ExperimentConfig, args, out: Writer) -> int:
    rows = []
    for ratio in args.ratios:
        params = cfg.network.comm(ratio * cfg.network.p_t)
        for L in range(args.l_min, args.l_max + 1):
            closed = rate_coop(L, params)
            est = simulate_rate(L, params, cfg.mc)
            rows.append((L, ratio, closed, est.mean, est.std_error))
    out.table("rate", ("L", "p_c_ratio", "rate_closed", "rate_mc", "stderr"), rows, {"rate_unit": "nats"})
    series = {}
    for ratio in args.ratios:
        sel = [r for r in rows if r[1] == ratio]
        series[f"closed {ratio:g}"] = ([r[0] for r in sel], [r[2] for r in sel])
        series[f"mc {ratio:g}"] = ([r[0] for r in sel], [r[3] for r in sel])
    out.chart("rate", series, title="rate vs L", xlabel="L", ylabel="nats")
    return EXIT_OK


def cmd_cluster(cfg: ExperimentConfig, args, out: Writer) -> int:
    rows = []
    for psi in args.psi:
        for mu in args.mu_c:
            params = replace(cfg.network.comm(), psi=psi, mu_c=mu)
            approx = optimal_cluster_size(mu, psi, params.alpha)
            l_max = max(approx + 6, int(2 * psi / max(mu, 1e-9)) + 6) if mu > 0 else 60
            exhaustive, _ = exhaustive_cluster_size(params, min(l_max, 200))
            rows.append((psi, mu, approx, exhaustive))
    out.table("cluster", ("psi", "mu_c", "L_star_approx", "L_star_exhaustive"), rows)
    return EXIT_OK


def cmd_boundary(cfg: ExperimentConfig, args, out: Writer) -> int:
    params = cfg.isac()
    table = RateTable(params)
    frontier_cols = ("series", "L", "N", "p_c", "p_s", "rate", "crlb", "root_crlb", "feasible")
    ws_rows = []
    charts = {}
    fractions = [k / args.ts_points for k in range(args.ts_points + 1)]
    for c in args.c_values:
        e = cfg.backhaul.e if args.e is None else args.e
        if args.e is None and cfg.raw["backhaul"]["e_nats"] is None:
            e = c / (2.0 * cfg.network.psi)
        bh = BackhaulParams(c, e)
        scan = boundary_scan(params, bh, cfg.grid, prune=args.prune, table=table, workers=cfg.mc.workers)
        rows = [("frontier", p.point.L, p.point.N, p.point.p_c, p.point.p_s, p.rate, p.crlb, p.root_crlb, p.feasible)
                for p in scan.frontier]
        if scan.frontier:
            cc, cs = frontier_corners(scan.frontier)
            for p in time_sharing_baseline(cc, cs, fractions):
                rows.append(("time_sharing", "", "", "", "", p.rate, p.crlb, p.root_crlb, p.feasible))
            for rho in args.rho_values:
                op, T, _ = weighted_sum_optimize(rho, params, bh, cfg.grid, frontier=scan.frontier)
                ws_rows.append((c, rho, T, op.L, op.N, op.p_c))
        tag = f"{c:g}".replace(".", "p")
        out.table(f"frontier_C{tag}", frontier_cols, rows, {
            "c_backhaul_nats": c, "e_nats": e, "evaluated_cells": scan.evaluated,
            "grid_cells": scan.total, "prune": bool(args.prune), "crlb_unit": "km^2",
        })
        charts[f"C={c:g}"] = ([p.rate for p in scan.frontier], [p.sensing_metric for p in scan.frontier])
    out.table("weighted_sum", ("c_backhaul", "rho", "T", "L", "N", "p_c"), ws_rows)
    out.chart("frontier", charts, title="rate vs 1/sqrt(CRLB)", xlabel="nats", ylabel="1/km")
    return EXIT_OK


def _check(name: str, closed: float, est, tol: float, absolute: bool = False):
    diff = abs(est.mean - closed)
    err = diff if absolute else diff / abs(closed)
    sigma = est.sigma_distance(closed)
    return (name, closed, est.mean, est.std_error, sigma, err, tol, "abs" if absolute else "rel", err <= tol)


def validation_checks(cfg: ExperimentConfig) -> list[tuple]:
    """Closed form vs simulation at the stated tolerances."""
    net = cfg.network
    mc = cfg.mc
    zs = _sensing_zeta(cfg)
    comm = net.comm()
    rows = [
        _check("gdop N=10", gdop_approx(10), simulate_gdop(10, mc), 0.10),
        _check("crlb N=10", crlb_closed_form(10, net.lambda_b, net.beta, zs),
               simulate_crlb(10, net.sensing(), net.lambda_b, mc, zeta_sq_value=zs), 0.15),
        _check("crlb N=15", crlb_closed_form(15, net.lambda_b, net.beta, zs),
               simulate_crlb(15, net.sensing(), net.lambda_b, mc, zeta_sq_value=zs), 0.15),
        _check("kappa_s N=15", kappa_s(15, net.mu_s, net.psi),
               simulate_acceptance(15, net.mu_s, net.psi, "sensing", mc), 0.01, absolute=True),
        _check("kappa_c L=10", kappa_c(10, net.mu_c, net.psi),
               simulate_acceptance(10, net.mu_c, net.psi, "comm", mc), 0.01, absolute=True),
        _check("rate L=1", rate_single(net.comm(net.p_t)), simulate_rate(1, net.comm(net.p_t), mc), 0.05),
    ]
    for L in (2, 5, 10):
        rows.append(_check(f"rate L={L}", rate_coop(L, comm), simulate_rate(L, comm, mc), 0.10))
    return rows


def cmd_validate(cfg: ExperimentConfig, args, out: Writer) -> int:
    rows = validation_checks(cfg)
    cols = ("check", "closed", "mc", "stderr", "sigma", "error", "tol", "tol_kind", "pass")
    out.table("validate", cols, rows)
    print(f"{'check':<14} {'closed':>12} {'mc':>12} {'sigma':>7} {'error':>9} {'tol':>6}  result")
    for name, closed, mean, se, sigma, err, tol, kind, ok in rows:
        print(f"{name:<14} {closed:12.6g} {mean:12.6g} {sigma:7.2f} {err:9.4f} {tol:6.3f}  {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if all(r[-1] for r in rows) else EXIT_VALIDATION


COMMANDS: dict[str, Callable] = {
    "gdop": cmd_gdop, "crlb": cmd_crlb, "rate": cmd_rate,
    "cluster": cmd_cluster, "boundary": cmd_boundary, "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="master RNG seed")
    common.add_argument("--trials", type=int, help="Monte Carlo trials per estimate")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--workers", type=int, help="worker threads (results do not depend on it)")
    common.add_argument("--svg", action="store_true", help="also write SVG charts")

    p = argparse.ArgumentParser(prog="coopisac", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--print-default-config", action="store_true", help="print the default config and exit")
    sub = p.add_subparsers(dest="command")

    g = sub.add_parser("gdop", parents=[common], help="GDoP vs number of BSs")
    g.add_argument("--n-min", type=int, default=2)
    g.add_argument("--n-max", type=int, default=20)

    c = sub.add_parser("crlb", parents=[common], help="root CRLB vs number of BSs")
    c.add_argument("--n-min", type=int, default=2)
    c.add_argument("--n-max", type=int, default=30)
    c.add_argument("--acceptance", action="store_true", help="apply the load cap in the simulation")

    r = sub.add_parser("rate", parents=[common], help="rate vs cooperative cluster size")
    r.add_argument("--l-min", type=int, default=1)
    r.add_argument("--l-max", type=int, default=20)
    r.add_argument("--ratios", type=_floats, default=[0.25, 0.5, 0.75], help="p_c / P_t values")

    k = sub.add_parser("cluster", parents=[common], help="optimal cluster size, approximate vs exhaustive")
    k.add_argument("--mu-c", type=_floats, default=[1.0, 5.0])
    k.add_argument("--psi", type=_ints, default=[10, 15, 20])

    b = sub.add_parser("boundary", parents=[common], help="rate-CRLB frontier and weighted sum")
    b.add_argument("--c-values", type=_floats, default=[4.3, 8.6], help="backhaul capacities (nats)")
    b.add_argument("--e", type=float, default=None, help="backhaul cost per sensing BS (nats)")
    b.add_argument("--rho-values", type=_floats, default=[k / 10 for k in range(11)])
    b.add_argument("--ts-points", type=int, default=20, help="time-sharing fractions = k / ts_points")
    b.add_argument("--prune", dest="prune", action="store_true", default=True)
    b.add_argument("--no-prune", dest="prune", action="store_false")

    sub.add_parser("validate", parents=[common], help="closed forms vs simulation, pass/fail table")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_default_config:
        sys.stdout.write(default_config_json())
        return EXIT_OK
    if not args.command:
        parser.print_help()
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        cfg = with_overrides(cfg, seed=args.seed, trials=args.trials, workers=args.workers, output_dir=args.out)
        out = Writer(cfg, args.command, args.format, args.svg)
        code = COMMANDS[args.command](cfg, args, out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for path in out.written:
        print(path)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
