"""Command-line entry point: ``omni3d <group> <action> [--config F] [--seed N] [--out DIR] [--svg]``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from . import dtco
from .flow import (
    ConfigError, FlowConfig, FlowError, clock_sweep, compare_architectures, comparison_csv, evaluate,
    implement, load_flow_config, load_flow_library, sweep_csv, sweep_svg, write_reports,
)
from .layout.route import RoutingError, congestion_svg, wirelength_csv
from .netlist import serialize_netlist
from .sideplan import apply_assignment, assign_flavors, balance_report, cluster_cells
from .fixtures import load_design

ACTIONS = {
    "dtco": ("sweep", "pareto", "variants"),
    "sideplan": ("cluster", "assign", "report"),
    "pnr": ("place", "cts", "route"),
    "flow": ("run", "sweep", "compare"),
    "report": ("emit",),
}


def _config(args) -> FlowConfig:
    cfg = load_flow_config(args.config) if args.config else FlowConfig()
    if args.seed is not None:
        cfg = replace(cfg, seeds=(args.seed,))
    if args.arch:
        cfg = replace(cfg, arch=args.arch)
    if args.design:
        cfg = replace(cfg, design=args.design)
    return cfg


def _write(out: Path, name: str, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)
    print(out / name)


def _dtco(action: str, cfg: FlowConfig, out: Path, svg: bool) -> None:
    coeff = dtco.load_coefficients(cfg.coefficients)
    archs = ["CFET", "Omni3D"]
    if action == "sweep":
        pts = [m for a in archs for m in dtco.sweep(a, coeff)]
        _write(out, "dtco_sweep.csv", dtco.sweep_csv(pts))
    elif action == "pareto":
        series = {a: dtco.sweep(a, coeff) for a in archs}
        front = [m for a in archs for m in dtco.pareto_frontier(series[a])]
        _write(out, "dtco_pareto.csv", dtco.sweep_csv(front))
        best = {a: dtco.min_edp(series[a]).params for a in archs}
        _write(out, "dtco_min_edp.json", json.dumps(
            {a: {"lg": p.lg, "sp_gs": p.sp_gs, "n_sheets": p.n_sheets, "vdd": p.vdd} for a, p in best.items()},
            indent=1))
        if svg:
            dtco.plot_pareto_svg(series, out / "dtco_pareto.svg")
    else:
        base = dtco.min_edp_point("Omni3D", coeff).params
        var = dtco.variant_metrics(base, coeff)
        _write(out, "dtco_variants.csv", dtco.sweep_csv(var.values()))


def _sideplan(action: str, cfg: FlowConfig, out: Path) -> None:
    lib = load_flow_library(cfg)
    nl = load_design(cfg.design, lib.pin_specs())
    clusters = cluster_cells(nl)
    if action == "cluster":
        _write(out, "clusters.json", json.dumps({c.id: sorted(c.members) for c in clusters}, indent=1))
        return
    apply_assignment(nl, assign_flavors(clusters, cfg.ti_fraction))
    if action == "assign":
        _write(out, "assigned.net", serialize_netlist(nl))
    else:
        _write(out, "balance.json", json.dumps(balance_report(nl, clusters), indent=1, sort_keys=True))


def _pnr(action: str, cfg: FlowConfig, out: Path, svg: bool) -> None:
    seed = cfg.seeds[0]
    impl = implement(cfg, seed, stop_after=None if action == "route" else action)
    _write(out, "placement.txt", impl.placement.dumps())
    if action == "place":
        return
    tree = impl.clock_tree
    _write(out, "cts.json", json.dumps({"levels": tree.levels, "skew_ps": tree.skew,
                                        "insertion_ps": tree.insertion}, indent=1, sort_keys=True))
    if action == "cts":
        return
    if impl.routing is None:
        raise RoutingError(impl.error)
    _write(out, "routing.txt", impl.routing.dumps())
    _write(out, "wirelength.csv", wirelength_csv(impl.routing))
    if svg:
        congestion_svg(impl.routing, out / "congestion.svg")


def _flow(action: str, cfg: FlowConfig, out: Path, svg: bool, archs: List[str]) -> None:
    if action == "run":
        impl = implement(cfg, cfg.seeds[0])
        row, t, e = evaluate(impl, cfg.clock_start)
        write_reports(impl, t, e, out)
        _write(out, "row.json", json.dumps(row.__dict__, indent=1))
    elif action == "sweep":
        res = clock_sweep(replace(cfg, report_dir=str(out)))
        _write(out, "sweep.csv", sweep_csv(res))
        if svg:
            sweep_svg(res, out / "sweep.svg")
        if res.best is None:
            print("no valid row", file=sys.stderr)
    else:
        summaries = compare_architectures([replace(cfg, arch=a) for a in archs])
        _write(out, "compare.csv", comparison_csv(summaries))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="omni3d", description="Double-sided CFET design-technology exploration flow")
    sub = p.add_subparsers(dest="group", required=True)
    for group, actions in ACTIONS.items():
        g = sub.add_parser(group)
        g.add_argument("action", choices=actions)
        g.add_argument("--config", help="key=value flow configuration file")
        g.add_argument("--seed", type=int)
        g.add_argument("--out", default="out", help="output directory")
        g.add_argument("--svg", action="store_true", help="also emit SVG figures")
        g.add_argument("--arch", help="override the configured architecture")
        g.add_argument("--design", help="override the configured design")
        if group == "flow":
            g.add_argument("--archs", default="CFET,Omni3D", help="architectures for 'compare'")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        cfg = _config(args)
        if args.group == "dtco":
            _dtco(args.action, cfg, out, args.svg)
        elif args.group == "sideplan":
            _sideplan(args.action, cfg, out)
        elif args.group == "pnr":
            _pnr(args.action, cfg, out, args.svg)
        elif args.group == "flow":
            _flow(args.action, cfg, out, args.svg, [a.strip() for a in args.archs.split(",")])
        else:
            impl = implement(cfg, cfg.seeds[0])
            _, t, e = evaluate(impl, cfg.clock_start)
            write_reports(impl, t, e, out)
            if args.svg and impl.routing is not None:
                congestion_svg(impl.routing, out / "congestion.svg")
            print(out)
    except (FlowError, ConfigError, RoutingError, OSError, ValueError) as exc:
        print(f"omni3d: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
