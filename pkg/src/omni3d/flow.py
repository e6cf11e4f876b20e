"""End-to-end implementation flow, clock-period sweep and architecture comparison.

Stages: clustering and flavor assignment, cluster-seeded placement, clock tree
synthesis, clock-buffer flavor repair, global routing, data-buffer flavor
repair, then timing/energy/area analysis.  Placement and routing are
wirelength-driven and do not depend on the target period, so a sweep
implements each seed once and evaluates every period on that layout.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .analysis.area import AreaReport, area_csv, area_report
from .analysis.energy import EnergyResult, energy, energy_csv
from .analysis.timing import TimingResult, delay_breakdown, net_parasitics, sta, timing_csv
from .celllib import CellLibrary, LibraryView, load_library_file
from .dtco import DATA_DIR, build_library, load_coefficients
from .fixtures import load_design, remap_complex_gates
from .layout.cts import ClockTree, cts
from .layout.floorplan import assign_port_sides, build_floorplan
from .layout.place import AnnealConfig, Placement, place
from .layout.route import RouteConfig, RoutingError, RoutingState, global_route, route_clock_unaware, wirelength_by_layer
from .layout.stack import LayerStack, load_stack
from .netlist import Flavor, Netlist, serialize_netlist, split_net_count
from .sideplan import (
    apply_assignment, assign_flavors, cluster_cells, flip_clock_buffers, flip_datapath_buffers,
    random_flavors,
)


class FlowError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class ConfigError(ValueError):
    pass


@dataclass
class FlowConfig:
    design: str = "adder16"
    arch: str = "Omni3D"
    library: Optional[str] = None
    skeleton: Optional[str] = None
    coefficients: Optional[str] = None
    stack: Optional[str] = None
    utilization: float = 0.85
    clock_start: float = 300.0
    clock_stop: float = 100.0
    clock_step: float = 20.0
    max_overflow: float = 300.0
    min_slack: float = -50.0
    max_skew: float = 10.0
    seeds: Tuple[int, ...] = (1,)
    report_dir: Optional[str] = None
    activity: float = 0.1
    clock_ratio: float = 10.0
    flavor_mode: str = "cluster"  # cluster | random | file
    ti_fraction: float = 0.5
    detour_beta: float = 2.0
    cts_fanout: int = 4
    max_route_level: int = 7
    gcell_sites: int = 10
    gcell_rows: int = 10
    pins_per_track: int = 4
    anneal_moves: float = 8.0
    anneal_temps: int = 30
    remap_complex: bool = False

    def validate(self) -> None:
        if self.clock_step <= 0:
            raise ConfigError("clock_step must be > 0")
        if self.clock_start < self.clock_stop:
            raise ConfigError("clock_start must be >= clock_stop (sweep runs from loose to tight)")
        for g in ("max_overflow", "min_slack", "max_skew"):
            if not math.isfinite(getattr(self, g)):
                raise ConfigError(f"{g} must be finite")
        if self.flavor_mode not in ("cluster", "random", "file"):
            raise ConfigError(f"unknown flavor_mode {self.flavor_mode!r}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")

    def periods(self) -> List[float]:
        n = int(math.floor((self.clock_start - self.clock_stop) / self.clock_step + 1e-9))
        return [self.clock_start - i * self.clock_step for i in range(n + 1)]


def parse_flow_config(text: str) -> FlowConfig:
    kinds = {f.name: f.type for f in fields(FlowConfig)}
    cfg = FlowConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in kinds:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        default = getattr(FlowConfig(), key)
        try:
            if key == "seeds":
                value = tuple(int(s) for s in val.replace(",", " ").split())
            elif isinstance(default, bool):
                value = val.lower() in ("1", "true", "yes", "on")
            elif isinstance(default, int):
                value = int(val)
            elif isinstance(default, float):
                value = float(val)
            else:
                value = val if val.lower() not in ("", "none") else None
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value for {key}: {val!r}") from None
        setattr(cfg, key, value)
    cfg.validate()
    return cfg


def load_flow_config(path) -> FlowConfig:
    cfg = parse_flow_config(Path(path).read_text())
    base = Path(path).resolve().parent
    for key in ("library", "skeleton", "coefficients", "stack"):
        v = getattr(cfg, key)
        if v and not Path(v).is_absolute() and (base / v).exists():
            setattr(cfg, key, str(base / v))
    if cfg.design and (base / cfg.design).exists():
        cfg.design = str(base / cfg.design)
    return cfg


# -- implementation -----------------------------------------------------------


@dataclass
class Implementation:
    config: FlowConfig
    seed: int
    netlist: Netlist
    view: LibraryView
    stack: LayerStack
    core_area: float
    routing: Optional[RoutingState]
    clock_tree: Optional[ClockTree]
    placement: Optional[Placement] = None
    flips_clock: int = 0
    flips_data: int = 0
    error: Optional[str] = None
    parasitics: dict = field(default_factory=dict)


@dataclass
class FlowRow:
    period: float
    seed: int
    achieved_delay: float
    avg_slack: float
    worst_slack: float
    energy: float
    edp: float
    overflow: float
    skew: float
    valid: bool
    core_area: float
    wirelength: float
    split_nets: int


@dataclass
class FlowResult:
    rows: List[FlowRow]
    best: Optional[FlowRow]
    implementations: Dict[int, Implementation] = field(default_factory=dict)


_LIB_CACHE: Dict[Tuple, CellLibrary] = {}


def load_flow_library(cfg: FlowConfig) -> CellLibrary:
    key = (cfg.library, cfg.skeleton, cfg.coefficients)
    if key not in _LIB_CACHE:
        if cfg.library:
            lib = load_library_file(cfg.library)
        elif cfg.skeleton or cfg.coefficients:
            coeff = load_coefficients(cfg.coefficients) if cfg.coefficients else None
            lib = build_library(coeff, cfg.skeleton)
        else:
            lib = load_library_file(DATA_DIR / "default.lib")
        _LIB_CACHE[key] = lib
    return _LIB_CACHE[key]


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (FlowError, RoutingError):
        raise
    except Exception as exc:  # tag and propagate
        raise FlowError(name, str(exc)) from exc


STOP_STAGES = ("place", "cts", None)


def implement(cfg: FlowConfig, seed: int, stop_after: Optional[str] = None) -> Implementation:
    """Run the physical stages; ``stop_after`` ('place' or 'cts') truncates the pipeline."""
    if stop_after not in STOP_STAGES:
        raise ConfigError(f"stop_after must be one of {STOP_STAGES}")
    lib = _stage("library", load_flow_library, cfg)
    view = _stage("library", lib.view, cfg.arch)
    stack = _stage("stack", load_stack, cfg.arch, cfg.stack)
    double = view.arch.double_sided
    netlist = _stage("design", load_design, cfg.design, lib.pin_specs())
    if cfg.remap_complex:
        netlist = remap_complex_gates(netlist)

    clusters = None
    if not double:
        netlist.set_flavors({c: Flavor.TI for c in netlist.cells})
    elif cfg.flavor_mode == "cluster":
        clusters = _stage("cluster", cluster_cells, netlist)
        _stage("assign", apply_assignment, netlist, assign_flavors(clusters, cfg.ti_fraction))
    elif cfg.flavor_mode == "random":
        netlist.set_flavors(random_flavors(netlist, seed, cfg.ti_fraction))
    elif any(c.flavor is Flavor.UNASSIGNED for c in netlist.cells.values()):
        raise FlowError("assign", "flavor_mode=file but the design has unassigned flavors")
    assign_port_sides(netlist, double)

    fp = _stage("floorplan", build_floorplan, netlist, view, cfg.utilization)
    anneal = AnnealConfig(moves_per_cell=cfg.anneal_moves, n_temps=cfg.anneal_temps)
    pl = _stage("place", place, netlist, fp, view, clusters, seed, anneal)
    impl = Implementation(cfg, seed, netlist, view, stack, fp.core_area, None, None, pl)
    if stop_after == "place":
        return impl
    impl.clock_tree = _stage("cts", cts, netlist, pl, view, seed, cfg.cts_fanout)
    if stop_after == "cts":
        return impl
    rcfg = RouteConfig(gcell_sites=cfg.gcell_sites, gcell_rows=cfg.gcell_rows,
                       max_level=cfg.max_route_level, pins_per_track=cfg.pins_per_track)
    try:
        if double:
            unaware = route_clock_unaware(netlist, pl, stack, seed, rcfg)
            impl.flips_clock = _stage("clock-flip", flip_clock_buffers, netlist, unaware)
        routing = global_route(netlist, pl, stack, seed, rcfg)
        if double:
            impl.flips_data = _stage("data-flip", flip_datapath_buffers, netlist, routing, cfg.detour_beta)
    except RoutingError as exc:
        impl.error = f"[route] {exc}"
        return impl
    impl.routing = routing
    impl.parasitics = _stage("extract", net_parasitics, netlist, routing, view)
    return impl


def evaluate(impl: Implementation, period: float) -> Tuple[FlowRow, Optional[TimingResult], Optional[EnergyResult]]:
    cfg = impl.config
    if impl.routing is None:
        row = FlowRow(period, impl.seed, math.nan, math.nan, math.nan, math.nan, math.nan, math.inf,
                      math.nan, False, impl.core_area, math.nan, 0)
        return row, None, None
    t = _stage("sta", sta, impl.netlist, impl.routing, impl.view, period, parasitics=impl.parasitics)
    e = _stage("energy", energy, impl.netlist, impl.routing, impl.view, period, cfg.activity,
               cfg.clock_ratio, parasitics=impl.parasitics)
    ov = impl.routing.overflow_total
    valid = ov <= cfg.max_overflow and t.avg_slack_top >= cfg.min_slack and t.clock_skew <= cfg.max_skew
    wl = sum(r.length_um for r in impl.routing.routes.values())
    row = FlowRow(period, impl.seed, t.achieved_delay, t.avg_slack_top, t.worst_slack, e.total,
                  e.total * t.achieved_delay, ov, t.clock_skew, valid, impl.core_area, wl,
                  split_net_count(impl.netlist, impl.view.arch.double_sided))
    return row, t, e


def run_flow(cfg: FlowConfig, period: Optional[float] = None, seed: Optional[int] = None) -> FlowResult:
    cfg.validate()
    seed = cfg.seeds[0] if seed is None else seed
    period = cfg.clock_start if period is None else period
    impl = implement(cfg, seed)
    row, t, e = evaluate(impl, period)
    result = FlowResult([row], row if row.valid else None, {seed: impl})
    if cfg.report_dir:
        write_reports(impl, t, e, Path(cfg.report_dir))
    return result


def select_min_edp(rows: Sequence[FlowRow]) -> Optional[FlowRow]:
    valid = [r for r in rows if r.valid]
    if not valid:
        return None
    return min(valid, key=lambda r: (r.edp, -r.period, r.seed))


def clock_sweep(cfg: FlowConfig) -> FlowResult:
    cfg.validate()
    rows, impls = [], {}
    for seed in cfg.seeds:
        impl = implement(cfg, seed)
        impls[seed] = impl
        for period in cfg.periods():
            rows.append(evaluate(impl, period)[0])
    result = FlowResult(rows, select_min_edp(rows), impls)
    if cfg.report_dir:
        out = Path(cfg.report_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.csv").write_text(sweep_csv(result))
        if result.best is not None:
            impl = impls[result.best.seed]
            _, t, e = evaluate(impl, result.best.period)
            write_reports(impl, t, e, out)
    return result


# -- comparison ---------------------------------------------------------------


@dataclass
class ArchSummary:
    arch: str
    best: Optional[FlowRow]
    core_area: float
    cell_counts: Dict[str, int]
    layers: Dict[str, str]
    edp_ratio: float = math.nan  # CFET / this; > 1 means better than CFET
    energy_ratio: float = math.nan
    delay_ratio: float = math.nan
    area_ratio: float = math.nan


def _layer_usage(stack: LayerStack, max_level: int) -> Dict[str, str]:
    out = {}
    for side, tag in (("top", "TM"), ("bottom", "BM")):
        mine = sorted((l for l in stack.layers if l.side == side), key=lambda l: l.level)
        sig = [l.name for l in mine if l.allow == "sig" and l.level <= max_level]
        pwr = [l.name for l in mine if l.allow == "pwr"]
        out[f"{tag}_signal"] = f"{sig[0]}-{sig[-1]}" if sig else "-"
        out[f"{tag}_power"] = f"{pwr[0]}-{pwr[-1]}" if len(pwr) > 1 else (pwr[0] if pwr else "-")
    return out


def compare_architectures(configs: Sequence[FlowConfig]) -> List[ArchSummary]:
    designs = {c.design for c in configs}
    if len(designs) != 1:
        raise ConfigError("compare_architectures needs the same design in every config")
    out = []
    for cfg in configs:
        res = clock_sweep(cfg)
        impl = next(iter(res.implementations.values()))
        counts: Dict[str, int] = {}
        for c in impl.netlist.cells.values():
            counts[c.master] = counts.get(c.master, 0) + 1
        out.append(ArchSummary(cfg.arch, res.best, impl.core_area, counts,
                               _layer_usage(impl.stack, cfg.max_route_level)))
    ref = next((s for s in out if s.arch == "CFET"), out[0])
    for s in out:
        s.area_ratio = ref.core_area / s.core_area
        if s.best is not None and ref.best is not None:
            s.edp_ratio = ref.best.edp / s.best.edp
            s.energy_ratio = ref.best.energy / s.best.energy
            s.delay_ratio = ref.best.achieved_delay / s.best.achieved_delay
    return out


# -- emitters -----------------------------------------------------------------


ROW_FIELDS = [f.name for f in fields(FlowRow)]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def sweep_csv(result: FlowResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROW_FIELDS + ["selected"])
    for r in result.rows:
        w.writerow([_fmt(getattr(r, f)) for f in ROW_FIELDS] + ["1" if r is result.best else "0"])
    return buf.getvalue()


def comparison_csv(summaries: Sequence[ArchSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    layer_keys = sorted({k for s in summaries for k in s.layers})
    w.writerow(["arch", "edp_ratio", "energy_ratio", "delay_ratio", "area_ratio", "core_area_nm2",
                "period_ps", "achieved_delay_ps", "energy_fj", "edp", "cells"] + layer_keys)
    for s in summaries:
        b = s.best
        w.writerow([s.arch, _fmt(s.edp_ratio), _fmt(s.energy_ratio), _fmt(s.delay_ratio), _fmt(s.area_ratio),
                    _fmt(s.core_area), _fmt(b.period if b else math.nan), _fmt(b.achieved_delay if b else math.nan),
                    _fmt(b.energy if b else math.nan), _fmt(b.edp if b else math.nan),
                    sum(s.cell_counts.values())] + [s.layers.get(k, "-") for k in layer_keys])
    return buf.getvalue()


def sweep_svg(result: FlowResult, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for seed in sorted({r.seed for r in result.rows}):
        rows = [r for r in result.rows if r.seed == seed]
        ok = [r for r in rows if r.valid]
        bad = [r for r in rows if not r.valid and math.isfinite(r.edp)]
        ax.plot([r.period for r in ok], [r.edp for r in ok], "o-", label=f"seed {seed}")
        ax.plot([r.period for r in bad], [r.edp for r in bad], "o", mfc="none", color="gray")
    if result.best is not None:
        ax.plot([result.best.period], [result.best.edp], "*", ms=14, color="red", label="min EDP")
    ax.set_xlabel("target clock period (ps)")
    ax.set_ylabel("EDP (fJ·ps)")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def write_reports(impl: Implementation, t: Optional[TimingResult], e: Optional[EnergyResult], out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "netlist.net").write_text(serialize_netlist(impl.netlist))
    (out / "area.csv").write_text(area_csv(area_report(impl.netlist, impl.view)))
    if impl.routing is not None:
        (out / "routing.txt").write_text(impl.routing.dumps())
        wl = wirelength_by_layer(impl.routing)
        (out / "wirelength.json").write_text(json.dumps(wl, indent=1, sort_keys=True))
    if t is not None:
        (out / "timing.csv").write_text(timing_csv(t))
        (out / "delay_breakdown.json").write_text(json.dumps(delay_breakdown(t), indent=1, sort_keys=True))
    if e is not None:
        (out / "energy.csv").write_text(energy_csv(e))
