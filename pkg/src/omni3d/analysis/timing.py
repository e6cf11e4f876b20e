"""Static timing: linear cell delay, Elmore wire delay on routed trees, top-k path statistics.

Units: resistance in kΩ for cells and Ω for wires, capacitance in fF, time in
ps (kΩ·fF = ps, Ω·fF = 1e-3 ps).
"""

from __future__ import annotations

import csv
import io
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from ..celllib import CellMaster, LibraryView
from ..netlist import Netlist, PinRef


class TimingError(ValueError):
    pass


def cell_delay(master: CellMaster, c_load: float) -> float:
    return master.intrinsic_delay + master.r_drive * c_load


def elmore_delays(parent: Sequence[int], r_ohm: Sequence[float], c_ff: Sequence[float]) -> List[float]:
    """Elmore delay (ps) at every node of an RC tree.

    ``parent[i]`` is the parent of node i (-1 for the root), ``r_ohm[i]`` the
    resistance of the edge into node i and ``c_ff[i]`` the grounded
    capacitance at node i.
    """
    n = len(parent)
    children: List[List[int]] = [[] for _ in range(n)]
    roots = []
    for i, p in enumerate(parent):
        if p < 0:
            roots.append(i)
        else:
            children[p].append(i)
    order = []
    queue = deque(roots)
    while queue:
        i = queue.popleft()
        order.append(i)
        queue.extend(children[i])
    if len(order) != n:
        raise TimingError("RC network is not a tree")
    down = list(c_ff)
    for i in reversed(order):
        if parent[i] >= 0:
            down[parent[i]] += down[i]
    delay = [0.0] * n
    for i in order:
        if parent[i] >= 0:
            delay[i] = delay[parent[i]] + r_ohm[i] * down[i] / 1000.0
    return delay


# -- net parasitics -----------------------------------------------------------


@dataclass
class NetParasitics:
    wire_cap: float = 0.0  # fF, all physical nets of the logical net
    pin_cap: float = 0.0  # fF, load pins only
    wire_delay: Dict[PinRef, float] = field(default_factory=dict)  # ps per load pin


def _master(netlist: Netlist, view: LibraryView, cell_id: str) -> CellMaster:
    c = netlist.cells[cell_id]
    return view.master(c.master, c.flavor)


def load_pin_cap(netlist: Netlist, view: LibraryView, ref: PinRef) -> float:
    if ref.is_port:
        return 0.0
    return _master(netlist, view, ref.owner).pin_cap(ref.pin)


def route_rc(routing, route, netlist: Netlist, view: LibraryView) -> Tuple[float, Dict[PinRef, float]]:
    """Wire cap and per-load Elmore delay for one routed physical net."""
    stack = routing.stack
    coupling = stack.params.get("coupling_k", 0.0)
    adj: Dict[Tuple[int, int], List[Tuple[Tuple[int, int], float, float]]] = {}
    wire_cap = 0.0
    for li, x, y, d in sorted(route.edges):
        layer = routing.layers[li]
        length = routing.edge_length_um(d)
        r = layer.r_per_um * length
        c = stack.c_per_um(layer) * length * (1.0 + coupling * routing.density(li, x, y, d))
        wire_cap += c
        a = (x, y)
        b = (x + 1, y) if d == "H" else (x, y + 1)
        adj.setdefault(a, []).append((b, r, c))
        adj.setdefault(b, []).append((a, r, c))
    root = route.driver
    index = {root: 0}
    parent = [-1]
    res = [0.0]
    cap = [0.0]
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v, r, c in sorted(adj.get(u, [])):
            if v in index:
                continue
            index[v] = len(parent)
            parent.append(index[u])
            res.append(r)
            cap.append(0.0)
            queue.append(v)
    # every wire piece loads both of its end nodes, including pieces that
    # close a loop and so carry no tree resistance
    for u, lst in adj.items():
        for v, r, c in lst:
            cap[index[u]] += c / 2
    loads = [p for p in route.pin_cells if p != netlist.nets[route.logical].driver]
    for p in loads:
        node = index.get(route.pin_cells[p], 0)
        cap[node] += load_pin_cap(netlist, view, p)
    delays = elmore_delays(parent, res, cap)
    return wire_cap, {p: delays[index.get(route.pin_cells[p], 0)] for p in loads}


def net_parasitics(netlist: Netlist, routing, view: LibraryView) -> Dict[str, NetParasitics]:
    out: Dict[str, NetParasitics] = {}
    for nid, net in netlist.nets.items():
        if net.kind == "power":
            continue
        np_ = NetParasitics()
        np_.pin_cap = sum(load_pin_cap(netlist, view, p) for p in net.loads)
        keys = routing.by_logical.get(nid, []) if routing is not None else []
        for key in keys:
            wc, wd = route_rc(routing, routing.routes[key], netlist, view)
            np_.wire_cap += wc
            np_.wire_delay.update(wd)
        for p in net.loads:
            np_.wire_delay.setdefault(p, 0.0)
        out[nid] = np_
    return out


# -- STA ----------------------------------------------------------------------


@dataclass
class PathReport:
    endpoint: str
    startpoint: str
    arrival: float
    required: float
    slack: float
    cell: float
    wire: float
    setup: float
    skew: float
    stages: List[str]


@dataclass
class TimingResult:
    period: float
    arrival: Dict[str, float]
    required: Dict[str, float]
    slack: Dict[str, float]
    paths: List[PathReport]
    avg_slack_top: float
    worst_slack: float
    clock_skew: float
    insertion: Dict[str, float]

    @property
    def achieved_delay(self) -> float:
        return self.period - self.avg_slack_top


def _topo_cells(netlist: Netlist) -> List[str]:
    """Cells ordered so every combinational (and clock) fan-in precedes its load."""
    indeg = {c: 0 for c in netlist.cells}
    succ: Dict[str, List[str]] = {c: [] for c in netlist.cells}
    for net in netlist.nets.values():
        if net.kind == "power" or net.driver.is_port:
            continue
        for ld in net.loads:
            if ld.is_port:
                continue
            cell = netlist.cells[ld.owner]
            m = netlist.masters[cell.master]
            if cell.is_sequential and ld.pin != m.clock_pin:
                continue
            succ[net.driver.owner].append(ld.owner)
            indeg[ld.owner] += 1
    ready = sorted(c for c, d in indeg.items() if d == 0)
    order = []
    queue = deque(ready)
    while queue:
        c = queue.popleft()
        order.append(c)
        for s in succ[c]:
            indeg[s] -= 1
            if indeg[s] == 0:
                queue.append(s)
    if len(order) != len(netlist.cells):
        raise TimingError("combinational loop")
    return order


def sta(netlist: Netlist, routing, view: LibraryView, period: float, k: int = 100,
        parasitics: Optional[Dict[str, NetParasitics]] = None) -> TimingResult:
    par = parasitics if parasitics is not None else net_parasitics(netlist, routing, view)
    pin_arr: Dict[PinRef, float] = {}
    out_arr: Dict[str, float] = {}  # logical net -> arrival at driver output
    cell_d: Dict[str, Tuple[float, float]] = {}  # cell -> (stage delay, share due to wire cap)
    pred: Dict[str, Optional[PinRef]] = {}

    def drive(nid: str, t: float) -> None:
        out_arr[nid] = t
        for p, wd in par[nid].wire_delay.items():
            pin_arr[p] = t + wd

    for nid, net in sorted(netlist.nets.items()):
        if net.kind != "power" and net.driver.is_port:
            drive(nid, 0.0)

    for cid in _topo_cells(netlist):
        cell = netlist.cells[cid]
        m = _master(netlist, view, cid)
        outs = netlist.fanout_nets(cid)
        if not outs:
            continue
        if cell.is_sequential:
            ins = [PinRef(cid, m.clock_pin)]
        else:
            ins = [PinRef(cid, p) for p in m.input_pins]
        best, t_in = None, 0.0
        for p in ins:
            t = pin_arr.get(p)
            if t is not None and (best is None or t > t_in):
                best, t_in = p, t
        pred[cid] = best
        for net in outs:
            c_load = par[net.id].wire_cap + par[net.id].pin_cap
            d = cell_delay(m, c_load)
            cell_d[cid] = (d, m.r_drive * par[net.id].wire_cap)
            drive(net.id, t_in + d)

    insertion = {}
    for cid, cell in netlist.cells.items():
        if cell.is_sequential:
            m = netlist.masters[cell.master]
            insertion[cid] = pin_arr.get(PinRef(cid, m.clock_pin), 0.0)

    endpoints: List[Tuple[str, PinRef, float, float, float]] = []  # name, pin, required, setup, capture ins
    for cid in sorted(netlist.cells):
        cell = netlist.cells[cid]
        if not cell.is_sequential:
            continue
        m = _master(netlist, view, cid)
        for pin in m.input_pins:
            if pin == m.clock_pin:
                continue
            ref = PinRef(cid, pin)
            if ref in pin_arr:
                endpoints.append((str(ref), ref, period + insertion[cid] - m.setup, m.setup, insertion[cid]))
    for name in sorted(netlist.ports):
        if netlist.ports[name].direction != "out":
            continue
        ref = PinRef(name)
        nid = netlist.net_of(ref)
        if nid is not None and netlist.nets[nid].kind != "clock" and ref in pin_arr:
            endpoints.append((name, ref, period, 0.0, 0.0))

    arrival, required, slack = {}, {}, {}
    reports = []
    for name, ref, req, setup, cap_ins in endpoints:
        arrival[name] = pin_arr[ref]
        required[name] = req
        slack[name] = req - pin_arr[ref]
        reports.append((slack[name], name, ref, req, setup, cap_ins))
    reports.sort(key=lambda t: (t[0], t[1]))
    paths = [_trace(netlist, par, pin_arr, cell_d, pred, insertion, *r[1:])
             for r in reports[:k]]
    top = paths
    avg = sum(p.slack for p in top) / len(top) if top else period
    sinks = set()
    for p in top:
        for pt in (p.startpoint, p.endpoint.split(".")[0]):
            if pt in insertion:
                sinks.add(pt)
    ins_vals = [insertion[s] for s in sinks]
    skew = max(ins_vals) - min(ins_vals) if ins_vals else 0.0
    worst = reports[0][0] if reports else period
    return TimingResult(period, arrival, required, slack, paths, avg, worst, skew, insertion)


def _trace(netlist, par, pin_arr, cell_d, pred, insertion, name, ref, req, setup, cap_ins) -> PathReport:
    cell_sum = wire_sum = 0.0
    stages = [str(ref)]
    launch = 0.0
    start = ref.owner
    pin = ref
    for _ in range(len(netlist.cells) + 1):
        nid = netlist.net_of(pin)
        net = netlist.nets[nid]
        wire_sum += par[nid].wire_delay.get(pin, 0.0)
        drv = net.driver
        if drv.is_port:
            start = drv.owner
            stages.append(drv.owner)
            break
        cid = drv.owner
        d, d_wire = cell_d[cid]
        cell_sum += d - d_wire
        wire_sum += d_wire
        stages.append(cid)
        if netlist.cells[cid].is_sequential:
            start = cid
            launch = insertion.get(cid, 0.0)
            break
        pin = pred.get(cid)
        if pin is None:
            start = cid
            break
    arrival = pin_arr[ref]
    return PathReport(name, start, arrival, req, req - arrival, cell_sum, wire_sum, setup,
                      launch - cap_ins, stages[::-1])


def delay_breakdown(result: TimingResult) -> Dict[str, float]:
    """Average share of cell, wire, setup and skew in the reported paths."""
    if not result.paths:
        return {"cell": 0.0, "wire": 0.0, "setup": 0.0, "skew": 0.0}
    n = len(result.paths)
    parts = {
        "cell": sum(p.cell for p in result.paths) / n,
        "wire": sum(p.wire for p in result.paths) / n,
        "setup": sum(p.setup for p in result.paths) / n,
        "skew": sum(p.skew for p in result.paths) / n,
    }
    total = sum(parts.values())
    return {k: (v / total if total else 0.0) for k, v in parts.items()}


def timing_csv(result: TimingResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["endpoint", "startpoint", "arrival_ps", "required_ps", "slack_ps", "cell_ps", "wire_ps", "setup_ps", "skew_ps"])
    for p in result.paths:
        w.writerow([p.endpoint, p.startpoint] + [f"{v:.4f}" for v in (p.arrival, p.required, p.slack, p.cell, p.wire, p.setup, p.skew)])
    return buf.getvalue()
