"""Clock tree synthesis by recursive geometric bisection of the sink set.

Buffer flavors are drawn at random, the way a flavor-agnostic CTS engine
would leave them; :func:`omni3d.sideplan.flip_clock_buffers` repairs them.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from ..analysis.timing import cell_delay
from ..celllib import LibraryView
from ..netlist import Flavor, Netlist, PinRef
from .place import Placement

# Star-wire estimate used before routing: lowest signal layer RC.
DEFAULT_R_PER_UM = 800.0  # ohm/um
DEFAULT_C_PER_UM = 0.2  # fF/um


class CTSError(ValueError):
    pass


@dataclass
class ClockTree:
    levels: List[List[str]] = field(default_factory=list)  # buffer ids, root level first
    sinks: List[PinRef] = field(default_factory=list)
    insertion: Dict[str, float] = field(default_factory=dict)  # sink cell -> ps

    @property
    def buffers(self) -> List[str]:
        return [b for lvl in self.levels for b in lvl]

    @property
    def skew(self) -> float:
        if not self.insertion:
            return 0.0
        return max(self.insertion.values()) - min(self.insertion.values())


@dataclass
class _Node:
    buffer: Optional[str]
    xy: Tuple[float, float]
    children: List["_Node"]
    pin: Optional[PinRef] = None  # leaf sink pin


def _clock_buffer_master(netlist: Netlist) -> str:
    for name in sorted(netlist.masters):
        if netlist.masters[name].is_clock_buffer:
            return name
    raise CTSError("no clock buffer master in library")


def cts(netlist: Netlist, placement: Placement, view: LibraryView, seed: int = 0,
        max_fanout: int = 4, r_per_um: float = DEFAULT_R_PER_UM,
        c_per_um: float = DEFAULT_C_PER_UM) -> ClockTree:
    """Insert a buffer tree under every clock net; mutates netlist and placement.

    A sink group larger than ``max_fanout`` is split at the median of its
    longer bounding-box side, and each half gets a buffer at its centroid.
    """
    rng = random.Random(seed)
    tree = ClockTree()
    buf_master = None
    counter = 0
    for nid in sorted(n for n, net in netlist.nets.items() if net.kind == "clock"):
        net = netlist.nets[nid]
        sinks = [p for p in net.loads if not p.is_port]
        tree.sinks.extend(sinks)
        if len(sinks) <= max_fanout:
            continue
        if buf_master is None:
            buf_master = _clock_buffer_master(netlist)
        width = view.master(buf_master).width_gp
        driver = net.driver
        extra = [p for p in net.loads if p.is_port]
        netlist.remove_net(nid)
        levels: Dict[int, List[str]] = {}

        def build(group: List[PinRef], depth: int) -> List[_Node]:
            nonlocal counter
            if len(group) <= max_fanout:
                return [_Node(None, placement.pin_xy(p), [], p) for p in group]
            xs = [placement.pin_xy(p)[0] for p in group]
            ys = [placement.pin_xy(p)[1] for p in group]
            axis = 0 if (max(xs) - min(xs)) >= (max(ys) - min(ys)) else 1
            ordered = sorted(group, key=lambda p: (placement.pin_xy(p)[axis], placement.pin_xy(p)[1 - axis], p))
            half = len(ordered) // 2
            out = []
            for part in (ordered[:half], ordered[half:]):
                pts = [placement.pin_xy(p) for p in part]
                cx = sum(p[0] for p in pts) / len(pts)
                cy = sum(p[1] for p in pts) / len(pts)
                name = f"cts_{nid}_{counter}"
                counter += 1
                flavor = rng.choice((Flavor.TI, Flavor.BI))
                netlist.add_cell(name, buf_master, flavor)
                placement.add_cell(name, width, cx, cy)
                levels.setdefault(depth, []).append(name)
                out.append(_Node(name, placement.center(name), build(part, depth + 1)))
            return out

        top = build(sinks, 0)
        m = netlist.masters[buf_master]

        def connect(src: PinRef, children: List[_Node], name: str) -> None:
            loads = [c.pin if c.buffer is None else PinRef(c.buffer, m.inputs[0]) for c in children]
            netlist.add_net(name, src, loads, kind="clock")
            for c in children:
                if c.buffer is not None:
                    connect(PinRef(c.buffer, m.outputs[0]), c.children, f"{nid}_{c.buffer}")

        netlist.add_net(nid, driver, [PinRef(c.buffer, m.inputs[0]) for c in top] + extra, kind="clock")
        for c in top:
            connect(PinRef(c.buffer, m.outputs[0]), c.children, f"{nid}_{c.buffer}")
        for depth in sorted(levels):
            while len(tree.levels) <= depth:
                tree.levels.append([])
            tree.levels[depth].extend(levels[depth])
    tree.insertion = estimate_insertion(netlist, placement, view, r_per_um, c_per_um)
    return tree


def estimate_insertion(netlist: Netlist, placement: Placement, view: LibraryView,
                       r_per_um: float = DEFAULT_R_PER_UM, c_per_um: float = DEFAULT_C_PER_UM) -> Dict[str, float]:
    """Pre-route clock arrival at every sequential cell, using star wires."""
    arrival: Dict[PinRef, float] = {}
    clock_nets = {nid: net for nid, net in netlist.nets.items() if net.kind == "clock"}
    by_driver = {net.driver: nid for nid, net in clock_nets.items()}

    def walk(nid: str, t0: float) -> None:
        net = clock_nets[nid]
        src = placement.pin_xy(net.driver)
        dists, caps = [], []
        for p in net.loads:
            xy = placement.pin_xy(p)
            dists.append((abs(xy[0] - src[0]) + abs(xy[1] - src[1])) / 1000.0)
            if p.is_port:
                caps.append(0.0)
            else:
                c = netlist.cells[p.owner]
                caps.append(view.master(c.master, c.flavor).pin_cap(p.pin))
        c_total = sum(c_per_um * d for d in dists) + sum(caps)
        t_drv = t0
        if not net.driver.is_port:
            c = netlist.cells[net.driver.owner]
            t_drv += cell_delay(view.master(c.master, c.flavor), c_total)
        for p, d, cp in zip(net.loads, dists, caps):
            wire = r_per_um * d * (c_per_um * d / 2 + cp) / 1000.0
            arrival[p] = t_drv + wire
            if not p.is_port:
                cell = netlist.cells[p.owner]
                if cell.is_clock_buffer:
                    out = PinRef(p.owner, netlist.masters[cell.master].outputs[0])
                    if out in by_driver:
                        walk(by_driver[out], arrival[p])

    for nid, net in sorted(clock_nets.items()):
        if net.driver.is_port or not netlist.cells[net.driver.owner].is_clock_buffer:
            walk(nid, 0.0)
    out = {}
    for cid, cell in netlist.cells.items():
        if cell.is_sequential:
            ck = PinRef(cid, netlist.masters[cell.master].clock_pin)
            if ck in arrival:
                out[cid] = arrival[ck]
    return out
