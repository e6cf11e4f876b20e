"""Top/bottom side planning for double-side routed netlists.

Cells whose input pins hang off a common net are "siblings": placing them on
different sides would split that net across both metal stacks.  Sibling sets
are closed transitively into clusters, clusters receive a TI or BI flavor with
a balanced split, and two post-layout passes fix buffers the clock tree
synthesis or the router left on an unfortunate side.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

from .netlist import (
    Flavor, Netlist, NetlistError, fanin_nets, fanout_cells,
    split_net_count,
)


@dataclass
class Cluster:
    id: int
    members: List[str]

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass
class FlavorAssignment:
    cluster_flavor: Dict[int, Flavor]
    cell_flavor: Dict[str, Flavor]
    n_ti: int
    n_bi: int


def sibling_cells(netlist: Netlist, cell: str, include_clock: bool = False) -> List[str]:
    """Fan-out cells of the fan-in nets of ``cell`` (the cell itself included)."""
    sibs: List[str] = []
    for net in fanin_nets(netlist, cell, include_clock=include_clock):
        sibs.extend(c.id for c in fanout_cells(netlist, net.id))
    return sibs


def cluster_cells(netlist: Netlist, cells: Optional[Iterable[str]] = None,
                  include_clock: bool = False) -> List[Cluster]:
    """Group cells by the transitive sibling relation.

    Depth-first expansion from each unclustered cell, with an explicit stack
    instead of recursion.  Clock nets are ignored unless ``include_clock``.
    Cluster ids follow the order of each cluster's smallest member id, so the
    result does not depend on the iteration order of ``cells``.
    """
    order = sorted(netlist.cells) if cells is None else list(cells)
    allowed = set(order)
    owner: Dict[str, int] = {}
    groups: List[List[str]] = []
    for start in order:
        if start in owner:
            continue
        gid = len(groups)
        members: List[str] = []
        stack = [start]
        while stack:
            cell = stack.pop()
            if cell in owner or cell not in allowed:
                continue
            owner[cell] = gid
            members.append(cell)
            # reversed so the first sibling is expanded first, as in the recursive form
            for sib in reversed(sibling_cells(netlist, cell, include_clock)):
                if sib not in owner:
                    stack.append(sib)
        groups.append(members)
    canon = sorted((sorted(g) for g in groups if g), key=lambda g: g[0])
    return [Cluster(i, g) for i, g in enumerate(canon)]


def assign_flavors(clusters: Sequence[Cluster], ti_fraction: float = 0.5) -> FlavorAssignment:
    """Alternate TI/BI over clusters by descending size until TI passes the target share.

    With the default ``ti_fraction`` of one half this is the even-ratio rule;
    other fractions produce deliberately skewed (but still cluster-closed)
    assignments.
    """
    if not clusters:
        raise ValueError("assign_flavors needs at least one cluster")
    if not 0.0 < ti_fraction <= 1.0:
        raise ValueError("ti_fraction must be in (0, 1]")
    total = sum(c.size for c in clusters)
    order = sorted(clusters, key=lambda c: (-c.size, c.id))
    cluster_flavor: Dict[int, Flavor] = {}
    n_ti = 0
    stopped = False
    next_flavor = Flavor.TI
    for c in order:
        if stopped:
            fl = Flavor.BI
        else:
            fl = next_flavor
            next_flavor = next_flavor.flipped()
            if fl is Flavor.TI:
                n_ti += c.size
                if n_ti > ti_fraction * total:
                    stopped = True
        cluster_flavor[c.id] = fl
    cell_flavor = {m: cluster_flavor[c.id] for c in clusters for m in c.members}
    return FlavorAssignment(cluster_flavor, cell_flavor, n_ti, total - n_ti)


def random_flavors(netlist: Netlist, seed: int, ti_fraction: float = 0.5) -> Dict[str, Flavor]:
    """Cluster-unaware flavors, as a flavor-agnostic synthesis flow would leave them."""
    rng = random.Random(seed)
    return {c: (Flavor.TI if rng.random() < ti_fraction else Flavor.BI) for c in sorted(netlist.cells)}


def balance_report(netlist: Netlist, clusters: Optional[Sequence[Cluster]] = None,
                   double_sided: bool = True) -> dict:
    flavors = [c.flavor for c in netlist.cells.values()]
    if any(f is Flavor.UNASSIGNED for f in flavors):
        raise NetlistError("balance_report needs every flavor assigned")
    n_ti = sum(1 for f in flavors if f is Flavor.TI)
    n_bi = len(flavors) - n_ti
    sizes = sorted((c.size for c in clusters), reverse=True) if clusters is not None else []
    return {
        "n_ti": n_ti,
        "n_bi": n_bi,
        "ratio": f"{n_ti}:{n_bi}",
        "clusters": sizes,
        "cluster_histogram": {str(k): v for k, v in sorted(Counter(sizes).items())},
        "split_nets": split_net_count(netlist, double_sided) if netlist.nets else 0,
    }


def apply_assignment(netlist: Netlist, assignment: FlavorAssignment) -> None:
    netlist.set_flavors(assignment.cell_flavor)


# -- post-layout flavor repair ----------------------------------------------


def buffers_with_m8_fanin(netlist: Netlist, routing) -> List[str]:
    """Clock buffers whose fan-in net reaches them through the I/O layer."""
    hits = set()
    for seg in routing.m8_segments:
        if seg.kind != "clock" or seg.pin is None or seg.pin.is_port:
            continue
        cell = netlist.cells.get(seg.pin.owner)
        if cell is not None and cell.is_clock_buffer:
            hits.add(cell.id)
    return sorted(hits)


def flip_clock_buffers(netlist: Netlist, routing, max_rounds: int = 64) -> int:
    """Invert clock buffers whose fan-in net uses M8; repeat until none do.

    ``routing`` must expose ``m8_segments`` and ``reroute_clock()`` (see
    :class:`omni3d.layout.route.RoutingState`).  Flipping a buffer can expose
    its children, so the pass iterates to a fixpoint.
    """
    flips = 0
    for _ in range(max_rounds):
        offenders = buffers_with_m8_fanin(netlist, routing)
        if not offenders:
            return flips
        for cid in offenders:
            cell = netlist.cells[cid]
            cell.flavor = cell.flavor.flipped()
        flips += len(offenders)
        routing.reroute_clock()
    raise RuntimeError("clock buffer flipping did not converge")


def _is_datapath_buffer(netlist: Netlist, cell_id: str) -> bool:
    cell = netlist.cells[cell_id]
    if cell.is_clock_buffer or cell.is_sequential:
        return False
    m = netlist.masters[cell.master]
    return m.name.startswith(("BUF", "INV")) and len(m.inputs) == 1


def flip_datapath_buffers(netlist: Netlist, routing, beta: float = 2.0, max_passes: int = 3) -> int:
    """Flip single-input buffers/inverters whose fan-in net is detoured.

    A fan-in net counts as detoured when its total routed length exceeds
    ``beta`` times its half-perimeter wirelength.  The flip is kept only if a
    trial reroute shortens that net and does not split it further.
    """
    if beta <= 1.0:
        raise ValueError("detour threshold beta must be > 1")
    flips = 0
    for _ in range(max_passes):
        changed = 0
        for cid in sorted(netlist.cells):
            if not _is_datapath_buffer(netlist, cid):
                continue
            nets = fanin_nets(netlist, cid, include_clock=False)
            if len(nets) != 1:
                continue
            net = nets[0]
            length = routing.logical_length(net.id)
            hpwl = routing.logical_hpwl(net.id)
            if hpwl <= 0 or length <= beta * hpwl:
                continue
            before_split = routing.physical_count(net.id)
            cell = netlist.cells[cid]
            cell.flavor = cell.flavor.flipped()
            trial = routing.trial_reroute(net.id)
            if trial.length < length and trial.physical_count <= before_split:
                routing.commit_trial(trial)
                changed += 1
            else:
                cell.flavor = cell.flavor.flipped()
                routing.discard_trial(trial)
        flips += changed
        if not changed:
            break
    return flips
