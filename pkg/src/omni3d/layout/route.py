"""Gcell global routing on a dual metal stack.

Each physical net is routed on the stack of its side.  Nets are decomposed
into two-pin connections along a rectilinear spanning tree; each connection
takes the cheapest L- or Z-shaped pattern over the aggregated (per side and
direction) gcell capacity, falling back to a maze search when every pattern
crosses a full gcell.  Straight runs are then assigned to concrete layers by
direction, preferring upper layers for longer nets.  Overfull gcells trigger
rip-up-and-reroute passes that keep a reroute only if total overflow does not
grow.

M8 never carries signal or clock wires; it only records block-port stubs
(``io``) and, in the flavor-unaware clock model, the crossings a clock net
would need (``clock``).
"""

from __future__ import annotations

import csv
import hashlib
import heapq
import io
import math
import random
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

from ..netlist import Netlist, PhysicalNet, PinRef, derive_physical_nets
from .place import Placement
from .stack import LayerStack

Edge2 = Tuple[int, int, str]  # (x, y, dir): H joins (x,y)-(x+1,y), V joins (x,y)-(x,y+1)
Edge3 = Tuple[int, int, int, str]  # (layer index, x, y, dir)


class RoutingError(ValueError):
    pass


@dataclass
class RouteConfig:
    gcell_sites: int = 10
    gcell_rows: int = 10
    max_level: int = 7
    pins_per_track: int = 4
    rrr_iters: int = 6
    overflow_penalty: float = 8.0
    history_step: float = 1.0
    maze_margin: int = 4
    z_candidates: int = 4
    layer_span: Tuple[int, ...] = (4, 12)  # net span (gcells) thresholds for upper layer pairs


@dataclass(frozen=True)
class Segment:
    layer: str
    x1: int
    y1: int
    x2: int
    y2: int
    kind: str = "wire"  # wire | io | clock
    pin: Optional[PinRef] = None


@dataclass
class NetRoute:
    key: str
    logical: str
    side: str
    kind: str
    pins: List[Tuple[int, int]]
    driver: Tuple[int, int]
    pin_cells: Dict[PinRef, Tuple[int, int]]
    edges: FrozenSet[Edge3] = frozenset()
    cells: FrozenSet[Tuple[int, int]] = frozenset()  # (layer index, flat gcell)
    length_um: float = 0.0
    hpwl_um: float = 0.0


@dataclass
class Trial:
    logical: str
    old: List[NetRoute]
    new: List[NetRoute]
    old_m8: List[Segment]
    new_m8: List[Segment]

    @property
    def length(self) -> float:
        return sum(r.length_um for r in self.new)

    @property
    def physical_count(self) -> int:
        return len(self.new)


class RoutingState:
    """Capacity grid, per-net routes and overflow bookkeeping."""

    def __init__(self, netlist: Netlist, placement: Placement, stack: LayerStack,
                 config: Optional[RouteConfig] = None, seed: int = 0):
        self.netlist = netlist
        self.placement = placement
        self.stack = stack
        self.cfg = config or RouteConfig()
        self.seed = seed
        fp = placement.floorplan
        self.gw = self.cfg.gcell_sites * fp.site_width
        self.gh = self.cfg.gcell_rows * fp.row_height
        self.nx = max(1, math.ceil(fp.core_width / self.gw - 1e-9))
        self.ny = max(1, math.ceil(fp.core_height / self.gh - 1e-9))
        self.double_sided = stack.double_sided
        n = self.nx * self.ny

        self.layers = []
        for side in stack.sides:
            self.layers.extend(stack.routing_layers(side, self.cfg.max_level))
        if not self.layers:
            raise RoutingError("stack has no signal layers")
        self.layer_index = {l.name: i for i, l in enumerate(self.layers)}
        self.dir_layers: Dict[Tuple[str, str], List[int]] = {}
        for i, l in enumerate(self.layers):
            self.dir_layers.setdefault((l.side, l.direction), []).append(i)
        for side in stack.sides:
            for d in "HV":
                if (side, d) not in self.dir_layers:
                    raise RoutingError(f"side {side} has no {d} layer up to level {self.cfg.max_level}")

        self.cap: List[List[int]] = []
        for l in self.layers:
            span = self.gh if l.direction == "H" else self.gw
            tracks = int(span / l.pitch * (1.0 - stack.pdn_density(l)))
            self.cap.append([tracks] * n)
        self.use: List[List[int]] = [[0] * n for _ in self.layers]
        self.cap2 = {k: [sum(self.cap[i][g] for i in v) for g in range(n)] for k, v in self.dir_layers.items()}
        self.use2 = {k: [0] * n for k in self.dir_layers}
        self.hist = {k: [0.0] * n for k in self.dir_layers}
        self.overflow_total = 0
        self.routes: Dict[str, NetRoute] = {}
        self.by_logical: Dict[str, List[str]] = {}
        self.m8_segments: List[Segment] = []
        self.rrr_log: List[int] = []
        self._apply_pin_blockage()

    # -- geometry -----------------------------------------------------------

    def gcell_of(self, x: float, y: float) -> Tuple[int, int]:
        fp = self.placement.floorplan
        eps = 1e-6
        if x < -eps or y < -eps or x > fp.core_width + eps or y > fp.core_height + eps:
            raise RoutingError(f"unroutable pin at ({x:.1f}, {y:.1f}): outside core")
        return (min(self.nx - 1, int(max(0.0, x) // self.gw)), min(self.ny - 1, int(max(0.0, y) // self.gh)))

    def pin_gcell(self, ref: PinRef) -> Tuple[int, int]:
        return self.gcell_of(*self.placement.pin_xy(ref))

    def _flat(self, x: int, y: int) -> int:
        return y * self.nx + x

    def density(self, li: int, x: int, y: int, d: str) -> float:
        """Mean track occupancy (capped at 1) of the two gcells an edge joins."""
        g1 = self._flat(x, y)
        g2 = self._flat(x + 1, y) if d == "H" else self._flat(x, y + 1)
        tot = 0.0
        for g in (g1, g2):
            cap = self.cap[li][g]
            tot += min(1.0, self.use[li][g] / cap) if cap > 0 else 1.0
        return tot / 2

    def edge_length_um(self, d: str) -> float:
        return (self.gw if d == "H" else self.gh) / 1000.0

    def _apply_pin_blockage(self) -> None:
        """Pin access vias eat lowest-layer tracks on the side each pin lives on."""
        counts: Dict[Tuple[str, int], int] = {}
        for cid, cell in self.netlist.cells.items():
            if cid not in self.placement.pos:
                continue
            g = self._flat(*self.gcell_of(*self.placement.center(cid)))
            m = self.netlist.masters[cell.master]
            in_side = cell.flavor.side if self.double_sided else "top"
            counts[(in_side, g)] = counts.get((in_side, g), 0) + len(m.inputs)
            out_sides = self.stack.sides if self.double_sided else ("top",)
            for s in out_sides:
                counts[(s, g)] = counts.get((s, g), 0) + len(m.outputs)
        for (side, g), n in counts.items():
            if side not in self.stack.sides:
                continue
            lowest = min(self.dir_layers[(side, "H")] + self.dir_layers[(side, "V")],
                         key=lambda i: self.layers[i].level)
            block = n // self.cfg.pins_per_track
            self._bump(lowest, g, block)

    def _bump(self, li: int, g: int, delta: int) -> None:
        before = max(0, self.use[li][g] - self.cap[li][g])
        self.use[li][g] += delta
        after = max(0, self.use[li][g] - self.cap[li][g])
        self.overflow_total += after - before
        l = self.layers[li]
        self.use2[(l.side, l.direction)][g] += delta

    # -- commit / uncommit --------------------------------------------------

    def _commit(self, r: NetRoute) -> None:
        for li, g in r.cells:
            self._bump(li, g, 1)
        self.routes[r.key] = r
        self.by_logical.setdefault(r.logical, []).append(r.key)

    def _uncommit(self, r: NetRoute) -> None:
        for li, g in r.cells:
            self._bump(li, g, -1)
        del self.routes[r.key]
        keys = self.by_logical[r.logical]
        keys.remove(r.key)
        if not keys:
            del self.by_logical[r.logical]

    # -- 2D search ----------------------------------------------------------

    def _cong(self, side: str, d: str, g: int) -> float:
        k = (side, d)
        over = self.use2[k][g] + 1 - self.cap2[k][g]
        return self.hist[k][g] + (self.cfg.overflow_penalty * over if over > 0 else 0.0)

    def _path_cost(self, side: str, edges: Sequence[Edge2], own: Set[Tuple[str, int]]) -> Tuple[float, bool]:
        cost = float(len(edges))
        full = False
        seen = set()
        for x, y, d in edges:
            for g in (self._flat(x, y), self._flat(x + 1, y) if d == "H" else self._flat(x, y + 1)):
                key = (d, g)
                if key in own or key in seen:
                    continue
                seen.add(key)
                c = self._cong(side, d, g)
                cost += c
                if self.use2[(side, d)][g] + 1 > self.cap2[(side, d)][g]:
                    full = True
        return cost, full

    @staticmethod
    def _hline(y: int, x0: int, x1: int) -> List[Edge2]:
        lo, hi = min(x0, x1), max(x0, x1)
        return [(x, y, "H") for x in range(lo, hi)]

    @staticmethod
    def _vline(x: int, y0: int, y1: int) -> List[Edge2]:
        lo, hi = min(y0, y1), max(y0, y1)
        return [(x, y, "V") for y in range(lo, hi)]

    def _patterns(self, p: Tuple[int, int], q: Tuple[int, int]) -> List[List[Edge2]]:
        (px, py), (qx, qy) = p, q
        cands = [self._hline(py, px, qx) + self._vline(qx, py, qy),
                 self._vline(px, py, qy) + self._hline(qy, px, qx)]
        k = self.cfg.z_candidates
        if abs(qx - px) > 1:
            lo, hi = sorted((px, qx))
            for m in sorted({lo + (hi - lo) * (i + 1) // (k + 1) for i in range(k)} - {lo, hi}):
                cands.append(self._hline(py, px, m) + self._vline(m, py, qy) + self._hline(qy, m, qx))
        if abs(qy - py) > 1:
            lo, hi = sorted((py, qy))
            for m in sorted({lo + (hi - lo) * (i + 1) // (k + 1) for i in range(k)} - {lo, hi}):
                cands.append(self._vline(px, py, m) + self._hline(m, px, qx) + self._vline(qx, m, qy))
        return cands

    def _maze(self, side: str, src: Tuple[int, int], targets: Set[Tuple[int, int]],
              own: Set[Tuple[str, int]], box: Tuple[int, int, int, int]) -> List[Edge2]:
        x0, y0, x1, y1 = box
        start = src
        dist = {start: 0.0}
        prev: Dict[Tuple[int, int], Tuple[Tuple[int, int], Edge2]] = {}
        heap = [(0.0, start)]
        while heap:
            c, node = heapq.heappop(heap)
            if c > dist.get(node, math.inf):
                continue
            if node in targets:
                path = []
                while node != start:
                    node, e = prev[node]
                    path.append(e)
                return path[::-1]
            x, y = node
            for nx_, ny_, e in ((x + 1, y, (x, y, "H")), (x - 1, y, (x - 1, y, "H")),
                                (x, y + 1, (x, y, "V")), (x, y - 1, (x, y - 1, "V"))):
                if nx_ < x0 or nx_ > x1 or ny_ < y0 or ny_ > y1:
                    continue
                g = self._flat(nx_, ny_)
                d = e[2]
                step = 1.0 if (d, g) in own else 1.0 + self._cong(side, d, g)
                nc = c + step
                if nc < dist.get((nx_, ny_), math.inf):
                    dist[(nx_, ny_)] = nc
                    prev[(nx_, ny_)] = (node, e)
                    heapq.heappush(heap, (nc, (nx_, ny_)))
        raise RoutingError("maze search found no path")

    @staticmethod
    def _mst(pins: List[Tuple[int, int]]) -> List[Tuple[Tuple[int, int], Tuple[int, int]]]:
        """Prim's rectilinear spanning tree rooted at the first pin."""
        in_tree = [pins[0]]
        rest = list(pins[1:])
        best = {p: (abs(p[0] - pins[0][0]) + abs(p[1] - pins[0][1]), pins[0]) for p in rest}
        out = []
        while rest:
            p = min(rest, key=lambda r: (best[r][0], r))
            rest.remove(p)
            out.append((best[p][1], p))
            in_tree.append(p)
            for r in rest:
                d = abs(r[0] - p[0]) + abs(r[1] - p[1])
                if d < best[r][0]:
                    best[r] = (d, p)
        return out

    def _route2d(self, side: str, pins: List[Tuple[int, int]], maze_only: bool) -> Set[Edge2]:
        edges: Set[Edge2] = set()
        own: Set[Tuple[str, int]] = set()
        tree_nodes: Set[Tuple[int, int]] = {pins[0]}
        m = self.cfg.maze_margin

        def add(path: Iterable[Edge2]) -> None:
            for x, y, d in path:
                edges.add((x, y, d))
                a = (x, y)
                b = (x + 1, y) if d == "H" else (x, y + 1)
                own.add((d, self._flat(*a)))
                own.add((d, self._flat(*b)))
                tree_nodes.add(a)
                tree_nodes.add(b)

        for a, b in self._mst(pins):
            if b in tree_nodes:
                continue
            box = (max(0, min(a[0], b[0]) - m), max(0, min(a[1], b[1]) - m),
                   min(self.nx - 1, max(a[0], b[0]) + m), min(self.ny - 1, max(a[1], b[1]) + m))
            if maze_only:
                tgt_box = {t for t in tree_nodes if box[0] <= t[0] <= box[2] and box[1] <= t[1] <= box[3]}
                add(self._maze(side, b, tgt_box or {a}, own, box))
                continue
            scored = [(self._path_cost(side, c, own), i, c) for i, c in enumerate(self._patterns(a, b))]
            (cost, full), _, path = min(scored, key=lambda t: (t[0][0], t[1]))
            if full:
                alt = self._maze(side, b, {a}, own, box)
                alt_cost, _ = self._path_cost(side, alt, own)
                if alt_cost < cost:
                    path = alt
            add(path)
        return edges

    # -- layer assignment ---------------------------------------------------

    def _runs(self, edges: Set[Edge2]) -> List[List[Edge2]]:
        runs = []
        for d in "HV":
            es = sorted((e for e in edges if e[2] == d), key=(lambda e: (e[1], e[0])) if d == "H" else (lambda e: (e[0], e[1])))
            cur: List[Edge2] = []
            for e in es:
                if cur:
                    last = cur[-1]
                    contiguous = (e[1] == last[1] and e[0] == last[0] + 1) if d == "H" else (e[0] == last[0] and e[1] == last[1] + 1)
                    if not contiguous:
                        runs.append(cur)
                        cur = []
                cur.append(e)
            if cur:
                runs.append(cur)
        return runs

    def _assign_layers(self, side: str, edges: Set[Edge2], span: int) -> Tuple[FrozenSet[Edge3], FrozenSet[Tuple[int, int]]]:
        pref = sum(1 for t in self.cfg.layer_span if span > t)
        out_edges: Set[Edge3] = set()
        cells: Set[Tuple[int, int]] = set()
        for run in self._runs(edges):
            d = run[0][2]
            options = self.dir_layers[(side, d)]
            p = min(pref, len(options) - 1)
            order = options[p:] + options[:p][::-1]
            gs = set()
            for x, y, _ in run:
                gs.add(self._flat(x, y))
                gs.add(self._flat(x + 1, y) if d == "H" else self._flat(x, y + 1))
            best = None
            for rank, li in enumerate(order):
                added = 0
                for g in gs:
                    if (li, g) in cells:
                        continue
                    if self.use[li][g] + 1 > self.cap[li][g]:
                        added += 1
                if best is None or (added, rank) < best[0]:
                    best = ((added, rank), li)
                if added == 0:
                    break
            li = best[1]
            for x, y, _ in run:
                out_edges.add((li, x, y, d))
            for g in gs:
                cells.add((li, g))
        return frozenset(out_edges), frozenset(cells)

    # -- net level ----------------------------------------------------------

    def _make_route(self, pn: PhysicalNet, kind: str, maze_only: bool = False) -> NetRoute:
        pin_cells = {ref: self.pin_gcell(ref) for ref in pn.pins}
        drv = pin_cells[pn.driver]
        pins = [drv] + sorted({c for c in pin_cells.values()} - {drv})
        xs = [p[0] for p in pins]
        ys = [p[1] for p in pins]
        hpwl = (max(xs) - min(xs)) * self.gw / 1000.0 + (max(ys) - min(ys)) * self.gh / 1000.0
        r = NetRoute(pn.key, pn.logical, pn.side, kind, pins, drv, pin_cells, hpwl_um=hpwl)
        if len(pins) == 1:
            return r
        edges2 = self._route2d(pn.side, pins, maze_only)
        span = max(max(xs) - min(xs), max(ys) - min(ys))
        r.edges, r.cells = self._assign_layers(pn.side, edges2, span)
        r.length_um = sum(self.edge_length_um(e[3]) for e in r.edges)
        return r

    def _stubs(self, pn: PhysicalNet) -> List[Segment]:
        out = []
        for port in pn.port_stubs:
            x, y = self.pin_gcell(PinRef(port))
            out.append(Segment("M8", x, y, x, y, "io", PinRef(port)))
        return out

    def _net_kind(self, logical: str) -> str:
        return "clock" if self.netlist.nets[logical].kind == "clock" else "signal"

    def route_all(self, nets: Optional[Sequence[PhysicalNet]] = None) -> None:
        nets = derive_physical_nets(self.netlist, self.double_sided) if nets is None else nets
        for pn in sorted(nets, key=lambda p: p.key):
            self.m8_segments.extend(self._stubs(pn))
            self._commit(self._make_route(pn, self._net_kind(pn.logical)))
        self.rip_up_and_reroute()

    def overflowed(self) -> List[Tuple[int, int]]:
        return [(li, g) for li in range(len(self.layers)) for g in range(self.nx * self.ny)
                if self.use[li][g] > self.cap[li][g]]

    def rip_up_and_reroute(self) -> None:
        for _ in range(self.cfg.rrr_iters):
            hot = self.overflowed()
            if not hot:
                break
            start = self.overflow_total
            for li, g in hot:
                l = self.layers[li]
                self.hist[(l.side, l.direction)][g] += self.cfg.history_step
            hot_set = set(hot)
            victims = sorted(k for k, r in self.routes.items() if not hot_set.isdisjoint(r.cells))
            for key in victims:
                old = self.routes[key]
                before = self.overflow_total
                self._uncommit(old)
                pn = PhysicalNet(old.logical, old.side, self._driver_of(old), [p for p in old.pin_cells if p != self._driver_of(old)])
                new = self._make_route(pn, old.kind, maze_only=True)
                self._commit(new)
                if self.overflow_total > before:
                    self._uncommit(new)
                    self._commit(old)
            self.rrr_log.append(self.overflow_total)
            if self.overflow_total >= start:
                break

    def _driver_of(self, r: NetRoute) -> PinRef:
        return self.netlist.nets[r.logical].driver

    # -- queries used by the flip passes and analysis -----------------------

    def logical_length(self, logical: str) -> float:
        return sum(self.routes[k].length_um for k in self.by_logical.get(logical, []))

    def logical_hpwl(self, logical: str) -> float:
        net = self.netlist.nets[logical]
        cells = [self.pin_gcell(p) for p in net.pins]
        xs = [c[0] for c in cells]
        ys = [c[1] for c in cells]
        return (max(xs) - min(xs)) * self.gw / 1000.0 + (max(ys) - min(ys)) * self.gh / 1000.0

    def physical_count(self, logical: str) -> int:
        return len(self.by_logical.get(logical, []))

    def trial_reroute(self, logical: str) -> Trial:
        old = [self.routes[k] for k in list(self.by_logical.get(logical, []))]
        old_m8 = [s for s in self.m8_segments if s.pin is not None and self.netlist.net_of(s.pin) == logical]
        for r in old:
            self._uncommit(r)
        self.m8_segments = [s for s in self.m8_segments if s not in old_m8]
        new_pns = derive_physical_nets(self.netlist, self.double_sided, [logical])
        new, new_m8 = [], []
        for pn in new_pns:
            r = self._make_route(pn, self._net_kind(logical))
            self._commit(r)
            new.append(r)
            new_m8.extend(self._stubs(pn))
        self.m8_segments.extend(new_m8)
        return Trial(logical, old, new, old_m8, new_m8)

    def commit_trial(self, trial: Trial) -> None:
        pass  # the trial routes are already live

    def discard_trial(self, trial: Trial) -> None:
        for r in trial.new:
            self._uncommit(r)
        self.m8_segments = [s for s in self.m8_segments if s not in trial.new_m8] + trial.old_m8
        for r in trial.old:
            self._commit(r)

    def reroute_clock(self) -> None:
        """Re-run the flavor-unaware clock routing (see :func:`route_clock_unaware`)."""
        for key in [k for k, r in self.routes.items() if r.kind == "clock"]:
            self._uncommit(self.routes[key])
        self.m8_segments = [s for s in self.m8_segments if s.kind != "clock"]
        _route_clock_nets(self)

    # -- reporting ----------------------------------------------------------

    def segments(self, key: str) -> List[Segment]:
        """Maximal straight runs of one net, per layer."""
        r = self.routes[key]
        out = []
        for li in sorted({e[0] for e in r.edges}):
            name = self.layers[li].name
            es = {(x, y, d) for l2, x, y, d in r.edges if l2 == li}
            for run in self._runs(es):
                x0, y0, d = run[0]
                x1, y1, _ = run[-1]
                if d == "H":
                    out.append(Segment(name, x0, y0, x1 + 1, y1))
                else:
                    out.append(Segment(name, x0, y0, x1, y1 + 1))
        if not out and r.pins:
            x, y = r.pins[0]
            lowest = min(self.dir_layers[(r.side, "H")], key=lambda i: self.layers[i].level)
            out.append(Segment(self.layers[lowest].name, x, y, x, y))
        return out

    def wirelength_by_layer(self) -> Dict[str, float]:
        return wirelength_by_layer(self)

    def hash(self) -> str:
        h = hashlib.sha256()
        for key in sorted(self.routes):
            r = self.routes[key]
            h.update(key.encode())
            for li, x, y, d in sorted(r.edges):
                h.update(f"{self.layers[li].name},{x},{y},{d};".encode())
        for s in sorted(self.m8_segments, key=lambda s: (s.kind, str(s.pin), s.x1, s.y1)):
            h.update(f"{s.kind}:{s.pin}:{s.x1},{s.y1};".encode())
        h.update(str(self.overflow_total).encode())
        return h.hexdigest()

    def dumps(self) -> str:
        lines = [f"grid {self.nx} {self.ny} gcell_nm={self.gw:g}x{self.gh:g} overflow={self.overflow_total}"]
        for key in sorted(self.routes):
            r = self.routes[key]
            lines.append(f"net {key} kind={r.kind} length_um={r.length_um:.4f}")
            for s in self.segments(key):
                lines.append(f"  seg {s.layer} {s.x1} {s.y1} {s.x2} {s.y2}")
        for s in self.m8_segments:
            lines.append(f"m8 {s.kind} {s.pin} {s.x1} {s.y1}")
        return "\n".join(lines) + "\n"


def wirelength_by_layer(state: Optional[RoutingState], stack: Optional[LayerStack] = None) -> Dict[str, float]:
    """Per-layer µm; double-sided stacks also get combined ``Mk`` = TMk + BMk rows."""
    stack = stack or (state.stack if state is not None else None)
    table: Dict[str, float] = {}
    if stack is not None:
        for side in stack.sides:
            for l in stack.routing_layers(side):
                table[l.name] = 0.0
    if state is not None:
        for r in state.routes.values():
            for li, _, _, d in r.edges:
                name = state.layers[li].name
                table[name] = table.get(name, 0.0) + state.edge_length_um(d)
    if stack is not None and stack.double_sided:
        levels = sorted({l.level for l in stack.routing_layers("top")})
        for k in levels:
            table[f"M{k}"] = table.get(f"TM{k}", 0.0) + table.get(f"BM{k}", 0.0)
    return table


def wirelength_csv(state: RoutingState) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["layer", "wirelength_um"])
    for name, v in wirelength_by_layer(state).items():
        w.writerow([name, f"{v:.4f}"])
    return buf.getvalue()


def congestion_svg(state: RoutingState, path) -> None:
    """Per-layer usage/capacity heatmaps."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np

    n = len(state.layers)
    cols = min(4, n)
    rows = math.ceil(n / cols)
    fig, axes = plt.subplots(rows, cols, figsize=(3 * cols, 3 * rows), squeeze=False)
    for li, l in enumerate(state.layers):
        ax = axes[li // cols][li % cols]
        use = np.array(state.use[li], dtype=float).reshape(state.ny, state.nx)
        cap = np.maximum(np.array(state.cap[li], dtype=float).reshape(state.ny, state.nx), 1.0)
        im = ax.imshow(use / cap, origin="lower", vmin=0, vmax=1.5, cmap="magma")
        ax.set_title(l.name)
        ax.set_xticks([])
        ax.set_yticks([])
    for k in range(n, rows * cols):
        axes[k // cols][k % cols].axis("off")
    fig.colorbar(im, ax=axes.ravel().tolist(), shrink=0.6, label="usage / capacity")
    fig.savefig(path, format="svg")
    plt.close(fig)


def global_route(netlist: Netlist, placement: Placement, stack: LayerStack, seed: int = 0,
                 config: Optional[RouteConfig] = None) -> RoutingState:
    """Route every physical net of ``netlist`` (flavors must be assigned)."""
    state = RoutingState(netlist, placement, stack, config, seed)
    state.route_all()
    return state


# -- flavor-unaware clock routing --------------------------------------------


def _clock_home(netlist: Netlist, driver: PinRef, double_sided: bool) -> str:
    if not double_sided:
        return "top"
    if driver.is_port:
        side = netlist.ports[driver.owner].side
        return side if side in ("top", "bottom") else "top"
    return netlist.cells[driver.owner].flavor.side


def _route_clock_nets(state: RoutingState) -> None:
    nl = state.netlist
    for nid in sorted(nl.nets):
        net = nl.nets[nid]
        if net.kind != "clock" or not net.loads:
            continue
        home = _clock_home(nl, net.driver, state.double_sided)
        sides: Dict[str, List[PinRef]] = {home: []}
        for ref in net.loads:
            if ref.is_port or not state.double_sided:
                sides[home].append(ref)
                continue
            cell = nl.cells[ref.owner]
            side = cell.flavor.side
            if side == home:
                sides[home].append(ref)
            elif cell.is_clock_buffer:
                # tree buffers got arbitrary flavors; the tool reaches them through M8
                x, y = state.pin_gcell(ref)
                state.m8_segments.append(Segment("M8", x, y, x, y, "clock", ref))
                sides[home].append(ref)
            else:
                # flavor-planned sinks are served by the driver's output on their own side
                sides.setdefault(side, []).append(ref)
        for side, loads in sorted(sides.items()):
            if loads:
                state._commit(state._make_route(PhysicalNet(nid, side, net.driver, sorted(loads)), "clock"))


def route_clock_unaware(netlist: Netlist, placement: Placement, stack: LayerStack, seed: int = 0,
                        config: Optional[RouteConfig] = None) -> RoutingState:
    """Clock routing that ignores buffer flavors: a clock net stays on its
    driver's side and any tree buffer on the other side is reached through M8.
    Sequential sinks keep their planned sides.

    This is the state a flavor-agnostic clock tree leaves behind; the M8
    crossings it records are what the clock-buffer flip pass removes.
    """
    state = RoutingState(netlist, placement, stack, config, seed)
    _route_clock_nets(state)
    return state
