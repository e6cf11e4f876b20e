"""Row/site simulated-annealing placement seeded from side-planning clusters."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from ..celllib import LibraryView
from ..netlist import Netlist, PhysicalNet, PinRef, derive_physical_nets
from .floorplan import Floorplan


class PlacementError(ValueError):
    pass


@dataclass
class AnnealConfig:
    moves_per_cell: float = 8.0
    n_temps: int = 30
    cooling: float = 0.85
    p_accept0: float = 0.02
    p_swap: float = 0.45
    p_shift: float = 0.1
    max_shift_cluster: int = 64


class Placement:
    """Cell origins on the site grid (row, column of the leftmost site)."""

    def __init__(self, floorplan: Floorplan, widths: Dict[str, int]):
        self.floorplan = floorplan
        self.widths = dict(widths)
        self.pos: Dict[str, Tuple[int, int]] = {}
        self._rows: List[List[Optional[str]]] = [[None] * floorplan.n_cols for _ in range(floorplan.n_rows)]

    # -- occupancy ----------------------------------------------------------

    def is_free(self, row: int, col: int, width: int, ignore: Iterable[str] = ()) -> bool:
        fp = self.floorplan
        if row < 0 or row >= fp.n_rows or col < 0 or col + width > fp.n_cols:
            return False
        occ = self._rows[row]
        ign = set(ignore)
        for c in range(col, col + width):
            o = occ[c]
            if o is not None and o not in ign:
                return False
        return True

    def put(self, cell: str, row: int, col: int) -> None:
        occ = self._rows[row]
        for c in range(col, col + self.widths[cell]):
            occ[c] = cell
        self.pos[cell] = (row, col)

    def take(self, cell: str) -> Tuple[int, int]:
        row, col = self.pos.pop(cell)
        occ = self._rows[row]
        for c in range(col, col + self.widths[cell]):
            occ[c] = None
        return row, col

    def add_cell(self, cell: str, width: int, x: float, y: float) -> Tuple[int, int]:
        """Insert a new cell at the free span nearest to (x, y) nm."""
        self.widths[cell] = width
        fp = self.floorplan
        r0 = min(fp.n_rows - 1, max(0, int(y // fp.row_height)))
        c0 = min(fp.n_cols - width, max(0, int(x // fp.site_width - width / 2)))
        best = None
        for radius in range(max(fp.n_rows, fp.n_cols) + 1):
            for r in range(r0 - radius, r0 + radius + 1):
                if r < 0 or r >= fp.n_rows:
                    continue
                dr = abs(r - r0)
                cols = range(c0 - radius, c0 + radius + 1) if dr == radius else (c0 - radius, c0 + radius)
                for c in cols:
                    if self.is_free(r, c, width):
                        d = dr * fp.row_height + abs(c - c0) * fp.site_width
                        if best is None or (d, r, c) < best:
                            best = (d, r, c)
            if best is not None:
                break
        if best is None:
            del self.widths[cell]
            raise PlacementError(f"no free sites for {cell}")
        self.put(cell, best[1], best[2])
        return best[1], best[2]

    # -- geometry -----------------------------------------------------------

    def center(self, cell: str) -> Tuple[float, float]:
        row, col = self.pos[cell]
        fp = self.floorplan
        return ((col + self.widths[cell] / 2.0) * fp.site_width, (row + 0.5) * fp.row_height)

    def pin_xy(self, ref: PinRef) -> Tuple[float, float]:
        if ref.is_port:
            return self.floorplan.ports[ref.owner]
        return self.center(ref.owner)

    def hpwl(self, pins: Sequence[PinRef]) -> float:
        pts = [self.pin_xy(p) for p in pins]
        if len(pts) < 2:
            return 0.0
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        return (max(xs) - min(xs)) + (max(ys) - min(ys))

    def total_hpwl(self, nets: Sequence[PhysicalNet]) -> float:
        return sum(self.hpwl(pn.pins) for pn in nets)

    def check_legal(self) -> None:
        seen = {}
        fp = self.floorplan
        for cell, (row, col) in self.pos.items():
            w = self.widths[cell]
            if not (0 <= row < fp.n_rows and 0 <= col and col + w <= fp.n_cols):
                raise PlacementError(f"{cell} outside core")
            for c in range(col, col + w):
                if (row, c) in seen:
                    raise PlacementError(f"{cell} overlaps {seen[(row, c)]}")
                seen[(row, c)] = cell

    def copy(self) -> "Placement":
        other = Placement(self.floorplan, self.widths)
        for cell, (r, c) in self.pos.items():
            other.put(cell, r, c)
        return other

    def dumps(self) -> str:
        return "".join(f"{c} {r} {k}\n" for c, (r, k) in sorted(self.pos.items()))


def _greedy_rows(order: Sequence[str], widths: Dict[str, int], capacity: int) -> List[List[str]]:
    rows: List[List[str]] = [[]]
    used = 0
    for cell in order:
        w = widths[cell]
        if rows[-1] and used + w > capacity:
            rows.append([])
            used = 0
        rows[-1].append(cell)
        used += w
    return rows


def _ordered_rows(order: Sequence[str], widths: Dict[str, int], n_rows: int, n_cols: int) -> Optional[List[List[str]]]:
    """Order-preserving split with the smallest maximum row fill; None if it does not fit.

    Greedy filling is optimal for a fixed capacity, so the least capacity that
    still fits in ``n_rows`` is found by bisection.
    """
    if not order:
        return [[] for _ in range(n_rows)]
    lo = max(max(widths[c] for c in order), -(-sum(widths[c] for c in order) // n_rows))
    hi = n_cols
    if lo > hi or len(_greedy_rows(order, widths, hi)) > n_rows:
        return None
    while lo < hi:
        mid = (lo + hi) // 2
        if len(_greedy_rows(order, widths, mid)) <= n_rows:
            hi = mid
        else:
            lo = mid + 1
    packed = _greedy_rows(order, widths, lo)
    rows: List[List[str]] = [[] for _ in range(n_rows)]
    for i, cells in enumerate(packed):
        rows[i * n_rows // len(packed)] = cells
    return rows


def _lookahead_rows(order: Sequence[str], widths: Dict[str, int], n_rows: int, n_cols: int,
                    window: int = 16) -> Optional[List[List[str]]]:
    """Row fill that pulls a later cell forward when the next one does not fit."""
    pending = list(order)
    rows: List[List[str]] = []
    while pending:
        if len(rows) == n_rows:
            return None
        row: List[str] = []
        used = 0
        i = 0
        while i < min(window, len(pending)):
            w = widths[pending[i]]
            if used + w <= n_cols:
                row.append(pending.pop(i))
                used += w
                i = 0
            else:
                i += 1
        if not row:
            return None
        rows.append(row)
    return rows


def _first_fit_rows(order: Sequence[str], widths: Dict[str, int], n_rows: int, n_cols: int) -> Optional[List[List[str]]]:
    rows: List[List[str]] = [[] for _ in range(n_rows)]
    used = [0] * n_rows
    for cell in sorted(order, key=lambda c: -widths[c]):
        w = widths[cell]
        fit = min((i for i in range(n_rows) if used[i] + w <= n_cols), key=lambda i: used[i], default=None)
        if fit is None:
            return None
        rows[fit].append(cell)
        used[fit] += w
    return rows


def _pack(order: Sequence[str], placement: Placement) -> None:
    """Serpentine row fill with evenly spread whitespace; keeps sequence neighbours adjacent.

    Falls back to a lookahead fill, then to width-sorted first-fit, when no
    order-preserving split fits.
    """
    fp = placement.floorplan
    widths = placement.widths
    total = sum(widths[c] for c in order)
    if total > fp.n_sites:
        raise PlacementError("utilization infeasible: cells exceed sites")
    rows = None
    for packer in (_ordered_rows, _lookahead_rows, _first_fit_rows):
        rows = packer(order, widths, fp.n_rows, fp.n_cols)
        if rows is not None:
            break
    if rows is None:
        raise PlacementError("utilization infeasible: cells do not fit the rows")
    for r, cells in enumerate(rows):
        if not cells:
            continue
        seq = cells if r % 2 == 0 else cells[::-1]
        width = sum(widths[c] for c in seq)
        gap = (fp.n_cols - width) / (len(seq) + 1)
        col = 0.0
        for cell in seq:
            col += gap
            start = int(col)
            placement.put(cell, r, start)
            col = start + widths[cell]


def _widths(netlist: Netlist, view: LibraryView) -> Dict[str, int]:
    return {cid: view.master(c.master).width_gp for cid, c in netlist.cells.items()}


def seed_order(netlist: Netlist, clusters: Optional[Sequence] = None) -> List[str]:
    """Cells grouped by cluster, largest cluster first (ties by id)."""
    if not clusters:
        return sorted(netlist.cells)
    ordered = sorted(clusters, key=lambda c: (-c.size, c.id))
    out = [m for c in ordered for m in c.members]
    rest = sorted(set(netlist.cells) - set(out))
    return out + rest


def initial_placement(netlist: Netlist, floorplan: Floorplan, view: LibraryView,
                      clusters: Optional[Sequence] = None) -> Placement:
    pl = Placement(floorplan, _widths(netlist, view))
    _pack(seed_order(netlist, clusters), pl)
    return pl


def random_placement(netlist: Netlist, floorplan: Floorplan, view: LibraryView, seed: int) -> Placement:
    order = sorted(netlist.cells)
    random.Random(seed).shuffle(order)
    pl = Placement(floorplan, _widths(netlist, view))
    _pack(order, pl)
    return pl


class _Annealer:
    def __init__(self, pl: Placement, nets: List[PhysicalNet], clusters, rng: random.Random, cfg: AnnealConfig):
        self.pl = pl
        self.rng = rng
        self.cfg = cfg
        self.net_pins = [list(pn.pins) for pn in nets]
        self.cell_nets: Dict[str, List[int]] = {c: [] for c in pl.pos}
        for i, pins in enumerate(self.net_pins):
            for p in pins:
                if not p.is_port and i not in self.cell_nets[p.owner][-1:]:
                    self.cell_nets[p.owner].append(i)
        self.cost = [pl.hpwl(p) for p in self.net_pins]
        self.cells = sorted(pl.pos)
        self.clusters = [c.members for c in (clusters or []) if 1 < c.size <= cfg.max_shift_cluster]

    def total(self) -> float:
        return sum(self.cost)

    def _affected(self, cells: Iterable[str]) -> List[int]:
        nets = set()
        for c in cells:
            nets.update(self.cell_nets[c])
        return sorted(nets)

    def _try(self, cells: Sequence[str], targets: Sequence[Tuple[int, int]], temp: float) -> bool:
        pl = self.pl
        old = [pl.take(c) for c in cells]
        ok = True
        for c, (r, k) in zip(cells, targets):
            if not pl.is_free(r, k, pl.widths[c]):
                ok = False
                break
            pl.put(c, r, k)
        if not ok:
            for c in cells:
                if c in pl.pos:
                    pl.take(c)
            for c, (r, k) in zip(cells, old):
                pl.put(c, r, k)
            return False
        nets = self._affected(cells)
        new_cost = [pl.hpwl(self.net_pins[i]) for i in nets]
        delta = sum(new_cost) - sum(self.cost[i] for i in nets)
        if delta <= 0 or (temp > 0 and self.rng.random() < math.exp(-delta / temp)):
            for i, v in zip(nets, new_cost):
                self.cost[i] = v
            return True
        for c in cells:
            pl.take(c)
        for c, (r, k) in zip(cells, old):
            pl.put(c, r, k)
        return False

    def move(self, temp: float, window: Tuple[int, int]) -> bool:
        rng, pl, fp = self.rng, self.pl, self.pl.floorplan
        u = rng.random()
        if u < self.cfg.p_shift and self.clusters:
            members = rng.choice(self.clusters)
            dr = rng.randint(-1, 1)
            dc = rng.randint(-window[1], window[1])
            targets = [(pl.pos[m][0] + dr, pl.pos[m][1] + dc) for m in members]
            return self._try(members, targets, temp)
        a = rng.choice(self.cells)
        ra, ca = pl.pos[a]
        if u < self.cfg.p_shift + self.cfg.p_swap:
            b = rng.choice(self.cells)
            if b == a:
                return False
            rb, cb = pl.pos[b]
            if abs(rb - ra) > window[0] or abs(cb - ca) > window[1]:
                return False
            return self._try([a, b], [(rb, cb), (ra, ca)], temp)
        r = min(fp.n_rows - 1, max(0, ra + rng.randint(-window[0], window[0])))
        k = min(fp.n_cols - pl.widths[a], max(0, ca + rng.randint(-window[1], window[1])))
        return self._try([a], [(r, k)], temp)


def place(netlist: Netlist, floorplan: Floorplan, view: LibraryView, clusters=None, seed: int = 0,
          config: Optional[AnnealConfig] = None, double_sided: Optional[bool] = None) -> Placement:
    """Cluster-seeded annealing over swap, relocate and cluster-shift moves."""
    cfg = config or AnnealConfig()
    ds = view.arch.double_sided if double_sided is None else double_sided
    pl = initial_placement(netlist, floorplan, view, clusters)
    if len(pl.pos) < 2:
        if len(pl.pos) == 1:
            cell = next(iter(pl.pos))
            pl.take(cell)
            w = pl.widths[cell]
            pl.put(cell, floorplan.n_rows // 2, (floorplan.n_cols - w) // 2)
        return pl
    nets = derive_physical_nets(netlist, ds)
    rng = random.Random(seed)
    ann = _Annealer(pl, nets, clusters, rng, cfg)
    full = (floorplan.n_rows, floorplan.n_cols)

    # initial temperature from the mean uphill move
    ups = []
    for _ in range(min(200, 10 * len(ann.cells))):
        before = ann.total()
        if ann.move(float("inf"), full):
            d = ann.total() - before
            if d > 0:
                ups.append(d)
    temp = (sum(ups) / len(ups)) / -math.log(cfg.p_accept0) if ups else 0.0
    t0 = temp
    n_moves = max(1, int(cfg.moves_per_cell * len(ann.cells)))
    for _ in range(cfg.n_temps):
        frac = temp / t0 if t0 > 0 else 0.0
        window = (max(1, int(full[0] * frac)), max(2, int(full[1] * frac)))
        for _ in range(n_moves):
            ann.move(temp, window)
        temp *= cfg.cooling
    # greedy finish
    for _ in range(n_moves):
        ann.move(0.0, (1, 4))
    return pl
