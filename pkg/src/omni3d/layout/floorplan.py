"""Core sizing, row/site grid and block port locations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Tuple

from ..celllib import LibraryView
from ..netlist import Netlist


class FloorplanError(ValueError):
    pass


@dataclass
class Floorplan:
    core_width: float  # nm
    core_height: float  # nm
    row_height: float  # nm
    site_width: float  # nm, one contacted gate pitch
    n_rows: int
    n_cols: int
    utilization: float
    cell_area: float  # nm^2
    ports: Dict[str, Tuple[float, float]] = field(default_factory=dict)

    @property
    def core_area(self) -> float:
        return self.core_width * self.core_height

    @property
    def n_sites(self) -> int:
        return self.n_rows * self.n_cols


def assign_port_sides(netlist: Netlist, double_sided: bool) -> None:
    """Resolve ``either`` ports: alternate top/bottom when double sided, else top."""
    flip = 0
    for name in sorted(netlist.ports):
        port = netlist.ports[name]
        if not double_sided:
            port.side = "top"
        elif port.side == "either":
            port.side = ("top", "bottom")[flip % 2]
            flip += 1


def _port_positions(netlist: Netlist, width: float, height: float) -> Dict[str, Tuple[float, float]]:
    ins = sorted(p for p, v in netlist.ports.items() if v.direction == "in")
    outs = sorted(p for p, v in netlist.ports.items() if v.direction == "out")
    pos = {}
    for i, p in enumerate(ins):
        pos[p] = (0.0, height * (i + 0.5) / len(ins))
    for i, p in enumerate(outs):
        pos[p] = (width, height * (i + 0.5) / len(outs))
    return pos


def build_floorplan(netlist: Netlist, view: LibraryView, utilization: float) -> Floorplan:
    if not netlist.cells:
        raise FloorplanError("empty netlist")
    if not 0.4 < utilization <= 0.95:
        raise FloorplanError("utilization must be in (0.4, 0.95]")
    cell_area = sum(view.area(c.master) for c in netlist.cells.values())
    core_area = cell_area / utilization
    row_h = view.row_height_nm
    cgp = view.library.cgp_nm
    n_rows = max(1, round(math.sqrt(core_area) / row_h))
    core_h = n_rows * row_h
    core_w = core_area / core_h
    widest = max(view.master(c.master).width_gp for c in netlist.cells.values())
    n_cols = int(core_w // cgp)
    if n_cols < widest:
        n_cols = widest
        core_w = n_cols * cgp
    fp = Floorplan(core_w, core_h, row_h, cgp, n_rows, n_cols, utilization, cell_area)
    fp.ports = _port_positions(netlist, core_w, core_h)
    return fp
