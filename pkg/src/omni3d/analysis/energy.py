"""Per-cycle energy split into internal, pin switching, net switching and leakage (fJ)."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Dict, Optional

from ..celllib import LibraryView
from ..netlist import Netlist
from .timing import NetParasitics, net_parasitics


@dataclass
class EnergyResult:
    internal: float
    pin_switching: float
    net_switching: float
    leakage: float

    @property
    def dynamic(self) -> float:
        return self.internal + self.pin_switching + self.net_switching

    @property
    def total(self) -> float:
        return self.dynamic + self.leakage

    @property
    def fractions(self) -> Dict[str, float]:
        t = self.total
        parts = {"internal": self.internal, "pin_switching": self.pin_switching,
                 "net_switching": self.net_switching, "leakage": self.leakage}
        return {k: (v / t if t else 0.0) for k, v in parts.items()}

    def as_dict(self) -> Dict[str, float]:
        return {"internal": self.internal, "pin_switching": self.pin_switching,
                "net_switching": self.net_switching, "leakage": self.leakage, "total": self.total}


def energy(netlist: Netlist, routing, view: LibraryView, period: float, activity: float = 0.1,
           clock_ratio: float = 10.0, vdd: Optional[float] = None,
           parasitics: Optional[Dict[str, NetParasitics]] = None) -> EnergyResult:
    """Energy per clock cycle.

    Data nets toggle with probability ``activity`` per cycle and clock nets
    ``clock_ratio`` times as often, so every dynamic term is linear in
    ``activity``.  Switching terms scale with vdd squared, leakage is
    I_leak * vdd * period.
    """
    if activity < 0 or clock_ratio < 0 or period <= 0:
        raise ValueError("activity and clock_ratio must be >= 0 and period > 0")
    v = view.vdd if vdd is None else vdd
    scale = (v / view.vdd) ** 2
    par = parasitics if parasitics is not None else net_parasitics(netlist, routing, view)
    internal = pin_sw = net_sw = leak = 0.0
    clock_rate = activity * clock_ratio
    for nid, net in netlist.nets.items():
        if net.kind == "power":
            continue
        rate = clock_rate if net.kind == "clock" else activity
        c_drv = 0.0
        if not net.driver.is_port:
            c = netlist.cells[net.driver.owner]
            c_drv = view.master(c.master, c.flavor).cap_out
        pin_sw += rate * (par[nid].pin_cap + c_drv) * v * v
        net_sw += rate * par[nid].wire_cap * v * v
    for cid, cell in netlist.cells.items():
        m = view.master(cell.master, cell.flavor)
        if cell.is_sequential or cell.is_clock_buffer:
            rate = clock_rate
        else:
            rate = activity
        internal += rate * m.e_internal * scale
        leak += m.i_leak * v * period * 1e-6  # nA * V * ps = 1e-21 J = 1e-6 fJ
    return EnergyResult(internal, pin_sw, net_sw, leak)


def energy_csv(result: EnergyResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["category", "energy_fj"])
    for k, val in result.as_dict().items():
        w.writerow([k, f"{val:.6f}"])
    return buf.getvalue()
