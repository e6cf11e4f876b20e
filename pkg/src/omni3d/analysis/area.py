"""Cell-area accounting per master, normalized against a reference implementation."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List

from ..celllib import LibraryView
from ..netlist import Netlist


class AreaError(ValueError):
    pass


@dataclass
class AreaRow:
    master: str
    count: int
    area: float  # nm^2
    area_norm: float  # / reference total area
    count_norm: float  # / reference total instance count
    ref_area_norm: float  # reference bar, same normalization
    ref_count_norm: float


@dataclass
class AreaReport:
    rows: List[AreaRow]
    total_area: float
    reference_area: float

    @property
    def ratio(self) -> float:
        """Reference total over this design's total (> 1 means smaller than reference)."""
        return self.reference_area / self.total_area

    def row(self, master: str) -> AreaRow:
        return next(r for r in self.rows if r.master == master)


def cell_areas(netlist: Netlist, view: LibraryView) -> Dict[str, float]:
    areas: Dict[str, float] = {}
    for c in netlist.cells.values():
        areas[c.master] = areas.get(c.master, 0.0) + view.area(c.master)
    return areas


def area_report(design: Netlist, view: LibraryView, reference: Netlist = None,
                reference_view: LibraryView = None) -> AreaReport:
    """Per-master area and count bars of ``design`` normalized by the reference totals.

    Without a reference the design is normalized by itself.
    """
    reference = design if reference is None else reference
    reference_view = view if reference_view is None else reference_view
    a_area, b_area = cell_areas(design, view), cell_areas(reference, reference_view)
    if set(a_area).isdisjoint(b_area):
        raise AreaError("designs share no cell masters")
    a_cnt = Counter(c.master for c in design.cells.values())
    b_cnt = Counter(c.master for c in reference.cells.values())
    ref_total = sum(b_area.values())
    ref_n = sum(b_cnt.values())
    rows = []
    for m in sorted(set(a_area) | set(b_area)):
        rows.append(AreaRow(m, a_cnt.get(m, 0), a_area.get(m, 0.0), a_area.get(m, 0.0) / ref_total,
                            a_cnt.get(m, 0) / ref_n, b_area.get(m, 0.0) / ref_total, b_cnt.get(m, 0) / ref_n))
    return AreaReport(rows, sum(a_area.values()), ref_total)


def area_csv(report: AreaReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["master", "count", "area_nm2", "area_norm", "count_norm", "ref_area_norm", "ref_count_norm", "delta_area_norm"])
    for r in report.rows:
        w.writerow([r.master, r.count, f"{r.area:.1f}", f"{r.area_norm:.6f}", f"{r.count_norm:.6f}",
                    f"{r.ref_area_norm:.6f}", f"{r.ref_count_norm:.6f}", f"{r.area_norm - r.ref_area_norm:.6f}"])
    return buf.getvalue()
