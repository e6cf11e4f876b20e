"""Random netlist generator shared by the property tests."""

import random

from omni3d.netlist import Flavor, Netlist, PinRef

COMB = ("INVD1", "BUFD1", "ND2D1", "NR2D1", "AOI21D1", "MUX2D1")


def random_netlist(masters, n_cells, seed, p_assign=1.0, n_dff=0, n_inputs=3, acyclic=False):
    """With ``acyclic`` a combinational input is only fed by ports, flops or lower-numbered cells."""
    rng = random.Random(seed)
    nl = Netlist(masters)
    for i in range(n_inputs):
        nl.add_port(f"i{i}", "in", rng.choice(("top", "bottom", "either")))
    nl.add_port("o0", "out", "either")
    kinds = [rng.choice(COMB) for _ in range(n_cells)] + ["DFFD1"] * n_dff
    for i, m in enumerate(kinds):
        fl = rng.choice((Flavor.TI, Flavor.BI)) if rng.random() < p_assign else Flavor.UNASSIGNED
        nl.add_cell(f"c{i}", m, fl)
    if n_dff:
        nl.add_port("clk", "in", "top")
        nl.add_net("clk", PinRef("clk"), [PinRef(c, "CK") for c in nl.cells if nl.cells[c].is_sequential], "clock")
    sources = [PinRef(f"i{i}") for i in range(n_inputs)]
    free = [PinRef(cid, p) for cid in nl.cells for p in masters[nl.cells[cid].master].inputs
            if p != masters[nl.cells[cid].master].clock_pin]
    rng.shuffle(free)
    drivers = sources + [PinRef(cid, masters[nl.cells[cid].master].outputs[0]) for cid in nl.cells]
    loads = {d: [] for d in drivers}
    order = {cid: i for i, cid in enumerate(nl.cells)}

    def allowed(ref):
        if not acyclic or nl.cells[ref.owner].is_sequential:
            return drivers
        return [d for d in drivers if d.is_port or nl.cells[d.owner].is_sequential
                or order[d.owner] < order[ref.owner]]

    for ref in free:
        loads[rng.choice(allowed(ref))].append(ref)
    loads[rng.choice(drivers)].append(PinRef("o0"))
    for k, (d, ls) in enumerate(loads.items()):
        if ls or rng.random() < 0.5:
            nl.add_net(f"n{k}", d, ls)
    return nl


def hand_layout(netlist, view, cells, n_rows, n_cols, ports=None):
    """Placement from explicit (row, col) origins; ports default to the lower-left corner."""
    from omni3d.layout.floorplan import Floorplan
    from omni3d.layout.place import Placement

    site = view.library.cgp_nm
    row_h = view.row_height_nm
    ports = {p: (0.0, 0.0) for p in netlist.ports} | dict(ports or {})
    area = sum(view.area(c.master) for c in netlist.cells.values())
    fp = Floorplan(n_cols * site, n_rows * row_h, row_h, site, n_rows, n_cols,
                   area / (n_cols * site * n_rows * row_h), area, ports)
    widths = {c: view.master(netlist.cells[c].master).width_gp for c in netlist.cells}
    pl = Placement(fp, widths)
    for c, (r, k) in cells.items():
        pl.put(c, r, k)
    return pl
