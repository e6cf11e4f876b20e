import itertools
import statistics

import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from gen import hand_layout, random_netlist
from omni3d.fixtures import load_design
from omni3d.flow import FlowConfig, implement
from omni3d.layout.cts import cts
from omni3d.layout.floorplan import FloorplanError, assign_port_sides, build_floorplan
from omni3d.layout.place import (
    AnnealConfig, PlacementError, initial_placement, place, random_placement,
)
from omni3d.layout.route import (
    RouteConfig, RoutingState, global_route, route_clock_unaware, wirelength_by_layer,
)
from omni3d.layout.stack import StackError, load_stack, parse_stack, serialize_stack
from omni3d.netlist import Flavor, Netlist, PinRef, derive_physical_nets
from omni3d.sideplan import apply_assignment, assign_flavors, cluster_cells, flip_clock_buffers

FAST = AnnealConfig(moves_per_cell=2.0, n_temps=8)


def inverters(masters, n):
    nl = Netlist(masters)
    for i in range(n):
        nl.add_cell(f"u{i}", "INVD1", Flavor.TI)
    return nl


def prepared(masters, name="adder16"):
    nl = load_design(name, masters)
    clusters = cluster_cells(nl)
    apply_assignment(nl, assign_flavors(clusters))
    assign_port_sides(nl, True)
    return nl, clusters


# -- floorplan ----------------------------------------------------------------


def test_floorplan_inverters(omni):
    fp = build_floorplan(inverters(omni.library.pin_specs(), 100), omni, 0.8)
    inv = omni.area("INVD1")
    assert inv == omni.master("INVD1").width_gp * 42 * 54
    assert fp.cell_area == 100 * inv
    assert fp.core_area == pytest.approx(100 * inv / 0.8, rel=1e-9)
    assert fp.n_cols * fp.site_width <= fp.core_width + 1e-9


def test_floorplan_ratio_tracks_cell_area(masters, omni, cfet):
    nl = inverters(masters, 100)
    o = build_floorplan(nl, omni, 0.8).core_area
    c = build_floorplan(nl, cfet, 0.8).core_area
    assert o / c == pytest.approx(omni.area("INVD1") / cfet.area("INVD1"), rel=1e-9) == 0.75


def test_floorplan_aes_ratio(masters, omni, cfet):
    nl = load_design("aes_mix", masters)
    r = build_floorplan(nl, omni, 0.85).core_area / build_floorplan(nl, cfet, 0.85).core_area
    assert 1 / 1.5 <= r <= 1 / 1.3


@pytest.mark.parametrize("util", [0.0, 0.4, 0.96, 1.2])
def test_floorplan_bad_utilization(masters, omni, util):
    with pytest.raises(FloorplanError):
        build_floorplan(inverters(masters, 4), omni, util)


def test_floorplan_empty(masters, omni):
    with pytest.raises(FloorplanError, match="empty"):
        build_floorplan(Netlist(masters), omni, 0.8)


def test_port_sides():
    from omni3d.netlist import Port

    class Fake:
        ports = {n: Port(n, "in", s) for n, s in (("a", "either"), ("b", "either"), ("c", "bottom"))}

    assign_port_sides(Fake, True)
    assert [Fake.ports[n].side for n in "abc"] == ["top", "bottom", "bottom"]
    assign_port_sides(Fake, False)
    assert {p.side for p in Fake.ports.values()} == {"top"}


# -- metal stack --------------------------------------------------------------


def test_stack_round_trip():
    s = load_stack("Omni3D")
    again = parse_stack(serialize_stack(s))
    assert serialize_stack(again) == serialize_stack(s)
    assert [l.name for l in again.layers] == [l.name for l in s.layers]


def test_stack_m8_io_only():
    text = serialize_stack(load_stack("Omni3D")).replace("dir=H allow=io", "dir=H allow=sig")
    with pytest.raises(StackError, match="M8"):
        parse_stack(text)


@pytest.mark.parametrize("text,msg", [
    ("layer X pitch=1 width=1 rsq=1 cap=0 dir=D allow=sig\n", "direction"),
    ("layer X pitch=1 width=1 rsq=1 cap=0 dir=H allow=foo\n", "allow"),
    ("layer X pitch=1 width=1 rsq=1 dir=H allow=sig\n", "cap"),
    ("pdn side=top low=0.5 high=0.2\nlayer X pitch=1 width=1 rsq=1 cap=0 dir=H allow=sig\n", "pdn"),
    ("via X\n", "unknown"),
    ("# nothing\n", "no layers"),
])
def test_stack_errors(text, msg):
    with pytest.raises(StackError, match=msg):
        parse_stack(text)


def test_stack_mirror():
    s = load_stack("Omni3D")
    assert s.double_sided and s.io_layer().name == "M8"
    top = s.routing_layers("top")
    bot = s.routing_layers("bottom")
    assert [l.level for l in top] == [l.level for l in bot] == [2, 3, 4, 5, 6, 7]
    for a, b in zip(top, bot):
        assert (a.pitch, a.width, a.rsq, a.cap, a.direction) == (b.pitch, b.width, b.rsq, b.cap, b.direction)


def test_stack_pdn_ramp():
    s = load_stack("Omni3D")
    for side in ("top", "bottom"):
        dens = [s.pdn_density(l) for l in s.routing_layers(side)]
        assert dens[0] == pytest.approx(0.06) and dens[-1] == pytest.approx(0.15)
        assert dens == sorted(dens)
    assert s.pdn_density(s.io_layer()) == 0.0


def test_cfet_stack_backside_power():
    s = load_stack("CFET")
    assert not s.double_sided and s.sides == ("top",)
    assert {l.allow for l in s.layers if l.side == "bottom"} == {"pwr"}
    assert s.io_layer() is None
    assert all(s.pdn_density(l) == 0.0 for l in s.routing_layers("top"))


# -- placement ----------------------------------------------------------------


def test_single_cell_centered(masters, omni):
    nl = inverters(masters, 1)
    nl.add_port("a", "in", "top")
    nl.add_net("n", PinRef("a"), [PinRef("u0", "I")])
    fp = build_floorplan(nl, omni, 0.5)
    pl = place(nl, fp, omni, seed=3)
    row, col = pl.pos["u0"]
    assert row == fp.n_rows // 2 and col == (fp.n_cols - pl.widths["u0"]) // 2
    assert pl.hpwl([PinRef("u0", "I")]) == 0.0


def test_cluster_seed_beats_random(masters, omni):
    nl, clusters = prepared(masters)
    fp = build_floorplan(nl, omni, 0.85)
    nets = derive_physical_nets(nl)
    seeded = initial_placement(nl, fp, omni, clusters).total_hpwl(nets)
    rand = [random_placement(nl, fp, omni, s).total_hpwl(nets) for s in range(20)]
    assert seeded < statistics.mean(rand)


def test_anneal_improves_and_is_legal(masters, omni):
    nl, clusters = prepared(masters)
    fp = build_floorplan(nl, omni, 0.85)
    nets = derive_physical_nets(nl)
    start = initial_placement(nl, fp, omni, clusters).total_hpwl(nets)
    pl = place(nl, fp, omni, clusters, seed=2, config=FAST)
    pl.check_legal()
    assert set(pl.pos) == set(nl.cells)
    assert pl.total_hpwl(nets) < start


def test_place_deterministic(masters, omni):
    nl, clusters = prepared(masters)
    fp = build_floorplan(nl, omni, 0.85)
    a = place(nl, fp, omni, clusters, seed=7, config=FAST).dumps()
    b = place(nl, fp, omni, clusters, seed=7, config=FAST).dumps()
    assert a == b


@pytest.mark.parametrize("design", ["congested", "aes_mix"])
def test_initial_cluster_contiguous(masters, omni, design):
    nl, clusters = prepared(masters, design)
    fp = build_floorplan(nl, omni, 0.85)
    pl = initial_placement(nl, fp, omni, clusters)
    # serpentine fill: a cluster's cells occupy consecutive slots of the fill order
    slots = sorted(pl.pos, key=lambda c: (pl.pos[c][0], pl.pos[c][1] if pl.pos[c][0] % 2 == 0 else -pl.pos[c][1]))
    index = {c: i for i, c in enumerate(slots)}
    for cl in clusters:
        idx = sorted(index[m] for m in cl.members)
        assert idx[-1] - idx[0] == len(idx) - 1


def test_overfull_core(masters, omni):
    nl = inverters(masters, 30)
    pl = hand_layout(nl, omni, {}, 1, 20)
    with pytest.raises(PlacementError, match="utilization"):
        place(nl, pl.floorplan, omni)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 40), st.integers(0, 10 ** 6))
def test_place_legal_random(masters, omni, n, seed):
    nl = random_netlist(masters, n, seed)
    assign_port_sides(nl, True)
    fp = build_floorplan(nl, omni, 0.7)
    pl = place(nl, fp, omni, cluster_cells(nl), seed=seed, config=AnnealConfig(moves_per_cell=1.0, n_temps=3))
    pl.check_legal()
    assert set(pl.pos) == set(nl.cells)


# -- clock tree ---------------------------------------------------------------


def flops(masters, omni, coords, n_rows=8, n_cols=80):
    nl = Netlist(masters)
    nl.add_port("clk", "in", "top")
    cells = {}
    for i, rc in enumerate(coords):
        nl.add_cell(f"r{i}", "DFFD1", Flavor.TI)
        cells[f"r{i}"] = rc
    if coords:
        nl.add_net("clk", PinRef("clk"), [PinRef(f"r{i}", "CK") for i in range(len(coords))], "clock")
    return nl, hand_layout(nl, omni, cells, n_rows, n_cols)


def test_cts_single_sink(masters, omni):
    nl, pl = flops(masters, omni, [(3, 30)])
    tree = cts(nl, pl, omni)
    assert tree.buffers == [] and tree.skew == 0.0


def test_cts_four_corners(masters, omni):
    nl, pl = flops(masters, omni, [(0, 0), (0, 65), (7, 0), (7, 65)])
    tree = cts(nl, pl, omni, max_fanout=2)
    assert len(tree.buffers) == 2
    assert tree.skew < 1.0
    pl.check_legal()


def test_cts_no_sinks(masters, omni):
    nl, pl = flops(masters, omni, [])
    tree = cts(nl, pl, omni)
    assert tree.levels == [] and tree.insertion == {}


def test_cts_fanout_and_flip(masters, omni):
    coords = [(r, 2 + 16 * c) for r in range(16) for c in range(4)]
    nl, pl = flops(masters, omni, coords, n_rows=16, n_cols=80)
    nl.cells["r5"].flavor = Flavor.BI
    tree = cts(nl, pl, omni, seed=1, max_fanout=4)
    for nid, net in nl.nets.items():
        if net.kind == "clock":
            assert len(net.loads) <= 4
    assert sorted(tree.insertion) == sorted(f"r{i}" for i in range(64))
    state = route_clock_unaware(nl, pl, load_stack("Omni3D"), config=RouteConfig(gcell_sites=8, gcell_rows=2))
    assert any(s.kind == "clock" for s in state.m8_segments)
    flip_clock_buffers(nl, state)
    assert not [s for s in state.m8_segments if s.kind == "clock"]


# -- global routing -----------------------------------------------------------


def port_nets(masters, cfet, rows):
    """One port-to-port net per (row_in, row_out) pair across a 3x2 gcell grid."""
    nl = Netlist(masters)
    ports = {}
    width = 6 * cfet.library.cgp_nm
    for k, (ya, yb) in enumerate(rows):
        nl.add_port(f"a{k}", "in", "top")
        nl.add_port(f"z{k}", "out", "top")
        nl.add_net(f"n{k}", PinRef(f"a{k}"), [PinRef(f"z{k}")])
        ports[f"a{k}"] = (0.0, (ya + 0.5) * cfet.row_height_nm)
        ports[f"z{k}"] = (width, (yb + 0.5) * cfet.row_height_nm)
    pl = hand_layout(nl, cfet, {}, 2, 6, ports)
    state = RoutingState(nl, pl, load_stack("CFET"), RouteConfig(gcell_sites=2, gcell_rows=1, max_level=3))
    h = state.layer_index["TM2"]
    for y in range(state.ny):
        state.cap[h][state._flat(1, y)] = 1
    state.cap2 = {k: [sum(state.cap[i][g] for i in v) for g in range(state.nx * state.ny)]
                  for k, v in state.dir_layers.items()}
    return state


def brute_min_overflow(state, rows):
    """Every combination of simple gcell paths; per-gcell usage counted once per net and direction."""
    grid = nx.grid_2d_graph(state.nx, state.ny)
    li = {"H": state.layer_index["TM2"], "V": state.layer_index["TM3"]}
    options = []
    for ya, yb in rows:
        uses = set()
        for path in nx.all_simple_paths(grid, (0, ya), (state.nx - 1, yb)):
            u = set()
            for a, b in zip(path, path[1:]):
                d = "H" if a[1] == b[1] else "V"
                u.add((d, state._flat(*a)))
                u.add((d, state._flat(*b)))
            uses.add(frozenset(u))
        options.append(uses)
    best = None
    for combo in itertools.product(*options):
        count = {}
        for u in combo:
            for k in u:
                count[k] = count.get(k, 0) + 1
        ov = sum(max(0, c - state.cap[li[d]][g]) for (d, g), c in count.items())
        best = ov if best is None else min(best, ov)
    return best


@pytest.mark.parametrize("rows", [
    [(0, 0)], [(0, 0), (0, 0)], [(0, 1), (1, 0)], [(0, 0), (0, 0), (1, 1)],
    [(0, 0)] * 3, [(0, 0), (1, 1), (0, 1), (1, 0)],
])
def test_overflow_matches_brute_force(masters, cfet, rows):
    state = port_nets(masters, cfet, rows)
    state.route_all()
    assert state.overflow_total == brute_min_overflow(state, rows)
    assert state.overflow_total == sum(max(0, state.use[l][g] - state.cap[l][g])
                                       for l in range(len(state.layers)) for g in range(state.nx * state.ny))


def test_two_pins_same_gcell(masters, omni):
    nl = Netlist(masters)
    nl.add_cell("a", "INVD1", Flavor.TI)
    nl.add_cell("b", "INVD1", Flavor.TI)
    nl.add_net("n", PinRef("a", "ZN"), [PinRef("b", "I")])
    pl = hand_layout(nl, omni, {"a": (0, 0), "b": (0, 3)}, 2, 20)
    state = global_route(nl, pl, load_stack("Omni3D"))
    assert state.logical_length("n") == 0.0
    assert len(state.segments("n@top")) == 1


@pytest.fixture(scope="module")
def routed():
    return implement(FlowConfig(), 1)


def test_m8_carries_only_io(routed):
    st_ = routed.routing
    assert all(s.kind == "io" and s.pin.is_port for s in st_.m8_segments)
    assert "M8" not in {st_.layers[li].name for r in st_.routes.values() for li, *_ in r.edges}


def test_routes_stay_on_their_side(routed):
    st_ = routed.routing
    for r in st_.routes.values():
        assert {st_.layers[li].side for li, *_ in r.edges} <= {r.side}
        for li, x, y, d in r.edges:
            assert st_.layers[li].direction == d


def test_wirelength_conservation(routed):
    st_ = routed.routing
    table = wirelength_by_layer(st_)
    per_layer = sum(v for k, v in table.items() if k.startswith(("TM", "BM")))
    assert per_layer == pytest.approx(sum(r.length_um for r in st_.routes.values()), rel=1e-9)
    for k in range(2, 8):
        assert table[f"M{k}"] == pytest.approx(table[f"TM{k}"] + table[f"BM{k}"])


def test_length_at_least_hpwl(routed):
    for r in routed.routing.routes.values():
        assert r.length_um >= r.hpwl_um - 1e-9


def test_rrr_log_monotone(routed):
    log = routed.routing.rrr_log
    assert all(b <= a for a, b in zip(log, log[1:]))


def test_route_deterministic(masters):
    a = implement(FlowConfig(anneal_moves=2.0, anneal_temps=6), 4).routing.hash()
    b = implement(FlowConfig(anneal_moves=2.0, anneal_temps=6), 4).routing.hash()
    assert a == b


def test_wirelength_table_empty():
    table = wirelength_by_layer(None, load_stack("Omni3D"))
    assert set(table) == {f"{p}M{k}" for p in ("T", "B", "") for k in range(2, 8)}
    assert not any(table.values())
    assert wirelength_by_layer(None) == {}


def test_wirelength_single_run(masters, cfet):
    nl = Netlist(masters)
    nl.add_cell("a", "INVD1", Flavor.TI)
    nl.add_cell("b", "INVD1", Flavor.TI)
    nl.add_net("n", PinRef("a", "ZN"), [PinRef("b", "I")])
    # three gcells apart: short enough to stay on the lowest layer pair
    pl = hand_layout(nl, cfet, {"a": (0, 0), "b": (0, 30)}, 1, 60)
    state = global_route(nl, pl, load_stack("CFET"), config=RouteConfig(gcell_sites=10, gcell_rows=1))
    table = wirelength_by_layer(state)
    assert table["TM2"] == pytest.approx(3 * 10 * cfet.library.cgp_nm / 1000)
    assert sum(table.values()) == table["TM2"]


def test_double_sided_lowers_m2_m3_density():
    res = {}
    for arch in ("Omni3D", "CFET"):
        impl = implement(FlowConfig(arch=arch, anneal_moves=2.0, anneal_temps=8), 1)
        wl = wirelength_by_layer(impl.routing)
        res[arch] = (wl, impl.core_area)
    wl_c, a_c = res["CFET"]
    wl_o, a_o = res["Omni3D"]
    cfet_density = (wl_c["TM2"] + wl_c["TM3"]) / a_c
    for side in ("T", "B"):
        assert (wl_o[f"{side}M2"] + wl_o[f"{side}M3"]) / a_o < cfet_density
