import math
import statistics
from dataclasses import replace

import pytest

from omni3d.cli import main
from omni3d.dtco import DATA_DIR
from omni3d.flow import (
    ConfigError, FlowConfig, FlowError, FlowRow, clock_sweep, compare_architectures, evaluate,
    implement, load_flow_config, parse_flow_config, run_flow, select_min_edp, sweep_csv,
)
from omni3d.netlist import Flavor

FAST = dict(anneal_moves=2.0, anneal_temps=8)


def test_parse_config():
    cfg = parse_flow_config("# c\ndesign = congested\nseeds = 1, 2 3\nclock_step = 40\nremap_complex = true\n")
    assert cfg.design == "congested" and cfg.seeds == (1, 2, 3)
    assert cfg.clock_step == 40.0 and cfg.remap_complex is True
    assert cfg.periods() == [300.0, 260.0, 220.0, 180.0, 140.0, 100.0]


@pytest.mark.parametrize("text,msg", [
    ("clock_step = 0\n", "clock_step"),
    ("clock_start = 100\nclock_stop = 200\n", "clock_start"),
    ("max_skew = inf\n", "finite"),
    ("flavor_mode = magic\n", "flavor_mode"),
    ("bogus = 1\n", "unknown key"),
    ("utilization = lots\n", "bad value"),
    ("just words\n", "key=value"),
])
def test_config_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_flow_config(text).validate()


def test_shipped_configs_load():
    for path in sorted(DATA_DIR.glob("*.flow")):
        load_flow_config(path).validate()


def test_stage_errors_are_tagged():
    with pytest.raises(FlowError, match=r"^\[design\]"):
        implement(FlowConfig(design="nope"), 1)
    with pytest.raises(FlowError, match=r"^\[floorplan\]"):
        implement(FlowConfig(utilization=0.99), 1)
    with pytest.raises(ConfigError):
        implement(FlowConfig(), 1, stop_after="route")


def test_unroutable_is_invalid_not_fatal():
    impl = implement(FlowConfig(max_route_level=2, **FAST), 1)
    assert impl.routing is None and "route" in impl.error
    row, t, e = evaluate(impl, 200.0)
    assert not row.valid and math.isinf(row.overflow) and t is None and e is None


def test_adder_relaxed_valid():
    res = run_flow(FlowConfig())
    row = res.rows[0]
    assert row.period == 300.0
    assert row.valid and row.overflow == 0
    assert res.best is row
    assert row.edp == pytest.approx(row.energy * row.achieved_delay)


def test_post_flow_netlist():
    impl = implement(FlowConfig(), 1)
    nl, st = impl.netlist, impl.routing
    assert all(c.flavor is not Flavor.UNASSIGNED for c in nl.cells.values())
    assert all(s.kind == "io" for s in st.m8_segments)
    split = [nid for nid, net in nl.nets.items() if net.kind == "signal"
             and len({nl.cells[r.owner].flavor for r in net.loads if not r.is_port}) > 1]
    assert split == []


def test_cfet_single_sided():
    impl = implement(FlowConfig(arch="CFET", **FAST), 1)
    assert impl.flips_clock == impl.flips_data == 0
    assert {r.side for r in impl.routing.routes.values()} == {"top"}
    assert not impl.routing.m8_segments


@pytest.mark.slow
def test_clustering_beats_random_flavors():
    cfg = load_flow_config(DATA_DIR / "congested_omni3d.flow")
    med = {}
    for mode in ("cluster", "random"):
        med[mode] = statistics.median(implement(replace(cfg, flavor_mode=mode), s).routing.overflow_total
                                      for s in range(1, 11))
    assert med["random"] > med["cluster"]


def test_single_period_sweep():
    res = clock_sweep(FlowConfig(clock_start=200, clock_stop=200, **FAST))
    assert len(res.rows) == 1
    assert res.best is (res.rows[0] if res.rows[0].valid else None)


def test_sweep_reports_every_period_when_invalid():
    res = clock_sweep(FlowConfig(max_overflow=-1, **FAST))
    assert [r.period for r in res.rows] == [300.0 - 20 * k for k in range(11)]
    assert res.best is None and not any(r.valid for r in res.rows)
    assert "selected" in sweep_csv(res).splitlines()[0]


def test_selected_row_minimizes_edp():
    res = clock_sweep(FlowConfig(seeds=(1, 2), **FAST))
    assert res.best is not None
    assert all(res.best.edp <= r.edp for r in res.rows if r.valid)


def _row(period, edp, valid=True, seed=1):
    return FlowRow(period, seed, 1.0, 0.0, 0.0, edp, edp, 0, 0.0, valid, 1.0, 1.0, 0)


def test_select_min_edp_rules():
    rows = [_row(300, 5.0), _row(280, 4.0, valid=False), _row(260, 5.0), _row(240, 6.0)]
    # equal EDP: the looser target wins
    assert select_min_edp(rows) is rows[0]
    assert select_min_edp(rows[2:]) is rows[2]
    assert select_min_edp([_row(300, 1.0, valid=False)]) is None


def test_sweep_deterministic(tmp_path):
    cfg = FlowConfig(clock_start=260, clock_stop=200, **FAST)
    a = sweep_csv(clock_sweep(cfg))
    b = sweep_csv(clock_sweep(cfg))
    assert a == b
    clock_sweep(replace(cfg, report_dir=str(tmp_path)))
    assert (tmp_path / "sweep.csv").read_text() == a
    for name in ("timing.csv", "energy.csv", "area.csv", "routing.txt", "wirelength.json", "delay_breakdown.json"):
        assert (tmp_path / name).exists()


def test_compare_with_itself():
    cfg = FlowConfig(clock_start=200, clock_stop=200, **FAST)
    a, b = compare_architectures([cfg, cfg])
    for s in (a, b):
        assert s.edp_ratio == s.energy_ratio == s.delay_ratio == s.area_ratio == 1.0


def test_compare_rejects_mixed_designs():
    with pytest.raises(ConfigError):
        compare_architectures([FlowConfig(), FlowConfig(design="congested")])


@pytest.mark.parametrize("design", ["adder16", "seq_mix"])
def test_noim_not_smaller(design):
    base = FlowConfig(design=design, **FAST)
    omni = implement(base, 1, stop_after="place").core_area
    noim = implement(replace(base, arch="Omni3D_noIM"), 1, stop_after="place").core_area
    assert noim >= omni


# -- CLI ------------------------------------------------------------------------


def test_cli_groups(tmp_path, capsys):
    cfg = tmp_path / "fast.flow"
    cfg.write_text("design = adder16\nanneal_moves = 2\nanneal_temps = 6\nclock_start = 200\nclock_stop = 180\n")
    cases = [
        (["dtco", "pareto"], "dtco_min_edp.json"),
        (["sideplan", "report"], "balance.json"),
        (["pnr", "cts"], "cts.json"),
        (["pnr", "route"], "wirelength.csv"),
        (["flow", "sweep", "--svg"], "sweep.svg"),
        (["report", "emit"], "energy.csv"),
    ]
    for argv, produced in cases:
        out = tmp_path / "_".join(argv[:2])
        assert main(argv + ["--config", str(cfg), "--out", str(out)]) == 0
        assert (out / produced).exists()


def test_cli_errors(tmp_path, capsys):
    assert main(["flow", "run", "--config", str(tmp_path / "missing.flow")]) == 2
    bad = tmp_path / "bad.flow"
    bad.write_text("clock_step = 0\n")
    assert main(["flow", "sweep", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "clock_step" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["flow", "fly"])
