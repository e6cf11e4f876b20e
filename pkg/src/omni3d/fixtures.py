"""Synthetic gate-level designs used by tests, examples and the shipped flow configs."""

from __future__ import annotations

import random
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

from .netlist import MasterPins, Netlist, PinRef, serialize_netlist

DESIGN_DIR = Path(__file__).resolve().parent / "data" / "designs"

# Rough standard-cell mix of a synthesized cipher round: XOR-rich, a register
# per ~8 gates, a few complex gates and muxes.
AES_MIX: Dict[str, float] = {
    # area dominated by INV/ND2/NR2 and flops, with DFFs about a third of CFET cell area
    "INVD1": 0.25, "BUFD1": 0.06, "ND2D1": 0.22, "NR2D1": 0.14, "ND3D1": 0.02, "NR3D1": 0.02,
    "AN2D1": 0.02, "OR2D1": 0.02, "XOR2D1": 0.04, "XNR2D1": 0.02, "AOI21D1": 0.04,
    "OAI21D1": 0.03, "AOI22D1": 0.03, "OAI22D1": 0.02, "MUX2D1": 0.01, "DFFD1": 0.05,
}
RANDOM_MIX: Dict[str, float] = {
    "INVD1": 0.15, "BUFD1": 0.05, "ND2D1": 0.2, "NR2D1": 0.15, "AOI21D1": 0.1, "OAI21D1": 0.1,
    "XOR2D1": 0.1, "MUX2D1": 0.05, "DFFD1": 0.1,
}
SEQ_MIX: Dict[str, float] = {"DFFD1": 0.35, "MUX2D1": 0.3, "INVD1": 0.15, "ND2D1": 0.2}


def ripple_adder(masters: Mapping[str, MasterPins], bits: int = 16) -> Netlist:
    """Registered ripple-carry adder: input and output flops around a carry chain."""
    nl = Netlist(masters)
    nl.add_port("clk", "in")
    sinks: List[PinRef] = []

    def reg(name: str, d_src: PinRef) -> PinRef:
        nl.add_cell(name, "DFFD1")
        nl.add_net(f"d_{name}", d_src, [PinRef(name, "D")])
        sinks.append(PinRef(name, "CK"))
        return PinRef(name, "Q")

    for port in [f"a{i}" for i in range(bits)] + [f"b{i}" for i in range(bits)] + ["cin"]:
        nl.add_port(port, "in")
    loads: Dict[PinRef, List[PinRef]] = {}
    qa, qb = [], []
    for i in range(bits):
        for bus, q in (("a", qa), ("b", qb)):
            name = f"r{bus}{i}"
            nl.add_cell(name, "DFFD1")
            nl.add_net(f"d_{name}", PinRef(f"{bus}{i}"), [PinRef(name, "D")])
            sinks.append(PinRef(name, "CK"))
            q.append(PinRef(name, "Q"))
    nl.add_cell("rcin", "DFFD1")
    nl.add_net("d_rcin", PinRef("cin"), [PinRef("rcin", "D")])
    sinks.append(PinRef("rcin", "CK"))
    carry = PinRef("rcin", "Q")
    sums = []
    for i in range(bits):
        x1, x2, mj = f"fa{i}_x1", f"fa{i}_x2", f"fa{i}_mj"
        nl.add_cell(x1, "XOR2D1")
        nl.add_cell(x2, "XOR2D1")
        nl.add_cell(mj, "MAJ3D1")
        loads.setdefault(qa[i], []).extend([PinRef(x1, "A1"), PinRef(mj, "A")])
        loads.setdefault(qb[i], []).extend([PinRef(x1, "A2"), PinRef(mj, "B")])
        loads.setdefault(carry, []).extend([PinRef(x2, "A2"), PinRef(mj, "C")])
        loads.setdefault(PinRef(x1, "Z"), []).append(PinRef(x2, "A1"))
        sums.append(PinRef(x2, "Z"))
        carry = PinRef(mj, "Z")
    for drv, lds in loads.items():
        nl.add_net(f"n_{drv.owner}", drv, lds)
    for i, s in enumerate(sums):
        q = reg(f"rs{i}", s)
        nl.add_port(f"s{i}", "out")
        nl.add_net(f"q_rs{i}", q, [PinRef(f"s{i}")])
    q = reg("rcout", carry)
    nl.add_port("cout", "out")
    nl.add_net("q_rcout", q, [PinRef("cout")])
    nl.add_net("clk", PinRef("clk"), sinks, kind="clock")
    return nl


def random_logic(masters: Mapping[str, MasterPins], n_cells: int, seed: int,
                 mix: Optional[Mapping[str, float]] = None, n_inputs: int = 16,
                 window: int = 24, p_global: float = 0.1, max_fanout: int = 6) -> Netlist:
    """Random registered logic with mostly local connectivity.

    Each gate input draws from the ``window`` most recent signals, or from any
    signal with probability ``p_global``; high ``p_global`` gives long,
    congestion-prone nets.  Dangling signals become output ports.
    """
    rng = random.Random(seed)
    mix = dict(mix or RANDOM_MIX)
    names = sorted(mix)
    weights = [mix[n] for n in names]
    nl = Netlist(masters)
    nl.add_port("clk", "in")
    signals: List[PinRef] = []
    for i in range(n_inputs):
        nl.add_port(f"in{i}", "in")
        signals.append(PinRef(f"in{i}"))
    picks = rng.choices(names, weights, k=n_cells)
    flops = []
    gates = []
    for i, m in enumerate(picks):
        cid = f"u{i}"
        nl.add_cell(cid, m)
        (flops if masters[m].is_sequential else gates).append(cid)
    for f in flops:
        signals.append(PinRef(f, masters[nl.cells[f].master].outputs[0]))
    loads: Dict[PinRef, List[PinRef]] = {s: [] for s in signals}

    def pick(pool: List[PinRef]) -> PinRef:
        for _ in range(8):
            if rng.random() < p_global:
                s = rng.choice(pool)
            else:
                s = rng.choice(pool[-window:])
            if len(loads[s]) < max_fanout:
                return s
        return s

    for g in gates:
        m = masters[nl.cells[g].master]
        used = set()
        for pin in m.inputs:
            s = pick(signals)
            if s in used:
                s = pick(signals)
            used.add(s)
            loads[s].append(PinRef(g, pin))
        out = PinRef(g, m.outputs[0])
        signals.append(out)
        loads[out] = []
    unused = [s for s in signals if not loads[s] and not s.is_port]
    for f in flops:
        src = unused.pop() if unused else pick(signals)
        loads[src].append(PinRef(f, "D"))
    for k, s in enumerate(unused):
        nl.add_port(f"out{k}", "out")
        loads[s].append(PinRef(f"out{k}"))
    for s in signals:
        if loads[s]:
            nl.add_net(f"n_{s.owner}", s, loads[s])
    if flops:
        nl.add_net("clk", PinRef("clk"), [PinRef(f, "CK") for f in flops], kind="clock")
    else:
        del nl.ports["clk"]
    return nl


def sliced_logic(masters: Mapping[str, MasterPins], n_slices: int, slice_cells: int, seed: int,
                 mix: Optional[Mapping[str, float]] = None, p_cross: float = 0.3,
                 inputs_per_slice: int = 3, window: int = 8, max_fanout: int = 4) -> Netlist:
    """Bit-sliced random logic: multi-load nets stay inside a slice.

    With probability ``p_cross`` a gate input instead consumes an unused
    signal of another slice as that net's only load, which creates long wires
    without merging the slices' sibling clusters.
    """
    rng = random.Random(seed)
    mix = dict(mix or RANDOM_MIX)
    names = sorted(mix)
    weights = [mix[n] for n in names]
    nl = Netlist(masters)
    nl.add_port("clk", "in")
    loads: Dict[PinRef, List[PinRef]] = {}
    closed: set = set()
    pools: List[List[PinRef]] = []
    slices: List[Tuple[List[str], List[str]]] = []
    flops_all: List[str] = []
    for s in range(n_slices):
        pool: List[PinRef] = []
        for i in range(inputs_per_slice):
            port = f"in{s}_{i}"
            nl.add_port(port, "in")
            pool.append(PinRef(port))
        gates, flops = [], []
        for i, m in enumerate(rng.choices(names, weights, k=slice_cells)):
            cid = f"s{s}_u{i}"
            nl.add_cell(cid, m)
            (flops if masters[m].is_sequential else gates).append(cid)
        for f in flops:
            pool.append(PinRef(f, "Q"))
        for ref in pool:
            loads[ref] = []
        pools.append(pool)
        slices.append((gates, flops))
        flops_all.extend(flops)

    def local(s: int) -> PinRef:
        pool = [p for p in pools[s][-window:] if p not in closed and len(loads[p]) < max_fanout]
        if not pool:
            pool = [p for p in pools[s] if p not in closed] or pools[s]
        return rng.choice(pool)

    def remote(s: int) -> Optional[PinRef]:
        others = [t for t in range(n_slices) if t != s]
        rng.shuffle(others)
        for t in others[:4]:
            fresh = [p for p in pools[t] if not loads[p] and not p.is_port]
            if fresh:
                return rng.choice(fresh)
        return None

    # interleave slices so cross-slice picks see partially built neighbours
    order = [(s, g) for k in range(slice_cells) for s in range(n_slices) if k < len(slices[s][0])
             for g in [slices[s][0][k]]]
    for s, g in order:
        m = masters[nl.cells[g].master]
        used = set()
        for pin in m.inputs:
            src = remote(s) if rng.random() < p_cross else None
            if src is not None:
                closed.add(src)
            else:
                src = local(s)
                if src in used:
                    src = local(s)
            used.add(src)
            loads[src].append(PinRef(g, pin))
        out = PinRef(g, m.outputs[0])
        pools[s].append(out)
        loads[out] = []
    n_out = 0
    for s, (gates, flops) in enumerate(slices):
        unused = [p for p in pools[s] if not loads[p] and not p.is_port]
        for f in flops:
            src = unused.pop() if unused else local(s)
            loads[src].append(PinRef(f, "D"))
        for p in unused:
            nl.add_port(f"out{n_out}", "out")
            loads[p].append(PinRef(f"out{n_out}"))
            n_out += 1
    for pool in pools:
        for p in pool:
            if loads[p]:
                nl.add_net(f"n_{p.owner}", p, loads[p])
    if flops_all:
        nl.add_net("clk", PinRef("clk"), [PinRef(f, "CK") for f in flops_all], kind="clock")
    else:
        del nl.ports["clk"]
    return nl


def remap_complex_gates(netlist: Netlist) -> Netlist:
    """Rewrite AOI22/OAI22 as an AND/OR feeding AOI21/OAI21 (same logic function).

    Mirrors what synthesis does when the larger complex gates lose their
    pin-access advantage.
    """
    out = netlist.copy()
    pairs = {"AOI22D1": ("AN2D1", "AOI21D1"), "OAI22D1": ("OR2D1", "OAI21D1")}
    for cid in sorted(out.cells):
        cell = out.cells[cid]
        if cell.master not in pairs:
            continue
        pre_m, main_m = pairs[cell.master]
        pre = f"{cid}_p"
        nids = {out.net_of(PinRef(cid, p)) for p in ("A1", "A2", "B1", "B2", "ZN")} - {None}
        removed = {nid: out.remove_net(nid) for nid in sorted(nids)}
        flavor = cell.flavor
        del out.cells[cid]
        out.add_cell(pre, pre_m, flavor)
        out.add_cell(cid, main_m, flavor)
        new_pin = {"A1": PinRef(cid, "A1"), "A2": PinRef(cid, "A2"), "B1": PinRef(pre, "A1"),
                   "B2": PinRef(pre, "A2"), "ZN": PinRef(cid, "ZN")}
        for nid, net in removed.items():
            drv = new_pin[net.driver.pin] if net.driver.owner == cid else net.driver
            loads = [new_pin[l.pin] if l.owner == cid else l for l in net.loads]
            out.add_net(nid, drv, loads, net.kind)
        out.add_net(f"{cid}_pz", PinRef(pre, "Z"), [PinRef(cid, "B")])
    return out


def shipped_designs(masters: Mapping[str, MasterPins]) -> Dict[str, Netlist]:
    return {
        "adder16": ripple_adder(masters, 16),
        "congested": sliced_logic(masters, 24, 25, seed=3, p_cross=0.3),
        "aes_mix": random_logic(masters, 900, seed=11, mix=AES_MIX, window=48, p_global=0.05, n_inputs=32),
        "seq_mix": random_logic(masters, 300, seed=5, mix=SEQ_MIX, window=24, n_inputs=16),
    }


def write_shipped_designs(masters: Mapping[str, MasterPins], out_dir: Path = DESIGN_DIR) -> List[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, nl in shipped_designs(masters).items():
        p = out_dir / f"{name}.net"
        p.write_text(serialize_netlist(nl))
        paths.append(p)
    return paths


def load_design(name: str, masters: Mapping[str, MasterPins]) -> Netlist:
    from .netlist import parse_netlist
    path = Path(name)
    if not path.exists():
        path = DESIGN_DIR / f"{name}.net"
    return parse_netlist(path.read_text(), masters)
