"""Flat gate-level netlist model, text format reader/writer and hypergraph queries.

File grammar (one statement per line, ``#`` starts a comment)::

    port <name> <in|out> <top|bottom|either>
    cell <instance> <master> [flavor=TI|BI]
    net <name> [clock|power] <driver> <load> ...

Pins are written ``inst.pin``; a bare name refers to a block port.  The first
pin of a ``net`` statement is the driver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Tuple


class NetlistError(ValueError):
    """Raised for malformed or inconsistent netlists."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class Flavor(str, Enum):
    TI = "TI"
    BI = "BI"
    UNASSIGNED = "Unassigned"

    @property
    def side(self) -> str:
        if self is Flavor.TI:
            return "top"
        if self is Flavor.BI:
            return "bottom"
        raise NetlistError("flavor is unassigned")

    def flipped(self) -> "Flavor":
        if self is Flavor.UNASSIGNED:
            raise NetlistError("cannot flip an unassigned flavor")
        return Flavor.BI if self is Flavor.TI else Flavor.TI


SIDES = ("top", "bottom")
NET_KINDS = ("signal", "clock", "power")


@dataclass(frozen=True)
class MasterPins:
    """Pin interface of a library master as seen by the netlist."""

    name: str
    inputs: Tuple[str, ...]
    outputs: Tuple[str, ...]
    clock_pin: Optional[str] = None
    is_clock_buffer: bool = False

    @property
    def is_sequential(self) -> bool:
        return self.clock_pin is not None

    @property
    def pins(self) -> Tuple[str, ...]:
        return self.inputs + self.outputs


@dataclass(frozen=True, order=True)
class PinRef:
    """A net terminal: ``owner.pin`` for cell pins, ``pin is None`` for ports."""

    owner: str
    pin: Optional[str] = None

    @property
    def is_port(self) -> bool:
        return self.pin is None

    def __str__(self) -> str:
        return self.owner if self.pin is None else f"{self.owner}.{self.pin}"


@dataclass
class CellInstance:
    id: str
    master: str
    flavor: Flavor = Flavor.UNASSIGNED
    is_sequential: bool = False
    is_clock_buffer: bool = False


@dataclass
class LogicalNet:
    id: str
    driver: PinRef
    loads: List[PinRef] = field(default_factory=list)
    kind: str = "signal"

    @property
    def pins(self) -> List[PinRef]:
        return [self.driver] + list(self.loads)


@dataclass
class Port:
    name: str
    direction: str  # "in" | "out"
    side: str  # "top" | "bottom" | "either"


@dataclass
class PhysicalNet:
    """One side's share of a logical net.

    ``port_stubs`` lists block ports reached from this side through the I/O
    layer because their declared side differs from ``side``.
    """

    logical: str
    side: str
    driver: PinRef
    loads: List[PinRef]
    port_stubs: List[str] = field(default_factory=list)

    @property
    def key(self) -> str:
        return f"{self.logical}@{self.side}"

    @property
    def pins(self) -> List[PinRef]:
        return [self.driver] + list(self.loads)


class Netlist:
    """Cells, logical nets and block ports with connectivity indexes."""

    def __init__(self, masters: Mapping[str, MasterPins]):
        self.masters = dict(masters)
        self.cells: Dict[str, CellInstance] = {}
        self.nets: Dict[str, LogicalNet] = {}
        self.ports: Dict[str, Port] = {}
        self._pin_net: Dict[PinRef, str] = {}

    # -- construction -------------------------------------------------------

    def add_port(self, name: str, direction: str, side: str = "either") -> Port:
        if direction not in ("in", "out"):
            raise NetlistError(f"bad port direction {direction!r}")
        if side not in ("top", "bottom", "either"):
            raise NetlistError(f"bad port side {side!r}")
        if name in self.ports or name in self.cells:
            raise NetlistError(f"duplicate id {name!r}")
        port = Port(name, direction, side)
        self.ports[name] = port
        return port

    def add_cell(self, inst: str, master: str, flavor: Flavor = Flavor.UNASSIGNED) -> CellInstance:
        if inst in self.cells or inst in self.ports:
            raise NetlistError(f"duplicate id {inst!r}")
        if master not in self.masters:
            raise NetlistError(f"undeclared master {master!r}")
        m = self.masters[master]
        cell = CellInstance(inst, master, Flavor(flavor), m.is_sequential, m.is_clock_buffer)
        self.cells[inst] = cell
        return cell

    def _check_pin(self, ref: PinRef, as_driver: bool) -> None:
        if ref.is_port:
            port = self.ports.get(ref.owner)
            if port is None:
                raise NetlistError(f"dangling pin {ref}: no such port or instance")
            if as_driver and port.direction != "in":
                raise NetlistError(f"output port {ref} cannot drive a net")
            if not as_driver and port.direction != "out":
                raise NetlistError(f"input port {ref} cannot be a load")
            return
        cell = self.cells.get(ref.owner)
        if cell is None:
            raise NetlistError(f"dangling pin {ref}: no instance {ref.owner!r}")
        m = self.masters[cell.master]
        allowed = m.outputs if as_driver else m.inputs
        if ref.pin not in allowed:
            kind = "output" if as_driver else "input"
            raise NetlistError(f"dangling pin {ref}: {cell.master} has no {kind} pin {ref.pin!r}")

    def add_net(self, name: str, driver: PinRef, loads: Iterable[PinRef] = (), kind: str = "signal") -> LogicalNet:
        if name in self.nets:
            raise NetlistError(f"duplicate id {name!r}")
        if kind not in NET_KINDS:
            raise NetlistError(f"bad net kind {kind!r}")
        loads = list(loads)
        if kind == "power" and loads:
            raise NetlistError(f"power net {name!r} cannot carry signal loads")
        self._check_pin(driver, as_driver=True)
        seen = {driver}
        for ref in loads:
            self._check_pin(ref, as_driver=False)
            if ref in seen:
                raise NetlistError(f"pin {ref} appears twice on net {name!r}")
            seen.add(ref)
        for ref in seen:
            if ref in self._pin_net:
                raise NetlistError(f"pin {ref} already connected to net {self._pin_net[ref]!r}")
        net = LogicalNet(name, driver, loads, kind)
        self.nets[name] = net
        for ref in seen:
            self._pin_net[ref] = name
        return net

    def remove_net(self, name: str) -> LogicalNet:
        net = self.nets.pop(name)
        for ref in net.pins:
            self._pin_net.pop(ref, None)
        return net

    def copy(self) -> "Netlist":
        other = Netlist(self.masters)
        for p in self.ports.values():
            other.add_port(p.name, p.direction, p.side)
        for c in self.cells.values():
            other.add_cell(c.id, c.master, c.flavor)
        for n in self.nets.values():
            other.add_net(n.id, n.driver, n.loads, n.kind)
        return other

    # -- queries ------------------------------------------------------------

    def net_of(self, ref: PinRef) -> Optional[str]:
        return self._pin_net.get(ref)

    def master_of(self, cell_id: str) -> MasterPins:
        return self.masters[self.cells[cell_id].master]

    def flavors(self) -> Dict[str, Flavor]:
        return {cid: c.flavor for cid, c in self.cells.items()}

    def set_flavors(self, flavors: Mapping[str, Flavor]) -> None:
        for cid, fl in flavors.items():
            self.cells[cid].flavor = Flavor(fl)

    def fanout_nets(self, cell_id: str) -> List[LogicalNet]:
        m = self.master_of(cell_id)
        out = []
        for pin in m.outputs:
            nid = self._pin_net.get(PinRef(cell_id, pin))
            if nid is not None:
                out.append(self.nets[nid])
        return sorted(out, key=lambda n: n.id)

    def validate(self) -> None:
        """Re-check every invariant; raises :class:`NetlistError`."""
        for net in self.nets.values():
            self._check_pin(net.driver, True)
            for ref in net.loads:
                self._check_pin(ref, False)
            if net.kind == "power" and net.loads:
                raise NetlistError(f"power net {net.id!r} has loads")


def fanin_nets(netlist: Netlist, cell: str, include_clock: bool = True) -> List[LogicalNet]:
    """Signal (and, by default, clock) nets with a load pin on ``cell``, by net id."""
    if cell not in netlist.cells:
        raise NetlistError(f"unknown cell {cell!r}")
    m = netlist.master_of(cell)
    ids = set()
    for pin in m.inputs:
        nid = netlist.net_of(PinRef(cell, pin))
        if nid is None:
            continue
        kind = netlist.nets[nid].kind
        if kind == "power" or (kind == "clock" and not include_clock):
            continue
        ids.add(nid)
    return [netlist.nets[n] for n in sorted(ids)]


def fanout_cells(netlist: Netlist, net: str) -> List[CellInstance]:
    """Distinct load instances of ``net``, ordered by instance id."""
    if net not in netlist.nets:
        raise NetlistError(f"unknown net {net!r}")
    ids = {ref.owner for ref in netlist.nets[net].loads if not ref.is_port}
    return [netlist.cells[c] for c in sorted(ids)]


# -- text format ------------------------------------------------------------


def _parse_pin(token: str) -> PinRef:
    if "." in token:
        owner, pin = token.split(".", 1)
        if not owner or not pin:
            raise ValueError(token)
        return PinRef(owner, pin)
    return PinRef(token)


def parse_netlist(text: str, masters: Mapping[str, MasterPins]) -> Netlist:
    """Parse netlist text against the pin interfaces in ``masters``.

    Nets may reference cells and ports declared later in the file; resolution
    happens after all declarations are read.
    """
    nl = Netlist(masters)
    pending: List[Tuple[int, str, str, List[str]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        kw = tok[0]
        try:
            if kw == "port":
                if len(tok) != 4:
                    raise NetlistError("expected: port <name> <in|out> <top|bottom|either>", lineno)
                nl.add_port(tok[1], tok[2], tok[3])
            elif kw == "cell":
                if len(tok) not in (3, 4):
                    raise NetlistError("expected: cell <instance> <master> [flavor=TI|BI]", lineno)
                flavor = Flavor.UNASSIGNED
                if len(tok) == 4:
                    key, _, val = tok[3].partition("=")
                    if key != "flavor" or val not in ("TI", "BI"):
                        raise NetlistError(f"bad cell attribute {tok[3]!r}", lineno)
                    flavor = Flavor(val)
                nl.add_cell(tok[1], tok[2], flavor)
            elif kw == "net":
                if len(tok) < 3:
                    raise NetlistError("expected: net <name> [clock|power] <driver> <loads...>", lineno)
                kind = "signal"
                rest = tok[2:]
                if rest[0] in ("clock", "power"):
                    kind = rest[0]
                    rest = rest[1:]
                if not rest:
                    raise NetlistError(f"net {tok[1]!r} has no driver", lineno)
                pending.append((lineno, tok[1], kind, rest))
            else:
                raise NetlistError(f"unknown statement {kw!r}", lineno)
        except NetlistError as exc:
            if exc.line is None:
                raise NetlistError(str(exc), lineno) from None
            raise
    for lineno, name, kind, pins in pending:
        try:
            refs = [_parse_pin(p) for p in pins]
        except ValueError as exc:
            raise NetlistError(f"malformed pin {exc}", lineno) from None
        try:
            nl.add_net(name, refs[0], refs[1:], kind)
        except NetlistError as exc:
            raise NetlistError(str(exc), lineno) from None
    return nl


def serialize_netlist(netlist: Netlist) -> str:
    lines = []
    for name in sorted(netlist.ports):
        p = netlist.ports[name]
        lines.append(f"port {p.name} {p.direction} {p.side}")
    for cid in sorted(netlist.cells):
        c = netlist.cells[cid]
        suffix = "" if c.flavor is Flavor.UNASSIGNED else f" flavor={c.flavor.value}"
        lines.append(f"cell {c.id} {c.master}{suffix}")
    for nid in sorted(netlist.nets):
        n = netlist.nets[nid]
        kind = "" if n.kind == "signal" else f" {n.kind}"
        pins = " ".join(str(r) for r in n.pins)
        lines.append(f"net {n.id}{kind} {pins}")
    return "\n".join(lines) + "\n"


# -- side split -------------------------------------------------------------


def _port_side_default(netlist: Netlist, port: str) -> str:
    side = netlist.ports[port].side
    return "top" if side == "either" else side


def derive_physical_nets(netlist: Netlist, double_sided: bool = True,
                         nets: Optional[Iterable[str]] = None) -> List[PhysicalNet]:
    """Split logical nets by the side on which each load's input pin lives.

    Drivers are assumed to expose outputs on both sides (DO pattern).  A load
    cell sits on its flavor side; an output port joins the side(s) used by the
    net's cell loads, reaching its declared side through the I/O layer when
    they differ.  With ``double_sided=False`` (single-stack architectures)
    every net maps to one top-side physical net.  ``nets`` restricts the
    derivation to the given logical nets.
    """
    result: List[PhysicalNet] = []
    for nid in sorted(netlist.nets if nets is None else nets):
        net = netlist.nets[nid]
        if net.kind == "power":
            continue
        by_side: Dict[str, List[PinRef]] = {}
        port_loads: List[PinRef] = []
        for ref in net.loads:
            if ref.is_port:
                port_loads.append(ref)
                continue
            cell = netlist.cells[ref.owner]
            if cell.flavor is Flavor.UNASSIGNED:
                raise NetlistError(f"cell {cell.id!r} has no flavor assigned")
            side = cell.flavor.side if double_sided else "top"
            by_side.setdefault(side, []).append(ref)
        if not double_sided:
            if by_side or port_loads:
                loads = sorted(by_side.get("top", []) + port_loads)
                result.append(PhysicalNet(nid, "top", net.driver, loads))
            continue
        stubs: Dict[str, List[str]] = {}
        for ref in port_loads:
            declared = netlist.ports[ref.owner].side
            if declared in by_side:
                side = declared
            elif by_side:
                side = min(by_side)  # "bottom" < "top"; deterministic
            else:
                side = _port_side_default(netlist, ref.owner)
            by_side.setdefault(side, []).append(ref)
            if declared != "either" and declared != side:
                stubs.setdefault(side, []).append(ref.owner)
        if net.driver.is_port:
            declared = netlist.ports[net.driver.owner].side
            for side in by_side:
                if declared not in ("either", side):
                    stubs.setdefault(side, []).append(net.driver.owner)
        for side in ("top", "bottom"):
            if side in by_side:
                result.append(PhysicalNet(nid, side, net.driver, sorted(by_side[side]),
                                          sorted(stubs.get(side, []))))
    return result


def split_net_count(netlist: Netlist, double_sided: bool = True) -> int:
    """Number of logical nets realized as two physical nets."""
    counts: Dict[str, int] = {}
    for pn in derive_physical_nets(netlist, double_sided):
        counts[pn.logical] = counts.get(pn.logical, 0) + 1
    return sum(1 for v in counts.values() if v > 1)
