"""Standard-cell library model: architectures, pin-access patterns, masters.

Two text formats live here.  The *library* file carries one fully
characterized master per line::

    param cgp_nm=42
    param track_pitch_nm=18
    cellmaster INVD1 arch=OMNI pattern=DO flavor=TI width_gp=1 cin=0.0236 \
        cout=0.0255 rdrive=10.0 eint=0.0061 tint=0.175 pins=in:I;out:ZN

The *skeleton* file carries geometry and per-cell scale factors relative to the
inverter; :func:`omni3d.dtco.characterize_library` turns it into a library.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Dict, FrozenSet, Iterator, List, Mapping, Optional, Tuple

from .netlist import Flavor, MasterPins

DEFAULT_CGP_NM = 42.0
DEFAULT_TRACK_PITCH_NM = 18.0

# Capacitance deltas of duplicated pins relative to the single-side baseline:
# (input-cap factor, output-cap factor).
PATTERN_CAP_DELTA = {
    "SIO": (0.0, 0.0),
    "DO": (0.042, 0.158),
    "DI": (0.218, 0.058),
}
PATTERN_CAP_DELTA["DIDO"] = (
    PATTERN_CAP_DELTA["DO"][0] + PATTERN_CAP_DELTA["DI"][0],
    PATTERN_CAP_DELTA["DO"][1] + PATTERN_CAP_DELTA["DI"][1],
)
NOIM_VIA_CIN_FACTOR = 0.933
DELTA_TOLERANCE = 0.005


class LibraryError(ValueError):
    pass


@dataclass(frozen=True)
class Architecture:
    name: str
    track_height: int
    has_im: bool
    pdn_style: str
    file_tag: str

    @property
    def double_sided(self) -> bool:
        return self.name != "CFET"


CFET = Architecture("CFET", 4, False, "backside", "CFET")
OMNI3D = Architecture("Omni3D", 3, True, "split", "OMNI")
OMNI3D_NOIM = Architecture("Omni3D_noIM", 3, False, "split", "OMNI_NOIM")
ARCHITECTURES: Dict[str, Architecture] = {a.name: a for a in (CFET, OMNI3D, OMNI3D_NOIM)}
_BY_TAG = {a.file_tag: a for a in ARCHITECTURES.values()}


def get_architecture(name: str) -> Architecture:
    """Look up an architecture by its name or file tag."""
    arch = ARCHITECTURES.get(name) or _BY_TAG.get(name)
    if arch is None:
        raise LibraryError(f"unknown architecture {name!r}")
    return arch


class PinAccessPattern(str, Enum):
    SIO = "SIO"
    DI = "DI"
    DO = "DO"
    DIDO = "DIDO"

    def input_sides(self, flavor: Flavor) -> FrozenSet[str]:
        if self in (PinAccessPattern.DI, PinAccessPattern.DIDO):
            return frozenset(("top", "bottom"))
        return frozenset((flavor.side,))

    def output_sides(self, flavor: Flavor) -> FrozenSet[str]:
        if self in (PinAccessPattern.DO, PinAccessPattern.DIDO):
            return frozenset(("top", "bottom"))
        return frozenset((flavor.side,))

    @property
    def cap_delta(self) -> Tuple[float, float]:
        return PATTERN_CAP_DELTA[self.value]


@dataclass(frozen=True)
class CellMaster:
    name: str
    arch: Architecture
    pattern: PinAccessPattern
    flavor: Flavor
    width_gp: int
    input_pins: Tuple[str, ...]
    output_pins: Tuple[str, ...]
    cap_in: Tuple[float, ...]  # fF per input pin
    cap_out: float  # fF
    r_drive: float  # kOhm
    e_internal: float  # fJ per output toggle
    intrinsic_delay: float  # ps
    setup: float = 0.0  # ps, sequential only
    clock_pin: Optional[str] = None
    i_leak: float = 0.0  # nA
    clock_buffer: bool = False
    im_via_only: bool = False

    @property
    def height_tracks(self) -> int:
        return self.arch.track_height

    @property
    def is_sequential(self) -> bool:
        return self.clock_pin is not None

    def pin_cap(self, pin: str) -> float:
        return self.cap_in[self.input_pins.index(pin)]

    @property
    def cap_total(self) -> float:
        return sum(self.cap_in) + self.cap_out


def cell_area(master: CellMaster, cgp_nm: float = DEFAULT_CGP_NM,
              track_pitch_nm: float = DEFAULT_TRACK_PITCH_NM) -> float:
    """Footprint in nm^2: (width_gp * CGP) x (height_tracks * M1 pitch)."""
    w, h = cell_dimensions(master, cgp_nm, track_pitch_nm)
    return w * h


def cell_dimensions(master: CellMaster, cgp_nm: float = DEFAULT_CGP_NM,
                    track_pitch_nm: float = DEFAULT_TRACK_PITCH_NM) -> Tuple[float, float]:
    return master.width_gp * cgp_nm, master.height_tracks * track_pitch_nm


@dataclass
class CellLibrary:
    masters: Dict[Tuple[str, str, str, str], CellMaster] = field(default_factory=dict)
    cgp_nm: float = DEFAULT_CGP_NM
    track_pitch_nm: float = DEFAULT_TRACK_PITCH_NM
    vdd: float = 0.45
    version: str = "1"

    def get(self, name: str, arch: str, pattern: str = "SIO", flavor: str = "TI") -> CellMaster:
        arch = get_architecture(arch).name
        key = (name, arch, PinAccessPattern(pattern).value, Flavor(flavor).value)
        try:
            return self.masters[key]
        except KeyError:
            raise LibraryError(f"no master {name} for {arch}/{key[2]}/{key[3]}") from None

    def names(self) -> List[str]:
        return sorted({k[0] for k in self.masters})

    def architectures(self) -> List[str]:
        return sorted({k[1] for k in self.masters})

    def patterns(self, arch: str) -> List[str]:
        arch = get_architecture(arch).name
        return sorted({k[2] for k in self.masters if k[1] == arch})

    def __iter__(self) -> Iterator[CellMaster]:
        return iter(self.masters[k] for k in sorted(self.masters))

    def __len__(self) -> int:
        return len(self.masters)

    def area(self, master: CellMaster) -> float:
        return cell_area(master, self.cgp_nm, self.track_pitch_nm)

    def pin_specs(self) -> Dict[str, MasterPins]:
        specs: Dict[str, MasterPins] = {}
        for m in self:
            if m.name not in specs:
                specs[m.name] = MasterPins(m.name, m.input_pins, m.output_pins,
                                           m.clock_pin, m.clock_buffer)
        return specs

    def view(self, arch: str, pattern: Optional[str] = None) -> "LibraryView":
        a = get_architecture(arch)
        if pattern is None:
            pattern = "DO" if a.double_sided else "SIO"
        return LibraryView(self, a, PinAccessPattern(pattern))


@dataclass(frozen=True)
class LibraryView:
    """The slice of a library a single implementation uses."""

    library: CellLibrary
    arch: Architecture
    pattern: PinAccessPattern

    def master(self, name: str, flavor: Flavor = Flavor.TI) -> CellMaster:
        if flavor is Flavor.UNASSIGNED:
            flavor = Flavor.TI
        return self.library.get(name, self.arch.name, self.pattern.value, flavor.value)

    def area(self, name: str) -> float:
        return self.library.area(self.master(name))

    def width_nm(self, name: str) -> float:
        return self.master(name).width_gp * self.library.cgp_nm

    @property
    def row_height_nm(self) -> float:
        return self.arch.track_height * self.library.track_pitch_nm

    @property
    def vdd(self) -> float:
        return self.library.vdd


def area_ratio(library: CellLibrary, cell_name: str, arch_a: str, arch_b: str) -> float:
    """cell_area(name, arch_a) / cell_area(name, arch_b) over SIO/TI masters."""
    a = library.get(cell_name, arch_a, _any_pattern(library, arch_a), "TI")
    b = library.get(cell_name, arch_b, _any_pattern(library, arch_b), "TI")
    return library.area(a) / library.area(b)


def _any_pattern(library: CellLibrary, arch: str) -> str:
    pats = library.patterns(arch)
    if not pats:
        raise LibraryError(f"library has no {arch} masters")
    return "SIO" if "SIO" in pats else pats[0]


# -- library text format ----------------------------------------------------


def _parse_kv(tokens: List[str], lineno: int) -> Dict[str, str]:
    kv = {}
    for t in tokens:
        if "=" not in t:
            raise LibraryError(f"line {lineno}: expected key=value, got {t!r}")
        k, v = t.split("=", 1)
        kv[k] = v
    return kv


def _parse_pins(spec: str, lineno: int) -> Tuple[Tuple[str, ...], Tuple[str, ...]]:
    ins: Tuple[str, ...] = ()
    outs: Tuple[str, ...] = ()
    for part in spec.split(";"):
        if not part:
            continue
        kind, _, names = part.partition(":")
        names_t = tuple(n for n in names.split(",") if n)
        if kind == "in":
            ins = names_t
        elif kind == "out":
            outs = names_t
        else:
            raise LibraryError(f"line {lineno}: bad pins spec {spec!r}")
    if not outs:
        raise LibraryError(f"line {lineno}: master without output pins")
    return ins, outs


def _format_pins(ins: Tuple[str, ...], outs: Tuple[str, ...]) -> str:
    return f"in:{','.join(ins)};out:{','.join(outs)}"


def load_library(text: str, validate: bool = True) -> CellLibrary:
    lib = CellLibrary()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if tok[0] == "param":
            for k, v in _parse_kv(tok[1:], lineno).items():
                if k == "cgp_nm":
                    lib.cgp_nm = float(v)
                elif k == "track_pitch_nm":
                    lib.track_pitch_nm = float(v)
                elif k == "vdd":
                    lib.vdd = float(v)
                elif k == "version":
                    lib.version = v
                else:
                    raise LibraryError(f"line {lineno}: unknown param {k!r}")
            continue
        if tok[0] != "cellmaster" or len(tok) < 3:
            raise LibraryError(f"line {lineno}: unknown statement {tok[0]!r}")
        kv = _parse_kv(tok[2:], lineno)
        try:
            arch = get_architecture(kv["arch"])
            ins, outs = _parse_pins(kv["pins"], lineno)
            cin = tuple(float(x) for x in kv["cin"].split(",")) if kv.get("cin") else ()
            m = CellMaster(
                name=tok[1], arch=arch, pattern=PinAccessPattern(kv["pattern"]),
                flavor=Flavor(kv["flavor"]), width_gp=int(kv["width_gp"]),
                input_pins=ins, output_pins=outs, cap_in=cin, cap_out=float(kv["cout"]),
                r_drive=float(kv["rdrive"]), e_internal=float(kv["eint"]),
                intrinsic_delay=float(kv["tint"]), setup=float(kv.get("tsetup", 0.0)),
                clock_pin=kv.get("clk"), i_leak=float(kv.get("ileak", 0.0)),
                clock_buffer=kv.get("ckbuf", "0") == "1", im_via_only=kv.get("imvia", "0") == "1",
            )
        except LibraryError:
            raise
        except KeyError as exc:
            raise LibraryError(f"line {lineno}: missing field {exc.args[0]!r}") from None
        except ValueError as exc:
            raise LibraryError(f"line {lineno}: {exc}") from None
        if m.flavor is Flavor.UNASSIGNED:
            raise LibraryError(f"line {lineno}: master flavor must be TI or BI")
        if len(m.cap_in) != len(m.input_pins):
            raise LibraryError(f"line {lineno}: {len(m.cap_in)} cin values for {len(m.input_pins)} inputs")
        if m.clock_pin is not None and m.clock_pin not in m.input_pins:
            raise LibraryError(f"line {lineno}: clock pin {m.clock_pin!r} is not an input")
        key = (m.name, arch.name, m.pattern.value, m.flavor.value)
        if key in lib.masters:
            raise LibraryError(f"line {lineno}: duplicate master {key}")
        lib.masters[key] = m
    if validate:
        validate_library(lib)
    return lib


def load_library_file(path) -> CellLibrary:
    return load_library(Path(path).read_text())


def validate_library(lib: CellLibrary) -> None:
    """Check the structural and electrical library invariants."""
    for m in lib:
        if m.width_gp < 1:
            raise LibraryError(f"{m.name}/{m.arch.name}: width_gp must be >= 1")
        if any(c < 0 for c in m.cap_in) or m.cap_out < 0:
            raise LibraryError(f"{m.name}/{m.arch.name}/{m.pattern.value}: negative capacitance")
        if m.r_drive < 0 or m.e_internal < 0 or m.intrinsic_delay < 0 or m.i_leak < 0:
            raise LibraryError(f"{m.name}/{m.arch.name}: negative characterization value")
        other = (m.name, m.arch.name, m.pattern.value, m.flavor.flipped().value)
        if other not in lib.masters:
            raise LibraryError(
                f"missing {other[3]} flavor counterpart of {m.name} ({m.arch.name}/{m.pattern.value})")
        sio = lib.masters.get((m.name, m.arch.name, "SIO", m.flavor.value))
        if sio is not None and m.pattern is not PinAccessPattern.SIO:
            din, dout = m.pattern.cap_delta
            for pin, got, base in zip(m.input_pins, m.cap_in, sio.cap_in):
                _check_ratio(got, base * (1 + din), f"{m.name}/{m.arch.name}/{m.pattern.value} cin[{pin}]")
            _check_ratio(m.cap_out, sio.cap_out * (1 + dout), f"{m.name}/{m.arch.name}/{m.pattern.value} cout")
        if m.arch.name == "Omni3D_noIM" and m.im_via_only:
            im = lib.masters.get((m.name, "Omni3D", m.pattern.value, m.flavor.value))
            if im is not None:
                for pin, got, base in zip(m.input_pins, m.cap_in, im.cap_in):
                    _check_ratio(got, base * NOIM_VIA_CIN_FACTOR, f"{m.name}/noIM cin[{pin}]")


def _check_ratio(got: float, expected: float, what: str) -> None:
    if expected == 0.0:
        if got != 0.0:
            raise LibraryError(f"{what}: expected 0, got {got}")
        return
    if abs(got / expected - 1.0) > DELTA_TOLERANCE:
        raise LibraryError(f"{what}: {got:.6g} deviates from expected {expected:.6g} beyond 0.5%")


def serialize_library(lib: CellLibrary) -> str:
    lines = [
        f"param cgp_nm={lib.cgp_nm:g}",
        f"param track_pitch_nm={lib.track_pitch_nm:g}",
        f"param vdd={lib.vdd:g}",
        f"param version={lib.version}",
    ]
    for m in lib:
        fields = [
            f"cellmaster {m.name}", f"arch={m.arch.file_tag}", f"pattern={m.pattern.value}",
            f"flavor={m.flavor.value}", f"width_gp={m.width_gp}",
            "cin=" + ",".join(f"{c:.6g}" for c in m.cap_in),
            f"cout={m.cap_out:.6g}", f"rdrive={m.r_drive:.6g}", f"eint={m.e_internal:.6g}",
            f"tint={m.intrinsic_delay:.6g}", f"pins={_format_pins(m.input_pins, m.output_pins)}",
        ]
        if m.is_sequential:
            fields += [f"clk={m.clock_pin}", f"tsetup={m.setup:.6g}"]
        if m.i_leak:
            fields.append(f"ileak={m.i_leak:.6g}")
        if m.clock_buffer:
            fields.append("ckbuf=1")
        if m.im_via_only:
            fields.append("imvia=1")
        lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


# -- skeleton ---------------------------------------------------------------


@dataclass(frozen=True)
class SkeletonEntry:
    """Geometry and scale factors of one cell relative to the inverter."""

    name: str
    input_pins: Tuple[str, ...]
    output_pins: Tuple[str, ...]
    widths: Mapping[str, int]  # architecture name -> width in gate pitches
    r: float
    cin: Tuple[float, ...]
    cout: float
    eint: float
    tint: float
    nfet: int
    setup: float = 0.0
    clock_pin: Optional[str] = None
    clock_buffer: bool = False
    im_via_only: bool = False
    source: str = "assumed"


_SKELETON_FACTORS = ("r", "cin", "cout", "eint", "tint", "nfet")


def load_skeleton(text: str) -> Dict[str, SkeletonEntry]:
    entries: Dict[str, SkeletonEntry] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if tok[0] != "skeleton" or len(tok) < 3:
            raise LibraryError(f"line {lineno}: expected 'skeleton <name> key=value...'")
        kv = _parse_kv(tok[2:], lineno)
        for key in _SKELETON_FACTORS:
            if key not in kv:
                raise LibraryError(f"line {lineno}: skeleton {tok[1]} missing scale factor {key!r}")
        ins, outs = _parse_pins(kv["pins"], lineno)
        widths = {}
        for item in kv["width"].split(","):
            tag, _, w = item.partition(":")
            widths[get_architecture(tag).name] = int(w)
        cin = tuple(float(x) for x in kv["cin"].split(",")) if ins else ()
        if ins and len(cin) == 1 and len(ins) > 1:
            cin = cin * len(ins)
        if len(cin) != len(ins):
            raise LibraryError(f"line {lineno}: cin factors do not match input pins")
        entries[tok[1]] = SkeletonEntry(
            name=tok[1], input_pins=ins, output_pins=outs, widths=widths,
            r=float(kv["r"]), cin=cin, cout=float(kv["cout"]), eint=float(kv["eint"]),
            tint=float(kv["tint"]), nfet=int(kv["nfet"]), setup=float(kv.get("setup", 0.0)),
            clock_pin=kv.get("clk"), clock_buffer=kv.get("ckbuf", "0") == "1",
            im_via_only=kv.get("imvia", "0") == "1", source=kv.get("src", "assumed"),
        )
    return entries


def with_flavor(master: CellMaster, flavor: Flavor) -> CellMaster:
    return replace(master, flavor=flavor)
