"""Dual metal stack model: per-layer geometry, RC, PDN derating and side membership."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

DATA_DIR = Path(__file__).resolve().parent.parent / "data"

ALLOWED = ("sig", "pwr", "io")
SIDES = ("top", "bottom")


class StackError(ValueError):
    pass


@dataclass(frozen=True)
class Layer:
    name: str
    pitch: float  # nm
    width: float  # nm
    rsq: float  # ohm/sq
    cap: float  # fF/um
    direction: str  # H | V
    allow: str  # sig | pwr | io

    @property
    def side(self) -> str:
        if self.name.startswith("TM"):
            return "top"
        if self.name.startswith("BM"):
            return "bottom"
        return "middle"

    @property
    def level(self) -> int:
        m = re.search(r"(\d+)$", self.name)
        return int(m.group(1)) if m else 0

    @property
    def r_per_um(self) -> float:
        """Wire resistance in ohm/um."""
        return self.rsq * 1000.0 / self.width


@dataclass(frozen=True)
class PdnSpec:
    side: str
    low: float
    high: float


class LayerStack:
    def __init__(self, layers: List[Layer], pdn: List[PdnSpec], params: Dict[str, float], name: str = ""):
        names = [l.name for l in layers]
        if len(set(names)) != len(names):
            raise StackError("duplicate layer names")
        self.layers = list(layers)
        self.by_name = {l.name: l for l in layers}
        self.pdn = {p.side: p for p in pdn}
        self.params = dict(params)
        self.name = name
        self._check()

    def _check(self) -> None:
        for l in self.layers:
            if l.name == "M8" and l.allow != "io":
                raise StackError("M8 must be io-only")
            if l.direction not in ("H", "V"):
                raise StackError(f"{l.name}: direction must be H or V")
            if l.allow not in ALLOWED:
                raise StackError(f"{l.name}: allow must be one of {ALLOWED}")
            if min(l.pitch, l.width, l.rsq) <= 0 or l.cap < 0:
                raise StackError(f"{l.name}: non-positive geometry")
        for p in self.pdn.values():
            if not 0 <= p.low <= p.high < 1:
                raise StackError("pdn densities must satisfy 0 <= low <= high < 1")

    @property
    def sides(self) -> Tuple[str, ...]:
        return tuple(s for s in SIDES if self.routing_layers(s))

    @property
    def double_sided(self) -> bool:
        return len(self.sides) == 2

    @property
    def cap_uplift(self) -> float:
        return self.params.get("pdn_cap_uplift", 0.0)

    def routing_layers(self, side: str, max_level: Optional[int] = None) -> List[Layer]:
        """Signal layers of one side, lowest level first."""
        out = [l for l in self.layers if l.side == side and l.allow == "sig"
               and (max_level is None or l.level <= max_level)]
        return sorted(out, key=lambda l: l.level)

    def io_layer(self) -> Optional[Layer]:
        for l in self.layers:
            if l.allow == "io":
                return l
        return None

    def pdn_density(self, layer: Layer) -> float:
        """Fraction of tracks pre-occupied by power, linear from lowest to highest layer."""
        spec = self.pdn.get(layer.side)
        if spec is None or layer.allow != "sig":
            return 0.0
        levels = [l.level for l in self.routing_layers(layer.side)]
        lo, hi = min(levels), max(levels)
        if hi == lo:
            return spec.low
        return spec.low + (spec.high - spec.low) * (layer.level - lo) / (hi - lo)

    def c_per_um(self, layer: Layer) -> float:
        """Ground capacitance in fF/um including the PDN neighbour uplift."""
        uplift = self.cap_uplift if layer.side in self.pdn else 0.0
        return layer.cap * (1.0 + uplift)


_LINE = re.compile(r"^(\w+)\s+(.*)$")


def _kv(text: str, lineno: int) -> Dict[str, str]:
    out = {}
    for tok in text.split():
        if "=" not in tok:
            raise StackError(f"line {lineno}: expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        out[k] = v
    return out


def parse_stack(text: str, name: str = "") -> LayerStack:
    layers: List[Layer] = []
    pdn: List[PdnSpec] = []
    params: Dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE.match(line)
        if not m:
            raise StackError(f"line {lineno}: cannot parse {raw!r}")
        kw, rest = m.groups()
        try:
            if kw == "layer":
                lname, _, attrs = rest.partition(" ")
                kv = _kv(attrs, lineno)
                layers.append(Layer(lname, float(kv["pitch"]), float(kv["width"]), float(kv["rsq"]),
                                    float(kv["cap"]), kv["dir"], kv["allow"]))
            elif kw == "pdn":
                kv = _kv(rest, lineno)
                if kv["side"] not in SIDES:
                    raise StackError(f"line {lineno}: pdn side must be top or bottom")
                pdn.append(PdnSpec(kv["side"], float(kv["low"]), float(kv["high"])))
            elif kw == "param":
                params.update({k: float(v) for k, v in _kv(rest, lineno).items()})
            else:
                raise StackError(f"line {lineno}: unknown statement {kw!r}")
        except KeyError as exc:
            raise StackError(f"line {lineno}: missing field {exc.args[0]}") from None
        except ValueError as exc:
            if isinstance(exc, StackError):
                raise
            raise StackError(f"line {lineno}: {exc}") from None
    if not layers:
        raise StackError("stack defines no layers")
    return LayerStack(layers, pdn, params, name)


def serialize_stack(stack: LayerStack) -> str:
    lines = [f"param {k}={v:g}" for k, v in sorted(stack.params.items())]
    lines += [f"pdn side={p.side} low={p.low:g} high={p.high:g}" for p in stack.pdn.values()]
    for l in stack.layers:
        lines.append(f"layer {l.name} pitch={l.pitch:g} width={l.width:g} rsq={l.rsq:g} "
                     f"cap={l.cap:g} dir={l.direction} allow={l.allow}")
    return "\n".join(lines) + "\n"


def load_stack(arch: str = "Omni3D", path=None) -> LayerStack:
    if path is None:
        fname = "cfet.stack" if arch == "CFET" else "omni3d.stack"
        path = DATA_DIR / fname
    return parse_stack(Path(path).read_text(), name=Path(path).stem)
