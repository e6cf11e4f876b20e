"""Device design-space sweep with a ring-oscillator surrogate model.

A wire-loaded FO3 inverter ring stage is summarized by an effective drive
resistance and an effective switched capacitance:

* ``r_eff`` = (contact + channel resistance) / effective width, scaled by an
  overdrive penalty ``(v_od_ref / (vdd - vt)) ** alpha``; CFET adds the series
  resistance of the tall via feeding the upper FET.
* ``c_eff`` = gate (own + 3 fan-out gates) + gate-to-S/D parasitic (~1/spacing)
  + IM via stack (IM variants) + tall via (CFET) + wire load + pin-pattern
  deltas applied to the gate and parasitic terms.

Energy is ``c_eff * vdd**2`` and delay ``0.69 * r_eff * c_eff``.  Threshold
voltages are retargeted per point so that the subthreshold leakage equals a
fixed per-FET target.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import Executor
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .celllib import (
    CellLibrary, CellMaster, NOIM_VIA_CIN_FACTOR, PinAccessPattern, SkeletonEntry,
    get_architecture,
)
from .netlist import Flavor

DATA_DIR = Path(__file__).resolve().parent / "data"

DEFAULT_DOMAINS: Dict[str, Tuple[float, ...]] = {
    "lg": (14, 15, 16, 17),
    "sp_gs": (5, 7, 9),
    "n_sheets": (1, 2, 3, 4),
    "vdd": (0.45, 0.5, 0.55, 0.6, 0.65, 0.7),
}
MIN_CONTACT_NM = 10.0
RO_DELAY_FACTOR = 0.69
FO3_FACTOR = 4.0  # own gate + three fan-out gates


class DtcoError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class DeviceParams:
    lg: float
    sp_gs: float
    n_sheets: int
    vdd: float
    arch: str = "Omni3D"
    pattern: str = "SIO"
    cgp: float = 42.0
    gate_cut: float = 9.0
    gate_ext: float = 8.5
    sd_ext: float = 0.0
    m1_pitch: float = 18.0
    m1_width: float = 9.0

    @property
    def architecture(self):
        return get_architecture(self.arch)

    @property
    def w_ch(self) -> float:
        # CFET channel is limited by the channel-to-tall-via space.
        return 27.0 if self.arch == "CFET" else 28.0

    @property
    def sd_via_space(self) -> Optional[float]:
        return 9.0 if self.arch == "CFET" else None

    @property
    def sd_bpr_space(self) -> Optional[float]:
        return 3.0 if self.arch == "CFET" else None

    @property
    def w_eff(self) -> float:
        return self.n_sheets * self.w_ch

    @property
    def contact_length(self) -> float:
        return self.cgp - self.lg - 2.0 * self.sp_gs

    def corner(self) -> Tuple[float, float, int, float]:
        return (self.lg, self.sp_gs, self.n_sheets, self.vdd)


@dataclass(frozen=True)
class SurrogateCoefficients:
    r_contact: float  # Ohm*nm
    r_channel_per_lg: float  # Ohm*nm per nm of gate length
    r_tall_via: float  # Ohm, CFET only
    c_gate_aerial: float  # fF/nm^2
    c_par_gs: float  # fF*nm/nm: times W_eff / sp_gs
    c_im_fixed: float  # fF, IM variants only
    c_tall_via: float  # fF, CFET only
    c_wire_per_um: float  # fF/um
    wire_load_um: float  # um
    i0_leak: float  # A/nm at vt = 0
    ss_mv_dec: float  # mV/decade
    i_leak_target: float = 2e-9  # A per FET
    overdrive_alpha: float = 1.0
    v_od_ref: float = 0.3  # V

    def validate(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("r_tall_via", "c_tall_via", "c_im_fixed", "wire_load_um", "c_wire_per_um"):
                if v < 0:
                    raise DtcoError(f"coefficient {f.name} must be non-negative")
            elif not v > 0:
                raise DtcoError(f"coefficient {f.name} must be positive")


@dataclass(frozen=True)
class DeviceMetrics:
    params: DeviceParams
    r_eff: float = math.nan  # kOhm
    c_eff: float = math.nan  # fF
    energy: float = math.nan  # fJ
    delay: float = math.nan  # ps
    edp: float = math.nan  # fJ*ps
    vt: float = math.nan  # V
    feasible: bool = True
    reason: str = "ok"


# -- coefficient file -------------------------------------------------------


def parse_coefficients(text: str) -> SurrogateCoefficients:
    values: Dict[str, float] = {}
    known = {f.name for f in fields(SurrogateCoefficients)}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep or key not in known:
            raise DtcoError(f"line {lineno}: unknown coefficient line {raw!r}")
        values[key] = float(val)
    try:
        coeff = SurrogateCoefficients(**values)
    except TypeError as exc:
        raise DtcoError(f"incomplete coefficient set: {exc}") from None
    coeff.validate()
    return coeff


def load_coefficients(path=None) -> SurrogateCoefficients:
    path = Path(path) if path else DATA_DIR / "coefficients.cfg"
    return parse_coefficients(path.read_text())


def format_coefficients(coeff: SurrogateCoefficients, provenance: Mapping[str, str] = None) -> str:
    provenance = provenance or {}
    out = []
    for f in fields(coeff):
        note = provenance.get(f.name)
        line = f"{f.name} = {getattr(coeff, f.name):.10g}"
        out.append(f"{line}  # {note}" if note else line)
    return "\n".join(out) + "\n"


# -- sweep ------------------------------------------------------------------


def enumerate_design_space(arch: str, domains: Optional[Mapping[str, Sequence[float]]] = None,
                           pattern: str = "SIO") -> List[DeviceParams]:
    """Cartesian product of gate length, spacing, sheet count and supply."""
    arch_name = get_architecture(arch).name
    doms = dict(DEFAULT_DOMAINS)
    if domains:
        doms.update(domains)
    pts = {
        DeviceParams(float(lg), float(sp), int(n), float(v), arch_name, pattern)
        for lg, sp, n, v in itertools.product(doms["lg"], doms["sp_gs"], doms["n_sheets"], doms["vdd"])
    }
    return sorted(pts)


def retarget_vt(p: DeviceParams, coeff: SurrogateCoefficients) -> float:
    """Threshold voltage that puts off-state leakage at the per-FET target.

    Solves ``i0 * W_eff * 10**(-vt / ss) = i_target`` in closed form.
    """
    if coeff.i0_leak <= 0 or coeff.ss_mv_dec <= 0 or coeff.i_leak_target <= 0:
        raise DtcoError("leakage coefficients must be positive")
    if p.w_eff <= 0:
        raise DtcoError("effective width must be positive")
    return coeff.ss_mv_dec * 1e-3 * math.log10(coeff.i0_leak * p.w_eff / coeff.i_leak_target)


def check_feasibility(p: DeviceParams, coeff: SurrogateCoefficients) -> Tuple[bool, str]:
    if p.contact_length < MIN_CONTACT_NM:
        return False, "contact_too_short"
    if retarget_vt(p, coeff) > p.vdd:
        return False, "leakage_unmeetable"
    return True, "ok"


def capacitance_terms(p: DeviceParams, coeff: SurrogateCoefficients) -> Dict[str, float]:
    """Additive pieces of the stage capacitance in fF."""
    arch = p.architecture
    gate = coeff.c_gate_aerial * p.lg * p.w_eff * FO3_FACTOR
    par = coeff.c_par_gs * p.w_eff / p.sp_gs
    din, dout = PinAccessPattern(p.pattern).cap_delta
    return {
        "gate": gate,
        "parasitic": par,
        "im": coeff.c_im_fixed if arch.has_im else 0.0,
        "tall_via": coeff.c_tall_via if arch.name == "CFET" else 0.0,
        "pattern": din * gate + dout * par,
        "wire": coeff.c_wire_per_um * coeff.wire_load_um,
    }


def effective_resistance(p: DeviceParams, coeff: SurrogateCoefficients, vt: float) -> float:
    """Stage drive resistance in kOhm."""
    overdrive = p.vdd - vt
    if overdrive <= 0:
        raise DtcoError("non-positive overdrive")
    penalty = (coeff.v_od_ref / overdrive) ** coeff.overdrive_alpha
    r = (coeff.r_contact + coeff.r_channel_per_lg * p.lg) / p.w_eff * penalty
    if p.arch == "CFET":
        r += coeff.r_tall_via
    return r * 1e-3


def ro_metrics(p: DeviceParams, coeff: SurrogateCoefficients) -> DeviceMetrics:
    ok, reason = check_feasibility(p, coeff)
    if not ok:
        raise DtcoError(f"infeasible design point {p.corner()}: {reason}")
    vt = retarget_vt(p, coeff)
    r = effective_resistance(p, coeff, vt)
    c = sum(capacitance_terms(p, coeff).values())
    energy = c * p.vdd ** 2
    delay = RO_DELAY_FACTOR * r * c
    return DeviceMetrics(p, r, c, energy, delay, energy * delay, vt)


def evaluate_point(p: DeviceParams, coeff: SurrogateCoefficients) -> DeviceMetrics:
    ok, reason = check_feasibility(p, coeff)
    if not ok:
        return DeviceMetrics(p, feasible=False, reason=reason)
    return ro_metrics(p, coeff)


def sweep(arch: str, coeff: SurrogateCoefficients, domains=None, pattern: str = "SIO",
          executor: Optional[Executor] = None) -> List[DeviceMetrics]:
    """Evaluate every point of the design space; output order is the sorted parameter order."""
    pts = enumerate_design_space(arch, domains, pattern)
    if executor is None:
        results = [evaluate_point(p, coeff) for p in pts]
    else:
        results = list(executor.map(evaluate_point, pts, itertools.repeat(coeff)))
    return sorted(results, key=lambda m: m.params)


def pareto_frontier(points: Iterable[DeviceMetrics]) -> List[DeviceMetrics]:
    """Points not dominated in (energy, delay), by delay then energy then params."""
    pts = [p for p in points if p.feasible]
    if not pts:
        raise DtcoError("pareto_frontier needs at least one feasible point")
    pts.sort(key=lambda m: (m.delay, m.energy, m.params))
    frontier: List[DeviceMetrics] = []
    best_energy = math.inf
    for m in pts:
        if m.energy < best_energy:
            frontier.append(m)
            best_energy = m.energy
        elif frontier and m.energy == frontier[-1].energy and m.delay == frontier[-1].delay:
            frontier.append(m)  # exact duplicate of a frontier point
    return frontier


def min_edp(points: Iterable[DeviceMetrics]) -> DeviceMetrics:
    pts = [p for p in points if p.feasible]
    if not pts:
        raise DtcoError("min_edp needs at least one feasible point")
    return min(pts, key=lambda m: (m.edp, m.params))


def min_edp_point(arch: str, coeff: SurrogateCoefficients, pattern: str = "SIO") -> DeviceMetrics:
    return min_edp(sweep(arch, coeff, pattern=pattern))


VARIANTS = ("SIO", "DO", "DI", "DIDO", "noIM")


def variant_metrics(base: DeviceParams, coeff: SurrogateCoefficients) -> Dict[str, DeviceMetrics]:
    """Stage metrics of the Omni 3D pin-pattern and IM variants at one corner, plus CFET."""
    table: Dict[str, DeviceMetrics] = {}
    for v in VARIANTS:
        if v == "noIM":
            p = replace(base, arch="Omni3D_noIM", pattern="SIO")
        else:
            p = replace(base, arch="Omni3D", pattern=v)
        table[v] = ro_metrics(p, coeff)
    table["CFET"] = ro_metrics(replace(base, arch="CFET", pattern="SIO"), coeff)
    return table


# -- default-coefficient fit ------------------------------------------------


@dataclass(frozen=True)
class CalibrationTargets:
    energy_gain: float = 0.102  # 1 - E(Omni)/E(CFET)
    delay_gain: float = 0.156  # 1 - D(Omni)/D(CFET)
    c_do: float = 0.056
    c_di: float = 0.112
    c_noim: float = -0.044
    # free choices that fix absolute scale; not fitted to anything
    c_ref_ff: float = 0.25
    r_ref_kohm: float = 10.0
    vt_ref: float = 0.15
    ss_mv_dec: float = 70.0
    contact_share: float = 0.4
    wire_load_um: float = 1.0
    corner: Tuple[float, float, int, float] = (14.0, 9.0, 1, 0.45)


def calibrate_coefficients(t: CalibrationTargets = CalibrationTargets()) -> SurrogateCoefficients:
    """Solve the surrogate coefficients so the Omni/CFET and variant ratios hit ``t``.

    The pin-pattern deltas fix the gate and parasitic shares of the Omni SIO
    stage capacitance; the IM removal target fixes the IM lump; the energy
    ratio fixes the CFET tall-via capacitance and the delay ratio its series
    resistance.
    """
    lg, sp, n, vdd = t.corner
    din_do, dout_do = PinAccessPattern.DO.cap_delta
    din_di, dout_di = PinAccessPattern.DI.cap_delta
    det = din_do * dout_di - dout_do * din_di
    gate_share = (t.c_do * dout_di - dout_do * t.c_di) / det
    par_share = (din_do * t.c_di - t.c_do * din_di) / det
    im_share = -t.c_noim
    wire_share = 1.0 - gate_share - par_share - im_share
    if min(gate_share, par_share, wire_share) <= 0:
        raise DtcoError("calibration targets imply a negative capacitance share")

    w_omni = n * 28.0
    w_cfet = n * 27.0
    c_gate = gate_share * t.c_ref_ff / (lg * w_omni * FO3_FACTOR)
    c_par = par_share * t.c_ref_ff * sp / w_omni
    c_im = im_share * t.c_ref_ff
    c_wire = wire_share * t.c_ref_ff / t.wire_load_um

    c_cfet = t.c_ref_ff / (1.0 - t.energy_gain)
    c_tall = c_cfet - (gate_share + par_share) * t.c_ref_ff * (w_cfet / w_omni) - wire_share * t.c_ref_ff
    if c_tall < 0:
        raise DtcoError("energy target below what the width change alone delivers")

    i_target = 2e-9
    i0 = i_target * 10 ** (t.vt_ref / (t.ss_mv_dec * 1e-3)) / w_omni
    v_od_ref = vdd - t.vt_ref
    k = t.r_ref_kohm * 1e3 * w_omni  # penalty is 1 at the corner for Omni
    r_contact = t.contact_share * k
    r_channel = (1.0 - t.contact_share) * k / lg

    vt_cfet = t.ss_mv_dec * 1e-3 * math.log10(i0 * w_cfet / i_target)
    r_cfet_fet = k / w_cfet * (v_od_ref / (vdd - vt_cfet))
    r_ratio = (1.0 - t.delay_gain) / (1.0 - t.energy_gain)
    r_tall = t.r_ref_kohm * 1e3 / r_ratio - r_cfet_fet
    if r_tall < 0:
        raise DtcoError("delay target below what the width change alone delivers")

    return SurrogateCoefficients(
        r_contact=r_contact, r_channel_per_lg=r_channel, r_tall_via=r_tall,
        c_gate_aerial=c_gate, c_par_gs=c_par, c_im_fixed=c_im, c_tall_via=c_tall,
        c_wire_per_um=c_wire, wire_load_um=t.wire_load_um, i0_leak=i0,
        ss_mv_dec=t.ss_mv_dec, i_leak_target=i_target, overdrive_alpha=1.0, v_od_ref=v_od_ref,
    )


# -- library characterization -----------------------------------------------


@dataclass(frozen=True)
class InverterBase:
    """Inverter characterization a library is scaled from."""

    r: float  # kOhm
    cin: float  # fF
    cout: float  # fF
    vdd: float


def inverter_base(point: DeviceParams, coeff: SurrogateCoefficients) -> InverterBase:
    m = ro_metrics(replace(point, pattern="SIO"), coeff)
    terms = capacitance_terms(replace(point, pattern="SIO"), coeff)
    cin = terms["gate"] / FO3_FACTOR
    cout = terms["parasitic"] + terms["im"] + terms["tall_via"]
    return InverterBase(m.r_eff, cin, cout, point.vdd)


def characterize_library(points: Mapping[str, DeviceParams], coeff: SurrogateCoefficients,
                         skeleton: Mapping[str, SkeletonEntry]) -> CellLibrary:
    """Fill every skeleton cell for each architecture in ``points``.

    CFET gets single-side masters only; Omni 3D variants get all four pin
    patterns.  Both flavors carry identical electrical values.
    """
    vdds = {p.vdd for p in points.values()}
    if len(vdds) != 1:
        raise DtcoError("all architectures must share one supply voltage")
    lib = CellLibrary(vdd=vdds.pop())
    bases = {get_architecture(a).name: inverter_base(p, coeff) for a, p in points.items()}
    for arch_name, base in sorted(bases.items()):
        arch = get_architecture(arch_name)
        patterns = ["SIO", "DI", "DO", "DIDO"] if arch.double_sided else ["SIO"]
        for entry in skeleton.values():
            if arch.name not in entry.widths:
                raise DtcoError(f"skeleton {entry.name} has no width for {arch.name}")
            for fac in ("r", "cout", "eint", "tint"):
                if getattr(entry, fac) <= 0:
                    raise DtcoError(f"skeleton {entry.name} missing scale factor {fac!r}")
            cin = tuple(f * base.cin for f in entry.cin)
            if arch.name == "Omni3D_noIM" and entry.im_via_only:
                cin = tuple(c * NOIM_VIA_CIN_FACTOR for c in cin)
            cout = entry.cout * base.cout
            r = entry.r * base.r
            fo4 = RO_DELAY_FACTOR * base.r * (base.cout + 4 * base.cin)
            for pat in patterns:
                din, dout = PinAccessPattern(pat).cap_delta
                for fl in (Flavor.TI, Flavor.BI):
                    m = CellMaster(
                        name=entry.name, arch=arch, pattern=PinAccessPattern(pat), flavor=fl,
                        width_gp=entry.widths[arch.name], input_pins=entry.input_pins,
                        output_pins=entry.output_pins,
                        cap_in=tuple(c * (1 + din) for c in cin), cap_out=cout * (1 + dout),
                        r_drive=r, e_internal=entry.eint * base.cout * base.vdd ** 2,
                        intrinsic_delay=entry.tint * RO_DELAY_FACTOR * base.r * base.cout,
                        setup=entry.setup * fo4, clock_pin=entry.clock_pin,
                        i_leak=entry.nfet * coeff.i_leak_target * 1e9 / 2,
                        clock_buffer=entry.clock_buffer, im_via_only=entry.im_via_only,
                    )
                    lib.masters[(m.name, arch.name, pat, fl.value)] = m
    return lib


def default_points(coeff: SurrogateCoefficients) -> Dict[str, DeviceParams]:
    """Min-EDP corner per architecture (SIO sweep), used to characterize the library."""
    return {a: min_edp_point(a, coeff).params for a in ("CFET", "Omni3D", "Omni3D_noIM")}


# -- reports ----------------------------------------------------------------

SWEEP_COLUMNS = ("arch", "pattern", "lg", "sp_gs", "n_sheets", "vdd", "feasible", "reason",
                 "vt", "r_eff", "c_eff", "energy", "delay", "edp")


def sweep_csv(points: Iterable[DeviceMetrics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for m in points:
        p = m.params
        w.writerow([p.arch, p.pattern, f"{p.lg:g}", f"{p.sp_gs:g}", p.n_sheets, f"{p.vdd:g}",
                    int(m.feasible), m.reason] +
                   [("" if math.isnan(v) else f"{v:.9g}") for v in (m.vt, m.r_eff, m.c_eff, m.energy, m.delay, m.edp)])
    return buf.getvalue()


def plot_pareto_svg(series: Mapping[str, Sequence[DeviceMetrics]], path) -> None:
    """Energy-vs-delay scatter per architecture with frontier and min-EDP marked."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    for name, pts in series.items():
        feas = [m for m in pts if m.feasible]
        sc = ax.scatter([m.delay for m in feas], [m.energy for m in feas], s=8, alpha=0.4, label=name)
        front = pareto_frontier(feas)
        ax.plot([m.delay for m in front], [m.energy for m in front], color=sc.get_facecolor()[0], lw=1.2)
        best = min_edp(feas)
        ax.scatter([best.delay], [best.energy], marker="*", s=120, color=sc.get_facecolor()[0], edgecolor="k")
    ax.set_xlabel("delay per stage (ps)")
    ax.set_ylabel("energy per stage (fJ)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def load_default_skeleton(path=None) -> Dict[str, SkeletonEntry]:
    from .celllib import load_skeleton

    path = Path(path) if path else DATA_DIR / "skeleton.lib"
    return load_skeleton(path.read_text())


def build_library(coeff: Optional[SurrogateCoefficients] = None, skeleton_path=None) -> CellLibrary:
    """Characterize the skeleton at each architecture's min-EDP corner."""
    coeff = coeff or load_coefficients()
    return characterize_library(default_points(coeff), coeff, load_default_skeleton(skeleton_path))
