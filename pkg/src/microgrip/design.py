"""Parametric plan-view geometry and layer stacks of the two-arm microgripper.

Coordinates: ``x`` runs from the anchor (x = 0) to the tips, ``y`` across the
footprint with the gripper midline at ``footprint_width / 2``, ``z`` up through
the layer stack (z = 0 is the bottom of the anchor oxide).  The arm at
``y > midline`` is called ``left`` (looking from the anchor toward the tips),
the mirrored one ``right``.

Each arm is a hot/cold-arm actuator: a wide inner beam (cold underarm followed by
the free arm carrying the tip) and an outer hot underarm carrying a U-shaped
heater trace.  The two underarms are joined by a junction block at their far
ends; heating the outer underarm swings the free arm toward the midline.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from .materials import MaterialProps, builtin_library

ROLES = ("substrate_oxide", "structural_polymer", "conductor")
PLACEMENTS = ("both_faces", "midplane", "parametric_offset")
ARMS = ("left", "right")


class DesignError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid design: " + "; ".join(self.violations))


@dataclass(frozen=True)
class Rect:
    x0: float
    x1: float
    y0: float
    y1: float

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @property
    def degenerate(self) -> bool:
        return not (self.x1 > self.x0 and self.y1 > self.y0)

    def mirror(self, yc: float) -> Rect:
        return Rect(self.x0, self.x1, 2 * yc - self.y1, 2 * yc - self.y0)

    def contains(self, x, y, tol=1e-9):
        return (self.x0 - tol <= x) & (x <= self.x1 + tol) & (self.y0 - tol <= y) & (y <= self.y1 + tol)

    def touches(self, other: Rect, tol=1e-9) -> bool:
        """True when the rectangles overlap or share an edge segment of positive length."""
        ox = min(self.x1, other.x1) - max(self.x0, other.x0)
        oy = min(self.y1, other.y1) - max(self.y0, other.y0)
        return (ox > tol and oy > -tol) or (oy > tol and ox > -tol)

    def key(self, ndigits=9):
        return tuple(round(v, ndigits) for v in (self.x0, self.x1, self.y0, self.y1))


@dataclass(frozen=True)
class PlanRect:
    label: str
    arm: str  # "left", "right" or "" for shared parts
    rect: Rect


@dataclass(frozen=True)
class Pad:
    pad_id: str
    arm: str
    polarity: str  # "high" or "low"
    rect: Rect


@dataclass(frozen=True)
class TipFace:
    """Inner lateral face of an arm end; ``normal`` is the outward y-direction (+1 or -1)."""

    arm: str
    x0: float
    x1: float
    y: float
    normal: int


@dataclass(frozen=True)
class FaceSelector:
    """Boundary facets with outward normal ``side`` along ``axis`` whose centroid lies in ``box``."""

    axis: int
    side: int
    box: tuple[float, float, float, float, float, float]


@dataclass(frozen=True)
class LayerSpec:
    material: str
    thickness: float
    role: str


@dataclass(frozen=True)
class ArmPlan:
    parts: tuple[PlanRect, ...]
    trace: tuple[PlanRect, ...]
    pads: tuple[Pad, ...]
    tips: tuple[TipFace, ...]


@dataclass(frozen=True)
class Layout:
    """Boundary representation consumed by the mesher."""

    name: str
    parts: tuple[PlanRect, ...]
    trace: tuple[PlanRect, ...]
    pads: tuple[Pad, ...]
    stack: tuple[LayerSpec, ...]
    anchor_labels: frozenset
    fixed: FaceSelector | None
    tips: tuple[TipFace, ...] = ()
    midline_y: float | None = None


@dataclass(frozen=True)
class PlanParams:
    footprint_length: float = 460.0
    footprint_width: float = 200.0
    free_arm_length: float = 400.0
    tip_gap_open: float = 20.0
    arm_width: float = 20.0
    underarm_length: float = 200.0
    underarm_spacing: float = 40.0
    hot_arm_width: float = 30.0
    junction_length: float = 5.0
    flexure_length: float = 0.0
    flexure_width: float = 10.0
    trace_width: float = 2.5
    trace_margin: float = 5.0
    pad_length: float = 20.0
    pad_inset: float = 10.0
    tip_length: float = 10.0

    @property
    def anchor_length(self) -> float:
        return self.footprint_length - self.free_arm_length

    @property
    def midline(self) -> float:
        return self.footprint_width / 2.0


@dataclass(frozen=True)
class StackParams:
    oxide_thickness: float = 2.0
    polymer_thickness: float = 20.0
    metal_thickness: float = 0.3
    polymer_split_fraction: float = 0.5
    polymer: str = "SU-8"
    oxide: str = "SiO2"
    metal: str = "Gold"


@dataclass(frozen=True)
class GripperDesign:
    name: str
    plan_params: PlanParams
    stack_params: StackParams
    arm_plan: ArmPlan
    stack: tuple[LayerSpec, ...]
    metal_placement: str
    placement_offset: float = 0.0

    @property
    def footprint_length(self) -> float:
        return self.plan_params.footprint_length

    @property
    def footprint_width(self) -> float:
        return self.plan_params.footprint_width

    @property
    def free_arm_length(self) -> float:
        return self.plan_params.free_arm_length

    @property
    def tip_gap_open(self) -> float:
        tips = {t.arm: t for t in self.arm_plan.tips}
        if "left" in tips and "right" in tips:
            return tips["left"].y - tips["right"].y
        return self.plan_params.tip_gap_open

    @property
    def midline_y(self) -> float:
        return self.plan_params.midline

    @property
    def terminal_pads(self) -> tuple[Pad, ...]:
        return self.arm_plan.pads

    @property
    def total_thickness(self) -> float:
        return sum(layer.thickness for layer in self.stack)

    @property
    def free_arm_thickness(self) -> float:
        return sum(layer.thickness for layer in self.stack if layer.role != "substrate_oxide")

    def layout(self) -> Layout:
        pp = self.plan_params
        eps = 1e-6
        return Layout(
            name=self.name,
            parts=self.arm_plan.parts,
            trace=self.arm_plan.trace,
            pads=self.arm_plan.pads,
            stack=self.stack,
            anchor_labels=frozenset({"anchor"}),
            fixed=FaceSelector(2, -1, (-eps, pp.footprint_length + eps, -eps, pp.footprint_width + eps, -eps, eps)),
            tips=self.arm_plan.tips,
            midline_y=pp.midline,
        )

    def parameters(self) -> dict:
        """Flat, fully resolved parameter set (used by ``dump-design``)."""
        return {
            "name": self.name,
            "metal_placement": self.metal_placement,
            "placement_offset": self.placement_offset,
            "plan": asdict(self.plan_params),
            "stack_params": asdict(self.stack_params),
            "stack": [asdict(layer) for layer in self.stack],
            "total_thickness": self.total_thickness,
            "free_arm_thickness": self.free_arm_thickness,
            "tip_gap_open": self.tip_gap_open,
        }


def _arm_plan(pp: PlanParams) -> ArmPlan:
    mid = pp.midline
    xa = pp.anchor_length
    xl = pp.footprint_length
    x_junction0 = xa + pp.underarm_length - pp.junction_length
    x_junction1 = xa + pp.underarm_length

    inner0 = mid + pp.tip_gap_open / 2.0
    inner1 = inner0 + pp.arm_width
    hot0 = inner1 + pp.underarm_spacing
    hot1 = hot0 + pp.hot_arm_width

    left_parts = []
    if pp.flexure_length > 0:
        # narrow section of the cold underarm at the anchor, flush with its inner edge
        left_parts.append(PlanRect("flexure", "left", Rect(xa, xa + pp.flexure_length, inner0, inner0 + pp.flexure_width)))
        left_parts.append(PlanRect("cold_underarm", "left", Rect(xa + pp.flexure_length, x_junction0, inner0, inner1)))
    else:
        left_parts.append(PlanRect("cold_underarm", "left", Rect(xa, x_junction0, inner0, inner1)))
    left_parts += [
        PlanRect("hot_underarm", "left", Rect(xa, x_junction0, hot0, hot1)),
        PlanRect("junction", "left", Rect(x_junction0, x_junction1, inner0, hot1)),
        PlanRect("arm", "left", Rect(x_junction1, xl - pp.tip_length, inner0, inner1)),
        PlanRect("tip", "left", Rect(xl - pp.tip_length, xl, inner0, inner1)),
    ]

    # U-shaped heater: two legs along the hot underarm joined at its far end,
    # both legs ending on pads over the anchor
    tw, m = pp.trace_width, pp.trace_margin
    leg_in = (hot0 + m, hot0 + m + tw)
    leg_out = (hot1 - m - tw, hot1 - m)
    x_pad0 = xa - pp.pad_inset - pp.pad_length
    x_pad1 = xa - pp.pad_inset
    x_bend1 = x_junction0
    left_trace = [
        PlanRect("trace", "left", Rect(x_pad0, x_bend1, *leg_in)),
        PlanRect("trace", "left", Rect(x_pad0, x_bend1, *leg_out)),
        PlanRect("trace", "left", Rect(x_bend1 - tw, x_bend1, leg_in[0], leg_out[1])),
    ]
    left_pads = [
        Pad("left+", "left", "high", Rect(x_pad0, x_pad1, *leg_out)),
        Pad("left-", "left", "low", Rect(x_pad0, x_pad1, *leg_in)),
    ]

    def mirrored(items):
        out = []
        for it in items:
            if isinstance(it, Pad):
                out.append(Pad(it.pad_id.replace("left", "right"), "right", it.polarity, it.rect.mirror(mid)))
            else:
                out.append(PlanRect(it.label, "right", it.rect.mirror(mid)))
        return out

    anchor = PlanRect("anchor", "", Rect(0.0, xa, 0.0, pp.footprint_width))
    parts = (anchor, *left_parts, *mirrored(left_parts))
    trace = (*left_trace, *mirrored(left_trace))
    pads = (*left_pads, *mirrored(left_pads))
    tips = (
        TipFace("left", xl - pp.tip_length, xl, inner0, -1),
        TipFace("right", xl - pp.tip_length, xl, 2 * mid - inner0, +1),
    )
    return ArmPlan(parts=parts, trace=trace, pads=pads, tips=tips)


def _stack(placement: str, sp: StackParams) -> tuple[tuple[LayerSpec, ...], float]:
    oxide = LayerSpec(sp.oxide, sp.oxide_thickness, "substrate_oxide")
    metal = LayerSpec(sp.metal, sp.metal_thickness, "conductor")
    if placement == "both_faces":
        return (oxide, metal, LayerSpec(sp.polymer, sp.polymer_thickness, "structural_polymer"), metal), 0.0
    lower = sp.polymer_split_fraction * sp.polymer_thickness
    upper = sp.polymer_thickness - lower
    layers = (
        oxide,
        LayerSpec(sp.polymer, lower, "structural_polymer"),
        metal,
        LayerSpec(sp.polymer, upper, "structural_polymer"),
    )
    # offset of the metal centre from the mid-thickness of the free-arm stack
    return layers, (lower - upper) / 2.0


_PLAN_KEYS = {f.name for f in fields(PlanParams)}
_STACK_KEYS = {f.name for f in fields(StackParams)}


def _split_overrides(overrides: dict | None):
    overrides = dict(overrides or {})
    unknown = sorted(set(overrides) - _PLAN_KEYS - _STACK_KEYS)
    if unknown:
        raise DesignError([f"unknown design parameter {k!r}" for k in unknown])
    plan = {k: float(v) for k, v in overrides.items() if k in _PLAN_KEYS}
    stack = {k: (v if isinstance(v, str) else float(v)) for k, v in overrides.items() if k in _STACK_KEYS}
    return plan, stack


def _build(name: str, placement: str, overrides: dict | None, stack_defaults: dict | None = None) -> GripperDesign:
    plan_over, stack_over = _split_overrides(overrides)
    pp = PlanParams(**plan_over)
    sp = StackParams(**{**(stack_defaults or {}), **stack_over})
    problems = _param_problems(pp, sp)
    if problems:
        raise DesignError(problems)
    layers, offset = _stack(placement, sp)
    design = GripperDesign(
        name=name,
        plan_params=pp,
        stack_params=sp,
        arm_plan=_arm_plan(pp),
        stack=layers,
        metal_placement=placement,
        placement_offset=offset,
    )
    problems = validate_design(design)
    if problems:
        raise DesignError(problems)
    return design


def _param_problems(pp: PlanParams, sp: StackParams) -> list[str]:
    problems = []
    for key, value in asdict(pp).items():
        if key == "flexure_length":
            if value < 0:
                problems.append("flexure_length must be >= 0")
        elif not value > 0:
            problems.append(f"{key} must be > 0")
    for key in ("oxide_thickness", "polymer_thickness", "metal_thickness"):
        if not getattr(sp, key) > 0:
            problems.append(f"{key} must be > 0")
    if not 0.0 < sp.polymer_split_fraction < 1.0:
        problems.append("polymer_split_fraction must lie in (0, 1)")
    if problems:
        return problems
    if pp.free_arm_length >= pp.footprint_length:
        problems.append("free_arm_length must be < footprint_length")
    if 2 * pp.trace_margin + 2 * pp.trace_width >= pp.hot_arm_width:
        problems.append("hot_arm_width too narrow for two trace legs")
    if pp.junction_length + pp.flexure_length >= pp.underarm_length:
        problems.append("underarm_length must exceed junction_length + flexure_length")
    if pp.flexure_length > 0 and pp.flexure_width > pp.arm_width:
        problems.append("flexure_width must not exceed arm_width")
    if pp.underarm_length + pp.tip_length >= pp.free_arm_length:
        problems.append("free_arm_length must exceed underarm_length + tip_length")
    if pp.pad_inset + pp.pad_length >= pp.anchor_length:
        problems.append("pads do not fit on the anchor")
    outer = pp.tip_gap_open / 2 + pp.arm_width + pp.underarm_spacing + pp.hot_arm_width
    if outer > pp.footprint_width / 2:
        problems.append("arms do not fit inside footprint_width")
    return problems


def build_model1(overrides: dict | None = None) -> GripperDesign:
    """Metal on both faces of a single polymer core."""
    return _build("model1", "both_faces", overrides)


def build_model2(overrides: dict | None = None) -> GripperDesign:
    """One metal layer at the midplane between two equal polymer layers."""
    overrides = dict(overrides or {})
    if "polymer_split_fraction" in overrides and float(overrides["polymer_split_fraction"]) != 0.5:
        raise DesignError(["model2 places the metal at the midplane; use build_stack_design for offsets"])
    return _build("model2", "midplane", overrides)


def build_stack_design(polymer_split_fraction: float = 0.5, metal_thickness: float | None = None,
                       overrides: dict | None = None, name: str | None = None) -> GripperDesign:
    """Single embedded metal layer at an arbitrary height inside the polymer.

    ``polymer_split_fraction`` is the share of polymer below the metal.
    """
    overrides = dict(overrides or {})
    overrides["polymer_split_fraction"] = polymer_split_fraction
    if metal_thickness is not None:
        overrides["metal_thickness"] = metal_thickness
    if name is None:
        name = f"stack_f{polymer_split_fraction:.4g}_t{overrides.get('metal_thickness', StackParams.metal_thickness):.4g}"
    return _build(name, "parametric_offset", overrides)


def build_design(model: str, overrides: dict | None = None) -> GripperDesign:
    if model == "model1":
        return build_model1(overrides)
    if model == "model2":
        return build_model2(overrides)
    if model == "stack":
        overrides = dict(overrides or {})
        fraction = overrides.pop("polymer_split_fraction", 0.5)
        return build_stack_design(float(fraction), overrides=overrides)
    raise DesignError([f"unknown design model {model!r} (expected model1, model2 or stack)"])


def _components(rects: list[Rect]) -> list[list[int]]:
    parent = list(range(len(rects)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(rects)):
        for j in range(i + 1, len(rects)):
            if rects[i].touches(rects[j]):
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(len(rects)):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def _overlaps(a: Rect, b: Rect, tol=1e-9) -> bool:
    return min(a.x1, b.x1) - max(a.x0, b.x0) > tol and min(a.y1, b.y1) - max(a.y0, b.y0) > tol


def validate_design(d: GripperDesign, materials: dict[str, MaterialProps] | None = None) -> list[str]:
    """Return one message per violated design invariant (empty when valid)."""
    materials = builtin_library() if materials is None else materials
    report = []

    for layer in d.stack:
        if not layer.thickness > 0:
            report.append(f"layer {layer.material!r} thickness must be > 0")
        if layer.role not in ROLES:
            report.append(f"unknown layer role {layer.role!r}")
        if layer.role == "conductor":
            mat = materials.get(layer.material)
            if mat is None or not mat.is_conductor:
                report.append(f"conductor layer material {layer.material!r} has no electrical conductivity")
    if d.metal_placement not in PLACEMENTS:
        report.append(f"unknown metal_placement {d.metal_placement!r}")
    if not d.tip_gap_open > 0:
        report.append("tip_gap_open must be > 0")
    if not 0 < d.free_arm_length < d.footprint_length:
        report.append("free_arm_length must lie in (0, footprint_length)")

    plan = d.arm_plan
    for item in (*plan.parts, *plan.trace):
        if item.rect.degenerate:
            report.append(f"degenerate rectangle in {item.label!r} ({item.arm or 'shared'})")
    if any(p.rect.degenerate for p in plan.pads):
        report.append("degenerate terminal pad")
    if report:
        return report

    for arm in ARMS:
        rects = [t.rect for t in plan.trace if t.arm == arm]
        if not rects:
            report.append(f"{arm} arm has no heater trace")
            continue
        if len(_components(rects)) != 1:
            report.append(f"heater trace not connected ({arm} arm)")
        pads = [p for p in plan.pads if p.arm == arm]
        touching = [p for p in pads if any(_overlaps(p.rect, r) for r in rects)]
        if len(touching) != 2 or len(pads) != 2:
            report.append(f"heater trace must touch exactly two terminal pads ({arm} arm)")
        elif sorted(p.polarity for p in pads) != ["high", "low"]:
            report.append(f"{arm} arm needs one high and one low terminal")

    part_rects = [p.rect for p in plan.parts]
    if len(_components(part_rects)) != 1:
        report.append("solid parts not connected")
    for t in plan.trace:
        if not any(_overlaps(t.rect, r) for r in part_rects):
            report.append(f"trace segment outside the structure ({t.arm} arm)")
            break

    yc = d.midline_y

    def side(items, arm):
        return sorted((getattr(i, "label", getattr(i, "polarity", "")), i.rect.key()) for i in items if i.arm == arm)

    def mirror_side(items, arm):
        return sorted((getattr(i, "label", getattr(i, "polarity", "")), i.rect.mirror(yc).key()) for i in items if i.arm == arm)

    symmetric = all(
        side(group, "right") == mirror_side(group, "left")
        for group in (plan.parts, plan.trace, plan.pads)
    )
    shared = [p.rect for p in plan.parts if p.arm == ""]
    symmetric = symmetric and sorted(r.key() for r in shared) == sorted(r.mirror(yc).key() for r in shared)
    tips = {t.arm: t for t in plan.tips}
    if set(tips) == set(ARMS):
        lt, rt = tips["left"], tips["right"]
        symmetric = symmetric and abs((lt.y - yc) + (rt.y - yc)) < 1e-9 and lt.normal == -rt.normal
    if not symmetric:
        report.append("arms not mirror-symmetric")

    conductors = [i for i, layer in enumerate(d.stack) if layer.role == "conductor"]
    if d.metal_placement == "both_faces":
        if len(conductors) != 2:
            report.append("both_faces placement needs two conductor layers")
    elif len(conductors) != 1:
        report.append(f"{d.metal_placement} placement needs exactly one conductor layer")
    elif d.metal_placement == "midplane" and abs(d.placement_offset) > 1e-9:
        report.append("midplane placement with non-zero offset")
    return report


def with_arm_plan(d: GripperDesign, **changes) -> GripperDesign:
    """Copy of ``d`` with parts of its arm plan replaced (no validation)."""
    return replace(d, arm_plan=replace(d.arm_plan, **changes))


def brick_layout(lx: float, ly: float, layers, fixed: str | None = "bottom", name: str = "brick",
                 conductor_everywhere: bool = True, origin=(0.0, 0.0)) -> Layout:
    """Single rectangular block with a list of ``(material, thickness, role)`` layers.

    ``fixed`` selects the fixed_base face: ``"bottom"`` (z = 0), ``"x0"`` (x = x_min)
    or ``None``.
    """
    x0, y0 = origin
    rect = Rect(x0, x0 + lx, y0, y0 + ly)
    stack = tuple(LayerSpec(*layer) if not isinstance(layer, LayerSpec) else layer for layer in layers)
    height = sum(layer.thickness for layer in stack)
    eps = 1e-9 * max(lx, ly, height)
    selector = None
    if fixed == "bottom":
        selector = FaceSelector(2, -1, (x0 - eps, x0 + lx + eps, y0 - eps, y0 + ly + eps, -eps, eps))
    elif fixed == "x0":
        selector = FaceSelector(0, -1, (x0 - eps, x0 + eps, y0 - eps, y0 + ly + eps, -eps, height + eps))
    elif fixed is not None:
        raise ValueError(f"unknown fixed face {fixed!r}")
    trace = (PlanRect("trace", "", rect),) if conductor_everywhere else ()
    return Layout(
        name=name,
        parts=(PlanRect("body", "", rect),),
        trace=trace,
        pads=(),
        stack=stack,
        anchor_labels=frozenset({"body"}),
        fixed=selector,
    )


DEFAULT_PLAN = PlanParams()
DEFAULT_STACK = StackParams()
__all__ = [
    "ArmPlan", "DesignError", "FaceSelector", "GripperDesign", "Layout", "LayerSpec", "Pad",
    "PlanParams", "PlanRect", "Rect", "StackParams", "TipFace", "brick_layout", "build_design",
    "build_model1", "build_model2", "build_stack_design", "validate_design", "with_arm_plan",
]
