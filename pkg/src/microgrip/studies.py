"""Study campaigns: voltage and environment sweeps, model comparison, stack optimization."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .design import GripperDesign, StackParams, build_model1, build_model2, build_stack_design
from .grip import estimate_grip
from .materials import Environment
from .physics import CoupledModel, MeshSettings, material_library

VOLTAGE_LIMIT = 1.0
DEFAULT_H_GRID = (20.0, 100.0, 250.0, 500.0, 1000.0)
DEFAULT_VOLTAGES = (0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3)
OPERATING_VOLTAGE = 0.25
MAX_VOLTAGE = 0.3
REQUIRED_CLOSURE = 10.0

CSV_HEADER = ("design_id,voltage_V,h_W_per_m2K,tip_gap_um,max_T_K,tip_T_K,"
              "out_of_plane_um,power_pW,grip_force_uN,grip_pressure_MPa")


class StudyError(RuntimeError):
    pass


class SweepError(StudyError):
    def __init__(self, voltage, error):
        self.voltage, self.error = voltage, error
        super().__init__(f"sweep failed at {voltage} V: {error}")


class InfeasibleError(StudyError):
    def __init__(self, message, closest=None, trace=None):
        super().__init__(message)
        self.closest, self.trace = closest, trace or []


def _num(v) -> str:
    return "" if v is None else format(float(v), ".10g")


@dataclass(frozen=True)
class SweepRecord:
    design_id: str
    applied_voltage: float
    convection_coefficient: float
    tip_gap: float
    max_temperature: float
    tip_temperature: float
    out_of_plane_max: float
    joule_power_total: float
    grip_force: float | None = None
    grip_pressure: float | None = None

    def csv_row(self) -> str:
        cols = [self.design_id] + [_num(v) for v in (
            self.applied_voltage, self.convection_coefficient, self.tip_gap, self.max_temperature,
            self.tip_temperature, self.out_of_plane_max, self.joule_power_total,
            self.grip_force, self.grip_pressure)]
        return ",".join(cols)


def _record(design_id, sol, grip=None) -> SweepRecord:
    return SweepRecord(
        design_id=design_id,
        applied_voltage=sol.applied_voltage,
        convection_coefficient=sol.environment.convection_coefficient,
        tip_gap=sol.tip_gap,
        max_temperature=sol.max_temperature,
        tip_temperature=sol.tip_temperature,
        out_of_plane_max=sol.out_of_plane_max,
        joule_power_total=sol.joule_power_total,
        grip_force=None if grip is None else grip.total_normal_force,
        grip_pressure=None if grip is None else grip.max_contact_pressure,
    )


def _model(design, env, mesh_settings, materials) -> CoupledModel:
    if isinstance(design, CoupledModel):
        return design if env is None else design.with_environment(env)
    return CoupledModel(design, env, mesh_settings, material_library(materials))


def _design_id(model: CoupledModel) -> str:
    if model.design is not None:
        return model.design.name
    return model.mesh.name


def _check_voltages(voltages):
    v = [float(x) for x in voltages]
    if any(b < a for a, b in zip(v, v[1:])):
        raise ValueError("voltages must be sorted ascending")
    if any(not (0.0 <= x <= VOLTAGE_LIMIT) for x in v):
        raise ValueError(f"voltages must lie in [0, {VOLTAGE_LIMIT}] V")
    return v


def _run_voltages(model: CoupledModel, voltages, object_diameter=None) -> list[SweepRecord]:
    out = []
    name = _design_id(model)
    for v in voltages:
        try:
            sol = model.run(v)
            grip = estimate_grip(model, v, object_diameter, solution=sol) if object_diameter else None
        except Exception as exc:  # noqa: BLE001 - re-raised with the voltage attached
            raise SweepError(v, exc) from exc
        out.append(_record(name, sol, grip))
    return out


def _map(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def voltage_sweep(design: GripperDesign | CoupledModel, voltages, env: Environment | None = None,
                  mesh_settings: MeshSettings | None = None, materials: dict | None = None,
                  object_diameter: float | None = None) -> list[SweepRecord]:
    """One coupled run per voltage, in input order (factorizations are reused)."""
    v = _check_voltages(voltages)
    return _run_voltages(_model(design, env, mesh_settings, materials), v, object_diameter)


def environment_sweep(design: GripperDesign | CoupledModel, voltages, h_values=DEFAULT_H_GRID,
                      ambient_temperature: float | None = None, mesh_settings: MeshSettings | None = None,
                      materials: dict | None = None, object_diameter: float | None = None,
                      threads: int = 1) -> list[SweepRecord]:
    """Cross product of convection coefficients and voltages, ``h``-major."""
    v = _check_voltages(voltages)
    base = _model(design, None, mesh_settings, materials)
    t_amb = base.env.ambient_temperature if ambient_temperature is None else ambient_temperature
    h_air = Environment().convection_coefficient
    if any(h < h_air for h in h_values):
        raise ValueError(f"convection coefficients must be >= {h_air}")
    # build the shared operators once, before fanning out
    base.electric.solver.prepare()
    base.mechanical.solver.prepare()
    models = [base.with_environment(Environment(t_amb, float(h))) for h in h_values]
    blocks = _map(lambda m: _run_voltages(m, v, object_diameter), models, threads)
    return [r for block in blocks for r in block]


def required_voltage(design: GripperDesign | CoupledModel, target_closure: float, env: Environment | None = None,
                     mesh_settings: MeshSettings | None = None, materials: dict | None = None,
                     v_max: float = VOLTAGE_LIMIT, xtol: float = 1e-9) -> float:
    """Smallest voltage whose free closure reaches ``target_closure`` (inf if beyond ``v_max``)."""
    model = _model(design, env, mesh_settings, materials)
    if target_closure <= 0:
        return 0.0

    def excess(v):
        return model.run(v).closure - target_closure

    if excess(v_max) < 0:
        return math.inf
    return float(optimize.brentq(excess, 0.0, v_max, xtol=xtol, rtol=4 * np.finfo(float).eps))


def required_voltage_table(design: GripperDesign | CoupledModel, targets, h_values=DEFAULT_H_GRID,
                           ambient_temperature: float | None = None, mesh_settings: MeshSettings | None = None,
                           materials: dict | None = None, v_max: float = VOLTAGE_LIMIT,
                           threads: int = 1) -> list[tuple]:
    """``(design_id, h, target, voltage)`` rows, ``h``-major, for each closure target."""
    base = _model(design, None, mesh_settings, materials)
    t_amb = base.env.ambient_temperature if ambient_temperature is None else ambient_temperature
    base.electric.solver.prepare()
    base.mechanical.solver.prepare()
    models = [base.with_environment(Environment(t_amb, float(h))) for h in h_values]
    name = _design_id(base)

    def block(m):
        return [(name, m.env.convection_coefficient, float(t), required_voltage(m, t, v_max=v_max))
                for t in targets]

    return [row for rows in _map(block, models, threads) for row in rows]


REQUIRED_VOLTAGE_HEADER = "design_id,h_W_per_m2K,closure_target_um,required_voltage_V"


def required_voltage_rows(table) -> list[str]:
    return [REQUIRED_VOLTAGE_HEADER] + [f"{d},{_num(h)},{_num(t)},{_num(v)}" for d, h, t, v in table]


def calibrate_conductivity(design: GripperDesign, voltage: float, target_closure: float,
                           env: Environment | None = None, mesh_settings: MeshSettings | None = None,
                           materials: dict | None = None, metal: str = "Gold") -> float:
    """Metal conductivity giving ``target_closure`` at ``voltage``.

    At fixed voltage the Joule power, hence every downstream field, is
    proportional to the conductivity, so one reference run fixes the scale.
    """
    lib = material_library(materials)
    model = CoupledModel(design, env, mesh_settings, lib)
    closure = model.run(voltage).closure
    if not closure > 0:
        raise StudyError("reference run produced no closure")
    return lib[metal].electrical_conductivity * target_closure / closure


# ------------------------------------------------------------------ comparison

@dataclass
class Comparison:
    model1: list
    model2: list
    verdicts: dict

    def records(self) -> list[SweepRecord]:
        return [r for pair in zip(self.model1, self.model2) for r in pair]


def compare_models(voltages=DEFAULT_VOLTAGES, env: Environment | None = None,
                   mesh_settings: MeshSettings | None = None, materials: dict | None = None,
                   threads: int = 1, tol: float = 1e-9) -> Comparison:
    v = _check_voltages(voltages)
    designs = [build_model1(), build_model2()]
    r1, r2 = _map(lambda d: voltage_sweep(d, v, env, mesh_settings, materials), designs, threads)
    verdicts = {
        "model2 closes slower": all(b.tip_gap >= a.tip_gap - tol for a, b in zip(r1, r2)),
        "model2 out-of-plane smaller": all(b.out_of_plane_max <= a.out_of_plane_max + tol for a, b in zip(r1, r2)),
    }
    return Comparison(r1, r2, verdicts)


# ------------------------------------------------------------------ optimization

VARIABLES = ("polymer_split_fraction", "metal_thickness", "placement_offset")


@dataclass(frozen=True)
class DesignSpace:
    """Either continuous ranges over stack variables or a list of candidate designs."""

    variables: dict = field(default_factory=dict)  # name -> (low, high)
    candidates: tuple = ()
    operating_voltage: float = OPERATING_VOLTAGE
    v_max: float = MAX_VOLTAGE
    required_closure: float = REQUIRED_CLOSURE
    environment: Environment = field(default_factory=Environment)
    base: StackParams = field(default_factory=StackParams)
    plan_overrides: dict = field(default_factory=dict)

    def validate(self):
        problems = []
        for name, rng in self.variables.items():
            if name not in VARIABLES:
                problems.append(f"unknown design variable {name!r}")
                continue
            lo, hi = rng
            if not hi >= lo:
                problems.append(f"empty range for {name}")
        if "polymer_split_fraction" in self.variables and "placement_offset" in self.variables:
            problems.append("polymer_split_fraction and placement_offset describe the same freedom")
        if not self.variables and not self.candidates:
            problems.append("design space has no variables and no candidates")
        if self.variables and self.candidates:
            problems.append("give either variables or candidates, not both")
        if not 0 < self.operating_voltage <= self.v_max <= VOLTAGE_LIMIT:
            problems.append(f"need 0 < operating_voltage <= v_max <= {VOLTAGE_LIMIT}")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def names(self) -> tuple:
        return tuple(self.variables)

    def design(self, point) -> GripperDesign:
        values = dict(zip(self.names, (float(x) for x in point)))
        f = values.get("polymer_split_fraction", self.base.polymer_split_fraction)
        if "placement_offset" in values:
            f = 0.5 + values["placement_offset"] / self.base.polymer_thickness
        t = values.get("metal_thickness", self.base.metal_thickness)
        return build_stack_design(f, t, overrides=dict(self.plan_overrides))


@dataclass(frozen=True)
class Evaluation:
    index: int
    design_id: str
    point: tuple
    objective: float
    closure_at_vmax: float
    feasible: bool


@dataclass
class OptimizationResult:
    best_design: object
    best_objective: float
    best_point: tuple
    trace: list

    def trace_rows(self) -> list[str]:
        rows = ["index,design_id,point,objective_um,closure_at_vmax_um,feasible"]
        for e in self.trace:
            pt = ";".join(_num(x) for x in e.point)
            rows.append(f"{e.index},{e.design_id},{pt},{_num(e.objective)},{_num(e.closure_at_vmax)},{int(e.feasible)}")
        return rows


class _Evaluator:
    """Memoized objective; records every distinct evaluation in call order."""

    def __init__(self, space: DesignSpace, mesh_settings, materials, evaluate=None):
        self.space, self.settings, self.materials = space, mesh_settings, materials
        self.custom = evaluate
        self.cache = {}
        self.trace = []
        self.designs = {}

    def __call__(self, point) -> Evaluation:
        key = tuple(round(float(x), 12) for x in point)
        if key in self.cache:
            return self.cache[key]
        if self.custom is not None:
            objective, closure = self.custom(key)
            design_id = "point" + str(len(self.trace))
            design = key
        else:
            if self.space.candidates:
                design = self.space.candidates[int(key[0])]
            else:
                design = self.space.design(key)
            model = CoupledModel(design, self.space.environment, self.settings, material_library(self.materials))
            objective = model.run(self.space.operating_voltage).out_of_plane_max
            closure = model.run(self.space.v_max).closure
            design_id = design.name
        ev = Evaluation(len(self.trace), design_id, key, float(objective), float(closure),
                        bool(closure >= self.space.required_closure))
        self.cache[key] = ev
        self.designs[key] = design
        self.trace.append(ev)
        return ev

    def penalised(self, point) -> float:
        ev = self(point)
        if ev.feasible:
            return ev.objective
        return ev.objective + 1e3 * (self.space.required_closure - ev.closure_at_vmax)


def _grid_points(space: DesignSpace, budget: int):
    if space.candidates:
        return [(float(i),) for i in range(len(space.candidates))][:budget]
    d = len(space.names)
    per = max(2, int(math.floor(budget ** (1.0 / d) + 1e-9)))
    axes = [np.linspace(lo, hi, per) if hi > lo else np.array([lo]) for lo, hi in space.variables.values()]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    return [tuple(p) for p in pts[:budget]]


def _golden(ev: _Evaluator, space: DesignSpace, budget: int):
    if len(space.names) != 1:
        raise ValueError("golden-section search needs exactly one variable")
    lo, hi = next(iter(space.variables.values()))
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = ev.penalised((c,)), ev.penalised((d,))
    for _ in range(max(0, budget - 2)):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = ev.penalised((c,))
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = ev.penalised((d,))


def _nelder_mead(ev: _Evaluator, space: DesignSpace, budget: int, seed: int, precondition: bool):
    lows = np.array([r[0] for r in space.variables.values()], float)
    highs = np.array([r[1] for r in space.variables.values()], float)
    span = np.where(highs > lows, highs - lows, 1.0)

    def f(z):
        return ev.penalised(tuple(lows + np.clip(z, 0.0, 1.0) * span))

    starts = []
    remaining = budget
    if precondition:
        n_grid = max(2, min(remaining // 2, 3 ** len(lows)))
        for p in _grid_points(space, n_grid):
            ev.penalised(p)
        remaining = budget - len(ev.trace)
        best = min(ev.trace, key=lambda e: (not e.feasible, e.objective))
        starts.append((np.array(best.point) - lows) / span)
    else:
        starts.append(np.full(len(lows), 0.5))
    rng = np.random.default_rng(seed)
    # first run plus one restart from a seeded perturbation of the incumbent
    for attempt in range(2):
        if remaining <= 0:
            break
        x0 = starts[-1]
        if attempt == 1:
            best = min(ev.trace, key=lambda e: (not e.feasible, e.objective))
            x0 = np.clip((np.array(best.point) - lows) / span + rng.normal(0, 0.1, len(lows)), 0, 1)
        before = len(ev.trace)
        optimize.minimize(f, x0, method="Nelder-Mead",
                          options={"maxfev": remaining, "xatol": 1e-4, "fatol": 1e-6,
                                   "initial_simplex": _simplex(x0)})
        remaining -= len(ev.trace) - before


def _simplex(x0):
    n = len(x0)
    pts = [x0]
    for i in range(n):
        p = x0.copy()
        p[i] = p[i] + 0.25 if p[i] + 0.25 <= 1 else p[i] - 0.25
        pts.append(p)
    return np.array(pts)


def optimize_design(space: DesignSpace, method: str = "grid", budget: int = 9, seed: int = 0,
                    mesh_settings: MeshSettings | None = None, materials: dict | None = None,
                    precondition: bool = True, evaluate=None) -> OptimizationResult:
    """Minimize out-of-plane motion at the operating voltage subject to the closure constraint.

    ``evaluate(point) -> (objective, closure_at_vmax)`` replaces the coupled
    model, which is useful for testing the search logic alone.
    """
    if budget < 3:
        raise ValueError("budget must be >= 3")
    if evaluate is None:
        space.validate()
    ev = _Evaluator(space, mesh_settings, materials, evaluate)
    if method == "grid":
        for p in _grid_points(space, budget):
            ev(p)
    elif method == "golden-section":
        _golden(ev, space, budget)
    elif method == "nelder-mead":
        if space.candidates:
            raise ValueError("nelder-mead needs continuous variables")
        _nelder_mead(ev, space, budget, seed, precondition)
    else:
        raise ValueError(f"unknown method {method!r}")
    feasible = [e for e in ev.trace if e.feasible]
    if not feasible:
        closest = max(ev.trace, key=lambda e: e.closure_at_vmax)
        raise InfeasibleError(
            f"no feasible design in {len(ev.trace)} evaluations; closest reaches "
            f"{closest.closure_at_vmax:.4g} um of {space.required_closure} um",
            closest, ev.trace)
    best = min(feasible, key=lambda e: (e.objective, e.index))
    return OptimizationResult(ev.designs[best.point], best.objective, best.point, list(ev.trace))


def model_space(**kw) -> DesignSpace:
    """The two built-in stacks as a discrete design space."""
    return DesignSpace(candidates=(build_model1(), build_model2()), **kw)


def placement_space(n: int = 5, low: float = 0.1, high: float = 0.9, **kw) -> tuple[DesignSpace, int]:
    """Grid budget and space over the share of polymer below a single metal layer."""
    return DesignSpace(variables={"polymer_split_fraction": (low, high)}, **kw), n


__all__ = [
    "CSV_HEADER", "Comparison", "DEFAULT_H_GRID", "DEFAULT_VOLTAGES", "DesignSpace", "Evaluation",
    "InfeasibleError", "OptimizationResult", "StudyError", "SweepError", "SweepRecord",
    "calibrate_conductivity", "compare_models", "environment_sweep", "model_space",
    "optimize_design", "placement_space", "required_voltage", "required_voltage_rows",
    "required_voltage_table", "voltage_sweep",
]
