"""Electric, thermal and thermoelastic solves and the one-way coupled driver.

Unit bookkeeping: conductivities are stored in S/um, so the electric operator
yields currents in A; they are reported in pA and Joule heat in pW/um^3 (factor
1e12) to match the thermal solve.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .design import GripperDesign, Layout
from .materials import Environment, MaterialError, MaterialProps, builtin_library
from .mesh import Mesh, conductor_components, generate_mesh

log = logging.getLogger(__name__)

AMPS_TO_PA = 1e12
ROBIN_TAG_PREFIXES = ("convection", "terminal:", "tip:")


class TopologyError(ValueError):
    pass


class SingularSystemError(fem.SolverError):
    pass


class StageError(fem.SolverError):
    def __init__(self, stage: str, error: Exception):
        self.stage = stage
        super().__init__(f"[{stage}] {error}", getattr(error, "history", None))


@dataclass(frozen=True)
class MeshSettings:
    resolution: float = 10.0
    order: int = 2


# ------------------------------------------------------------------ helpers

def _material_table(mesh: Mesh, mats: dict[str, MaterialProps]):
    missing = sorted(set(np.unique(mesh.element_region)) - set(mats))
    if missing:
        raise MaterialError(f"no material properties for region(s): {', '.join(missing)}")
    return {r: mats[r] for r in np.unique(mesh.element_region)}


def _per_element(mesh, mats, attr):
    table = _material_table(mesh, mats)
    out = np.zeros(mesh.n_elements)
    for label, props in table.items():
        out[mesh.element_region == label] = getattr(props, attr)
    return out


def _robin_facets(mesh: Mesh) -> np.ndarray:
    tags = mesh.facet_tag
    mask = np.zeros(len(tags), dtype=bool)
    for prefix in ROBIN_TAG_PREFIXES:
        mask |= np.char.startswith(tags, prefix)
    return np.flatnonzero(mask)


def facet_average(mesh: Mesh, facet_index: np.ndarray, nodal: np.ndarray) -> np.ndarray:
    """Area-weighted mean of a nodal field (scalar or ``(N, k)``) over facets."""
    if len(facet_index) == 0:
        return np.full(nodal.shape[1:], np.nan)
    fconn = mesh.facets[facet_index]
    wda, vals, _ = fem.facet_geometry(mesh.nodes, fconn, mesh.order)
    area = wda.sum()
    return np.einsum("fq,qa,fa...->...", wda, vals, nodal[fconn]) / area


# ------------------------------------------------------------------ electric

@dataclass
class ElectricResult:
    voltage: np.ndarray  # V per node (0 outside the conductor)
    joule_qp: np.ndarray  # pW/um^3 at element quadrature points
    joule_density: np.ndarray  # element mean, pW/um^3
    terminal_current: dict  # pad id -> pA flowing into the device
    total_current: float  # pA, sum of inflows at high terminals
    power: float  # pW, integral of Joule heat
    terminal_power: float  # pW, sum of V * I over terminals
    current_imbalance: float  # relative


class ElectricProblem:
    def __init__(self, mesh: Mesh, mats: dict[str, MaterialProps], rel_tol=fem.DEFAULT_REL_TOL, method="direct"):
        self.mesh = mesh
        table = _material_table(mesh, mats)
        sigma = np.zeros(mesh.n_elements)
        conductive = np.zeros(mesh.n_elements, dtype=bool)
        for label, props in table.items():
            if props.electrical_conductivity is None:
                continue
            if not props.electrical_conductivity > 0:
                raise MaterialError(f"electrical conductivity of {label!r} must be > 0")
            sel = mesh.element_region == label
            sigma[sel] = props.electrical_conductivity
            conductive |= sel
        if not conductive.any():
            raise TopologyError("mesh has no conducting elements")
        self.sigma = sigma
        self.elements = np.flatnonzero(conductive)

        self.pad_nodes = {}
        for pad in mesh.terminals:
            nodes = mesh.tag_nodes(f"terminal:{pad}")
            if len(nodes) == 0:
                raise TopologyError(f"terminal {pad!r} has no facets on the conductor")
            self.pad_nodes[pad] = nodes
        if not self.pad_nodes:
            raise TopologyError("mesh has no terminal facets")
        high = np.unique(np.concatenate([n for p, n in self.pad_nodes.items() if mesh.terminals[p][1] == "high"] or [np.zeros(0, int)]))
        low = np.unique(np.concatenate([n for p, n in self.pad_nodes.items() if mesh.terminals[p][1] == "low"] or [np.zeros(0, int)]))
        for comp in conductor_components(mesh, conductive):
            cnodes = np.unique(mesh.elements[comp])
            if not (np.isin(high, cnodes).any() and np.isin(low, cnodes).any()):
                raise TopologyError(
                    f"conductor component of {len(comp)} elements does not connect a high and a low terminal"
                )
        self.high, self.low = high, low
        self.fixed = np.concatenate([high, low])
        k = fem.scalar_stiffness(mesh, sigma, self.elements)
        active = np.unique(mesh.elements[self.elements])
        self.system = fem.apply_dirichlet(k, np.zeros(mesh.n_nodes), self.fixed, np.zeros(len(self.fixed)), active=active)
        self.solver = fem.SPDSolver(self.system.matrix, method=method, rel_tol=rel_tol)

    def solve(self, applied_voltage: float) -> ElectricResult:
        if applied_voltage < 0:
            raise ValueError("applied_voltage must be >= 0")
        mesh, sys_ = self.mesh, self.system
        values = np.where(np.isin(sys_.fixed, self.high), float(applied_voltage), 0.0)
        b = -(sys_.full_matrix[sys_.free][:, sys_.fixed] @ values)
        v = np.zeros(mesh.n_nodes)
        v[sys_.free] = self.solver.solve(b)
        v[sys_.fixed] = values

        grad = fem.gradient_at_qp(mesh, v, self.elements)
        joule_qp = np.zeros((mesh.n_elements, grad.shape[1] if grad.size else 1))
        joule_qp[self.elements] = AMPS_TO_PA * self.sigma[self.elements, None] * np.einsum("eqi,eqi->eq", grad, grad)
        wdet = np.concatenate([
            fem.element_geometry(mesh.nodes, mesh.elements[ch], mesh.order)[0] for ch in fem._chunks(self.elements)
        ])
        power = float(np.sum(wdet * joule_qp[self.elements]))
        vol = wdet.sum(axis=1)
        density = np.zeros(mesh.n_elements)
        density[self.elements] = (wdet * joule_qp[self.elements]).sum(axis=1) / vol

        flux = AMPS_TO_PA * (sys_.full_matrix @ v)
        currents = {}
        for pad, nodes in self.pad_nodes.items():
            sign = 1.0 if mesh.terminals[pad][1] == "high" else -1.0
            # nodes shared by several pads of equal polarity are counted once per pad set
            currents[pad] = sign * float(flux[nodes].sum())
        inflow = float(flux[self.high].sum())
        outflow = -float(flux[self.low].sum())
        scale = max(abs(inflow), abs(outflow))
        imbalance = abs(inflow - outflow) / scale if scale > 0 else 0.0
        return ElectricResult(
            voltage=v,
            joule_qp=joule_qp,
            joule_density=density,
            terminal_current=currents,
            total_current=inflow,
            power=power,
            terminal_power=float(applied_voltage) * inflow,
            current_imbalance=imbalance,
        )


def solve_electric(mesh: Mesh, mats: dict[str, MaterialProps], applied_voltage: float,
                   rel_tol: float = fem.DEFAULT_REL_TOL) -> ElectricResult:
    """Potential in the conductor with ``applied_voltage`` on high pads and 0 V on low pads."""
    return ElectricProblem(mesh, mats, rel_tol=rel_tol).solve(applied_voltage)


# ------------------------------------------------------------------ thermal

@dataclass
class ThermalResult:
    temperature: np.ndarray
    source_power: float  # pW
    convective_loss: float  # pW
    base_outflow: float  # pW through fixed_base facets

    @property
    def balance_error(self) -> float:
        out = self.convective_loss + self.base_outflow
        scale = max(abs(self.source_power), abs(out))
        return abs(self.source_power - out) / scale if scale > 0 else 0.0


class ThermalProblem:
    def __init__(self, mesh: Mesh, mats: dict[str, MaterialProps], env: Environment,
                 rel_tol=fem.DEFAULT_REL_TOL, method="direct"):
        problems = env.validate()
        if problems:
            raise ValueError("; ".join(problems))
        self.mesh, self.env = mesh, env
        k = fem.scalar_stiffness(mesh, _per_element(mesh, mats, "thermal_conductivity"))
        self.robin = _robin_facets(mesh)
        m_h, f_h = fem.robin_terms(mesh, self.robin, env.convection_coefficient, env.ambient_temperature)
        self.f_robin = f_h
        self.base_nodes = mesh.tag_nodes("fixed_base")
        if len(self.base_nodes) == 0 and (env.convection_coefficient == 0.0 or len(self.robin) == 0):
            raise SingularSystemError(
                "no fixed_base facets and no convective loss: steady temperature is unbounded"
            )
        self.system = fem.apply_dirichlet(k + m_h, f_h, self.base_nodes,
                                          np.full(len(self.base_nodes), env.ambient_temperature))
        self.solver = fem.SPDSolver(self.system.matrix, method=method, rel_tol=rel_tol)

    def solve(self, heat) -> ThermalResult:
        mesh, env, sys_ = self.mesh, self.env, self.system
        heat = np.asarray(heat, dtype=float)
        nq = fem.default_gauss(mesh.order) ** 3
        q_qp = np.broadcast_to(heat[:, None], (mesh.n_elements, nq)) if heat.ndim == 1 else heat
        f_q = fem.source_load(mesh, q_qp)
        rhs = self.f_robin + f_q
        b = rhs[sys_.free] - sys_.full_matrix[sys_.free][:, sys_.fixed] @ sys_.fixed_values
        t = np.empty(mesh.n_nodes)
        t[sys_.free] = self.solver.solve(b)
        t[sys_.fixed] = sys_.fixed_values
        reactions = (sys_.full_matrix @ t - rhs)[sys_.fixed]
        conv = env.convection_coefficient * fem.facet_integral(mesh, self.robin, t - env.ambient_temperature)
        return ThermalResult(
            temperature=t,
            source_power=float(f_q.sum()),
            convective_loss=conv,
            base_outflow=-float(reactions.sum()),
        )


def solve_thermal(mesh: Mesh, mats: dict[str, MaterialProps], heat, env: Environment,
                  rel_tol: float = fem.DEFAULT_REL_TOL) -> ThermalResult:
    """Steady conduction with Joule source ``heat`` (per element or per quadrature point).

    Non-base boundary facets lose heat by convection; fixed_base facets are held at ambient.
    """
    return ThermalProblem(mesh, mats, env, rel_tol=rel_tol).solve(heat)


# ------------------------------------------------------------------ mechanical

class MechanicalProblem:
    def __init__(self, mesh: Mesh, mats: dict[str, MaterialProps], constraints=None,
                 rel_tol=fem.DEFAULT_REL_TOL, method="direct"):
        self.mesh = mesh
        self.rel_tol, self.method = rel_tol, method
        self.lam = np.zeros(mesh.n_elements)
        self.mu = np.zeros(mesh.n_elements)
        for label, props in _material_table(mesh, mats).items():
            lam, mu = props.lame()
            sel = mesh.element_region == label
            self.lam[sel], self.mu[sel] = lam, mu
        self.alpha = _per_element(mesh, mats, "tce")
        if constraints is None:
            base = mesh.tag_nodes("fixed_base")
            if len(base) == 0:
                raise SingularSystemError("no fixed_base facets: rigid-body motion is unconstrained")
            constraints = (3 * base[:, None] + np.arange(3)).ravel()
        self.fixed = np.asarray(constraints, dtype=np.int64)
        self.stiffness = fem.elasticity_stiffness(mesh, self.lam, self.mu)
        self.system = fem.apply_dirichlet(self.stiffness, np.zeros(3 * mesh.n_nodes), self.fixed)
        self._solver = None

    @property
    def solver(self):
        if self._solver is None:
            self._solver = fem.SPDSolver(self.system.matrix, method=self.method, rel_tol=self.rel_tol)
        return self._solver

    def thermal_load(self, temperature, reference_temperature) -> np.ndarray:
        dt = fem.field_at_qp(self.mesh, np.asarray(temperature, float) - reference_temperature)
        return fem.thermal_load(self.mesh, self.lam, self.mu, self.alpha, dt)

    def solve_load(self, load: np.ndarray, penalty_diag=None, penalty_rhs=None) -> np.ndarray:
        """Displacements ``(N, 3)`` for a full-size load; optional diagonal springs on top of K."""
        sys_ = self.system
        b = load[sys_.free]
        if penalty_diag is None:
            x = self.solver.solve(b)
        else:
            import scipy.sparse as sp
            a = sys_.matrix + sp.diags(penalty_diag[sys_.free])
            x = fem.SPDSolver(a, method=self.method, rel_tol=self.rel_tol).solve(b + penalty_rhs[sys_.free])
        u = np.zeros(3 * self.mesh.n_nodes)
        u[sys_.free] = x
        return u.reshape(-1, 3)

    def solve(self, temperature, reference_temperature) -> np.ndarray:
        return self.solve_load(self.thermal_load(temperature, reference_temperature))

    def stress(self, u: np.ndarray, temperature, reference_temperature) -> np.ndarray:
        """Cauchy stress ``(E, Q, 3, 3)`` at the element quadrature points (MPa)."""
        mesh = self.mesh
        dt = fem.field_at_qp(mesh, np.asarray(temperature, float) - reference_temperature)
        out = []
        for ch in fem._chunks(np.arange(mesh.n_elements)):
            conn = mesh.elements[ch]
            _, dndx, _, _, _ = fem.element_geometry(mesh.nodes, conn, mesh.order)
            grad = np.einsum("eqai,eaj->eqji", dndx, u[conn])
            eps = 0.5 * (grad + grad.transpose(0, 1, 3, 2))
            tr = np.trace(eps, axis1=2, axis2=3)
            lam, mu, a = self.lam[ch, None], self.mu[ch, None], self.alpha[ch, None]
            iso = lam * tr - (3 * lam + 2 * mu) * a * dt[ch]
            out.append(2 * mu[..., None, None] * eps + iso[..., None, None] * np.eye(3))
        return np.concatenate(out)


def solve_mechanical(mesh: Mesh, mats: dict[str, MaterialProps], temperature, reference_temperature: float,
                     constraints=None, rel_tol: float = fem.DEFAULT_REL_TOL) -> np.ndarray:
    """Small-strain thermoelastic displacement ``(N, 3)`` in um.

    By default every dof on fixed_base facets is clamped; ``constraints`` may
    list explicit dof indices (``3*node + component``) instead.
    """
    return MechanicalProblem(mesh, mats, constraints, rel_tol=rel_tol).solve(temperature, reference_temperature)


# ------------------------------------------------------------------ coupled driver

@dataclass
class Solution:
    applied_voltage: float
    environment: Environment
    voltage: np.ndarray
    temperature: np.ndarray
    displacement: np.ndarray
    joule_density: np.ndarray
    joule_power_total: float
    current: dict
    total_current: float
    tip_gap: float
    tip_gap_open: float
    tip_inward: dict
    max_temperature: float
    max_temperature_location: str
    tip_temperature: float
    out_of_plane_max: float
    convective_loss: float
    base_outflow: float
    current_imbalance: float
    terminal_power: float
    source_power: float
    mesh: Mesh = field(repr=False, default=None)

    @property
    def closure(self) -> float:
        return self.tip_gap_open - self.tip_gap

    @property
    def power_balance_error(self) -> float:
        out = self.convective_loss + self.base_outflow
        scale = max(abs(self.joule_power_total), abs(out))
        return abs(self.joule_power_total - out) / scale if scale > 0 else 0.0

    @property
    def max_temperature_celsius(self) -> float:
        return self.max_temperature - 273.15

    @property
    def tip_temperature_celsius(self) -> float:
        return self.tip_temperature - 273.15


def material_library(overrides: dict | None = None) -> dict[str, MaterialProps]:
    """Built-in materials with per-field overrides ``{name: {field: value}}`` (new names allowed)."""
    lib = builtin_library()
    for name, changes in (overrides or {}).items():
        if isinstance(changes, MaterialProps):
            lib[name] = changes
        elif name in lib:
            lib[name] = lib[name].with_overrides(**changes)
        else:
            lib[name] = MaterialProps.from_dict({"name": name, **changes})
    return lib


class CoupledModel:
    """Mesh, assembled operators and factorizations for one design and environment.

    ``run(voltage)`` performs the electric, thermal and mechanical solves in
    sequence; the factorizations are reused across voltages.
    """

    def __init__(self, design: GripperDesign | Layout | Mesh, env: Environment | None = None,
                 mesh_settings: MeshSettings | None = None, materials: dict | None = None,
                 rel_tol: float = fem.DEFAULT_REL_TOL, method: str = "direct"):
        self.env = env or Environment()
        self.settings = mesh_settings or MeshSettings()
        self.materials = materials if materials is not None else builtin_library()
        self.design = design if isinstance(design, GripperDesign) else None
        if isinstance(design, Mesh):
            self.mesh = design
        else:
            self.mesh = generate_mesh(design, self.settings.resolution, self.settings.order)
        self.rel_tol, self.method = rel_tol, method
        self._electric = self._thermal = self._mechanical = None
        mesh = self.mesh
        self.tip_facets = {arm: np.flatnonzero(mesh.facet_tag == f"tip:{arm}") for arm in ("left", "right")}
        self.tip_normals = {}
        self.tip_centroid_y = {}
        for arm, idx in self.tip_facets.items():
            if len(idx):
                face = mesh.facet_face[idx[0]]
                self.tip_normals[arm] = -1 if face == 2 else 1
                self.tip_centroid_y[arm] = float(facet_average(mesh, idx, mesh.nodes)[1])
        if len(self.tip_centroid_y) == 2:
            self.tip_gap_open = self.tip_centroid_y["left"] - self.tip_centroid_y["right"]
        else:
            self.tip_gap_open = float("nan")
        self.free_nodes = np.unique(mesh.elements[mesh.free_element_mask()])
        node_part = np.full(mesh.n_nodes, "", dtype=object)
        for e in range(mesh.n_elements - 1, -1, -1):
            node_part[mesh.elements[e]] = mesh.element_part[e]
        self.node_part = node_part

    def with_environment(self, env: Environment) -> CoupledModel:
        """Same mesh, electric and mechanical operators; only the thermal problem is rebuilt."""
        other = CoupledModel(self.mesh, env, self.settings, self.materials, self.rel_tol, self.method)
        other.design = self.design
        other._electric, other._mechanical = self._electric, self._mechanical
        return other

    def _stage(self, name, fn):
        try:
            return fn()
        except (fem.SolverError, TopologyError, MaterialError, fem.AssemblyError, ValueError) as exc:
            if isinstance(exc, StageError):
                raise
            raise StageError(name, exc) from exc

    @property
    def electric(self) -> ElectricProblem:
        if self._electric is None:
            self._electric = self._stage("electric", lambda: ElectricProblem(self.mesh, self.materials, self.rel_tol, self.method))
        return self._electric

    @property
    def thermal(self) -> ThermalProblem:
        if self._thermal is None:
            self._thermal = self._stage("thermal", lambda: ThermalProblem(self.mesh, self.materials, self.env, self.rel_tol, self.method))
        return self._thermal

    @property
    def mechanical(self) -> MechanicalProblem:
        if self._mechanical is None:
            self._mechanical = self._stage("mechanical", lambda: MechanicalProblem(self.mesh, self.materials, None, self.rel_tol, self.method))
        return self._mechanical

    def tip_inward(self, displacement: np.ndarray) -> dict:
        out = {}
        for arm, idx in self.tip_facets.items():
            if len(idx):
                uy = facet_average(self.mesh, idx, displacement[:, 1])
                out[arm] = float(self.tip_normals[arm] * uy)
        return out

    def run(self, applied_voltage: float) -> Solution:
        env = self.env
        el = self._stage("electric", lambda: self.electric.solve(applied_voltage))
        th = self._stage("thermal", lambda: self.thermal.solve(el.joule_qp))
        u = self._stage("mechanical", lambda: self.mechanical.solve(th.temperature, env.ambient_temperature))
        return self._assemble_solution(applied_voltage, el, th, u)

    def _assemble_solution(self, applied_voltage, el, th, u) -> Solution:
        mesh, env = self.mesh, self.env
        t = th.temperature
        inward = self.tip_inward(u)
        tip_gap = self.tip_gap_open - sum(inward.values()) if len(inward) == 2 else float("nan")
        tips = np.concatenate(list(self.tip_facets.values()))
        tip_t = float(facet_average(mesh, tips, t)) if len(tips) else float("nan")
        imax = int(np.argmax(t))
        oop = float(np.abs(u[self.free_nodes, 2]).max()) if len(self.free_nodes) else 0.0
        return Solution(
            applied_voltage=float(applied_voltage),
            environment=env,
            voltage=el.voltage,
            temperature=t,
            displacement=u,
            joule_density=el.joule_density,
            joule_power_total=el.power,
            current=el.terminal_current,
            total_current=el.total_current,
            tip_gap=float(tip_gap),
            tip_gap_open=self.tip_gap_open,
            tip_inward=inward,
            max_temperature=float(t[imax]),
            max_temperature_location=str(self.node_part[imax]),
            tip_temperature=tip_t,
            out_of_plane_max=oop,
            convective_loss=th.convective_loss,
            base_outflow=th.base_outflow,
            current_imbalance=el.current_imbalance,
            terminal_power=el.terminal_power,
            source_power=th.source_power,
            mesh=mesh,
        )


def run_coupled(design: GripperDesign, applied_voltage: float, env: Environment | None = None,
                mesh_settings: MeshSettings | None = None, materials: dict | None = None) -> Solution:
    """Electric -> thermal -> mechanical chain for one actuation voltage."""
    return CoupledModel(design, env, mesh_settings, materials).run(applied_voltage)
