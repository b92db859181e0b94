"""Contact between the closing tips and a rigid cylindrical micro-object.

The object is a fixed, frictionless cylinder with its axis along ``z``, centred
on the gripper midline at the lengthwise centre of the tip faces.  Contact is
enforced with penalty springs on the lateral displacement of tip-face nodes
that lie over the cylinder; the active set is iterated to a fixed point and the
penalty is doubled until the total force settles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .design import GripperDesign
from .materials import Environment
from .physics import CoupledModel, MeshSettings, Solution

FORCE_TOL = 5e-3
PENALTY_SCALE = 1e3


class ContactError(fem.SolverError):
    """Penalty or active-set iteration failed to settle."""


@dataclass
class GripResult:
    object_diameter: float
    applied_voltage: float
    contact: bool
    total_normal_force: float = 0.0  # uN, both tips together
    mean_contact_pressure: float = 0.0  # MPa
    max_contact_pressure: float = 0.0  # MPa
    contact_area: float = 0.0  # um^2, both tips
    tip_force: dict = field(default_factory=dict)
    free_closure: float = 0.0
    penalty: float = 0.0
    history: list = field(default_factory=list, repr=False)

    @property
    def force_balance_error(self) -> float:
        f = list(self.tip_force.values())
        if len(f) != 2 or max(f) == 0:
            return 0.0
        return abs(f[0] - f[1]) / max(f)


class _Contact:
    """Candidate contact nodes, their initial clearances and lumped areas."""

    def __init__(self, model: CoupledModel, diameter: float):
        mesh = model.mesh
        radius = diameter / 2.0
        mid = mesh.midline_y
        nodes, arms, normals, clear = [], [], [], []
        self.facets = {}
        for arm, idx in model.tip_facets.items():
            fn = mesh.facets[idx]
            xc = float(np.mean(mesh.nodes[np.unique(fn), 0]))
            cand = np.unique(fn)
            dx = mesh.nodes[cand, 0] - xc
            cand = cand[np.abs(dx) < radius]
            if len(cand) == 0:
                raise ContactError(f"no {arm} tip-face node lies within the object radius {radius:g} um; "
                                   "refine the mesh")
            surface = np.sqrt(radius ** 2 - (mesh.nodes[cand, 0] - xc) ** 2)
            nodes.append(cand)
            arms.append(np.full(len(cand), arm, dtype=object))
            normals.append(np.full(len(cand), model.tip_normals[arm], dtype=float))
            clear.append(np.abs(mesh.nodes[cand, 1] - mid) - surface)
            self.facets[arm] = idx
        self.nodes = np.concatenate(nodes)
        self.arm = np.concatenate(arms)
        self.normal = np.concatenate(normals)
        self.clearance = np.concatenate(clear)
        self.dof = 3 * self.nodes + 1
        # lumped facet area per candidate node (consistent with the element order)
        wda, vals, _ = fem.facet_geometry(mesh.nodes, mesh.facets, mesh.order)
        self._facet_node_area = wda @ vals  # (F, m)
        self.mesh = mesh

    def gap(self, u: np.ndarray) -> np.ndarray:
        return self.clearance - self.normal * u[self.nodes, 1]

    def engaged(self, active: np.ndarray, force: np.ndarray):
        """Engaged facets per arm as ``(areas, forces)``.

        A facet is engaged when one of its nodes is in contact; each nodal force
        is shared among the facets around the node in proportion to their
        lumped area at that node.
        """
        mesh = self.mesh
        pos = {int(n): i for i, n in enumerate(self.nodes)}
        node_area = np.zeros(len(self.nodes))
        for idx in self.facets.values():
            for f in idx:
                for a, n in enumerate(mesh.facets[f]):
                    if int(n) in pos:
                        node_area[pos[int(n)]] += self._facet_node_area[f, a]
        out = {}
        for arm, idx in self.facets.items():
            areas, forces = [], []
            for f in idx:
                share, hit = 0.0, False
                for a, n in enumerate(mesh.facets[f]):
                    i = pos.get(int(n))
                    if i is None or not active[i]:
                        continue
                    hit = True
                    share += force[i] * self._facet_node_area[f, a] / node_area[i]
                if hit:
                    areas.append(float(self._facet_node_area[f].sum()))
                    forces.append(share)
            out[arm] = (np.array(areas), np.array(forces))
        return out


def _solve_penalised(model: CoupledModel, load, contact: _Contact, active, k):
    n = 3 * model.mesh.n_nodes
    diag = np.zeros(n)
    rhs = np.zeros(n)
    diag[contact.dof[active]] = k
    rhs[contact.dof[active]] = k * contact.normal[active] * contact.clearance[active]
    return model.mechanical.solve_load(load, diag, rhs)


def _active_set(model, load, contact, k, active, max_iter=50):
    seen = set()
    for _ in range(max_iter):
        u = _solve_penalised(model, load, contact, active, k)
        g = contact.gap(u)
        new = g < 0.0
        if np.array_equal(new, active):
            return u, g, active
        key = new.tobytes()
        if key in seen:
            # nodes hovering at zero gap flip back and forth; keep them all engaged
            active = active | new
            u = _solve_penalised(model, load, contact, active, k)
            return u, contact.gap(u), active
        seen.add(active.tobytes())
        active = new
    raise ContactError(f"active set did not settle within {max_iter} iterations")


def estimate_grip(design: GripperDesign | CoupledModel, applied_voltage: float, object_diameter: float,
                  env: Environment | None = None, mesh_settings: MeshSettings | None = None,
                  materials: dict | None = None, solution: Solution | None = None,
                  max_doublings: int = 30, contact_rule: str = "centroid") -> GripResult:
    """Contact force and pressure on a rigid cylinder of ``object_diameter`` held between the tips.

    With ``contact_rule="centroid"`` the tips engage once the free tip gap (measured
    between tip-face centroids) reaches the object diameter; ``"nodal"`` engages as
    soon as any tip-face node overlaps the object.
    """
    if contact_rule not in ("centroid", "nodal"):
        raise ValueError(f"unknown contact rule {contact_rule!r}")
    model = design if isinstance(design, CoupledModel) else CoupledModel(design, env, mesh_settings, materials)
    if not object_diameter > 0 or not object_diameter < model.tip_gap_open:
        raise ValueError(f"object diameter {object_diameter} must lie in (0, {model.tip_gap_open})")
    sol = solution if solution is not None else model.run(applied_voltage)
    closure = sol.closure
    result = GripResult(object_diameter, float(applied_voltage), False, free_closure=closure)
    contact = _Contact(model, object_diameter)
    g0 = contact.gap(sol.displacement)
    active = g0 < 0.0
    if contact_rule == "centroid" and closure < model.tip_gap_open - object_diameter:
        return result
    if contact_rule == "nodal" and not active.any():
        return result
    result.contact = True
    if not active.any():
        # centroids overlap but the tilted faces leave every node clear
        return result
    mech = model.mechanical
    load = mech.thermal_load(sol.temperature, model.env.ambient_temperature)

    k = PENALTY_SCALE * float(mech.stiffness.diagonal()[contact.dof].mean())
    history = []
    prev = None
    for _ in range(max_doublings):
        u, g, active = _active_set(model, load, contact, k, active)
        force = k * np.clip(-g, 0.0, None)
        total = float(force.sum())
        history.append((k, total))
        if prev is not None and total > 0 and abs(total - prev) <= FORCE_TOL * total:
            break
        if prev is not None and total == 0.0 and prev == 0.0:
            break
        prev = total
        k *= 2.0
    else:
        raise ContactError(f"contact force did not converge: history {history}")

    facets = contact.engaged(active, force)
    tip_force = {arm: float(force[contact.arm == arm].sum()) for arm in facets}
    total_area = float(sum(a.sum() for a, _ in facets.values()))
    pressures = np.concatenate([f / a for a, f in facets.values()])
    result.total_normal_force = total
    result.tip_force = tip_force
    result.contact_area = total_area
    result.mean_contact_pressure = total / total_area if total_area > 0 else 0.0
    result.max_contact_pressure = float(pressures.max()) if len(pressures) else 0.0
    result.penalty = k
    result.history = history
    return result


def contact_threshold_voltage(model: CoupledModel, object_diameter: float, probe_voltage: float = 0.1) -> float:
    """Voltage at which the free closure just equals the gap minus the object diameter.

    Uses the fact that the uncontacted response is quadratic in voltage.
    """
    closure = model.run(probe_voltage).closure
    if closure <= 0:
        return math.inf
    return probe_voltage * math.sqrt((model.tip_gap_open - object_diameter) / closure)


def first_touch_voltage(model: CoupledModel, object_diameter: float, probe_voltage: float = 0.1) -> float:
    """Voltage at which the first tip-face node reaches the object surface."""
    sol = model.run(probe_voltage)
    contact = _Contact(model, object_diameter)
    inward = contact.normal * sol.displacement[contact.nodes, 1]
    ok = inward > 0
    if not ok.any():
        return math.inf
    return probe_voltage * math.sqrt(float(np.min(contact.clearance[ok] / inward[ok])))
