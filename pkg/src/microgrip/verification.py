"""FEM-versus-oracle checks, patch tests and manufactured-solution convergence.

``run_suite`` is what the ``verify`` subcommand prints; each check is also
callable on its own so tests can assert on the numbers.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .design import brick_layout
from .materials import Environment, builtin_library, builtin_material
from .mesh import generate_mesh
from .oracles import (BimorphLayer, BimorphParams, FinParams, bimorph_tip_deflection,
                      fin_max_temperature)
from .physics import MechanicalProblem, ThermalProblem

FIN_TOL = 0.01
BIMORPH_TOL = 0.05
PATCH_TOL = 1e-10
RATE_TOL = 0.15
BIMORPH_LEVELS = (20.0, 10.0, 5.0)


@dataclass
class CheckResult:
    name: str
    value: float
    reference: float
    tolerance: float
    passed: bool
    seconds: float = 0.0
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"{flag}  {self.name:<28s} value={self.value:.6g} reference={self.reference:.6g} "
                f"tol={self.tolerance:.3g} ({self.seconds:.1f} s)")


def _rel(a, b):
    return abs(a - b) / abs(b) if b != 0 else abs(a)


# ------------------------------------------------------------------ thermal fin

def fin_case(length=400.0, side=10.0, h=20.0, heat_density=1e3) -> FinParams:
    su8 = builtin_material("SU-8")
    return FinParams(length=length, cross_section_area=side * side, perimeter=4 * side,
                     conductivity=su8.thermal_conductivity, convection=h, heat_density=heat_density)


def check_fin(resolution: float = 5.0, order: int = 2, params: FinParams | None = None) -> CheckResult:
    """Square SU-8 rod, base held at ambient, all other faces convective, uniform heating."""
    t0 = time.perf_counter()
    p = params or fin_case()
    side = math.sqrt(p.cross_section_area)
    layout = brick_layout(p.length, side, [("SU-8", side, "structural_polymer")], fixed="x0")
    mesh = generate_mesh(layout, resolution, order)
    env = Environment(ambient_temperature=p.ambient, convection_coefficient=p.convection)
    mats = builtin_library()
    th = ThermalProblem(mesh, mats, env).solve(np.full(mesh.n_elements, p.heat_density))
    fem_max = float(th.temperature.max())
    _, ref = fin_max_temperature(p)
    rise_err = abs(fem_max - ref) / (ref - p.ambient)
    return CheckResult("fin max temperature rise", fem_max - p.ambient, ref - p.ambient, FIN_TOL,
                       rise_err <= FIN_TOL, time.perf_counter() - t0,
                       {"elements": mesh.n_elements, "relative_error": rise_err})


# ------------------------------------------------------------------ bimorph

def bimorph_case(length=400.0, polymer=20.0, metal=0.3, delta_t=100.0) -> BimorphParams:
    s, g = builtin_material("SU-8"), builtin_material("Gold")
    return BimorphParams(
        bottom=BimorphLayer(s.youngs_modulus, s.tce, polymer, s.poisson_ratio),
        top=BimorphLayer(g.youngs_modulus, g.tce, metal, g.poisson_ratio),
        width=10.0, length=length, delta_t=delta_t, plane_strain=True,
    )


def fem_bimorph_deflection(p: BimorphParams, resolution: float, order: int = 2) -> tuple[float, int]:
    """Plane-strain strip: no lateral motion, symmetry plane at the root, pinned root edge.

    Returns the deflection of the bottom edge at the far end and the element count.
    """
    layers = [("SU-8", p.bottom.thickness, "structural_polymer"), ("Gold", p.top.thickness, "conductor")]
    width = min(p.width, resolution)
    mesh = generate_mesh(brick_layout(p.length, width, layers, fixed=None), resolution, order)
    x, z = mesh.nodes[:, 0], mesh.nodes[:, 2]
    tol = 1e-9 * p.length
    root = np.flatnonzero(np.abs(x) < tol)
    pin = root[np.abs(z[root]) < tol]
    fixed = np.unique(np.concatenate([3 * np.arange(mesh.n_nodes) + 1, 3 * root, 3 * pin + 2]))
    mats = builtin_library()
    mech = MechanicalProblem(mesh, mats, constraints=fixed)
    ref_t = 300.0
    u = mech.solve(np.full(mesh.n_nodes, ref_t + p.delta_t), ref_t)
    tip = np.flatnonzero((np.abs(x - p.length) < tol) & (np.abs(z) < tol))
    return float(u[tip, 2].mean()), mesh.n_elements


def check_bimorph(levels=BIMORPH_LEVELS, level: int = 1, params: BimorphParams | None = None) -> CheckResult:
    t0 = time.perf_counter()
    p = params or bimorph_case()
    _, ref = bimorph_tip_deflection(p)
    history = []
    for res in levels[: level + 1]:
        w, n = fem_bimorph_deflection(p, res)
        history.append({"resolution": res, "deflection": w, "elements": n})
    w = history[-1]["deflection"]
    err = _rel(w, ref)
    return CheckResult("bimorph tip deflection", w, ref, BIMORPH_TOL, err <= BIMORPH_TOL,
                       time.perf_counter() - t0, {"levels": history, "relative_error": err})


# ------------------------------------------------------------------ patch tests

def _cube_mesh(n: int, order: int, size: float = 1.0):
    layout = brick_layout(size, size, [("SU-8", size, "structural_polymer")], fixed=None)
    return generate_mesh(layout, size / n, order)


def _boundary_nodes(mesh) -> np.ndarray:
    return np.unique(mesh.facets)


def conduction_patch(order: int = 1) -> CheckResult:
    """Linear temperature prescribed on the boundary of a 2x2x2 brick is reproduced inside."""
    t0 = time.perf_counter()
    mesh = _cube_mesh(2, order)
    exact = lambda p: 1.0 + 2.0 * p[:, 0] - 0.5 * p[:, 1] + 0.25 * p[:, 2]  # noqa: E731
    k = fem.scalar_stiffness(mesh, np.ones(mesh.n_elements))
    bnd = _boundary_nodes(mesh)
    sys_ = fem.apply_dirichlet(k, np.zeros(mesh.n_nodes), bnd, exact(mesh.nodes[bnd]))
    t = sys_.expand(fem.solve_spd(sys_, rel_tol=1e-14))
    err = float(np.abs(t - exact(mesh.nodes)).max())
    return CheckResult(f"conduction patch (order {order})", err, 0.0, PATCH_TOL, err <= PATCH_TOL,
                       time.perf_counter() - t0)


def elasticity_patch(order: int = 1) -> CheckResult:
    """Uniform-strain displacements on the boundary of a 2x2x2 brick give uniform stress."""
    t0 = time.perf_counter()
    mesh = _cube_mesh(2, order)
    grad = np.array([[1e-3, 2e-4, -1e-4], [3e-4, -5e-4, 1e-4], [0.0, 2e-4, 8e-4]])
    u_exact = mesh.nodes @ grad.T
    mats = builtin_library()
    bnd = _boundary_nodes(mesh)
    dofs = (3 * bnd[:, None] + np.arange(3)).ravel()
    mech = MechanicalProblem(mesh, mats, constraints=dofs)
    sys_ = fem.apply_dirichlet(mech.stiffness, np.zeros(3 * mesh.n_nodes), dofs, u_exact[bnd].ravel())
    u = sys_.expand(fem.solve_spd(sys_, rel_tol=1e-14)).reshape(-1, 3)
    stress = mech.stress(u, np.zeros(mesh.n_nodes), 0.0)
    eps = 0.5 * (grad + grad.T)
    lam, mu = mats["SU-8"].lame()
    ref = 2 * mu * eps + lam * np.trace(eps) * np.eye(3)
    err = float(np.abs(stress - ref).max() / np.abs(ref).max())
    return CheckResult(f"elasticity patch (order {order})", err, 0.0, PATCH_TOL, err <= PATCH_TOL,
                       time.perf_counter() - t0)


# ------------------------------------------------------------------ manufactured solution

def _mms_exact(p):
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    return np.sin(np.pi * x) * np.sin(np.pi * y) * np.sin(np.pi * z) + x * y + z


def _mms_source(p):
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    return 3 * np.pi ** 2 * np.sin(np.pi * x) * np.sin(np.pi * y) * np.sin(np.pi * z)


def mms_error(n: int, order: int) -> float:
    """L2 error of -lap(u) = f on the unit cube with ``n`` elements per side."""
    mesh = _cube_mesh(n, order)
    k = fem.scalar_stiffness(mesh, np.ones(mesh.n_elements))
    wdet, _, vals, xq, _ = fem.element_geometry(mesh.nodes, mesh.elements, mesh.order, fem.default_gauss(order) + 1)
    # load with the standard rule, error with one extra point per direction
    _, _, _, xq_load, _ = fem.element_geometry(mesh.nodes, mesh.elements, mesh.order)
    f = fem.source_load(mesh, _mms_source(xq_load))
    bnd = _boundary_nodes(mesh)
    sys_ = fem.apply_dirichlet(k, f, bnd, _mms_exact(mesh.nodes[bnd]))
    u = sys_.expand(fem.solve_spd(sys_, rel_tol=1e-13))
    uh = u[mesh.elements] @ vals.T
    return float(np.sqrt(np.sum(wdet * (uh - _mms_exact(xq)) ** 2)))


MMS_LEVELS = {1: (4, 8, 16), 2: (2, 4, 8)}


def check_convergence(order: int) -> CheckResult:
    t0 = time.perf_counter()
    errs = [mms_error(n, order) for n in MMS_LEVELS[order]]
    ratio = errs[-2] / errs[-1]
    target = 2.0 ** (order + 1)
    return CheckResult(f"L2 error ratio (order {order})", ratio, target, RATE_TOL,
                       _rel(ratio, target) <= RATE_TOL, time.perf_counter() - t0,
                       {"errors": errs, "levels": MMS_LEVELS[order]})


def run_suite(include_slow: bool = True) -> list[CheckResult]:
    checks = [
        lambda: check_fin(),
        lambda: conduction_patch(1),
        lambda: conduction_patch(2),
        lambda: elasticity_patch(1),
        lambda: elasticity_patch(2),
        lambda: check_convergence(1),
        lambda: check_convergence(2),
    ]
    if include_slow:
        checks.append(lambda: check_bimorph())
    return [c() for c in checks]
