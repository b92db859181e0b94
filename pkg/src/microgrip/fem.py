"""Lagrange hexahedra, Gauss quadrature, sparse assembly and the SPD solver.

Local node numbering is tensor-lexicographic: node ``a + (p+1)*b + (p+1)**2*c``
sits at local coordinates ``(t[a], t[b], t[c])`` with ``t = [-1, 1]`` for
order 1 and ``t = [-1, 0, 1]`` for order 2.  Degrees of freedom of vector
fields are interleaved (``3*node + component``).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DEFAULT_REL_TOL = 1e-10
DEFAULT_MAXITER = 20000
_CHUNK = 512


class DomainError(ValueError):
    pass


class AssemblyError(ValueError):
    pass


class SolverError(RuntimeError):
    def __init__(self, message, history=None):
        self.history = list(history or [])
        super().__init__(message)


class DefinitenessError(SolverError):
    pass


# ---------------------------------------------------------------- shape functions

def _nodes_1d(order: int) -> np.ndarray:
    if order == 1:
        return np.array([-1.0, 1.0])
    if order == 2:
        return np.array([-1.0, 0.0, 1.0])
    raise DomainError(f"element order must be 1 or 2, got {order!r}")


def lagrange_1d(order: int, t) -> tuple[np.ndarray, np.ndarray]:
    """1D Lagrange values and derivatives, shape ``(len(t), order + 1)``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if order == 1:
        vals = np.stack([(1 - t) / 2, (1 + t) / 2], axis=-1)
        ders = np.stack([np.full_like(t, -0.5), np.full_like(t, 0.5)], axis=-1)
    elif order == 2:
        vals = np.stack([t * (t - 1) / 2, 1 - t * t, t * (t + 1) / 2], axis=-1)
        ders = np.stack([t - 0.5, -2 * t, t + 0.5], axis=-1)
    else:
        raise DomainError(f"element order must be 1 or 2, got {order!r}")
    return vals, ders


def local_node_coords(order: int, dim: int = 3) -> np.ndarray:
    t = _nodes_1d(order)
    grids = np.meshgrid(*([t] * dim), indexing="ij")
    # lexicographic with the first axis fastest
    return np.stack([g.transpose(*reversed(range(dim))).ravel() for g in grids], axis=-1)


def shape_eval_many(order: int, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values ``(Q, n)`` and reference gradients ``(Q, n, dim)`` at points ``(Q, dim)``."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    dim = pts.shape[1]
    vals1, ders1 = zip(*(lagrange_1d(order, pts[:, d]) for d in range(dim)))
    m = order + 1
    if dim == 3:
        v = np.einsum("qa,qb,qc->qcba", *vals1).reshape(len(pts), m ** 3)
        gx = np.einsum("qa,qb,qc->qcba", ders1[0], vals1[1], vals1[2]).reshape(len(pts), -1)
        gy = np.einsum("qa,qb,qc->qcba", vals1[0], ders1[1], vals1[2]).reshape(len(pts), -1)
        gz = np.einsum("qa,qb,qc->qcba", vals1[0], vals1[1], ders1[2]).reshape(len(pts), -1)
        return v, np.stack([gx, gy, gz], axis=-1)
    if dim == 2:
        v = np.einsum("qa,qb->qba", *vals1).reshape(len(pts), m ** 2)
        ga = np.einsum("qa,qb->qba", ders1[0], vals1[1]).reshape(len(pts), -1)
        gb = np.einsum("qa,qb->qba", vals1[0], ders1[1]).reshape(len(pts), -1)
        return v, np.stack([ga, gb], axis=-1)
    raise DomainError(f"unsupported dimension {dim}")


def shape_eval(order: int, local_coords) -> tuple[np.ndarray, np.ndarray]:
    """Shape-function values and reference gradients at one point of [-1, 1]^3."""
    xi = np.asarray(local_coords, dtype=float).reshape(-1)
    if xi.shape != (3,):
        raise DomainError("local_coords must have three components")
    if not np.all(np.isfinite(xi)) or np.any(np.abs(xi) > 1.0 + 1e-12):
        raise DomainError(f"local coordinates {xi.tolist()} outside [-1, 1]^3")
    v, g = shape_eval_many(order, xi[None, :])
    return v[0], g[0]


@lru_cache(maxsize=None)
def gauss_rule(npts: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    t, w = np.polynomial.legendre.leggauss(npts)
    grids = np.meshgrid(*([t] * dim), indexing="ij")
    wgrids = np.meshgrid(*([w] * dim), indexing="ij")
    pts = np.stack([g.transpose(*reversed(range(dim))).ravel() for g in grids], axis=-1)
    wts = np.prod([g.transpose(*reversed(range(dim))).ravel() for g in wgrids], axis=0)
    return pts, wts


def default_gauss(order: int) -> int:
    return order + 1


@lru_cache(maxsize=None)
def _reference(order: int, npts: int, dim: int = 3):
    pts, wts = gauss_rule(npts, dim)
    vals, grads = shape_eval_many(order, pts)
    return pts, wts, vals, grads


# ---------------------------------------------------------------- geometry

def element_geometry(nodes: np.ndarray, conn: np.ndarray, order: int, npts: int | None = None):
    """Quadrature data for the elements ``conn``.

    Returns ``(wdet, dndx, vals, xq, det)``: weights times Jacobian determinant
    ``(E, Q)``, physical gradients ``(E, Q, n, 3)``, shape values ``(Q, n)``,
    physical quadrature points ``(E, Q, 3)`` and the bare determinants ``(E, Q)``.
    """
    npts = default_gauss(order) if npts is None else npts
    _, wts, vals, grads = _reference(order, npts)
    xe = nodes[conn]
    jac = np.einsum("qna,eni->eqia", grads, xe)
    det = np.linalg.det(jac)
    inv = np.linalg.inv(jac)
    dndx = np.einsum("qna,eqai->eqni", grads, inv)
    xq = np.einsum("qn,eni->eqi", vals, xe)
    return det * wts, dndx, vals, xq, det


def jacobian_determinants(nodes, conn, order, npts=None) -> np.ndarray:
    out = []
    for s in range(0, len(conn), _CHUNK):
        out.append(element_geometry(nodes, conn[s:s + _CHUNK], order, npts)[4])
    return np.concatenate(out) if out else np.zeros((0, 0))


def facet_geometry(nodes: np.ndarray, fconn: np.ndarray, order: int, npts: int | None = None):
    """Facet quadrature: ``(wda (F, Q), vals (Q, m), xq (F, Q, 3))``."""
    npts = default_gauss(order) if npts is None else npts
    _, wts, vals, grads = _reference(order, npts, dim=2)
    xf = nodes[fconn]
    ta = np.einsum("qn,fni->fqi", grads[:, :, 0], xf)
    tb = np.einsum("qn,fni->fqi", grads[:, :, 1], xf)
    da = np.linalg.norm(np.cross(ta, tb), axis=-1)
    xq = np.einsum("qn,fni->fqi", vals, xf)
    return da * wts, vals, xq


def facet_areas(nodes, fconn, order) -> np.ndarray:
    if len(fconn) == 0:
        return np.zeros(0)
    return facet_geometry(nodes, fconn, order)[0].sum(axis=1)


# ---------------------------------------------------------------- assembly

def _coo(rows, cols, data, n):
    mat = sp.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return mat.tocsr()


def _chunks(idx):
    for s in range(0, len(idx), _CHUNK):
        yield idx[s:s + _CHUNK]


def scalar_stiffness(mesh, coeff: np.ndarray, elements: np.ndarray | None = None) -> sp.csr_matrix:
    """Galerkin matrix of ``-div(c grad u)`` over ``elements`` (all by default)."""
    n = len(mesh.nodes)
    idx = np.arange(len(mesh.elements)) if elements is None else np.asarray(elements)
    rows, cols, data = [np.zeros(0, int)], [np.zeros(0, int)], [np.zeros(0)]
    for ch in _chunks(idx):
        conn = mesh.elements[ch]
        wdet, dndx, _, _, _ = element_geometry(mesh.nodes, conn, mesh.order)
        ke = np.einsum("eq,eqai,eqbi->eab", wdet * coeff[ch, None], dndx, dndx)
        m = conn.shape[1]
        rows.append(np.repeat(conn, m, axis=1).ravel())
        cols.append(np.tile(conn, (1, m)).ravel())
        data.append(ke.ravel())
    return _coo(rows, cols, data, n)


def source_load(mesh, q_qp: np.ndarray, elements: np.ndarray | None = None) -> np.ndarray:
    """Load vector of a volumetric source given at the element quadrature points."""
    n = len(mesh.nodes)
    idx = np.arange(len(mesh.elements)) if elements is None else np.asarray(elements)
    f = np.zeros(n)
    for ch in _chunks(idx):
        conn = mesh.elements[ch]
        wdet, _, vals, _, _ = element_geometry(mesh.nodes, conn, mesh.order)
        fe = np.einsum("eq,qa->ea", wdet * q_qp[ch], vals)
        np.add.at(f, conn.ravel(), fe.ravel())
    return f


def _vector_dofs(conn):
    return (3 * conn[:, :, None] + np.arange(3)).reshape(len(conn), -1)


def elasticity_stiffness(mesh, lam: np.ndarray, mu: np.ndarray) -> sp.csr_matrix:
    n = 3 * len(mesh.nodes)
    rows, cols, data = [], [], []
    for ch in _chunks(np.arange(len(mesh.elements))):
        conn = mesh.elements[ch]
        wdet, dndx, _, _, _ = element_geometry(mesh.nodes, conn, mesh.order)
        a = np.einsum("eq,eqai,eqbj->eaibj", wdet, dndx, dndx)
        lap = np.einsum("eakbk->eab", a)
        ke = lam[ch, None, None, None, None] * a + mu[ch, None, None, None, None] * a.transpose(0, 1, 4, 3, 2)
        ke += mu[ch, None, None, None, None] * lap[:, :, None, :, None] * np.eye(3)[None, None, :, None, :]
        dofs = _vector_dofs(conn)
        m = dofs.shape[1]
        rows.append(np.repeat(dofs, m, axis=1).ravel())
        cols.append(np.tile(dofs, (1, m)).ravel())
        data.append(ke.reshape(len(ch), -1))
    data = [d.ravel() for d in data]
    return _coo(rows, cols, data, n)


def thermal_load(mesh, lam, mu, alpha, dtemp_qp: np.ndarray) -> np.ndarray:
    """Equivalent nodal forces of the thermal strain ``alpha * dT * I``."""
    f = np.zeros(3 * len(mesh.nodes))
    beta = (3 * lam + 2 * mu) * alpha
    for ch in _chunks(np.arange(len(mesh.elements))):
        conn = mesh.elements[ch]
        wdet, dndx, _, _, _ = element_geometry(mesh.nodes, conn, mesh.order)
        fe = np.einsum("eq,eqai->eai", wdet * beta[ch, None] * dtemp_qp[ch], dndx)
        np.add.at(f, _vector_dofs(conn).ravel(), fe.ravel())
    return f


def field_at_qp(mesh, values: np.ndarray, elements=None) -> np.ndarray:
    """Interpolate a nodal scalar field to the quadrature points, shape ``(E, Q)``."""
    _, _, vals, _ = _reference(mesh.order, default_gauss(mesh.order))
    conn = mesh.elements if elements is None else mesh.elements[elements]
    return values[conn] @ vals.T


def gradient_at_qp(mesh, values: np.ndarray, elements=None) -> np.ndarray:
    """Physical gradient of a nodal scalar field at quadrature points ``(E, Q, 3)``."""
    idx = np.arange(len(mesh.elements)) if elements is None else np.asarray(elements)
    out = []
    for ch in _chunks(idx):
        conn = mesh.elements[ch]
        _, dndx, _, _, _ = element_geometry(mesh.nodes, conn, mesh.order)
        out.append(np.einsum("eqai,ea->eqi", dndx, values[conn]))
    return np.concatenate(out) if out else np.zeros((0, 0, 3))


def robin_terms(mesh, facet_index: np.ndarray, h: float, ambient: float):
    """Boundary matrix and load of ``h (T - T_amb)`` on the given facets."""
    n = len(mesh.nodes)
    f = np.zeros(n)
    if len(facet_index) == 0 or h == 0.0:
        return sp.csr_matrix((n, n)), f
    fconn = mesh.facets[facet_index]
    wda, vals, _ = facet_geometry(mesh.nodes, fconn, mesh.order)
    me = h * np.einsum("fq,qa,qb->fab", wda, vals, vals)
    fe = h * ambient * np.einsum("fq,qa->fa", wda, vals)
    np.add.at(f, fconn.ravel(), fe.ravel())
    m = fconn.shape[1]
    mat = _coo([np.repeat(fconn, m, axis=1).ravel()], [np.tile(fconn, (1, m)).ravel()], [me.ravel()], n)
    return mat, f


def facet_integral(mesh, facet_index: np.ndarray, nodal: np.ndarray) -> float:
    if len(facet_index) == 0:
        return 0.0
    fconn = mesh.facets[facet_index]
    wda, vals, _ = facet_geometry(mesh.nodes, fconn, mesh.order)
    return float(np.einsum("fq,qa,fa->", wda, vals, nodal[fconn]))


# ---------------------------------------------------------------- kernels

@dataclass(frozen=True)
class Conduction:
    """``-div(c grad u)`` with one coefficient per region label."""

    coefficients: dict
    elements: np.ndarray | None = None


@dataclass(frozen=True)
class Elasticity:
    """Isotropic linear elasticity; ``materials`` maps region label to MaterialProps."""

    materials: dict


@dataclass(frozen=True)
class Robin:
    h: float
    ambient: float
    tags: tuple = ("convection",)


def region_values(mesh, mapping: dict, elements=None, what="coefficient") -> np.ndarray:
    regions = mesh.element_region if elements is None else mesh.element_region[elements]
    missing = sorted(set(np.unique(regions)) - set(mapping))
    if missing:
        raise AssemblyError(f"missing {what} for region(s): {', '.join(missing)}")
    out = np.zeros(len(mesh.elements))
    for label in np.unique(regions):
        out[mesh.element_region == label] = mapping[label]
    return out


@dataclass
class SparseSystem:
    """Reduced system over the free dofs; ``full_matrix``/``full_rhs`` keep the unconstrained operator."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    full_matrix: sp.csr_matrix
    full_rhs: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_total(self) -> int:
        return self.full_matrix.shape[0]

    def expand(self, x_free: np.ndarray) -> np.ndarray:
        x = np.zeros(self.n_total)
        x[self.free] = x_free
        x[self.fixed] = self.fixed_values
        return x

    def reactions(self, x_full: np.ndarray) -> np.ndarray:
        """``A x - b`` on the constrained dofs."""
        return (self.full_matrix @ x_full - self.full_rhs)[self.fixed]


def apply_dirichlet(matrix, rhs, fixed, values=None, active=None) -> SparseSystem:
    """Eliminate prescribed dofs.  ``active`` restricts the unknowns to a subset of dofs."""
    matrix = sp.csr_matrix(matrix)
    n = matrix.shape[0]
    fixed = np.asarray(fixed, dtype=np.int64)
    values = np.zeros(len(fixed)) if values is None else np.broadcast_to(np.asarray(values, float), fixed.shape).copy()
    order = np.argsort(fixed, kind="stable")
    fixed, values = fixed[order], values[order]
    if len(np.unique(fixed)) != len(fixed):
        raise AssemblyError("duplicate constrained dofs")
    mask = np.ones(n, dtype=bool) if active is None else np.zeros(n, dtype=bool)
    if active is not None:
        mask[np.asarray(active)] = True
    mask[fixed] = False
    free = np.flatnonzero(mask)
    a_ff = matrix[free][:, free].tocsr()
    b = rhs[free] - matrix[free][:, fixed] @ values
    return SparseSystem(a_ff, b, free, fixed, values, matrix, np.asarray(rhs, float))


def assemble(mesh, kernel, constraints=None) -> SparseSystem:
    """Assemble one kernel or a list of kernels and apply Dirichlet ``constraints``.

    ``constraints`` is ``(dofs, values)`` or a ``{dof: value}`` mapping.
    """
    kernels = kernel if isinstance(kernel, (list, tuple)) else [kernel]
    vector = any(isinstance(k, Elasticity) for k in kernels)
    if vector and not all(isinstance(k, Elasticity) for k in kernels):
        raise AssemblyError("cannot mix vector and scalar kernels")
    ndof = (3 if vector else 1) * len(mesh.nodes)
    matrix = sp.csr_matrix((ndof, ndof))
    rhs = np.zeros(ndof)
    active = None
    for k in kernels:
        if isinstance(k, Conduction):
            elems = None if k.elements is None else np.asarray(k.elements)
            coeff = region_values(mesh, k.coefficients, elems)
            matrix = matrix + scalar_stiffness(mesh, coeff, elems)
            if elems is not None:
                active = np.unique(mesh.elements[elems])
        elif isinstance(k, Elasticity):
            lam = region_values(mesh, {r: m.lame()[0] for r, m in k.materials.items()}, what="material")
            mu = region_values(mesh, {r: m.lame()[1] for r, m in k.materials.items()}, what="material")
            matrix = matrix + elasticity_stiffness(mesh, lam, mu)
        elif isinstance(k, Robin):
            facets = np.flatnonzero(np.isin(mesh.facet_tag, list(k.tags)))
            m, f = robin_terms(mesh, facets, k.h, k.ambient)
            matrix = matrix + m
            rhs += f
        else:
            raise AssemblyError(f"unknown kernel {k!r}")
    if constraints is None:
        dofs, vals = np.zeros(0, int), np.zeros(0)
    elif isinstance(constraints, dict):
        dofs = np.fromiter(constraints.keys(), dtype=np.int64)
        vals = np.fromiter(constraints.values(), dtype=float)
    else:
        dofs, vals = constraints
    return apply_dirichlet(matrix, rhs, dofs, vals, active=active)


# ---------------------------------------------------------------- linear solver

def _check_tol(rel_tol):
    if not 0 < rel_tol <= 1e-3:
        raise DomainError(f"rel_tol must lie in (0, 1e-3], got {rel_tol!r}")


class SPDSolver:
    """Factor once, solve many right-hand sides under the residual contract.

    ``method="direct"`` uses a sparse LU factorization (followed by iterative
    refinement when needed); ``method="cg"`` runs Jacobi-preconditioned
    conjugate gradients.
    """

    def __init__(self, matrix, method: str = "direct", rel_tol: float = DEFAULT_REL_TOL,
                 maxiter: int = DEFAULT_MAXITER):
        _check_tol(rel_tol)
        self.matrix = sp.csr_matrix(matrix)
        self.method = method
        self.rel_tol = rel_tol
        self.maxiter = maxiter
        self._lu = None
        self._lock = threading.Lock()
        diag = self.matrix.diagonal()
        if self.matrix.shape[0] and not np.all(diag > 0):
            raise DefinitenessError("matrix has non-positive diagonal entries; it is not positive definite")
        if method not in ("direct", "cg"):
            raise ValueError(f"unknown solver method {method!r}")

    def _factor(self):
        with self._lock:
            if self._lu is None:
                self._lu = spla.splu(self.matrix.tocsc(), permc_spec="MMD_AT_PLUS_A",
                                     options=dict(SymmetricMode=True))
            return self._lu

    def prepare(self) -> SPDSolver:
        """Factor now rather than on first solve (no-op for cg)."""
        if self.method == "direct" and self.matrix.shape[0]:
            self._factor()
        return self

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        n = self.matrix.shape[0]
        if n == 0:
            return np.zeros(0)
        bnorm = np.linalg.norm(b)
        if bnorm == 0.0:
            return np.zeros(n)
        if self.method == "cg":
            return pcg(self.matrix, b, self.rel_tol, self.maxiter)
        lu = self._factor()
        with self._lock:
            x = lu.solve(b)
        history = []
        for _ in range(4):
            r = b - self.matrix @ x
            rel = np.linalg.norm(r) / bnorm
            history.append(rel)
            if rel <= self.rel_tol:
                return x
            with self._lock:
                x = x + lu.solve(r)
        raise SolverError(f"direct solve residual {history[-1]:.3e} above {self.rel_tol:.1e}", history)


def pcg(a, b, rel_tol=DEFAULT_REL_TOL, maxiter=DEFAULT_MAXITER, x0=None) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradients with definiteness detection."""
    dinv = 1.0 / a.diagonal()
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - a @ x
    bnorm = np.linalg.norm(b)
    z = dinv * r
    p = z.copy()
    rz = r @ z
    history = [np.linalg.norm(r) / bnorm]
    for _ in range(maxiter):
        if history[-1] <= rel_tol:
            return x
        ap = a @ p
        pap = p @ ap
        if pap <= 0:
            raise DefinitenessError("p'Ap <= 0 in conjugate gradients: matrix is not positive definite", history)
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
        history.append(np.linalg.norm(r) / bnorm)
    if history[-1] <= rel_tol:
        return x
    raise SolverError(f"conjugate gradients did not converge in {maxiter} iterations "
                      f"(relative residual {history[-1]:.3e})", history)


def solve_spd(system, rel_tol: float = DEFAULT_REL_TOL, method: str = "direct",
              maxiter: int = DEFAULT_MAXITER) -> np.ndarray:
    """Solve ``A x = b`` for a SparseSystem (returns free-dof solution) or an ``(A, b)`` pair."""
    if isinstance(system, SparseSystem):
        a, b = system.matrix, system.rhs
    else:
        a, b = system
    return SPDSolver(a, method=method, rel_tol=rel_tol, maxiter=maxiter).solve(b)


def symmetry_error(matrix) -> float:
    matrix = sp.csr_matrix(matrix)
    denom = abs(matrix).max() if matrix.nnz else 1.0
    diff = matrix - matrix.T
    return float(abs(diff).max() / denom) if diff.nnz else 0.0
