"""Structured all-hexahedral meshing of rectilinear layered layouts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .design import GripperDesign, Layout

MAX_ASPECT = 100.0
# local face ids: 0 x-, 1 x+, 2 y-, 3 y+, 4 z-, 5 z+
FACE_AXIS = (0, 0, 1, 1, 2, 2)
FACE_SIDE = (-1, 1, -1, 1, -1, 1)


class MeshError(ValueError):
    pass


class GeometryError(MeshError):
    pass


@dataclass(eq=False)
class Mesh:
    nodes: np.ndarray  # (N, 3) um
    elements: np.ndarray  # (E, 8 | 27), tensor-lexicographic local order
    order: int
    element_region: np.ndarray  # material label per element
    element_part: np.ndarray  # plan-part label per element
    element_arm: np.ndarray  # "left" / "right" / ""
    element_layer: np.ndarray  # stack index per element
    element_conductor: np.ndarray  # bool, geometric conductor (trace or via)
    facets: np.ndarray  # (F, 4 | 9), lexicographic in the two tangential axes
    facet_element: np.ndarray
    facet_face: np.ndarray
    facet_tag: np.ndarray
    terminals: dict = field(default_factory=dict)  # pad id -> (arm, polarity)
    anchor_labels: frozenset = frozenset()
    midline_y: float | None = None
    name: str = ""

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def element_order(self) -> int:
        return self.order

    def facets_with(self, prefix: str) -> np.ndarray:
        return np.flatnonzero(np.char.startswith(self.facet_tag.astype(str), prefix))

    def tag_nodes(self, tag: str) -> np.ndarray:
        return np.unique(self.facets[self.facet_tag == tag])

    @property
    def tags(self) -> list[str]:
        return sorted(set(self.facet_tag.tolist()))

    def free_element_mask(self) -> np.ndarray:
        return ~np.isin(self.element_part, list(self.anchor_labels))

    def signature(self) -> bytes:
        """Byte string identifying the mesh exactly (used for determinism checks)."""
        parts = [self.nodes.tobytes(), self.elements.tobytes(), self.facets.tobytes(),
                 "|".join(self.element_region).encode(), "|".join(self.facet_tag).encode()]
        return b"#".join(parts)


def _breaks(edges, resolution):
    edges = np.unique(np.round(np.asarray(edges, dtype=float), 9))
    out = [edges[0]]
    for a, b in zip(edges[:-1], edges[1:]):
        n = max(1, math.ceil((b - a) / resolution - 1e-9))
        out.extend(a + (b - a) * np.arange(1, n + 1) / n)
    out = np.array(out)
    out[-1] = edges[-1]
    return out


def _layer_breaks(stack, resolution):
    z = [0.0]
    layer_of = []
    top = 0.0
    for k, layer in enumerate(stack):
        n = max(1, math.ceil(layer.thickness / resolution - 1e-9))
        for i in range(1, n + 1):
            z.append(top + layer.thickness * i / n)
            layer_of.append(k)
        top += layer.thickness
    return np.array(z), np.array(layer_of)


def _resolve_materials(layout: Layout, xc, yc):
    """Material label (or None) per (plan cell, layer) and per-cell attributes."""
    nx, ny = len(xc), len(yc)
    X, Y = np.meshgrid(xc, yc, indexing="ij")
    part = np.full((nx, ny), "", dtype=object)
    arm = np.full((nx, ny), "", dtype=object)
    for p in reversed(layout.parts):
        inside = p.rect.contains(X, Y, tol=0.0)
        part[inside] = p.label
        arm[inside] = p.arm
    solid = part != ""
    trace = np.zeros((nx, ny), dtype=bool)
    for t in layout.trace:
        trace |= t.rect.contains(X, Y, tol=0.0)
    trace &= solid
    pad = np.full((nx, ny), "", dtype=object)
    for p in layout.pads:
        pad[p.rect.contains(X, Y, tol=0.0) & trace] = p.pad_id
    anchor = np.isin(part, list(layout.anchor_labels))

    stack = layout.stack
    nl = len(stack)
    mat = np.full((nx, ny, nl), None, dtype=object)
    conductor = np.zeros((nx, ny, nl), dtype=bool)
    polymers = [layer.material for layer in stack if layer.role == "structural_polymer"]
    fill = polymers[0] if polymers else None
    first_conductor = next((k for k, layer in enumerate(stack) if layer.role == "conductor"), None)
    for k, layer in enumerate(stack):
        if layer.role == "substrate_oxide":
            mat[anchor, k] = layer.material
        elif layer.role == "structural_polymer":
            mat[solid, k] = layer.material
            if first_conductor is not None:
                # pads are metal columns through the whole polymer stack
                via = (pad != "") & solid
                mat[via, k] = stack[first_conductor].material
                conductor[via, k] = True
        elif layer.role == "conductor":
            mat[trace, k] = layer.material
            conductor[trace, k] = True
    # non-trace cells of a conductor layer take the polymer when buried, else stay open
    present = mat != None  # noqa: E711
    for k, layer in enumerate(stack):
        if layer.role != "conductor" or fill is None:
            continue
        below = present[:, :, :k].any(axis=2)
        above = present[:, :, k + 1:].any(axis=2)
        buried = solid & ~trace & below & above
        mat[buried, k] = fill
    return mat, conductor, part, arm, pad


def generate_mesh(design: GripperDesign | Layout, resolution: float, order: int = 2) -> Mesh:
    """Mesh a design with bricks no larger than ``resolution`` in plan and per layer.

    Every layer gets at least one element through its thickness, so thin
    conductor films produce flat elements; ``MeshError`` is raised when the
    resulting aspect ratio would exceed ``MAX_ASPECT``.
    """
    layout = design.layout() if isinstance(design, GripperDesign) else design
    if order not in (1, 2):
        raise MeshError(f"element order must be 1 or 2, got {order!r}")
    if not (isinstance(resolution, (int, float)) and math.isfinite(resolution) and resolution > 0):
        raise MeshError(f"resolution must be a positive length, got {resolution!r}")
    for item in (*layout.parts, *layout.trace):
        if item.rect.degenerate:
            raise GeometryError(f"degenerate rectangle in part {item.label!r}")
    if not layout.stack:
        raise GeometryError("empty layer stack")
    thinnest = min(layer.thickness for layer in layout.stack)
    if thinnest <= 0:
        raise GeometryError("layer with non-positive thickness")
    if resolution / thinnest > MAX_ASPECT:
        raise MeshError(
            f"resolution {resolution:g} um too coarse for the thinnest layer ({thinnest:g} um); "
            f"use resolution <= {MAX_ASPECT * thinnest:g} um"
        )

    xe = [v for p in (*layout.parts, *layout.trace, *(pd for pd in layout.pads)) for v in (p.rect.x0, p.rect.x1)]
    ye = [v for p in (*layout.parts, *layout.trace, *(pd for pd in layout.pads)) for v in (p.rect.y0, p.rect.y1)]
    for t in layout.tips:
        xe += [t.x0, t.x1]
        ye.append(t.y)
    xb = _breaks(xe, resolution)
    yb = _breaks(ye, resolution)
    zb, layer_of = _layer_breaks(layout.stack, resolution)
    xc, yc = (xb[:-1] + xb[1:]) / 2, (yb[:-1] + yb[1:]) / 2
    nx, ny, nz = len(xc), len(yc), len(layer_of)

    mat, cond, part, arm, pad = _resolve_materials(layout, xc, yc)
    cell_mat = mat[:, :, layer_of]  # (nx, ny, nz)
    solid = cell_mat != None  # noqa: E711
    if not solid.any():
        raise GeometryError("layout produces no solid cells")

    # elements in lexicographic (i fastest, then j, then k) order
    kk, jj, ii = np.nonzero(solid.transpose(2, 1, 0))
    p = order
    m = p + 1
    NX, NY = p * nx + 1, p * ny + 1
    loc = np.arange(m)
    la, lb, lc = np.meshgrid(loc, loc, loc, indexing="ij")
    la, lb, lc = (g.transpose(2, 1, 0).ravel() for g in (la, lb, lc))
    gi = p * ii[:, None] + la
    gj = p * jj[:, None] + lb
    gk = p * kk[:, None] + lc
    flat = gi + NX * (gj + NY * gk)
    used, inverse = np.unique(flat, return_inverse=True)
    elements = inverse.reshape(flat.shape).astype(np.int64)
    ui = used % NX
    uj = (used // NX) % NY
    uk = used // (NX * NY)

    def fine(b):
        if p == 1:
            return b
        out = np.empty(2 * len(b) - 1)
        out[0::2] = b
        out[1::2] = (b[:-1] + b[1:]) / 2
        return out

    nodes = np.stack([fine(xb)[ui], fine(yb)[uj], fine(zb)[uk]], axis=1)

    region = np.array([cell_mat[i, j, k] for i, j, k in zip(ii, jj, kk)], dtype=str)
    e_part = part[ii, jj].astype(str)
    e_arm = arm[ii, jj].astype(str)
    e_layer = layer_of[kk]
    e_cond = cond[ii, jj, e_layer]

    # boundary facets: element faces whose neighbour cell is void or outside
    padded = np.zeros((nx + 2, ny + 2, nz + 2), dtype=bool)
    padded[1:-1, 1:-1, 1:-1] = solid
    idx3 = np.stack([ii, jj, kk], axis=1) + 1
    f_elem, f_face = [], []
    for face in range(6):
        axis, side = FACE_AXIS[face], FACE_SIDE[face]
        nb = idx3.copy()
        nb[:, axis] += side
        open_ = ~padded[nb[:, 0], nb[:, 1], nb[:, 2]]
        f_elem.append(np.flatnonzero(open_))
        f_face.append(np.full(open_.sum(), face))
    f_elem = np.concatenate(f_elem)
    f_face = np.concatenate(f_face)
    order_ = np.lexsort((f_face, f_elem))
    f_elem, f_face = f_elem[order_], f_face[order_]

    local = np.stack([la, lb, lc], axis=1)  # (n, 3)
    face_local = []
    for face in range(6):
        axis, side = FACE_AXIS[face], FACE_SIDE[face]
        sel = np.flatnonzero(local[:, axis] == (0 if side < 0 else p))
        # keep lexicographic order in the remaining axes (first remaining axis fastest)
        face_local.append(sel)
    facets = np.stack([elements[e, face_local[f]] for e, f in zip(f_elem, f_face)]) if len(f_elem) else np.zeros((0, m * m), int)

    corners = nodes[facets]
    centroid = corners.mean(axis=1)
    tags = np.full(len(facets), "convection", dtype=object)
    assigned = np.zeros(len(facets), dtype=bool)
    f_axis = np.array(FACE_AXIS)[f_face]
    f_side = np.array(FACE_SIDE)[f_face]

    if layout.fixed is not None:
        sel = layout.fixed
        b = sel.box
        hit = (f_axis == sel.axis) & (f_side == sel.side)
        for d in range(3):
            hit &= (centroid[:, d] >= b[2 * d]) & (centroid[:, d] <= b[2 * d + 1])
        tags[hit] = "fixed_base"
        assigned |= hit

    terminals = {}
    cell_pad = pad[ii, jj].astype(str)
    for pd in layout.pads:
        hit = ~assigned & (f_face == 5) & e_cond[f_elem] & (cell_pad[f_elem] == pd.pad_id)
        tags[hit] = f"terminal:{pd.pad_id}"
        assigned |= hit
        terminals[pd.pad_id] = (pd.arm, pd.polarity)

    tol = 1e-6
    for tip in layout.tips:
        hit = (~assigned & (f_axis == 1) & (f_side == tip.normal)
               & (np.abs(centroid[:, 1] - tip.y) < tol)
               & (centroid[:, 0] >= tip.x0 - tol) & (centroid[:, 0] <= tip.x1 + tol))
        tags[hit] = f"tip:{tip.arm}"
        assigned |= hit

    return Mesh(
        nodes=nodes,
        elements=elements,
        order=order,
        element_region=region,
        element_part=e_part,
        element_arm=e_arm,
        element_layer=e_layer,
        element_conductor=e_cond,
        facets=facets.astype(np.int64),
        facet_element=f_elem.astype(np.int64),
        facet_face=f_face.astype(np.int64),
        facet_tag=tags.astype(str),
        terminals=terminals,
        anchor_labels=layout.anchor_labels,
        midline_y=layout.midline_y,
        name=layout.name,
    )


@dataclass
class QualityReport:
    min_jacobian: float
    element_count: int
    node_count: int
    facet_areas: dict  # tag -> um^2
    negative_jacobians: int = 0

    def total_area(self, prefix: str) -> float:
        return sum(v for k, v in self.facet_areas.items() if k.startswith(prefix))


def mesh_quality(m: Mesh) -> QualityReport:
    det = fem.jacobian_determinants(m.nodes, m.elements, m.order)
    areas = fem.facet_areas(m.nodes, m.facets, m.order)
    per_tag = {}
    for tag in sorted(set(m.facet_tag.tolist())):
        per_tag[tag] = float(areas[m.facet_tag == tag].sum())
    return QualityReport(
        min_jacobian=float(det.min()) if det.size else float("nan"),
        element_count=m.n_elements,
        node_count=m.n_nodes,
        facet_areas=per_tag,
        negative_jacobians=int((det <= 0).any(axis=1).sum()) if det.size else 0,
    )


def boundary_facet_owners(m: Mesh) -> np.ndarray:
    """Number of elements sharing each boundary facet's node set (1 for a valid mesh)."""
    faces = {}
    order = m.order
    mm = order + 1
    loc = np.arange(mm)
    la, lb, lc = np.meshgrid(loc, loc, loc, indexing="ij")
    local = np.stack([g.transpose(2, 1, 0).ravel() for g in (la, lb, lc)], axis=1)
    for face in range(6):
        axis, side = FACE_AXIS[face], FACE_SIDE[face]
        sel = np.flatnonzero(local[:, axis] == (0 if side < 0 else order))
        for nodeset in np.sort(m.elements[:, sel], axis=1):
            k = nodeset.tobytes()
            faces[k] = faces.get(k, 0) + 1
    return np.array([faces[np.sort(f).tobytes()] for f in m.facets])


def conductor_components(m: Mesh, conductive: np.ndarray | None = None):
    """Connected components of the conductor elements (shared-node adjacency).

    Returns a list of element-index arrays.
    """
    import scipy.sparse as sp
    from scipy.sparse.csgraph import connected_components

    mask = m.element_conductor if conductive is None else conductive
    elems = np.flatnonzero(mask)
    if len(elems) == 0:
        return []
    conn = m.elements[elems]
    rows = np.repeat(np.arange(len(elems)), conn.shape[1])
    inc = sp.csr_matrix((np.ones(conn.size), (rows, conn.ravel())), shape=(len(elems), m.n_nodes))
    adj = inc @ inc.T
    n, labels = connected_components(adj, directed=False)
    return [elems[labels == c] for c in range(n)]
