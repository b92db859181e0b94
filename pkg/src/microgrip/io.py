"""File exporters: legacy ASCII VTK for fields, CSV for study records."""

from __future__ import annotations

import os

import numpy as np

from .fem import local_node_coords
from .mesh import Mesh
from .studies import CSV_HEADER

VTK_HEXAHEDRON = 12
VTK_TRIQUADRATIC_HEXAHEDRON = 29

# reference coordinates of the VTK node order, corners then edges, faces, centre
_VTK_CORNERS = [(-1, -1, -1), (1, -1, -1), (1, 1, -1), (-1, 1, -1),
                (-1, -1, 1), (1, -1, 1), (1, 1, 1), (-1, 1, 1)]
_VTK_EDGES = [(0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 7), (7, 4),
              (0, 4), (1, 5), (2, 6), (3, 7)]
_VTK_FACES = [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)]


def _vtk_reference(order: int) -> np.ndarray:
    c = np.array(_VTK_CORNERS, float)
    if order == 1:
        return c
    edges = np.array([(c[a] + c[b]) / 2 for a, b in _VTK_EDGES])
    return np.vstack([c, edges, np.array(_VTK_FACES, float), np.zeros((1, 3))])


def vtk_permutation(order: int) -> np.ndarray:
    """``perm[i]`` is the local node placed at VTK position ``i``."""
    ours = local_node_coords(order)
    ref = _vtk_reference(order)
    d = np.abs(ref[:, None, :] - ours[None, :, :]).sum(axis=2)
    perm = np.argmin(d, axis=1)
    assert len(set(perm.tolist())) == len(ours)
    return perm


def _fmt(values) -> str:
    return " ".join(format(float(v), ".9g") for v in np.ravel(values))


def material_ids(mesh: Mesh) -> tuple[np.ndarray, list[str]]:
    names = sorted(set(mesh.element_region.tolist()))
    lookup = {n: i for i, n in enumerate(names)}
    return np.array([lookup[r] for r in mesh.element_region], dtype=int), names


def export_vtk(mesh: Mesh, solution, path) -> str:
    """Legacy ASCII unstructured grid with the coupled fields of ``solution``.

    ``solution`` may be ``None`` (geometry only, zero fields).  Material ids index
    the sorted material names listed in the title line.
    """
    n, e = mesh.n_nodes, mesh.n_elements
    if solution is None:
        volt, temp, disp, joule = np.zeros(n), np.zeros(n), np.zeros((n, 3)), np.zeros(e)
    else:
        volt = np.asarray(solution.voltage, float)
        temp = np.asarray(solution.temperature, float)
        disp = np.asarray(solution.displacement, float).reshape(-1, 3)
        joule = np.asarray(solution.joule_density, float)
        if len(volt) != n or len(temp) != n or len(disp) != n or len(joule) != e:
            raise ValueError("solution fields do not match the mesh")
    ids, names = material_ids(mesh)
    perm = vtk_permutation(mesh.order)
    ctype = VTK_HEXAHEDRON if mesh.order == 1 else VTK_TRIQUADRATIC_HEXAHEDRON
    npe = mesh.elements.shape[1]
    title = f"microgrip {mesh.name or 'mesh'} material ids: " + " ".join(f"{i}={m}" for i, m in enumerate(names))
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {n} double"]
    lines += [_fmt(p) for p in mesh.nodes]
    lines.append(f"CELLS {e} {e * (npe + 1)}")
    lines += [f"{npe} " + " ".join(map(str, conn[perm])) for conn in mesh.elements]
    lines.append(f"CELL_TYPES {e}")
    lines += [str(ctype)] * e
    lines.append(f"POINT_DATA {n}")
    for name, values in (("voltage", volt), ("temperature", temp)):
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [format(float(v), ".9g") for v in values]
    lines.append("VECTORS displacement double")
    lines += [_fmt(u) for u in disp]
    lines.append(f"CELL_DATA {e}")
    lines += ["SCALARS material_id int 1", "LOOKUP_TABLE default"]
    lines += [str(i) for i in ids]
    lines += ["SCALARS joule_density double 1", "LOOKUP_TABLE default"]
    lines += [format(float(v), ".9g") for v in joule]
    _write(path, "\n".join(lines) + "\n")
    return str(path)


def export_csv(records, path) -> str:
    """Study records under the fixed header, in the order given."""
    rows = [CSV_HEADER] + [r.csv_row() for r in records]
    _write(path, "\n".join(rows) + "\n")
    return str(path)


def write_lines(path, rows) -> str:
    _write(path, "\n".join(rows) + "\n")
    return str(path)


def _write(path, text: str):
    try:
        d = os.path.dirname(os.fspath(path))
        if d:
            os.makedirs(d, exist_ok=True)
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc
