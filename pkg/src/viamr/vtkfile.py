"""Legacy ASCII VTK (``DATASET UNSTRUCTURED_GRID``) reader and writer for
triangle meshes with optional P1 (POINT_DATA) and DG0 (CELL_DATA) scalars."""

import numpy as np

from .errors import InvalidArgument
from .mesh import Mesh

VTK_TRIANGLE = 5


def _scalars(name, values):
    lines = [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
    lines.extend(f"{v:.16e}" for v in np.asarray(values, dtype=float))
    return lines


def write_vtk(path, mesh, point_data=None, cell_data=None, title="viamr mesh"):
    point_data = point_data or {}
    cell_data = cell_data or {}
    nv, nc = mesh.num_vertices, mesh.num_cells
    lines = ["# vtk DataFile Version 2.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {nv} double"]
    lines.extend(f"{x:.16e} {y:.16e} 0.0" for x, y in mesh.vertices)
    lines.append(f"CELLS {nc} {4 * nc}")
    lines.extend(f"3 {a} {b} {c}" for a, b, c in mesh.cells)
    lines.append(f"CELL_TYPES {nc}")
    lines.extend([str(VTK_TRIANGLE)] * nc)
    if cell_data:
        lines.append(f"CELL_DATA {nc}")
        for name, vals in cell_data.items():
            if len(vals) != nc:
                raise InvalidArgument(f"cell field {name!r} has {len(vals)} values, expected {nc}")
            lines.extend(_scalars(name, vals))
    if point_data:
        lines.append(f"POINT_DATA {nv}")
        for name, vals in point_data.items():
            if len(vals) != nv:
                raise InvalidArgument(f"point field {name!r} has {len(vals)} values, expected {nv}")
            lines.extend(_scalars(name, vals))
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def read_vtk(path):
    """Read a file written by :func:`write_vtk` (or any legacy ASCII
    unstructured grid of triangles).  Returns ``(mesh, point_data, cell_data)``.

    Cells are reoriented counterclockwise if needed.
    """
    with open(path) as fh:
        tokens = fh.read().split()
    # header: first two lines are free text; locate the DATASET keyword
    try:
        pos = tokens.index("DATASET")
    except ValueError:
        raise InvalidArgument(f"{path}: no DATASET section") from None
    if tokens[pos + 1] != "UNSTRUCTURED_GRID":
        raise InvalidArgument(f"{path}: unsupported dataset {tokens[pos + 1]}")
    pos += 2
    vertices = cells = types = None
    point_data, cell_data = {}, {}
    section = None
    while pos < len(tokens):
        key = tokens[pos]
        if key == "POINTS":
            n = int(tokens[pos + 1])
            vals = np.array(tokens[pos + 3:pos + 3 + 3 * n], dtype=float).reshape(n, 3)
            vertices = vals[:, :2]
            pos += 3 + 3 * n
        elif key == "CELLS":
            n, size = int(tokens[pos + 1]), int(tokens[pos + 2])
            raw = np.array(tokens[pos + 3:pos + 3 + size], dtype=np.int64)
            if size != 4 * n or np.any(raw[::4] != 3):
                raise InvalidArgument(f"{path}: only triangle cells are supported")
            cells = raw.reshape(n, 4)[:, 1:]
            pos += 3 + size
        elif key == "CELL_TYPES":
            n = int(tokens[pos + 1])
            types = np.array(tokens[pos + 2:pos + 2 + n], dtype=int)
            pos += 2 + n
        elif key in ("CELL_DATA", "POINT_DATA"):
            section = cell_data if key == "CELL_DATA" else point_data
            pos += 2
        elif key == "SCALARS":
            name = tokens[pos + 1]
            ncomp = 1
            pos += 3
            if tokens[pos] not in ("LOOKUP_TABLE",) and tokens[pos].isdigit():
                ncomp = int(tokens[pos])
                pos += 1
            if tokens[pos] == "LOOKUP_TABLE":
                pos += 2
            n = len(cells) if section is cell_data else len(vertices)
            section[name] = np.array(tokens[pos:pos + n * ncomp], dtype=float)
            pos += n * ncomp
        else:
            raise InvalidArgument(f"{path}: unexpected token {key!r}")
    if vertices is None or cells is None:
        raise InvalidArgument(f"{path}: missing POINTS or CELLS")
    if types is not None and np.any(types != VTK_TRIANGLE):
        raise InvalidArgument(f"{path}: only VTK_TRIANGLE (5) cells are supported")
    p = vertices[cells]
    area2 = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
             - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    cells = cells.copy()
    flip = area2 < 0
    cells[flip] = cells[flip][:, [0, 2, 1]]
    return Mesh(vertices, cells), point_data, cell_data
