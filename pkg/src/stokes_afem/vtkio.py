"""Legacy ASCII VTK output for triangle meshes with cell data."""

import numpy as np


def write_vtk(path, mesh, cell_data=None, title="unstructured triangle mesh"):
    """Write a mesh as a legacy VTK unstructured grid.

    Parameters
    ----------
    path : str
        Output file path.
    mesh : SimplicialMesh
    cell_data : dict, optional
        Maps a field name to a per-element array; each entry becomes a
        scalar CELL_DATA section.
    title : str, optional
        Second header line, truncated to the format's 255 characters.
    """
    lines = [
        "# vtk DataFile Version 3.0",
        title[:255],
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        "POINTS %d double" % mesh.num_vertices,
    ]
    lines.extend(
        "%.17g %.17g 0" % (x, y) for x, y in mesh.vertices
    )
    nt = mesh.num_elements
    lines.append("CELLS %d %d" % (nt, 4 * nt))
    lines.extend(
        "3 %d %d %d" % (a, b, c) for a, b, c in mesh.elements
    )
    lines.append("CELL_TYPES %d" % nt)
    lines.extend(["5"] * nt)
    if cell_data:
        lines.append("CELL_DATA %d" % nt)
        for name, values in cell_data.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (nt,):
                raise ValueError("cell data %r is not per-element" % (name,))
            lines.append("SCALARS %s double 1" % name)
            lines.append("LOOKUP_TABLE default")
            lines.extend("%.17g" % v for v in values)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
