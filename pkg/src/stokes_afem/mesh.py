"""Triangle meshes with newest-vertex bisection refinement.

A mesh is a pair of flat arrays (vertex coordinates, element
connectivity) plus a derived face table that the assembly and estimator
routines use to walk interior and boundary edges.  Element vertex
ordering carries the refinement convention: the edge opposite local
vertex 0 is the refinement edge, and bisection inserts the new vertex
there.  Children inherit the new vertex as their local vertex 0, which
is exactly newest-vertex bisection and keeps the number of triangle
shapes finite under arbitrary refinement.

Supported model domains (unit grid spacing 1/n, every grid cell split
along its bottom-left to top-right diagonal):

* ``square``  the unit square (0,1)^2
* ``lshape``  (-1,1)^2 with the quadrant [0,1]x[-1,0] removed
* ``slit``    (-1,1)^2 cut along the segment 0 <= x <= 1, y = 0

The slit is handled topologically: grid vertices on the open slit are
duplicated so the faces above and below it are distinct boundary faces,
while the tip (0,0) stays a single vertex.
"""

import numpy as np


class MeshError(Exception):
    """Raised for structurally invalid meshes or refinement input."""


class SimplicialMesh:
    """Conforming triangle mesh with precomputed face topology.

    Parameters
    ----------
    vertices : array, shape (nv, 2)
        Vertex coordinates.
    elements : array, shape (nt, 3)
        Vertex indices per triangle, counterclockwise.  The edge
        opposite local vertex 0 is the refinement edge.
    generation : array, shape (nt,), optional
        Number of bisections separating each element from its root in
        the refinement forest.  Defaults to all zeros.
    parent : array, shape (nt,), optional
        Index of the element in the previous mesh this element came
        from, -1 for root meshes.

    Attributes
    ----------
    areas : array, shape (nt,)
        Element areas.
    diameters : array, shape (nt,)
        Longest edge per element.
    face_vertices : array, shape (nf, 2)
        Endpoint indices per face, lower index first.
    face_elems : array, shape (nf, 2)
        Adjacent elements per face.  Interior faces store the lower
        element index first; boundary faces store -1 in the second slot.
    face_local : array, shape (nf, 2)
        Local edge index of the face within each adjacent element.
    face_normals : array, shape (nf, 2)
        Unit normal. It points out of ``face_elems[:, 0]``, so from the
        lower-indexed element into the higher-indexed one, and outward
        on the boundary.
    face_lengths : array, shape (nf,)
        Face lengths.
    elem_faces : array, shape (nt, 3)
        Face index per local edge of each element.
    """

    def __init__(self, vertices, elements, generation=None, parent=None):
        self.vertices = np.asarray(vertices, dtype=float)
        self.elements = np.asarray(elements, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must be an (nv, 2) array")
        if self.elements.ndim != 2 or self.elements.shape[1] != 3:
            raise MeshError("elements must be an (nt, 3) array")
        if self.elements.size and self.elements.max() >= len(self.vertices):
            raise MeshError("element refers to a vertex that does not exist")

        nt = len(self.elements)
        if generation is None:
            generation = np.zeros(nt, dtype=np.int64)
        if parent is None:
            parent = np.full(nt, -1, dtype=np.int64)
        self.generation = np.asarray(generation, dtype=np.int64)
        self.parent = np.asarray(parent, dtype=np.int64)

        p = self.vertices[self.elements]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        signed = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        if np.any(signed <= 0.0):
            bad = int(np.argmin(signed))
            raise MeshError(
                "element %d is degenerate or clockwise (signed area %g)"
                % (bad, signed[bad])
            )
        self.areas = signed

        # edge i sits opposite local vertex i
        edge_vec = p[:, [2, 0, 1]] - p[:, [1, 2, 0]]
        edge_len = np.hypot(edge_vec[..., 0], edge_vec[..., 1])
        self.diameters = edge_len.max(axis=1)
        self._build_faces(edge_len)

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_elements(self):
        return len(self.elements)

    @property
    def num_faces(self):
        return len(self.face_vertices)

    @property
    def boundary_mask(self):
        """Boolean mask over faces, True on boundary faces."""
        return self.face_elems[:, 1] < 0

    def _build_faces(self, edge_len):
        elems = self.elements
        nt = len(elems)
        # raw edges in (element, local edge) order, canonical endpoints
        raw = elems[:, [[1, 2], [2, 0], [0, 1]]].reshape(-1, 2)
        lo = raw.min(axis=1)
        hi = raw.max(axis=1)
        key = lo * np.int64(len(self.vertices)) + hi
        uniq, inverse, counts = np.unique(
            key, return_inverse=True, return_counts=True
        )
        if counts.size and counts.max() > 2:
            raise MeshError("non-manifold edge shared by %d elements"
                            % counts.max())
        nf = len(uniq)
        self.elem_faces = inverse.reshape(nt, 3).astype(np.int64)

        face_elems = np.full((nf, 2), -1, dtype=np.int64)
        face_local = np.full((nf, 2), -1, dtype=np.int64)
        # walk (element, local) pairs in ascending element order so the
        # first element stored per face is the lower-indexed one
        order = np.argsort(inverse, kind="stable")
        owner = order // 3
        local = order % 3
        fids = inverse[order]
        first = np.ones(len(fids), dtype=bool)
        first[1:] = fids[1:] != fids[:-1]
        face_elems[fids[first], 0] = owner[first]
        face_local[fids[first], 0] = local[first]
        second = ~first
        face_elems[fids[second], 1] = owner[second]
        face_local[fids[second], 1] = local[second]

        self.face_vertices = np.column_stack(
            (lo[order[first]], hi[order[first]])
        )
        self.face_lengths = edge_len.reshape(-1)[order[first]]

        # outward normal of the first adjacent element
        e0 = face_elems[:, 0]
        l0 = face_local[:, 0]
        a = elems[e0, (l0 + 1) % 3]
        b = elems[e0, (l0 + 2) % 3]
        tang = self.vertices[b] - self.vertices[a]
        normals = np.column_stack((tang[:, 1], -tang[:, 0]))
        self.face_normals = normals / self.face_lengths[:, None]
        self.face_elems = face_elems
        self.face_local = face_local


def _criss_cross(nx, ny, x0, y0, h, cell_mask=None):
    """Grid of right triangles, each cell split along its +1,+1 diagonal."""
    xs = x0 + h * np.arange(nx + 1)
    ys = y0 + h * np.arange(ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack((X.ravel(), Y.ravel()))

    def vid(i, j):
        return i * (ny + 1) + j

    elements = []
    for j in range(ny):
        for i in range(nx):
            if cell_mask is not None and not cell_mask(i, j):
                continue
            p00 = vid(i, j)
            p10 = vid(i + 1, j)
            p01 = vid(i, j + 1)
            p11 = vid(i + 1, j + 1)
            elements.append((p00, p10, p11))
            elements.append((p00, p11, p01))
    return vertices, np.array(elements, dtype=np.int64)


def _drop_unused(vertices, elements):
    used = np.unique(elements)
    remap = np.full(len(vertices), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return vertices[used], remap[elements]


def _rotate_longest_edge_first(vertices, elements):
    """Rotate vertex order so the longest edge sits opposite vertex 0."""
    p = vertices[elements]
    edge_vec = p[:, [2, 0, 1]] - p[:, [1, 2, 0]]
    lengths = np.hypot(edge_vec[..., 0], edge_vec[..., 1])
    shift = lengths.argmax(axis=1)
    idx = (shift[:, None] + np.arange(3)[None, :]) % 3
    return np.take_along_axis(elements, idx, axis=1)


def generate_domain(domain, n):
    """Build the initial criss-cross mesh of a model domain.

    Parameters
    ----------
    domain : str
        One of ``"square"``, ``"lshape"``, ``"slit"``.
    n : int
        Grid subdivisions per unit length, so the mesh size is
        ``sqrt(2)/n``.

    Returns
    -------
    SimplicialMesh

    Notes
    -----
    Element counts are 2*n^2 for the square, 6*n^2 for the L-shape and
    8*n^2 for the slit domain.  Every element is a right isosceles
    triangle whose refinement edge is its hypotenuse, so newest-vertex
    bisection preserves the 45 degree minimum angle forever.
    """
    if n < 1:
        raise MeshError("n must be a positive integer")
    h = 1.0 / n
    if domain == "square":
        vertices, elements = _criss_cross(n, n, 0.0, 0.0, h)
    elif domain == "lshape":
        def keep(i, j):
            # drop cells in the removed quadrant [0,1] x [-1,0]
            return not (i >= n and j < n)
        vertices, elements = _criss_cross(2 * n, 2 * n, -1.0, -1.0, h, keep)
        vertices, elements = _drop_unused(vertices, elements)
    elif domain == "slit":
        vertices, elements = _criss_cross(2 * n, 2 * n, -1.0, -1.0, h)
        vertices, elements = _slit_cut(vertices, elements, n)
    else:
        raise MeshError("unknown domain %r" % (domain,))

    elements = _rotate_longest_edge_first(vertices, elements)
    return SimplicialMesh(vertices, elements)


def _slit_cut(vertices, elements, n):
    """Duplicate vertices on the open slit so it becomes boundary.

    Grid nodes with y = 0 and 0 < x < 1 get a twin; triangles whose
    centroid lies below the slit are rewired to the twins.  The tip
    (0, 0) and the outer point (1, 0) are left alone, so the upper and
    lower banks stay glued only at those points while every face along
    the cut becomes a boundary face.
    """
    on_slit = np.flatnonzero(
        (np.abs(vertices[:, 1]) < 1e-12)
        & (vertices[:, 0] > 1e-12)
        & (vertices[:, 0] < 1.0 - 1e-12)
    )
    twins = len(vertices) + np.arange(len(on_slit))
    vertices = np.vstack((vertices, vertices[on_slit]))

    remap = np.arange(len(vertices))
    remap[on_slit] = twins
    centroid_y = vertices[elements, 1].mean(axis=1)
    below = centroid_y < 0.0
    elements = elements.copy()
    elements[below] = remap[elements[below]]
    return vertices, elements


def bisect(mesh, marked):
    """Refine a mesh by newest-vertex bisection of the marked elements.

    The refinement edges of all marked elements are split.  A closure
    sweep marks additional refinement edges until no hanging node would
    remain, then each element is bisected once or twice depending on
    how many of its edges ended up marked.  Marked elements are always
    bisected at least once and the result is again conforming.

    Parameters
    ----------
    mesh : SimplicialMesh
    marked : array of int or bool
        Element indices to refine, or a boolean mask over elements.

    Returns
    -------
    SimplicialMesh
        The refined mesh.  ``parent`` maps each new element to the
        element of ``mesh`` it descends from.
    """
    marked = np.asarray(marked)
    if marked.dtype == bool:
        if marked.shape != (mesh.num_elements,):
            raise MeshError("boolean mark mask has wrong length")
        marked = np.flatnonzero(marked)
    else:
        marked = marked.astype(np.int64, copy=False)
        if marked.size and (marked.min() < 0
                            or marked.max() >= mesh.num_elements):
            raise MeshError("marked element index out of range")
    if marked.size == 0:
        return mesh

    ef = mesh.elem_faces
    nf = mesh.num_faces
    split_edge = np.zeros(nf, dtype=bool)
    split_edge[ef[marked, 0]] = True
    for _ in range(nf + 1):
        has_any = split_edge[ef].any(axis=1)
        need = has_any & ~split_edge[ef[:, 0]]
        if not need.any():
            break
        split_edge[ef[need, 0]] = True
    else:  # pragma: no cover - closure always terminates
        raise MeshError("refinement closure did not terminate")

    edge_ids = np.flatnonzero(split_edge)
    mid_of = np.full(nf, -1, dtype=np.int64)
    mid_of[edge_ids] = mesh.num_vertices + np.arange(len(edge_ids))
    fv = mesh.face_vertices[edge_ids]
    midpoints = 0.5 * (mesh.vertices[fv[:, 0]] + mesh.vertices[fv[:, 1]])
    new_vertices = np.vstack((mesh.vertices, midpoints))

    elems = mesh.elements
    gen = mesh.generation
    rows, gens, parents, slots = [], [], [], []

    def emit(tri, g, src, slot):
        rows.append(tri)
        gens.append(g)
        parents.append(src)
        slots.append(slot)

    once = split_edge[ef[:, 0]]
    for e in np.flatnonzero(~once):
        emit(elems[e], gen[e], e, 0)
    for e in np.flatnonzero(once):
        v0, v1, v2 = elems[e]
        m = mid_of[ef[e, 0]]
        # child 0 owns parent edge 2, child 1 owns parent edge 1
        for slot0, child, pedge in (
            (0, (m, v0, v1), ef[e, 2]),
            (2, (m, v2, v0), ef[e, 1]),
        ):
            if split_edge[pedge]:
                mm = mid_of[pedge]
                w0, w1, w2 = child
                emit((mm, w0, w1), gen[e] + 2, e, slot0)
                emit((mm, w2, w0), gen[e] + 2, e, slot0 + 1)
            else:
                emit(child, gen[e] + 1, e, slot0)

    parents = np.array(parents, dtype=np.int64)
    slots = np.array(slots, dtype=np.int64)
    order = np.lexsort((slots, parents))
    new_elements = np.array(rows, dtype=np.int64)[order]
    new_gen = np.array(gens, dtype=np.int64)[order]
    new_parent = parents[order]
    return SimplicialMesh(new_vertices, new_elements, new_gen, new_parent)


def affine_maps(mesh):
    """Affine reference-to-physical maps of all elements.

    Returns
    -------
    origin : array, shape (nt, 2)
        Image of the reference origin (local vertex 0).
    jac : array, shape (nt, 2, 2)
        Jacobians; column d is the image of reference direction d.
    inv_jac : array, shape (nt, 2, 2)
        Inverse Jacobians.
    det : array, shape (nt,)
        Jacobian determinants, equal to twice the element areas.
    """
    p = mesh.vertices[mesh.elements]
    origin = p[:, 0]
    jac = np.stack((p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=-1)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    inv_jac = np.empty_like(jac)
    inv_jac[:, 0, 0] = jac[:, 1, 1]
    inv_jac[:, 1, 1] = jac[:, 0, 0]
    inv_jac[:, 0, 1] = -jac[:, 0, 1]
    inv_jac[:, 1, 0] = -jac[:, 1, 0]
    inv_jac /= det[:, None, None]
    return origin, jac, inv_jac, det


def min_angle(mesh):
    """Smallest interior angle over all elements, in radians."""
    p = mesh.vertices[mesh.elements]
    angles = []
    for i in range(3):
        u = p[:, (i + 1) % 3] - p[:, i]
        w = p[:, (i + 2) % 3] - p[:, i]
        cosang = (u * w).sum(axis=1) / (
            np.linalg.norm(u, axis=1) * np.linalg.norm(w, axis=1)
        )
        angles.append(np.arccos(np.clip(cosang, -1.0, 1.0)))
    return float(np.min(angles))
