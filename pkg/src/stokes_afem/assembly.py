"""Sparse assembly of the interior-penalty Stokes operators.

The velocity operator is a symmetric interior-penalty form: broken
gradients on elements, minus the consistency and adjoint-consistency
face terms built from average normal gradients against jumps, plus the
gamma/h penalty on velocity jumps.  Face sums run over interior and
boundary faces alike; on the boundary the outer trace is zero, so
averages degenerate to the inner trace and jumps to the trace itself,
which is how the no-slip condition enters.  The divergence coupling
pairs pressures with element divergences and with average pressures
against normal velocity jumps.

Since the two velocity components never couple in the velocity
operator, the scalar interior-penalty matrix is assembled once and
scattered into both component blocks.

Penalty scaling is gamma = c1 * k^2 with c1 = 10 by default, divided by
the face length h_E face by face.
"""

import numpy as np
import scipy.sparse as sp

from .mesh import affine_maps
from .space import (
    BrokenSpaceLayout,
    EdgeTraces,
    segment_rule,
    triangle_rule,
)

PENALTY_C1 = 10.0


class AssembledSystem:
    """Matrices of one discrete Stokes problem.

    Attributes
    ----------
    A : csr_matrix, (num_velocity, num_velocity)
        Velocity interior-penalty operator, exactly symmetric.
    B : csr_matrix, (num_pressure, num_velocity)
        Pressure-velocity coupling.
    M : csr_matrix, (num_velocity, num_velocity)
        Velocity mass matrix (diagonal in the modal basis).
    c : ndarray, (num_pressure,)
        Pressure means, used to pin the pressure gauge.
    A_scalar : csr_matrix, (num_velocity/2, num_velocity/2)
        Single-component interior-penalty operator; A consists of two
        uncoupled copies of it, which the solvers exploit.
    layout : BrokenSpaceLayout
    gamma : float
        Penalty coefficient actually used, c1 * k^2.
    """

    def __init__(self, A, B, M, c, A_scalar, layout, gamma):
        self.A = A
        self.B = B
        self.M = M
        self.c = c
        self.A_scalar = A_scalar
        self.layout = layout
        self.gamma = gamma


def _face_sides(mesh):
    """Trace table index (local edge, direction) per face side."""
    idx = np.zeros((mesh.num_faces, 2), dtype=np.int64)
    for side in (0, 1):
        elem = mesh.face_elems[:, side]
        le = mesh.face_local[:, side]
        ok = elem >= 0
        first = mesh.elements[elem[ok], (le[ok] + 1) % 3]
        rev = (first != mesh.face_vertices[ok, 0]).astype(np.int64)
        idx[ok, side] = 2 * le[ok] + rev
    return idx


def face_traces(mesh, basis, rule, inv_jac=None):
    """Evaluate basis traces of both adjacent elements on every face.

    Points on a face are parameterized from its lower-numbered vertex
    to the higher one, so the two sides see identical physical points.

    Returns
    -------
    values : list of two arrays, each (nf, nq, dim)
    grads : list of two arrays, each (nf, nq, dim, 2)
        Physical gradients.  Entries on the missing side of boundary
        faces are filled from element 0 and must be masked by callers.
    points : array (nf, nq, 2)
        Physical quadrature points.
    """
    if inv_jac is None:
        _, _, inv_jac, _ = affine_maps(mesh)
    traces = EdgeTraces(basis, rule)
    tab_v = np.stack([traces.values[e, r] for e in range(3) for r in (0, 1)])
    tab_g = np.stack([traces.grads[e, r] for e in range(3) for r in (0, 1)])
    idx = _face_sides(mesh)

    values, grads = [], []
    for side in (0, 1):
        elem = np.maximum(mesh.face_elems[:, side], 0)
        values.append(tab_v[idx[:, side]])
        grads.append(
            np.einsum("fqic,fcd->fqid", tab_g[idx[:, side]], inv_jac[elem])
        )
    a = mesh.vertices[mesh.face_vertices[:, 0]]
    b = mesh.vertices[mesh.face_vertices[:, 1]]
    t = rule.points
    points = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    return values, grads, points


def _scalar_sip(mesh, layout, gamma, rule):
    """COO triplets of the scalar interior-penalty operator."""
    vdim = layout.vdim
    origin, jac, inv_jac, det = affine_maps(mesh)

    vol = triangle_rule(2 * layout.degree)
    gref = layout.velocity_basis.grad(vol.points)
    gphys = np.einsum("qic,ecd->eqid", gref, inv_jac)
    kloc = np.einsum("q,e,eqid,eqjd->eij", vol.weights, det, gphys, gphys)

    nt = mesh.num_elements
    sdof = vdim * np.arange(nt)[:, None] + np.arange(vdim)[None, :]
    rows = [np.repeat(sdof, vdim, axis=1).ravel()]
    cols = [np.tile(sdof, (1, vdim)).ravel()]
    vals = [kloc.ravel()]

    V, G, _ = face_traces(mesh, layout.velocity_basis, rule, inv_jac)
    nrm = mesh.face_normals
    Dn = [np.einsum("fqid,fd->fqi", G[s], nrm) for s in (0, 1)]
    w = rule.weights
    h = mesh.face_lengths
    interior = ~mesh.boundary_mask

    def block(cf, X, Y):
        # cf: per-face coefficient, X,Y: (nf', nq, vdim) test/trial tables
        return np.einsum("f,q,fqi,fqj->fij", cf, w, X, Y)

    for mask, sides in ((interior, (0, 1)), (mesh.boundary_mask, (0,))):
        if not mask.any():
            continue
        fel = mesh.face_elems[mask]
        hn = h[mask]
        avg = 0.5 if len(sides) == 2 else 1.0
        Vm = [V[s][mask] for s in sides]
        Dm = [Dn[s][mask] for s in sides]
        sgn = (1.0, -1.0)
        ones = np.ones(mask.sum())
        for sv in sides:
            rdof = vdim * fel[:, sv, None] + np.arange(vdim)[None, :]
            for su in sides:
                cdof = vdim * fel[:, su, None] + np.arange(vdim)[None, :]
                pen = block(gamma * sgn[sv] * sgn[su] * ones, Vm[sv], Vm[su])
                con = block(-avg * sgn[sv] * hn, Vm[sv], Dm[su])
                loc = pen + con + np.swapaxes(
                    block(-avg * sgn[su] * hn, Vm[su], Dm[sv]), 1, 2
                )
                rows.append(np.repeat(rdof, vdim, axis=1).ravel())
                cols.append(np.tile(cdof, (1, vdim)).ravel())
                vals.append(loc.ravel())
    return (
        np.concatenate(rows),
        np.concatenate(cols),
        np.concatenate(vals),
    )


def _divergence(mesh, layout, rule):
    """COO triplets of the pressure-velocity coupling B."""
    vdim, pdim = layout.vdim, layout.pdim
    origin, jac, inv_jac, det = affine_maps(mesh)
    nt = mesh.num_elements

    vol = triangle_rule(2 * layout.degree)
    gref = layout.velocity_basis.grad(vol.points)
    gphys = np.einsum("qic,ecd->eqid", gref, inv_jac)
    pval = layout.pressure_basis.eval(vol.points)
    # -int q div v, component d of v paired with d-derivative
    bloc = -np.einsum("q,e,qi,eqjd->eidj", vol.weights, det, pval, gphys)

    pdof = pdim * np.arange(nt)[:, None] + np.arange(pdim)[None, :]
    vdof = (2 * vdim) * np.arange(nt)[:, None, None] + (
        vdim * np.arange(2)[None, :, None]
        + np.arange(vdim)[None, None, :]
    )
    rows = [np.repeat(pdof[:, :, None], 2 * vdim, axis=2).ravel()]
    cols = [np.repeat(vdof.reshape(nt, 1, -1), pdim, axis=1).ravel()]
    vals = [bloc.reshape(nt, pdim, -1).ravel()]

    V, _, _ = face_traces(mesh, layout.velocity_basis, rule, inv_jac)
    Q, _, _ = face_traces(mesh, layout.pressure_basis, rule, inv_jac)
    w = rule.weights
    h = mesh.face_lengths
    nrm = mesh.face_normals
    interior = ~mesh.boundary_mask
    sgn = (1.0, -1.0)

    for mask, sides in ((interior, (0, 1)), (mesh.boundary_mask, (0,))):
        if not mask.any():
            continue
        fel = mesh.face_elems[mask]
        avg = 0.5 if len(sides) == 2 else 1.0
        for sq in sides:
            rdof = pdim * fel[:, sq, None] + np.arange(pdim)[None, :]
            for sv in sides:
                cbase = 2 * vdim * fel[:, sv]
                loc = np.einsum(
                    "f,q,fqi,fqj,fd->fidj",
                    avg * sgn[sv] * h[mask],
                    w,
                    Q[sq][mask],
                    V[sv][mask],
                    nrm[mask],
                )
                cdof = (
                    cbase[:, None, None]
                    + vdim * np.arange(2)[None, :, None]
                    + np.arange(vdim)[None, None, :]
                ).reshape(len(fel), 1, -1)
                rows.append(
                    np.repeat(rdof[:, :, None], 2 * vdim, axis=2).ravel()
                )
                cols.append(np.repeat(cdof, pdim, axis=1).ravel())
                vals.append(loc.reshape(len(fel), pdim, -1).ravel())
    return (
        np.concatenate(rows),
        np.concatenate(cols),
        np.concatenate(vals),
    )


def assemble(mesh, degree, gamma_c1=PENALTY_C1):
    """Assemble the Stokes operators on a mesh.

    Parameters
    ----------
    mesh : SimplicialMesh
    degree : int
        Velocity degree k (pressure degree k - 1).
    gamma_c1 : float, optional
        Penalty prefactor; the face penalty is gamma_c1 * k^2 / h_E.

    Returns
    -------
    AssembledSystem
    """
    layout = BrokenSpaceLayout(mesh, degree)
    gamma = float(gamma_c1) * degree**2
    rule = segment_rule(2 * degree + 1)

    srows, scols, svals = _scalar_sip(mesh, layout, gamma, rule)
    vdim = layout.vdim
    ns = mesh.num_elements * vdim
    S = sp.coo_matrix((svals, (srows, scols)), shape=(ns, ns)).tocsr()
    S = (0.5 * (S + S.T)).tocsr()

    # scatter the scalar operator into both component blocks
    Sc = S.tocoo()
    elem_r, loc_r = Sc.row // vdim, Sc.row % vdim
    elem_c, loc_c = Sc.col // vdim, Sc.col % vdim
    rows = np.concatenate([
        2 * vdim * elem_r + comp * vdim + loc_r for comp in (0, 1)
    ])
    cols = np.concatenate([
        2 * vdim * elem_c + comp * vdim + loc_c for comp in (0, 1)
    ])
    vals = np.concatenate([Sc.data, Sc.data])
    nu = layout.num_velocity
    A = sp.coo_matrix((vals, (rows, cols)), shape=(nu, nu)).tocsr()

    brows, bcols, bvals = _divergence(mesh, layout, rule)
    B = sp.coo_matrix(
        (bvals, (brows, bcols)), shape=(layout.num_pressure, nu)
    ).tocsr()

    _, _, _, det = affine_maps(mesh)
    M = sp.diags(np.repeat(det, 2 * vdim), format="csr")

    vol = triangle_rule(2 * degree)
    pint = vol.weights @ layout.pressure_basis.eval(vol.points)
    c = (det[:, None] * pint[None, :]).ravel()

    return AssembledSystem(A, B, M, c, S, layout, gamma)


def assemble_load(mesh, layout, f, order=None):
    """Moments of a velocity load against the broken basis.

    Parameters
    ----------
    f : callable
        Maps an (n, 2) array of points to an (n, 2) array of load
        values.
    order : int, optional
        Quadrature order, default 2k + 2.

    Returns
    -------
    ndarray, (num_velocity,)
    """
    if order is None:
        order = 2 * layout.degree + 2
    vol = triangle_rule(order)
    origin, jac, _, det = affine_maps(mesh)
    pts = origin[:, None, :] + np.einsum(
        "ecd,qd->eqc", jac, vol.points
    )
    shape = pts.shape
    fv = np.asarray(f(pts.reshape(-1, 2))).reshape(shape)
    V = layout.velocity_basis.eval(vol.points)
    load = np.einsum("q,e,eqc,qi->eci", vol.weights, det, fv, V)
    return load.reshape(-1)


def write_matrix_market(system, outdir):
    """Dump A, B, M and c of a system in Matrix Market format."""
    import os
    from scipy.io import mmwrite

    os.makedirs(outdir, exist_ok=True)
    mmwrite(os.path.join(outdir, "A.mtx"), system.A)
    mmwrite(os.path.join(outdir, "B.mtx"), system.B)
    mmwrite(os.path.join(outdir, "M.mtx"), system.M)
    mmwrite(os.path.join(outdir, "c.mtx"), system.c.reshape(-1, 1))
