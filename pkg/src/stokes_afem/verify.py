"""Manufactured solutions, reference values and convergence rates.

The manufactured case drives the source-problem verification: a
divergence-free velocity built from a polynomial stream function with
double zeros on the boundary of the unit square, paired with a
zero-mean pressure.  Its forcing is a degree-five polynomial, so load
moments of modest quadrature order are exact and measured convergence
rates are free of data pollution.

Error measurement follows the discrete energy norm of the method:
broken gradients plus the penalty-weighted squared velocity jumps.
The exact solution is continuous with zero boundary trace, so the jump
part of the error is the jump part of the discrete field alone.
"""

import types

import numpy as np

from .assembly import face_traces
from .estimator import jump_energy
from .mesh import affine_maps
from .space import segment_rule, triangle_rule

REFERENCE_EIGENVALUES = types.MappingProxyType({
    "square": 52.344691168,
    "lshape": 32.13269465,
    "slit": 29.9168629,
})
"""Benchmark values of the smallest Stokes eigenvalue per domain.

Commonly cited reference values for the three model domains; every
eigenvalue comparison in the test suite and the command line runs is
made against this registry.  The mapping is read-only.
"""


def _factors(t):
    """The quartic bump t^2 (1-t)^2 and its first three derivatives."""
    b = t * t * (1.0 - t) ** 2
    b1 = 2.0 * t - 6.0 * t**2 + 4.0 * t**3
    b2 = 2.0 - 12.0 * t + 12.0 * t**2
    b3 = -12.0 + 24.0 * t
    return b, b1, b2, b3


class ManufacturedCase:
    """Closed-form Stokes solution on the unit square.

    The velocity is the curl of the stream function
    ``x^2 (1-x)^2 y^2 (1-y)^2`` and the pressure is ``x y - 1/4``;
    the forcing is the momentum residual of that pair.

    Attributes
    ----------
    name : str
    domain : str
        Mesh generator key of the domain the case lives on.
    """

    name = "MS1"
    domain = "square"

    def velocity(self, pts):
        """Exact velocity at an (n, 2) array of points."""
        pts = np.asarray(pts, dtype=float)
        X, Xp, _, _ = _factors(pts[..., 0])
        Y, Yp, _, _ = _factors(pts[..., 1])
        return np.stack((X * Yp, -Xp * Y), axis=-1)

    def velocity_gradient(self, pts):
        """Exact velocity Jacobian, shape ``pts.shape[:-1] + (2, 2)``."""
        pts = np.asarray(pts, dtype=float)
        X, Xp, Xpp, _ = _factors(pts[..., 0])
        Y, Yp, Ypp, _ = _factors(pts[..., 1])
        g = np.empty(pts.shape[:-1] + (2, 2))
        g[..., 0, 0] = Xp * Yp
        g[..., 0, 1] = X * Ypp
        g[..., 1, 0] = -Xpp * Y
        g[..., 1, 1] = -Xp * Yp
        return g

    def pressure(self, pts):
        """Exact pressure at an (n, 2) array of points."""
        pts = np.asarray(pts, dtype=float)
        return pts[..., 0] * pts[..., 1] - 0.25

    def forcing(self, pts):
        """Momentum forcing -Lap u + grad p of the exact pair."""
        pts = np.asarray(pts, dtype=float)
        X, Xp, Xpp, Xppp = _factors(pts[..., 0])
        Y, Yp, Ypp, Yppp = _factors(pts[..., 1])
        f1 = -(Xpp * Yp + X * Yppp) + pts[..., 1]
        f2 = Xppp * Y + Xp * Ypp + pts[..., 0]
        return np.stack((f1, f2), axis=-1)


def manufactured_case(name="MS1"):
    """Look up a manufactured solution by name."""
    if name != "MS1":
        raise ValueError("unknown manufactured case %r" % (name,))
    return ManufacturedCase()


def _physical_points(mesh, rule):
    origin, jac, _, det = affine_maps(mesh)
    pts = origin[:, None, :] + np.einsum("ecd,qd->eqc", jac, rule.points)
    return pts, det


def project_velocity(layout, func, order=None):
    """Broken L2 projection of a velocity field.

    In the orthonormal modal basis each coefficient is a plain
    reference-element moment, so the projection needs no mass solve.

    Parameters
    ----------
    layout : BrokenSpaceLayout
    func : callable
        Maps (n, 2) points to (n, 2) values.
    order : int, optional
        Quadrature order, default 2k + 2; must cover the product of
        the field and the basis for the projection to be exact.

    Returns
    -------
    ndarray, (num_velocity,)
    """
    if order is None:
        order = 2 * layout.degree + 2
    rule = triangle_rule(order)
    pts, _ = _physical_points(layout.mesh, rule)
    fv = np.asarray(func(pts.reshape(-1, 2))).reshape(pts.shape)
    V = layout.velocity_basis.eval(rule.points)
    return np.einsum("q,eqc,qi->eci", rule.weights, fv, V).reshape(-1)


def project_pressure(layout, func, order=None):
    """Broken L2 projection of a scalar field onto the pressure space."""
    if order is None:
        order = 2 * layout.degree + 2
    rule = triangle_rule(order)
    pts, _ = _physical_points(layout.mesh, rule)
    fv = np.asarray(func(pts.reshape(-1, 2))).reshape(pts.shape[:2])
    Q = layout.pressure_basis.eval(rule.points)
    return np.einsum("q,eq,qj->ej", rule.weights, fv, Q).reshape(-1)


def dg_error(layout, u, p, case, gamma, order=None):
    """Energy-norm velocity error and L2 pressure error.

    The squared velocity error is the broken-gradient mismatch plus
    the penalty-weighted squared jumps of the discrete field; the
    pressure error is measured after removing the mean of the
    difference.

    Parameters
    ----------
    layout : BrokenSpaceLayout
    u, p : ndarray
        Discrete velocity and pressure coefficients.
    case : ManufacturedCase
    gamma : float
        Penalty coefficient of the assembled operators.
    order : int, optional
        Volume quadrature order for the exact part, default 2k + 2.

    Returns
    -------
    (float, float)
    """
    if order is None:
        order = 2 * layout.degree + 2
    mesh = layout.mesh
    nt = mesh.num_elements
    rule = triangle_rule(order)
    pts, det = _physical_points(mesh, rule)
    _, _, inv_jac, _ = affine_maps(mesh)

    U = np.reshape(u, (nt, 2, layout.vdim))
    gphys = np.einsum("qic,eca->eqia", layout.velocity_basis.grad(rule.points),
                      inv_jac)
    gh = np.einsum("eci,eqia->eqca", U, gphys)
    diff = case.velocity_gradient(pts) - gh
    grad2 = np.einsum("q,e,eqca,eqca->", rule.weights, det, diff, diff)
    jump_int, jump_bnd = jump_energy(layout, u, gamma)

    P = np.reshape(p, (nt, layout.pdim))
    ph = np.einsum("ej,qj->eq", P, layout.pressure_basis.eval(rule.points))
    perr = case.pressure(pts) - ph
    area = mesh.areas.sum()
    mean = np.einsum("q,e,eq->", rule.weights, det, perr) / area
    perr -= mean
    pl2 = np.einsum("q,e,eq,eq->", rule.weights, det, perr, perr)
    return float(np.sqrt(grad2 + jump_int + jump_bnd)), float(np.sqrt(pl2))


def velocity_l2_error(layout, u, case, order=None):
    """L2 velocity error against the exact field."""
    if order is None:
        order = 2 * layout.degree + 2
    mesh = layout.mesh
    rule = triangle_rule(order)
    pts, det = _physical_points(mesh, rule)
    U = np.reshape(u, (mesh.num_elements, 2, layout.vdim))
    uh = np.einsum("eci,qi->eqc", U, layout.velocity_basis.eval(rule.points))
    diff = case.velocity(pts) - uh
    return float(np.sqrt(
        np.einsum("q,e,eqc,eqc->", rule.weights, det, diff, diff)
    ))


def exact_weak_action(layout, case, order=None):
    """Moments of the exact solution under the discrete bilinear forms.

    Component i of the result is the velocity form plus the coupling
    form of the exact pair against basis function i.  Because the
    exact velocity is continuous with zero boundary trace, its jumps
    and the penalty drop out, leaving broken gradients, the pressure
    divergence coupling, and average-against-jump face terms.  Up to
    quadrature this equals the load moments of the forcing, which is
    the consistency identity behind the method.

    Parameters
    ----------
    layout : BrokenSpaceLayout
    case : ManufacturedCase
    order : int, optional
        Quadrature order, default 2k + 4.

    Returns
    -------
    ndarray, (num_velocity,)
    """
    if order is None:
        order = 2 * layout.degree + 4
    mesh = layout.mesh
    nt = mesh.num_elements
    rule = triangle_rule(order)
    pts, det = _physical_points(mesh, rule)
    _, _, inv_jac, _ = affine_maps(mesh)

    gphys = np.einsum("qic,eca->eqia", layout.velocity_basis.grad(rule.points),
                      inv_jac)
    gex = case.velocity_gradient(pts)
    pex = case.pressure(pts)
    out = np.einsum("q,e,eqca,eqia->eci", rule.weights, det, gex, gphys)
    out -= np.einsum("q,e,eq,eqic->eci", rule.weights, det, pex, gphys)

    frule = segment_rule(order)
    V, _, fpts = face_traces(mesh, layout.velocity_basis, frule)
    gradn = np.einsum("fqca,fa->fqc", case.velocity_gradient(fpts),
                      mesh.face_normals)
    pf = case.pressure(fpts)
    flux = pf[:, :, None] * mesh.face_normals[:, None, :] - gradn
    interior = ~mesh.boundary_mask
    sgn = (1.0, -1.0)
    for mask, sides in ((interior, (0, 1)), (mesh.boundary_mask, (0,))):
        if not mask.any():
            continue
        h = mesh.face_lengths[mask]
        for s in sides:
            block = np.einsum("f,q,fqc,fqi->fci", sgn[s] * h, frule.weights,
                              flux[mask], V[s][mask])
            np.add.at(out, mesh.face_elems[mask, s], block)
    return out.reshape(-1)


def eoc(errors, h=None, dofs=None):
    """Empirical orders of convergence between consecutive levels.

    With mesh sizes the slope is the usual log-ratio; with degrees of
    freedom it is rescaled by the dimension (two) so the numbers are
    comparable to polynomial degrees.

    Parameters
    ----------
    errors : sequence of positive floats, length >= 2
    h : sequence, optional
        Mesh sizes per level.
    dofs : sequence, optional
        Degrees of freedom per level; pass exactly one of ``h`` and
        ``dofs``.

    Returns
    -------
    list of float, one slope per consecutive pair
    """
    errors = np.asarray(errors, dtype=float)
    if errors.ndim != 1 or len(errors) < 2:
        raise ValueError("need at least two error values")
    if (errors <= 0.0).any():
        raise ValueError("errors must be positive")
    if (h is None) == (dofs is None):
        raise ValueError("pass exactly one of h and dofs")
    ratio = np.log(errors[:-1] / errors[1:])
    if h is not None:
        h = np.asarray(h, dtype=float)
        if h.shape != errors.shape:
            raise ValueError("h and errors must have equal length")
        return list(ratio / np.log(h[:-1] / h[1:]))
    dofs = np.asarray(dofs, dtype=float)
    if dofs.shape != errors.shape:
        raise ValueError("dofs and errors must have equal length")
    return list(2.0 * ratio / np.log(dofs[1:] / dofs[:-1]))
