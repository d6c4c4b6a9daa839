"""Residual a posteriori error indicators for discrete Stokes eigenpairs.

Each element accumulates three squared contributions: the strong-form
volume residual of the momentum and mass equations, the normal-stress
jumps across interior faces, and the penalty-weighted velocity jumps.
Their sum is the local indicator that drives adaptive marking, and the
square root of the global sum estimates the energy error of the
eigenpair.

Stress jumps carry a 1/2 so the two elements sharing a face split that
face's contribution evenly.  Velocity jumps are charged in full to both
neighbors, which double-counts interior jump energy across the mesh;
``half_interior`` switches to the symmetric splitting.  The choice only
rescales interior-face contributions, so it moves marking thresholds
but not asymptotic rates.

All quadrature is exact: every integrand is a squared polynomial of
total degree at most 2k, integrated with a rule of that order.
"""

import numpy as np

from .assembly import face_traces
from .mesh import affine_maps
from .space import segment_rule, triangle_rule


class IndicatorField:
    """Per-element squared indicators of one discrete eigenpair.

    Attributes
    ----------
    eta2_R : ndarray, (nt,)
        Squared volume residuals.
    eta2_E : ndarray, (nt,)
        Squared interior stress-jump terms.
    eta2_J : ndarray, (nt,)
        Squared penalty-weighted velocity-jump terms.
    eta2 : ndarray, (nt,)
        Elementwise sum of the three parts.
    total : float
        Global estimate, the square root of ``eta2.sum()``.
    """

    def __init__(self, eta2_R, eta2_E, eta2_J):
        self.eta2_R = np.asarray(eta2_R, dtype=float)
        self.eta2_E = np.asarray(eta2_E, dtype=float)
        self.eta2_J = np.asarray(eta2_J, dtype=float)
        self.eta2 = self.eta2_R + self.eta2_E + self.eta2_J

    @property
    def total(self):
        return float(np.sqrt(self.eta2.sum()))

    def __len__(self):
        return len(self.eta2)


def element_residual(layout, lam, u, p):
    """Squared volume residuals of a velocity-pressure pair.

    For each element this is

        h^2 * int |lam u + Lap u - grad p|^2  +  int (div u)^2

    with h the element diameter and all derivatives taken exactly on
    the modal expansion.

    Parameters
    ----------
    layout : BrokenSpaceLayout
    lam : float
        Eigenvalue paired with the fields.
    u : ndarray, (num_velocity,)
        Velocity coefficients.
    p : ndarray, (num_pressure,)
        Pressure coefficients.

    Returns
    -------
    ndarray, (nt,)
    """
    mesh = layout.mesh
    nt = mesh.num_elements
    U = np.reshape(u, (nt, 2, layout.vdim))
    P = np.reshape(p, (nt, layout.pdim))
    rule = triangle_rule(2 * layout.degree)
    _, _, inv_jac, det = affine_maps(mesh)

    vb = layout.velocity_basis
    val = vb.eval(rule.points)
    hess = vb.hess(rule.points)
    pgrad = layout.pressure_basis.grad(rule.points)

    uval = np.einsum("eci,qi->eqc", U, val)
    lap = np.einsum("qicd,eca,eda->eqi", hess, inv_jac, inv_jac)
    ulap = np.einsum("eci,eqi->eqc", U, lap)
    gp = np.einsum("ej,qjc,eca->eqa", P, pgrad, inv_jac)
    res = lam * uval + ulap - gp

    gv = np.einsum("qic,eca->eqia", vb.grad(rule.points), inv_jac)
    div = np.einsum("eci,eqic->eq", U, gv)

    w = rule.weights
    momentum = np.einsum("q,eqc,eqc->e", w, res, res)
    mass = np.einsum("q,eq,eq->e", w, div, div)
    return det * (mesh.diameters**2 * momentum + mass)


def face_residual(layout, u, p):
    """Squared interior stress-jump terms, halved per adjacent element.

    Each interior face contributes

        1/2 * h_E * int_E | [[ p I - grad u ]] |^2

    to both of its elements, where the jump of a matrix field is its
    normal trace difference.  Boundary faces contribute nothing.

    Parameters
    ----------
    layout : BrokenSpaceLayout
    u, p : ndarray
        Velocity and pressure coefficients.

    Returns
    -------
    ndarray, (nt,)
    """
    mesh = layout.mesh
    nt = mesh.num_elements
    U = np.reshape(u, (nt, 2, layout.vdim))
    P = np.reshape(p, (nt, layout.pdim))
    eta2 = np.zeros(nt)
    interior = ~mesh.boundary_mask
    if not interior.any():
        return eta2

    rule = segment_rule(2 * layout.degree)
    V, G, _ = face_traces(mesh, layout.velocity_basis, rule)
    Q, _, _ = face_traces(mesh, layout.pressure_basis, rule)
    e0 = mesh.face_elems[interior, 0]
    e1 = mesh.face_elems[interior, 1]
    nrm = mesh.face_normals[interior]

    dgrad = np.einsum("fci,fqia->fqca", U[e0], G[0][interior]) \
        - np.einsum("fci,fqia->fqca", U[e1], G[1][interior])
    dp = np.einsum("fj,fqj->fq", P[e0], Q[0][interior]) \
        - np.einsum("fj,fqj->fq", P[e1], Q[1][interior])
    jump = dp[:, :, None] * nrm[:, None, :] \
        - np.einsum("fqca,fa->fqc", dgrad, nrm)

    h = mesh.face_lengths[interior]
    vals = 0.5 * h**2 * np.einsum("q,fqc,fqc->f", rule.weights, jump, jump)
    np.add.at(eta2, e0, vals)
    np.add.at(eta2, e1, vals)
    return eta2


def _squared_jumps(layout, u):
    """Per-face mean squared velocity jumps.

    Returns the parameterized face integrals sum_q w_q |jump|^2, which
    equal the physical integrals divided by the face length, for the
    interior and boundary face subsets separately.
    """
    mesh = layout.mesh
    nt = mesh.num_elements
    U = np.reshape(u, (nt, 2, layout.vdim))
    rule = segment_rule(2 * layout.degree)
    V, _, _ = face_traces(mesh, layout.velocity_basis, rule)
    interior = ~mesh.boundary_mask
    boundary = mesh.boundary_mask

    du = np.einsum("fci,fqi->fqc", U[mesh.face_elems[interior, 0]],
                   V[0][interior]) \
        - np.einsum("fci,fqi->fqc", U[mesh.face_elems[interior, 1]],
                    V[1][interior])
    ub = np.einsum("fci,fqi->fqc", U[mesh.face_elems[boundary, 0]],
                   V[0][boundary])
    w = rule.weights
    val_int = np.einsum("q,fqc,fqc->f", w, du, du)
    val_bnd = np.einsum("q,fqc,fqc->f", w, ub, ub)
    return interior, boundary, val_int, val_bnd


def jump_indicator(layout, u, gamma, half_interior=False):
    """Squared penalty-weighted velocity jumps per element.

    Every face of an element contributes gamma/h_E times the squared
    face jump of the velocity; on boundary faces the jump is the trace
    itself.  Interior faces are charged in full to both neighbors
    unless ``half_interior`` asks for the even split.

    Parameters
    ----------
    layout : BrokenSpaceLayout
    u : ndarray, (num_velocity,)
        Velocity coefficients.
    gamma : float
        Penalty coefficient, the same value the operators were
        assembled with.
    half_interior : bool, optional
        Charge interior faces half to each neighbor instead.

    Returns
    -------
    ndarray, (nt,)
    """
    mesh = layout.mesh
    interior, boundary, val_int, val_bnd = _squared_jumps(layout, u)
    eta2 = np.zeros(mesh.num_elements)
    weight = 0.5 * gamma if half_interior else gamma
    np.add.at(eta2, mesh.face_elems[interior, 0], weight * val_int)
    np.add.at(eta2, mesh.face_elems[interior, 1], weight * val_int)
    np.add.at(eta2, mesh.face_elems[boundary, 0], gamma * val_bnd)
    return eta2


def jump_energy(layout, u, gamma):
    """Penalty energy of the velocity jumps, counted once per face.

    Returns
    -------
    (float, float)
        Interior-face and boundary-face totals of
        gamma/h_E * int_E |jump|^2.
    """
    _, _, val_int, val_bnd = _squared_jumps(layout, u)
    return gamma * val_int.sum(), gamma * val_bnd.sum()


def estimate(system, lam, u, p, half_interior_jump=False):
    """Assemble the full indicator field of one eigenpair.

    Parameters
    ----------
    system : AssembledSystem
        Provides the layout and the penalty coefficient.
    lam : float
    u : ndarray, (num_velocity,)
    p : ndarray, (num_pressure,)
    half_interior_jump : bool, optional
        Passed through to the velocity-jump term.

    Returns
    -------
    IndicatorField
    """
    layout = system.layout
    return IndicatorField(
        element_residual(layout, lam, u, p),
        face_residual(layout, u, p),
        jump_indicator(layout, u, system.gamma,
                       half_interior=half_interior_jump),
    )


def write_indicator_csv(path, field):
    """Dump an indicator field as CSV, one row per element."""
    table = np.column_stack([
        np.arange(len(field.eta2)),
        field.eta2_R,
        field.eta2_E,
        field.eta2_J,
        field.eta2,
    ])
    np.savetxt(
        path,
        table,
        fmt=["%d", "%.17e", "%.17e", "%.17e", "%.17e"],
        delimiter=",",
        header="element_id,eta2_R,eta2_E,eta2_J,eta2",
        comments="",
    )
