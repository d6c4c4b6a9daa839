"""Broken polynomial spaces on triangles.

Velocity components and pressure live in discontinuous P_k / P_{k-1}
spaces spanned element by element from a single orthonormal modal basis
on the reference triangle T = {x, y >= 0, x + y <= 1}.  Orthonormality
makes every element mass matrix an area-scaled identity, which keeps
the global velocity mass matrix diagonal.

Quadrature rules are built from tensor Gauss rules collapsed onto the
triangle (a Duffy map with a Gauss-Jacobi rule absorbing the Jacobian),
so a rule of requested order integrates all polynomials of that total
degree exactly, with positive weights, at any order.
"""

import math
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_jacobi

from .mesh import affine_maps

MAX_DEGREE = 10
MAX_QUAD_ORDER = 30


def _monomial_powers(degree):
    return [(d - b, b) for d in range(degree + 1) for b in range(d + 1)]


def _monomial_table(points, powers, dx=0, dy=0):
    """Evaluate d^dx/dx^dx d^dy/dy^dy of each monomial at points."""
    pts = np.asarray(points, dtype=float)
    x = pts[..., 0]
    y = pts[..., 1]
    out = np.empty(x.shape + (len(powers),))
    for m, (a, b) in enumerate(powers):
        ca = math.perm(a, dx) if a >= dx else 0
        cb = math.perm(b, dy) if b >= dy else 0
        if ca == 0 or cb == 0:
            out[..., m] = 0.0
        else:
            out[..., m] = (ca * cb) * x ** (a - dx) * y ** (b - dy)
    return out


def _orthonormal_coefficients(powers):
    """Monomial coefficients of the orthonormal basis, via exact LDL^T.

    The monomial Gram matrix int_T x^a y^b = a! b! / (a+b+2)! is built
    in rational arithmetic and factored G = L D L^T exactly, so the only
    rounding in the returned matrix C = D^(-1/2) L^(-1) is one square
    root and one float conversion per entry.
    """
    n = len(powers)
    gram = [
        [
            Fraction(
                math.factorial(a1 + a2) * math.factorial(b1 + b2),
                math.factorial(a1 + a2 + b1 + b2 + 2),
            )
            for (a2, b2) in powers
        ]
        for (a1, b1) in powers
    ]
    low = [[Fraction(i == j) for j in range(n)] for i in range(n)]
    diag = [Fraction(0)] * n
    for j in range(n):
        diag[j] = gram[j][j] - sum(
            low[j][r] * low[j][r] * diag[r] for r in range(j)
        )
        for i in range(j + 1, n):
            low[i][j] = (
                gram[i][j]
                - sum(low[i][r] * low[j][r] * diag[r] for r in range(j))
            ) / diag[j]
    inv = [[Fraction(i == j) for j in range(n)] for i in range(n)]
    for i in range(n):
        for j in range(i):
            inv[i][j] = -sum(low[i][r] * inv[r][j] for r in range(j, i))
    coeff = np.array(
        [[float(inv[i][j]) for j in range(n)] for i in range(n)]
    )
    return coeff / np.sqrt([float(d) for d in diag])[:, None]


class ReferenceBasis:
    """Orthonormal polynomial basis of total degree <= ``degree``.

    Orthonormalization of the monomials is carried out in exact
    rational arithmetic, so the reference mass matrix reproduces the
    identity to a few ulp at the degrees the solver uses.

    Parameters
    ----------
    degree : int
        Polynomial degree, between 0 and 10.
    """

    _coeff_cache = {}

    def __init__(self, degree):
        if not 0 <= degree <= MAX_DEGREE:
            raise ValueError("degree %r outside supported range [0, %d]"
                             % (degree, MAX_DEGREE))
        self.degree = degree
        self.powers = _monomial_powers(degree)
        self.dim = len(self.powers)
        if degree not in self._coeff_cache:
            self._coeff_cache[degree] = _orthonormal_coefficients(self.powers)
        self.coeff = self._coeff_cache[degree]

    def eval(self, points):
        """Basis values, shape ``points.shape[:-1] + (dim,)``."""
        return _monomial_table(points, self.powers) @ self.coeff.T

    def grad(self, points):
        """Basis gradients, shape ``points.shape[:-1] + (dim, 2)``."""
        gx = _monomial_table(points, self.powers, dx=1) @ self.coeff.T
        gy = _monomial_table(points, self.powers, dy=1) @ self.coeff.T
        return np.stack((gx, gy), axis=-1)

    def hess(self, points):
        """Second derivatives, shape ``points.shape[:-1] + (dim, 2, 2)``."""
        hxx = _monomial_table(points, self.powers, dx=2) @ self.coeff.T
        hxy = _monomial_table(points, self.powers, dx=1, dy=1) @ self.coeff.T
        hyy = _monomial_table(points, self.powers, dy=2) @ self.coeff.T
        h = np.stack((hxx, hxy, hxy, hyy), axis=-1)
        return h.reshape(h.shape[:-1] + (2, 2))


class QuadratureRule:
    """Positive quadrature rule, exact for polynomials up to ``order``."""

    def __init__(self, points, weights, order):
        self.points = np.asarray(points, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.order = order

    def __len__(self):
        return len(self.weights)


def segment_rule(order):
    """Gauss-Legendre rule on [0, 1] exact to the given degree."""
    if not 0 <= order <= MAX_QUAD_ORDER:
        raise ValueError("segment rule order %r not available" % (order,))
    m = max(1, (order + 2) // 2)
    t, w = np.polynomial.legendre.leggauss(m)
    return QuadratureRule(0.5 * (t + 1.0), 0.5 * w, order)


def triangle_rule(order):
    """Collapsed tensor rule on the reference triangle.

    Exact for total degree ``order``; the order-1 rule degenerates to
    the one-point centroid rule with weight 1/2.
    """
    if not 0 <= order <= MAX_QUAD_ORDER:
        raise ValueError("triangle rule order %r not available" % (order,))
    m = max(1, (order + 2) // 2)
    xi, wxi = np.polynomial.legendre.leggauss(m)
    xi = 0.5 * (xi + 1.0)
    wxi = 0.5 * wxi
    eta, weta = roots_jacobi(m, 1.0, 0.0)
    eta = 0.5 * (eta + 1.0)
    weta = 0.25 * weta

    X = np.outer(1.0 - eta, xi)
    Y = np.repeat(eta[:, None], m, axis=1)
    W = np.outer(weta, wxi)
    points = np.column_stack((X.ravel(), Y.ravel()))
    return QuadratureRule(points, W.ravel(), order)


class BrokenSpaceLayout:
    """Global numbering for broken P_k velocity / P_{k-1} pressure.

    Velocity unknowns come first, one contiguous block of ``2 * vdim``
    coefficients per element (x component first), followed by one block
    of ``pdim`` pressure coefficients per element.

    Parameters
    ----------
    mesh : SimplicialMesh
    degree : int
        Velocity degree k, one of 1, 2, 3.
    """

    def __init__(self, mesh, degree):
        if degree not in (1, 2, 3):
            raise ValueError("velocity degree must be 1, 2 or 3, got %r"
                             % (degree,))
        self.mesh = mesh
        self.degree = degree
        self.velocity_basis = ReferenceBasis(degree)
        self.pressure_basis = ReferenceBasis(degree - 1)
        self.vdim = self.velocity_basis.dim
        self.pdim = self.pressure_basis.dim
        nt = mesh.num_elements
        self.num_velocity = 2 * nt * self.vdim
        self.num_pressure = nt * self.pdim
        self.num_dof = self.num_velocity + self.num_pressure

    def velocity_dofs(self, elem, component):
        """Global indices of one velocity component on one element."""
        start = 2 * self.vdim * elem + component * self.vdim
        return np.arange(start, start + self.vdim)

    def pressure_dofs(self, elem):
        """Global indices of the pressure block on one element."""
        start = self.num_velocity + self.pdim * elem
        return np.arange(start, start + self.pdim)

    def velocity_view(self, vec):
        """Velocity part of a dof vector as an (nt, 2, vdim) array."""
        nu = self.num_velocity
        return np.asarray(vec)[:nu].reshape(-1, 2, self.vdim)

    def pressure_view(self, vec):
        """Pressure part of a dof vector as an (nt, pdim) array."""
        nu = self.num_velocity
        return np.asarray(vec)[nu:nu + self.num_pressure].reshape(
            -1, self.pdim)


class EdgeTraces:
    """Tabulated basis traces on the three reference edges.

    For each local edge and each running direction the table stores the
    basis values and reference gradients at the segment quadrature
    points, so face assembly only needs lookups plus one Jacobian
    transform per element side.  Edge i runs opposite local vertex i;
    direction 1 traverses it backwards.
    """

    _corners = np.array([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)])

    def __init__(self, basis, rule):
        self.rule = rule
        self.values = {}
        self.grads = {}
        t = rule.points
        for edge in range(3):
            a = self._corners[(edge + 1) % 3]
            b = self._corners[(edge + 2) % 3]
            for rev in (0, 1):
                s = 1.0 - t if rev else t
                pts = a[None, :] + s[:, None] * (b - a)[None, :]
                self.values[edge, rev] = basis.eval(pts)
                self.grads[edge, rev] = basis.grad(pts)


def _block_transfer(t, par, dim, ncomp, num_coarse):
    """Assemble per-element transfer blocks into a global sparse map."""
    nf = t.shape[0]
    i = np.arange(dim)
    rows, cols, data = [], [], []
    for comp in range(ncomp):
        r = (ncomp * dim) * np.arange(nf)[:, None, None] \
            + comp * dim + i[None, :, None]
        c = (ncomp * dim) * par[:, None, None] + comp * dim + i[None, None, :]
        rows.append(np.broadcast_to(r, t.shape).ravel())
        cols.append(np.broadcast_to(c, t.shape).ravel())
        data.append(t.ravel())
    return sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nf * ncomp * dim, num_coarse * ncomp * dim),
    )


def prolongation_matrices(coarse, fine):
    """Exact transfer operators from a space to one on a refined mesh.

    Broken polynomials survive bisection unchanged, so transferring a
    coarse field means reexpanding the parent polynomial on each child:
    every fine coefficient is the reference inner product of a fine
    basis function with the parent polynomial pulled back through both
    affine maps.  A quadrature rule of twice the polynomial degree
    makes that inner product exact, hence the transfer reproduces the
    coarse field pointwise.

    Parameters
    ----------
    coarse, fine : BrokenSpaceLayout
        Layouts of equal degree; ``fine.mesh`` must descend from
        ``coarse.mesh``, with ``parent`` filled in.

    Returns
    -------
    Pv : csr_matrix, (fine.num_velocity, coarse.num_velocity)
        Velocity coefficient transfer, both components.
    Pp : csr_matrix, (fine.num_pressure, coarse.num_pressure)
        Pressure coefficient transfer.
    """
    if coarse.degree != fine.degree:
        raise ValueError("layouts have different polynomial degree")
    par = fine.mesh.parent
    if (par < 0).any() or par.max() >= coarse.mesh.num_elements:
        raise ValueError("fine mesh does not descend from the coarse mesh")
    rule = triangle_rule(2 * coarse.degree)
    o_f, j_f, _, _ = affine_maps(fine.mesh)
    o_c, _, ji_c, _ = affine_maps(coarse.mesh)
    phys = o_f[:, None, :] + rule.points[None, :, :] @ np.swapaxes(j_f, 1, 2)
    back = np.einsum("fab,fqb->fqa", ji_c[par], phys - o_c[par][:, None, :])
    blocks = []
    for basis in (fine.velocity_basis, fine.pressure_basis):
        ref = basis.eval(rule.points)
        moved = basis.eval(back.reshape(-1, 2)).reshape(
            fine.mesh.num_elements, len(rule), -1
        )
        blocks.append(np.einsum("q,qi,fqj->fij", rule.weights, ref, moved))
    nc = coarse.mesh.num_elements
    pv = _block_transfer(blocks[0], par, fine.vdim, 2, nc)
    pp = _block_transfer(blocks[1], par, fine.pdim, 1, nc)
    return pv, pp
