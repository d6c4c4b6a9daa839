"""Direct and eigenvalue solvers for the discrete Stokes system.

The pressure gauge is fixed by pinning one pressure coefficient instead
of appending a dense zero-mean constraint row: the dropped equation is
implied by the others (constants lie in the left kernel of the
divergence operator), and reported pressures are shifted to zero mean
afterwards, which changes neither velocities nor eigenvalues.

Two solution paths share this setup.  Small problems factor the pinned
saddle-point matrix once and run shift-invert Lanczos at shift zero, so
the smallest Stokes eigenvalues become the dominant ones of the inverse
applied to the singular mass block.  That factorization grows too fat
beyond a few times 1e4 unknowns, so large problems switch to a subspace
method that never factors the indefinite matrix: the velocity operator
splits into two copies of the scalar interior-penalty matrix (factored
once, at half size), the mass matrix is diagonal, and the mass-weighted
pressure Schur complement B M^-1 B^T (sparse, pressure-sized) yields an
exact projector onto discretely divergence-free velocity fields.
Block-preconditioned LOBPCG on that subspace, with the exact velocity
solve as preconditioner, converges in a few dozen applications.  Both
paths enforce identical normalization, filtering and residual contracts
and agree to solver precision where they overlap.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

_EIG_SEED = 8371
_DIRECT_LIMIT = 30000


class SolverError(Exception):
    """Raised when a linear or eigenvalue solve cannot be trusted."""


class SourceSolution:
    """Velocity, pressure and gauge multiplier of one source solve."""

    def __init__(self, u, p, multiplier, residual):
        self.u = u
        self.p = p
        self.multiplier = multiplier
        self.residual = residual


class EigenSolution:
    """Eigenpairs of the discrete Stokes operator.

    Attributes
    ----------
    values : ndarray, (nev,)
        Eigenvalues in ascending order.
    velocities : ndarray, (nev, num_velocity)
        Velocity coefficients, normalized to u^T M u = 1 with the
        largest-magnitude coefficient positive.
    pressures : ndarray, (nev, num_pressure)
        Pressure coefficients with zero mean.
    residuals : ndarray, (nev,)
        Relative algebraic residuals of the full saddle-point system.
    filtered : ndarray
        Eigenvalues discarded by the spurious-mode filter.
    """

    def __init__(self, values, velocities, pressures, residuals, filtered):
        self.values = values
        self.velocities = velocities
        self.pressures = pressures
        self.residuals = residuals
        self.filtered = filtered


class _Workspace:
    """Lazily built factorizations attached to one assembled system."""

    def __init__(self, system):
        self.system = system
        lay = system.layout
        self.nu = lay.num_velocity
        self.npr = lay.num_pressure
        self.vdim = lay.vdim
        self.nt = self.nu // (2 * lay.vdim)
        self.mdiag = system.M.diagonal()
        self.minv = 1.0 / self.mdiag
        self.msqrt = np.sqrt(self.mdiag)
        self.misqrt = 1.0 / self.msqrt
        # coefficients of the constant pressure 1, and the domain area
        self.p_const = np.zeros(self.npr)
        self.p_const[0 :: lay.pdim] = 2.0**-0.5
        self.area = system.c @ self.p_const
        self._s_lu = None
        self._sm_lu = None
        self._saddle_lu = None
        self._schur_op = None
        self._pmass = None

    @property
    def s_lu(self):
        if self._s_lu is None:
            self._s_lu = spla.splu(self.system.A_scalar.tocsc())
        return self._s_lu

    @property
    def sm_lu(self):
        if self._sm_lu is None:
            SM = (
                self.system.B @ sp.diags(self.minv) @ self.system.B.T
            ).tocoo()
            self._sm_lu = spla.splu(_pin_dof(SM, 0).tocsc())
        return self._sm_lu

    @property
    def saddle_lu(self):
        if self._saddle_lu is None:
            K = sp.bmat(
                [[self.system.A, self.system.B.T], [self.system.B, None]],
                format="coo",
            )
            self._saddle_lu = spla.splu(_pin_dof(K, self.nu).tocsc())
        return self._saddle_lu

    def a_solve(self, rhs):
        """Apply the exact inverse of A, one scalar solve per component."""
        single = rhs.ndim == 1
        R = rhs.reshape(self.nu, -1)
        m = R.shape[1]
        X = R.reshape(self.nt, 2, self.vdim, m)
        out = np.empty_like(X)
        for comp in (0, 1):
            sol = self.s_lu.solve(
                np.ascontiguousarray(X[:, comp]).reshape(-1, m)
            )
            out[:, comp] = sol.reshape(self.nt, self.vdim, m)
        out = out.reshape(self.nu, m)
        return out[:, 0] if single else out

    def sm_solve(self, g):
        """Solve the pinned mass-weighted pressure Schur complement."""
        g = np.array(g, copy=True)
        g[0] = 0.0
        return self.sm_lu.solve(g)

    def project(self, v):
        """M-orthogonal projection onto discretely divergence-free fields."""
        q = self.sm_solve(self.system.B @ v)
        w = self.system.B.T @ q
        if v.ndim == 1:
            return v - self.minv * w
        return v - self.minv[:, None] * w

    def _scale(self, d, v):
        return d * v if v.ndim == 1 else d[:, None] * v

    def project_y(self, y):
        """Orthogonal projection onto the constraint null space.

        In the mass-scaled variables y = M^(1/2) u the divergence
        constraint reads (B M^(-1/2)) y = 0 and the Euclidean projector
        onto its null space is symmetric; the Gram matrix of the scaled
        constraint rows is again the mass-weighted Schur complement.
        """
        q = self.sm_solve(self.system.B @ self._scale(self.misqrt, y))
        return y - self._scale(self.misqrt, self.system.B.T @ q)

    def apply_ay(self, y):
        """Mass-scaled velocity operator M^(-1/2) A M^(-1/2)."""
        return self._scale(
            self.misqrt, self.system.A @ self._scale(self.misqrt, y)
        )

    @property
    def schur_op(self):
        """Velocity-weighted pressure Schur complement B A^-1 B^T."""
        if self._schur_op is None:
            B = self.system.B

            def apply(q):
                return B @ self.a_solve(B.T @ q)

            self._schur_op = spla.LinearOperator(
                (self.npr, self.npr), matvec=apply
            )
        return self._schur_op

    @property
    def pmass_precond(self):
        """Inverse diagonal pressure mass, (2 area) per element."""
        if self._pmass is None:
            det = self.mdiag[0 :: 2 * self.vdim]
            self._pmass = np.repeat(det, self.system.layout.pdim)
        pmass = self._pmass
        return spla.LinearOperator(
            (self.npr, self.npr), matvec=lambda q: q / pmass
        )

    def constrained_solve(self, f, rtol, maxiter=200):
        """Solve A u + B^T p = f with B u = 0 by Schur-complement CG.

        The conjugate gradient iteration runs on B A^-1 B^T with exact
        velocity solves; the diagonal pressure mass preconditioner
        keeps its iteration count bounded independently of the mesh.
        """
        B = self.system.B
        w = self.a_solve(f)
        s, info = spla.cg(
            self.schur_op, B @ w, M=self.pmass_precond,
            rtol=rtol, atol=0.0, maxiter=maxiter,
        )
        if info != 0:
            raise SolverError(
                "Schur-complement CG stalled (info=%d)" % info
            )
        return w - self.a_solve(B.T @ s), s

    def recover_pressure(self, lam, u):
        """Pressure of an eigenpair from its velocity and eigenvalue.

        The momentum equation gives B^T p = lam M u - A u; applying
        B M^-1 turns that into a pressure Schur system.  The result is
        gauged at the pinned coefficient, not yet at zero mean.
        """
        rhs = self.system.B @ (lam * u - self.minv * (self.system.A @ u))
        return self.sm_solve(rhs)

    def mean_zero(self, p):
        """Shift a pressure vector to zero mean; leaves B^T p unchanged."""
        return p - (self.system.c @ p / self.area) * self.p_const

    def residual(self, lam, u, p):
        """Relative saddle-point residual of one eigenpair."""
        r1 = self.system.A @ u + self.system.B.T @ p
        k1 = np.linalg.norm(r1)
        r1 = r1 - lam * (self.mdiag * u)
        r2 = self.system.B @ u
        r3 = self.system.c @ p
        num = np.sqrt(r1 @ r1 + r2 @ r2 + r3 * r3)
        den = np.sqrt(k1 * k1 + r2 @ r2 + r3 * r3)
        return num / den


def _pin_dof(coo, idx):
    """Replace row and column idx of a COO matrix by a unit diagonal."""
    keep = (coo.row != idx) & (coo.col != idx)
    rows = np.append(coo.row[keep], idx)
    cols = np.append(coo.col[keep], idx)
    vals = np.append(coo.data[keep], 1.0)
    return sp.coo_matrix((vals, (rows, cols)), shape=coo.shape)


def solve_source(system, load, tol=1e-10):
    """Solve the saddle-point system for a velocity load.

    Small systems solve the pinned matrix directly with one step of
    iterative refinement; large ones run conjugate gradients on the
    pressure Schur complement with exact velocity solves, preconditioned
    by the diagonal pressure mass.

    Parameters
    ----------
    system : AssembledSystem
    load : ndarray, (num_velocity,)
    tol : float, optional
        Acceptable relative residual.

    Returns
    -------
    SourceSolution
        The gauge multiplier is identically zero in the pinned
        formulation and reported as such.
    """
    load = np.asarray(load, dtype=float)
    ws = _Workspace(system)
    if load.shape != (ws.nu,):
        raise ValueError("load vector has wrong length")
    scale = np.linalg.norm(load)
    if scale == 0.0:
        return SourceSolution(np.zeros(ws.nu), np.zeros(ws.npr), 0.0, 0.0)

    if system.layout.num_dof <= _DIRECT_LIMIT:
        rhs = np.concatenate([load, np.zeros(ws.npr)])
        x = ws.saddle_lu.solve(rhs)
        u, p = x[: ws.nu], x[ws.nu :]
        res = _source_residual(system, u, p, load, scale)
        if res > tol:
            r = rhs - _saddle_apply(system, u, p)
            r[ws.nu] = 0.0
            dx = ws.saddle_lu.solve(r)
            u = u + dx[: ws.nu]
            p = p + dx[ws.nu :]
            res = _source_residual(system, u, p, load, scale)
    else:
        u, p, res = _source_schur(system, ws, load, scale, tol)
    if not np.isfinite(res) or res > tol:
        raise SolverError(
            "source solve residual %.3e exceeds tolerance %.3e" % (res, tol)
        )
    return SourceSolution(u, ws.mean_zero(p), 0.0, res)


def _saddle_apply(system, u, p):
    return np.concatenate([system.A @ u + system.B.T @ p, system.B @ u])


def _source_residual(system, u, p, load, scale):
    r1 = system.A @ u + system.B.T @ p - load
    r2 = system.B @ u
    return np.sqrt(r1 @ r1 + r2 @ r2) / scale


def _source_schur(system, ws, load, scale, tol):
    B = system.B
    u = np.zeros(ws.nu)
    p = np.zeros(ws.npr)
    res = np.inf
    for _ in range(3):
        r1 = load - (system.A @ u + system.B.T @ p)
        g = B @ ws.a_solve(r1) + B @ u
        dq, info = spla.cg(
            ws.schur_op, g, M=ws.pmass_precond, rtol=1e-12, atol=0.0,
            maxiter=400,
        )
        if info != 0:
            raise SolverError("Schur-complement CG stalled (info=%d)" % info)
        p = p + dq
        u = ws.a_solve(load - B.T @ p)
        res = _source_residual(system, u, p, load, scale)
        if res <= 0.1 * tol:
            break
    return u, p, res


def _package(system, ws, vals, us, ps, residual_tol, filtered):
    order = np.argsort(vals)
    values = np.asarray(vals, dtype=float)[order]
    velocities = np.empty((len(order), ws.nu))
    pressures = np.empty((len(order), ws.npr))
    residuals = np.empty(len(order))
    for out, idx in enumerate(order):
        u = us[:, idx]
        p = ps[:, idx]
        nrm = np.sqrt(u @ (ws.mdiag * u))
        if nrm == 0.0:
            raise SolverError("eigenvector %d has zero velocity part" % out)
        u = u / nrm
        p = p / nrm
        if u[np.argmax(np.abs(u))] < 0.0:
            u = -u
            p = -p
        p = ws.mean_zero(p)
        velocities[out] = u
        pressures[out] = p
        residuals[out] = ws.residual(values[out], u, p)
    if np.any(residuals > residual_tol):
        raise SolverError(
            "eigenpair residual %.3e exceeds tolerance %.3e"
            % (residuals.max(), residual_tol)
        )
    return EigenSolution(
        values, velocities, pressures, residuals,
        np.asarray(filtered, dtype=float),
    )


def _eigen_direct(system, ws, nev, tol, filter_range, maxiter, initial):
    n = ws.nu + ws.npr
    op_inv = spla.LinearOperator((n, n), matvec=ws.saddle_lu.solve)
    mt = sp.diags(np.concatenate([ws.mdiag, np.zeros(ws.npr)]))
    K = sp.bmat([[system.A, system.B.T], [system.B, None]], format="csr")
    rng = np.random.default_rng(_EIG_SEED)
    v0 = rng.standard_normal(n)
    if initial is not None and len(initial):
        v0[: ws.nu] = np.atleast_2d(initial)[0]
        v0[ws.nu :] = 0.0
    k_req = nev
    for _ in range(2):
        try:
            vals, vecs = spla.eigsh(
                K, k=k_req, M=mt, sigma=0.0, which="LM", v0=v0,
                tol=tol, maxiter=maxiter, OPinv=op_inv,
            )
        except spla.ArpackNoConvergence as exc:
            raise SolverError("eigensolver did not converge: %s" % exc)
        keep = (vals > filter_range[0]) & (vals < filter_range[1])
        if keep.sum() >= nev:
            break
        k_req = nev + int((~keep).sum()) + 2
    filtered = vals[~keep]
    vals = vals[keep]
    vecs = vecs[:, keep]
    if len(vals) < nev:
        raise SolverError(
            "only %d of %d eigenvalues survived the spurious filter"
            % (len(vals), nev)
        )
    sel = np.argsort(vals)[:nev]
    return vals[sel], vecs[: ws.nu, sel], vecs[ws.nu :, sel], filtered


def _drop_small_columns(V, tol=1e-10, ref=None):
    """Orthonormalize the columns of V, discarding dependent ones.

    When ref holds per-column norms recorded before an external
    orthogonalization pass, columns whose remaining norm fell below
    tol times their reference are cancellation remainders.  Keeping
    them would normalize roundoff into unit vectors that are neither
    orthogonal to the previous basis nor inside the constraint null
    space, so they are dropped instead.
    """
    norms = np.linalg.norm(V, axis=0)
    if ref is None:
        scale = norms.max() if len(norms) else 0.0
        if scale == 0.0:
            return V[:, :0]
        keep = norms > tol * scale
    else:
        keep = norms > tol * np.asarray(ref)
    V = V[:, keep]
    if not V.shape[1]:
        return V
    q, r = np.linalg.qr(V)
    diag = np.abs(np.diag(r))
    return q[:, diag > tol * diag.max()]


def _eigen_projected(system, ws, nev, residual_tol, maxiter, initial):
    """Divergence-free block eigensolver in mass-scaled variables.

    The projected operator P (M^-1/2 A M^-1/2) P is symmetric and its
    spectrum on the constraint null space consists exactly of the
    Stokes eigenvalues.  The preconditioner is an inexact constrained
    inverse: one Schur-complement CG solve per residual column at loose
    tolerance, followed by an exact reprojection, which keeps the
    effective condition number bounded by the inf-sup constant rather
    than by the mesh size.  The outer loop is the locally optimal block
    scheme (Rayleigh-Ritz over current iterates, preconditioned
    residuals and previous search directions), written with explicitly
    orthonormalized bases so the attainable residual floor sits at
    machine precision instead of its square root.  Directions that
    cancel against the searched span are dropped by comparing norms
    before and after orthogonalization; normalizing such remainders
    would slowly rotate the basis out of the constraint null space and
    stall the iteration on strongly graded meshes.  Surviving blocks
    are reprojected, so the Ritz values stay above the smallest
    constrained eigenvalue and the residuals keep contracting.
    """
    rng = np.random.default_rng(_EIG_SEED)
    block = min(nev + 1, ws.nu)  # guard vector sharpens the last pair
    budget = maxiter if maxiter is not None else 250

    def apply_c(R):
        return ws.project_y(ws.apply_ay(ws.project_y(R)))

    def precond(R):
        cols = []
        for j in range(R.shape[1]):
            f = ws.msqrt * R[:, j]
            w, _ = ws.constrained_solve(f, rtol=1e-3, maxiter=100)
            cols.append(ws.msqrt * w)
        return ws.project_y(np.column_stack(cols))

    def contract_ok(Y):
        for i in range(nev):
            u = ws.misqrt * ws.project_y(Y[:, i])
            u = u / np.sqrt(u @ (ws.mdiag * u))
            lam = u @ (system.A @ u)
            p = ws.mean_zero(ws.recover_pressure(lam, u))
            if ws.residual(lam, u, p) > 0.2 * residual_tol:
                return False
        return True

    seed = rng.standard_normal((ws.nu, block))
    if initial is not None and len(initial):
        guesses = np.atleast_2d(initial)[:block]
        seed[:, : len(guesses)] = ws.msqrt[:, None] * guesses.T
    X = _drop_small_columns(ws.project_y(seed))
    if X.shape[1] < nev:
        raise SolverError("could not seed enough divergence-free vectors")
    CX = apply_c(X)
    P = np.empty((ws.nu, 0))
    proxy = 1e-5
    for _ in range(budget):
        H = X.T @ CX
        theta, S = np.linalg.eigh(0.5 * (H + H.T))
        X = X @ S
        CX = CX @ S
        R = CX - X * theta
        ynorm = np.linalg.norm(R, axis=0) / np.abs(theta)
        if np.all(ynorm[:nev] < proxy):
            if contract_ok(X):
                break
            proxy *= 0.1
        # correct only columns whose residual still carries signal;
        # normalizing a roundoff-level column would inject junk with
        # near-zero Rayleigh quotient into the search space
        active = ynorm > 1e-12
        if not active.any():
            break
        W = precond(R[:, active])
        wref = np.linalg.norm(W, axis=0)
        for _ in range(2):
            W = W - X @ (X.T @ W)
            if P.shape[1]:
                W = W - P @ (P.T @ W)
        # a correction that lies in the searched span cancels to
        # roundoff here; the reference norms make the drop detect that
        W = _drop_small_columns(W, tol=1e-8, ref=wref)
        if not W.shape[1]:
            break
        W = ws.project_y(W)
        CP = apply_c(P) if P.shape[1] else P
        CW = apply_c(W)
        V = np.hstack([X, P, W])
        CV = np.hstack([CX, CP, CW])
        H = V.T @ CV
        theta, S = np.linalg.eigh(0.5 * (H + H.T))
        nb = X.shape[1]
        S = S[:, :nb]
        Xn = V @ S
        CXn = CV @ S
        Sp = S.copy()
        Sp[:nb, :] = 0.0
        # keep the whole basis orthonormal so the plain eigh above is a
        # valid Rayleigh-Ritz step
        Praw = V @ Sp
        pref = np.linalg.norm(Praw, axis=0)
        for _ in range(2):
            Praw = Praw - Xn @ (Xn.T @ Praw)
        P = _drop_small_columns(Praw, tol=1e-8, ref=pref)
        if P.shape[1]:
            P = ws.project_y(P)
        X, CX = Xn, CXn
    Y = ws.project_y(X)
    us = ws.misqrt[:, None] * Y[:, :nev]
    # report the Rayleigh quotient of the projected velocity; on the
    # constraint null space the pressure term drops out of it, and the
    # quotient is quadratically accurate in the eigenvector error
    lams = np.empty(nev)
    for i in range(nev):
        u = us[:, i]
        lams[i] = (u @ (system.A @ u)) / (u @ (ws.mdiag * u))
    ps = np.column_stack(
        [ws.recover_pressure(lams[i], us[:, i]) for i in range(nev)]
    )
    return lams, us, ps, np.empty(0)


def solve_eigen(system, nev=1, tol=1e-12, residual_tol=1e-8,
                filter_range=(1e-8, 1e12), maxiter=None, method="auto",
                initial=None):
    """Smallest eigenvalues of the discrete Stokes operator.

    Parameters
    ----------
    system : AssembledSystem
    nev : int, optional
        Number of eigenpairs requested.
    tol : float, optional
        Convergence tolerance of the underlying iteration.
    residual_tol : float, optional
        Acceptable relative algebraic residual per returned pair.
    filter_range : pair of float, optional
        Eigenvalues outside this open interval are treated as spurious
        discretization artifacts and dropped.
    maxiter : int, optional
        Iteration budget for the underlying eigensolver.
    method : str, optional
        "direct" factors the saddle matrix and runs shift-invert
        Lanczos, "projected" runs a divergence-free block iteration
        that scales to large meshes, "auto" picks by problem size.
    initial : ndarray, optional
        Velocity coefficient rows used as starting guesses, typically
        eigenvectors transferred from a coarser mesh.  Missing block
        columns are seeded randomly as usual.

    Returns
    -------
    EigenSolution
    """
    if nev < 1:
        raise ValueError("nev must be at least 1")
    if method not in ("auto", "direct", "projected"):
        raise ValueError("unknown eigensolver method %r" % (method,))
    ws = _Workspace(system)
    if method == "auto":
        method = (
            "direct" if system.layout.num_dof <= _DIRECT_LIMIT
            else "projected"
        )
    if method == "direct":
        vals, us, ps, filtered = _eigen_direct(
            system, ws, nev, tol, filter_range, maxiter, initial
        )
    else:
        vals, us, ps, filtered = _eigen_projected(
            system, ws, nev, residual_tol, maxiter, initial
        )
        keep = (vals > filter_range[0]) & (vals < filter_range[1])
        filtered = vals[~keep]
        vals = vals[keep]
        us = us[:, keep]
        ps = ps[:, keep]
        if len(vals) < nev:
            raise SolverError(
                "only %d of %d eigenvalues survived the spurious filter"
                % (len(vals), nev)
            )
    return _package(system, ws, vals, us, ps, residual_tol, filtered)


def rayleigh_quotient(system, u, p):
    """Rayleigh quotient (u^T A u + 2 u^T B^T p) / (u^T M u)."""
    num = u @ (system.A @ u) + 2.0 * (system.B @ u) @ p
    den = u @ (system.M @ u)
    return num / den
