"""Doerfler marking and the adaptive eigenvalue loop.

One iteration assembles the operators on the current mesh, solves for
the leading eigenpairs, evaluates the residual indicators, marks a
minimal element set holding the requested share of the squared
estimator, and bisects.  Eigenvector coefficients are carried to the
refined mesh through the exact broken-space transfer, which warm
starts the next eigensolve.

The loop records one trace entry per completed iteration, so a crash
or budget stop still leaves the full history up to that point.
"""

import time

import numpy as np

from .assembly import assemble
from .estimator import estimate
from .mesh import SimplicialMesh, bisect, generate_domain
from .solver import SolverError, solve_eigen
from .space import prolongation_matrices


class AdaptiveTrace:
    """History of one adaptive run.

    Attributes
    ----------
    records : list of dict
        One entry per iteration with keys ``l``, ``dof``, ``lambda1``,
        ``eta2``, ``seconds``, ``num_elements``, ``max_eta_xy``,
        ``max_eta_h``.  The last two locate the element with the
        largest indicator (centroid coordinates and diameter).
    reason : str
        Why the loop stopped: ``"max-dof"``, ``"eta-tol"``,
        ``"estimator-zero"`` or ``"solver-failure: ..."``.
    """

    def __init__(self):
        self.records = []
        self.reason = "incomplete"

    @property
    def dofs(self):
        return np.array([r["dof"] for r in self.records])

    @property
    def eigenvalues(self):
        return np.array([r["lambda1"] for r in self.records])

    @property
    def estimates(self):
        return np.array([r["eta2"] for r in self.records])

    @property
    def failed(self):
        return self.reason.startswith("solver-failure")

    def __len__(self):
        return len(self.records)


def dorfler_mark(indicators, theta):
    """Minimal element set carrying a share theta of the estimator.

    Elements are sorted by decreasing squared indicator, ties broken
    by ascending element index, and the shortest prefix whose sum
    reaches ``theta`` times the total is returned.

    Parameters
    ----------
    indicators : IndicatorField or array
        Squared per-element indicators.
    theta : float
        Marking fraction, strictly between 0 and 1.

    Returns
    -------
    ndarray of int
        Marked element indices in ascending order; empty when every
        indicator is zero, which signals convergence.
    """
    eta2 = np.asarray(getattr(indicators, "eta2", indicators), dtype=float)
    if not 0.0 < theta < 1.0:
        raise ValueError("marking fraction must lie in (0, 1), got %r"
                         % (theta,))
    if eta2.ndim != 1:
        raise ValueError("indicators must be a one-dimensional array")
    if (eta2 < 0.0).any() or not np.isfinite(eta2).all():
        raise ValueError("indicators must be finite and nonnegative")
    total = eta2.sum()
    if total <= 0.0:
        return np.empty(0, dtype=np.int64)
    order = np.lexsort((np.arange(len(eta2)), -eta2))
    cum = np.cumsum(eta2[order])
    stop = int(np.searchsorted(cum, theta * total, side="left"))
    stop = min(stop, len(cum) - 1)
    return np.sort(order[: stop + 1])


def adaptive_loop(domain, degree, theta=0.5, n=16, gamma_c1=10.0,
                  max_dof=200000, eta_tol=0.0, nev=1, mark_all_pairs=False,
                  half_interior_jump=False, solver_tol=1e-8, initial=None,
                  callback=None):
    """Run the adaptive solve-estimate-mark-refine loop.

    Parameters
    ----------
    domain : str or SimplicialMesh
        ``"square"``, ``"lshape"`` or ``"slit"``, or an existing mesh
        to resume refining; with a mesh, ``n`` is ignored.
    degree : int
        Velocity degree k.
    theta : float, optional
        Doerfler marking fraction.
    n : int, optional
        Initial grid subdivisions per unit length.
    gamma_c1 : float, optional
        Penalty prefactor.
    max_dof : int, optional
        The loop stops after the first iteration whose system reaches
        this size.
    eta_tol : float, optional
        Stop once the squared global estimator drops below this.
    nev : int, optional
        Number of eigenpairs computed per level.
    mark_all_pairs : bool, optional
        Mark on the summed indicators of all computed pairs instead of
        the first one alone.
    half_interior_jump : bool, optional
        Use the evenly split velocity-jump indicator.
    solver_tol : float, optional
        Acceptable algebraic eigenpair residual per level.  The
        eigenvalue error it induces is quadratic in this number, so
        large high-order runs can trade unneeded digits for time.
    initial : ndarray, optional
        Velocity coefficient rows warm-starting the first solve; they
        must match the broken space of the first mesh.  Later levels
        always warm start from the previous one.
    callback : callable, optional
        Called after each iteration as ``callback(record, mesh,
        system, field, solution)``; exceptions propagate.

    Returns
    -------
    AdaptiveTrace
        When the eigensolver fails the trace of the completed
        iterations is returned with a ``solver-failure`` reason
        instead of raising.
    """
    trace = AdaptiveTrace()
    mesh = domain if isinstance(domain, SimplicialMesh) else \
        generate_domain(domain, n)
    layout = None
    guess = None if initial is None else np.asarray(initial, dtype=float)
    for level in range(10000):
        tic = time.perf_counter()
        system = assemble(mesh, degree, gamma_c1)
        prev_layout, layout = layout, system.layout
        if guess is not None and prev_layout is not None:
            pv, _ = prolongation_matrices(prev_layout, layout)
            guess = guess @ pv.T
        try:
            solution = solve_eigen(system, nev=nev, initial=guess,
                                   residual_tol=solver_tol)
        except SolverError as exc:
            trace.reason = "solver-failure: %s" % exc
            return trace
        guess = solution.velocities
        lam1 = solution.values[0]
        fields = [
            estimate(system, solution.values[j], solution.velocities[j],
                     solution.pressures[j],
                     half_interior_jump=half_interior_jump)
            for j in range(nev if mark_all_pairs else 1)
        ]
        field = fields[0]
        marking_eta2 = np.sum([f.eta2 for f in fields], axis=0)

        top = int(np.argmax(field.eta2))
        record = {
            "l": level,
            "dof": layout.num_dof,
            "lambda1": lam1,
            "eta2": field.total**2,
            "seconds": time.perf_counter() - tic,
            "num_elements": mesh.num_elements,
            "max_eta_xy": tuple(
                mesh.vertices[mesh.elements[top]].mean(axis=0)
            ),
            "max_eta_h": float(mesh.diameters[top]),
        }
        trace.records.append(record)
        if callback is not None:
            callback(record, mesh, system, field, solution)

        if record["eta2"] <= eta_tol:
            trace.reason = "eta-tol"
            return trace
        if layout.num_dof >= max_dof:
            trace.reason = "max-dof"
            return trace
        marked = dorfler_mark(marking_eta2, theta)
        if marked.size == 0:
            trace.reason = "estimator-zero"
            return trace
        mesh = bisect(mesh, marked)
    raise RuntimeError("adaptive loop exceeded its iteration cap")
