"""Adaptive run on the L-shaped domain, the main use case.

Runs the solve-estimate-mark-refine loop for the smallest Stokes
eigenvalue with k = 2 elements, prints one line per level and reports
the observed convergence slope against the reference value.  Expect a
slope near -2 in the degrees of freedom, which uniform refinement
cannot reach on this domain because of the corner singularity.
"""

import numpy as np

from stokes_afem import REFERENCE_EIGENVALUES, adaptive_loop

REF = REFERENCE_EIGENVALUES["lshape"]


def report(record, mesh, system, field, solution):
    err = abs(record["lambda1"] - REF)
    print("level %2d  dof %6d  lambda1 %.9f  error %.3e  eta2 %.3e"
          % (record["l"], record["dof"], record["lambda1"], err,
             record["eta2"]))


def main():
    trace = adaptive_loop("lshape", degree=2, theta=0.5, n=8,
                          max_dof=40000, callback=report)
    errs = np.abs(trace.eigenvalues - REF)
    slope = np.polyfit(np.log(trace.dofs.astype(float)), np.log(errs), 1)[0]
    print("stopped (%s) after %d levels" % (trace.reason, len(trace)))
    print("least-squares slope of the eigenvalue error: %.3f" % slope)


if __name__ == "__main__":
    main()
