"""Uniform refinement study of the square eigenvalue problem.

Solves the Stokes eigenvalue problem on criss-cross meshes of the unit
square and tabulates the first three eigenvalues, the error of the
first one against the reference value, and the empirical order between
levels.  The smooth square eigenfunctions give the full rate 2k in the
mesh size for the eigenvalues.
"""

import numpy as np

from stokes_afem import (
    REFERENCE_EIGENVALUES,
    assemble,
    eoc,
    generate_domain,
    solve_eigen,
)

REF = REFERENCE_EIGENVALUES["square"]


def main():
    degree = 1
    errs = []
    hs = []
    print("   n     dof     lambda1        lambda2        lambda3      error")
    for n in (8, 16, 32, 64):
        mesh = generate_domain("square", n)
        system = assemble(mesh, degree)
        solution = solve_eigen(system, nev=3)
        lam = solution.values
        errs.append(abs(lam[0] - REF))
        hs.append(1.0 / n)
        print("%4d %7d  %12.7f  %12.7f  %12.7f  %.3e"
              % (n, system.layout.num_dof, lam[0], lam[1], lam[2],
                 errs[-1]))
    print("eigenvalue EOC per level pair:",
          ["%.2f" % r for r in eoc(errs, h=hs)])
    print("second and third eigenvalues approximate the double pair of "
          "the square")


if __name__ == "__main__":
    main()
