"""Source-problem verification with the manufactured solution.

Solves the Stokes source problem whose exact solution is known in
closed form, then prints energy-norm and L2 velocity errors with
their empirical orders.  The energy error converges with order k and
the L2 error with order k + 1.
"""

from stokes_afem import (
    assemble,
    assemble_load,
    dg_error,
    eoc,
    generate_domain,
    manufactured_case,
    solve_source,
    velocity_l2_error,
)


def main():
    case = manufactured_case()
    for degree in (1, 2, 3):
        dg = []
        l2 = []
        hs = []
        print("k = %d" % degree)
        for n in (8, 16, 32):
            mesh = generate_domain(case.domain, n)
            system = assemble(mesh, degree)
            load = assemble_load(mesh, system.layout, case.forcing,
                                 order=2 * degree + 4)
            solution = solve_source(system, load)
            e_dg, e_p = dg_error(system.layout, solution.u, solution.p,
                                 case, system.gamma)
            dg.append(e_dg)
            l2.append(velocity_l2_error(system.layout, solution.u, case))
            hs.append(1.0 / n)
            print("  n %2d  energy %.4e  velocity L2 %.4e  pressure %.4e"
                  % (n, e_dg, l2[-1], e_p))
        print("  energy EOC %s, L2 EOC %s"
              % (["%.2f" % r for r in eoc(dg, h=hs)],
                 ["%.2f" % r for r in eoc(l2, h=hs)]))


if __name__ == "__main__":
    main()
