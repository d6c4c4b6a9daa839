"""Command line front end for reproducible experiment runs.

A run is described by a flat configuration: domain, polynomial degree,
marking fraction, penalty prefactor, initial grid, mode and budgets.
Values come from built-in defaults, overridden by an optional
configuration file (flat ``key = value`` lines or JSON), overridden by
command line flags.

Eigenvalue runs append one CSV row per level as they go, so an
interrupted or failed run keeps the completed part of its table.
Source-verification runs write a rate table instead.
"""

import argparse
import contextlib
import json
import os
import sys
import time

import numpy as np

from .adapt import adaptive_loop
from .assembly import assemble, assemble_load
from .estimator import estimate, write_indicator_csv
from .mesh import generate_domain
from .solver import SolverError, solve_eigen, solve_source
from .verify import (
    REFERENCE_EIGENVALUES,
    dg_error,
    manufactured_case,
    velocity_l2_error,
)
from .vtkio import write_vtk

RESULTS_HEADER = "l,dof,lambda1,eta2,err_vs_ref,seconds"
EOC_HEADER = "l,n,dof,dg_error,l2_error,p_error,eoc_dg,eoc_l2,seconds"

_DEFAULTS = {
    "domain": "square",
    "k": 1,
    "theta": 0.5,
    "gamma_c1": 10.0,
    "n": 16,
    "mode": "adaptive",
    "max_dof": 200000,
    "eta_tol": 0.0,
    "nev": 1,
    "levels": 4,
    "out": ".",
    "vtk": False,
    "threads": 0,
    "seed": 0,
}

_DOMAINS = ("square", "lshape", "slit")
_MODES = ("adaptive", "uniform", "source-verify")


class RunConfig:
    """Validated settings of one experiment run.

    Attributes mirror the command line flags: ``domain``, ``k``,
    ``theta``, ``gamma_c1``, ``n``, ``mode``, ``max_dof``, ``eta_tol``,
    ``nev``, ``levels``, ``out``, ``vtk``, ``threads``, ``seed``.  The
    seed only feeds randomized checks, never the solvers, which are
    internally deterministic.
    """

    def __init__(self, **values):
        merged = dict(_DEFAULTS)
        for key, val in values.items():
            if key not in merged:
                raise ValueError("unknown configuration key %r" % (key,))
            if val is not None:
                merged[key] = val
        for key, val in merged.items():
            setattr(self, key, val)
        self._validate()

    def _validate(self):
        if self.domain not in _DOMAINS:
            raise ValueError("domain must be one of %s, got %r"
                             % ("|".join(_DOMAINS), self.domain))
        if self.mode not in _MODES:
            raise ValueError("mode must be one of %s, got %r"
                             % ("|".join(_MODES), self.mode))
        if self.k not in (1, 2, 3):
            raise ValueError("k must be 1, 2 or 3, got %r" % (self.k,))
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie strictly between 0 and 1, "
                             "got %r" % (self.theta,))
        if self.gamma_c1 <= 0.0:
            raise ValueError("gamma-c1 must be positive, got %r"
                             % (self.gamma_c1,))
        for key in ("n", "max_dof", "nev", "levels"):
            if int(getattr(self, key)) < 1:
                raise ValueError("%s must be a positive integer, got %r"
                                 % (key, getattr(self, key)))
        if self.eta_tol < 0.0:
            raise ValueError("eta-tol must be nonnegative, got %r"
                             % (self.eta_tol,))
        if self.threads < 0:
            raise ValueError("threads must be nonnegative, got %r"
                             % (self.threads,))


def _coerce(key, text):
    """Convert a config-file string to the type of the default."""
    default = _DEFAULTS[key]
    if isinstance(default, bool):
        low = str(text).strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError("cannot read %r as a flag for %s" % (text, key))
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return str(text)


def _read_config_file(path):
    """Parse a flat key=value or JSON configuration file."""
    with open(path) as fh:
        text = fh.read()
    stripped = text.lstrip()
    values = {}
    if stripped.startswith("{"):
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ValueError("configuration JSON must be an object")
        items = data.items()
    else:
        items = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError("line %d of %s is not a key=value pair"
                                 % (lineno, path))
            key, val = line.split("=", 1)
            items.append((key.strip(), val.strip()))
    for key, val in items:
        key = str(key).replace("-", "_")
        if key not in _DEFAULTS:
            raise ValueError("unknown configuration key %r in %s"
                             % (key, path))
        if isinstance(val, str):
            values[key] = _coerce(key, val)
        else:
            default = _DEFAULTS[key]
            if isinstance(default, bool):
                values[key] = bool(val)
            elif isinstance(default, int):
                values[key] = int(val)
            elif isinstance(default, float):
                values[key] = float(val)
            else:
                values[key] = str(val)
    return values


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="stokes-afem",
        description="Adaptive interior-penalty DG solver for the Stokes "
                    "eigenvalue problem.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute one experiment run")
    run.add_argument("--config", help="configuration file (key=value or JSON)")
    run.add_argument("--domain", choices=_DOMAINS)
    run.add_argument("--k", type=int)
    run.add_argument("--theta", type=float)
    run.add_argument("--gamma-c1", dest="gamma_c1", type=float)
    run.add_argument("--n", type=int)
    run.add_argument("--mode", choices=_MODES)
    run.add_argument("--max-dof", dest="max_dof", type=int)
    run.add_argument("--eta-tol", dest="eta_tol", type=float)
    run.add_argument("--nev", type=int)
    run.add_argument("--levels", type=int)
    run.add_argument("--out")
    run.add_argument("--vtk", action="store_true", default=None)
    run.add_argument("--threads", type=int)
    run.add_argument("--seed", type=int)
    return parser


def parse_config(argv):
    """Build a RunConfig from command line arguments.

    Flag values override configuration-file values, which override
    the defaults.  Unknown file keys and out-of-range values raise
    with a message naming the offending key.
    """
    parser = _build_parser()
    args = parser.parse_args(argv)
    values = {}
    if args.config:
        try:
            values.update(_read_config_file(args.config))
        except (ValueError, OSError) as exc:
            parser.error(str(exc))
    for key in _DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if "threads" not in values or values["threads"] is None:
        env = os.environ.get("STOKES_AFEM_THREADS")
        if env is not None:
            values["threads"] = int(env)
    try:
        return RunConfig(**values)
    except ValueError as exc:
        parser.error(str(exc))


def _thread_cap(threads):
    """Limit BLAS worker pools for the duration of a run."""
    if threads and threads > 0:
        try:
            from threadpoolctl import threadpool_limits
            return threadpool_limits(limits=threads)
        except ImportError:
            pass
    return contextlib.nullcontext()


def _fmt_row(level, dof, lam, eta2, err, seconds):
    err_txt = "" if err is None else "%.6e" % err
    return "%d,%d,%.12e,%.6e,%s,%.3f" % (level, dof, lam, eta2, err_txt,
                                         seconds)


def _artifact_writer(config):
    def write(level, mesh, field):
        if not config.vtk:
            return
        write_vtk(
            os.path.join(config.out, "mesh_%04d.vtk" % level),
            mesh,
            cell_data={
                "eta2": field.eta2,
                "eta2_R": field.eta2_R,
                "eta2_E": field.eta2_E,
                "eta2_J": field.eta2_J,
            },
            title="level %d indicators" % level,
        )
        write_indicator_csv(
            os.path.join(config.out, "indicators_%04d.csv" % level), field
        )
    return write


def _run_adaptive(config):
    ref = REFERENCE_EIGENVALUES.get(config.domain)
    write_artifacts = _artifact_writer(config)
    path = os.path.join(config.out, "results.csv")
    with open(path, "w") as fh:
        fh.write(RESULTS_HEADER + "\n")

        def on_level(rec, mesh, system, field, solution):
            err = None if ref is None else abs(rec["lambda1"] - ref)
            fh.write(_fmt_row(rec["l"], rec["dof"], rec["lambda1"],
                              rec["eta2"], err, rec["seconds"]) + "\n")
            fh.flush()
            write_artifacts(rec["l"], mesh, field)

        trace = adaptive_loop(
            config.domain, config.k, theta=config.theta, n=config.n,
            gamma_c1=config.gamma_c1, max_dof=config.max_dof,
            eta_tol=config.eta_tol, nev=config.nev, callback=on_level,
        )
    if trace.failed:
        print("stokes-afem: %s" % trace.reason, file=sys.stderr)
        return 1
    print("completed %d levels (%s); results in %s"
          % (len(trace), trace.reason, path))
    return 0


def _run_uniform(config):
    ref = REFERENCE_EIGENVALUES.get(config.domain)
    write_artifacts = _artifact_writer(config)
    path = os.path.join(config.out, "results.csv")
    with open(path, "w") as fh:
        fh.write(RESULTS_HEADER + "\n")
        for level in range(config.levels):
            tic = time.perf_counter()
            mesh = generate_domain(config.domain, config.n * 2**level)
            system = assemble(mesh, config.k, config.gamma_c1)
            solution = solve_eigen(system, nev=config.nev)
            lam = solution.values[0]
            field = estimate(system, lam, solution.velocities[0],
                             solution.pressures[0])
            seconds = time.perf_counter() - tic
            err = None if ref is None else abs(lam - ref)
            fh.write(_fmt_row(level, system.layout.num_dof, lam,
                              field.total**2, err, seconds) + "\n")
            fh.flush()
            write_artifacts(level, mesh, field)
    print("completed %d uniform levels; results in %s"
          % (config.levels, path))
    return 0


def _run_source_verify(config):
    case = manufactured_case()
    if config.domain != case.domain:
        raise ValueError("source-verify runs on the %r domain"
                         % (case.domain,))
    path = os.path.join(config.out, "eoc.csv")
    prev = None
    with open(path, "w") as fh:
        fh.write(EOC_HEADER + "\n")
        for level in range(config.levels):
            tic = time.perf_counter()
            n = config.n * 2**level
            mesh = generate_domain(config.domain, n)
            system = assemble(mesh, config.k, config.gamma_c1)
            load = assemble_load(mesh, system.layout, case.forcing,
                                 order=2 * config.k + 4)
            solution = solve_source(system, load)
            dg, pe = dg_error(system.layout, solution.u, solution.p, case,
                              system.gamma)
            l2 = velocity_l2_error(system.layout, solution.u, case)
            seconds = time.perf_counter() - tic
            if prev is None:
                eoc_dg = eoc_l2 = ""
            else:
                eoc_dg = "%.3f" % (np.log(prev[0] / dg) / np.log(2.0))
                eoc_l2 = "%.3f" % (np.log(prev[1] / l2) / np.log(2.0))
            fh.write("%d,%d,%d,%.6e,%.6e,%.6e,%s,%s,%.3f\n"
                     % (level, n, system.layout.num_dof, dg, l2, pe,
                        eoc_dg, eoc_l2, seconds))
            fh.flush()
            prev = (dg, l2)
    print("completed %d verification levels; rates in %s"
          % (config.levels, path))
    return 0


def run(config):
    """Execute one configured run; returns the process exit status."""
    os.makedirs(config.out, exist_ok=True)
    try:
        with _thread_cap(config.threads):
            if config.mode == "adaptive":
                return _run_adaptive(config)
            if config.mode == "uniform":
                return _run_uniform(config)
            return _run_source_verify(config)
    except (SolverError, ValueError, OSError) as exc:
        print("stokes-afem: %s" % exc, file=sys.stderr)
        return 1


def main(argv=None):
    config = parse_config(sys.argv[1:] if argv is None else argv)
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
