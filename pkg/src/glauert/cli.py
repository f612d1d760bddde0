"""Command-line driver: ``glauert {run,sweep,validate,mesh-info}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .config import load_config
from .exceptions import GlauertError, NonConvergence

logger = logging.getLogger("glauert")


def _complex(text):
    try:
        return complex(text.replace(" ", ""))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}") from exc


def build_parser():
    parser = argparse.ArgumentParser(prog="glauert", description="Acoustic scattering in subsonic flow (FEM-BEM).")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config_path", nargs="?", help="TOML case file")
        p.add_argument("--config", dest="config_opt", help="TOML case file (alternative to the positional)")
        p.add_argument("--out-dir", help="override [output] out_dir")
        p.add_argument("--threads", type=int, help="limit BLAS threads")
        p.add_argument("--formulation", choices=("unstable", "stable"))
        p.add_argument("--eta", type=_complex, help="coupling parameter, e.g. 1 or 1+0.5j")

    common(sub.add_parser("run", help="solve one case and write VTK/CSV/JSON outputs"))
    ps = sub.add_parser("sweep", help="condition-number sweep over a frequency grid")
    common(ps)
    ps.add_argument("--fmin", type=float)
    ps.add_argument("--fmax", type=float)
    ps.add_argument("--steps", type=int)
    ps.add_argument("--k-hat", action="store_true", help="interpret fmin/fmax as transformed wavenumbers")
    ps.add_argument("--solve", action="store_true", help="also record GMRES iteration counts")
    ps.add_argument("--etas", type=_complex, nargs="+", help="eta-sweep mode: stable condition number per eta")
    common(sub.add_parser("validate", help="check a config and the mesh it describes"))
    common(sub.add_parser("mesh-info", help="print mesh counts and edge statistics as JSON"))
    return parser


def _load(args):
    path = args.config_opt or args.config_path
    if not path:
        raise GlauertError("a config file is required (positional or --config)")
    cfg = load_config(path)
    if args.out_dir:
        cfg["output"]["out_dir"] = args.out_dir
    if args.formulation:
        cfg["coupling"]["formulation"] = args.formulation
    if args.eta is not None:
        cfg["coupling"]["eta_re"], cfg["coupling"]["eta_im"] = args.eta.real, args.eta.imag
    return cfg


def cmd_run(args):
    from .pipeline import run_case

    cfg = _load(args)
    summary = run_case(cfg)
    print(json.dumps({k: summary[k] for k in ("frequency_hz", "formulation", "iterations", "relative_residual",
                                               "converged")}))
    return 0


def cmd_sweep(args):
    from .pipeline import ambient_from_config, build_problem, eta_from_config, solver_options
    from .solver import condition_number, sweep_conditioning, write_sweep_csv

    cfg = _load(args)
    s = cfg["sweep"]
    fmin = args.fmin if args.fmin is not None else s["fmin"]
    fmax = args.fmax if args.fmax is not None else s["fmax"]
    steps = args.steps if args.steps is not None else s["steps"]
    if not fmin < fmax or steps < 2:
        raise GlauertError(f"sweep needs fmin < fmax and steps >= 2 (got {fmin}, {fmax}, {steps})")
    base = ambient_from_config(cfg, omega=1.0)
    grid = np.linspace(fmin, fmax, steps)
    if args.k_hat:
        omegas = grid * base.c_infinity / base.pg_map.gamma_infinity
    else:
        omegas = 2 * np.pi * grid
    problem = build_problem(cfg, base.with_omega(omegas[0]))
    out = Path(cfg["output"]["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    etas = args.etas or [complex(e) for e in s["etas"]]
    if etas:
        path = out / "sweep_eta.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["freq_hz", "k_hat", "eta_re", "eta_im", "cond_stab"])
            for omega in omegas:
                amb = base.with_omega(omega)
                for eta in etas:
                    c = condition_number(problem.system(omega, "stable", eta), cfg["solver"]["condition_cap"])
                    w.writerow([repr(amb.frequency), repr(amb.k_hat_infinity), repr(eta.real), repr(eta.imag),
                                repr(c)])
    else:
        rows = sweep_conditioning(problem, omegas, eta_from_config(cfg), solve=args.solve or s["solve"],
                                  solver_options=solver_options(cfg), cap=cfg["solver"]["condition_cap"])
        path = out / "sweep.csv"
        write_sweep_csv(path, rows)
    print(str(path))
    return 0


def cmd_validate(args):
    from .pipeline import ambient_from_config, build_problem, eta_from_config

    cfg = _load(args)
    eta_from_config(cfg)
    problem = build_problem(cfg, ambient_from_config(cfg))
    report = {"status": "ok", "mesh": problem.mesh.summary(),
              "flow_continuity_defect": problem.flow.continuity_defect(problem.mesh)}
    print(json.dumps(report, indent=2))
    return 0


def cmd_mesh_info(args):
    from .pipeline import ambient_from_config, build_mesh

    cfg = _load(args)
    base = ambient_from_config(cfg, omega=1.0)
    print(build_mesh(cfg, base.pg_map).summary_json(indent=2))
    return 0


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "validate": cmd_validate, "mesh-info": cmd_mesh_info}


def main(argv=None):
    level = os.environ.get("GLAUERT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        with threadpool_limits(limits=args.threads):
            return COMMANDS[args.command](args)
    except NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (GlauertError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
