"""Configuration-driven case setup shared by the CLI and the estimator."""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .bem import BemQuadrature
from .coupling import CouplingProblem, Formulation, solve_case
from .exceptions import ConfigError, EtaError
from .flow import AmbientState, nodal_flow_from_file, sphere_dipole_flow, uniform_flow
from .incident import monopole, plane_wave
from .mesh import GAMMA_INFINITY, GAMMA_OBJECT, apply_prandtl_glauert, ball_shell, load_gmsh
from .postprocess import pressure_from_potential, probe_sphere, reconstruct_exterior, run_summary, write_outputs
from .solver import condition_number, write_residual_csv

logger = logging.getLogger(__name__)


def ambient_from_config(cfg, omega=None):
    a = cfg["ambient"]
    axis = np.asarray(a["axis"], dtype=float)
    if np.linalg.norm(axis) == 0:
        raise ConfigError("[ambient] axis must be nonzero")
    mach = a["mach"] * axis / np.linalg.norm(axis)
    base = AmbientState(a["rho"], a["c"], tuple(mach), 1.0)
    if omega is None:
        omega = omega_from_config(cfg, base)
    return base.with_omega(omega)


def omega_from_config(cfg, base):
    f = cfg["frequency"]
    if f["k_hat"] > 0:
        return f["k_hat"] * base.c_infinity / base.pg_map.gamma_infinity
    if f["freq_hz"] > 0:
        return 2 * np.pi * f["freq_hz"]
    raise ConfigError("[frequency] needs a positive freq_hz or k_hat")


def eta_from_config(cfg):
    eta = complex(cfg["coupling"]["eta_re"], cfg["coupling"]["eta_im"])
    if cfg["coupling"]["formulation"] == "stable" and eta.real == 0:
        raise EtaError("the coupling parameter must have a nonzero real part")
    return eta


def build_mesh(cfg, pg_map):
    """Physical mesh from the config, mapped to the transformed frame."""
    m = cfg["mesh"]
    if m["source"] == "file":
        path = Path(m["path"])
        if not path.is_file():
            raise FileNotFoundError(f"mesh file not found: {path}")
        mesh = load_gmsh(path, {m["object_tag"]: GAMMA_OBJECT, m["farfield_tag"]: GAMMA_INFINITY})
    else:
        mesh = ball_shell(m["inner_axes"], m["outer_axes"], m["subdivisions"], m["layers"], m["center"])
    return apply_prandtl_glauert(mesh, pg_map)


def build_problem(cfg, ambient=None):
    ambient = ambient or ambient_from_config(cfg)
    pg = ambient.pg_map
    mesh = build_mesh(cfg, pg)
    fl = cfg["flow"]
    if fl["kind"] == "uniform":
        flow = uniform_flow(ambient)
    elif fl["kind"] == "sphere_dipole":
        flow = sphere_dipole_flow(fl["radius"], fl["center"], ambient)
    else:
        flow = nodal_flow_from_file(fl["path"], mesh, ambient, fl["continuity_tolerance"])
    inc = cfg["incident"]
    amp = complex(inc["amplitude_re"], inc["amplitude_im"])
    k_hat = ambient.k_hat_infinity
    if inc["kind"] == "monopole":
        incident = monopole(k_hat, pg.forward(np.asarray(inc["position"], dtype=float)), amp)
    else:
        incident = plane_wave(k_hat, inc["direction"], amp)
    q = cfg["quadrature"]
    quad = BemQuadrature(q["bem_singular_order"], q["bem_regular_degree"], q["bem_near_degree"])
    return CouplingProblem(mesh, flow, incident, q["fem_degree"], quad, cfg["coupling"]["a43_sign"])


def solver_options(cfg):
    s = cfg["solver"]
    return {"tol": s["tol"], "max_iter": s["max_iter"], "preconditioner": s["preconditioner"],
            "spai_radius": s["spai_radius"], "include_volume": s["include_volume"]}


def run_case(cfg, out_dir=None):
    """Assemble, solve and post-process one case; returns the summary dict.

    Raises :class:`~glauert.exceptions.NonConvergence` after writing outputs
    when GMRES misses the tolerance.
    """
    from .exceptions import NonConvergence

    ambient = ambient_from_config(cfg)
    eta = eta_from_config(cfg)
    problem = build_problem(cfg, ambient)
    form = Formulation(cfg["coupling"]["formulation"])
    system = problem.system(ambient.omega, form, eta)
    cond = condition_number(system, cfg["solver"]["condition_cap"]) if cfg["solver"]["condition_number"] else None
    failure = None
    try:
        dens, report = solve_case(system, solver_options(cfg))
    except NonConvergence as exc:
        failure = exc
        from .coupling import densities_from_vector

        dens, report = densities_from_vector(system, exc.solution), exc.report
    _, _, _, incident, amb = problem.parts(ambient.omega)
    o = cfg["output"]
    pts = probe_sphere(o["probe_radius"], o["probe_count"], o["probe_center"])
    probe = reconstruct_exterior(problem.spaces, dens, incident, ambient.pg_map.forward(pts))
    probe.pressure = pressure_from_potential(probe.f, probe.grad_f, amb)
    summary = run_summary(
        amb, form.value, eta if form is Formulation.STABLE else None, report,
        p_aux_inf=float(np.abs(dens.p_aux).max()) if dens.p_aux.size else None,
        lam_inf=float(np.abs(dens.lam).max()), condition=cond, config=cfg, mesh_summary=problem.mesh.summary())
    out = Path(out_dir or o["out_dir"])
    write_outputs(out, problem.mesh, problem.space.to_vertex_order(dens.Phi), probe, summary)
    if o["write_residuals"]:
        write_residual_csv(out / "residuals.csv", report)
    if failure is not None:
        raise failure
    return summary
