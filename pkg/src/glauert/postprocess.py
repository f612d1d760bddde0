"""Exterior reconstruction, acoustic pressure and output files."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bem import HelmholtzKernel, evaluate_potentials
from .exceptions import InteriorPointError

SCHEMA_PATH = Path(__file__).with_name("summary.schema.json")


def solid_angle(points, vertices, faces):
    """Total signed solid angle subtended by an oriented triangle surface.

    ``4 pi`` for points enclosed by a surface with outward normals, ``0``
    outside (Van Oosterom and Strackee formula).
    """
    points = np.atleast_2d(points)
    out = np.zeros(len(points))
    tri = vertices[faces]
    for s in range(0, len(points), 256):
        R = tri[None, :, :, :] - points[s:s + 256, None, None, :]
        n = np.linalg.norm(R, axis=3)
        a, b, c = R[:, :, 0], R[:, :, 1], R[:, :, 2]
        la, lb, lc = n[:, :, 0], n[:, :, 1], n[:, :, 2]
        num = np.einsum("pfd,pfd->pf", a, np.cross(b, c))
        den = la * lb * lc + np.einsum("pfd,pfd->pf", a, b) * lc + np.einsum("pfd,pfd->pf", a, c) * lb \
            + np.einsum("pfd,pfd->pf", b, c) * la
        out[s:s + 256] = 2.0 * np.arctan2(num, den).sum(axis=1)
    return out


def inside_surface(points, spaces):
    return solid_angle(points, spaces.vertices, spaces.faces) > 2 * np.pi


@dataclass(eq=False)
class FieldProbe:
    points: np.ndarray
    f: np.ndarray
    f_sc: np.ndarray
    grad_f: np.ndarray = None
    pressure: np.ndarray = None
    meta: dict = field(default_factory=dict)


def reconstruct_exterior(spaces, densities, incident, points, k=None, gradient=True):
    """Total and scattered exterior field ``f = -S lam + D(trace Phi) + f_inc``.

    Raises
    ------
    InteriorPointError
        If any point is enclosed by the coupling surface.
    NearSurfaceError
        If any point is closer than one local mesh size to the surface.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, 3)
    k = incident.k if k is None else k
    if len(points) == 0:
        empty = np.zeros(0, dtype=complex)
        return FieldProbe(points, empty, empty, np.zeros((0, 3), dtype=complex))
    inside = np.flatnonzero(inside_surface(points, spaces))
    if len(inside):
        raise InteriorPointError(f"{len(inside)} probe points lie inside the coupling surface", inside)
    kern = HelmholtzKernel(k)
    if gradient:
        sc, gsc = evaluate_potentials(spaces, densities.lam, densities.trace, points, kern, gradient=True)
        g = gsc + incident.gradient(points)
    else:
        sc = evaluate_potentials(spaces, densities.lam, densities.trace, points, kern)
        g = None
    return FieldProbe(points, sc + incident.value(points), sc, g)


def pressure_from_potential(f, grad_f, ambient):
    """Linearised Bernoulli relation ``p = rho_inf (i omega f - c_inf M_inf . grad f)``."""
    f = np.asarray(f)
    conv = np.asarray(grad_f) @ ambient.mach_vector if grad_f is not None else 0.0
    return ambient.rho_infinity * (1j * ambient.omega * f - ambient.c_infinity * conv)


def probe_sphere(radius, n=100, center=(0.0, 0.0, 0.0)):
    """Fibonacci points on a sphere."""
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = np.pi * (1 + 5**0.5) * i
    pts = np.column_stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)])
    return np.asarray(center) + radius * pts


def write_vtk(path, mesh, values, name="Phi"):
    """Legacy ASCII unstructured grid with real and imaginary point data."""
    v = np.asarray(values)
    lines = ["# vtk DataFile Version 3.0", f"{name} solution", "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_vertices} double"]
    lines += [f"{x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines.append(f"CELLS {mesh.n_tets} {5 * mesh.n_tets}")
    lines += [f"4 {a} {b} {c} {d}" for a, b, c, d in mesh.tets.tolist()]
    lines.append(f"CELL_TYPES {mesh.n_tets}")
    lines += ["10"] * mesh.n_tets
    lines.append(f"POINT_DATA {mesh.n_vertices}")
    for part, arr in (("re", v.real), ("im", v.imag)):
        lines += [f"SCALARS {part}_{name} double 1", "LOOKUP_TABLE default"]
        lines += [repr(float(a)) for a in arr]
    Path(path).write_text("\n".join(lines) + "\n")


def write_probe_csv(path, probe):
    p = probe.pressure if probe.pressure is not None else np.full(len(probe.f), np.nan + 0j)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z", "re_f", "im_f", "re_p", "im_p"])
        for (x, y, z), f, pr in zip(probe.points.tolist(), probe.f, p):
            w.writerow([repr(float(v)) for v in (x, y, z, f.real, f.imag, pr.real, pr.imag)])


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    if isinstance(o, np.generic):
        return _jsonable(o.item())
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    return o


def run_summary(ambient, formulation, eta, report, p_aux_inf=None, lam_inf=None, condition=None, config=None,
                mesh_summary=None):
    return _jsonable({
        "frequency_hz": ambient.frequency,
        "omega": ambient.omega,
        "k_hat": ambient.k_hat_infinity,
        "formulation": formulation,
        "eta": complex(eta) if eta is not None else None,
        "iterations": report.iterations,
        "relative_residual": report.final_residual,
        "true_residual": report.true_residual,
        "converged": report.converged,
        "condition_number": condition,
        "p_aux_inf_norm": p_aux_inf,
        "lambda_inf_norm": lam_inf,
        "mesh": mesh_summary,
        "config": config,
    })


def write_outputs(out_dir, mesh, phi_vertex_values, probe, summary):
    """Write ``solution.vtk``, ``probes.csv`` and ``summary.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_vtk(out / "solution.vtk", mesh, phi_vertex_values)
    write_probe_csv(out / "probes.csv", probe)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return {"vtk": out / "solution.vtk", "csv": out / "probes.csv", "json": out / "summary.json"}


def load_schema():
    return json.loads(SCHEMA_PATH.read_text())
