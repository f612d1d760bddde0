"""TOML case configuration with strict key checking."""
from __future__ import annotations

import copy
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .exceptions import ConfigError

# every accepted key with its default; nested tables mirror the TOML layout
DEFAULTS = {
    "mesh": {
        "source": "builtin",
        "path": "",
        "inner_axes": [0.5, 0.5, 0.5],
        "outer_axes": [1.0, 1.0, 1.0],
        "center": [0.0, 0.0, 0.0],
        "subdivisions": 4,
        "layers": 2,
        "object_tag": "object",
        "farfield_tag": "farfield",
    },
    "ambient": {
        "rho": 1.2,
        "c": 340.0,
        "mach": 0.0,
        "axis": [0.0, 0.0, 1.0],
    },
    "flow": {
        "kind": "uniform",
        "radius": 0.5,
        "center": [0.0, 0.0, 0.0],
        "path": "",
        "continuity_tolerance": 1e-2,
    },
    "frequency": {
        "freq_hz": 0.0,
        "k_hat": 0.0,
    },
    "incident": {
        "kind": "plane_wave",
        "position": [0.0, 0.0, -2.0],
        "direction": [0.0, 0.0, 1.0],
        "amplitude_re": 1.0,
        "amplitude_im": 0.0,
    },
    "coupling": {
        "formulation": "stable",
        "eta_re": 1.0,
        "eta_im": 0.0,
        "a43_sign": 1,
    },
    "quadrature": {
        "fem_degree": 2,
        "bem_singular_order": 4,
        "bem_regular_degree": 4,
        "bem_near_degree": 8,
    },
    "solver": {
        "tol": 1e-6,
        "max_iter": 2000,
        "preconditioner": True,
        "spai_radius": 1,
        "include_volume": False,
        "condition_number": False,
        "condition_cap": 6000,
    },
    "output": {
        "out_dir": "out",
        "probe_radius": 3.0,
        "probe_count": 100,
        "probe_center": [0.0, 0.0, 0.0],
        "write_residuals": True,
    },
    "sweep": {
        "fmin": 0.0,
        "fmax": 0.0,
        "steps": 2,
        "solve": False,
        "etas": [],
    },
}

_CHOICES = {
    ("mesh", "source"): ("builtin", "file"),
    ("flow", "kind"): ("uniform", "sphere_dipole", "nodal"),
    ("incident", "kind"): ("plane_wave", "monopole"),
    ("coupling", "formulation"): ("unstable", "stable"),
    ("coupling", "a43_sign"): (1, -1),
}


def _check_type(section, key, value, default):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = isinstance(value, type(default))
    if not ok:
        raise ConfigError(f"[{section}] {key}: expected {type(default).__name__}, got {value!r}")


def validate(raw):
    """Merge ``raw`` over the defaults, rejecting unknown tables and keys."""
    cfg = copy.deepcopy(DEFAULTS)
    for section, table in raw.items():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown table [{section}]")
        if not isinstance(table, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, value in table.items():
            if key not in DEFAULTS[section]:
                raise ConfigError(f"unknown key '{key}' in [{section}]")
            _check_type(section, key, value, DEFAULTS[section][key])
            choices = _CHOICES.get((section, key))
            if choices and value not in choices:
                raise ConfigError(f"[{section}] {key} must be one of {choices}, got {value!r}")
            cfg[section][key] = float(value) if isinstance(DEFAULTS[section][key], float) else value
    for key in ("inner_axes", "outer_axes", "center"):
        if len(cfg["mesh"][key]) != 3:
            raise ConfigError(f"[mesh] {key} needs three entries")
    if cfg["mesh"]["source"] == "file" and not cfg["mesh"]["path"]:
        raise ConfigError("[mesh] path is required when source = 'file'")
    if cfg["flow"]["kind"] == "nodal" and not cfg["flow"]["path"]:
        raise ConfigError("[flow] path is required when kind = 'nodal'")
    if not 0 <= cfg["ambient"]["mach"] < 1:
        raise ConfigError("[ambient] mach must lie in [0, 1)")
    if cfg["solver"]["tol"] <= 0:
        raise ConfigError("[solver] tol must be positive")
    return cfg


def load_config(path):
    """Read and validate a TOML case file; relative paths resolve against its directory."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    cfg = validate(raw)
    for section in ("mesh", "flow"):
        p = cfg[section]["path"]
        if p and not Path(p).is_absolute():
            cfg[section]["path"] = str(path.parent / p)
    return cfg
