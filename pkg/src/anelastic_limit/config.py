"""Run configuration: defaults, YAML/JSON loading and object builders.

Recognised keys (all optional)::

    mode: euler | swe | anelastic
    flux: rusanov | hllc
    cfl, eps, end_time, reconstruction, low_mach_fix
    grid:    {kind: column | periodic_line | slab | periodic_box, nx, nz, width, height}
    profile: {kind: isentropic | isothermal | swe_lake | none, c_v, s_bar, theta_bar, mass,
              bottom_amplitude, bottom_wavenumber}
    init:    {kind: static | riemann | well_prepared | taylor_green | streamfunction,
              left: {rho, u, p}, right: {rho, u, p}, x0, seed, psi_amplitude, alpha, kappa, sigma}
    sweep:   {eps_list, workers, null, nx, nz, c_v, s_bar, mass, end_time, sample_dt, low_mach_fix}
    output:  {cadence, dir}
"""
from __future__ import annotations

import copy
import json
from pathlib import Path

import numpy as np
import yaml

from .grid_fields import ConservedField, Grid
from .limit_harness import SweepConfig, WellPreparedSpec
from .static_states import build_isentropic, build_isothermal, build_swe_lake
from .thermo import EosParams

DEFAULTS = {
    "mode": "euler",
    "flux": "rusanov",
    "cfl": 0.4,
    "eps": 1.0,
    "end_time": 0.2,
    "reconstruction": "muscl_minmod",
    "low_mach_fix": False,
    "grid": {"kind": "periodic_line", "nx": 400, "nz": 1, "width": 1.0, "height": 1.0},
    "profile": {
        "kind": "none", "c_v": 2.5, "s_bar": 0.0, "theta_bar": 1.0, "mass": 1.0,
        "bottom_amplitude": 0.1, "bottom_wavenumber": 1,
    },
    "init": {
        "kind": "riemann",
        "left": {"rho": 1.0, "u": 0.0, "p": 1.0},
        "right": {"rho": 0.125, "u": 0.0, "p": 0.1},
        "x0": 0.5,
        "seed": 0,
        "psi_amplitude": 0.06,
        "alpha": 1.0,
        "kappa": 0.15,
        "sigma": 0.5,
    },
    "sweep": {
        "eps_list": [0.4, 0.2, 0.1, 0.05], "workers": 1, "null": False,
        "nx": 128, "nz": 128, "c_v": 1.0, "s_bar": 0.0, "mass": 1.0,
        "end_time": 0.5, "sample_dt": 0.025, "low_mach_fix": True,
    },
    "output": {"cadence": 0.05, "dir": "out"},
}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path}{key}")
        if isinstance(base[key], dict) and key not in ("left", "right"):
            if not isinstance(val, dict):
                raise ConfigError(f"{path}{key} must be a mapping")
            out[key] = _merge(base[key], val, f"{path}{key}.")
        else:
            out[key] = val
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults overlaid with a YAML or JSON file and then ``overrides``."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        text = Path(path).read_text()
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("top level of a config file must be a mapping")
        cfg = _merge(cfg, data)
    if overrides:
        cfg = _merge(cfg, overrides)
    return cfg


def build_grid(cfg: dict) -> Grid:
    g = cfg["grid"]
    kind = g["kind"]
    if kind == "column":
        return Grid.column(int(g["nz"]), g["height"])
    if kind == "periodic_line":
        return Grid.periodic_line(int(g["nx"]), g["width"])
    if kind == "slab":
        return Grid.slab(int(g["nx"]), int(g["nz"]), g["width"], g["height"])
    if kind == "periodic_box":
        return Grid.periodic_box(int(g["nx"]), int(g["nz"]), g["width"], g["height"])
    raise ConfigError(f"unknown grid kind {kind!r}")


def build_eos(cfg: dict) -> EosParams:
    p = cfg["profile"]
    return EosParams(c_v=float(p["c_v"]), s_bar=float(p["s_bar"]))


def bottom(cfg: dict, grid: Grid):
    """Bottom topography ``b = A sin(2 pi k x / L)``."""
    p = cfg["profile"]
    A, k = float(p["bottom_amplitude"]), int(p["bottom_wavenumber"])
    L, x0 = grid.extents[0], grid.origin[0]
    return lambda *c: A * np.sin(2.0 * np.pi * k * (c[0] - x0) / L)


def build_profile(cfg: dict, grid: Grid, eos: EosParams):
    """Static profile, or ``None`` for ``profile.kind: none``."""
    p = cfg["profile"]
    kind = p["kind"]
    if kind == "none":
        return None
    if kind == "isentropic":
        return build_isentropic(float(p["s_bar"]), float(p["mass"]), grid, eos)
    if kind == "isothermal":
        return build_isothermal(float(p["theta_bar"]), float(p["mass"]), grid)
    if kind == "swe_lake":
        return build_swe_lake(bottom(cfg, grid), float(p["mass"]), grid)
    raise ConfigError(f"unknown profile kind {kind!r}")


def riemann_data(cfg: dict, grid: Grid, eos: EosParams | None) -> ConservedField:
    """Two constant states split at ``x0`` along the first axis."""
    init = cfg["init"]
    x = grid.mesh()[0]
    left = x < init["x0"]
    L, R = init["left"], init["right"]
    rho = np.where(left, L["rho"], R["rho"]).astype(float)
    u = np.zeros((grid.ndim,) + grid.shape)
    u[0] = np.where(left, L["u"], R["u"])
    mode = cfg["mode"]
    if mode == "swe":
        p = 0.5 * rho**2
        return ConservedField.from_primitives(rho, u, p, float(cfg["eps"]), None, mode="swe")
    p = np.where(left, L["p"], R["p"]).astype(float)
    return ConservedField.from_primitives(rho, u, p, float(cfg["eps"]), eos)


def static_data(profile, cfg: dict, eos: EosParams | None) -> ConservedField:
    if profile is None:
        raise ConfigError("init.kind static needs a profile")
    u = np.zeros((profile.grid.ndim,) + profile.grid.shape)
    mode = "swe" if profile.kind == "swe_lake" else "euler"
    return ConservedField.from_primitives(profile.rho.copy(), u, profile.p.copy(), float(cfg["eps"]),
                                          None if mode == "swe" else eos, mode=mode)


def sample_times(cfg: dict) -> np.ndarray:
    T = float(cfg["end_time"])
    dt = float(cfg["output"]["cadence"])
    n = max(1, int(np.ceil(T / dt - 1e-9)))
    return np.minimum(np.arange(n + 1) * dt, T)


def sweep_config(cfg: dict):
    """``(eps_list, WellPreparedSpec, SweepConfig, workers)`` for the limit sweep."""
    sw, init = cfg["sweep"], cfg["init"]
    if sw["null"]:
        spec = WellPreparedSpec.null()
    else:
        spec = WellPreparedSpec(
            psi_amplitude=float(init["psi_amplitude"]), alpha=float(init["alpha"]),
            kappa=float(init["kappa"]), sigma=float(init["sigma"]), seed=int(init["seed"]),
        )
    sc = SweepConfig(
        nx=int(sw["nx"]), nz=int(sw["nz"]), c_v=float(sw["c_v"]), s_bar=float(sw["s_bar"]),
        mass=float(sw["mass"]), end_time=float(sw["end_time"]), sample_dt=float(sw["sample_dt"]),
        flux=cfg["flux"], cfl=float(cfg["cfl"]), reconstruction=cfg["reconstruction"],
        low_mach_fix=bool(sw["low_mach_fix"]),
    )
    return [float(e) for e in sw["eps_list"]], spec, sc, int(sw["workers"])
