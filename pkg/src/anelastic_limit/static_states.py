"""Hydrostatic equilibria ``grad p = rho grad F`` on a grid.

Three families are provided: the isothermal exponential atmosphere, the
isentropic polytropic atmosphere and the shallow-water lake at rest
``h = b + c_M``.  In every case the density is a function of the potential
alone, which is what lets us evaluate the profile at cell centres, ghost
cells and faces consistently.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .grid_fields import NG, PERIODIC, Grid, _write_columns, axis_names
from .thermo import EosParams

ISOTHERMAL = "isothermal"
ISENTROPIC = "isentropic"
SWE_LAKE = "swe_lake"


class NonPositiveProfile(ValueError):
    """The requested static state has a non-positive density somewhere."""


@dataclass(frozen=True)
class StaticProfile:
    """A discrete hydrostatic state.

    ``rho``, ``p``, ``F`` hold cell-centre values; the ``_g`` variants include
    ``NG`` ghost layers per side; ``rho_face[a]``, ``p_face[a]``, ``F_face[a]``
    hold values on the faces normal to axis ``a``.
    """

    kind: str
    grid: Grid
    c_M: float
    total_mass: float
    rho: np.ndarray
    p: np.ndarray
    F: np.ndarray
    rho_g: np.ndarray
    p_g: np.ndarray
    F_g: np.ndarray
    rho_face: tuple
    p_face: tuple
    F_face: tuple
    params: dict

    @property
    def theta(self) -> np.ndarray:
        return self.p / self.rho

    @property
    def image(self) -> np.ndarray:
        """The set of ``(rho, p)`` values taken by the profile, shape ``(k, 2)``."""
        pts = np.stack([self.rho.ravel(), self.p.ravel()], axis=1)
        return np.unique(pts, axis=0)

    def density_of_potential(self, F) -> np.ndarray:
        return _density(self.kind, self.c_M, np.asarray(F, dtype=float), self.params)

    def pressure_of_density(self, rho) -> np.ndarray:
        return _pressure(self.kind, np.asarray(rho, dtype=float), self.params)

    def with_values(self, rho=None, p=None) -> "StaticProfile":
        """Copy with replaced cell values (used to build perturbed profiles)."""
        return replace(
            self,
            rho=self.rho if rho is None else np.asarray(rho, dtype=float),
            p=self.p if p is None else np.asarray(p, dtype=float),
        )


# ---------------------------------------------------------------------------
# potential handling


def gravity_potential(*coords):
    """``F = -x_vert``: the last coordinate is the vertical one."""
    return -coords[-1]


def _potential_values(F, grid: Grid):
    """Evaluate ``F`` at centres, ghost centres and faces.

    ``F`` may be ``None`` (gravity), a callable of the coordinates, or an
    array of cell values (tabulated; faces by averaging, wall ghosts by
    linear extrapolation).
    """
    if F is None:
        F = gravity_potential
    if callable(F):
        cells = np.asarray(F(*grid.mesh()), dtype=float) * np.ones(grid.shape)
        ghosts = np.asarray(F(*grid.mesh(ghosts=True)), dtype=float) * np.ones(grid.padded_shape)
        faces = tuple(
            np.asarray(F(*grid.face_mesh(a)), dtype=float) * np.ones(grid.face_mesh(a)[0].shape)
            for a in range(grid.ndim)
        )
        return cells, ghosts, faces, True
    cells = np.asarray(F, dtype=float)
    if cells.shape != grid.shape:
        raise ValueError(f"tabulated potential has shape {cells.shape}, grid is {grid.shape}")
    ghosts = _extrapolate_pad(cells, grid)
    faces = []
    for a in range(grid.ndim):
        sl = [slice(NG, -NG)] * grid.ndim
        sl[a] = slice(NG - 1, -NG)
        left = ghosts[tuple(sl)]
        sl[a] = slice(NG, ghosts.shape[a] - NG + 1)
        right = ghosts[tuple(sl)]
        faces.append(0.5 * (left + right))
    return cells, ghosts, tuple(faces), False


def _extrapolate_pad(arr, grid: Grid):
    out = arr
    for ax, b in enumerate(grid.bc):
        pw = [(NG, NG) if a == ax else (0, 0) for a in range(grid.ndim)]
        if b == PERIODIC:
            out = np.pad(out, pw, mode="wrap")
        else:
            out = np.pad(out, pw, mode="reflect", reflect_type="odd")
    return out


# ---------------------------------------------------------------------------
# kind-specific laws


def _density(kind, c_M, F, params):
    if kind == ISOTHERMAL:
        return c_M * np.exp(F / params["theta_bar"])
    if kind == ISENTROPIC:
        bracket = c_M + params["k"] * F
        with np.errstate(invalid="ignore"):
            return np.where(bracket > 0.0, np.abs(bracket) ** params["n"], 0.0)
    if kind == SWE_LAKE:
        return c_M + F
    raise ValueError(kind)


def _pressure(kind, rho, params):
    if kind == ISOTHERMAL:
        return params["theta_bar"] * rho
    if kind == ISENTROPIC:
        return params["K"] * rho ** params["gamma"]
    if kind == SWE_LAKE:
        return 0.5 * rho**2
    raise ValueError(kind)


def _assemble(kind, grid, c_M, M, F_vals, params):
    F_c, F_g, F_f, _ = F_vals
    rho = _density(kind, c_M, F_c, params)
    rho_f = tuple(_density(kind, c_M, f, params) for f in F_f)
    if np.any(rho <= 0.0) or any(np.any(r <= 0.0) for r in rho_f):
        raise NonPositiveProfile(f"{kind} profile with c_M={c_M!r} is not strictly positive")
    rho_g = _density(kind, c_M, F_g, params)
    rho_g = np.maximum(rho_g, 1e-300)
    return StaticProfile(
        kind=kind, grid=grid, c_M=float(c_M), total_mass=float(M),
        rho=rho, p=_pressure(kind, rho, params), F=F_c,
        rho_g=rho_g, p_g=_pressure(kind, rho_g, params), F_g=F_g,
        rho_face=rho_f, p_face=tuple(_pressure(kind, r, params) for r in rho_f), F_face=F_f,
        params=dict(params),
    )


def bisect(fn, lo: float, hi: float, tol: float = 1e-14, max_iter: int = 400) -> float:
    """Root of an increasing function on ``[lo, hi]`` by bisection (relative tolerance)."""
    flo, fhi = fn(lo), fn(hi)
    if flo > 0.0 or fhi < 0.0:
        raise ValueError("root not bracketed")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol * max(abs(mid), 1.0):
            break
        if fn(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _horizontal_area(grid: Grid) -> float:
    return float(np.prod(grid.extents[:-1])) if grid.ndim > 1 else 1.0


def _vertical_bounds(grid: Grid):
    z0 = grid.origin[-1]
    return z0, z0 + grid.extents[-1]


# ---------------------------------------------------------------------------
# builders

NORMALIZATIONS = ("exact", "cell_sum")


def _check_normalization(normalization: str) -> None:
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")


def build_isothermal(theta_bar: float, M: float, grid: Grid, F=None,
                     normalization: str = "exact") -> StaticProfile:
    """``rho = c_M exp(F / theta_bar)``, ``p = theta_bar rho``.

    With the default gravity potential and ``normalization="exact"`` the
    constant ``c_M`` makes the exact integral of the density equal ``M``;
    otherwise the cell sum is normalised.
    """
    if not (theta_bar > 0.0 and M > 0.0):
        raise ValueError("theta_bar and M must be positive")
    _check_normalization(normalization)
    params = {"theta_bar": float(theta_bar)}
    F_vals = _potential_values(F, grid)
    if F is None and normalization == "exact":
        c_M = M / isothermal_unit_mass(theta_bar, grid)
    else:
        c_M = M / (np.sum(np.exp(F_vals[0] / theta_bar)) * grid.cell_volume)
    return _assemble(ISOTHERMAL, grid, c_M, M, F_vals, params)


def isothermal_unit_mass(theta_bar: float, grid: Grid) -> float:
    """Exact mass of ``exp(-z / theta_bar)`` over the domain."""
    z0, z1 = _vertical_bounds(grid)
    return _horizontal_area(grid) * theta_bar * (math.exp(-z0 / theta_bar) - math.exp(-z1 / theta_bar))


def isentropic_mass(c_M: float, grid: Grid, eos: EosParams) -> float:
    """Exact mass of ``(c_M - k z)^n`` over the domain (gravity potential)."""
    K = math.exp(eos.s_bar / eos.c_v)
    k = (eos.gamma - 1.0) / (eos.gamma * K)
    n = 1.0 / (eos.gamma - 1.0)
    z0, z1 = _vertical_bounds(grid)
    top = max(c_M - k * z1, 0.0)
    bot = max(c_M - k * z0, 0.0)
    return _horizontal_area(grid) * (bot ** (n + 1.0) - top ** (n + 1.0)) / (k * (n + 1.0))


def build_isentropic(s_bar: float, M: float, grid: Grid, eos: EosParams, F=None,
                     normalization: str = "exact") -> StaticProfile:
    """Polytropic atmosphere ``p = exp(s_bar / c_v) rho^gamma`` in equilibrium with ``F``.

    ``rho = (c_M + k F)^(1 / (gamma - 1))`` with ``k = (gamma - 1) / (gamma K)``,
    ``K = exp(s_bar / c_v)``; for ``F = -z`` this is the familiar linear-in-z
    enthalpy profile.  Raises :class:`NonPositiveProfile` if no admissible
    ``c_M`` gives the requested mass.
    """
    if not M > 0.0:
        raise ValueError("M must be positive")
    _check_normalization(normalization)
    K = math.exp(s_bar / eos.c_v)
    params = {
        "K": K, "gamma": eos.gamma, "n": 1.0 / (eos.gamma - 1.0),
        "k": (eos.gamma - 1.0) / (eos.gamma * K), "s_bar": float(s_bar),
    }
    F_vals = _potential_values(F, grid)
    eos_s = EosParams(c_v=eos.c_v, s_bar=s_bar)
    F_all = np.concatenate([F_vals[0].ravel()] + [f.ravel() for f in F_vals[2]])
    c_min = -params["k"] * float(np.min(F_all))  # bracket vanishes at the minimum of F

    if F is None and normalization == "exact":
        def mass(c):
            return isentropic_mass(c, grid, eos_s)
    else:
        def mass(c):
            return float(np.sum(_density(ISENTROPIC, c, F_vals[0], params))) * grid.cell_volume

    if mass(c_min) >= M:
        raise NonPositiveProfile(
            f"mass {M} is at or below the minimum {mass(c_min)} of a positive isentropic profile"
        )
    hi = max(c_min, 0.0) + 1.0
    while mass(hi) < M:
        hi = 2.0 * hi + 1.0
    c_M = bisect(lambda c: mass(c) - M, c_min, hi)
    if F is None and normalization == "exact" and params["n"] == 1.0:
        c_M = isentropic_c_M_linear(M, grid, eos_s)
    return _assemble(ISENTROPIC, grid, c_M, M, F_vals, params)


def isentropic_c_M_linear(M: float, grid: Grid, eos: EosParams) -> float:
    """Closed form of ``c_M`` for ``gamma = 2`` (density linear in z)."""
    K = math.exp(eos.s_bar / eos.c_v)
    k = (eos.gamma - 1.0) / (eos.gamma * K)
    z0, z1 = _vertical_bounds(grid)
    area = _horizontal_area(grid)
    return M / (area * (z1 - z0)) + 0.5 * k * (z0 + z1)


def build_swe_lake(b, M: float, grid: Grid) -> StaticProfile:
    """Lake at rest ``h = b + c_M``, ``p = h^2 / 2``; ``b`` plays the role of ``F``.

    ``b`` is a callable of the coordinates or an array of cell values; ``c_M``
    normalises the cell sum of ``h`` to ``M``.
    """
    if b is None:
        b = np.zeros(grid.shape)
    F_vals = _potential_values(b, grid)
    c_M = (M - float(np.sum(F_vals[0])) * grid.cell_volume) / grid.total_volume
    return _assemble(SWE_LAKE, grid, c_M, M, F_vals, {"gamma": 2.0, "K": 0.5})


# ---------------------------------------------------------------------------
# checks and I/O


def face_mean_density(kind: str, rho_l, rho_r, params) -> np.ndarray:
    """Density mean that makes ``Delta p = rho_mean Delta F`` exact for the given law."""
    rho_l = np.asarray(rho_l, dtype=float)
    rho_r = np.asarray(rho_r, dtype=float)
    same = rho_l == rho_r
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind == ISOTHERMAL:
            out = (rho_r - rho_l) / (np.log(rho_r) - np.log(rho_l))
        elif kind == ISENTROPIC:
            g = params["gamma"]
            out = (g - 1.0) / g * (rho_r**g - rho_l**g) / (rho_r ** (g - 1.0) - rho_l ** (g - 1.0))
        else:
            out = 0.5 * (rho_l + rho_r)
    return np.where(same, rho_l, out)


def verify_hydrostatic(profile: StaticProfile, grid: Grid | None = None) -> float:
    """Largest face residual ``|D p - rho_face D F|`` over interior (and periodic) faces."""
    grid = grid or profile.grid
    worst = 0.0
    for a in range(grid.ndim):
        h = grid.dx[a]
        rl, rr = profile.rho, np.roll(profile.rho, -1, axis=a)
        dp = (np.roll(profile.p, -1, axis=a) - profile.p) / h
        dF = (np.roll(profile.F, -1, axis=a) - profile.F) / h
        res = np.abs(dp - face_mean_density(profile.kind, rl, rr, profile.params) * dF)
        if grid.bc[a] != PERIODIC:
            # the rolled last layer pairs the top cell with the bottom one
            res = np.delete(res, -1, axis=a)
        if res.size:
            worst = max(worst, float(np.max(res)))
    return worst


def write_profile_csv(path, profile: StaticProfile) -> None:
    grid = profile.grid
    cols = {n: c for n, c in zip(axis_names(grid), grid.mesh())}
    cols.update(rho_tilde=profile.rho, p_tilde=profile.p, theta_tilde=profile.theta, F=profile.F)
    _write_columns(Path(path), cols)
