"""Structured grids, cell-averaged fields, ghost cells and quadrature."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .thermo import EosParams

NG = 2  # ghost layers per side

PERIODIC = "periodic"
WALL = "wall"


@dataclass(frozen=True)
class Grid:
    """Uniform Cartesian grid in 1 or 2 dimensions.

    The last axis is the vertical one.  Boundary conditions are set per axis:
    ``"periodic"`` or ``"wall"`` (impermeable, ``u . n = 0``).
    """

    cells: tuple
    extents: tuple
    bc: tuple
    origin: tuple = None

    def __post_init__(self):
        cells = tuple(int(n) for n in self.cells)
        extents = tuple(float(e) for e in self.extents)
        bc = tuple(self.bc)
        if not 1 <= len(cells) <= 2:
            raise ValueError("only 1D and 2D grids are supported")
        if not len(cells) == len(extents) == len(bc):
            raise ValueError("cells, extents and bc must have the same length")
        if any(n < 2 for n in cells) or any(e <= 0.0 for e in extents):
            raise ValueError("need at least 2 cells and positive extents per axis")
        if any(b not in (PERIODIC, WALL) for b in bc):
            raise ValueError(f"unknown boundary condition in {bc}")
        origin = (0.0,) * len(cells) if self.origin is None else tuple(map(float, self.origin))
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "bc", bc)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def column(cls, n: int, height: float = 1.0) -> "Grid":
        return cls((n,), (height,), (WALL,))

    @classmethod
    def periodic_line(cls, n: int, length: float = 1.0) -> "Grid":
        return cls((n,), (length,), (PERIODIC,))

    @classmethod
    def slab(cls, nx: int, nz: int, width: float = 1.0, height: float = 1.0) -> "Grid":
        return cls((nx, nz), (width, height), (PERIODIC, WALL))

    @classmethod
    def periodic_box(cls, nx: int, nz: int, width: float = 1.0, height: float = 1.0) -> "Grid":
        return cls((nx, nz), (width, height), (PERIODIC, PERIODIC))

    @property
    def ndim(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> tuple:
        return self.cells

    @property
    def padded_shape(self) -> tuple:
        return tuple(n + 2 * NG for n in self.cells)

    @property
    def dx(self) -> tuple:
        return tuple(e / n for e, n in zip(self.extents, self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.dx))

    @property
    def total_volume(self) -> float:
        return float(np.prod(self.extents))

    @property
    def vertical_axis(self) -> int:
        return self.ndim - 1

    def centers(self, axis: int, ghosts: bool = False) -> np.ndarray:
        n, h, x0 = self.cells[axis], self.dx[axis], self.origin[axis]
        k = np.arange(-NG, n + NG) if ghosts else np.arange(n)
        return x0 + (k + 0.5) * h

    def faces(self, axis: int) -> np.ndarray:
        n, h, x0 = self.cells[axis], self.dx[axis], self.origin[axis]
        return x0 + np.arange(n + 1) * h

    def mesh(self, ghosts: bool = False) -> list:
        """Cell-centre coordinate arrays, broadcast to the full (padded) shape."""
        axes = [self.centers(a, ghosts) for a in range(self.ndim)]
        return list(np.meshgrid(*axes, indexing="ij"))

    def face_mesh(self, axis: int) -> list:
        """Coordinates of the faces normal to ``axis`` (``n + 1`` along it)."""
        axes = [self.faces(a) if a == axis else self.centers(a) for a in range(self.ndim)]
        return list(np.meshgrid(*axes, indexing="ij"))


def pad(arr: np.ndarray, grid: Grid, odd_axis: int | None = None) -> np.ndarray:
    """Add ``NG`` ghost layers on every axis.

    Periodic axes wrap; wall axes mirror.  The component normal to a wall is
    passed with ``odd_axis`` equal to that axis and is negated in the ghosts.
    """
    out = arr
    for ax, b in enumerate(grid.bc):
        if b == PERIODIC:
            out = np.pad(out, _pw(grid.ndim, ax), mode="wrap")
        else:
            out = np.pad(out, _pw(grid.ndim, ax), mode="symmetric")
            if odd_axis == ax:
                lo = [slice(None)] * grid.ndim
                hi = [slice(None)] * grid.ndim
                lo[ax] = slice(0, NG)
                hi[ax] = slice(-NG, None)
                out[tuple(lo)] *= -1.0
                out[tuple(hi)] *= -1.0
    return out


def _pw(ndim: int, axis: int):
    return [(NG, NG) if a == axis else (0, 0) for a in range(ndim)]


def interior(arr: np.ndarray, ndim: int) -> np.ndarray:
    return arr[(Ellipsis,) + (slice(NG, -NG),) * ndim]


@dataclass
class ConservedField:
    """Cell averages of ``(rho, m, E)`` (Euler) or ``(h, h u)`` (shallow water).

    ``energy`` is ``None`` in shallow-water mode.  ``work`` accumulates the
    potential-force work ``eps^-2 int int m . grad F`` done since ``t = 0``.
    """

    rho: np.ndarray
    m: np.ndarray
    energy: np.ndarray | None
    eps: float
    t: float = 0.0
    work: float = 0.0
    clipped: int = 0

    @property
    def mode(self) -> str:
        return "swe" if self.energy is None else "euler"

    @property
    def ndim(self) -> int:
        return self.m.shape[0]

    def velocity(self) -> np.ndarray:
        return self.m / self.rho

    def pressure(self, eos: EosParams | None = None) -> np.ndarray:
        if self.energy is None:
            return 0.5 * self.rho**2
        kin = 0.5 * np.sum(self.m**2, axis=0) / self.rho
        return self.eps**2 * (self.energy - kin) / eos.c_v

    def copy(self) -> "ConservedField":
        return replace(
            self, rho=self.rho.copy(), m=self.m.copy(),
            energy=None if self.energy is None else self.energy.copy(),
        )

    @classmethod
    def from_primitives(cls, rho, u, p, eps: float, eos: EosParams | None = None,
                        mode: str = "euler", t: float = 0.0) -> "ConservedField":
        rho = np.asarray(rho, dtype=float)
        u = np.asarray(u, dtype=float)
        m = rho * u
        if mode == "swe":
            return cls(rho.copy(), m, None, eps, t)
        energy = 0.5 * rho * np.sum(u**2, axis=0) + eos.c_v * np.asarray(p, dtype=float) / eps**2
        return cls(rho.copy(), m, energy, eps, t)


def total_energy_density(rho, u, p, eps: float, eos: EosParams | None):
    """Scaled energy ``1/2 rho |u|^2 + c_v p / eps^2`` (shallow water: ``p / eps^2``)."""
    kin = 0.5 * rho * np.sum(u**2, axis=0)
    if eos is None:
        return kin + p / eps**2
    return kin + eos.c_v * p / eps**2


def ghost_fill(field_: ConservedField, grid: Grid, profile=None,
               eos: EosParams | None = None) -> ConservedField:
    """Return a copy of ``field_`` extended by ``NG`` ghost layers per side.

    Periodic axes are copied; walls reflect the normal momentum.  With a
    static ``profile`` the wall ghosts carry the interior deviation from the
    profile on top of the profile's own ghost values, so a field at rest on
    the profile continues it exactly.
    """
    rho, u, p = field_.rho, field_.velocity(), field_.pressure(eos)
    if profile is not None:
        rho_g = pad(rho - profile.rho, grid) + profile.rho_g
        p_g = pad(p - profile.p, grid) + profile.p_g
    else:
        rho_g, p_g = pad(rho, grid), pad(p, grid)
    inner = (slice(NG, -NG),) * grid.ndim
    rho_g[inner] = rho
    p_g[inner] = p
    u_g = np.stack([pad(u[d], grid, odd_axis=d) for d in range(grid.ndim)])
    m_g = rho_g * u_g
    m_g[(slice(None),) + inner] = field_.m
    if field_.mode == "swe":
        return ConservedField(rho_g, m_g, None, field_.eps, field_.t, field_.work)
    energy = total_energy_density(rho_g, u_g, p_g, field_.eps, eos)
    energy[inner] = field_.energy
    return ConservedField(rho_g, m_g, energy, field_.eps, field_.t, field_.work)


def integrate(values, grid: Grid) -> float:
    """Midpoint-rule integral over the domain; infinities propagate."""
    return float(np.sum(values) * grid.cell_volume)


def axis_names(grid: Grid) -> list:
    return ["x", "z"] if grid.ndim == 2 else ["x"]


def write_snapshot(path, field_: ConservedField, grid: Grid, eos: EosParams | None = None,
                   extra: dict | None = None) -> None:
    """One CSV row per cell: coordinates, state components, pressure, extras."""
    coords = grid.mesh()
    names = axis_names(grid)
    cols = {n: c for n, c in zip(names, coords)}
    if field_.mode == "swe":
        cols["h"] = field_.rho
        for d, n in enumerate(names):
            cols[f"hu_{n}"] = field_.m[d]
    else:
        cols["rho"] = field_.rho
        for d, n in enumerate(names):
            cols[f"m_{n}"] = field_.m[d]
        cols["E"] = field_.energy
    cols["p"] = field_.pressure(eos)
    for k, v in (extra or {}).items():
        cols[k] = np.broadcast_to(v, grid.shape)
    _write_columns(path, cols)


def _write_columns(path, cols: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    keys = list(cols)
    flat = [np.asarray(cols[k]).ravel() for k in keys]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for row in zip(*flat):
            w.writerow([repr(float(v)) for v in row])


def write_table(path, rows: list, columns: list | None = None) -> None:
    """Write a list of dicts as CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = columns or (list(rows[0]) if rows else [])
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow(r)


def read_table(path) -> list:
    with Path(path).open() as fh:
        return list(csv.DictReader(fh))
