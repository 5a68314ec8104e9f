"""Well-balanced finite-volume integrator for the scaled Euler and shallow-water systems.

The scaled system

    d_t rho + div m = 0
    d_t m + div(m u) + grad p / eps^2 = rho grad F / eps^2
    d_t E + div((E + p / eps^2) u) = m . grad F / eps^2,    E = |m|^2 / (2 rho) + c_v p / eps^2

is ordinary gas dynamics for the pressure ``P = p / eps^2``, so the fluxes are
the textbook ones with sound speed ``c / eps``.  In shallow-water mode ``rho``
is the depth ``h``, ``p = h^2 / 2`` and there is no energy equation.

Interface states are reconstructed from the deviation ``(rho - rho_tilde, u,
p - p_tilde)`` and added to the static profile's face values, and the gravity
source uses the same face pressures, so a fluid at rest on the static profile
produces identically zero updates.  The energy source is built from the mass
fluxes so that ``sum(E - rho F / eps^2)`` is conserved to round-off.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .grid_fields import NG, WALL, ConservedField, Grid, integrate, pad
from .thermo import EosParams, entropy

RUSANOV = "rusanov"
HLLC = "hllc"
FIRST_ORDER = "first_order"
MUSCL = "muscl_minmod"


class CFLViolation(RuntimeError):
    """The stable time step has collapsed."""


class PositivityLoss(RuntimeError):
    """Too many cells had to be clipped to the density or pressure floor."""


@dataclass(frozen=True)
class SolverConfig:
    """Numerical parameters of the finite-volume integrator.

    ``low_mach_fix`` rescales the velocity jump seen by the Riemann solver by
    the local Mach number, which removes the ``O(1/eps)`` velocity dissipation
    that otherwise swamps the incompressible dynamics at small ``eps``.
    """

    eps: float = 1.0
    flux: str = RUSANOV
    cfl: float = 0.4
    reconstruction: str = MUSCL
    time_integrator: str = "ssp_rk2"
    end_time: float = 1.0
    mode: str = "euler"
    low_mach_fix: bool = False
    floor_fraction: float = 1e-10
    max_clip_fraction: float = 0.01
    min_dt: float = 1e-12

    def __post_init__(self):
        if not self.eps > 0.0:
            raise ValueError("eps must be positive")
        if not 0.0 < self.cfl <= 1.0:
            raise ValueError("cfl must lie in (0, 1]")
        if self.flux not in (RUSANOV, HLLC):
            raise ValueError(f"unknown flux {self.flux!r}")
        if self.reconstruction not in (FIRST_ORDER, MUSCL):
            raise ValueError(f"unknown reconstruction {self.reconstruction!r}")
        if self.time_integrator != "ssp_rk2":
            raise ValueError("only ssp_rk2 is available")
        if self.mode not in ("euler", "swe"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class _Background:
    """Static state seen by the scheme (zero when no profile is given)."""

    rho: np.ndarray
    p: np.ndarray
    F_g: np.ndarray
    rho_face: tuple
    p_face: tuple
    floor: float


def _background(grid: Grid, profile, reference_rho) -> _Background:
    if profile is None:
        zero_faces = tuple(np.zeros(grid.face_mesh(a)[0].shape) for a in range(grid.ndim))
        return _Background(
            np.zeros(grid.shape), np.zeros(grid.shape), np.zeros(grid.padded_shape),
            zero_faces, zero_faces, float(np.max(reference_rho)),
        )
    return _Background(
        profile.rho, profile.p, profile.F_g, profile.rho_face, profile.p_face,
        float(np.max(profile.rho)),
    )


# ---------------------------------------------------------------------------
# reconstruction


def _minmod(a, b):
    return np.where(a * b > 0.0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _face_pairs(q: np.ndarray, muscl: bool):
    """Left/right face values along the last axis of a padded array.

    Returns arrays with ``n + 1`` entries (one per face of the interior).
    """
    n = q.shape[-1] - 2 * NG
    if muscl:
        d = np.diff(q, axis=-1)
        s = _minmod(d[..., :-1], d[..., 1:])  # slopes of padded cells 1 .. n + 2
        left = q[..., 1:n + 2] + 0.5 * s[..., 0:n + 1]
        right = q[..., 2:n + 3] - 0.5 * s[..., 1:n + 2]
    else:
        left = q[..., 1:n + 2]
        right = q[..., 2:n + 3]
    return left, right


def _interior_except(arr: np.ndarray, axis: int, ndim: int, lead: int = 0) -> np.ndarray:
    """Restrict a padded array to interior cells on every axis but ``axis``; move ``axis`` last."""
    sl = [slice(None)] * lead + [
        slice(None) if a == axis else slice(NG, -NG) for a in range(ndim)
    ]
    return np.moveaxis(arr[tuple(sl)], lead + axis, -1)


# ---------------------------------------------------------------------------
# fluxes


def _physical_flux(rho, u, P, energy, d):
    """Flux along axis ``d`` for the pressure ``P`` (already divided by eps^2)."""
    un = u[d]
    f_rho = rho * un
    f_m = rho * un * u
    f_m[d] = f_m[d] + P
    f_e = None if energy is None else (energy + P) * un
    return f_rho, f_m, f_e


def _conserved(rho, u, energy):
    return rho, rho * u, energy


def _total_energy(rho, u, P, c_v):
    return 0.5 * rho * np.sum(u * u, axis=0) + c_v * P


def _rusanov(sl, sr, d):
    (rl, ul, Pl, El, al), (rr, ur, Pr, Er, ar) = sl, sr
    fl = _physical_flux(rl, ul, Pl, El, d)
    fr = _physical_flux(rr, ur, Pr, Er, d)
    a = np.maximum(np.abs(ul[d]) + al, np.abs(ur[d]) + ar)
    f_rho = 0.5 * (fl[0] + fr[0]) - 0.5 * a * (rr - rl)
    f_m = 0.5 * (fl[1] + fr[1]) - 0.5 * a * (rr * ur - rl * ul)
    f_e = None if El is None else 0.5 * (fl[2] + fr[2]) - 0.5 * a * (Er - El)
    return f_rho, f_m, f_e


def _hllc(sl, sr, d):
    (rl, ul, Pl, El, al), (rr, ur, Pr, Er, ar) = sl, sr
    unl, unr = ul[d], ur[d]
    s_l = np.minimum(unl - al, unr - ar)
    s_r = np.maximum(unl + al, unr + ar)
    denom = rl * (s_l - unl) - rr * (s_r - unr)
    s_star = (Pr - Pl + rl * unl * (s_l - unl) - rr * unr * (s_r - unr)) / denom

    def star(r, u, P, E, s):
        fac = r * (s - u[d]) / (s - s_star)
        m_star = fac * u
        m_star[d] = fac * s_star
        e_star = None
        if E is not None:
            e_star = fac * (E / r + (s_star - u[d]) * (s_star + P / (r * (s - u[d]))))
        return fac, m_star, e_star

    fl = _physical_flux(rl, ul, Pl, El, d)
    fr = _physical_flux(rr, ur, Pr, Er, d)
    ql = _conserved(rl, ul, El)
    qr = _conserved(rr, ur, Er)
    with np.errstate(divide="ignore", invalid="ignore"):
        stl = star(rl, ul, Pl, El, s_l)
        str_ = star(rr, ur, Pr, Er, s_r)
    out = []
    for k in range(3):
        if fl[k] is None:
            out.append(None)
            continue
        f_sl = fl[k] + s_l * (stl[k] - ql[k])
        f_sr = fr[k] + s_r * (str_[k] - qr[k])
        out.append(np.where(
            0.0 <= s_l, fl[k],
            np.where(0.0 <= s_star, f_sl, np.where(0.0 <= s_r, f_sr, fr[k])),
        ))
    return tuple(out)


def _low_mach_velocities(ul, ur, al, ar):
    """Scale the velocity jump by the local Mach number (both components)."""
    mach = np.maximum(
        np.sqrt(np.sum(ul * ul, axis=0)) / al, np.sqrt(np.sum(ur * ur, axis=0)) / ar
    )
    z = np.minimum(1.0, mach)
    mean = 0.5 * (ul + ur)
    half_jump = 0.5 * z * (ul - ur)
    return mean + half_jump, mean - half_jump


# ---------------------------------------------------------------------------
# semi-discrete operator


def _primitives(f: ConservedField, eos: EosParams):
    rho = f.rho
    u = f.m / rho
    if f.mode == "swe":
        p = 0.5 * rho * rho
    else:
        kin = 0.5 * np.sum(f.m * u, axis=0)
        p = f.eps**2 * (f.energy - kin) / eos.c_v
    return rho, u, p


def _rhs(f: ConservedField, grid: Grid, bg: _Background, cfg: SolverConfig, eos: EosParams):
    """Time derivative of the conserved variables and the rate of force work."""
    swe = f.mode == "swe"
    nd = grid.ndim
    inv_eps2 = 1.0 / (cfg.eps * cfg.eps)
    c_v = 1.0 if swe else eos.c_v
    gamma = 2.0 if swe else eos.gamma
    muscl = cfg.reconstruction == MUSCL

    rho, u, p = _primitives(f, eos)
    drho_g = pad(rho - bg.rho, grid)
    dp_g = None if swe else pad(p - bg.p, grid)
    u_g = np.stack([pad(u[d], grid, odd_axis=d) for d in range(nd)])

    d_rho = np.zeros(grid.shape)
    d_m = np.zeros((nd,) + grid.shape)
    d_e = None if swe else np.zeros(grid.shape)
    work_density = np.zeros(grid.shape)
    ratio = np.where(bg.rho > 0.0, rho / np.where(bg.rho > 0.0, bg.rho, 1.0), 0.0)

    for d in range(nd):
        h = grid.dx[d]
        rf = np.moveaxis(bg.rho_face[d], d, -1)
        pf = np.moveaxis(bg.p_face[d], d, -1)
        dr_pair = _face_pairs(_interior_except(drho_g, d, nd), muscl)
        u_pair = _face_pairs(_interior_except(u_g, d, nd, lead=1), muscl)
        dp_pair = None if swe else _face_pairs(_interior_except(dp_g, d, nd), muscl)
        states = []
        for side in (0, 1):
            r_, uu = rf + dr_pair[side], u_pair[side]
            p_ = 0.5 * r_ * r_ if swe else pf + dp_pair[side]
            bad = (r_ <= 0.0) | (p_ <= 0.0)
            if muscl and np.any(bad):
                # first-order deviation where the limited state is not admissible
                r1 = rf + _face_pairs(_interior_except(drho_g, d, nd), False)[side]
                p1 = 0.5 * r1 * r1 if swe else pf + _face_pairs(
                    _interior_except(dp_g, d, nd), False)[side]
                u1 = _face_pairs(_interior_except(u_g, d, nd, lead=1), False)[side]
                r_, p_, uu = np.where(bad, r1, r_), np.where(bad, p1, p_), np.where(bad, u1, uu)
                bad = (r_ <= 0.0) | (p_ <= 0.0)
            if np.any(bad):
                # last resort: the raw neighbouring cell state (not well-balanced)
                r_raw = _face_pairs(_interior_except(pad(rho, grid), d, nd), False)[side]
                p_raw = _face_pairs(_interior_except(pad(p, grid), d, nd), False)[side]
                r_, p_ = np.where(bad, r_raw, r_), np.where(bad, p_raw, p_)
            states.append((r_, uu, p_))
        (rl, ul_, pl), (rr, ur_, pr) = states
        Pl, Pr = pl * inv_eps2, pr * inv_eps2
        al = np.sqrt(gamma * Pl / rl)
        ar = np.sqrt(gamma * Pr / rr)
        if cfg.low_mach_fix:
            ul_, ur_ = _low_mach_velocities(ul_, ur_, al, ar)
        El = None if swe else _total_energy(rl, ul_, Pl, c_v)
        Er = None if swe else _total_energy(rr, ur_, Pr, c_v)
        solver = _rusanov if cfg.flux == RUSANOV else _hllc
        f_rho, f_m, f_e = solver((rl, ul_, Pl, El, al), (rr, ur_, Pr, Er, ar), d)
        if grid.bc[d] == WALL:
            for arr in (f_rho, f_e):
                if arr is not None:
                    arr[..., 0] = 0.0
                    arr[..., -1] = 0.0
            for k in range(nd):
                if k != d:
                    f_m[k][..., 0] = 0.0
                    f_m[k][..., -1] = 0.0

        d_rho -= np.moveaxis(np.diff(f_rho, axis=-1), -1, d) / h
        for k in range(nd):
            d_m[k] -= np.moveaxis(np.diff(f_m[k], axis=-1), -1, d) / h
        if not swe:
            d_e -= np.moveaxis(np.diff(f_e, axis=-1), -1, d) / h

        # well-balanced gravity source, built from the same face pressures
        Pf = pf * inv_eps2
        d_m[d] += ratio * np.moveaxis(np.diff(Pf, axis=-1), -1, d) / h
        # force work from the mass fluxes: keeps E - rho F / eps^2 conserved
        Fg = _interior_except(bg.F_g, d, nd)
        n = Fg.shape[-1] - 2 * NG
        dF = Fg[..., NG:n + NG + 1] - Fg[..., NG - 1:n + NG]
        fw = f_rho * dF
        work_density += np.moveaxis(0.5 * (fw[..., :-1] + fw[..., 1:]), -1, d) * (inv_eps2 / h)
    if not swe:
        d_e += work_density
    return (d_rho, d_m, d_e), float(np.sum(work_density) * grid.cell_volume)


def stable_dt(f: ConservedField, grid: Grid, cfg: SolverConfig, eos: EosParams) -> float:
    """``cfl / max_cells sum_d (|u_d| + c / eps) / dx_d``."""
    rho, u, p = _primitives(f, eos)
    gamma = 2.0 if f.mode == "swe" else eos.gamma
    c = np.sqrt(gamma * np.maximum(p, 0.0) / rho) / cfg.eps
    rate = sum((np.abs(u[d]) + c) / grid.dx[d] for d in range(grid.ndim))
    return cfg.cfl / float(np.max(rate))


def _apply_floor(f: ConservedField, bg: _Background, cfg: SolverConfig, eos: EosParams) -> int:
    floor = cfg.floor_fraction * bg.floor
    low = f.rho < floor
    clipped = int(np.count_nonzero(low))
    if clipped:
        f.m[:, low] *= 0.0
        f.rho[low] = floor
    if f.energy is not None:
        kin = 0.5 * np.sum(f.m**2, axis=0) / f.rho
        p_floor = floor * floor
        e_min = kin + eos.c_v * p_floor / f.eps**2
        neg = f.energy < e_min
        n_neg = int(np.count_nonzero(neg & ~low))
        if n_neg:
            f.energy[neg] = e_min[neg]
        clipped += n_neg
    return clipped


def _stage(f, grid, bg, cfg, eos, dt):
    (dr, dm, de), w = _rhs(f, grid, bg, cfg, eos)
    out = ConservedField(
        f.rho + dt * dr, f.m + dt * dm, None if de is None else f.energy + dt * de,
        f.eps, f.t, f.work, f.clipped,
    )
    return out, w


def _advance(f: ConservedField, grid: Grid, bg: _Background, cfg: SolverConfig,
             eos: EosParams, dt: float) -> ConservedField:
    if dt < cfg.min_dt:
        raise CFLViolation(f"time step {dt:.3e} below {cfg.min_dt:.1e} at t = {f.t:.6g}")
    u1, w0 = _stage(f, grid, bg, cfg, eos, dt)
    c1 = _apply_floor(u1, bg, cfg, eos)
    u2, w1 = _stage(u1, grid, bg, cfg, eos, dt)
    new = ConservedField(
        0.5 * f.rho + 0.5 * u2.rho,
        0.5 * f.m + 0.5 * u2.m,
        None if f.energy is None else 0.5 * f.energy + 0.5 * u2.energy,
        f.eps, f.t + dt, f.work + dt * 0.5 * (w0 + w1), f.clipped,
    )
    c2 = _apply_floor(new, bg, cfg, eos)
    n_clip = max(c1, c2)
    if n_clip > cfg.max_clip_fraction * f.rho.size:
        raise PositivityLoss(f"{n_clip} of {f.rho.size} cells clipped at t = {new.t:.6g}")
    new.clipped = f.clipped + n_clip
    return new


def _check_mode(f: ConservedField, cfg: SolverConfig):
    if f.mode != cfg.mode:
        raise ValueError(f"field is in {f.mode!r} mode but the solver is configured for {cfg.mode!r}")
    if f.eps != cfg.eps:
        raise ValueError("field and solver disagree on eps")


def step(f: ConservedField, grid: Grid, profile=None, config: SolverConfig | None = None,
         eos: EosParams | None = None, dt: float | None = None) -> ConservedField:
    """Advance one SSP-RK2 step (``dt`` defaults to the stable step)."""
    config = config or SolverConfig(eps=f.eps, mode=f.mode)
    eos = eos or EosParams()
    _check_mode(f, config)
    bg = _background(grid, profile, f.rho)
    dt = stable_dt(f, grid, config, eos) if dt is None else dt
    return _advance(f, grid, bg, config, eos, dt)


def swe_step(f: ConservedField, grid: Grid, profile=None, config: SolverConfig | None = None,
             dt: float | None = None) -> ConservedField:
    """Shallow-water step: same scheme with ``p = h^2 / 2`` and source ``h grad b / eps^2``."""
    config = config or SolverConfig(eps=f.eps, mode="swe")
    if config.mode != "swe":
        config = replace(config, mode="swe")
    return step(f, grid, profile, config, EosParams(c_v=1.0), dt)


# ---------------------------------------------------------------------------
# diagnostics


def entropy_field(f: ConservedField, eos: EosParams) -> np.ndarray:
    """Specific entropy per cell, pressure recovered from the total energy."""
    if f.mode != "euler":
        raise ValueError("entropy is only defined in Euler mode")
    return entropy(f.rho, f.pressure(eos), eos)


def energy_budget(f: ConservedField, grid: Grid, profile=None, eps: float | None = None,
                  eos: EosParams | None = None):
    """``(integral of the scaled total energy, accumulated force work)``.

    The energy density is ``|m|^2 / (2 rho) + c_v p / eps^2`` (shallow water:
    ``h^2 / (2 eps^2)`` in place of the internal part).
    """
    eps = f.eps if eps is None else eps
    if f.energy is not None and eps == f.eps:
        return integrate(f.energy, grid), f.work
    kin = 0.5 * np.sum(f.m**2, axis=0) / f.rho
    if f.energy is None:
        internal = 0.5 * f.rho**2 / eps**2
    else:
        internal = eos.c_v * f.pressure(eos) / eps**2
    return integrate(kin + internal, grid), f.work


def diagnostics_row(f: ConservedField, grid: Grid, eos: EosParams) -> dict:
    energy, work = energy_budget(f, grid, eos=eos)
    row = {"t": f.t, "mass": integrate(f.rho, grid), "energy": energy, "work": work}
    if f.mode == "euler":
        s = entropy_field(f, eos)
        row["min_s"], row["max_s"] = float(np.min(s)), float(np.max(s))
    else:
        row["min_s"] = row["max_s"] = float("nan")
    row["max_u"] = float(np.max(np.sqrt(np.sum(f.velocity() ** 2, axis=0))))
    row["clipped_cells"] = f.clipped
    return row


SERIES_COLUMNS = ["t", "mass", "energy", "work", "min_s", "max_s", "max_u", "clipped_cells"]


@dataclass
class RunResult:
    """Samples of a run at the requested times plus the diagnostic time series."""

    times: np.ndarray
    samples: list
    series: list = field(default_factory=list)
    steps: int = 0
    final: ConservedField | None = None


def run(f: ConservedField, grid: Grid, profile=None, config: SolverConfig | None = None,
        eos: EosParams | None = None, sample_times=None, max_steps: int | None = None) -> RunResult:
    """Integrate to ``config.end_time``, landing exactly on every sample time.

    ``sample_times`` defaults to ``[t0, end_time]``.  Each sample is a copy of
    the field at that time; the time series has one row per sample.
    """
    config = config or SolverConfig(eps=f.eps, mode=f.mode)
    eos = eos or EosParams()
    _check_mode(f, config)
    bg = _background(grid, profile, f.rho)
    t_end = config.end_time
    if sample_times is None:
        sample_times = [f.t, t_end]
    sample_times = np.asarray(sorted(sample_times), dtype=float)
    if sample_times.size and (sample_times[0] < f.t - 1e-14 or sample_times[-1] > t_end + 1e-14):
        raise ValueError("sample times must lie within [t0, end_time]")

    cur = f.copy()
    samples, series = [], []
    steps = 0
    for ts in sample_times:
        while cur.t < ts - 1e-14 * max(1.0, abs(ts)):
            dt = stable_dt(cur, grid, config, eos)
            remaining = ts - cur.t
            if dt >= remaining:
                dt = remaining
            elif dt > 0.5 * remaining:
                dt = 0.5 * remaining  # avoid a sliver step before the sample
            cur = _advance(cur, grid, bg, config, eos, dt)
            steps += 1
            if max_steps is not None and steps > max_steps:
                raise CFLViolation(f"exceeded {max_steps} steps before t = {ts}")
        cur.t = float(ts)
        samples.append(cur.copy())
        series.append(diagnostics_row(cur, grid, eos))
    while cur.t < t_end - 1e-14 * max(1.0, t_end):
        dt = min(stable_dt(cur, grid, config, eos), t_end - cur.t)
        cur = _advance(cur, grid, bg, config, eos, dt)
        steps += 1
    return RunResult(sample_times, samples, series, steps, cur)
