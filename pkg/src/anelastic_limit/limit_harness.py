"""The low-Mach / strong-stratification limit experiment.

Well-prepared data are generated around an isentropic static state and an
anelastic velocity ``U_0``; the compressible solver is run for a decreasing
sequence of ``eps``; the anelastic reference is run once; and the relative
energy, the dissipation defect, the entropy strip and a panel of observables
are compared at shared sample times.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dmv_checker as dmv
from .anelastic_solver import AnelasticSolver
from .euler_solver import SolverConfig, entropy_field, run
from .grid_fields import ConservedField, Grid, integrate, write_table
from .static_states import ISENTROPIC, build_isentropic
from .thermo import EosParams, cutoff, entropy, pressure_from_entropy, relative_energy_density, split_values


class HypothesisViolated(ValueError):
    """Generated data do not satisfy the well-preparedness inequalities."""


class InsufficientData(ValueError):
    """Too few successful runs to fit a rate."""


# ---------------------------------------------------------------------------
# well-prepared data


@dataclass(frozen=True)
class WellPreparedSpec:
    """Parameters of the well-prepared initial data.

    The data are ``rho = rho_tilde (1 + eps^2 kappa m delta_rho)``,
    ``u = U_0 + eps kappa m delta_u`` and ``p = p(rho, s_bar + eps^(2 + alpha)
    sigma m delta_s)``, where ``m`` is the bump ``sin^2(pi z)`` and the
    ``delta`` fields are seeded band-limited fields with max-norm one.  The
    hypothesis bound is ``M_eps = eps * M_eps_amplitude * m``.
    """

    psi_amplitude: float = 0.06
    alpha: float = 1.0
    kappa: float = 0.15
    sigma: float = 0.5
    M_eps_amplitude: float = 1.0
    modes: int = 3
    seed: int = 0

    @property
    def is_null(self) -> bool:
        return self.psi_amplitude == 0.0 and self.kappa == 0.0 and self.sigma == 0.0

    @classmethod
    def null(cls) -> "WellPreparedSpec":
        return cls(psi_amplitude=0.0, kappa=0.0, sigma=0.0)


def streamfunction(spec: WellPreparedSpec, grid: Grid):
    """``psi = A sin(2 pi x / L) sin^2(pi z / H)``."""
    (x0, z0), (L, H) = grid.origin, grid.extents

    def psi(x, z):
        return spec.psi_amplitude * np.sin(2.0 * np.pi * (x - x0) / L) * np.sin(np.pi * (z - z0) / H) ** 2

    return psi


def bump(grid: Grid) -> np.ndarray:
    """Envelope ``m(x) = sin^2(pi z / H)`` of the perturbations (vanishes at the walls)."""
    z = grid.mesh()[-1]
    return np.sin(np.pi * (z - grid.origin[-1]) / grid.extents[-1]) ** 2


def _band_limited(grid: Grid, rng: np.random.Generator, modes: int) -> np.ndarray:
    coords = grid.mesh()
    out = np.zeros(grid.shape)
    for _ in range(modes):
        phase = 1.0
        for a, x in enumerate(coords):
            k = rng.integers(1, modes + 1)
            shift = rng.uniform(0.0, 2.0 * np.pi)
            phase = phase * np.cos(2.0 * np.pi * k * (x - grid.origin[a]) / grid.extents[a] + shift)
        out += rng.normal() * phase
    peak = np.max(np.abs(out))
    return out / peak if peak > 0.0 else out


def anelastic_velocity(spec: WellPreparedSpec, solver: AnelasticSolver):
    """Initial anelastic state built from the stream function (discretely solenoidal)."""
    u, w = solver.faces_from_streamfunction(streamfunction(spec, solver.grid))
    return solver.initial_state(u, w)


def hypothesis_margin(rho, u, p, profile, U0, eps: float, M_eps) -> np.ndarray:
    """``M_eps - (|rho - rho_tilde| / eps + |u - U_0| + |p - p_tilde| / eps)`` per cell."""
    lhs = (np.abs(rho - profile.rho) / eps
           + np.sqrt(np.sum((u - U0) ** 2, axis=0))
           + np.abs(p - profile.p) / eps)
    return M_eps - lhs


def generate_well_prepared(spec: WellPreparedSpec, profile, eps: float, grid: Grid,
                           eos: EosParams, U0: np.ndarray | None = None) -> ConservedField:
    """Well-prepared compressible data around ``(rho_tilde, rho_tilde U_0, p_tilde)``.

    ``U0`` is the cell-centred anelastic velocity (zero if omitted).  Every
    hypothesis inequality is checked cell by cell before returning.
    """
    if profile.kind != ISENTROPIC:
        raise ValueError("well-prepared data need an isentropic static state")
    s_bar = profile.params["s_bar"]
    rng = np.random.default_rng(spec.seed)
    d_rho = _band_limited(grid, rng, spec.modes)
    d_u = np.stack([_band_limited(grid, rng, spec.modes) for _ in range(grid.ndim)])
    d_s = _band_limited(grid, rng, spec.modes)
    env = bump(grid)
    U0 = np.zeros((grid.ndim,) + grid.shape) if U0 is None else np.asarray(U0, dtype=float)

    rho = profile.rho * (1.0 + eps**2 * spec.kappa * env * d_rho)
    u = U0 + eps * spec.kappa * env * d_u
    s = s_bar + eps ** (2.0 + spec.alpha) * spec.sigma * env * d_s
    p = pressure_from_entropy(rho, s, eos) if not (spec.kappa == 0.0 and spec.sigma == 0.0) else profile.p.copy()
    if spec.kappa == 0.0:
        rho = profile.rho.copy()

    M_eps = eps * spec.M_eps_amplitude * env
    margin = hypothesis_margin(rho, u, p, profile, U0, eps, M_eps)
    problems = []
    if np.any(margin < 0.0):
        k = np.unravel_index(int(np.argmin(margin)), margin.shape)
        problems.append(f"deviation bound fails at cell {k} by {-margin[k]:.3e}")
    s_dev = np.abs(entropy(rho, p, eos) - s_bar)
    strip = eps ** (2.0 + spec.alpha)
    if np.any(s_dev > strip * (1.0 + 1e-12)):
        k = np.unravel_index(int(np.argmax(s_dev)), s_dev.shape)
        problems.append(f"entropy strip fails at cell {k}: |s - s_bar| = {s_dev[k]:.3e} > {strip:.3e}")
    if problems:
        raise HypothesisViolated("; ".join(problems))
    return ConservedField.from_primitives(rho, u, p, eps, eos)


# ---------------------------------------------------------------------------
# the sweep


@dataclass(frozen=True)
class SweepConfig:
    """Grid, horizon and numerics of the sweep (defaults: the desk-scale experiment)."""

    nx: int = 128
    nz: int = 128
    c_v: float = 1.0
    s_bar: float = 0.0
    mass: float = 1.0
    end_time: float = 0.5
    sample_dt: float = 0.025
    flux: str = "rusanov"
    cfl: float = 0.4
    reconstruction: str = "muscl_minmod"
    low_mach_fix: bool = True
    panel_size: int = 5
    psi_margin: float = 0.25
    work_quadrature: str = "mass"

    def grid(self) -> Grid:
        return Grid.slab(self.nx, self.nz)

    def eos(self) -> EosParams:
        return EosParams(c_v=self.c_v, s_bar=self.s_bar)

    def sample_times(self) -> np.ndarray:
        n = int(round(self.end_time / self.sample_dt))
        if not math.isclose(n * self.sample_dt, self.end_time, rel_tol=1e-12):
            raise ValueError("end_time must be a multiple of sample_dt")
        return np.linspace(0.0, self.end_time, n + 1)


def validate_cadence(eps: float, sample_dt: float, profile, eos: EosParams) -> None:
    """Require at least four samples per acoustic period ``2 pi eps / c_max``."""
    c_max = float(np.max(np.sqrt(eos.gamma * profile.p / profile.rho)))
    period = 2.0 * np.pi * eps / c_max
    if sample_dt > period / 4.0:
        raise ValueError(
            f"sample spacing {sample_dt} does not resolve the acoustic period {period:.4g} at eps = {eps}"
        )


@dataclass(frozen=True)
class PanelObservable:
    """Smooth bump ``G`` on phase space ``(rho, m, p)``.

    Called on atom arrays: ``rho, p`` of shape ``(n_atoms, *cells)`` and
    ``m`` of shape ``(n_atoms, N, *cells)``.
    """

    center: tuple
    radius: float

    def __call__(self, rho, m, p):
        c = self.center
        n = len(c) - 2
        d2 = (rho - c[0]) ** 2 + (p - c[-1]) ** 2
        for k in range(n):
            d2 = d2 + (m[:, k] - c[1 + k]) ** 2
        r2 = d2 / self.radius**2
        out = np.zeros_like(r2)
        inside = r2 < 1.0
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
        return out


def build_panel(profile, U0_cells: np.ndarray, grid: Grid, size: int = 5) -> list:
    """Bumps centred on the target state at ``x = L/4`` and ``z = 0.1 .. 0.9``, disjoint supports."""
    z_levels = np.linspace(0.1, 0.9, size) * grid.extents[-1] + grid.origin[-1]
    xs = grid.centers(0)
    zs = grid.centers(1)
    i = int(np.argmin(np.abs(xs - (grid.origin[0] + 0.25 * grid.extents[0]))))
    centers = []
    for zl in z_levels:
        j = int(np.argmin(np.abs(zs - zl)))
        r, p = profile.rho[i, j], profile.p[i, j]
        centers.append((r,) + tuple(r * U0_cells[:, i, j]) + (p,))
    pts = np.array(centers)
    gaps = [np.linalg.norm(pts[a] - pts[b]) for a in range(size) for b in range(a + 1, size)]
    radius = 0.4 * min(gaps)
    return [PanelObservable(tuple(c), radius) for c in centers]


@dataclass
class EpsRun:
    """Everything measured for one ``eps``."""

    eps: float
    times: np.ndarray
    relative_energy: np.ndarray
    D_eps: np.ndarray
    essential: np.ndarray
    residual: np.ndarray
    min_s: float
    max_s: float
    strip_violation: float
    panel: np.ndarray  # (n_panel,) sup over time of the L1 distance
    series: list = field(default_factory=list)
    energy_ok: bool = True
    entropy_ok: bool = True
    worst_entropy_residual: float = 0.0
    error: str | None = None

    @property
    def sup_E(self) -> float:
        return float(np.max(self.relative_energy))

    @property
    def sup_D(self) -> float:
        return float(np.max(self.D_eps))

    @property
    def strip_width(self) -> float:
        return self.max_s - self.min_s


@dataclass
class RelativeEnergyReport:
    """Per-``eps`` runs of the sweep, on identical sample times."""

    eps: list
    times: np.ndarray
    runs: dict
    anelastic_series: list = field(default_factory=list)

    def succeeded(self) -> list:
        return [e for e in self.eps if self.runs[e].error is None]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(self.runs[e], name) for e in self.succeeded()])

    def strictly_decreasing(self, name: str) -> bool:
        """Values strictly decrease along the (decreasing) eps list."""
        vals = self.column(name)
        return bool(np.all(np.diff(vals) < 0.0)) and len(vals) == len(self.eps)

    def panel_decreasing(self) -> bool:
        pan = np.array([self.runs[e].panel for e in self.succeeded()])
        return bool(np.all(np.diff(pan, axis=0) < 0.0)) and len(pan) == len(self.eps)

    def summary_rows(self) -> list:
        rows = []
        prev = None
        for e in self.succeeded():
            r = self.runs[e]
            rate = ""
            if prev is not None and prev.sup_E > 0.0 and r.sup_E > 0.0:
                rate = repr(math.log(r.sup_E / prev.sup_E) / math.log(e / prev.eps))
            rows.append({
                "eps": repr(e), "sup_E": repr(r.sup_E), "sup_D": repr(r.sup_D),
                "strip_width": repr(float(r.strip_width)), "rate": rate,
            })
            prev = r
        return rows

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        write_table(out / "sweep_summary.csv", self.summary_rows(),
                    ["eps", "sup_E", "sup_D", "strip_width", "rate"])
        for e in self.succeeded():
            r = self.runs[e]
            rows = [
                dict(row, relative_energy=repr(float(E)), D_eps=repr(float(D)),
                     essential=repr(float(a)), residual=repr(float(b)))
                for row, E, D, a, b in zip(r.series, r.relative_energy, r.D_eps, r.essential, r.residual)
            ]
            cols = list(rows[0]) if rows else []
            write_table(out / f"timeseries_eps{e:g}.csv", rows, cols)
            write_table(out / f"panel_eps{e:g}.csv",
                        [{"observable": k, "distance": repr(float(v))} for k, v in enumerate(r.panel)],
                        ["observable", "distance"])
        if self.anelastic_series:
            write_table(out / "anelastic_timeseries.csv", self.anelastic_series,
                        list(self.anelastic_series[0]))


def relative_energy_integral(f: ConservedField, profile, U_cells, grid: Grid, eos: EosParams,
                             psi_margin: float = 0.25):
    """``int E_eps(rho, m, p | rho_tilde, U, theta_tilde)`` and its essential/residual parts."""
    p = f.pressure(eos)
    dens = relative_energy_density(f.rho, f.m, p, profile.rho, U_cells, profile.theta, f.eps, eos)
    psi = cutoff(f.rho, p, profile.image, psi_margin)
    ess, res = split_values(dens, psi)
    return integrate(dens, grid), integrate(ess, grid), integrate(res, grid)


def _one_eps(eps, spec, cfg: SweepConfig, profile, grid, eos, U_series, U0_cells, panel):
    times = cfg.sample_times()
    validate_cadence(eps, cfg.sample_dt, profile, eos)
    f0 = generate_well_prepared(spec, profile, eps, grid, eos, U0_cells)
    scfg = SolverConfig(eps=eps, flux=cfg.flux, cfl=cfg.cfl, reconstruction=cfg.reconstruction,
                        end_time=cfg.end_time, low_mach_fix=cfg.low_mach_fix)
    res = run(f0, grid, profile, scfg, eos, sample_times=times)
    E, ess, resid, pan = [], [], [], []
    for f, U in zip(res.samples, U_series):
        tot, e_part, r_part = relative_energy_integral(f, profile, U, grid, eos, cfg.psi_margin)
        E.append(tot)
        ess.append(e_part)
        resid.append(r_part)
        mu = dmv.embed(f, eos)
        target_m = profile.rho * U
        row = []
        for G in panel:
            observed = dmv.expect(mu, G)
            row.append(integrate(np.abs(observed - G(profile.rho[None], target_m[None], profile.p[None])[0]), grid))
        pan.append(row)
    series = dmv.MeasureSeries.from_fields(res.samples, grid, eos, profile)
    ledger = dmv.check_energy_inequality(series, work=cfg.work_quadrature, raise_on_violation=False)
    s_bar = profile.params["s_bar"]
    band = eps ** (2.0 + spec.alpha)
    strip = dmv.entropy_strip(series, s_bar - band, s_bar + band)
    chi = dmv.chi_lambda(s_bar - band, s_bar + band)
    worst = min(
        dmv.check_entropy_inequality(series, chi, tf, ledger.tolerance, raise_on_violation=False)
        for tf in dmv.constant_in_space(grid, cfg.end_time) + dmv.nonnegative_family(grid, cfg.end_time)
    )
    s_all = [entropy_field(f, eos) for f in res.samples]
    return EpsRun(
        eps=eps, times=times, relative_energy=np.array(E), D_eps=ledger.D_eps,
        essential=np.array(ess), residual=np.array(resid),
        min_s=float(min(np.min(s) for s in s_all)), max_s=float(max(np.max(s) for s in s_all)),
        strip_violation=strip.violation_mass, panel=np.max(np.array(pan), axis=0),
        series=res.series, energy_ok=ledger.passed, entropy_ok=worst >= -ledger.tolerance,
        worst_entropy_residual=worst,
    )


def _guarded(eps, *args):
    try:
        return _one_eps(eps, *args)
    except (RuntimeError, ValueError, ArithmeticError) as exc:
        return f"{type(exc).__name__}: {exc}"


def run_sweep(eps_list, spec: WellPreparedSpec | None = None,
              config: SweepConfig | None = None, workers: int = 1) -> RelativeEnergyReport:
    """Run the compressible solver for every ``eps`` against one anelastic reference.

    A failing ``eps`` is recorded in its :class:`EpsRun` (``error``) without
    stopping the others.  With ``workers > 1`` the ``eps`` runs go to a
    process pool; each run is deterministic so the report does not depend
    on ``workers``.
    """
    spec = spec or WellPreparedSpec()
    cfg = config or SweepConfig()
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    grid = cfg.grid()
    eos = cfg.eos()
    profile = build_isentropic(cfg.s_bar, cfg.mass, grid, eos)
    solver = AnelasticSolver(grid, profile)
    a0 = anelastic_velocity(spec, solver)
    times = cfg.sample_times()
    ana = solver.run(a0, cfg.end_time, sample_times=times)
    U0_cells = solver.cell_velocity(a0)
    panel = build_panel(profile, U0_cells, grid, cfg.panel_size)

    U_series = [solver.cell_velocity(a) for a in ana.samples]
    args = (spec, cfg, profile, grid, eos, U_series, U0_cells, panel)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_guarded, eps_list, *[[a] * len(eps_list) for a in args]))
    else:
        outcomes = [_guarded(eps, *args) for eps in eps_list]
    runs = {}
    for eps, out in zip(eps_list, outcomes):
        if isinstance(out, str):
            nan = np.full(times.size, np.nan)
            out = EpsRun(eps, times, nan, nan, nan, nan, np.nan, np.nan, np.nan,
                         np.full(len(panel), np.nan), error=out)
        runs[eps] = out
    return RelativeEnergyReport(eps_list, times, runs, ana.series)


@dataclass
class Fit:
    rate: float
    r_squared: float

    @property
    def convergent(self) -> bool:
        return bool(np.isfinite(self.rate) and self.rate > 0.0)


def loglog_fit(eps, values) -> Fit:
    """Least-squares slope of ``log(values)`` against ``log(eps)``.

    Raises :class:`InsufficientData` with fewer than three usable points.
    A constant series gives rate zero.
    """
    eps = np.asarray(eps, dtype=float)
    values = np.asarray(values, dtype=float)
    ok = np.isfinite(values) & (values > 0.0) & (eps > 0.0)
    if np.count_nonzero(ok) < 3:
        raise InsufficientData(f"need at least 3 positive values, got {np.count_nonzero(ok)}")
    x, y = np.log(eps[ok]), np.log(values[ok])
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_res = float(np.sum((y - (slope * x + icpt)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    if abs(slope) < 1e-12:
        slope = 0.0
    return Fit(float(slope), r2)


def convergence_fit(report: RelativeEnergyReport) -> dict:
    """Log-log rates of ``sup E``, ``sup D`` and the entropy-strip width across the sweep.

    Raises :class:`InsufficientData` if fewer than three ``eps`` succeeded.
    A quantity that is identically zero has no rate and maps to ``nan``.
    """
    eps = report.succeeded()
    if len(eps) < 3:
        raise InsufficientData(f"need at least 3 successful eps runs, got {len(eps)}")
    out = {}
    for name in ("sup_E", "sup_D", "strip_width"):
        try:
            out[name] = loglog_fit(eps, report.column(name))
        except InsufficientData:
            out[name] = Fit(float("nan"), float("nan"))
    return out
