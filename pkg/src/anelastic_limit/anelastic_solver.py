"""Anelastic Euler system ``div(rho_tilde U) = 0``, ``d_t U + U . grad U + grad Pi = 0``.

The velocity lives on a staggered (MAC) grid: ``u`` on the faces normal to x,
``w`` on the faces normal to z.  Wall faces carry ``w = 0``.  The weighted
projection solves ``div(rho_f grad Pi) = div(rho_f U*)`` with a preconditioned
conjugate gradient; with a constant ``rho_tilde`` every operator is a scalar
multiple of the unweighted incompressible one.

Advection uses the skew-symmetric form ``div(F u) - u div(F) / 2`` with
centred mass fluxes ``F``, so ``sum rho_f |U|^2 / 2`` is conserved by the
spatial discretisation and drifts only through the time integrator.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid_fields import PERIODIC, WALL, Grid, _write_columns, axis_names


class SolverDiverged(RuntimeError):
    """The pressure solve did not reach its tolerance."""


@dataclass
class AnelasticState:
    """Face velocities ``u`` (x-faces) and ``w`` (z-faces), multiplier ``Pi`` and time."""

    u: np.ndarray
    w: np.ndarray
    Pi: np.ndarray
    t: float = 0.0

    def copy(self) -> "AnelasticState":
        return AnelasticState(self.u.copy(), self.w.copy(), self.Pi.copy(), self.t)


@dataclass
class LifespanReport:
    grad_norm: float
    initial_grad_norm: float
    flagged: bool


class AnelasticSolver:
    """Projection method on a 2D grid periodic in x and periodic or walled in z.

    ``rho_tilde`` is a :class:`~anelastic_limit.static_states.StaticProfile`
    or a positive constant.
    """

    def __init__(self, grid: Grid, rho_tilde=1.0, cfl: float = 0.4, atol: float = 1e-12,
                 rtol: float = 1e-13, max_iter: int = 200, guard_factor: float = 10.0):
        if grid.ndim != 2 or grid.bc[0] != PERIODIC:
            raise ValueError("the anelastic solver needs a 2D grid periodic in x")
        self.grid = grid
        self.wall = grid.bc[1] == WALL
        self.cfl = cfl
        self.atol, self.rtol, self.max_iter = atol, rtol, max_iter
        self.guard_factor = guard_factor
        nx, nz = grid.shape
        nzf = nz + 1 if self.wall else nz
        if np.isscalar(rho_tilde):
            c = float(rho_tilde)
            if not c > 0.0:
                raise ValueError("rho_tilde must be positive")
            self.rho_c = np.full((nx, nz), c)
            self.rho_x = np.full((nx, nz), c)
            self.rho_z = np.full((nx, nzf), c)
        else:
            prof = rho_tilde
            if np.any(prof.rho <= 0.0):
                raise ValueError("rho_tilde must be positive")
            self.rho_c = prof.rho
            self.rho_x = prof.rho_face[0][:-1]
            self.rho_z = prof.rho_face[1] if self.wall else prof.rho_face[1][:, :-1]
        self._build_operator()
        self.history: list = []

    # -- discrete calculus -------------------------------------------------

    def div(self, qx, qz):
        hx, hz = self.grid.dx
        out = (np.roll(qx, -1, axis=0) - qx) / hx
        if self.wall:
            out = out + (qz[:, 1:] - qz[:, :-1]) / hz
        else:
            out = out + (np.roll(qz, -1, axis=1) - qz) / hz
        return out

    def grad(self, Pi):
        hx, hz = self.grid.dx
        gx = (Pi - np.roll(Pi, 1, axis=0)) / hx
        if self.wall:
            gz = np.zeros((Pi.shape[0], Pi.shape[1] + 1))
            gz[:, 1:-1] = (Pi[:, 1:] - Pi[:, :-1]) / hz
        else:
            gz = (Pi - np.roll(Pi, 1, axis=1)) / hz
        return gx, gz

    def weighted_divergence(self, u, w):
        return self.div(self.rho_x * u, self.rho_z * w)

    def apply_operator(self, Pi):
        """``-div(rho_f grad Pi)`` (symmetric positive semi-definite)."""
        gx, gz = self.grad(Pi)
        return -self.div(self.rho_x * gx, self.rho_z * gz)

    def _build_operator(self):
        nx, nz = self.grid.shape
        hx, hz = self.grid.dx
        idx = np.arange(nx * nz).reshape(nx, nz)
        rows, cols, vals = [], [], []

        def couple(a, b, c):
            rows.extend([a, b, a, b])
            cols.extend([a, b, b, a])
            vals.extend([c, c, -c, -c])

        couple(np.roll(idx, 1, axis=0).ravel(), idx.ravel(), (self.rho_x / hx**2).ravel())
        if self.wall:
            couple(idx[:, :-1].ravel(), idx[:, 1:].ravel(), (self.rho_z[:, 1:-1] / hz**2).ravel())
        else:
            couple(np.roll(idx, 1, axis=1).ravel(), idx.ravel(), (self.rho_z / hz**2).ravel())
        A = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(nx * nz, nx * nz),
        ).tocsc()
        self.matrix = A
        self._norm = float(np.max(np.abs(A).sum(axis=1)))
        # pin the first unknown to remove the constant null space
        self._lu = spla.splu(A[1:, 1:].tocsc())

    def _precondition(self, r):
        z = np.zeros_like(r)
        z[1:] = self._lu.solve(r[1:])
        return z - np.mean(z)

    def solve_pressure(self, rhs):
        """Mean-zero solution of ``-div(rho_f grad Pi) = rhs`` by PCG.

        ``rhs`` is deflated to mean zero first.  Stops when the max-norm
        residual is below ``max(atol, rtol * |rhs|_inf)``.
        """
        shape = rhs.shape
        b = rhs.ravel() - np.mean(rhs)
        tol = max(self.atol, self.rtol * float(np.max(np.abs(b))))
        x = np.zeros_like(b)
        r = b.copy()
        if np.max(np.abs(r)) <= tol:
            return x.reshape(shape), 0
        z = self._precondition(r)
        p = z.copy()
        rz = r @ z
        for it in range(1, self.max_iter + 1):
            Ap = self.matrix @ p
            alpha = rz / (p @ Ap)
            x += alpha * p
            r -= alpha * Ap
            floor = 64.0 * np.finfo(float).eps * self._norm * float(np.max(np.abs(x)))
            if np.max(np.abs(r)) <= max(tol, floor):
                return (x - np.mean(x)).reshape(shape), it
            z = self._precondition(r)
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        raise SolverDiverged(
            f"pressure residual {np.max(np.abs(r)):.3e} above {tol:.3e} after {self.max_iter} iterations"
        )

    def project(self, u_star, w_star):
        """``U = U* - grad Pi`` with ``div(rho_f U) = 0``; returns ``(u, w, Pi)``."""
        rhs = -self.weighted_divergence(u_star, w_star)
        Pi, _ = self.solve_pressure(rhs)
        gx, gz = self.grad(Pi)
        u = u_star - gx
        w = w_star - gz
        if self.wall:
            w[:, 0] = 0.0
            w[:, -1] = 0.0
        return u, w, Pi

    # -- advection -----------------------------------------------------------

    def advection(self, u, w):
        """Skew-symmetric momentum advection, per unit face density."""
        hx, hz = self.grid.dx
        fu = self.rho_x * u
        fw = self.rho_z * w
        xp = lambda a: np.roll(a, -1, axis=0)  # noqa: E731
        xm = lambda a: np.roll(a, 1, axis=0)  # noqa: E731

        # u control volumes: x-fluxes at cell centres, z-fluxes at corners
        Fx_c = 0.5 * (fu + xp(fu))  # centre of cell i, right face of CV i
        ux_c = 0.5 * (u + xp(u))
        if self.wall:
            Fz_k = 0.5 * (fw + xm(fw))  # corners (i - 1/2, j - 1/2), j = 0 .. nz
            uz_k = np.zeros_like(Fz_k)
            uz_k[:, 1:-1] = 0.5 * (u[:, :-1] + u[:, 1:])
            flux_z = Fz_k * uz_k
            div_u = (Fx_c * ux_c - xm(Fx_c * ux_c)) / hx + (flux_z[:, 1:] - flux_z[:, :-1]) / hz
            delta_u = (Fx_c - xm(Fx_c)) / hx + (Fz_k[:, 1:] - Fz_k[:, :-1]) / hz
        else:
            Fz_k = 0.5 * (fw + xm(fw))
            uz_k = 0.5 * (u + np.roll(u, 1, axis=1))
            flux_z = Fz_k * uz_k
            div_u = (Fx_c * ux_c - xm(Fx_c * ux_c)) / hx + (
                np.roll(flux_z, -1, axis=1) - flux_z) / hz
            delta_u = (Fx_c - xm(Fx_c)) / hx + (np.roll(Fz_k, -1, axis=1) - Fz_k) / hz
        cu = (div_u - 0.5 * u * delta_u) / self.rho_x

        # w control volumes: z-fluxes at cell centres, x-fluxes at corners
        if self.wall:
            Fz_c = 0.5 * (fw[:, :-1] + fw[:, 1:])  # cell centres j = 0 .. nz - 1
            wz_c = 0.5 * (w[:, :-1] + w[:, 1:])
            Fx_k = 0.5 * (fu[:, :-1] + fu[:, 1:])  # corners (i - 1/2, j + 1/2), interior j
            wx_k = 0.5 * (w[:, 1:-1] + xm(w[:, 1:-1]))
            flux_x = Fx_k * wx_k
            flux_zc = Fz_c * wz_c
            div_w = (xp(flux_x) - flux_x) / hx + (flux_zc[:, 1:] - flux_zc[:, :-1]) / hz
            delta_w = (xp(Fx_k) - Fx_k) / hx + (Fz_c[:, 1:] - Fz_c[:, :-1]) / hz
            cw = np.zeros_like(w)
            cw[:, 1:-1] = (div_w - 0.5 * w[:, 1:-1] * delta_w) / self.rho_z[:, 1:-1]
        else:
            zm = lambda a: np.roll(a, 1, axis=1)  # noqa: E731
            Fz_c = 0.5 * (fw + np.roll(fw, -1, axis=1))  # centre of cell j, top face of CV j
            wz_c = 0.5 * (w + np.roll(w, -1, axis=1))
            Fx_k = 0.5 * (fu + zm(fu))  # corners (i - 1/2, j - 1/2)
            wx_k = 0.5 * (w + xm(w))
            flux_x = Fx_k * wx_k
            flux_zc = Fz_c * wz_c
            div_w = (xp(flux_x) - flux_x) / hx + (flux_zc - zm(flux_zc)) / hz
            delta_w = (xp(Fx_k) - Fx_k) / hx + (Fz_c - zm(Fz_c)) / hz
            cw = (div_w - 0.5 * w * delta_w) / self.rho_z
        return cu, cw

    # -- time stepping -------------------------------------------------------

    def stable_dt(self, state: AnelasticState) -> float:
        hx, hz = self.grid.dx
        rate = np.max(np.abs(state.u)) / hx + np.max(np.abs(state.w)) / hz
        return np.inf if rate == 0.0 else self.cfl / rate

    def advance(self, state: AnelasticState, dt: float) -> AnelasticState:
        """One SSP-RK2 step with a projection after each stage."""
        cu, cw = self.advection(state.u, state.w)
        u1, w1, _ = self.project(state.u - dt * cu, state.w - dt * cw)
        cu, cw = self.advection(u1, w1)
        u2, w2, Pi = self.project(
            0.5 * state.u + 0.5 * (u1 - dt * cu), 0.5 * state.w + 0.5 * (w1 - dt * cw)
        )
        return AnelasticState(u2, w2, 2.0 * Pi / dt, state.t + dt)

    def pressure(self, state: AnelasticState) -> np.ndarray:
        """Mean-zero ``Pi`` balancing the advection of ``state``."""
        cu, cw = self.advection(state.u, state.w)
        Pi, _ = self.solve_pressure(self.weighted_divergence(cu, cw))
        return Pi

    def initial_state(self, u, w, t: float = 0.0) -> AnelasticState:
        """Project face velocities, mollifying first if the constraint is badly violated."""
        u = np.array(u, dtype=float)
        w = np.array(w, dtype=float)
        if self.wall:
            w[:, 0] = 0.0
            w[:, -1] = 0.0
        scale = max(float(np.max(np.abs(self.rho_x * u))), float(np.max(np.abs(self.rho_z * w))), 1.0)
        if np.max(np.abs(self.weighted_divergence(u, w))) > 1e-8 * scale:
            u, w = self._mollify(u), self._mollify(w, staggered_z=True)
        u, w, _ = self.project(u, w)
        st = AnelasticState(u, w, np.zeros(self.grid.shape), t)
        st.Pi = self.pressure(st)
        return st

    def _mollify(self, q, staggered_z: bool = False, sweeps: int = 2):
        for _ in range(sweeps):
            lap = np.roll(q, 1, axis=0) + np.roll(q, -1, axis=0) - 2.0 * q
            if self.wall:
                inner = q[:, 1:-1] if staggered_z else q
                zl = np.concatenate([inner[:, :1], inner[:, :-1]], axis=1)
                zr = np.concatenate([inner[:, 1:], inner[:, -1:]], axis=1)
                lz = zl + zr - 2.0 * inner
                if staggered_z:
                    lap[:, 1:-1] += lz
                    lap[:, [0, -1]] = 0.0
                else:
                    lap += lz
            else:
                lap += np.roll(q, 1, axis=1) + np.roll(q, -1, axis=1) - 2.0 * q
            q = q + 0.125 * lap
        return q

    def run(self, state: AnelasticState, end_time: float, sample_times=None,
            dt: float | None = None) -> "AnelasticRun":
        """Integrate to ``end_time`` landing on every sample time.

        With ``dt`` given, that fixed step is used (shortened to hit samples).
        """
        sample_times = [state.t, end_time] if sample_times is None else sorted(sample_times)
        g0 = self.grad_norm(state)
        cur = state.copy()
        samples, series = [], []
        for ts in sample_times:
            while cur.t < ts - 1e-14 * max(1.0, abs(ts)):
                step_dt = self.stable_dt(cur) if dt is None else dt
                step_dt = min(step_dt, ts - cur.t)
                cur = self.advance(cur, step_dt)
                series.append(self.diagnostics(cur))
            cur.t = float(ts)
            out = cur.copy()
            out.Pi = self.pressure(out)
            samples.append(out)
        rep = self.max_lifespan_guard(cur, g0)
        return AnelasticRun(np.asarray(sample_times, dtype=float), samples, series, rep)

    # -- diagnostics ---------------------------------------------------------

    def kinetic_energy(self, state: AnelasticState) -> float:
        """``sum rho_f |U|^2 / 2`` over faces times the cell volume."""
        w = state.w[:, 1:-1] if self.wall else state.w
        rz = self.rho_z[:, 1:-1] if self.wall else self.rho_z
        return 0.5 * self.grid.cell_volume * float(
            np.sum(self.rho_x * state.u**2) + np.sum(rz * w**2)
        )

    def constraint_residual(self, state: AnelasticState) -> float:
        return float(np.max(np.abs(self.weighted_divergence(state.u, state.w))))

    def momentum_scale(self, state: AnelasticState) -> float:
        """``max |rho_f U|`` over faces, the scale of the constraint tolerance."""
        return float(max(np.max(np.abs(self.rho_x * state.u)), np.max(np.abs(self.rho_z * state.w))))

    def grad_norm(self, state: AnelasticState) -> float:
        """Max-norm of the discrete velocity gradient (cell and corner differences)."""
        hx, hz = self.grid.dx
        u, w = state.u, state.w
        parts = [(np.roll(u, -1, axis=0) - u) / hx, (np.roll(w, -1, axis=0) - w) / hx]
        if self.wall:
            parts += [np.diff(w, axis=1) / hz, np.diff(u, axis=1) / hz]
        else:
            parts += [(np.roll(w, -1, axis=1) - w) / hz, (np.roll(u, -1, axis=1) - u) / hz]
        return max(float(np.max(np.abs(p))) if p.size else 0.0 for p in parts)

    def max_lifespan_guard(self, state: AnelasticState, initial: float | None = None) -> LifespanReport:
        """Flag (never raise) when ``|grad U|_inf`` has grown past ``guard_factor`` times its start."""
        g = self.grad_norm(state)
        g0 = g if initial is None else initial
        flagged = g > self.guard_factor * max(g0, 1e-300) if g0 > 0.0 else g > 0.0
        return LifespanReport(g, g0, bool(flagged))

    def diagnostics(self, state: AnelasticState) -> dict:
        return {
            "t": state.t,
            "kinetic_energy": self.kinetic_energy(state),
            "max_div": self.constraint_residual(state),
            "max_grad_u": self.grad_norm(state),
        }

    def cell_velocity(self, state: AnelasticState) -> np.ndarray:
        """Velocity averaged to cell centres, shape ``(2, nx, nz)``."""
        uc = 0.5 * (state.u + np.roll(state.u, -1, axis=0))
        if self.wall:
            wc = 0.5 * (state.w[:, :-1] + state.w[:, 1:])
        else:
            wc = 0.5 * (state.w + np.roll(state.w, -1, axis=1))
        return np.stack([uc, wc])

    def write_snapshot(self, path, state: AnelasticState) -> None:
        cols = {n: c for n, c in zip(axis_names(self.grid), self.grid.mesh())}
        U = self.cell_velocity(state)
        cols.update(u_x=U[0], u_z=U[1], rho_tilde=self.rho_c, Pi=state.Pi)
        _write_columns(path, cols)

    # -- initial data helpers -----------------------------------------------

    def faces_from_function(self, fn):
        """Sample ``fn(x, z) -> (u, w)`` at the MAC face locations."""
        g = self.grid
        xf, zc = np.meshgrid(g.faces(0)[:-1], g.centers(1), indexing="ij")
        xc, zf = np.meshgrid(g.centers(0), g.faces(1) if self.wall else g.faces(1)[:-1], indexing="ij")
        u = np.asarray(fn(xf, zc)[0], dtype=float) * np.ones(xf.shape)
        w = np.asarray(fn(xc, zf)[1], dtype=float) * np.ones(xc.shape)
        return u, w

    def faces_from_streamfunction(self, psi):
        """``rho_f U = (d_z psi, -d_x psi)`` from corner values: discretely solenoidal."""
        g = self.grid
        hx, hz = g.dx
        xk, zk = np.meshgrid(g.faces(0), g.faces(1), indexing="ij")
        pk = np.asarray(psi(xk, zk), dtype=float) * np.ones(xk.shape)  # (nx + 1, nz + 1)
        fu = (pk[:-1, 1:] - pk[:-1, :-1]) / hz
        fw = -(pk[1:, :] - pk[:-1, :]) / hx
        if not self.wall:
            fw = fw[:, :-1]
        return fu / self.rho_x, fw / self.rho_z


@dataclass
class AnelasticRun:
    times: np.ndarray
    samples: list
    series: list = field(default_factory=list)
    lifespan: LifespanReport | None = None
