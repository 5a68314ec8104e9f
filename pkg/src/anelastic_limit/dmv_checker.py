"""Atomic measure-valued fields and the weak-form functionals of dissipative solutions.

A discrete solution is viewed as a family of finite Dirac mixtures over the
phase space ``(rho, m, p)``, one mixture per cell and sample time.  The
functionals below evaluate the weak mass and momentum identities, the energy
and entropy inequalities and the dissipation defect on such families, using
midpoint quadrature in space and the composite trapezoid rule in time.

Pressure and gravity in the momentum identity are integrated by parts onto
cell faces,

    int p div(phi)       ->  -sum_faces D_face p * phi_face
    int rho grad F . phi ->   sum_faces rho_face (rho / rho_tilde)_face D_face F * phi_face,

with the density mean ``rho_face`` that makes ``D_face p_tilde = rho_face
D_face F`` hold exactly, so hydrostatic states leave no quadrature residue.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np
from numpy.polynomial import Legendre

from .grid_fields import PERIODIC, WALL, ConservedField, Grid, write_table
from .static_states import face_mean_density
from .thermo import EosParams, entropy, kinetic_energy, relative_energy_density, total_entropy


class InequalityViolated(AssertionError):
    """A sign-constrained functional fell below its tolerance."""

    def __init__(self, message: str, worst_time: float | None = None, value: float | None = None):
        super().__init__(message)
        self.worst_time = worst_time
        self.value = value


# ---------------------------------------------------------------------------
# measures


@dataclass
class AtomicMeasureField:
    """Per-cell finite mixtures of Dirac atoms at one time.

    ``weights``, ``rho``, ``p`` have shape ``(n_atoms, *cells)``; ``m`` has
    shape ``(n_atoms, N, *cells)``.
    """

    weights: np.ndarray
    rho: np.ndarray
    m: np.ndarray
    p: np.ndarray
    t: float = 0.0
    work: float = 0.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.rho = np.asarray(self.rho, dtype=float)
        self.m = np.asarray(self.m, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if np.any(self.weights < 0.0):
            raise ValueError("atom weights must be non-negative")
        if np.max(np.abs(np.sum(self.weights, axis=0) - 1.0)) > 1e-14:
            raise ValueError("atom weights must sum to 1 in every cell")
        if np.any(self.rho < 0.0) or np.any(self.p < 0.0):
            raise ValueError("atoms must have rho >= 0 and p >= 0")
        msq = np.sum(self.m**2, axis=1)
        singular = ((self.rho == 0.0) & (msq > 0.0)) | ((self.rho > 0.0) & (self.p == 0.0))
        if np.any(self.weights[singular] > 0.0):
            raise ValueError("singular atoms (rho = 0 with m != 0, or rho > 0 with p = 0) must carry zero weight")

    @property
    def n_atoms(self) -> int:
        return self.weights.shape[0]

    @property
    def shape(self) -> tuple:
        return self.weights.shape[1:]


def embed(f: ConservedField, eos: EosParams | None = None) -> AtomicMeasureField:
    """Dirac embedding: one atom of weight one per cell."""
    p = f.pressure(eos)
    return AtomicMeasureField(
        np.ones((1,) + f.rho.shape), f.rho[None], f.m[None], p[None], f.t, f.work
    )


def mixture(measures, weights) -> AtomicMeasureField:
    """Convex combination of measures sharing the same grid and time."""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0.0) or abs(weights.sum() - 1.0) > 1e-14:
        raise ValueError("mixture weights must be a probability vector")
    return AtomicMeasureField(
        np.concatenate([a * mu.weights for a, mu in zip(weights, measures)]),
        np.concatenate([mu.rho for mu in measures]),
        np.concatenate([mu.m for mu in measures]),
        np.concatenate([mu.p for mu in measures]),
        measures[0].t,
        float(sum(a * mu.work for a, mu in zip(weights, measures))),
    )


def _chi_values(chi, s):
    with np.errstate(invalid="ignore"):
        return np.asarray(chi(s), dtype=float)


def _observable(name: str, rho, m, p, eos: EosParams | None, params: dict):
    if callable(name):
        return name(rho, m, p)
    if name == "rho":
        return rho
    if name == "m":
        return m
    if name == "p":
        return p
    if name == "kinetic":
        return np.stack([kinetic_energy(rho[a], m[a]) for a in range(rho.shape[0])])
    if name == "energy":
        kin = np.stack([kinetic_energy(rho[a], m[a]) for a in range(rho.shape[0])])
        return 0.5 * kin + eos.c_v * p / params["eps"] ** 2
    if name == "rho_s":
        return total_entropy(rho, p, eos)
    if name == "s_m":
        s = entropy(rho, p, eos)
        return np.where(rho > 0.0, s, 0.0)[:, None] * m
    if name == "momentum_flux":
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(rho > 0.0, 1.0 / np.where(rho > 0.0, rho, 1.0), 0.0)
        return m[:, :, None] * m[:, None, :] * inv[:, None, None]
    if name in ("rho_chi_s", "chi_s_m"):
        s = entropy(rho, p, eos)
        c = np.where(rho > 0.0, _chi_values(params["chi"], s), 0.0)
        return rho * c if name == "rho_chi_s" else c[:, None] * m
    if name == "relative_energy":
        return np.stack([
            relative_energy_density(
                rho[a], m[a], p[a], params["r"], params["u_tilde"], params["theta"],
                params["eps"], eos,
            )
            for a in range(rho.shape[0])
        ])
    raise KeyError(f"unknown observable {name!r}")


OBSERVABLES = (
    "rho", "m", "p", "kinetic", "energy", "rho_s", "s_m", "momentum_flux",
    "rho_chi_s", "chi_s_m", "relative_energy",
)


def expect(mu: AtomicMeasureField, observable, eos: EosParams | None = None, **params) -> np.ndarray:
    """``<nu; observable>`` per cell, with zero-weight atoms contributing nothing.

    ``observable`` is one of :data:`OBSERVABLES` or a callable ``(rho, m, p)``
    acting on atom arrays.  Infinite values on positive-weight atoms propagate.
    """
    vals = _observable(observable, mu.rho, mu.m, mu.p, eos, params)
    extra = vals.ndim - mu.weights.ndim
    w = mu.weights.reshape((mu.n_atoms,) + (1,) * extra + mu.shape)
    with np.errstate(invalid="ignore"):
        contrib = np.where(w > 0.0, w * vals, 0.0)
    return np.sum(contrib, axis=0)


@dataclass
class MeasureSeries:
    """Measures at increasing sample times on one grid, plus the static profile (if any)."""

    times: np.ndarray
    measures: list
    grid: Grid
    eps: float
    eos: EosParams
    profile: object = None
    mu_c: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.measures) != self.times.size or self.times.size < 1:
            raise ValueError("need one measure per sample time")
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("sample times must increase")

    @classmethod
    def from_fields(cls, fields, grid: Grid, eos: EosParams, profile=None) -> "MeasureSeries":
        fields = list(fields)
        return cls(
            np.array([f.t for f in fields]), [embed(f, eos) for f in fields],
            grid, fields[0].eps, eos, profile,
        )

    def expect(self, observable, **params) -> np.ndarray:
        """Stack of per-cell expectations, leading axis time (cached per observable)."""
        params.setdefault("eps", self.eps)
        key = None
        if isinstance(observable, str) and observable != "relative_energy":
            chi = params.get("chi")
            key = (observable, None if chi is None else chi.name)
            if key in self._cache:
                return self._cache[key]
        out = np.stack([expect(mu, observable, self.eos, **params) for mu in self.measures])
        if key is not None:
            self._cache[key] = out
        return out


# ---------------------------------------------------------------------------
# test functions


@dataclass(frozen=True)
class AxisFactor:
    """One-dimensional factor of a tensor-product test function."""

    kind: str
    index: int
    origin: float
    length: float

    def _xhat(self, x):
        return (np.asarray(x, dtype=float) - self.origin) / self.length

    def __call__(self, x):
        return self._eval(x, deriv=False)

    def deriv(self, x):
        return self._eval(x, deriv=True)

    def _eval(self, x, deriv: bool):
        xh = self._xhat(x)
        k = self.index
        L = self.length
        w = 2.0 * np.pi * k
        if self.kind == "one":
            return np.zeros_like(xh) if deriv else np.ones_like(xh)
        if self.kind in ("cos", "sin"):
            sign = 1.0
            base = self.kind
        elif self.kind.startswith("one_"):
            sign = 1.0 if "plus" in self.kind else -1.0
            base = self.kind.rsplit("_", 1)[-1]
        elif self.kind == "legendre":
            poly = Legendre.basis(k, domain=[0.0, 1.0])
            return (poly.deriv()(xh) / L) if deriv else poly(xh)
        elif self.kind == "bernstein":
            return _bernstein(xh, k, deriv) / (L if deriv else 1.0)
        else:
            raise ValueError(self.kind)
        if deriv:
            d = -w * np.sin(w * xh) if base == "cos" else w * np.cos(w * xh)
            return sign * d / L
        v = np.cos(w * xh) if base == "cos" else np.sin(w * xh)
        return (1.0 + sign * v) if self.kind.startswith("one_") else v


BERNSTEIN_DEGREE = 4


def _bernstein(x, k, deriv, n=BERNSTEIN_DEGREE):
    from math import comb

    if not deriv:
        return comb(n, k) * x**k * (1.0 - x) ** (n - k)
    a = k * x ** max(k - 1, 0) * (1.0 - x) ** (n - k) if k > 0 else 0.0 * x
    b = (n - k) * x**k * (1.0 - x) ** max(n - k - 1, 0) if k < n else 0.0 * x
    return comb(n, k) * (a - b)


@dataclass(frozen=True)
class TestFunction:
    """Separable test function ``T(t) * prod_a f_a(x_a)`` (times a wall bubble for vectors).

    For vector test functions ``component`` selects the non-zero component;
    if that axis is a wall, the factor ``4 xhat (1 - xhat)`` makes the normal
    component vanish on the boundary.  The time factor is ``(t / T)^q`` for
    ``time_kind = "power"`` and ``1 - t / T`` for ``"decay"``.
    """

    __test__ = False  # not a pytest class

    family: str
    ident: str
    factors: tuple
    time_degree: int
    horizon: float
    component: int | None = None
    bubble: bool = False
    time_kind: str = "power"

    def time_value(self, t):
        s = np.asarray(t, dtype=float) / self.horizon
        if self.time_kind == "decay":
            return 1.0 - s
        return s**self.time_degree

    def time_deriv(self, t):
        s = np.asarray(t, dtype=float) / self.horizon
        if self.time_kind == "decay":
            return -np.ones_like(s) / self.horizon
        if self.time_degree == 0:
            return np.zeros_like(s)
        return self.time_degree * s ** (self.time_degree - 1) / self.horizon

    def _bubble(self, x, deriv=False):
        f = self.factors[self.component]
        xh = f._xhat(x)
        if deriv:
            return 4.0 * (1.0 - 2.0 * xh) / f.length
        return 4.0 * xh * (1.0 - xh)

    def space_value(self, coords):
        out = np.ones(np.broadcast(*coords).shape)
        for f, x in zip(self.factors, coords):
            out = out * f(x)
        if self.bubble:
            out = out * self._bubble(coords[self.component])
        return out

    def space_grad(self, coords):
        vals = [f(x) for f, x in zip(self.factors, coords)]
        ders = [f.deriv(x) for f, x in zip(self.factors, coords)]
        grads = []
        for a in range(len(coords)):
            g = np.ones(np.broadcast(*coords).shape)
            for b in range(len(coords)):
                g = g * (ders[b] if b == a else vals[b])
            if self.bubble:
                c = self.component
                bub = self._bubble(coords[c])
                if a == c:
                    base = np.ones_like(g)
                    for b in range(len(coords)):
                        base = base * vals[b]
                    g = g * bub + base * self._bubble(coords[c], deriv=True)
                else:
                    g = g * bub
            grads.append(g)
        return grads


def _axis_factors(grid: Grid, a: int, nonnegative: bool, K: int = 4):
    x0, L = grid.origin[a], grid.extents[a]
    if grid.bc[a] == PERIODIC:
        if nonnegative:
            kinds = [("one", 0), ("one_plus_cos", 1), ("one_minus_cos", 1),
                     ("one_plus_sin", 1), ("one_minus_sin", 1)]
        else:
            kinds = [("one", 0)] + [(b, k) for k in range(1, K // 2 + 1) for b in ("cos", "sin")]
    else:
        kinds = [("bernstein" if nonnegative else "legendre", k) for k in range(K + 1)]
    return [AxisFactor(kind, k, x0, L) for kind, k in kinds]


def scalar_family(grid: Grid, horizon: float, K: int = 4, max_time_degree: int = 2) -> list:
    """Tensor products of trigonometric / shifted Legendre factors and ``(t/T)^q``."""
    per_axis = [_axis_factors(grid, a, False, K) for a in range(grid.ndim)]
    out = []
    for combo in product(*per_axis):
        for q in range(max_time_degree + 1):
            ident = "*".join(f"{f.kind}{f.index}" for f in combo) + f"*t^{q}"
            out.append(TestFunction("scalar", ident, tuple(combo), q, horizon))
    return out


def nonnegative_family(grid: Grid, horizon: float) -> list:
    """Non-negative test functions: Bernstein / ``1 +- trig`` factors times ``1, t/T, 1 - t/T``."""
    per_axis = [_axis_factors(grid, a, True) for a in range(grid.ndim)]
    out = []
    for combo in product(*per_axis):
        base = "*".join(f"{f.kind}{f.index}" for f in combo)
        out.append(TestFunction("nonnegative", base + "*t^0", tuple(combo), 0, horizon))
        out.append(TestFunction("nonnegative", base + "*t^1", tuple(combo), 1, horizon))
        out.append(TestFunction("nonnegative", base + "*(1-t)", tuple(combo), 1, horizon,
                                time_kind="decay"))
    return out


def vector_family(grid: Grid, horizon: float, K: int = 4, max_time_degree: int = 2) -> list:
    """Vector test functions ``e_c * scalar``, with a wall bubble on the normal component."""
    out = []
    for c in range(grid.ndim):
        for tf in scalar_family(grid, horizon, K, max_time_degree):
            out.append(TestFunction(
                "vector", f"e{c}*{tf.ident}", tf.factors, tf.time_degree, horizon,
                component=c, bubble=grid.bc[c] == WALL,
            ))
    return out


def constant_in_space(grid: Grid, horizon: float) -> list:
    ones = tuple(AxisFactor("one", 0, grid.origin[a], grid.extents[a]) for a in range(grid.ndim))
    return [
        TestFunction("constant", "1*t^0", ones, 0, horizon),
        TestFunction("constant", "1*t^1", ones, 1, horizon),
        TestFunction("constant", "1*(1-t)", ones, 1, horizon, time_kind="decay"),
    ]


# ---------------------------------------------------------------------------
# quadrature helpers


def _trapezoid(values, times):
    values = np.asarray(values, dtype=float)
    if times.size < 2:
        return 0.0
    return float(np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(times)))


def _space_integral(series: MeasureSeries, arr) -> np.ndarray:
    """Midpoint rule over space; ``arr`` has leading time axis."""
    axes = tuple(range(arr.ndim - series.grid.ndim, arr.ndim))
    with np.errstate(invalid="ignore"):
        return np.sum(arr, axis=axes) * series.grid.cell_volume


def _face_values(grid: Grid, tf: TestFunction, axis: int):
    """``phi_axis`` on the faces normal to ``axis`` that separate two cells.

    Periodic axes: face ``i`` sits left of cell ``i`` (pairs cells ``i - 1, i``).
    Wall axes: the ``n - 1`` interior faces.
    """
    coords = grid.face_mesh(axis)
    sl = [slice(None)] * grid.ndim
    sl[axis] = slice(0, -1) if grid.bc[axis] == PERIODIC else slice(1, -1)
    coords = [c[tuple(sl)] for c in coords]
    return tf.space_value(coords)


def _face_diff(q, grid: Grid, axis: int, lead: int = 1):
    """``q_i - q_{i-1}`` across the faces of :func:`_face_values` (``lead`` batch axes)."""
    ax = axis + lead
    if grid.bc[axis] == PERIODIC:
        return q - np.roll(q, 1, axis=ax)
    return np.diff(q, axis=ax)


def _face_mean(q, grid: Grid, axis: int, lead: int = 1):
    ax = axis + lead
    if grid.bc[axis] == PERIODIC:
        return 0.5 * (q + np.roll(q, 1, axis=ax))
    n = q.shape[ax]
    lo = np.take(q, range(0, n - 1), axis=ax)
    hi = np.take(q, range(1, n), axis=ax)
    return 0.5 * (lo + hi)


def _face_profile_density(profile, grid: Grid, axis: int):
    r = profile.rho
    if grid.bc[axis] == PERIODIC:
        lo, hi = np.roll(r, 1, axis=axis), r
    else:
        lo = np.take(r, range(0, r.shape[axis] - 1), axis=axis)
        hi = np.take(r, range(1, r.shape[axis]), axis=axis)
    return face_mean_density(profile.kind, lo, hi, profile.params)


def pressure_term(series: MeasureSeries, tf: TestFunction, p_mean=None) -> np.ndarray:
    """Per-sample ``int <nu; p> div(phi)`` by face summation (vector ``tf``)."""
    grid = series.grid
    c = tf.component
    p = series.expect("p") if p_mean is None else p_mean
    phi_f = _face_values(grid, tf, c)
    dp = _face_diff(p, grid, c) / grid.dx[c]
    return -_space_integral(series, dp * phi_f)


def gravity_term(series: MeasureSeries, tf: TestFunction, rho_mean=None) -> np.ndarray:
    """Per-sample ``int <nu; rho> grad F . phi`` by face summation (zero without a profile)."""
    grid = series.grid
    prof = series.profile
    if prof is None:
        return np.zeros(series.times.size)
    c = tf.component
    rho = series.expect("rho") if rho_mean is None else rho_mean
    ratio = _face_mean(rho / prof.rho, grid, c)
    rho_f = _face_profile_density(prof, grid, c)
    dF = _face_diff(prof.F, grid, c, lead=0) / grid.dx[c]
    phi_f = _face_values(grid, tf, c)
    return _space_integral(series, rho_f * ratio * dF * phi_f)


# ---------------------------------------------------------------------------
# weak-form functionals


def residual_mass(series: MeasureSeries, tf: TestFunction, upto: int | None = None) -> float:
    """``[int <rho> phi]_0^tau - int_0^tau int (<rho> d_t phi + <m> . grad phi)``."""
    k = len(series.times) if upto is None else upto + 1
    times = series.times[:k]
    coords = series.grid.mesh()
    phi_s = tf.space_value(coords)
    grad_s = tf.space_grad(coords)
    rho = series.expect("rho")[:k]
    m = series.expect("m")[:k]
    I_rho = _space_integral(series, rho * phi_s)
    I_flux = sum(_space_integral(series, m[:, d] * grad_s[d]) for d in range(series.grid.ndim))
    left = tf.time_value(times[-1]) * I_rho[-1] - tf.time_value(times[0]) * I_rho[0]
    right = _trapezoid(tf.time_deriv(times) * I_rho + tf.time_value(times) * I_flux, times)
    return float(left - right)


def residual_momentum(series: MeasureSeries, tf: TestFunction, upto: int | None = None):
    """Momentum identity with the concentration term reported separately.

    Returns ``(residual, defect_term)`` where ``defect_term = int int grad phi : d mu_c``
    (already included in the residual).
    """
    if tf.component is None:
        raise ValueError("momentum residual needs a vector test function")
    k = len(series.times) if upto is None else upto + 1
    times = series.times[:k]
    grid = series.grid
    c = tf.component
    inv_eps2 = 1.0 / series.eps**2
    coords = grid.mesh()
    phi_s = tf.space_value(coords)
    grad_s = tf.space_grad(coords)
    m = series.expect("m")[:k]
    flux = series.expect("momentum_flux")[:k]
    I_m = _space_integral(series, m[:, c] * phi_s)
    I_conv = sum(_space_integral(series, flux[:, c, d] * grad_s[d]) for d in range(grid.ndim))
    I_p = pressure_term(series, tf)[:k]
    I_g = gravity_term(series, tf)[:k]
    if series.mu_c is not None:
        mu = series.mu_c[:k]
        I_mu = sum(_space_integral(series, mu[:, c, d] * grad_s[d]) for d in range(grid.ndim))
    else:
        I_mu = np.zeros(k)
    Tv, Td = tf.time_value(times), tf.time_deriv(times)
    left = Tv[-1] * I_m[-1] - Tv[0] * I_m[0]
    defect = _trapezoid(Tv * I_mu, times)
    right = _trapezoid(Td * I_m + Tv * (I_conv + inv_eps2 * (I_p + I_g)), times) + defect
    return float(left - right), float(defect)


@dataclass
class DefectLedger:
    """Dissipation defect ``D(tau)`` and the concentration-measure bookkeeping."""

    times: np.ndarray
    D_eps: np.ndarray
    energy: np.ndarray
    work: np.ndarray
    mu_c: np.ndarray | None = None
    C_bound: float = 1.0
    tolerance: float = 0.0

    @property
    def passed(self) -> bool:
        return bool(np.all(self.D_eps >= -self.tolerance))

    def concentration_bound_holds(self) -> bool:
        """``int_0^tau |mu_c| <= C int_0^tau D`` at every sample time."""
        if self.mu_c is None:
            mass = np.zeros(self.times.size)
        else:
            mass = np.sum(np.abs(self.mu_c), axis=tuple(range(1, self.mu_c.ndim)))
        ok = True
        for k in range(1, self.times.size):
            lhs = _trapezoid(mass[:k + 1], self.times[:k + 1])
            rhs = self.C_bound * _trapezoid(self.D_eps[:k + 1], self.times[:k + 1])
            ok &= lhs <= rhs + self.tolerance
        return bool(ok)


def scaled_energy(series: MeasureSeries) -> np.ndarray:
    """``int <nu; |m|^2 / (2 rho) + c_v p / eps^2>`` per sample."""
    return _space_integral(series, series.expect("energy"))


def force_work(series: MeasureSeries, method: str = "mass") -> np.ndarray:
    """``eps^-2 int_0^tau int <nu; m> . grad F`` per sample.

    ``"mass"`` evaluates it through the mass identity with the time-independent
    test function ``F``: ``eps^-2 [int <rho> F]_0^tau``.  ``"trapezoid"``
    integrates the sampled momenta against the centred gradient of ``F``.
    """
    prof = series.profile
    n = series.times.size
    if prof is None:
        return np.zeros(n)
    inv_eps2 = 1.0 / series.eps**2
    if method == "mass":
        I = _space_integral(series, series.expect("rho") * prof.F)
        return inv_eps2 * (I - I[0])
    if method == "trapezoid":
        m = series.expect("m")
        rate = np.zeros(n)
        for d in range(series.grid.ndim):
            gradF = _centred_gradient(prof.F_g, series.grid, d)
            rate = rate + _space_integral(series, m[:, d] * gradF)
        return inv_eps2 * np.array([_trapezoid(rate[:k + 1], series.times[:k + 1]) for k in range(n)])
    raise ValueError(f"unknown work quadrature {method!r}")


def _centred_gradient(F_g, grid: Grid, d: int):
    from .grid_fields import NG

    sl_hi = [slice(NG, -NG)] * grid.ndim
    sl_lo = [slice(NG, -NG)] * grid.ndim
    sl_hi[d] = slice(NG + 1, F_g.shape[d] - NG + 1)
    sl_lo[d] = slice(NG - 1, F_g.shape[d] - NG - 1)
    return (F_g[tuple(sl_hi)] - F_g[tuple(sl_lo)]) / (2.0 * grid.dx[d])


def check_energy_inequality(series: MeasureSeries, rel_tol: float = 1e-8, work: str = "mass",
                            raise_on_violation: bool = True) -> DefectLedger:
    """Dissipation defect ``D(tau) = E(0) - E(tau) + work(tau)`` and its sign check.

    Passes when ``D(tau) >= -rel_tol * |E(0)|`` at every sample.
    """
    E = scaled_energy(series)
    W = force_work(series, work)
    D = E[0] - E + W
    tol = rel_tol * abs(E[0])
    ledger = DefectLedger(series.times, D, E, W, series.mu_c, tolerance=tol)
    if raise_on_violation and not ledger.passed:
        k = int(np.argmin(D))
        raise InequalityViolated(
            f"energy inequality violated: D = {D[k]:.3e} < -{tol:.3e} at t = {series.times[k]:.6g}",
            float(series.times[k]), float(D[k]),
        )
    return ledger


# ---------------------------------------------------------------------------
# entropy


@dataclass(frozen=True)
class ConcaveChi:
    """A registered concave, bounded-above renormalisation ``chi``."""

    name: str
    fn: object
    upper: float

    def __call__(self, s):
        return self.fn(np.asarray(s, dtype=float))


def chi_lambda(s_star: float, s_sup: float, lam: float = 1.0) -> ConcaveChi:
    """``lam (s - s_*)`` below ``s_*``, zero on the strip, ``-lam (s - s^*)`` above."""
    if s_sup < s_star or lam <= 0.0:
        raise ValueError("need s_star <= s_sup and lam > 0")

    def fn(s):
        return np.where(s < s_star, lam * (s - s_star), np.where(s > s_sup, -lam * (s - s_sup), 0.0))

    return ConcaveChi(f"chi_lambda[{s_star:.6g},{s_sup:.6g}]", fn, 0.0)


def clipped_affine(slope: float, offset: float, cap: float) -> ConcaveChi:
    """``min(slope * s + offset, cap)``."""
    return ConcaveChi(
        f"min({slope:g}s+{offset:g},{cap:g})", lambda s: np.minimum(slope * s + offset, cap), cap
    )


def constant_chi(value: float) -> ConcaveChi:
    return ConcaveChi(f"const{value:g}", lambda s: np.full_like(s, value), value)


def _entropy_residuals(series: MeasureSeries, chi: ConcaveChi, tf: TestFunction) -> np.ndarray:
    """Entropy-inequality residual at every sample time (first entry is zero)."""
    times = series.times
    coords = series.grid.mesh()
    phi_s = tf.space_value(coords)
    grad_s = tf.space_grad(coords)
    rc = series.expect("rho_chi_s", chi=chi)
    cm = series.expect("chi_s_m", chi=chi)
    I_rc = _space_integral(series, rc * phi_s)
    I_flux = sum(_space_integral(series, cm[:, d] * grad_s[d]) for d in range(series.grid.ndim))
    Tv = tf.time_value(times)
    integrand = tf.time_deriv(times) * I_rc + Tv * I_flux
    right = np.concatenate([[0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(times))])
    left = Tv * I_rc - Tv[0] * I_rc[0]
    return left - right


def residual_entropy(series: MeasureSeries, chi: ConcaveChi, tf: TestFunction,
                     upto: int | None = None) -> float:
    """``[int <rho chi(s)> phi]_0^tau - int_0^tau int (<rho chi(s)> d_t phi + <chi(s) m> . grad phi)``."""
    k = len(series.times) - 1 if upto is None else upto
    return float(_entropy_residuals(series, chi, tf)[k])


def check_entropy_inequality(series: MeasureSeries, chi: ConcaveChi, tf: TestFunction,
                             tol: float = 0.0, raise_on_violation: bool = True) -> float:
    """Entropy inequality residual (must be ``>= -tol``) for ``tf >= 0``.

    The residual is checked at every sample time ``tau`` and the smallest
    value is returned.
    """
    vals = _entropy_residuals(series, chi, tf)[1:]
    worst = float(np.min(vals)) if vals.size else 0.0
    if raise_on_violation and worst < -tol:
        k = int(np.argmin(vals)) + 1
        raise InequalityViolated(
            f"entropy inequality violated for {chi.name}, {tf.ident}: {worst:.3e} < -{tol:.3e}",
            float(series.times[k]), worst,
        )
    return worst


@dataclass
class StripReport:
    min_s: float
    max_s: float
    violation_mass: float


def entropy_strip(series: MeasureSeries, s_star: float, s_sup: float, tol: float = 0.0,
                  rho_floor: float = 0.0) -> StripReport:
    """Entropy extremes over positive-weight atoms with ``rho > rho_floor``.

    ``violation_mass`` is the largest (over samples) weighted cell volume
    carrying entropy outside ``[s_star - tol, s_sup + tol]``.
    """
    lo, hi, worst = np.inf, -np.inf, 0.0
    for mu in series.measures:
        s = entropy(mu.rho, mu.p, series.eos)
        live = (mu.weights > 0.0) & (mu.rho > rho_floor)
        if np.any(live):
            lo = min(lo, float(np.min(s[live])))
            hi = max(hi, float(np.max(s[live])))
        bad = live & ((s < s_star - tol) | (s > s_sup + tol))
        worst = max(worst, float(np.sum(mu.weights[bad])) * series.grid.cell_volume)
    return StripReport(lo, hi, worst)


# ---------------------------------------------------------------------------
# reports


@dataclass
class ResidualRow:
    functional: str
    test_function: str
    residual: float
    tolerance: float
    sign_constrained: bool = False

    @property
    def passed(self) -> bool:
        if self.sign_constrained:
            return self.residual >= -self.tolerance
        return abs(self.residual) <= self.tolerance


@dataclass
class ResidualReport:
    rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def inequalities_passed(self) -> bool:
        return all(r.passed for r in self.rows if r.sign_constrained)

    def summary(self, functional: str) -> tuple:
        vals = np.array([abs(r.residual) for r in self.rows if r.functional == functional])
        if vals.size == 0:
            return 0.0, 0.0
        return float(np.max(vals)), float(np.sqrt(np.mean(vals**2)))

    def write_csv(self, path) -> None:
        write_table(
            Path(path),
            [{"functional": r.functional, "test_function": r.test_function,
              "residual": repr(float(r.residual)), "tolerance": repr(float(r.tolerance)),
              "pass": r.passed} for r in self.rows],
            ["functional", "test_function", "residual", "tolerance", "pass"],
        )


def run_checks(series: MeasureSeries, tol_identity: float = 1e-9, rel_tol_ineq: float = 1e-8,
               s_strip: tuple | None = None, K: int = 4) -> ResidualReport:
    """Evaluate every functional on the default test-function families.

    Mass and momentum identities are reported against ``tol_identity`` (they
    are not sign-constrained).  The energy inequality and the entropy
    inequality are sign-checked with tolerance ``rel_tol_ineq * E(0)``: the
    entropy inequality uses ``chi_lambda`` of ``s_strip`` (default: the
    initial entropy range) against the non-negative family, and the constant
    and clipped-affine ``chi`` against spatially constant test functions.
    """
    rep = ResidualReport()
    horizon = float(series.times[-1]) if series.times[-1] > 0 else 1.0
    for tf in scalar_family(series.grid, horizon, K):
        rep.rows.append(ResidualRow("mass", tf.ident, residual_mass(series, tf), tol_identity))
    for tf in vector_family(series.grid, horizon, K):
        res, _ = residual_momentum(series, tf)
        rep.rows.append(ResidualRow("momentum", tf.ident, res, tol_identity))
    ledger = check_energy_inequality(series, rel_tol_ineq, raise_on_violation=False)
    tol = ledger.tolerance
    rep.rows.append(ResidualRow("energy", "D_min", float(np.min(ledger.D_eps)), tol, True))
    if s_strip is None:
        s0 = entropy(series.measures[0].rho, series.measures[0].p, series.eos)
        live = series.measures[0].weights > 0.0
        s_strip = (float(np.min(s0[live])), float(np.max(s0[live])))
    chis = [chi_lambda(*s_strip)]
    for chi in chis:
        for tf in nonnegative_family(series.grid, horizon):
            val = check_entropy_inequality(series, chi, tf, tol, raise_on_violation=False)
            rep.rows.append(ResidualRow(f"entropy:{chi.name}", tf.ident, val, tol, True))
    s_mid = 0.5 * (s_strip[0] + s_strip[1])
    for chi in (constant_chi(1.0), clipped_affine(1.0, 0.0, s_mid), clipped_affine(-1.0, 0.0, -s_mid)):
        for tf in constant_in_space(series.grid, horizon):
            val = check_entropy_inequality(series, chi, tf, tol, raise_on_violation=False)
            rep.rows.append(ResidualRow(f"entropy:{chi.name}", tf.ident, val, tol, True))
    return rep
