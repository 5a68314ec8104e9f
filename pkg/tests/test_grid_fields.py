import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anelastic_limit.grid_fields import (
    NG,
    ConservedField,
    Grid,
    ghost_fill,
    integrate,
    interior,
    pad,
    read_table,
    write_snapshot,
)
from anelastic_limit.static_states import build_isentropic, build_isothermal
from anelastic_limit.thermo import EosParams

EOS = EosParams(c_v=1.0)


def test_grid_geometry():
    g = Grid.slab(8, 4, width=2.0, height=0.5)
    assert g.shape == (8, 4)
    assert g.dx == (0.25, 0.125)
    assert g.total_volume == pytest.approx(1.0)
    assert g.bc == ("periodic", "wall")
    assert np.allclose(g.centers(1), (np.arange(4) + 0.5) * 0.125)
    assert g.faces(0).size == 9
    with pytest.raises(ValueError):
        Grid((0,), (1.0,), ("wall",))


def test_uniform_periodic_ghosts_equal_interior():
    g = Grid.periodic_box(6, 5)
    f = ConservedField.from_primitives(np.full(g.shape, 2.0), np.zeros((2,) + g.shape),
                                       np.full(g.shape, 3.0), 1.0, EOS)
    ext = ghost_fill(f, g, eos=EOS)
    assert np.all(ext.rho == 2.0)
    assert np.all(ext.energy == f.energy[0, 0])


def test_wall_reflects_normal_momentum():
    g = Grid.column(6)
    rho = np.ones(6)
    u = np.zeros((1, 6))
    u[0, 0] = 1.0
    f = ConservedField.from_primitives(rho, u, np.ones(6), 1.0, EOS)
    ext = ghost_fill(f, g, eos=EOS)
    assert ext.m[0, NG - 1] == -1.0
    assert ext.rho[NG - 1] == ext.rho[NG]


def test_interior_untouched():
    rng = np.random.default_rng(0)
    g = Grid.slab(5, 7)
    prof = build_isentropic(0.0, 1.0, g, EOS)
    rho = prof.rho * (1 + 0.01 * rng.normal(size=g.shape))
    u = 0.1 * rng.normal(size=(2,) + g.shape)
    f = ConservedField.from_primitives(rho, u, prof.p, 0.3, EOS)
    before = f.copy()
    ext = ghost_fill(f, g, prof, EOS)
    assert np.array_equal(interior(ext.rho, 2), before.rho)
    assert np.array_equal(interior(ext.m, 2), before.m)
    assert np.array_equal(interior(ext.energy, 2), before.energy)
    assert np.array_equal(f.rho, before.rho)


@pytest.mark.parametrize("kind", ["isentropic", "isothermal"])
def test_static_ghosts_continue_profile(kind):
    g = Grid.column(32)
    prof = build_isentropic(0.0, 1.0, g, EosParams(c_v=2.5)) if kind == "isentropic" \
        else build_isothermal(1.0, 1.0, g)
    eos = EosParams(c_v=2.5)
    f = ConservedField.from_primitives(prof.rho, np.zeros((1, 32)), prof.p, 0.1, eos)
    ext = ghost_fill(f, g, prof, eos)
    z = g.centers(0, ghosts=True)
    if kind == "isentropic":
        k = (eos.gamma - 1.0) / eos.gamma
        want = (prof.c_M - k * z) ** (1.0 / (eos.gamma - 1.0))
    else:
        want = prof.c_M * np.exp(-z)
    np.testing.assert_allclose(ext.rho, want, rtol=1e-13)


def test_reflection_preserves_mass():
    g = Grid.column(10)
    f = ConservedField.from_primitives(np.linspace(1, 2, 10), np.ones((1, 10)), np.ones(10), 1.0, EOS)
    ext = ghost_fill(f, g, eos=EOS)
    assert integrate(interior(ext.rho, 1), g) == integrate(f.rho, g)


def test_integrate_examples():
    g = Grid.periodic_box(7, 3)
    assert integrate(np.ones(g.shape), g) == pytest.approx(1.0, rel=1e-15)
    prof = build_isentropic(0.0, 1.0, Grid.slab(4, 16), EOS)
    assert integrate(prof.rho, prof.grid) == pytest.approx(1.0, rel=1e-14)
    v = np.ones(g.shape)
    v[1, 1] = np.inf
    assert integrate(v, g) == np.inf


def test_integrate_second_order():
    errs = []
    for n in (16, 32, 64):
        g = Grid.column(n)
        errs.append(abs(integrate(np.exp(g.centers(0)), g) - (np.e - 1.0)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.9)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 12), odd=st.booleans(), seed=st.integers(0, 2**16))
def test_pad_symmetry(n, odd, seed):
    g = Grid.slab(n, n + 1)
    a = np.random.default_rng(seed).normal(size=g.shape)
    p = pad(a, g, odd_axis=1 if odd else None)
    assert np.array_equal(p[:NG, NG:-NG], a[-NG:, :])  # wrap in x
    sign = -1.0 if odd else 1.0
    assert np.array_equal(p[NG:-NG, NG - 1], sign * a[:, 0])  # mirror in z


def test_primitives_roundtrip():
    g = Grid.slab(4, 4)
    rng = np.random.default_rng(2)
    rho = rng.uniform(0.5, 2, g.shape)
    u = rng.normal(size=(2,) + g.shape)
    p = rng.uniform(0.5, 2, g.shape)
    f = ConservedField.from_primitives(rho, u, p, 0.05, EOS)
    np.testing.assert_allclose(f.velocity(), u, rtol=1e-14)
    np.testing.assert_allclose(f.pressure(EOS), p, rtol=1e-9)
    assert f.mode == "euler"
    h = ConservedField.from_primitives(rho, u, 0.5 * rho**2, 1.0, mode="swe")
    assert h.mode == "swe" and h.energy is None


def test_snapshot_columns(tmp_path):
    g = Grid.slab(3, 2)
    f = ConservedField.from_primitives(np.ones(g.shape), np.zeros((2,) + g.shape), np.ones(g.shape), 1.0, EOS)
    write_snapshot(tmp_path / "s.csv", f, g, EOS)
    rows = read_table(tmp_path / "s.csv")
    assert len(rows) == 6
    assert list(rows[0]) == ["x", "z", "rho", "m_x", "m_z", "E", "p"]
