import numpy as np
import pytest

from anelastic_limit import dmv_checker as dmv
from anelastic_limit import limit_harness as H
from anelastic_limit.anelastic_solver import AnelasticSolver
from anelastic_limit.euler_solver import entropy_field
from anelastic_limit.grid_fields import Grid, read_table
from anelastic_limit.static_states import build_isentropic, build_isothermal
from anelastic_limit.thermo import EosParams

EOS1 = EosParams(c_v=1.0)
SMALL = H.SweepConfig(nx=24, nz=24, end_time=0.25)


@pytest.fixture(scope="module")
def setup():
    g = Grid.slab(32, 32)
    prof = build_isentropic(0.0, 1.0, g, EOS1)
    solver = AnelasticSolver(g, prof)
    state = H.anelastic_velocity(H.WellPreparedSpec(), solver)
    return g, prof, solver, state, solver.cell_velocity(state)


@pytest.fixture(scope="module")
def small_report():
    return H.run_sweep([0.4, 0.2, 0.1], config=SMALL)


# ---------------------------------------------------------------------------
# well-prepared data


def test_generated_data_satisfy_hypotheses(setup):
    g, prof, solver, state, U0 = setup
    spec = H.WellPreparedSpec()
    assert solver.constraint_residual(state) <= 1e-10 * solver.momentum_scale(state)
    assert np.all(state.w[:, 0] == 0.0) and np.all(state.w[:, -1] == 0.0)
    for eps in (0.4, 0.2, 0.1, 0.05):
        f = H.generate_well_prepared(spec, prof, eps, g, EOS1, U0)
        M = eps * spec.M_eps_amplitude * H.bump(g)
        margin = H.hypothesis_margin(f.rho, f.velocity(), f.pressure(EOS1), prof, U0, eps, M)
        assert np.all(margin >= 0.0)
        s = entropy_field(f, EOS1)
        assert np.max(np.abs(s)) <= eps**3 * (1 + 1e-12)


def test_entropy_deviation_at_eps_one_tenth(setup):
    g, prof, _, _, U0 = setup
    f = H.generate_well_prepared(H.WellPreparedSpec(), prof, 0.1, g, EOS1, U0)
    assert np.max(np.abs(entropy_field(f, EOS1) - 0.0)) <= 1e-3


def test_null_data_are_the_static_state(setup):
    g, prof, *_ = setup
    f = H.generate_well_prepared(H.WellPreparedSpec.null(), prof, 0.2, g, EOS1)
    np.testing.assert_array_equal(f.rho, prof.rho)
    assert np.all(f.m == 0.0)
    np.testing.assert_allclose(f.pressure(EOS1), prof.p, rtol=1e-14)
    assert np.max(np.abs(entropy_field(f, EOS1))) <= 1e-13


def test_data_converge_to_target(setup):
    g, prof, _, _, U0 = setup
    errs = []
    for eps in (0.4, 0.2, 0.1):
        f = H.generate_well_prepared(H.WellPreparedSpec(), prof, eps, g, EOS1, U0)
        errs.append(max(np.max(np.abs(f.rho - prof.rho)), np.max(np.abs(f.velocity() - U0)),
                        np.max(np.abs(f.pressure(EOS1) - prof.p))))
    assert errs[0] > errs[1] > errs[2]


def test_seed_changes_perturbation(setup):
    g, prof, _, _, U0 = setup
    a = H.generate_well_prepared(H.WellPreparedSpec(seed=1), prof, 0.2, g, EOS1, U0)
    b = H.generate_well_prepared(H.WellPreparedSpec(seed=1), prof, 0.2, g, EOS1, U0)
    c = H.generate_well_prepared(H.WellPreparedSpec(seed=2), prof, 0.2, g, EOS1, U0)
    np.testing.assert_array_equal(a.rho, b.rho)
    assert not np.array_equal(a.rho, c.rho)


def test_hypothesis_gate(setup):
    g, prof, _, _, U0 = setup
    with pytest.raises(H.HypothesisViolated, match="deviation bound"):
        H.generate_well_prepared(H.WellPreparedSpec(M_eps_amplitude=0.01), prof, 0.2, g, EOS1, U0)
    with pytest.raises(H.HypothesisViolated, match="entropy strip"):
        H.generate_well_prepared(H.WellPreparedSpec(sigma=2.0), prof, 0.2, g, EOS1, U0)
    with pytest.raises(ValueError):
        H.generate_well_prepared(H.WellPreparedSpec(), build_isothermal(1.0, 1.0, g), 0.2, g, EOS1)


def test_cadence_validation(setup):
    _, prof, *_ = setup
    H.validate_cadence(0.05, 0.025, prof, EOS1)
    with pytest.raises(ValueError):
        H.validate_cadence(0.05, 0.1, prof, EOS1)
    with pytest.raises(ValueError):
        H.SweepConfig(end_time=0.5, sample_dt=0.3).sample_times()


# ---------------------------------------------------------------------------
# diagnostics


def test_relative_energy_two_routes_agree(setup):
    g, prof, _, _, U0 = setup
    f = H.generate_well_prepared(H.WellPreparedSpec(), prof, 0.2, g, EOS1, U0)
    total, ess, res = H.relative_energy_integral(f, prof, U0, g, EOS1)
    mu = dmv.embed(f, EOS1)
    dens = dmv.expect(mu, "relative_energy", EOS1, r=prof.rho, u_tilde=U0, theta=prof.theta, eps=0.2)
    assert total == pytest.approx(np.sum(dens) * g.cell_volume, rel=1e-12, abs=1e-15)
    assert ess + res == pytest.approx(total, rel=1e-12)
    assert total > 0.0


def test_panel_bumps(setup):
    g, prof, _, _, U0 = setup
    panel = H.build_panel(prof, U0, g, 5)
    assert len(panel) == 5
    centers = np.array([G.center for G in panel])
    gaps = [np.linalg.norm(centers[a] - centers[b]) for a in range(5) for b in range(a + 1, 5)]
    assert 2 * panel[0].radius < min(gaps)  # disjoint supports
    for G in panel:
        c = G.center
        rho = np.array([[c[0], c[0] + 2 * G.radius]])
        m = np.array([[[c[1], c[1]], [c[2], c[2]]]])
        p = np.array([[c[3], c[3]]])
        np.testing.assert_allclose(G(rho, m, p), [[1.0, 0.0]])


def test_loglog_fit_examples():
    eps = np.array([0.4, 0.2, 0.1, 0.05])
    fit = H.loglog_fit(eps, eps**2)
    assert fit.rate == pytest.approx(2.0, abs=1e-10)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.convergent
    flat = H.loglog_fit(eps, np.full(4, 3.0))
    assert flat.rate == 0.0 and not flat.convergent
    with pytest.raises(H.InsufficientData):
        H.loglog_fit(eps[:2], eps[:2])
    with pytest.raises(H.InsufficientData):
        H.loglog_fit(eps, np.array([1.0, 0.0, 0.0, np.nan]))


def _fake_report(values, errors=()):
    eps = [0.4, 0.2, 0.1, 0.05][: len(values)]
    times = np.array([0.0, 1.0])
    runs = {}
    for e, v in zip(eps, values):
        runs[e] = H.EpsRun(e, times, np.array([0.0, v]), np.array([0.0, v / 10]), times, times,
                           -v, v, 0.0, np.array([v]), error="boom" if e in errors else None)
    return H.RelativeEnergyReport(eps, times, runs)


def test_convergence_fit_on_synthetic_reports():
    eps = np.array([0.4, 0.2, 0.1, 0.05])
    fits = H.convergence_fit(_fake_report(list(eps**2)))
    assert fits["sup_E"].rate == pytest.approx(2.0, abs=1e-10)
    assert fits["sup_D"].rate == pytest.approx(2.0, abs=1e-10)
    assert fits["strip_width"].rate == pytest.approx(2.0, abs=1e-10)
    with pytest.raises(H.InsufficientData):
        H.convergence_fit(_fake_report(list(eps**2), errors=(0.2, 0.1)))
    rep = _fake_report([1.0, 0.5, 0.6])
    assert not rep.strictly_decreasing("sup_E")
    assert not rep.panel_decreasing()


# ---------------------------------------------------------------------------
# sweeps


def test_small_sweep(small_report, tmp_path):
    rep = small_report
    assert rep.succeeded() == [0.4, 0.2, 0.1]
    assert rep.strictly_decreasing("sup_E")
    assert rep.panel_decreasing()
    for e in rep.eps:
        r = rep.runs[e]
        np.testing.assert_array_equal(r.times, rep.times)
        assert r.energy_ok and r.entropy_ok
        assert r.strip_violation <= 1e-6
        assert abs(r.sup_D) <= 1e-10 * r.eps**-2
        np.testing.assert_allclose(r.essential + r.residual, r.relative_energy, rtol=1e-12, atol=1e-18)
    assert H.convergence_fit(rep)["sup_E"].rate > 0.0
    rep.write(tmp_path)
    rows = read_table(tmp_path / "sweep_summary.csv")
    assert list(rows[0]) == ["eps", "sup_E", "sup_D", "strip_width", "rate"]
    assert len(rows) == 3 and rows[0]["rate"] == ""
    ts = read_table(tmp_path / "timeseries_eps0.2.csv")
    assert len(ts) == rep.times.size
    assert {"t", "mass", "relative_energy", "D_eps", "essential", "residual"} <= set(ts[0])
    assert float(ts[-1]["relative_energy"]) == rep.runs[0.2].relative_energy[-1]
    panel = read_table(tmp_path / "panel_eps0.1.csv")
    assert [float(r["distance"]) for r in panel] == list(rep.runs[0.1].panel)
    assert all(float(r["sup_D"]) == rep.runs[float(r["eps"])].sup_D for r in rows)
    assert (tmp_path / "anelastic_timeseries.csv").exists()


def test_null_sweep_is_identically_zero():
    rep = H.run_sweep([0.4, 0.2, 0.1], H.WellPreparedSpec.null(), H.SweepConfig(nx=16, nz=16, end_time=0.1))
    for e in rep.eps:
        r = rep.runs[e]
        assert r.error is None
        assert np.max(np.abs(r.relative_energy)) <= 1e-11
        assert np.max(np.abs(r.D_eps)) <= 1e-11


def test_sweep_is_reproducible_across_workers():
    cfg = H.SweepConfig(nx=16, nz=16, end_time=0.1)
    a = H.run_sweep([0.4, 0.2], H.WellPreparedSpec(seed=5), cfg)
    b = H.run_sweep([0.4, 0.2], H.WellPreparedSpec(seed=5), cfg, workers=2)
    for e in a.eps:
        np.testing.assert_array_equal(a.runs[e].relative_energy, b.runs[e].relative_energy)
        np.testing.assert_array_equal(a.runs[e].D_eps, b.runs[e].D_eps)
        np.testing.assert_array_equal(a.runs[e].panel, b.runs[e].panel)


def test_failing_eps_does_not_abort_sweep():
    cfg = H.SweepConfig(nx=16, nz=16, end_time=0.1, sample_dt=0.05)
    rep = H.run_sweep([0.4, 0.05], config=cfg)
    assert rep.runs[0.4].error is None
    assert "acoustic period" in rep.runs[0.05].error
    assert rep.succeeded() == [0.4]
    assert not rep.strictly_decreasing("sup_E")
    with pytest.raises(ValueError):
        H.run_sweep([0.1, 0.2], config=cfg)
