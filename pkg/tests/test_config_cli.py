import json
import math
import subprocess
import sys

import pytest
import yaml

from anelastic_limit import config as C
from anelastic_limit.cli import EXIT_ASSERT, EXIT_OK, EXIT_RUNTIME, main
from anelastic_limit.grid_fields import read_table


def _write(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg) if name.endswith(".json") else yaml.safe_dump(cfg))
    return path


def _main(tmp_path, command, cfg, *extra):
    return main([command, "--config", str(_write(tmp_path, cfg)), "--out", str(tmp_path / "out"), *extra])


def test_load_config_yaml_and_json(tmp_path):
    cfg = {"eps": 0.1, "grid": {"kind": "slab", "nx": 8}}
    a = C.load_config(_write(tmp_path, cfg))
    b = C.load_config(_write(tmp_path, cfg, "cfg.json"))
    assert a == b
    assert a["eps"] == 0.1 and a["grid"]["nx"] == 8 and a["grid"]["nz"] == 1
    assert a["flux"] == "rusanov"
    assert C.load_config() == C.DEFAULTS


def test_load_config_rejects_bad_input(tmp_path):
    with pytest.raises(C.ConfigError, match="grid.depth"):
        C.load_config(_write(tmp_path, {"grid": {"depth": 3}}))
    with pytest.raises(C.ConfigError):
        C.load_config(_write(tmp_path, {"grid": 3}))
    (tmp_path / "list.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(C.ConfigError):
        C.load_config(tmp_path / "list.yaml")
    with pytest.raises(C.ConfigError):
        C.build_grid(C.load_config(overrides={"grid": {"kind": "sphere"}}))


def test_sweep_config_translation():
    cfg = C.load_config(overrides={"sweep": {"null": True, "nx": 16, "eps_list": [0.2, 0.1]}})
    eps, spec, sc, workers = C.sweep_config(cfg)
    assert eps == [0.2, 0.1] and spec.is_null and sc.nx == 16 and workers == 1


def test_sample_times_cover_end_time():
    cfg = C.load_config(overrides={"end_time": 0.22, "output": {"cadence": 0.05}})
    ts = C.sample_times(cfg)
    assert ts[0] == 0.0 and ts[-1] == pytest.approx(0.22)
    assert all(b > a for a, b in zip(ts, ts[1:]))


def test_static_command(tmp_path, capsys):
    cfg = {"grid": {"kind": "slab", "nx": 4, "nz": 16}, "profile": {"kind": "isentropic", "c_v": 1.0}}
    assert _main(tmp_path, "static", cfg) == EXIT_OK
    rows = read_table(tmp_path / "out" / "profile.csv")
    assert len(rows) == 64
    assert "c_M=1.25" in capsys.readouterr().out


def test_run_euler_sod(tmp_path):
    cfg = {"grid": {"kind": "column", "nz": 100}, "output": {"cadence": 0.1}}
    assert _main(tmp_path, "run-euler", cfg) == EXIT_OK
    rows = read_table(tmp_path / "out" / "timeseries.csv")
    assert list(rows[0]) == ["t", "mass", "energy", "work", "min_s", "max_s", "max_u", "clipped_cells"]
    assert len(rows) == 3
    assert (tmp_path / "out" / "snapshot_0002.csv").exists()


def test_run_euler_static_state(tmp_path):
    cfg = {"eps": 0.1, "grid": {"kind": "column", "nz": 32}, "profile": {"kind": "isothermal"},
           "init": {"kind": "static"}, "end_time": 0.05, "output": {"cadence": 0.05}}
    assert _main(tmp_path, "run-euler", cfg) == EXIT_OK


def test_run_swe_lake(tmp_path):
    cfg = {"eps": 0.1, "grid": {"kind": "periodic_line", "nx": 32}, "profile": {"kind": "swe_lake"},
           "init": {"kind": "static"}, "end_time": 0.05}
    assert _main(tmp_path, "run-swe", cfg) == EXIT_OK


def test_run_anelastic_taylor_green(tmp_path):
    cfg = {"grid": {"kind": "periodic_box", "nx": 16, "nz": 16, "width": 2 * math.pi, "height": 2 * math.pi},
           "init": {"kind": "taylor_green"}, "end_time": 0.1}
    assert _main(tmp_path, "run-anelastic", cfg) == EXIT_OK
    rows = read_table(tmp_path / "out" / "anelastic_timeseries.csv")
    assert list(rows[0]) == ["t", "kinetic_energy", "max_div", "max_grad_u"]


def test_run_anelastic_streamfunction(tmp_path):
    cfg = {"grid": {"kind": "slab", "nx": 16, "nz": 16}, "profile": {"kind": "isentropic", "c_v": 1.0},
           "init": {"kind": "streamfunction"}, "end_time": 0.1}
    assert _main(tmp_path, "run-anelastic", cfg) == EXIT_OK


def test_null_limit_sweep(tmp_path, capsys):
    cfg = {"sweep": {"null": True, "nx": 16, "nz": 16, "end_time": 0.1, "eps_list": [0.4, 0.2, 0.1]}}
    assert _main(tmp_path, "limit-sweep", cfg) == EXIT_OK
    assert "[PASS] null sweep" in capsys.readouterr().out
    rows = read_table(tmp_path / "out" / "sweep_summary.csv")
    assert [r["eps"] for r in rows] == ["0.4", "0.2", "0.1"]


def test_limit_sweep_reports_every_check(tmp_path, capsys):
    cfg = {"sweep": {"nx": 16, "nz": 16, "end_time": 0.1, "eps_list": [0.4, 0.2, 0.1]}}
    code = _main(tmp_path, "limit-sweep", cfg)
    out = capsys.readouterr().out
    for line in ("sup E strictly decreasing", "sup D strictly decreasing", "rate(sup_E)=", "panel distances"):
        assert line in out
    assert code == (EXIT_ASSERT if "[FAIL]" in out else EXIT_OK)
    rows = read_table(tmp_path / "out" / "sweep_summary.csv")
    assert float(rows[-1]["sup_E"]) < float(rows[0]["sup_E"])


def test_check_dmv_well_prepared(tmp_path):
    cfg = {"eps": 0.4, "grid": {"kind": "slab", "nx": 16, "nz": 16},
           "profile": {"kind": "isentropic", "c_v": 1.0}, "init": {"kind": "well_prepared"},
           "low_mach_fix": True, "end_time": 0.1, "output": {"cadence": 0.025}}
    assert _main(tmp_path, "check-dmv", cfg) == EXIT_OK
    rows = read_table(tmp_path / "out" / "dmv_residuals.csv")
    assert list(rows[0]) == ["functional", "test_function", "residual", "tolerance", "pass"]


def test_check_dmv_flags_shock(tmp_path, capsys):
    # the shock raises the entropy above its initial range
    cfg = {"grid": {"kind": "column", "nz": 100}, "output": {"cadence": 0.02}}
    assert _main(tmp_path, "check-dmv", cfg) == EXIT_ASSERT
    assert "[FAIL]" in capsys.readouterr().out


def test_runtime_errors_exit_one(tmp_path):
    assert _main(tmp_path, "run-euler", {"grid": {"kind": "sphere"}}) == EXIT_RUNTIME
    assert _main(tmp_path, "run-euler", {"grid": {"depth": 1}}) == EXIT_RUNTIME
    assert main(["static", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path)]) == EXIT_RUNTIME
    assert _main(tmp_path, "run-euler", {"init": {"kind": "well_prepared"}}) == EXIT_RUNTIME


def test_seed_flag_reaches_generator(tmp_path):
    cfg = {"eps": 0.4, "grid": {"kind": "slab", "nx": 8, "nz": 8},
           "profile": {"kind": "isentropic", "c_v": 1.0}, "init": {"kind": "well_prepared"},
           "end_time": 0.01, "output": {"cadence": 0.01}}
    for seed in ("1", "2"):
        assert _main(tmp_path, "run-euler", cfg, "--seed", seed) == EXIT_OK
        (tmp_path / f"s{seed}.csv").write_text((tmp_path / "out" / "snapshot_0000.csv").read_text())
    assert (tmp_path / "s1.csv").read_text() != (tmp_path / "s2.csv").read_text()


def test_module_entry_point(tmp_path):
    cfg = _write(tmp_path, {"grid": {"kind": "column", "nz": 8}, "profile": {"kind": "isothermal"}})
    proc = subprocess.run(
        [sys.executable, "-m", "anelastic_limit.cli", "static", "--config", str(cfg), "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "[PASS]" in proc.stdout
