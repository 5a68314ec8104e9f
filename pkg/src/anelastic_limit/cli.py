"""Command-line entry point ``anelastic-limit``.

Exit status: 0 when every check of the subcommand passes, 2 when a check
fails, 1 on a runtime error (bad config, solver breakdown, I/O).
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as C
from . import dmv_checker as dmv
from .anelastic_solver import AnelasticSolver
from .euler_solver import SERIES_COLUMNS, SolverConfig, run
from .grid_fields import integrate, write_snapshot, write_table
from .limit_harness import (
    InsufficientData,
    anelastic_velocity,
    generate_well_prepared,
    loglog_fit,
    run_sweep,
)
from .static_states import verify_hydrostatic, write_profile_csv

EXIT_OK, EXIT_RUNTIME, EXIT_ASSERT = 0, 1, 2


class CheckFailed(AssertionError):
    pass


def _report(cond: bool, message: str) -> bool:
    print(f"[{'PASS' if cond else 'FAIL'}] {message}")
    return bool(cond)


def _check(cond: bool, message: str) -> None:
    if not _report(cond, message):
        raise CheckFailed(message)


def _solver_config(cfg: dict, mode: str) -> SolverConfig:
    return SolverConfig(
        eps=float(cfg["eps"]), flux=cfg["flux"], cfl=float(cfg["cfl"]),
        reconstruction=cfg["reconstruction"], end_time=float(cfg["end_time"]),
        mode=mode, low_mach_fix=bool(cfg["low_mach_fix"]),
    )


def _initial_field(cfg: dict, grid, profile, eos):
    kind = cfg["init"]["kind"]
    if kind == "riemann":
        return C.riemann_data(cfg, grid, eos)
    if kind == "static":
        return C.static_data(profile, cfg, eos)
    if kind == "well_prepared":
        if profile is None:
            raise C.ConfigError("well_prepared data need an isentropic profile")
        spec = C.sweep_config(cfg)[1]
        solver = AnelasticSolver(grid, profile)
        U0 = solver.cell_velocity(anelastic_velocity(spec, solver))
        return generate_well_prepared(spec, profile, float(cfg["eps"]), grid, eos, U0)
    raise C.ConfigError(f"init.kind {kind!r} is not available for this subcommand")


def _cmd_static(cfg: dict, out: Path) -> None:
    if cfg["profile"]["kind"] == "none":
        cfg["profile"]["kind"] = "isentropic"
    grid = C.build_grid(cfg)
    eos = C.build_eos(cfg)
    profile = C.build_profile(cfg, grid, eos)
    write_profile_csv(out / "profile.csv", profile)
    res = verify_hydrostatic(profile)
    print(f"kind={profile.kind} c_M={profile.c_M!r} mass={integrate(profile.rho, grid)!r} "
          f"hydrostatic_residual={res:.3e}")
    _check(bool(np.all(profile.rho > 0.0)), "profile density positive")
    _check(np.isfinite(res), "hydrostatic residual finite")


def _cmd_run(cfg: dict, out: Path, mode: str) -> None:
    cfg["mode"] = mode
    grid = C.build_grid(cfg)
    eos = None if mode == "swe" else C.build_eos(cfg)
    profile = C.build_profile(cfg, grid, eos)
    f0 = _initial_field(cfg, grid, profile, eos)
    res = run(f0, grid, profile, _solver_config(cfg, mode), eos, sample_times=C.sample_times(cfg))
    write_table(out / "timeseries.csv", res.series, SERIES_COLUMNS)
    for k, f in enumerate(res.samples):
        write_snapshot(out / f"snapshot_{k:04d}.csv", f, grid, eos)
    m0 = integrate(f0.rho, grid)
    drift = max(abs(r["mass"] - m0) for r in res.series)
    print(f"steps={res.steps} t_end={res.final.t!r} mass_drift={drift:.3e}")
    _check(drift <= 1e-12 * abs(m0), "mass conserved to 1e-12")
    _check(max(r["clipped_cells"] for r in res.series) == 0, "no floor clipping")


def _cmd_anelastic(cfg: dict, out: Path) -> None:
    grid = C.build_grid(cfg)
    kind = cfg["init"]["kind"]
    if kind == "taylor_green":
        solver = AnelasticSolver(grid, 1.0, cfl=float(cfg["cfl"]))
        u, w = solver.faces_from_function(lambda x, z: (np.sin(x) * np.cos(z), -np.cos(x) * np.sin(z)))
        state = solver.initial_state(u, w)
    elif kind in ("streamfunction", "well_prepared"):
        eos = C.build_eos(cfg)
        profile = C.build_profile(cfg, grid, eos)
        solver = AnelasticSolver(grid, 1.0 if profile is None else profile, cfl=float(cfg["cfl"]))
        state = anelastic_velocity(C.sweep_config(cfg)[1], solver)
    else:
        raise C.ConfigError(f"init.kind {kind!r} is not available for run-anelastic")
    res = solver.run(state, float(cfg["end_time"]), sample_times=C.sample_times(cfg))
    write_table(out / "anelastic_timeseries.csv", res.series,
                ["t", "kinetic_energy", "max_div", "max_grad_u"])
    for k, s in enumerate(res.samples):
        solver.write_snapshot(out / f"anelastic_{k:04d}.csv", s)
    worst = max((r["max_div"] for r in res.series), default=0.0)
    scale = max(solver.momentum_scale(state), 1e-300)
    print(f"steps={len(res.series)} max_div={worst:.3e} grad_growth={res.lifespan.grad_norm:.3e}")
    _check(worst <= 1e-10 * scale, "constraint residual within 1e-10")
    _check(not res.lifespan.flagged, "velocity gradient below the lifespan guard")


def _cmd_sweep(cfg: dict, out: Path) -> None:
    eps_list, spec, sc, workers = C.sweep_config(cfg)
    rep = run_sweep(eps_list, spec, sc, workers=workers)
    rep.write(out)
    for e in rep.eps:
        r = rep.runs[e]
        if r.error:
            print(f"eps={e:g} ERROR {r.error}")
        else:
            print(f"eps={e:g} sup_E={r.sup_E:.4e} sup_D={r.sup_D:.4e} strip_width={r.strip_width:.4e}")
    _check(len(rep.succeeded()) == len(eps_list), "every eps run completed")
    if spec.is_null:
        worst = max(max(rep.column("sup_E")), max(abs(x) for x in rep.column("sup_D")))
        _check(worst <= 1e-11, "null sweep: E and D vanish to 1e-11")
        return
    # every check is reported before the exit status is decided
    ok = [
        _report(rep.strictly_decreasing("sup_E"), "sup E strictly decreasing in eps"),
        _report(rep.strictly_decreasing("sup_D"), "sup D strictly decreasing in eps"),
    ]
    for name in ("sup_E", "sup_D"):
        try:
            fit = loglog_fit(rep.succeeded(), rep.column(name))
        except InsufficientData as exc:
            ok.append(_report(False, f"log-log rate of {name}: {exc}"))
            continue
        print(f"rate({name})={fit.rate:.3f} R2={fit.r_squared:.3f}")
        ok.append(_report(fit.rate > 0.0, f"log-log rate of {name} positive"))
    ok.append(_report(rep.panel_decreasing(), "panel distances decreasing"))
    if not all(ok):
        raise CheckFailed("sweep checks failed")


def _cmd_dmv(cfg: dict, out: Path) -> None:
    mode = cfg["mode"] if cfg["mode"] in ("euler", "swe") else "euler"
    cfg["mode"] = mode
    grid = C.build_grid(cfg)
    eos = C.build_eos(cfg)
    profile = C.build_profile(cfg, grid, eos)
    f0 = _initial_field(cfg, grid, profile, eos)
    res = run(f0, grid, profile, _solver_config(cfg, mode), eos, sample_times=C.sample_times(cfg))
    series = dmv.MeasureSeries.from_fields(res.samples, grid, eos, profile)
    strip = None
    if cfg["init"]["kind"] == "well_prepared":
        # the strip the data are generated in, not the (tighter) initial range
        band = float(cfg["eps"]) ** (2.0 + float(cfg["init"]["alpha"]))
        strip = (eos.s_bar - band, eos.s_bar + band)
    report = dmv.run_checks(series, s_strip=strip)
    report.write_csv(out / "dmv_residuals.csv")
    for name in ("mass", "momentum"):
        mx, rms = report.summary(name)
        print(f"{name}: max={mx:.3e} rms={rms:.3e}")
    _check(report.inequalities_passed, "energy and entropy inequalities hold")


COMMANDS = {
    "static": (_cmd_static, "build a static profile and write profile.csv"),
    "run-euler": (lambda c, o: _cmd_run(c, o, "euler"), "run the scaled Euler solver"),
    "run-swe": (lambda c, o: _cmd_run(c, o, "swe"), "run the shallow-water solver"),
    "run-anelastic": (_cmd_anelastic, "run the anelastic solver"),
    "limit-sweep": (_cmd_sweep, "run the eps sweep against the anelastic reference"),
    "check-dmv": (_cmd_dmv, "evaluate weak-form residuals of an Euler run"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anelastic-limit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, help="YAML or JSON config file")
        p.add_argument("--out", type=Path, help="output directory (default: output.dir)")
        p.add_argument("--seed", type=int, help="seed of the random perturbations")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = C.load_config(args.config)
        if args.seed is not None:
            cfg["init"]["seed"] = args.seed
        out = Path(args.out if args.out is not None else cfg["output"]["dir"])
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command][0](cfg, out)
    except CheckFailed:
        return EXIT_ASSERT
    except (RuntimeError, ValueError, ArithmeticError, OSError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
