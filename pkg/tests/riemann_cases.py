"""Shock-tube runs compared with the exact Riemann solvers of ``oracles``."""
import numpy as np

from anelastic_limit.euler_solver import SolverConfig, run
from anelastic_limit.grid_fields import ConservedField, Grid
from anelastic_limit.thermo import EosParams
from oracles import euler_exact, swe_dam_break

AIR = EosParams(c_v=2.5)


def sod_error(flux, reconstruction="muscl_minmod", low_mach_fix=False, n=400):
    """Relative L1 density error of the Sod problem at ``t = 0.2``."""
    grid = Grid.column(n)
    x = grid.centers(0)
    left = x < 0.5
    f = ConservedField.from_primitives(np.where(left, 1.0, 0.125), np.zeros((1, n)),
                                       np.where(left, 1.0, 0.1), 1.0, AIR)
    cfg = SolverConfig(eps=1.0, flux=flux, end_time=0.2, reconstruction=reconstruction,
                       low_mach_fix=low_mach_fix)
    res = run(f, grid, None, cfg, AIR)
    exact, _, _ = euler_exact((1.0, 0.0, 1.0), (0.125, 0.0, 0.1), AIR.gamma, x, 0.2)
    return np.sum(np.abs(res.final.rho - exact)) / np.sum(np.abs(exact))


def dam_break_error(flux, n=400):
    """Relative L1 depth error of the wet dam break ``h = 1 | 0.5`` at ``t = 0.2``."""
    grid = Grid.column(n)
    x = grid.centers(0)
    h = np.where(x < 0.5, 1.0, 0.5)
    f = ConservedField.from_primitives(h, np.zeros((1, n)), 0.5 * h**2, 1.0, mode="swe")
    res = run(f, grid, None, SolverConfig(eps=1.0, flux=flux, end_time=0.2, mode="swe"))
    exact, _ = swe_dam_break(1.0, 0.5, x, 0.2)
    return np.sum(np.abs(res.final.rho - exact)) / np.sum(np.abs(exact))
