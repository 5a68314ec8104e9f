"""Independent reference solutions used by the tests.

Nothing here imports the package: the oracles are written from the
textbook formulas so that they cross-check the solvers rather than echo them.
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import brentq


def euler_exact(left, right, gamma: float, x, t: float, x0: float = 0.5):
    """Exact solution of the 1D gas-dynamics Riemann problem (no vacuum).

    ``left``/``right`` are ``(rho, u, p)``.  Returns ``(rho, u, p)`` sampled at
    ``x`` and time ``t``.
    """
    rl, ul, pl = left
    rr, ur, pr = right
    cl, cr = np.sqrt(gamma * pl / rl), np.sqrt(gamma * pr / rr)
    g1 = (gamma - 1.0) / (2.0 * gamma)

    def f(p, r, pk, ck):
        if p > pk:  # shock
            A = 2.0 / ((gamma + 1.0) * r)
            B = (gamma - 1.0) / (gamma + 1.0) * pk
            return (p - pk) * np.sqrt(A / (p + B))
        return 2.0 * ck / (gamma - 1.0) * ((p / pk) ** g1 - 1.0)

    def g(p):
        return f(p, rl, pl, cl) + f(p, rr, pr, cr) + (ur - ul)

    ps = brentq(g, 1e-12, 100.0 * max(pl, pr), xtol=1e-15, rtol=1e-15)
    us = 0.5 * (ul + ur) + 0.5 * (f(ps, rr, pr, cr) - f(ps, rl, pl, cl))

    xi = (np.asarray(x, dtype=float) - x0) / t
    rho = np.empty_like(xi)
    u = np.empty_like(xi)
    p = np.empty_like(xi)
    gm = (gamma - 1.0) / (gamma + 1.0)
    for k, s in enumerate(xi):
        if s < us:
            r, uu, pk, ck, sgn = rl, ul, pl, cl, -1.0
        else:
            r, uu, pk, ck, sgn = rr, ur, pr, cr, 1.0
        if ps > pk:
            rs = r * (ps / pk + gm) / (gm * ps / pk + 1.0)
            S = uu + sgn * ck * np.sqrt((gamma + 1.0) / (2.0 * gamma) * ps / pk + g1)
            outside = (s < S) if sgn < 0 else (s > S)
            rho[k], u[k], p[k] = (r, uu, pk) if outside else (rs, us, ps)
        else:
            rs = r * (ps / pk) ** (1.0 / gamma)
            cs = ck * (ps / pk) ** g1
            head = uu + sgn * ck
            tail = us + sgn * cs
            if (sgn < 0 and s < head) or (sgn > 0 and s > head):
                rho[k], u[k], p[k] = r, uu, pk
            elif (sgn < 0 and s > tail) or (sgn > 0 and s < tail):
                rho[k], u[k], p[k] = rs, us, ps
            else:  # inside the fan
                uf = 2.0 / (gamma + 1.0) * (-sgn * ck + 0.5 * (gamma - 1.0) * uu + s)
                cf = -sgn * (uf - s)
                rho[k] = r * (cf / ck) ** (2.0 / (gamma - 1.0))
                u[k] = uf
                p[k] = pk * (cf / ck) ** (2.0 * gamma / (gamma - 1.0))
    return rho, u, p


def swe_dam_break(hl: float, hr: float, x, t: float, x0: float = 0.5, g: float = 1.0):
    """Exact wet dam break (``u = 0`` on both sides): rarefaction left, shock right."""
    cl, cr = np.sqrt(g * hl), np.sqrt(g * hr)

    def phi(h, hk):
        if h > hk:
            return (h - hk) * np.sqrt(0.5 * g * (h + hk) / (h * hk))
        return 2.0 * (np.sqrt(g * h) - np.sqrt(g * hk))

    hs = brentq(lambda h: phi(h, hl) + phi(h, hr), 1e-12, 2.0 * max(hl, hr), xtol=1e-15, rtol=1e-15)
    us = -phi(hs, hl)
    cs = np.sqrt(g * hs)
    S = hs * us / (hs - hr)  # shock speed from mass jump
    xi = (np.asarray(x, dtype=float) - x0) / t
    h = np.where(xi < -cl, hl, 0.0)
    u = np.zeros_like(xi)
    fan = (xi >= -cl) & (xi < us - cs)
    h = np.where(fan, (2.0 * cl - xi) ** 2 / (9.0 * g), h)
    u = np.where(fan, 2.0 / 3.0 * (cl + xi), u)
    star = (xi >= us - cs) & (xi < S)
    h = np.where(star, hs, h)
    u = np.where(star, us, u)
    right = xi >= S
    h = np.where(right, hr, h)
    return h, u
