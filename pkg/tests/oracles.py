"""Brute-force reference implementations for one-dimensional grids.

These loop over every (x, t, y) triple with plain Python arithmetic.  They
share the discretisation rules with the engines (cell masses from a midpoint
sub-grid, integer node offsets times the spacing) but none of their code.
"""

from __future__ import annotations

import math

import numpy as np


def subdivisions(phi, m: float, h: float, cap: int = 4096) -> int:
    need = h / (phi.quadrature_step * abs(m))
    return int(min(cap, max(1, math.ceil(need - 1e-9))))


def cell_mass(phi, m: float, h: float, d: int, r_cut: float) -> float:
    """Mass of ``|m|^-1 phi(u / m)`` over the cell at offset ``d``."""
    minv = float(np.linalg.inv(np.array([[m]]))[0, 0])
    sub = subdivisions(phi, m, h)
    acc = 0.0
    for q in range(sub):
        u = d * h + ((q + 0.5) / sub - 0.5) * h
        z = minv * u
        if abs(z) <= r_cut:
            acc += float(phi.evaluate(np.array([[z]]))[0])
    return acc * abs(minv) * h / sub


def conv_table(f, phi, cover, t: float, r_cut: float):
    """``F[x, y] = (f * phi_{x,t})(y)`` for every node pair (the cover may depend on x)."""
    n = f.shape[0]
    h = f.spacing[0]
    xs = f.axis(0)
    F = np.zeros((n, n))
    for i in range(n):
        m = float(cover.matrix([xs[i]], t)[0, 0])
        masses = {}
        for j in range(n):
            acc = 0.0
            for k in range(n):
                d = j - k
                if d not in masses:
                    masses[d] = cell_mass(phi, m, h, d, r_cut)
                acc += f.values[k] * masses[d]
            F[i, j] = acc
    return F


def minv_of(cover, x: float, t: float) -> float:
    return float(np.linalg.inv(cover.matrix([x], t))[0, 0])


def inside(minv: float, d: int, h: float) -> bool:
    z = minv * (d * h)
    return z * z < 1.0


def brute_fields(f, phi, cover, levels, N: int, r_cut: float, t0=None, L: float = 0.0, aperture: int = 0, J: int = 1):
    """Radial, non-tangential and tangential fields, optionally truncated and with aperture."""
    n = f.shape[0]
    h = f.spacing[0]
    xs = f.axis(0)
    rad = np.zeros(n)
    nt = np.zeros(n)
    tg = np.zeros(n)
    for t in levels:
        F = np.abs(conv_table(f, phi, cover, t, r_cut))
        tf = (1.0 + 2.0 ** (t + t0)) ** (-L) if L > 0 else 1.0
        for i in range(n):
            yw = np.ones(n)
            if L > 0:
                mi0 = minv_of(cover, xs[i], t0)
                yw = np.array([(1.0 + math.sqrt((mi0 * xs[j]) ** 2)) ** (-L) for j in range(n)])
            rad[i] = max(rad[i], F[i, i] * yw[i] * tf)
            mi = minv_of(cover, xs[i], t)
            mia = minv_of(cover, xs[i], t - aperture * J) if aperture else mi
            for j in range(n):
                a = F[i, j] * yw[j]
                if inside(mia, j - i, h):
                    nt[i] = max(nt[i], a * tf)
                z = mi * ((j - i) * h)
                rho = math.sqrt(z * z)
                tg[i] = max(tg[i], a * (1.0 + rho) ** (-N) * tf)
    return rad, nt, tg


def brute_hl(f, cover, levels):
    n = f.shape[0]
    h = f.spacing[0]
    xs = f.axis(0)
    out = np.zeros(n)
    for t in levels:
        for i in range(n):
            r = abs(float(cover.matrix([xs[i]], t)[0, 0]))
            acc = 0.0
            for j in range(n):
                a = (j - i) * h - h / 2
                b = (j - i) * h + h / 2
                acc += abs(f.values[j]) * max(0.0, min(r, b) - max(-r, a))
            out[i] = max(out[i], acc / (2 * r))
    return out
