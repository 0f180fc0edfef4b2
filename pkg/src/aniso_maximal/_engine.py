"""Low-level kernels shared by the maximal operators.

Grids are handled internally as 2-D arrays; a 1-D grid of ``n`` nodes is the
``(1, n)`` array with a diagonal ``diag(m, m)`` embedding of the scalar
matrix, which keeps every distance and membership computation bitwise equal
to its 1-D counterpart.

Canonical arithmetic: an offset ``d`` (integer node difference) becomes
``u_k = d_k * h_k``; ``z = minv @ u`` is written out term by term and a node
belongs to the open ellipsoid iff ``z0*z0 + z1*z1 < 1``.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg
import scipy.signal
from numba import njit

from .kernels import TestFunction

SUBDIV_CAP = {1: 4096, 2: 64}


# ---------------------------------------------------------------------- embedding
def embed_values(values: np.ndarray) -> np.ndarray:
    return values.reshape(1, -1) if values.ndim == 1 else values


def embed_matrix(m: np.ndarray) -> np.ndarray:
    if m.shape == (1, 1):
        return np.array([[m[0, 0], 0.0], [0.0, m[0, 0]]])
    return m


def embed_spacing(h: tuple[float, ...]) -> tuple[float, float]:
    return (1.0, h[0]) if len(h) == 1 else (h[0], h[1])


# ---------------------------------------------------------------------- numba kernels
@njit(nogil=True, cache=True)
def ellipse_runs(minv, h0, h1, r0, r1):
    """Row offsets ``d0`` and column intervals ``[a, b]`` of the nodes in the open ellipse.

    Scans the box ``|d0| <= r0, |d1| <= r1``; raises if a row's member set is
    not contiguous (a convex set cannot produce that).
    """
    d0s = np.empty(2 * r0 + 1, np.int64)
    lo = np.empty(2 * r0 + 1, np.int64)
    hi = np.empty(2 * r0 + 1, np.int64)
    count = 0
    for d0 in range(-r0, r0 + 1):
        u0 = d0 * h0
        first = 1
        a = 0
        b = -1
        members = 0
        for d1 in range(-r1, r1 + 1):
            u1 = d1 * h1
            z0 = minv[0, 0] * u0 + minv[0, 1] * u1
            z1 = minv[1, 0] * u0 + minv[1, 1] * u1
            if z0 * z0 + z1 * z1 < 1.0:
                if first:
                    a = d1
                    first = 0
                b = d1
                members += 1
        if members > 0:
            if members != b - a + 1:
                raise ValueError("ellipse row is not contiguous")
            d0s[count] = d0
            lo[count] = a
            hi[count] = b
            count += 1
    return d0s[:count], lo[:count], hi[:count]


@njit(nogil=True, cache=True)
def windowed_max(A, p0, p1, d0s, lo, hi, include_center, out):
    """``out[k] = max`` of ``A`` over the ellipse runs placed at node ``(p0[k], p1[k])``."""
    n0, n1 = A.shape
    for k in range(p0.shape[0]):
        x0 = p0[k]
        x1 = p1[k]
        best = A[x0, x1] if include_center else 0.0
        for r in range(d0s.shape[0]):
            i0 = x0 + d0s[r]
            if i0 < 0 or i0 >= n0:
                continue
            a = x1 + lo[r]
            b = x1 + hi[r]
            if a < 0:
                a = 0
            if b > n1 - 1:
                b = n1 - 1
            for i1 in range(a, b + 1):
                if not include_center and d0s[r] == 0 and i1 == x1:
                    continue
                v = A[i0, i1]
                if v > best:
                    best = v
        out[k] = best


@njit(nogil=True, cache=True)
def build_pyramid(A):
    """Max-pyramid of ``A`` packed into one buffer; the top level is a single cell."""
    n0, n1 = A.shape
    levels = 1
    s0 = n0
    s1 = n1
    while s0 > 1 or s1 > 1:
        s0 = (s0 + 1) // 2
        s1 = (s1 + 1) // 2
        levels += 1
    sh0 = np.empty(levels, np.int64)
    sh1 = np.empty(levels, np.int64)
    offs = np.empty(levels + 1, np.int64)
    s0 = n0
    s1 = n1
    total = 0
    for lv in range(levels):
        sh0[lv] = s0
        sh1[lv] = s1
        offs[lv] = total
        total += s0 * s1
        s0 = (s0 + 1) // 2
        s1 = (s1 + 1) // 2
    offs[levels] = total
    buf = np.empty(total)
    for i in range(n0):
        for j in range(n1):
            buf[i * n1 + j] = A[i, j]
    for lv in range(1, levels):
        pb = offs[lv - 1]
        ps1 = sh1[lv - 1]
        ps0 = sh0[lv - 1]
        cb = offs[lv]
        for i in range(sh0[lv]):
            for j in range(sh1[lv]):
                m = -1.0
                for a in range(2 * i, min(2 * i + 2, ps0)):
                    for b in range(2 * j, min(2 * j + 2, ps1)):
                        v = buf[pb + a * ps1 + b]
                        if v > m:
                            m = v
                buf[cb + i * sh1[lv] + j] = m
    return buf, offs, sh0, sh1


@njit(nogil=True, cache=True)
def tangential_max(A, buf, offs, sh0, sh1, p0, p1, minv, h0, h1, sig, N, out):
    """Exact ``max_y A[y] * (1 + |minv (y - x)|)^-N`` by branch and bound on the pyramid.

    A block is discarded when its max times the weight at the smallest
    possible ellipse radius ``dist / sig`` (``sig`` = largest singular value
    of the matrix) cannot beat the current best.
    """
    n0, n1 = A.shape
    levels = sh0.shape[0]
    cap = 4 * levels + 8
    st_l = np.empty(cap, np.int64)
    st_0 = np.empty(cap, np.int64)
    st_1 = np.empty(cap, np.int64)
    c_l = np.empty(4, np.int64)
    c_0 = np.empty(4, np.int64)
    c_1 = np.empty(4, np.int64)
    c_d = np.empty(4)
    shrink = 1.0 - 1e-12
    w0 = -1
    w1 = -1
    for k in range(p0.shape[0]):
        x0 = p0[k]
        x1 = p1[k]
        best = A[x0, x1]
        # warm start from the previous point's maximiser
        if w0 >= 0:
            u0 = (w0 - x0) * h0
            u1 = (w1 - x1) * h1
            z0 = minv[0, 0] * u0 + minv[0, 1] * u1
            z1 = minv[1, 0] * u0 + minv[1, 1] * u1
            v = A[w0, w1] * (1.0 + math.sqrt(z0 * z0 + z1 * z1)) ** (-N)
            if v > best:
                best = v
            else:
                w0 = x0
                w1 = x1
        else:
            w0 = x0
            w1 = x1
        st_l[0] = levels - 1
        st_0[0] = 0
        st_1[0] = 0
        sp = 1
        while sp > 0:
            sp -= 1
            lv = st_l[sp]
            b0 = st_0[sp]
            b1 = st_1[sp]
            m = buf[offs[lv] + b0 * sh1[lv] + b1]
            if m <= best:
                continue
            if lv == 0:
                u0 = (b0 - x0) * h0
                u1 = (b1 - x1) * h1
                z0 = minv[0, 0] * u0 + minv[0, 1] * u1
                z1 = minv[1, 0] * u0 + minv[1, 1] * u1
                rho = math.sqrt(z0 * z0 + z1 * z1)
                v = m * (1.0 + rho) ** (-N)
                if v > best:
                    best = v
                    w0 = b0
                    w1 = b1
                continue
            size = 1 << lv
            lo0 = b0 * size
            hi0 = min(lo0 + size, n0) - 1
            lo1 = b1 * size
            hi1 = min(lo1 + size, n1) - 1
            g0 = 0 if lo0 <= x0 <= hi0 else (lo0 - x0 if x0 < lo0 else x0 - hi0)
            g1 = 0 if lo1 <= x1 <= hi1 else (lo1 - x1 if x1 < lo1 else x1 - hi1)
            dist = math.sqrt((g0 * h0) ** 2 + (g1 * h1) ** 2)
            bound = m * (1.0 + dist / sig * shrink) ** (-N)
            if bound <= best:
                continue
            # push children, nearest last so it is explored first
            nc = 0
            cl = lv - 1
            csize = size >> 1
            for c0 in range(2 * b0, min(2 * b0 + 2, sh0[cl])):
                for c1 in range(2 * b1, min(2 * b1 + 2, sh1[cl])):
                    l0 = c0 * csize
                    e0 = min(l0 + csize, n0) - 1
                    l1 = c1 * csize
                    e1 = min(l1 + csize, n1) - 1
                    q0 = 0 if l0 <= x0 <= e0 else (l0 - x0 if x0 < l0 else x0 - e0)
                    q1 = 0 if l1 <= x1 <= e1 else (l1 - x1 if x1 < l1 else x1 - e1)
                    c_l[nc] = cl
                    c_0[nc] = c0
                    c_1[nc] = c1
                    c_d[nc] = (q0 * h0) ** 2 + (q1 * h1) ** 2
                    nc += 1
            for i in range(1, nc):
                j = i
                while j > 0 and c_d[j - 1] < c_d[j]:
                    c_d[j - 1], c_d[j] = c_d[j], c_d[j - 1]
                    c_0[j - 1], c_0[j] = c_0[j], c_0[j - 1]
                    c_1[j - 1], c_1[j] = c_1[j], c_1[j - 1]
                    j -= 1
            for i in range(nc):
                st_l[sp] = c_l[i]
                st_0[sp] = c_0[i]
                st_1[sp] = c_1[i]
                sp += 1
        out[k] = best


# ---------------------------------------------------------------------- quadrature weights
def subdivisions(phi: TestFunction, m: np.ndarray, h: tuple[float, ...]) -> int:
    """Midpoint sub-cells per axis so the sub-spacing resolves the dilated kernel."""
    n = len(h)
    smin = float(np.linalg.svd(m, compute_uv=False)[-1])
    need = max(h) / (phi.quadrature_step * smin)
    return int(min(SUBDIV_CAP[n], max(1, math.ceil(need - 1e-9))))


def _sub_offsets(sub: int, hk: float) -> np.ndarray:
    return ((np.arange(sub) + 0.5) / sub - 0.5) * hk


def cell_masses(phi: TestFunction, m: np.ndarray, h: tuple[float, ...], r_cut: float, clip: tuple[int, ...]):
    """Masses ``W[d] = int_{cell d} phi_M`` on the offset box, truncated at ``|M^-1 u| > r_cut``.

    Returns ``W`` with shape ``(2 R_k + 1, ...)`` centred on offset 0.
    """
    n = len(h)
    minv = np.linalg.inv(m)
    detinv = abs(float(np.linalg.det(minv)))
    mmt = m @ m.T
    radii = [
        min(int(clip[k]), int(math.ceil(r_cut * math.sqrt(mmt[k, k]) / h[k] + 0.5))) for k in range(n)
    ]
    sub = subdivisions(phi, m, h)
    axes = [np.arange(-r, r + 1) * h[k] for k, r in enumerate(radii)]
    subs = [_sub_offsets(sub, h[k]) for k in range(n)]
    if n == 1:
        u = (axes[0][:, None] + subs[0][None, :])[..., None]
        z = u @ minv.T
        inside = np.abs(z[..., 0]) <= r_cut
        vals = np.where(inside, phi.evaluate(z), 0.0)
        return vals.sum(axis=1) * (detinv * h[0] / sub)
    w = np.zeros((len(axes[0]), len(axes[1])))
    g0, g1 = np.meshgrid(axes[0], axes[1], indexing="ij")
    for s0 in subs[0]:
        for s1 in subs[1]:
            u = np.stack([g0 + s0, g1 + s1], axis=-1)
            z = u @ minv.T
            inside = np.sum(z * z, axis=-1) <= r_cut * r_cut
            w += np.where(inside, phi.evaluate(z), 0.0)
    return w * (detinv * h[0] * h[1] / sub**2)


def separable(phi: TestFunction, m: np.ndarray) -> bool:
    return phi.family in ("gaussian", "hermite_gaussian") and m.shape[0] == 2 and m[0, 1] == 0.0 and m[1, 0] == 0.0


def _factor(phi: TestFunction) -> TestFunction:
    return TestFunction(phi.family, phi.coefficients, 1, 1.0, phi.scale)


def toeplitz_from(w: np.ndarray, n: int) -> np.ndarray:
    """``T[i, j] = w[i - j + R]`` (zero outside the stencil)."""
    R = (len(w) - 1) // 2
    col = np.zeros(n)
    row = np.zeros(n)
    k = min(R, n - 1)
    col[: k + 1] = w[R : R + k + 1]
    row[: k + 1] = w[R - k : R + 1][::-1]
    return scipy.linalg.toeplitz(col, row)


def convolve_stack(fs: np.ndarray, phi: TestFunction, m: np.ndarray, h: tuple[float, ...], r_cut: float) -> np.ndarray:
    """``sum_j f_j W_M[i - j]`` for a stack ``fs`` of embedded grids ``(k, n0, n1)``.

    ``m`` and ``h`` are in the grid's true dimension.
    """
    k, n0, n1 = fs.shape
    if len(h) == 1:
        w = cell_masses(phi, m, h, r_cut, (n1 - 1,))
        t1 = toeplitz_from(w, n1)
        return (fs.reshape(k, n1) @ t1.T).reshape(k, 1, n1)
    if separable(phi, m):
        f1 = _factor(phi)
        w0 = cell_masses(f1, m[:1, :1], h[:1], r_cut, (n0 - 1,))
        w1 = cell_masses(f1, m[1:, 1:], h[1:], r_cut, (n1 - 1,))
        t0 = toeplitz_from(w0, n0) * phi.amplitude
        t1 = toeplitz_from(w1, n1)
        return np.matmul(t0, fs @ t1.T)
    w = cell_masses(phi, m, h, r_cut, (n0 - 1, n1 - 1))
    return scipy.signal.fftconvolve(fs, w[None], mode="same", axes=(1, 2))


# ---------------------------------------------------------------------- Hardy-Littlewood stencil
def average_stencil(m: np.ndarray, h: tuple[float, ...], clip: tuple[int, ...]):
    """Fractional cell/ellipsoid overlaps ``w[d] = |theta ∩ cell d|`` and the normaliser.

    1-D overlaps are exact.  In 2-D the chord of the ellipse is exact along
    axis 1 and integrated by the midpoint rule along axis 0.
    """
    n = len(h)
    if n == 1:
        r = abs(float(m[0, 0]))
        R = min(int(clip[0]), int(math.ceil(r / h[0] + 0.5)))
        d = np.arange(-R, R + 1) * h[0]
        w = np.clip(np.minimum(r, d + h[0] / 2) - np.maximum(-r, d - h[0] / 2), 0.0, None)
        return w, 2.0 * r
    minv = np.linalg.inv(m)
    q = minv.T @ minv
    mmt = m @ m.T
    ext0 = math.sqrt(mmt[0, 0])
    ext1 = math.sqrt(mmt[1, 1])
    R0 = int(math.ceil(ext0 / h[0] + 0.5))
    R1 = int(math.ceil(ext1 / h[1] + 0.5))
    sub = int(min(256, max(8, math.ceil(64 * h[0] / ext0))))
    d0 = np.arange(-R0, R0 + 1)
    u0 = (d0[:, None] * h[0] + _sub_offsets(sub, h[0])[None, :]).ravel()
    disc = (q[0, 1] ** 2 - q[0, 0] * q[1, 1]) * u0 * u0 + q[1, 1]
    half = np.sqrt(np.clip(disc, 0.0, None)) / q[1, 1]
    center = -q[0, 1] * u0 / q[1, 1]
    a = (center - half)[:, None]
    b = (center + half)[:, None]
    d1 = np.arange(-R1, R1 + 1) * h[1]
    ov = np.clip(np.minimum(b, d1 + h[1] / 2) - np.maximum(a, d1 - h[1] / 2), 0.0, None)
    w = ov.reshape(len(d0), sub, len(d1)).sum(axis=1) * (h[0] / sub)
    total = float(w.sum())
    c0 = min(R0, int(clip[0]))
    c1 = min(R1, int(clip[1]))
    return w[R0 - c0 : R0 + c0 + 1, R1 - c1 : R1 + c1 + 1], total
