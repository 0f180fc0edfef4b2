"""Constructive Calderón-type decomposition on the Fourier side.

Given a kernel ``phi`` with nonzero mean and a target ``psi``, build a
sequence ``eta^k`` with ``psi = sum_k eta^k * phi~^k`` where ``phi~^k`` is
``phi`` dilated by ``M_k^{-1} M_{x,t}`` and ``M_k = M_{x, t + kJ}``.

Frequency convention: ``g^(xi) = int g(y) exp(-2 pi i <y, xi>) dy``.  With
``A_k = M_k^T (M_{x,t}^T)^{-1}`` the transform of ``phi~^k`` is ``phi^(A_k xi)``,
the cutoffs are ``zeta_k(xi) = zeta(A_k xi) - zeta(A_{k-1} xi)`` and
``eta^k^ = zeta_k psi^ / phi^(A_k .)``.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy import integrate

from .cover import AnisotropicCover, compute_J
from .errors import ConfigError, PreconditionError, SmallDivisorError
from .grid import GridFunction
from .kernels import (
    SeminormSpec,
    TestFunction,
    fourier,
    grid_seminorm,
    inverse_fourier,
    mass_normalized,
    multi_indices,
)
from .maximal import worker_count

DIVISOR_FLOOR = 0.25
NORMALIZATION_BOUND = 0.5
SWEEP_EXPONENTS = tuple(range(-48, 49))  # c' = 2^(j/8) covers [2^-6, 2^6]


# ---------------------------------------------------------------------- cutoff
def smooth_step(u) -> np.ndarray:
    """``S(u)``: 0 for ``u <= 0``, 1 for ``u >= 1``, C-infinity in between (``exp(-1/u)`` profile)."""
    u = np.asarray(u, dtype=float)
    a = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
    v = 1.0 - u
    b = np.where(v > 0, np.exp(-1.0 / np.where(v > 0, v, 1.0)), 0.0)
    return a / (a + b)


def zeta(xi) -> np.ndarray:
    """Radial cutoff ``S(2 - |xi|)``: 1 on the unit ball, 0 outside the ball of radius 2."""
    xi = np.asarray(xi, dtype=float)
    return smooth_step(2.0 - np.linalg.norm(xi, axis=-1))


# ---------------------------------------------------------------------- plan
@dataclass
class DecompositionPlan:
    """Inputs of one decomposition run.

    ``grid_lo``/``grid_hi``/``grid_h`` describe the space grid (power-of-two
    nodes per axis); the frequency grid is its discrete dual.
    """

    base_point: tuple[float, ...]
    base_level: float
    K_max: int
    phi: TestFunction
    psi: TestFunction
    cover: AnisotropicCover
    grid_lo: tuple[float, ...]
    grid_hi: tuple[float, ...]
    grid_h: float
    J: int | None = None
    spec: SeminormSpec = field(default_factory=lambda: SeminormSpec(2, 4))
    normalize: bool = True
    workers: int | None = None

    def __post_init__(self):
        n = self.cover.dimension
        self.base_point = tuple(float(v) for v in np.atleast_1d(self.base_point))
        self.grid_lo = tuple(float(v) for v in np.atleast_1d(self.grid_lo))
        self.grid_hi = tuple(float(v) for v in np.atleast_1d(self.grid_hi))
        if len(self.base_point) != n or len(self.grid_lo) != n or len(self.grid_hi) != n:
            raise ConfigError("plan: base point and grid box must match the cover dimension")
        if self.phi.dimension != n or self.psi.dimension != n:
            raise ConfigError("plan: kernel dimensions must match the cover dimension")
        if self.K_max < 0:
            raise ConfigError("plan: K_max must be >= 0")
        if self.grid_h <= 0:
            raise ConfigError("plan: grid_h must be positive")
        for lo, hi in zip(self.grid_lo, self.grid_hi):
            cells = (hi - lo) / self.grid_h
            m = int(round(cells))
            if abs(cells - m) > 1e-9 * max(1.0, cells) or m < 2 or m & (m - 1):
                raise ConfigError(f"plan: box width / grid_h must be a power of two, got {cells}")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(round((hi - lo) / self.grid_h)) for lo, hi in zip(self.grid_lo, self.grid_hi))

    def space_grid(self) -> GridFunction:
        return GridFunction.zeros(self.grid_lo, self.grid_hi, self.shape)

    def frequency_grid(self) -> GridFunction:
        return fourier(self.space_grid())

    def dilation_step(self) -> int:
        if self.J is not None:
            return int(self.J)
        if self.cover.constants is not None:
            return int(self.cover.constants.J)
        t = self.base_level
        return compute_J(self.cover, (self.grid_lo, self.grid_hi), (t - 2.0, t + 2.0))

    def level_matrices(self) -> list[np.ndarray]:
        """``A_k = M_k^T (M_{x,t}^T)^{-1}`` for ``k = 0..K_max``."""
        J = self.dilation_step()
        x = np.asarray(self.base_point)
        base_inv_T = np.linalg.inv(self.cover.matrix(x, self.base_level).T)
        return [self.cover.matrix(x, self.base_level + k * J).T @ base_inv_T for k in range(self.K_max + 1)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "base_point": list(self.base_point),
            "base_level": self.base_level,
            "K_max": self.K_max,
            "phi": self.phi.to_dict(),
            "psi": self.psi.to_dict(),
            "cover": self.cover.to_dict(),
            "grid": {"lo": list(self.grid_lo), "hi": list(self.grid_hi), "h": self.grid_h},
            "J": self.J,
            "seminorm": {"N": self.spec.N, "Ntilde": self.spec.Ntilde},
            "normalize": self.normalize,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "DecompositionPlan":
        try:
            grid = doc["grid"]
            sn = doc.get("seminorm", {})
            return cls(
                base_point=tuple(doc.get("base_point", [0.0])),
                base_level=float(doc.get("base_level", 0.0)),
                K_max=int(doc.get("K_max", 16)),
                phi=TestFunction.from_dict(doc["phi"]),
                psi=TestFunction.from_dict(doc["psi"]),
                cover=AnisotropicCover.from_dict(doc["cover"]),
                grid_lo=tuple(grid["lo"]),
                grid_hi=tuple(grid["hi"]),
                grid_h=float(grid["h"]),
                J=doc.get("J"),
                spec=SeminormSpec(int(sn.get("N", 2)), int(sn.get("Ntilde", 4))),
                normalize=bool(doc.get("normalize", True)),
            )
        except KeyError as exc:
            raise ConfigError(f"plan document: missing field {exc.args[0]!r}") from None


# ---------------------------------------------------------------------- normalization
def _ball_samples(n: int, radius: float, count: int = 513) -> np.ndarray:
    r = np.linspace(0.0, radius, count)
    if n == 1:
        return np.concatenate([-r[::-1], r])[:, None]
    ang = np.linspace(0.0, 2 * np.pi, 64, endpoint=False)
    rr, aa = np.meshgrid(r[::4], ang, indexing="ij")
    return np.stack([rr * np.cos(aa), rr * np.sin(aa)], axis=-1).reshape(-1, 2)


def normalization_margin(phi: TestFunction, radius: float) -> float:
    """``min |phi^|`` over a sample of the ball of the given radius."""
    return float(np.min(np.abs(phi.fourier_at(_ball_samples(phi.dimension, radius)))))


def normalize_phi(phi: TestFunction, a5: float) -> tuple[TestFunction, float]:
    """Smallest ``c'`` on the ``2^(j/8)`` sweep such that the unit-mass ``phi(c' .)`` has
    ``|phi^| >= 1/2`` on the ball of radius ``2 a5``.

    Returns the normalized kernel and ``c'``; raises :class:`SmallDivisorError`
    when no sweep value works.
    """
    if phi.mass() == 0:
        raise PreconditionError("phi has zero mean")
    worst = None
    for j in SWEEP_EXPONENTS:
        c = 2.0 ** (j / 8)
        cand = mass_normalized(phi.dilated(c))
        margin = normalization_margin(cand, 2.0 * a5)
        if margin >= NORMALIZATION_BOUND:
            return cand, c
        if worst is None or margin > worst[0]:
            worst = (margin, c)
    raise SmallDivisorError(
        f"no dilation in [2^-6, 2^6] gives |phi^| >= 1/2 on the ball of radius {2 * a5}", witness=worst
    )


# ---------------------------------------------------------------------- partition
def _apply(A: np.ndarray, xi: np.ndarray) -> np.ndarray:
    return xi @ A.T


def build_zeta_partition(plan: DecompositionPlan, xi: np.ndarray | None = None) -> list[np.ndarray]:
    """``zeta_0 = zeta``, ``zeta_k = zeta(A_k xi) - zeta(A_{k-1} xi)`` on the frequency grid (or ``xi``)."""
    if xi is None:
        xi = plan.frequency_grid().points()
    A = plan.level_matrices()
    prev = zeta(_apply(A[0], xi))
    out = [prev]
    for k in range(1, len(A)):
        cur = zeta(_apply(A[k], xi))
        out.append(cur - prev)
        prev = cur
    return out


# ---------------------------------------------------------------------- eta
@dataclass
class EtaSequence:
    plan: DecompositionPlan
    phi: TestFunction
    dilation: float
    levels: list[np.ndarray]
    zetas: list[np.ndarray]
    hats: list[GridFunction]
    terms: list[GridFunction]
    seminorms: list[float]
    min_divisor: list[float]

    def __len__(self) -> int:
        return len(self.terms)


def _eta_term(k, A, zk, psi_hat, xi, phi, G0):
    mask = zk != 0
    hat = np.zeros(zk.shape, dtype=complex)
    min_div = math.inf
    if np.any(mask):
        div = phi.fourier_at(_apply(A, xi[mask]))
        mag = np.abs(div)
        i = int(np.argmin(mag))
        min_div = float(mag[i])
        if min_div < DIVISOR_FLOOR:
            raise SmallDivisorError(
                f"|phi^(A_{k} xi)| = {min_div:.3g} < {DIVISOR_FLOOR} where zeta_{k} != 0",
                witness={"k": k, "xi": xi[mask][i].tolist(), "divisor": min_div},
            )
        hat[mask] = zk[mask] * psi_hat[mask] / div
    H = G0.with_values(hat)
    return H, inverse_fourier(H), min_div


def build_eta(plan: DecompositionPlan) -> EtaSequence:
    """Frequency-side terms ``eta^k^``, their space-grid inverses and ``S_{N,Ntilde}`` seminorms."""
    a5 = plan.cover.constants.a5 if plan.cover.constants is not None else 1.0
    if plan.normalize:
        phi, c = normalize_phi(plan.phi, a5)
    else:
        phi, c = plan.phi, 1.0
    G0 = plan.frequency_grid()
    xi = G0.points()
    levels = plan.level_matrices()
    zetas = build_zeta_partition(plan, xi)
    psi_hat = plan.psi.fourier_at(xi)

    def job(k):
        H, eta, md = _eta_term(k, levels[k], zetas[k], psi_hat, xi, phi, G0)
        return H, eta, md, grid_seminorm(H, plan.spec)

    with ThreadPoolExecutor(max_workers=worker_count(plan.workers)) as ex:
        res = list(ex.map(job, range(len(levels))))
    return EtaSequence(
        plan=plan,
        phi=phi,
        dilation=c,
        levels=levels,
        zetas=zetas,
        hats=[r[0] for r in res],
        terms=[r[1] for r in res],
        seminorms=[r[3] for r in res],
        min_divisor=[r[2] for r in res],
    )


# ---------------------------------------------------------------------- reconstruction
@dataclass
class ReconstructionReport:
    K: int
    sup_error: float
    relative_sup_error: float
    seminorm_error: float
    psi_sup: float
    errors_by_K: list[float]

    def to_dict(self) -> dict[str, Any]:
        return {
            "K": self.K,
            "sup_error": self.sup_error,
            "relative_sup_error": self.relative_sup_error,
            "seminorm_error": self.seminorm_error,
            "psi_sup": self.psi_sup,
            "errors_by_K": list(self.errors_by_K),
        }


def reconstruct(plan: DecompositionPlan, eta: EtaSequence, K: int | None = None) -> tuple[GridFunction, ReconstructionReport]:
    """Partial sum ``sum_{k <= K} eta^k * phi~^k`` on the space grid, with its error against ``psi``.

    Each convolution is a pointwise product on the frequency grid: the space
    term ``eta^k`` is transformed back and multiplied by ``phi^(A_k xi)``.
    """
    K = len(eta) - 1 if K is None else int(K)
    if not 0 <= K < len(eta):
        raise PreconditionError(f"K = {K} outside 0..{len(eta) - 1}")
    G0 = plan.frequency_grid()
    xi = G0.points()
    psi_grid = plan.space_grid()
    psi_vals = plan.psi(psi_grid.points())
    psi_sup = float(np.max(np.abs(psi_vals)))
    acc = np.zeros(G0.shape, dtype=complex)
    errors = []
    partial = None
    for k in range(K + 1):
        acc = acc + fourier(eta.terms[k]).values * eta.phi.fourier_at(_apply(eta.levels[k], xi))
        partial = inverse_fourier(G0.with_values(acc))
        errors.append(float(np.max(np.abs(partial.values - psi_vals))))
    diff = G0.with_values(acc - plan.psi.fourier_at(xi))
    rep = ReconstructionReport(
        K=K,
        sup_error=errors[-1],
        relative_sup_error=errors[-1] / psi_sup if psi_sup else math.inf,
        seminorm_error=grid_seminorm(diff, plan.spec),
        psi_sup=psi_sup,
        errors_by_K=errors,
    )
    out = partial if np.isrealobj(partial.values) else partial.with_values(partial.values.real)
    return out, rep


def frequency_identity_error(plan: DecompositionPlan, eta: EtaSequence, K: int | None = None) -> float:
    """``max |psi^ zeta(A_K xi) - sum_{k<=K} eta^k^ phi^(A_k xi)|`` relative to ``max |psi^|``."""
    K = len(eta) - 1 if K is None else int(K)
    xi = plan.frequency_grid().points()
    psi_hat = plan.psi.fourier_at(xi)
    lhs = psi_hat * zeta(_apply(eta.levels[K], xi))
    rhs = sum(eta.hats[k].values * eta.phi.fourier_at(_apply(eta.levels[k], xi)) for k in range(K + 1))
    return float(np.max(np.abs(lhs - rhs)) / max(float(np.max(np.abs(psi_hat))), 1e-300))


def telescoping_error(plan: DecompositionPlan, K: int | None = None) -> float:
    """Relative sup distance between ``sum_{k<=K} zeta_k`` and ``zeta(A_K xi)`` on the frequency grid."""
    xi = plan.frequency_grid().points()
    zs = build_zeta_partition(plan, xi)
    K = len(zs) - 1 if K is None else int(K)
    total = np.sum(zs[: K + 1], axis=0)
    target = zeta(_apply(plan.level_matrices()[K], xi))
    return float(np.max(np.abs(total - target)) / max(float(np.max(np.abs(target))), 1e-300))


# ---------------------------------------------------------------------- decay
@dataclass
class DecayTable:
    k: list[int]
    seminorm: list[float]
    log2_ratio: list[float]
    slope: float
    fit_range: tuple[int, int]
    flags: list[str]

    def rows(self) -> list[tuple[int, float, float]]:
        return list(zip(self.k, self.seminorm, self.log2_ratio))

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "seminorm", "log2_ratio"])
            for row in self.rows():
                w.writerow([row[0], repr(row[1]), repr(row[2])])


def _log2(v: float) -> float:
    return math.log2(v) if v > 0 else -math.inf


def seminorm_decay_table(
    eta: EtaSequence, spec: SeminormSpec | None = None, fit_range: tuple[int, int] | None = None
) -> DecayTable:
    """Per-k seminorms of ``eta^k`` and the least-squares slope of ``log2`` seminorm vs ``k``.

    Terms that vanish identically on the grid (their cutoff annulus lies beyond
    the Nyquist frequency) have seminorm 0; when every term in the fit range
    vanishes the slope is ``-inf`` and the ``vanishing_terms`` flag is set.
    """
    if spec is None or spec == eta.plan.spec:
        sn = list(eta.seminorms)
    else:
        sn = [grid_seminorm(H, spec) for H in eta.hats]
    ks = list(range(len(sn)))
    ratios = [math.nan] + [_log2(sn[k]) - _log2(sn[k - 1]) if sn[k - 1] > 0 else math.nan for k in ks[1:]]
    lo, hi = fit_range if fit_range is not None else (0, len(sn) - 1)
    hi = min(hi, len(sn) - 1)
    sel = [k for k in range(lo, hi + 1) if sn[k] > 0]
    flags = []
    if len(sel) < hi - lo + 1:
        flags.append("vanishing_terms")
    if hi <= lo:
        slope = math.nan
    elif flags:
        slope = -math.inf
    else:
        slope = float(np.polyfit(sel, [math.log2(sn[k]) for k in sel], 1)[0])
    return DecayTable(k=ks, seminorm=sn, log2_ratio=ratios, slope=slope, fit_range=(lo, hi), flags=flags)


def eta0_quadrature_seminorm(plan: DecompositionPlan, eta: EtaSequence, spec: SeminormSpec | None = None) -> float:
    """Seminorm of ``eta^0`` evaluated by direct quadrature of the inverse transform (1-D only).

    ``d^a eta^0(y) = int (2 pi i xi)^a zeta(A_0 xi) psi^(xi) / phi^(A_0 xi) exp(2 pi i y xi) dxi``,
    integrated over the support of ``zeta(A_0 .)`` and evaluated on the space grid.
    """
    if plan.cover.dimension != 1:
        raise PreconditionError("direct quadrature cross-check is one-dimensional")
    spec = spec or plan.spec
    A = float(eta.levels[0][0, 0])
    R = 2.0 / abs(A)
    y = plan.space_grid().axis(0)
    phi, psi = eta.phi, plan.psi

    def base(x):
        xs = np.atleast_1d(x)
        return zeta((A * xs)[:, None]) * psi.fourier_at(xs[:, None]) / phi.fourier_at((A * xs)[:, None])

    nodes, weights = np.polynomial.legendre.leggauss(400)
    best = 0.0
    edges = np.linspace(-R, R, 9)
    xq = np.concatenate([0.5 * (b - a) * nodes + 0.5 * (a + b) for a, b in zip(edges[:-1], edges[1:])])
    wq = np.concatenate([0.5 * (b - a) * weights for a, b in zip(edges[:-1], edges[1:])])
    bq = base(xq)
    phase = np.exp(2j * np.pi * np.outer(y, xq))
    wt = (1.0 + np.abs(y)) ** spec.Ntilde
    for (a,) in multi_indices(1, spec.N):
        d = phase @ (wq * bq * (2j * np.pi * xq) ** a)
        best = max(best, float(np.max(wt * np.abs(d))))
    return best


def quad_check_point(plan: DecompositionPlan, eta: EtaSequence, y: float, order: int = 0) -> complex:
    """Adaptive-quadrature value of ``d^order eta^0(y)`` (1-D), for spot checks."""
    A = float(eta.levels[0][0, 0])
    R = 2.0 / abs(A)

    def f(x, part):
        z = (
            zeta(np.array([[A * x]]))[0]
            * plan.psi.fourier_at(np.array([[x]]))[0]
            / eta.phi.fourier_at(np.array([[A * x]]))[0]
            * (2j * np.pi * x) ** order
            * np.exp(2j * np.pi * y * x)
        )
        return z.real if part == 0 else z.imag

    re = integrate.quad(f, -R, R, args=(0,), limit=400, epsabs=1e-13)[0]
    im = integrate.quad(f, -R, R, args=(1,), limit=400, epsabs=1e-13)[0]
    return complex(re, im)


def uniformity_spot_check(plan: DecompositionPlan, base_points: Sequence[Sequence[float]], K: int | None = None) -> list[dict[str, Any]]:
    """Reconstruction error and largest seminorm at several base points (same level and J)."""
    rows = []
    for x in base_points:
        p = DecompositionPlan(
            base_point=tuple(np.atleast_1d(x)),
            base_level=plan.base_level,
            K_max=plan.K_max,
            phi=plan.phi,
            psi=plan.psi,
            cover=plan.cover,
            grid_lo=plan.grid_lo,
            grid_hi=plan.grid_hi,
            grid_h=plan.grid_h,
            J=plan.dilation_step(),
            spec=plan.spec,
            normalize=plan.normalize,
            workers=plan.workers,
        )
        eta = build_eta(p)
        _, rep = reconstruct(p, eta, K)
        rows.append(
            {
                "base_point": list(p.base_point),
                "relative_sup_error": rep.relative_sup_error,
                "max_seminorm": max(eta.seminorms),
            }
        )
    return rows
