"""Maximal operators on grid-sampled functions.

Discretisation
--------------
``f`` is piecewise constant on grid cells, so

    (f * phi_{x,t})(y_i) = sum_j f_j W_M[i - j],   W_M[d] = int_{cell d} phi_M,

with ``M = M_{x,t}`` and ``phi_M(u) = |det M^-1| phi(M^-1 u)``.  Cell masses
use a midpoint sub-grid fine enough to resolve the dilated kernel, and the
kernel is cut where ``|M^-1 u| > r_cut``.  Sups over ``t`` run over the
uniform grid ``t_min + k * t_step``; sups over ``y`` run over grid nodes, and
``y = x`` is always admissible.

All grid points sharing the same matrices form one group that shares a single
convolution, so translation-invariant covers cost one convolution per level.
Levels are independent and may run on several threads; the per-level results
are folded in level order, so the output never depends on the worker count.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Any, Callable, Iterable, Sequence

import numpy as np
import scipy.signal

from . import _engine as eng
from .cover import AnisotropicCover, CoverParams, compute_J, radius_sq
from .errors import ConfigError, DimensionMismatchError, PreconditionError
from .grid import GridFunction
from .kernels import SeminormSpec, TestFunction, normalized

BASIC_KINDS = ("radial", "nontangential", "tangential")
TAIL_TOL = 1e-8
BOUNDARY_TOL = 1e-6


def worker_count(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("ANISO_MAXIMAL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"ANISO_MAXIMAL_THREADS must be an integer, got {env!r}") from None
    return 1


@dataclass(frozen=True)
class MaximalConfig:
    t_min: float = -6.0
    t_max: float = 8.0
    t_step: float = 0.1
    N: int = 2
    Ntilde: int = 4
    L: float = 0.0
    t0: float = -1.0
    aperture_l: int = 0
    p: float = 1.0
    q: float = 0.5
    Np: int | None = None
    Ntilde_p: int | None = None
    J: int | None = None
    r_cut: float | None = None
    workers: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (self.t_min <= self.t_max):
            raise ConfigError(f"t_min={self.t_min} exceeds t_max={self.t_max}")
        if not (self.t_step > 0):
            raise ConfigError(f"t_step must be positive, got {self.t_step}")
        if self.N < 0 or self.N > self.Ntilde:
            raise ConfigError(f"need 0 <= N <= Ntilde, got N={self.N}, Ntilde={self.Ntilde}")
        if self.L < 0:
            raise ConfigError(f"L must be >= 0, got {self.L}")
        if not (self.t0 < 0):
            raise ConfigError(f"t0 must be negative, got {self.t0}")
        if self.aperture_l < 0:
            raise ConfigError("aperture_l must be >= 0")
        if not (self.p > 0):
            raise ConfigError(f"p must be positive, got {self.p}")
        if self.J is not None and self.J < 1:
            raise ConfigError("J must be >= 1")

    @classmethod
    def default(cls, dimension: int, **overrides) -> "MaximalConfig":
        base = {1: dict(t_min=-6.0, t_max=8.0), 2: dict(t_min=-2.0, t_max=5.0)}[dimension]
        base.update(overrides)
        return cls(**base)

    def t_levels(self) -> np.ndarray:
        count = int(math.floor((self.t_max - self.t_min) / self.t_step + 1e-9)) + 1
        return self.t_min + np.arange(count) * self.t_step

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d.pop("workers")
        return d

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "MaximalConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"maximal config: unknown fields {sorted(unknown)}")
        return cls(**doc)


def hardy_orders(params: CoverParams, dimension: int, p: float) -> tuple[int, int]:
    """Smallest integers ``N_p > (max(1, a4) n + 1) / (a6 p)`` and ``Ntilde_p > (a4 N_p + 1) / a6``."""
    np_ = math.floor((max(1.0, params.a4) * dimension + 1) / (params.a6 * p) + 1e-12) + 1
    ntp = math.floor((params.a4 * np_ + 1) / params.a6 + 1e-12) + 1
    return int(np_), int(ntp)


@dataclass
class MaximalField:
    kind: str
    values: GridFunction
    config: MaximalConfig
    cover: AnisotropicCover | None = None
    kernel: Any = None
    flags: list[str] = field(default_factory=list)
    witness_t: np.ndarray | None = None

    def lp_norm(self, p: float, mask: np.ndarray | None = None) -> float:
        return self.values.lp_norm(p, mask)

    def sidecar(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind, "config": self.config.to_dict(), "flags": sorted(set(self.flags))}
        if self.witness_t is not None and self.witness_t.size:
            wt = self.witness_t[np.isfinite(self.witness_t)]
            ts, counts = np.unique(np.round(wt, 10), return_counts=True)
            out["witnesses_summary"] = {
                "t_min_attained": float(wt.min()) if wt.size else None,
                "t_max_attained": float(wt.max()) if wt.size else None,
                "histogram": [[float(t), int(c)] for t, c in zip(ts, counts)],
            }
        else:
            out["witnesses_summary"] = {}
        if isinstance(self.kernel, TestFunction):
            out["kernel"] = self.kernel.to_dict()
        elif isinstance(self.kernel, (list, tuple)):
            out["kernel"] = [k.to_dict() for k in self.kernel]
        return out


# ---------------------------------------------------------------------- the sweep
FieldBuilder = Callable[[np.ndarray, np.ndarray, np.ndarray, float], np.ndarray]


def decay_weights(points: np.ndarray, minv_t0: np.ndarray, L: float) -> np.ndarray:
    """``(1 + |M_{x,t0}^-1 y|)^-L`` at absolute node coordinates ``y``."""
    return (1.0 + np.sqrt(radius_sq(minv_t0, points))) ** (-L)


@dataclass
class _Setup:
    grids: list[GridFunction]
    stack: np.ndarray
    pts: np.ndarray
    p0: np.ndarray
    p1: np.ndarray
    h: tuple[float, ...]
    he: tuple[float, float]
    levels: np.ndarray


def _setup(fs: Sequence[GridFunction], cover: AnisotropicCover, phi: TestFunction | None, config, t_from=None):
    fs = list(fs)
    if not fs:
        raise PreconditionError("no input grids")
    g = fs[0]
    for other in fs[1:]:
        if other.lo != g.lo or other.hi != g.hi or other.shape != g.shape:
            raise DimensionMismatchError("all stacked grids must share one box and shape")
    n = g.ndim
    if cover.dimension != n:
        raise DimensionMismatchError(f"cover is {cover.dimension}-D but the grid is {n}-D")
    if phi is not None and phi.dimension != n:
        raise DimensionMismatchError(f"kernel is {phi.dimension}-D but the grid is {n}-D")
    stack = np.stack([eng.embed_values(np.asarray(f.values, dtype=float)) for f in fs])
    n0, n1 = stack.shape[1:]
    i0, i1 = np.meshgrid(np.arange(n0), np.arange(n1), indexing="ij")
    levels = config.t_levels()
    if t_from is not None:
        levels = levels[levels >= t_from - 1e-12]
        if levels.size == 0:
            raise PreconditionError(f"no t-level at or above t0={t_from} within [t_min, t_max]")
    return _Setup(
        grids=fs,
        stack=stack,
        pts=g.points().reshape(-1, n),
        p0=i0.ravel().astype(np.int64),
        p1=i1.ravel().astype(np.int64),
        h=g.spacing,
        he=eng.embed_spacing(g.spacing),
        levels=levels,
    )


def _resolve_J(cover: AnisotropicCover, config: MaximalConfig, grid: GridFunction) -> int:
    if config.J is not None:
        return int(config.J)
    if cover.constants is not None:
        return int(cover.constants.J)
    return compute_J(cover, (grid.lo, grid.hi), (config.t_min, config.t_max))


def _sweep(
    fs: Sequence[GridFunction],
    phi: TestFunction,
    cover: AnisotropicCover,
    config: MaximalConfig,
    kinds: Iterable[str],
    *,
    truncated: bool = False,
    aperture: int = 0,
    include_center: bool = True,
    field_builder: FieldBuilder | None = None,
    N: int | None = None,
):
    """Shared level loop.  Returns ``{kind: (values (k, P), witness level index (k, P))}``, flags."""
    kinds = tuple(kinds)
    for k in kinds:
        if k not in BASIC_KINDS:
            raise ConfigError(f"unknown kind {k!r}")
    s = _setup(fs, cover, phi, config, t_from=config.t0 if truncated else None)
    n = cover.dimension
    N = config.N if N is None else N
    L = float(config.L) if truncated else 0.0
    r_cut = config.r_cut if config.r_cut is not None else phi.support_radius
    J = _resolve_J(cover, config, s.grids[0]) if aperture else 0
    n0, n1 = s.stack.shape[1:]
    clip = (n1 - 1,) if n == 1 else (n0 - 1, n1 - 1)
    flags: set[str] = set()
    if phi.tail_mass(r_cut) > TAIL_TOL:
        flags.add("convolution_tail")

    use_weights = truncated and (L > 0 or field_builder is not None)
    m_t0 = cover.matrices(s.pts, config.t0) if use_weights else None
    weight_cache: dict[bytes, np.ndarray] = {}
    edge = np.minimum.reduce(
        [np.minimum(s.p0, n0 - 1 - s.p0) * s.he[0] if n == 2 else np.full(s.p0.shape, np.inf),
         np.minimum(s.p1, n1 - 1 - s.p1) * s.he[1]]
    )
    boundary = np.zeros((n0, n1), dtype=bool)
    boundary[:, [0, -1]] = True
    if n == 2:
        boundary[[0, -1], :] = True

    def level(ti: int):
        t = float(s.levels[ti])
        mt = cover.matrices(s.pts, t)
        keys = [mt.reshape(len(s.pts), -1)]
        if use_weights:
            keys.append(m_t0.reshape(len(s.pts), -1))
        m_ap = None
        if aperture:
            m_ap = cover.matrices(s.pts, t - aperture * J)
            keys.append(m_ap.reshape(len(s.pts), -1))
        key = np.concatenate(keys, axis=1)
        _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
        inverse = inverse.ravel()
        order = np.argsort(inverse, kind="stable")
        bounds = np.searchsorted(inverse[order], np.arange(len(first) + 1))
        tf = (1.0 + 2.0 ** (t + config.t0)) ** (-L) if truncated and L > 0 else 1.0
        out = {k: np.empty((len(s.grids), len(s.pts))) for k in kinds}
        lflags: set[str] = set()
        for gi, rep in enumerate(first):
            idx = order[bounds[gi] : bounds[gi + 1]]
            m = mt[rep]
            conv = eng.convolve_stack(s.stack, phi, m, s.h, r_cut)
            A = np.abs(conv)
            if use_weights:
                wkey = m_t0[rep].tobytes()
                if field_builder is not None:
                    A = np.stack(
                        [
                            eng.embed_values(
                                np.asarray(
                                    field_builder(a.reshape(s.grids[0].shape), s.grids[0].points(), np.linalg.inv(m_t0[rep]), t),
                                    dtype=float,
                                )
                            )
                            for a in A
                        ]
                    )
                else:
                    if wkey not in weight_cache:
                        weight_cache[wkey] = decay_weights(s.pts, np.linalg.inv(m_t0[rep]), L).reshape(n0, n1)
                    A = A * weight_cache[wkey]
            gp0 = s.p0[idx]
            gp1 = s.p1[idx]
            if "radial" in kinds:
                out["radial"][:, idx] = A[:, gp0, gp1] * tf
            if "nontangential" in kinds:
                me = m_ap[rep] if m_ap is not None else m
                minv = eng.embed_matrix(np.linalg.inv(me))
                mmt = me @ me.T
                r = [min(c, int(math.ceil(math.sqrt(mmt[k, k]) / s.h[k])) + 1) for k, c in enumerate(clip)]
                r0, r1 = (0, r[0]) if n == 1 else (r[0], r[1])
                d0s, lo, hi = eng.ellipse_runs(minv, s.he[0], s.he[1], r0, r1)
                buf = np.empty(len(idx))
                for fi in range(len(s.grids)):
                    eng.windowed_max(A[fi], gp0, gp1, d0s, lo, hi, include_center, buf)
                    out["nontangential"][fi, idx] = buf * tf
            if "tangential" in kinds:
                minv = eng.embed_matrix(np.linalg.inv(m))
                sig = float(np.linalg.svd(m, compute_uv=False)[0])
                buf = np.empty(len(idx))
                for fi in range(len(s.grids)):
                    a = np.ascontiguousarray(A[fi])
                    pyr = eng.build_pyramid(a)
                    eng.tangential_max(a, *pyr, gp0, gp1, minv, s.he[0], s.he[1], sig, int(N), buf)
                    vals = buf * tf
                    out["tangential"][fi, idx] = vals
                    bmax = float(a[boundary].max()) * tf
                    tail = bmax * (1.0 + edge[idx] / sig) ** (-N)
                    if np.any(tail > BOUNDARY_TOL * np.maximum(vals, 1e-300)) and bmax > 0:
                        lflags.add("tangential_boundary_tail")
        return out, lflags

    best: dict[str, np.ndarray] = {}
    wit: dict[str, np.ndarray] = {}
    workers = worker_count(config.workers)
    with ThreadPoolExecutor(max_workers=workers) as ex:
        results = ex.map(level, range(len(s.levels))) if workers > 1 else map(level, range(len(s.levels)))
        for ti, (vals, lflags) in enumerate(results):
            flags |= lflags
            for k, v in vals.items():
                if k not in best:
                    best[k] = v.copy()
                    wit[k] = np.zeros(v.shape, dtype=np.int64)
                else:
                    better = v > best[k]
                    best[k][better] = v[better]
                    wit[k][better] = ti
    return best, wit, s, sorted(flags)


def _to_fields(best, wit, s: _Setup, kind_names: dict[str, str], config, cover, kernel, flags) -> list[dict[str, MaximalField]]:
    out = []
    shape = s.grids[0].shape
    for fi, g in enumerate(s.grids):
        d = {}
        for k, name in kind_names.items():
            d[name] = MaximalField(
                kind=name,
                values=g.with_values(best[k][fi].reshape(shape)),
                config=config,
                cover=cover,
                kernel=kernel,
                flags=list(flags),
                witness_t=s.levels[wit[k][fi]].reshape(shape),
            )
        out.append(d)
    return out


def maximal_fields_batch(
    fs: Sequence[GridFunction],
    phi: TestFunction,
    cover: AnisotropicCover,
    config: MaximalConfig,
    kinds: Iterable[str] = BASIC_KINDS,
    truncated: bool = False,
    include_center: bool = True,
) -> list[dict[str, MaximalField]]:
    """Radial / non-tangential / tangential fields of several grids sharing one box, in one sweep.

    ``include_center=False`` drops ``y = x`` from the non-tangential set; it exists
    only so the verification harness can check that it detects a broken engine.
    """
    kinds = tuple(kinds)
    best, wit, s, flags = _sweep(fs, phi, cover, config, kinds, truncated=truncated, include_center=include_center)
    prefix = "truncated_" if truncated else ""
    return _to_fields(best, wit, s, {k: prefix + k for k in kinds}, config, cover, phi, flags)


def maximal_fields(f, phi, cover, config, kinds=BASIC_KINDS, truncated=False) -> dict[str, MaximalField]:
    return maximal_fields_batch([f], phi, cover, config, kinds, truncated)[0]


# ---------------------------------------------------------------------- public operators
def convolve_at(f: GridFunction, phi: TestFunction, cover: AnisotropicCover, x, t: float, y, r_cut: float | None = None) -> float:
    """``(f * phi_{x,t})(y)`` at an arbitrary point ``y`` by the cell-mass quadrature."""
    n = f.ndim
    if cover.dimension != n or phi.dimension != n:
        raise DimensionMismatchError("grid, cover and kernel dimensions differ")
    r_cut = phi.support_radius if r_cut is None else r_cut
    m = cover.matrix(x, t)
    minv = np.linalg.inv(m)
    detinv = abs(float(np.linalg.det(minv)))
    h = f.spacing
    sub = eng.subdivisions(phi, m, h)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    nodes = f.points().reshape(-1, n)
    vals = np.asarray(f.values, dtype=float).reshape(-1)
    offs = np.stack(np.meshgrid(*[eng._sub_offsets(sub, hk) for hk in h], indexing="ij"), axis=-1).reshape(-1, n)
    total = 0.0
    keep = np.flatnonzero(vals)
    for chunk in np.array_split(keep, max(1, len(keep) // 4096)):
        if chunk.size == 0:
            continue
        u = (y - nodes[chunk])[:, None, :] + offs[None, :, :]
        z = u @ minv.T
        inside = np.sum(z * z, axis=-1) <= r_cut * r_cut
        k = np.where(inside, phi.evaluate(z), 0.0).sum(axis=1) * (detinv * f.cell_volume / sub**n)
        total += float(vals[chunk] @ k)
    if phi.tail_mass(r_cut) > TAIL_TOL:
        warnings.warn("convolution tail above 1e-8 of ||f||_inf", RuntimeWarning, stacklevel=2)
    return total


def radial_maximal(f, phi, cover, config) -> MaximalField:
    return maximal_fields(f, phi, cover, config, ("radial",))["radial"]


def nontangential_maximal(f, phi, cover, config) -> MaximalField:
    return maximal_fields(f, phi, cover, config, ("nontangential",))["nontangential"]


def tangential_maximal(f, phi, cover, config) -> MaximalField:
    return maximal_fields(f, phi, cover, config, ("tangential",))["tangential"]


def truncated_radial(f, phi, cover, config) -> MaximalField:
    return maximal_fields(f, phi, cover, config, ("radial",), truncated=True)["truncated_radial"]


def truncated_nontangential(f, phi, cover, config) -> MaximalField:
    return maximal_fields(f, phi, cover, config, ("nontangential",), truncated=True)["truncated_nontangential"]


def truncated_tangential(f, phi, cover, config) -> MaximalField:
    return maximal_fields(f, phi, cover, config, ("tangential",), truncated=True)["truncated_tangential"]


def aperture_maximal_batch(
    fs: Sequence[GridFunction],
    phi: TestFunction,
    cover: AnisotropicCover,
    config: MaximalConfig,
    l: int | None = None,
    field_builder: FieldBuilder | None = None,
) -> list[MaximalField]:
    """``F_l^{*t0}(x) = sup_{t >= t0} sup_{y in theta(x, t - l J)} F_x(y, t)``.

    The default ``F_x(y, t) = |f * phi_{x,t}(y)| (1 + |M_{x,t0}^-1 y|)^-L (1 + 2^(t+t0))^-L``;
    ``field_builder(abs_conv, node_coords, M_{x,t0}^-1, t)`` may replace the
    ``y``-dependent part (the ``t`` factor is still applied when ``L > 0``).
    """
    l = config.aperture_l if l is None else int(l)
    best, wit, s, flags = _sweep(
        fs, phi, cover, config, ("nontangential",), truncated=True, aperture=l, field_builder=field_builder
    )
    fields = _to_fields(best, wit, s, {"nontangential": "aperture"}, config, cover, phi, flags)
    return [d["aperture"] for d in fields]


def aperture_maximal(f, phi, cover, config, l: int | None = None, field_builder=None) -> MaximalField:
    return aperture_maximal_batch([f], phi, cover, config, l, field_builder)[0]


# ---------------------------------------------------------------------- grand maximal
GAUSSIAN_BEST_SCALE = 0.55


@lru_cache(maxsize=64)
def _normalized_cached(phi: TestFunction, N: int, Nt: int) -> TestFunction:
    return normalized(phi, SeminormSpec(N, Nt))


def default_dictionary(dimension: int, N: int, Ntilde: int) -> list[TestFunction]:
    """Normalized Gaussian, two Hermite-Gaussians and a bump, each with unit ``S_{N, Ntilde}`` seminorm.

    Widths are chosen near the maximiser of mass over seminorm.  Kernels whose
    closed-form derivatives stop below order ``N`` (the bump beyond order 6)
    are left out.
    """
    order = max(12, N)
    raw = [
        TestFunction("gaussian", (1.0,), dimension, scale=GAUSSIAN_BEST_SCALE, max_derivative_order=order, name="gaussian"),
        TestFunction("hermite_gaussian", (1.0, 0.0, -1.0), dimension, scale=0.7, max_derivative_order=order, name="hermite_even"),
        TestFunction("hermite_gaussian", (0.0, 1.0), dimension, scale=0.7, max_derivative_order=order, name="hermite_odd"),
        TestFunction("bump", (1.0,), dimension, scale=1.0 / 3.0, name="bump"),
    ]
    return [_normalized_cached(k, N, Ntilde) for k in raw if N <= k.max_derivative_order]


def oracle_dictionary(dimension: int, N: int, Ntilde: int) -> list[TestFunction]:
    """A richer 16-kernel dictionary used to gauge how far the default one is from the sup."""
    order = max(12, N)
    raw = []
    for s in (0.4, 0.55, 0.7, 1.0, 1.4):
        raw.append(TestFunction("gaussian", (1.0,), dimension, scale=s, max_derivative_order=order, name=f"gaussian_{s}"))
    for coeffs in ((1.0, 0.0, -1.0), (0.0, 1.0), (1.0, 0.0, 1.0), (1.0, 0.0, 0.5)):
        for s in (0.55, 1.0):
            raw.append(TestFunction("hermite_gaussian", coeffs, dimension, scale=s, max_derivative_order=order, name=f"hermite_{coeffs}_{s}"))
    for s in (0.25, 1.0 / 3.0, 0.5):
        raw.append(TestFunction("bump", (1.0,), dimension, scale=s, name=f"bump_{s}"))
    return [_normalized_cached(k, N, Ntilde) for k in raw if N <= k.max_derivative_order]


def _grand(fs, cover, config, dictionary, kind: str, truncated: bool = False) -> list[MaximalField]:
    dictionary = list(dictionary)
    if not dictionary:
        raise PreconditionError("grand maximal functions need a non-empty dictionary")
    acc = None
    flags: set[str] = {"dictionary_lower_bound"}
    for phi in dictionary:
        fields = maximal_fields_batch(fs, phi, cover, config, (kind,), truncated=truncated)
        key = ("truncated_" if truncated else "") + kind
        vals = [d[key] for d in fields]
        for v in vals:
            flags |= set(v.flags)
        if acc is None:
            acc = [v.values.values.copy() for v in vals]
        else:
            acc = [np.maximum(a, v.values.values) for a, v in zip(acc, vals)]
    name = ("truncated_" if truncated else "") + "grand_" + kind
    return [
        MaximalField(name, g.with_values(a), config, cover, dictionary, sorted(flags))
        for g, a in zip(fs, acc)
    ]


def grand_radial_maximal(f, cover, config, dictionary=None) -> MaximalField:
    if dictionary is None:
        dictionary = _default_for(cover, config)
    return _grand([f], cover, config, dictionary, "radial")[0]


def grand_nontangential_maximal(f, cover, config, dictionary=None) -> MaximalField:
    if dictionary is None:
        dictionary = _default_for(cover, config)
    return _grand([f], cover, config, dictionary, "nontangential")[0]


def grand_batch(fs, cover, config, dictionary, kind="radial", truncated=False) -> list[MaximalField]:
    return _grand(fs, cover, config, dictionary, kind, truncated)


def _default_for(cover: AnisotropicCover, config: MaximalConfig) -> list[TestFunction]:
    N, Nt = config.Np, config.Ntilde_p
    if N is None or Nt is None:
        if cover.constants is None:
            raise PreconditionError("set Np and Ntilde_p in the config or declare the cover constants")
        N, Nt = hardy_orders(cover.constants, cover.dimension, config.p)
    return default_dictionary(cover.dimension, N, Nt)


# ---------------------------------------------------------------------- Hardy-Littlewood type
def hl_maximal_batch(fs: Sequence[GridFunction], cover: AnisotropicCover, config: MaximalConfig) -> list[MaximalField]:
    """``sup_t |theta(x,t)|^-1 int_{theta(x,t)} |f|`` with fractional cell overlaps."""
    s = _setup(fs, cover, None, config)
    n = cover.dimension
    n0, n1 = s.stack.shape[1:]
    clip = (n1 - 1,) if n == 1 else (n0 - 1, n1 - 1)
    absf = np.abs(s.stack)

    def level(ti: int):
        t = float(s.levels[ti])
        mt = cover.matrices(s.pts, t)
        _, first, inverse = np.unique(mt.reshape(len(s.pts), -1), axis=0, return_index=True, return_inverse=True)
        inverse = inverse.ravel()
        order = np.argsort(inverse, kind="stable")
        bounds = np.searchsorted(inverse[order], np.arange(len(first) + 1))
        out = np.empty((len(s.grids), len(s.pts)))
        for gi, rep in enumerate(first):
            idx = order[bounds[gi] : bounds[gi + 1]]
            w, total = eng.average_stencil(mt[rep], s.h, clip)
            if n == 1:
                t1 = eng.toeplitz_from(w[::-1], n1)
                avg = (absf.reshape(len(s.grids), n1) @ t1.T).reshape(len(s.grids), 1, n1)
            else:
                avg = scipy.signal.fftconvolve(absf, w[None, ::-1, ::-1], mode="same", axes=(1, 2))
            out[:, idx] = avg[:, s.p0[idx], s.p1[idx]] / total
        return np.clip(out, 0.0, None)

    best = None
    wit = None
    workers = worker_count(config.workers)
    with ThreadPoolExecutor(max_workers=workers) as ex:
        results = ex.map(level, range(len(s.levels))) if workers > 1 else map(level, range(len(s.levels)))
        for ti, v in enumerate(results):
            if best is None:
                best = v.copy()
                wit = np.zeros(v.shape, dtype=np.int64)
            else:
                better = v > best
                best[better] = v[better]
                wit[better] = ti
    shape = s.grids[0].shape
    return [
        MaximalField("hl", g.with_values(best[i].reshape(shape)), config, cover, None, [], s.levels[wit[i]].reshape(shape))
        for i, g in enumerate(s.grids)
    ]


def hl_maximal(f, cover, config) -> MaximalField:
    return hl_maximal_batch([f], cover, config)[0]


# ---------------------------------------------------------------------- probes
def decay_slope(field: MaximalField, r_lo: float, r_hi: float) -> float:
    """Least-squares slope of ``log field`` against ``log(1 + |x|)`` over ``r_lo <= |x| <= r_hi``."""
    g = field.values
    r = np.linalg.norm(g.points(), axis=-1).ravel()
    v = g.values.ravel()
    sel = (r >= r_lo) & (r <= r_hi) & (v > 0)
    if np.count_nonzero(sel) < 2:
        raise PreconditionError(f"fewer than two positive samples with {r_lo} <= |x| <= {r_hi}")
    return float(np.polyfit(np.log(1.0 + r[sel]), np.log(v[sel]), 1)[0])


def lower_semicontinuity_probe(field: MaximalField, drops: Sequence[float] = (0.01, 0.1, 0.5), radius_cells: int = 2) -> list[tuple[int, ...]]:
    """Nodes where ``field > lam`` but no other node within ``radius_cells`` exceeds ``lam``.

    ``lam`` runs over ``value * (1 - drop)`` for each node's own value; an empty
    result means every super-level set point has a super-level neighbour.
    """
    v = field.values.values
    pad = np.pad(v, radius_cells, mode="constant", constant_values=-np.inf)
    best = np.full(v.shape, -np.inf)
    offsets = np.stack(np.meshgrid(*[np.arange(-radius_cells, radius_cells + 1)] * v.ndim, indexing="ij"), -1).reshape(-1, v.ndim)
    for off in offsets:
        if not np.any(off):
            continue
        sl = tuple(slice(radius_cells + o, radius_cells + o + n) for o, n in zip(off, v.shape))
        best = np.maximum(best, pad[sl])
    bad = np.zeros(v.shape, dtype=bool)
    for d in drops:
        lam = v * (1.0 - d)
        bad |= (v > 0) & ~(best > lam)
    return [tuple(int(i) for i in idx) for idx in np.argwhere(bad)]
