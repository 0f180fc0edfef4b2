"""Uniform box grids: the discrete carrier for functions and maximal fields.

A grid of shape ``(n_0, ..., n_{d-1})`` on the half-open box ``[lo, hi)`` has
nodes ``lo + i * h`` with ``h = (hi - lo) / n`` per axis.  Sampled values are
read as a piecewise-constant function on the cells ``[node - h/2, node + h/2)``;
every quadrature in the package integrates against that interpretation.

Grid files
----------
Binary (``.grid``, little-endian)::

    8 bytes   magic  b"AMGRID\\0\\0"
    uint32    version (1)
    uint32    ndim
    per axis: uint64 n, float64 lo, float64 hi, float64 spacing
    payload:  prod(n) float64 values, row-major

One-dimensional grids may also be written as CSV with header ``x,value``.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import GridFormatError

MAGIC = b"AMGRID\0\0"
VERSION = 1


@dataclass(frozen=True)
class GridFunction:
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    values: np.ndarray
    # origin of the spatial grid a frequency-side grid was computed from
    dual_lo: tuple[float, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        values = np.asarray(self.values)
        if values.ndim != len(lo) or len(lo) != len(hi):
            raise GridFormatError(
                f"box of dimension {len(lo)} does not match values of shape {values.shape}"
            )
        if any(b <= a for a, b in zip(lo, hi)):
            raise GridFormatError(f"empty box lo={lo} hi={hi}")
        if not np.all(np.isfinite(values)):
            raise GridFormatError("grid values must be finite")
        if not np.iscomplexobj(values):
            values = values.astype(np.float64, copy=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "values", values)

    # ------------------------------------------------------------------ geometry
    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((b - a) / n for a, b, n in zip(self.lo, self.hi, self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis(self, k: int) -> np.ndarray:
        return self.lo[k] + np.arange(self.shape[k]) * self.spacing[k]

    def points(self) -> np.ndarray:
        """Node coordinates, shape ``values.shape + (ndim,)``."""
        axes = np.meshgrid(*[self.axis(k) for k in range(self.ndim)], indexing="ij")
        return np.stack(axes, axis=-1)

    def index_of(self, x: Sequence[float]) -> tuple[int, ...]:
        """Index of the node nearest to ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.rint((x - np.asarray(self.lo)) / np.asarray(self.spacing)).astype(int)
        return tuple(int(i) for i in idx)

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.lo, self.hi, values, dual_lo=self.dual_lo)

    def translated(self, cells: Sequence[int]) -> "GridFunction":
        """Same samples on a box moved by whole cells."""
        shift = np.asarray(cells, dtype=float) * np.asarray(self.spacing)
        return GridFunction(
            tuple(np.asarray(self.lo) + shift), tuple(np.asarray(self.hi) + shift), self.values
        )

    def refined(self, fn: Callable[[np.ndarray], np.ndarray], factor: int = 2, average: int = 1):
        """Resample ``fn`` on the same box with ``factor`` times more nodes per axis."""
        shape = tuple(n * factor for n in self.shape)
        return GridFunction.sample(fn, self.lo, self.hi, shape, average=average)

    # ------------------------------------------------------------------ sampling
    @classmethod
    def sample(
        cls,
        fn: Callable[[np.ndarray], np.ndarray],
        lo: Sequence[float],
        hi: Sequence[float],
        shape: Sequence[int],
        average: int = 1,
    ) -> "GridFunction":
        """Sample ``fn`` (points of shape ``(..., ndim)`` -> values) on a grid.

        ``average > 1`` replaces point samples by cell averages computed from
        ``average**ndim`` midpoint sub-samples per cell.
        """
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        shape = tuple(int(n) for n in np.atleast_1d(shape))
        h = (hi - lo) / np.asarray(shape)
        proto = cls(tuple(lo), tuple(hi), np.zeros(shape))
        pts = proto.points()
        if average <= 1:
            return proto.with_values(np.asarray(fn(pts), dtype=float))
        offs = (np.arange(average) + 0.5) / average - 0.5
        acc = np.zeros(shape)
        grids = np.meshgrid(*([offs] * len(shape)), indexing="ij")
        for sub in zip(*[g.ravel() for g in grids]):
            acc += fn(pts + np.asarray(sub) * h)
        return proto.with_values(acc / average ** len(shape))

    @classmethod
    def zeros(cls, lo, hi, shape) -> "GridFunction":
        return cls(tuple(np.atleast_1d(lo)), tuple(np.atleast_1d(hi)), np.zeros(tuple(np.atleast_1d(shape))))

    # ------------------------------------------------------------------ norms
    def ball_mask(self, radius: float) -> np.ndarray:
        """Nodes strictly inside the Euclidean ball of the given radius about 0."""
        return np.sum(self.points() ** 2, axis=-1) < radius**2

    def lp_norm(self, p: float, mask: np.ndarray | None = None) -> float:
        """``(sum |v|^p h^n)^(1/p)``; quasi-norm for ``p < 1``, sup-norm for ``p = inf``."""
        v = np.abs(self.values)
        if mask is not None:
            v = v[mask]
        if np.isinf(p):
            return float(v.max(initial=0.0))
        return float((np.sum(v**p) * self.cell_volume) ** (1.0 / p))

    def integral(self, mask: np.ndarray | None = None) -> float:
        v = self.values if mask is None else self.values[mask]
        return float(np.sum(v) * self.cell_volume)

    def level_set_measure(self, alpha: float, mask: np.ndarray | None = None) -> float:
        """``h^n`` times the number of nodes with value strictly above ``alpha``."""
        v = self.values if mask is None else self.values[mask]
        return float(np.count_nonzero(v > alpha) * self.cell_volume)


# ---------------------------------------------------------------------- file IO
def write_grid(path: str | Path, g: GridFunction) -> None:
    path = Path(path)
    if path.suffix == ".csv":
        if g.ndim != 1:
            raise GridFormatError("CSV grids are one-dimensional only")
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "value"])
            for x, v in zip(g.axis(0), g.values):
                w.writerow([repr(float(x)), repr(float(v))])
        return
    header = [MAGIC, struct.pack("<II", VERSION, g.ndim)]
    for k in range(g.ndim):
        header.append(struct.pack("<Qddd", g.shape[k], g.lo[k], g.hi[k], g.spacing[k]))
    with path.open("wb") as fh:
        fh.write(b"".join(header))
        fh.write(np.ascontiguousarray(g.values, dtype="<f8").tobytes())


def read_grid(path: str | Path) -> GridFunction:
    path = Path(path)
    if path.suffix == ".csv":
        return _read_csv(path)
    raw = path.read_bytes()
    if raw[:8] != MAGIC:
        raise GridFormatError(f"{path}: bad magic, not a grid file")
    version, ndim = struct.unpack_from("<II", raw, 8)
    if version != VERSION or ndim not in (1, 2, 3):
        raise GridFormatError(f"{path}: unsupported version {version} / ndim {ndim}")
    off = 16
    shape, lo, hi = [], [], []
    for _ in range(ndim):
        n, a, b, h = struct.unpack_from("<Qddd", raw, off)
        off += 32
        if n == 0 or not np.isclose((b - a) / n, h, rtol=1e-12, atol=0.0):
            raise GridFormatError(f"{path}: inconsistent axis header n={n} lo={a} hi={b} h={h}")
        shape.append(n)
        lo.append(a)
        hi.append(b)
    count = int(np.prod(shape))
    if len(raw) - off != 8 * count:
        raise GridFormatError(f"{path}: payload has {len(raw) - off} bytes, expected {8 * count}")
    values = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(shape)
    return GridFunction(tuple(lo), tuple(hi), values.astype(np.float64))


def _read_csv(path: Path) -> GridFunction:
    xs, vs = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        head = next(reader, None)
        if head is None or [c.strip() for c in head] != ["x", "value"]:
            raise GridFormatError(f"{path}:1: expected header 'x,value'")
        for lineno, row in enumerate(reader, start=2):
            try:
                xs.append(float(row[0]))
                vs.append(float(row[1]))
            except (ValueError, IndexError) as exc:
                raise GridFormatError(f"{path}:{lineno}: {exc}") from None
    if len(xs) < 2:
        raise GridFormatError(f"{path}: need at least two rows")
    xs = np.asarray(xs)
    h = np.diff(xs)
    if not np.allclose(h, h[0], rtol=1e-9, atol=0.0) or h[0] <= 0:
        raise GridFormatError(f"{path}: x column is not a uniform increasing grid")
    lo = xs[0]
    return GridFunction((lo,), (lo + len(xs) * h[0],), np.asarray(vs))
