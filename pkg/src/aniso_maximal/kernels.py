"""Analytic test functions, Schwartz seminorms, dilations and grid Fourier transforms.

Every kernel has the form ``phi(y) = amplitude * base(scale * y)`` where
``base`` is one of

* ``gaussian``          ``exp(-|y|^2)``
* ``hermite_gaussian``  ``prod_k p(y_k) exp(-y_k^2)`` with ``p`` given by ascending coefficients
* ``bump``              ``exp(-1 / (1 - |y|^2))`` on the open unit ball, 0 outside

Derivatives are closed form: polynomial recursions for the Gaussian families
and, for the bump, a recursion on polynomials in ``(y1, y2, u)`` with
``u = 1 / (1 - |y|^2)``.  The Fourier convention is
``phi_hat(xi) = int phi(y) exp(-2 pi i <y, xi>) dy``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Any, Sequence

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import integrate, special
from scipy.optimize import minimize_scalar

from .errors import ConfigError, OrderExceededError, PreconditionError, SeminormTruncationError, SingularMatrixError
from .grid import GridFunction

KERNEL_FAMILIES = ("gaussian", "hermite_gaussian", "bump")
BUMP_MAX_ORDER = 6


@dataclass(frozen=True)
class SeminormSpec:
    N: int
    Ntilde: int

    def __post_init__(self):
        if self.N < 0 or self.Ntilde < self.N:
            raise ConfigError(f"need 0 <= N <= Ntilde, got N={self.N}, Ntilde={self.Ntilde}")


@dataclass(frozen=True)
class TestFunction:
    family: str
    coefficients: tuple[float, ...] = (1.0,)
    dimension: int = 1
    amplitude: float = 1.0
    scale: float = 1.0
    max_derivative_order: int = 6
    name: str = field(default="", compare=False)

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ConfigError(f"unknown kernel family {self.family!r}; expected one of {KERNEL_FAMILIES}")
        if self.dimension not in (1, 2):
            raise ConfigError(f"kernel dimension must be 1 or 2, got {self.dimension}")
        if not (self.scale > 0):
            raise ConfigError(f"kernel scale must be positive, got {self.scale}")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if self.family == "hermite_gaussian" and not any(self.coefficients):
            raise ConfigError("hermite_gaussian needs a nonzero polynomial")
        if self.family == "bump" and self.max_derivative_order > BUMP_MAX_ORDER:
            object.__setattr__(self, "max_derivative_order", BUMP_MAX_ORDER)

    # ------------------------------------------------------------------ derived kernels
    def scaled(self, c: float) -> "TestFunction":
        """``c * phi``."""
        return replace(self, amplitude=self.amplitude * c)

    def dilated(self, s: float) -> "TestFunction":
        """``y -> phi(s * y)``."""
        return replace(self, scale=self.scale * s)

    @property
    def length_scale(self) -> float:
        """Rough width of the kernel's features, used to pick quadrature resolution."""
        if self.family == "bump":
            return 0.25 / self.scale
        if self.family == "hermite_gaussian":
            return 1.0 / (self.scale * math.sqrt(len(self.coefficients)))
        return 1.0 / self.scale

    @property
    def quadrature_step(self) -> float:
        """Midpoint spacing (in the kernel's own argument) that integrates the kernel to ~1e-8."""
        if self.family == "bump":
            return 0.03 / self.scale
        return 0.5 * self.length_scale

    @property
    def support_radius(self) -> float:
        """Radius (in the kernel's own argument) beyond which the kernel is negligible or zero."""
        return 1.0 / self.scale if self.family == "bump" else 12.0

    # ------------------------------------------------------------------ evaluation
    def __call__(self, y) -> np.ndarray:
        return self.evaluate(y)

    def evaluate(self, y, derivative: Sequence[int] | int | None = None):
        """``d^alpha phi(y)`` for points of shape ``(..., n)`` (or scalars in 1-D)."""
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 0 or (self.dimension > 1 and y.ndim == 1)
        if self.dimension == 1 and (y.ndim == 0 or y.shape[-1] != 1):
            y = y[..., None]
        if y.shape[-1] != self.dimension:
            raise ConfigError(f"points of shape {y.shape} do not match kernel dimension {self.dimension}")
        alpha = _multi_index(derivative, self.dimension)
        order = sum(alpha)
        if order > self.max_derivative_order:
            raise OrderExceededError(
                f"derivative order {order} exceeds the kernel's maximum {self.max_derivative_order}"
            )
        z = self.scale * y
        if self.family == "bump":
            val = _bump_derivative(z, alpha)
        else:
            coeffs = (1.0,) if self.family == "gaussian" else self.coefficients
            val = np.ones(z.shape[:-1])
            for k in range(self.dimension):
                val = val * _hermite_factor(z[..., k], coeffs, alpha[k])
        out = self.amplitude * self.scale**order * val
        return float(out) if scalar and np.ndim(out) == 0 else out

    # ------------------------------------------------------------------ integrals
    def mass(self) -> float:
        """``int phi``."""
        n = self.dimension
        if self.family == "bump":
            base = _bump_mass(n)
        else:
            coeffs = (1.0,) if self.family == "gaussian" else self.coefficients
            base = _hermite_mass(coeffs) ** n
        return self.amplitude * base / self.scale**n

    def abs_mass(self) -> float:
        n = self.dimension
        if self.family == "hermite_gaussian":
            f = lambda v: abs(P.polyval(v, self.coefficients)) * math.exp(-v * v)
            base = integrate.quad(f, -np.inf, np.inf, limit=200)[0] ** n
            return abs(self.amplitude) * base / self.scale**n
        return abs(self.mass())

    def tail_mass(self, radius: float) -> float:
        """Upper bound for ``int_{|y| > radius} |phi|``."""
        n = self.dimension
        r = radius * self.scale
        if self.family == "bump":
            return 0.0 if r >= 1.0 else self.abs_mass()
        coeffs = (1.0,) if self.family == "gaussian" else self.coefficients
        f = lambda v: abs(P.polyval(v, coeffs)) * math.exp(-v * v)
        full = integrate.quad(f, -np.inf, np.inf, limit=200)[0]
        rr = r / math.sqrt(n)
        tail = 2.0 * integrate.quad(f, rr, np.inf, limit=200)[0] if rr < 40 else 0.0
        # the region |y| > r lies in the union of the slabs |y_k| > r / sqrt(n)
        bound = n * tail * full ** (n - 1)
        return abs(self.amplitude) * bound / self.scale**n

    def fourier_at(self, xi) -> np.ndarray:
        """Closed-form (or quadrature, for the bump) transform at frequencies ``(..., n)``."""
        xi = np.asarray(xi, dtype=float)
        if self.dimension == 1 and (xi.ndim == 0 or xi.shape[-1] != 1):
            xi = xi[..., None]
        n = self.dimension
        w = xi / self.scale
        if self.family == "bump":
            val = _bump_fourier(w)
        else:
            coeffs = (1.0,) if self.family == "gaussian" else self.coefficients
            val = np.ones(w.shape[:-1], dtype=complex)
            for k in range(n):
                val = val * _hermite_factor_fourier(w[..., k], coeffs)
            if self.family == "gaussian":
                val = val.real
        return self.amplitude * val / self.scale**n

    # ------------------------------------------------------------------ JSON
    def to_dict(self) -> dict[str, Any]:
        return {
            "family": self.family,
            "coefficients": list(self.coefficients),
            "dimension": self.dimension,
            "amplitude": self.amplitude,
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "TestFunction":
        if "family" not in doc:
            raise ConfigError("kernel document: missing field 'family'")
        return cls(
            family=str(doc["family"]),
            coefficients=tuple(doc.get("coefficients", (1.0,))),
            dimension=int(doc.get("dimension", 1)),
            amplitude=float(doc.get("amplitude", 1.0)),
            scale=float(doc.get("scale", 1.0)),
            name=str(doc.get("name", "")),
        )


def gaussian(dimension: int = 1, amplitude: float = 1.0, scale: float = 1.0) -> TestFunction:
    return TestFunction("gaussian", (1.0,), dimension, amplitude, scale, name="gaussian")


def hermite_gaussian(coefficients, dimension: int = 1, amplitude: float = 1.0, scale: float = 1.0) -> TestFunction:
    return TestFunction("hermite_gaussian", tuple(coefficients), dimension, amplitude, scale, name="hermite")


def bump(dimension: int = 1, amplitude: float = 1.0, scale: float = 1.0) -> TestFunction:
    return TestFunction("bump", (1.0,), dimension, amplitude, scale, name="bump")


def mass_normalized(phi: TestFunction) -> TestFunction:
    m = phi.mass()
    if m == 0:
        raise PreconditionError("kernel has zero mean and cannot be mass-normalized")
    return phi.scaled(1.0 / m)


def evaluate(phi: TestFunction, y, derivative=None):
    return phi.evaluate(y, derivative)


# ---------------------------------------------------------------------- derivative machinery
def _multi_index(derivative, n: int) -> tuple[int, ...]:
    if derivative is None:
        return (0,) * n
    if isinstance(derivative, (int, np.integer)):
        if n != 1:
            raise ConfigError("use a multi-index for derivatives of multivariate kernels")
        alpha = (int(derivative),)
    else:
        alpha = tuple(int(a) for a in derivative)
    if len(alpha) != n or any(a < 0 for a in alpha):
        raise ConfigError(f"bad multi-index {derivative!r} for dimension {n}")
    return alpha


def multi_indices(n: int, max_order: int) -> list[tuple[int, ...]]:
    """All multi-indices of length ``n`` with ``|alpha| <= max_order``, graded order."""
    out = []
    for order in range(max_order + 1):
        for alpha in itertools.product(range(order + 1), repeat=n):
            if sum(alpha) == order:
                out.append(alpha)
    return out


@lru_cache(maxsize=256)
def _hermite_poly(coeffs: tuple[float, ...], order: int) -> np.ndarray:
    """Coefficients of ``q`` with ``d^order [p(v) e^{-v^2}] = q(v) e^{-v^2}``."""
    q = np.asarray(coeffs, dtype=float)
    for _ in range(order):
        q = P.polysub(P.polyder(q), P.polymulx(2.0 * q)) if len(q) else q
    return q


def _hermite_factor(v: np.ndarray, coeffs, order: int) -> np.ndarray:
    q = _hermite_poly(tuple(coeffs), order)
    return P.polyval(v, q) * np.exp(-v * v)


def _hermite_mass(coeffs) -> float:
    # int v^k e^{-v^2} dv = Gamma((k+1)/2) for even k, 0 for odd k
    return float(sum(c * math.gamma((k + 1) / 2) for k, c in enumerate(coeffs) if k % 2 == 0))


@lru_cache(maxsize=64)
def _fourier_polys(degree: int) -> list[np.ndarray]:
    """``r_m`` with ``d^m/dxi^m e^{-pi^2 xi^2} = r_m(xi) e^{-pi^2 xi^2}``."""
    out = [np.array([1.0])]
    for _ in range(degree):
        r = out[-1]
        out.append(P.polysub(P.polyder(r) if len(r) > 1 else np.array([0.0]), P.polymulx(2 * math.pi**2 * r)))
    return out


def _hermite_factor_fourier(w: np.ndarray, coeffs) -> np.ndarray:
    # FT[v^m g](xi) = (i / 2 pi)^m d^m/dxi^m g_hat(xi), g_hat = sqrt(pi) e^{-pi^2 xi^2}
    rs = _fourier_polys(len(coeffs) - 1)
    acc = np.zeros(np.shape(w), dtype=complex)
    for m, c in enumerate(coeffs):
        if c:
            acc = acc + c * (1j / (2 * math.pi)) ** m * P.polyval(w, rs[m])
    return acc * math.sqrt(math.pi) * np.exp(-(math.pi**2) * w * w)


# Bump derivatives: d^alpha exp(-u) with u = 1/(1-|y|^2) equals
# sum c * y1^i * y2^j * u^m * exp(-u); d/dy_k u = 2 y_k u^2.
@lru_cache(maxsize=128)
def _bump_terms(alpha: tuple[int, ...]) -> tuple[tuple[tuple[int, int, int], float], ...]:
    if sum(alpha) > BUMP_MAX_ORDER:
        raise OrderExceededError(f"bump derivatives are available up to order {BUMP_MAX_ORDER}")
    terms: dict[tuple[int, int, int], float] = {(0, 0, 0): 1.0}
    for axis, count in enumerate(alpha):
        for _ in range(count):
            new: dict[tuple[int, int, int], float] = {}

            def add(key, val):
                new[key] = new.get(key, 0.0) + val

            for (i, j, m), c in terms.items():
                e = [i, j]
                # derivative of the monomial in y_axis
                if e[axis] > 0:
                    k = list(e)
                    k[axis] -= 1
                    add((k[0], k[1], m), c * e[axis])
                # derivative of u^m: m u^{m-1} * 2 y u^2
                k = list(e)
                k[axis] += 1
                if m > 0:
                    add((k[0], k[1], m + 1), 2.0 * c * m)
                # derivative of exp(-u): -2 y u^2
                add((k[0], k[1], m + 2), -2.0 * c)
            terms = {k: v for k, v in new.items() if v != 0.0}
    return tuple(sorted(terms.items()))


def _bump_derivative(z: np.ndarray, alpha: tuple[int, ...]) -> np.ndarray:
    r2 = np.sum(z * z, axis=-1)
    inside = r2 < 1.0
    out = np.zeros(r2.shape)
    if not np.any(inside):
        return out
    zi = z[inside]
    s = 1.0 - r2[inside]
    u = 1.0 / s
    logu = np.log(u)
    y1 = zi[:, 0]
    y2 = zi[:, 1] if zi.shape[1] > 1 else np.zeros_like(y1)
    acc = np.zeros(len(s))
    for (i, j, m), c in _bump_terms(alpha):
        acc += c * y1**i * y2**j * np.exp(m * logu - u)
    out[inside] = acc
    return out


@lru_cache(maxsize=4)
def _bump_mass(n: int) -> float:
    if n == 1:
        return float(_bump_fourier(np.zeros((1, 1)))[0].real)
    # 2 pi int_0^1 r e^{-1/(1-r^2)} dr = pi int_0^1 e^{-1/v} dv = pi (e^{-1} - E1(1))
    return float(math.pi * (math.exp(-1.0) - special.exp1(1.0)))


_TANH_V = np.linspace(-4.0, 4.0, 801)
_TANH_W = (_TANH_V[1] - _TANH_V[0]) * np.exp(-np.cosh(_TANH_V) ** 2) / np.cosh(_TANH_V) ** 2
_TANH_Y = np.tanh(_TANH_V)


def _bump_fourier(w: np.ndarray) -> np.ndarray:
    """Transform of the unit bump; 1-D via a tanh substitution and the trapezoid rule."""
    if w.shape[-1] == 1:
        xi = w[..., 0]
        # the substituted integrand is analytic in a strip, so the trapezoid rule converges geometrically
        phase = np.cos(2 * math.pi * np.multiply.outer(xi, _TANH_Y))
        return (phase @ _TANH_W).astype(complex)
    rho = np.sqrt(np.sum(w * w, axis=-1))
    flat = rho.ravel()
    vals = np.empty(flat.shape)
    for k, r in enumerate(flat):
        f = lambda s: s * math.exp(-1.0 / (1.0 - s * s)) * special.j0(2 * math.pi * s * r) if s < 1 else 0.0
        vals[k] = 2 * math.pi * integrate.quad(f, 0.0, 1.0, limit=200, epsabs=1e-14)[0]
    return vals.reshape(rho.shape).astype(complex)


# ---------------------------------------------------------------------- seminorm
def seminorm(
    phi: TestFunction,
    spec: SeminormSpec,
    search_box: float | None = None,
    search_resolution: int | None = None,
) -> float:
    """``max_{|alpha| <= N} sup_y (1 + |y|)^Ntilde |d^alpha phi(y)|``.

    The sup is a grid search over ``[-R, R]^n`` followed by one golden-section
    pass (per axis) around the best grid point of each derivative.  Raises
    :class:`SeminormTruncationError` if the weighted integrand on the edge of
    the search box is not below 1e-6 of the maximum.
    """
    n = phi.dimension
    R = float(search_box) if search_box is not None else (1.05 / phi.scale if phi.family == "bump" else 10.0 / phi.scale)
    res = search_resolution or (4001 if n == 1 else 301)
    if spec.N > phi.max_derivative_order:
        raise OrderExceededError(f"seminorm order {spec.N} exceeds the kernel's maximum {phi.max_derivative_order}")
    axis = np.linspace(-R, R, res)
    if n == 1:
        pts = axis[:, None]
        edge = np.array([0, res - 1])
    else:
        g0, g1 = np.meshgrid(axis, axis, indexing="ij")
        pts = np.stack([g0, g1], axis=-1).reshape(-1, 2)
        on_edge = (np.abs(g0) == R) | (np.abs(g1) == R)
        edge = np.flatnonzero(on_edge.ravel())
    weight = (1.0 + np.linalg.norm(pts, axis=-1)) ** spec.Ntilde
    best = 0.0
    edge_max = 0.0
    step = axis[1] - axis[0]
    for alpha in multi_indices(n, spec.N):
        vals = weight * np.abs(phi.evaluate(pts, alpha))
        i = int(np.argmax(vals))
        edge_max = max(edge_max, float(vals[edge].max()))
        cand = float(vals[i])
        y0 = pts[i].copy()
        for k in range(n):

            def neg(v, k=k):
                y = y0.copy()
                y[k] = v
                return -(1.0 + np.linalg.norm(y)) ** spec.Ntilde * abs(float(phi.evaluate(y[None, :], alpha)[0]))

            r = minimize_scalar(neg, bounds=(y0[k] - step, y0[k] + step), method="bounded",
                                options={"xatol": 1e-12})
            if -r.fun > cand:
                cand = float(-r.fun)
                y0[k] = r.x
        best = max(best, cand)
    if best > 0 and edge_max >= 1e-6 * best:
        raise SeminormTruncationError(
            f"weighted integrand on the search-box edge ({edge_max:.3e}) is not below 1e-6 of the max ({best:.3e}); "
            "enlarge search_box"
        )
    return best


def normalized(phi: TestFunction, spec: SeminormSpec) -> TestFunction:
    """``phi / seminorm(phi)`` so that the result lies in the unit ball of ``S_{N, Ntilde}``."""
    s = seminorm(phi, spec)
    if s == 0:
        raise PreconditionError("cannot normalize the zero kernel")
    return replace(phi.scaled(1.0 / s), name=phi.name)


# ---------------------------------------------------------------------- dilation
def dilate(phi: TestFunction, M, y) -> np.ndarray:
    """``|det M^-1| phi(M^-1 y)`` for points ``y`` of shape ``(..., n)``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    det = np.linalg.det(M)
    if not abs(det) > 0:
        raise SingularMatrixError("dilation matrix is singular")
    minv = np.linalg.inv(M)
    y = np.asarray(y, dtype=float)
    if phi.dimension == 1 and (y.ndim == 0 or y.shape[-1] != 1):
        y = y[..., None]
    z = np.einsum("ij,...j->...i", minv, y)
    return phi.evaluate(z) / abs(det)


# ---------------------------------------------------------------------- grid Fourier transforms
def _check_pow2(shape) -> None:
    for n in shape:
        if n < 2 or n & (n - 1):
            raise PreconditionError(f"grid size {n} is not a power of two")


def fourier(g: GridFunction) -> GridFunction:
    """Continuous-normalized DFT: ``G(xi) ~ sum_y h^n g(y) exp(-2 pi i <y, xi>)``.

    Frequencies run over ``[-1/(2h), 1/(2h))`` with spacing ``1/(n h)``; the
    spatial origin is kept in ``dual_lo`` so the transform can be inverted.
    """
    _check_pow2(g.shape)
    h = np.asarray(g.spacing)
    lo = np.asarray(g.lo)
    axes = tuple(range(g.ndim))
    spec = np.fft.fftshift(np.fft.fftn(g.values, axes=axes), axes=axes)
    flo = -0.5 / h
    fhi = 0.5 / h
    out = GridFunction(tuple(flo), tuple(fhi), np.zeros(g.shape), dual_lo=tuple(lo))
    xi = out.points()
    phase = np.exp(-2j * np.pi * (xi @ lo))
    return GridFunction(tuple(flo), tuple(fhi), spec * phase * np.prod(h), dual_lo=tuple(lo))


def inverse_fourier(G: GridFunction) -> GridFunction:
    """Inverse of :func:`fourier`; returns real values when the imaginary part is round-off."""
    _check_pow2(G.shape)
    if G.dual_lo is None:
        raise PreconditionError("frequency grid has no spatial origin (dual_lo)")
    dxi = np.asarray(G.spacing)
    n = np.asarray(G.shape)
    h = 1.0 / (n * dxi)
    lo = np.asarray(G.dual_lo)
    phase = np.exp(2j * np.pi * (G.points() @ lo))
    axes = tuple(range(G.ndim))
    vals = np.fft.ifftn(np.fft.ifftshift(G.values * phase, axes=axes), axes=axes) / np.prod(h)
    scale = max(float(np.max(np.abs(vals))), 1e-300)
    if float(np.max(np.abs(vals.imag))) <= 1e-12 * scale:
        vals = vals.real
    return GridFunction(tuple(lo), tuple(lo + n * h), vals)


def spectral_derivative(G: GridFunction, alpha: Sequence[int]) -> GridFunction:
    """Multiply a frequency grid by ``(2 pi i xi)^alpha``."""
    xi = G.points()
    factor = np.ones(G.shape, dtype=complex)
    for k, a in enumerate(alpha):
        if a:
            factor = factor * (2j * np.pi * xi[..., k]) ** a
    return GridFunction(G.lo, G.hi, G.values * factor, dual_lo=G.dual_lo)


def grid_seminorm(G: GridFunction, spec: SeminormSpec) -> float:
    """Seminorm of the space-grid inverse of ``G``, derivatives by spectral differentiation."""
    best = 0.0
    for alpha in multi_indices(G.ndim, spec.N):
        d = inverse_fourier(spectral_derivative(G, alpha))
        pts = d.points()
        w = (1.0 + np.linalg.norm(pts, axis=-1)) ** spec.Ntilde
        best = max(best, float(np.max(w * np.abs(d.values))))
    return best
