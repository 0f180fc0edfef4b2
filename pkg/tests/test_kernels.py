from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from aniso_maximal import kernels as K
from aniso_maximal.errors import (
    ConfigError,
    OrderExceededError,
    PreconditionError,
    SeminormTruncationError,
    SingularMatrixError,
)
from aniso_maximal.grid import GridFunction


def sample_grid(fn, lo, hi, n):
    g = GridFunction((lo,), (hi,), np.zeros(n))
    return GridFunction((lo,), (hi,), fn(g.points()[..., 0]))


# ---------------------------------------------------------------- evaluation
def test_gaussian_values_and_derivatives():
    g = K.gaussian(1)
    assert g(0.0) == 1.0
    assert g.evaluate(1.0, 1) == pytest.approx(-2 * math.exp(-1), abs=1e-12)
    assert g.evaluate(1.0, 1) == pytest.approx(-0.7358, abs=1e-4)
    assert g.evaluate(0.0, 1) == 0.0


def test_2d_gaussian_is_a_product():
    g = K.gaussian(2, scale=1.3)
    y = np.array([[0.2, -0.7], [1.1, 0.4]])
    np.testing.assert_allclose(g(y), np.exp(-(1.3**2) * (y**2).sum(-1)), rtol=1e-14)
    np.testing.assert_allclose(
        g.evaluate(y, (1, 1)), 4 * 1.3**4 * y[:, 0] * y[:, 1] * np.exp(-(1.3**2) * (y**2).sum(-1)), rtol=1e-12
    )


def test_bump_values_and_support():
    b = K.bump(1)
    assert b(0.5) == pytest.approx(math.exp(-1 / 0.75), rel=1e-14)
    assert b(1.0) == 0.0 and b(-1.2) == 0.0


@pytest.mark.parametrize("order", range(1, 5))
def test_bump_derivatives_match_finite_differences(order):
    b = K.bump(1)
    y = np.linspace(-0.8, 0.8, 9)
    h = 1e-4
    fd = (b.evaluate(y + h, order - 1) - b.evaluate(y - h, order - 1)) / (2 * h)
    np.testing.assert_allclose(b.evaluate(y, order), fd, atol=1e-5 * max(1.0, np.abs(fd).max()))


def test_bump_masses_by_quadrature():
    one = integrate.quad(lambda y: math.exp(-1 / (1 - y * y)), -1, 1)[0]
    two = integrate.quad(lambda r: 2 * math.pi * r * math.exp(-1 / (1 - r * r)), 0, 1)[0]
    assert one == pytest.approx(0.443994, abs=1e-6)
    assert two == pytest.approx(0.466512, abs=1e-6)
    assert K.bump(1).mass() == pytest.approx(one, rel=1e-8)
    assert K.bump(2).mass() == pytest.approx(two, rel=1e-8)


def test_hermite_gaussian_mass():
    h = K.hermite_gaussian([1.0, 0.0, -2.0])
    quad = integrate.quad(lambda y: (1 - 2 * y * y) * math.exp(-y * y), -np.inf, np.inf)[0]
    assert h.mass() == pytest.approx(quad, abs=1e-12)


def test_order_limit():
    b = K.bump(1)
    with pytest.raises(OrderExceededError):
        b.evaluate(0.0, 7)
    with pytest.raises(OrderExceededError):
        K.seminorm(b, K.SeminormSpec(7, 8))


def test_bad_kernel_config():
    with pytest.raises(ConfigError):
        K.TestFunction("laplace")
    with pytest.raises(ConfigError):
        K.gaussian(1, scale=-1.0)
    with pytest.raises(ConfigError):
        K.hermite_gaussian([0.0, 0.0])
    with pytest.raises(ConfigError):
        K.SeminormSpec(3, 2)
    with pytest.raises(PreconditionError):
        K.mass_normalized(K.hermite_gaussian([0.0, 1.0]))


def test_json_round_trip():
    for phi in (K.gaussian(2, 0.5, 1.5), K.bump(1, scale=2.0), K.hermite_gaussian([1, 0, 3], 1)):
        assert K.TestFunction.from_dict(phi.to_dict()) == phi


# ---------------------------------------------------------------- seminorms
def test_seminorm_order_zero():
    assert K.seminorm(K.gaussian(1), K.SeminormSpec(0, 0)) == pytest.approx(1.0, abs=1e-12)


def test_seminorm_weighted_closed_form():
    ystar = (math.sqrt(3) - 1) / 2
    exact = (1 + ystar) * math.exp(-ystar**2)
    assert exact == pytest.approx(1.19474, abs=1e-5)
    assert K.seminorm(K.gaussian(1), K.SeminormSpec(0, 1)) == pytest.approx(exact, rel=1e-10)


@pytest.mark.parametrize("N,Nt", [(1, 1), (2, 4), (3, 5)])
def test_seminorm_against_dense_grid(N, Nt):
    y = np.linspace(-12, 12, 2_400_001)
    phi = K.gaussian(1, scale=0.8)
    dense = max(np.max((1 + np.abs(y)) ** Nt * np.abs(phi.evaluate(y, a))) for a in range(N + 1))
    assert K.seminorm(phi, K.SeminormSpec(N, Nt), search_box=14) == pytest.approx(dense, rel=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 10.0))
def test_seminorm_homogeneous(c):
    spec = K.SeminormSpec(2, 3)
    phi = K.gaussian(1)
    assert K.seminorm(phi.scaled(c), spec) == pytest.approx(c * K.seminorm(phi, spec), rel=1e-9)


def test_seminorm_monotone_in_orders():
    phi = K.bump(1)
    vals = [K.seminorm(phi, K.SeminormSpec(N, Nt)) for N, Nt in [(0, 0), (1, 1), (1, 3), (2, 3), (3, 4)]]
    assert all(a <= b * (1 + 1e-12) for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("phi", [K.gaussian(1), K.gaussian(2, scale=0.7), K.bump(1), K.bump(2)])
def test_normalized_in_unit_ball(phi):
    spec = K.SeminormSpec(2, 4)
    assert K.seminorm(K.normalized(phi, spec), spec) <= 1 + 1e-9


def test_seminorm_truncation_detected():
    with pytest.raises(SeminormTruncationError):
        K.seminorm(K.gaussian(1, scale=0.2), K.SeminormSpec(0, 4), search_box=5.0)


# ---------------------------------------------------------------- dilation
def test_dilate_examples():
    g = K.gaussian(1)
    assert K.dilate(g, [[2.0]], [2.0]) == pytest.approx(0.5 * math.exp(-1))
    g2 = K.gaussian(2)
    assert K.dilate(g2, np.diag([2.0, 0.5]), [2.0, 0.5]) == pytest.approx(math.exp(-2))
    with pytest.raises(SingularMatrixError):
        K.dilate(g, [[0.0]], [1.0])


def test_dilate_preserves_mass():
    M = np.diag([2.0, 1 / 3])
    ax = np.linspace(-30, 30, 1201)
    y0, y1 = np.meshgrid(ax, ax, indexing="ij")
    pts = np.stack([y0, y1], -1)
    h = ax[1] - ax[0]
    total = K.dilate(K.gaussian(2), M, pts).sum() * h * h
    assert total == pytest.approx(K.gaussian(2).mass(), rel=1e-6)


# ---------------------------------------------------------------- Fourier
def test_fourier_gaussian_self_dual():
    phi = K.gaussian(1, scale=math.sqrt(math.pi))
    g = sample_grid(phi.evaluate, -8.0, 8.0, 256)
    G = K.fourier(g)
    xi = G.points()[..., 0]
    assert np.max(np.abs(G.values - np.exp(-math.pi * xi**2))) < 1e-6
    np.testing.assert_allclose(phi.fourier_at(xi), np.exp(-math.pi * xi**2), atol=1e-14)


def test_fourier_of_zero():
    G = K.fourier(GridFunction((-1.0,), (1.0,), np.zeros(64)))
    assert np.all(G.values == 0)


def test_fourier_shift_theorem():
    phi = K.gaussian(1, scale=2.0)
    a = 0.75
    g = sample_grid(phi.evaluate, -8.0, 8.0, 512)
    gs = sample_grid(lambda y: phi.evaluate(y - a), -8.0, 8.0, 512)
    G, Gs = K.fourier(g), K.fourier(gs)
    xi = G.points()[..., 0]
    np.testing.assert_allclose(Gs.values, np.exp(-2j * math.pi * a * xi) * G.values, atol=1e-12)


@pytest.mark.parametrize("phi", [K.bump(1, scale=0.5), K.hermite_gaussian([1, 0, -1], scale=1.5)])
def test_closed_form_transform_matches_grid(phi):
    g = sample_grid(phi.evaluate, -16.0, 16.0, 1024)
    G = K.fourier(g)
    xi = G.points()[..., 0]
    # the grid transform aliases near Nyquist, so compare on the lower half band
    band = np.abs(xi) <= 8
    np.testing.assert_allclose(G.values[band], phi.fourier_at(xi[band]), atol=1e-8)


def test_fourier_round_trip_2d():
    rng = np.random.default_rng(1)
    g = GridFunction((-2.0, -3.0), (2.0, 1.0), rng.standard_normal((32, 64)))
    back = K.inverse_fourier(K.fourier(g))
    assert back.lo == g.lo and np.allclose(back.hi, g.hi)
    assert np.max(np.abs(back.values - g.values)) <= 1e-10


def test_fourier_needs_power_of_two():
    with pytest.raises(PreconditionError):
        K.fourier(GridFunction((0.0,), (1.0,), np.zeros(100)))


def test_grid_seminorm_agrees_with_pointwise():
    phi = K.gaussian(1, scale=1.2)
    g = sample_grid(phi.evaluate, -16.0, 16.0, 4096)
    spec = K.SeminormSpec(2, 3)
    assert K.grid_seminorm(K.fourier(g), spec) == pytest.approx(K.seminorm(phi, spec), rel=1e-4)
