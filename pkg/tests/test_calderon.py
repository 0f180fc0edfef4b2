from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aniso_maximal import calderon as Z
from aniso_maximal import cover as C
from aniso_maximal import kernels as K
from aniso_maximal.errors import ConfigError, PreconditionError, SmallDivisorError

# seminorm of eta^0 for the Gaussian/Gaussian plan below, frozen from the grid
# computation and independently confirmed by direct Gauss-Legendre quadrature
ETA0_SEMINORM = 29.27896339037


def plan(psi=None, K_max=4, box=4.0, h=1 / 128, **kw):
    psi = psi if psi is not None else K.gaussian(1, scale=8.0)
    return Z.DecompositionPlan((0.0,), 0.0, K_max, K.gaussian(1), psi, C.isotropic(1), (-box,), (box,), h, **kw)


@pytest.fixture(scope="module")
def narrow():
    p = plan()
    return p, Z.build_eta(p)


@pytest.fixture(scope="module")
def reference():
    p = plan(K.gaussian(1), K_max=12, box=16.0, h=1 / 64)
    return p, Z.build_eta(p)


# ---------------------------------------------------------------- cutoffs
def test_smooth_step_values():
    assert Z.smooth_step(0.0) == 0.0 and Z.smooth_step(1.0) == 1.0
    assert Z.smooth_step(0.5) == pytest.approx(0.5)
    u = np.linspace(-1, 2, 301)
    assert np.all(np.diff(Z.smooth_step(u)) >= 0)


def test_zeta_support():
    xi = np.linspace(-3, 3, 601)[:, None]
    z = Z.zeta(xi)
    r = np.abs(xi[:, 0])
    assert np.all(z[r <= 1] == 1) and np.all(z[r >= 2] == 0)
    assert np.all((z >= 0) & (z <= 1))


def test_isotropic_level_matrices():
    A = plan(K_max=3).level_matrices()
    for k, a in enumerate(A):
        assert a[0, 0] == pytest.approx(4.0**-k, rel=1e-14)


def test_partition_annuli(narrow):
    p, _ = narrow
    xi = p.frequency_grid().points()
    r = np.abs(xi[..., 0])
    zs = Z.build_zeta_partition(p, xi)
    for k, zk in enumerate(zs[1:], start=1):
        assert np.all(zk >= -1e-15)
        assert np.all(zk[r <= 4.0 ** (k - 1)] == 0)
        assert np.all(zk[r >= 2 * 4.0**k] == 0)
    origin = np.argmin(r)
    assert zs[0].ravel()[origin] == 1 and all(z.ravel()[origin] == 0 for z in zs[1:])


@pytest.mark.parametrize("K_max", [0, 3, 8])
def test_telescoping_exact(K_max):
    assert Z.telescoping_error(plan(K_max=K_max)) <= 1e-10


# ---------------------------------------------------------------- eta and reconstruction
def test_eta0_equals_cutoff_when_psi_is_phi():
    p = plan(Z.normalize_phi(K.gaussian(1), 1.0)[0], K_max=0)
    eta = Z.build_eta(p)
    np.testing.assert_allclose(eta.hats[0].values, Z.zeta(p.frequency_grid().points()), atol=1e-15)


def test_normalized_phi_for_gaussian():
    phi, c = Z.normalize_phi(K.gaussian(1), 1.0)
    assert c == 8.0
    assert phi.mass() == pytest.approx(1.0)
    assert Z.normalization_margin(phi, 2.0) >= Z.NORMALIZATION_BOUND
    assert Z.normalization_margin(K.mass_normalized(K.gaussian(1, scale=2.0**(23 / 8))), 2.0) < Z.NORMALIZATION_BOUND


def test_small_divisor_reported():
    p = plan(K.gaussian(1), K_max=2, box=16.0, h=1 / 64, normalize=False)
    p.phi = K.gaussian(1, scale=0.2)
    with pytest.raises(SmallDivisorError) as info:
        Z.build_eta(p)
    assert info.value.witness["k"] == 0 and info.value.witness["divisor"] < Z.DIVISOR_FLOOR


def test_band_limited_psi_has_empty_high_terms():
    # the transform of a wide Gaussian underflows beyond the first annulus
    p = plan(K.gaussian(1, scale=0.25), K_max=5, box=32.0, h=1 / 8)
    eta = Z.build_eta(p)
    assert eta.seminorms[0] > 0
    assert all(s == 0 for s in eta.seminorms[2:])


def test_reconstruction_converges(narrow):
    p, eta = narrow
    out, rep = Z.reconstruct(p, eta)
    assert rep.relative_sup_error < 1e-12
    errs = rep.errors_by_K
    assert all(b <= a + 1e-15 for a, b in zip(errs, errs[1:]))
    assert errs[0] > 1e-2
    assert out.shape == p.shape
    with pytest.raises(PreconditionError):
        Z.reconstruct(p, eta, K=9)


def test_frequency_identity(narrow):
    p, eta = narrow
    for K_ in range(len(eta)):
        assert Z.frequency_identity_error(p, eta, K_) <= 1e-12


@settings(max_examples=10, deadline=None)
@given(st.floats(-4, 4).filter(lambda c: abs(c) > 1e-3))
def test_seminorms_scale_with_psi(c):
    base = Z.build_eta(plan(K_max=2))
    scaled = Z.build_eta(plan(K.gaussian(1, amplitude=c, scale=8.0), K_max=2))
    np.testing.assert_allclose(scaled.seminorms, abs(c) * np.array(base.seminorms), rtol=1e-12)


def test_seminorm_reference_value(reference):
    p, eta = reference
    assert eta.seminorms[0] == pytest.approx(ETA0_SEMINORM, rel=1e-10)
    assert Z.eta0_quadrature_seminorm(p, eta) == pytest.approx(eta.seminorms[0], rel=1e-9)


def test_quad_spot_check(reference):
    p, eta = reference
    grid = eta.terms[0]
    y = grid.axis(0)
    for i in (len(y) // 2, len(y) // 2 + 37):
        assert abs(Z.quad_check_point(p, eta, float(y[i])) - grid.values[i]) <= 1e-9 * np.max(np.abs(grid.values))


def test_decay_table_flags_vanishing_terms(reference, tmp_path):
    _, eta = reference
    tab = Z.seminorm_decay_table(eta, fit_range=(4, 12))
    assert tab.slope == -np.inf and tab.flags == ["vanishing_terms"]
    tab.write_csv(tmp_path / "decay.csv")
    lines = (tmp_path / "decay.csv").read_text().splitlines()
    assert lines[0] == "k,seminorm,log2_ratio" and len(lines) == 14


def test_decay_table_slope_on_nonzero_terms(narrow):
    _, eta = narrow
    tab = Z.seminorm_decay_table(eta, fit_range=(1, 3))
    assert tab.flags == [] and tab.slope < -10


def test_uniformity_spot_check():
    rows = Z.uniformity_spot_check(plan(K_max=3), [[0.0], [1.5], [-3.0]])
    assert len(rows) == 3
    assert all(r["relative_sup_error"] < 1e-10 for r in rows)
    assert len({r["max_seminorm"] for r in rows}) == 1


# ---------------------------------------------------------------- plan documents
def test_plan_round_trip():
    p = plan(K_max=3, J=2)
    doc = json.loads(json.dumps(p.to_dict()))
    back = Z.DecompositionPlan.from_dict(doc)
    assert back.to_dict() == p.to_dict()


def test_plan_validation():
    with pytest.raises(ConfigError):
        plan(h=0.3)
    with pytest.raises(ConfigError):
        plan(K_max=-1)
    with pytest.raises(ConfigError):
        Z.DecompositionPlan((0.0, 0.0), 0.0, 1, K.gaussian(1), K.gaussian(1), C.isotropic(1), (-4.0,), (4.0,), 1 / 8)
    with pytest.raises(ConfigError):
        Z.DecompositionPlan.from_dict({"base_point": [0.0]})
