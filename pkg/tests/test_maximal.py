from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aniso_maximal import cover as C
from aniso_maximal import kernels as K
from aniso_maximal.errors import ConfigError, PreconditionError
from aniso_maximal.grid import GridFunction
from aniso_maximal.maximal import (
    BASIC_KINDS,
    MaximalConfig,
    aperture_maximal,
    aperture_maximal_batch,
    convolve_at,
    decay_slope,
    default_dictionary,
    grand_batch,
    grand_radial_maximal,
    hardy_orders,
    hl_maximal,
    lower_semicontinuity_probe,
    maximal_fields,
    maximal_fields_batch,
    oracle_dictionary,
    radial_maximal,
    tangential_maximal,
    truncated_nontangential,
)
from oracles import brute_fields, brute_hl

ORACLE_TOL = 1e-10
COARSE = MaximalConfig(t_min=-2.0, t_max=1.5, t_step=0.5, N=2)


def rel_err(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), 1e-300))


@pytest.fixture(scope="module")
def noise():
    rng = np.random.default_rng(0)
    return GridFunction((-4.0,), (4.0,), rng.standard_normal(32))


def indicator(lo=-1.0, hi=1.0, box=(-8.0, 8.0), n=256):
    g = GridFunction((box[0],), (box[1],), np.zeros(n))
    x = g.points()[..., 0]
    return g.with_values(((x >= lo) & (x <= hi)).astype(float))


# ---------------------------------------------------------------- oracle equivalence
@pytest.mark.parametrize("phi", [K.gaussian(1), K.bump(1, scale=0.5)], ids=["gaussian", "bump"])
def test_fields_match_oracle(noise, phi):
    rad, nt, tg = brute_fields(noise, phi, C.isotropic(1), COARSE.t_levels(), 2, phi.support_radius)
    d = maximal_fields(noise, phi, C.isotropic(1), COARSE)
    for ref, kind in zip((rad, nt, tg), BASIC_KINDS):
        assert rel_err(ref, d[kind].values.values) < ORACLE_TOL


def test_truncated_fields_match_oracle(noise):
    cfg = MaximalConfig(t_min=-2.0, t_max=1.5, t_step=0.5, N=2, L=1.5, t0=-1.0)
    levels = [t for t in cfg.t_levels() if t >= cfg.t0]
    rad, nt, tg = brute_fields(noise, K.gaussian(1), C.isotropic(1), levels, 2, 12.0, t0=cfg.t0, L=cfg.L)
    d = maximal_fields(noise, K.gaussian(1), C.isotropic(1), cfg, truncated=True)
    for ref, kind in zip((rad, nt, tg), BASIC_KINDS):
        assert rel_err(ref, d["truncated_" + kind].values.values) < ORACLE_TOL


def test_aperture_matches_oracle(noise):
    cfg = MaximalConfig(t_min=-2.0, t_max=1.5, t_step=0.5, N=2, L=1.5, t0=-1.0)
    levels = [t for t in cfg.t_levels() if t >= cfg.t0]
    _, ap, _ = brute_fields(noise, K.gaussian(1), C.isotropic(1), levels, 2, 12.0, t0=cfg.t0, L=cfg.L, aperture=1, J=2)
    assert rel_err(ap, aperture_maximal(noise, K.gaussian(1), C.isotropic(1), cfg, l=1).values.values) < ORACLE_TOL


def test_hl_matches_oracle(noise):
    ref = brute_hl(noise, C.isotropic(1), COARSE.t_levels())
    assert rel_err(ref, hl_maximal(noise, C.isotropic(1), COARSE).values.values) < ORACLE_TOL


def test_x_dependent_cover_matches_oracle(noise):
    cov = C.closed_form(1, [["2**(-t)*(1.5+0.5*tanh(x))"]])
    cfg = MaximalConfig(t_min=-2.0, t_max=1.5, t_step=0.5, N=2, J=3)
    rad, nt, tg = brute_fields(noise, K.gaussian(1), cov, cfg.t_levels(), 2, 12.0)
    d = maximal_fields(noise, K.gaussian(1), cov, cfg)
    for ref, kind in zip((rad, nt, tg), BASIC_KINDS):
        assert rel_err(ref, d[kind].values.values) < ORACLE_TOL
    assert rel_err(brute_hl(noise, cov, cfg.t_levels()), hl_maximal(noise, cov, cfg).values.values) < ORACLE_TOL


# ---------------------------------------------------------------- structural properties
grid_values = st.lists(st.floats(-10, 10, allow_nan=False), min_size=32, max_size=32)


@settings(max_examples=20, deadline=None)
@given(grid_values)
def test_pointwise_chain(vals):
    f = GridFunction((-4.0,), (4.0,), np.array(vals))
    d = maximal_fields(f, K.gaussian(1), C.isotropic(1), COARSE)
    rad, nt, tg = (d[k].values.values for k in BASIC_KINDS)
    scale = 1e-12 * max(1.0, float(np.max(tg)))
    assert np.all(rad <= nt + scale)
    assert np.all(nt <= 2**COARSE.N * tg + scale)


@settings(max_examples=15, deadline=None)
@given(grid_values, grid_values, st.floats(-5, 5))
def test_sublinear_and_homogeneous(a, b, c):
    fa = GridFunction((-4.0,), (4.0,), np.array(a))
    fb = fa.with_values(np.array(b))
    out = maximal_fields_batch([fa, fb, fa.with_values(fa.values + fb.values), fa.with_values(c * fa.values)], K.gaussian(1), C.isotropic(1), COARSE)
    for kind in BASIC_KINDS:
        ma, mb, ms, mc = (o[kind].values.values for o in out)
        tol = 1e-12 * max(1.0, float(np.max(ma + mb)))
        assert np.all(ms <= ma + mb + tol)
        np.testing.assert_allclose(mc, abs(c) * ma, rtol=1e-12, atol=1e-12)


def test_refining_t_grid_never_decreases(noise):
    fine = MaximalConfig(t_min=-2.0, t_max=1.5, t_step=0.25, N=2)
    a = maximal_fields(noise, K.gaussian(1), C.isotropic(1), COARSE)
    b = maximal_fields(noise, K.gaussian(1), C.isotropic(1), fine)
    for kind in BASIC_KINDS:
        assert np.all(b[kind].values.values >= a[kind].values.values - 1e-14)


def test_zero_function():
    f = GridFunction((-4.0, -4.0), (4.0, 4.0), np.zeros((32, 32)))
    cfg = MaximalConfig(t_min=-1.0, t_max=2.0, t_step=0.5)
    d = maximal_fields(f, K.gaussian(2), C.isotropic(2), cfg)
    for kind in BASIC_KINDS:
        assert np.all(d[kind].values.values == 0)
    assert np.all(hl_maximal(f, C.isotropic(2), cfg).values.values == 0)


def test_constant_function_in_interior():
    f = GridFunction((-64.0,), (64.0,), np.ones(256))
    cfg = MaximalConfig(t_min=0.0, t_max=4.0, t_step=0.5)
    r = radial_maximal(f, K.mass_normalized(K.gaussian(1)), C.isotropic(1), cfg)
    assert r.values.values[128] == pytest.approx(1.0, abs=1e-6)
    assert hl_maximal(f, C.isotropic(1), cfg).values.values[128] == pytest.approx(1.0, abs=1e-12)


def test_tangential_decreases_with_N(noise):
    vals = [tangential_maximal(noise, K.gaussian(1), C.isotropic(1), MaximalConfig(t_min=-2.0, t_max=1.5, t_step=0.5, N=N, Ntilde=8)).values.values for N in (2, 4, 8)]
    assert np.all(vals[1] <= vals[0] + 1e-14) and np.all(vals[2] <= vals[1] + 1e-14)


def test_aperture_zero_is_truncated_nontangential_and_grows_with_l(noise):
    cfg = MaximalConfig(t_min=-2.0, t_max=1.5, t_step=0.5)
    nt = truncated_nontangential(noise, K.gaussian(1), C.isotropic(1), cfg).values.values
    ap = [a.values.values for a in (aperture_maximal(noise, K.gaussian(1), C.isotropic(1), cfg, l=l) for l in (0, 1, 2))]
    np.testing.assert_array_equal(ap[0], nt)
    assert np.all(ap[1] >= ap[0]) and np.all(ap[2] >= ap[1])


def test_aperture_batch_matches_single(noise):
    cfg = MaximalConfig(t_min=-2.0, t_max=1.5, t_step=0.5)
    batch = aperture_maximal_batch([noise, noise.with_values(2 * noise.values)], K.gaussian(1), C.isotropic(1), cfg, 1)
    single = aperture_maximal(noise, K.gaussian(1), C.isotropic(1), cfg, l=1)
    np.testing.assert_allclose(batch[0].values.values, single.values.values, rtol=1e-14)
    np.testing.assert_allclose(batch[1].values.values, 2 * single.values.values, rtol=1e-14)


# ---------------------------------------------------------------- Hardy orders and grand maximal
def test_hardy_orders():
    assert hardy_orders(C.isotropic(1).constants, 1, 1.0) == (3, 5)
    assert hardy_orders(C.isotropic(2).constants, 2, 1.0) == (7, 10)
    assert hardy_orders(C.isotropic(1).constants, 1, 2.0) == (2, 4)


def test_dictionary_is_normalized():
    spec = K.SeminormSpec(3, 5)
    for phi in default_dictionary(1, 3, 5):
        assert K.seminorm(phi, spec) == pytest.approx(1.0, rel=1e-9)
    assert len(oracle_dictionary(1, 3, 5)) == 16


def test_grand_singleton_and_monotone():
    f = indicator()
    cfg = MaximalConfig.default(1, t_step=0.2)
    d = default_dictionary(1, 3, 5)
    single = grand_batch([f], C.isotropic(1), cfg, d[:1])[0].values.values
    np.testing.assert_array_equal(single, radial_maximal(f, d[0], C.isotropic(1), cfg).values.values)
    two = grand_batch([f], C.isotropic(1), cfg, d[:2])[0].values.values
    full = grand_radial_maximal(f, C.isotropic(1), cfg).values.values
    assert np.all(two >= single) and np.all(full >= two)
    with pytest.raises(PreconditionError):
        grand_batch([f], C.isotropic(1), cfg, [])


def test_default_dictionary_close_to_oracle_dictionary():
    f = indicator()
    cfg = MaximalConfig.default(1, t_step=0.2)
    a = grand_radial_maximal(f, C.isotropic(1), cfg)
    b = grand_batch([f], C.isotropic(1), cfg, oracle_dictionary(1, 3, 5))[0]
    x = f.points()[..., 0]
    for x0 in (0.0, 1.5, 3.0):
        i = int(np.argmin(np.abs(x - x0)))
        assert a.values.values[i] >= 0.85 * b.values.values[i]
    assert "dictionary_lower_bound" in a.flags


def test_grand_needs_orders():
    cov = C.isotropic(1, declare=False)
    with pytest.raises(PreconditionError):
        grand_radial_maximal(indicator(), cov, MaximalConfig())


# ---------------------------------------------------------------- runtime behaviour and metadata
def test_worker_count_does_not_change_output():
    f = GridFunction((-4.0, -4.0), (4.0, 4.0), np.random.default_rng(2).standard_normal((32, 32)))
    cov = C.variable_diagonal()
    outs = [
        maximal_fields(f, K.gaussian(2), cov, MaximalConfig(t_min=-1.0, t_max=2.0, t_step=0.5, J=3, workers=w))
        for w in (1, 3)
    ]
    for kind in BASIC_KINDS:
        assert np.array_equal(outs[0][kind].values.values, outs[1][kind].values.values)
    h = [hl_maximal(f, cov, MaximalConfig(t_min=-1.0, t_max=2.0, t_step=0.5, workers=w)).values.values for w in (1, 3)]
    assert np.array_equal(h[0], h[1])


def test_sidecar(noise):
    fld = radial_maximal(noise, K.gaussian(1), C.isotropic(1), COARSE)
    side = fld.sidecar()
    json.dumps(side)
    assert side["kind"] == "radial" and side["kernel"]["family"] == "gaussian"
    hist = side["witnesses_summary"]["histogram"]
    assert sum(c for _, c in hist) == 32
    assert all(COARSE.t_min <= t <= COARSE.t_max for t, _ in hist)


@pytest.mark.parametrize(
    "kw",
    [dict(t_min=2.0, t_max=1.0), dict(t_step=0.0), dict(N=5, Ntilde=4), dict(L=-1.0), dict(t0=0.0), dict(aperture_l=-1), dict(p=0.0), dict(J=0)],
)
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        MaximalConfig(**kw)


def test_config_round_trip_rejects_unknown():
    cfg = MaximalConfig(L=2.0, Np=3)
    assert MaximalConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        MaximalConfig.from_dict({"t_mn": 0})


def test_t_levels_inclusive():
    lv = MaximalConfig(t_min=-1.0, t_max=1.0, t_step=0.1).t_levels()
    assert len(lv) == 21 and lv[-1] == pytest.approx(1.0)


# ---------------------------------------------------------------- probes
@pytest.mark.parametrize("L", [1, 2, 3])
def test_truncated_fields_decay(L):
    f = indicator(box=(-32.0, 32.0), n=1024)
    cfg = MaximalConfig(t_min=-6.0, t_max=8.0, t_step=0.1, L=L, t0=-1.0)
    fld = truncated_nontangential(f, K.gaussian(1), C.isotropic(1), cfg)
    assert decay_slope(fld, 4.0, 16.0) <= -L + 0.5


def test_decay_slope_needs_samples(noise):
    fld = radial_maximal(noise, K.gaussian(1), C.isotropic(1), COARSE)
    with pytest.raises(PreconditionError):
        decay_slope(fld, 100.0, 200.0)


def test_lower_semicontinuity(noise):
    cfg = MaximalConfig(t_min=-2.0, t_max=1.5, t_step=0.5, L=1.0)
    for fld in (aperture_maximal(noise, K.gaussian(1), C.isotropic(1), cfg, l=1), hl_maximal(indicator(), C.isotropic(1), COARSE)):
        assert lower_semicontinuity_probe(fld) == []


# ---------------------------------------------------------------- indicator examples
@pytest.fixture(scope="module")
def indicator_fields():
    from aniso_maximal.verify import default_corpus

    f = default_corpus(1).subset(["indicator"]).grids()[0]
    phi = K.mass_normalized(K.gaussian(1))
    return f, phi, maximal_fields(f, phi, C.isotropic(1), MaximalConfig.default(1))


def test_convolution_mollifier_limit(indicator_fields):
    f, phi, _ = indicator_fields
    assert convolve_at(f, phi, C.isotropic(1), [0.0], 6.0, [0.0]) == pytest.approx(1.0, abs=1e-3)


def test_convolution_wide_kernel_closed_form(indicator_fields):
    from scipy.special import erf

    f, phi, _ = indicator_fields
    # width 16: the mass of the dilated Gaussian over [-1, 1]
    assert convolve_at(f, phi, C.isotropic(1), [0.0], -4.0, [0.0]) == pytest.approx(erf(1 / 16), abs=1e-4)


def test_radial_at_center_and_nontangential_reach(indicator_fields):
    f, _, d = indicator_fields
    x = f.axis(0)
    i0 = int(np.argmin(np.abs(x)))
    i15 = int(np.argmin(np.abs(x - 1.5)))
    assert d["radial"].values.values[i0] == pytest.approx(1.0, abs=2e-3)
    assert d["nontangential"].values.values[i15] > d["radial"].values.values[i15]


def test_grand_nontangential_over_radial_bounded(indicator_fields):
    from aniso_maximal.maximal import grand_nontangential_maximal

    f, _, _ = indicator_fields
    cfg = MaximalConfig.default(1)
    gr = grand_radial_maximal(f, C.isotropic(1), cfg).values.values
    gn = grand_nontangential_maximal(f, C.isotropic(1), cfg).values.values
    pos = gr > 0
    ratio = gn[pos] / gr[pos]
    assert np.all(ratio >= 1 - 1e-12) and np.max(ratio) < 4


def test_hl_indicator_values():
    f = indicator(0.0, 1.0, box=(-8.0, 8.0), n=1024)
    cfg = MaximalConfig(t_min=-6.0, t_max=8.0, t_step=0.05)
    M = hl_maximal(f, C.isotropic(1), cfg).values
    x = M.axis(0)
    assert M.values[int(np.argmin(np.abs(x - 0.5)))] == pytest.approx(1.0, rel=0.02)
    assert M.values[int(np.argmin(np.abs(x - 2.0)))] == pytest.approx(0.25, rel=0.02)
