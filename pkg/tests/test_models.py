"""Model profiles, the shrink scaling, and decay diagnostics."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

import cmcglue as cg
from cmcglue.models import ProfileRangeError, sds_F


def test_sds_closed_form_value():
    # (Lambda/3) r^2 + 2 M eps / r at (M=1, Lambda=3, eps=0.1, r=1)
    assert sds_F(cg.SdSParams(M=1.0, Lambda=3.0, epsilon=0.1), 1.0) == pytest.approx(1.2, abs=1e-15)


def test_sds_reductions():
    r = np.linspace(0.2, 0.8, 7)
    assert_allclose(sds_F(cg.SdSParams(M=0.0, Lambda=3.0, epsilon=0.3), r), r**2)
    assert_allclose(sds_F(cg.SdSParams(M=1.0, Lambda=0.0, epsilon=1.0), r), 2.0 / r)


def test_sds_profile_rejects_horizon():
    grid = cg.RadialGrid.make(0.5, 1.5, 64, "uniform")
    with pytest.raises(cg.DegenerateMetricError, match="degenerates"):
        cg.sds_profile(cg.SdSParams(M=0.0, Lambda=3.0, epsilon=1.0), grid)


def test_ode_residual_examples():
    grid = cg.RadialGrid.make(0.3, 2.0, 64, "uniform")
    hom = cg.sds_profile(cg.SdSParams(M=1.0, Lambda=0.0, epsilon=0.1), grid)
    assert np.max(np.abs(cg.ode_residual(hom, 0.0))) <= 1e-15
    grid2 = cg.RadialGrid.make(0.1, 0.9, 64, "uniform")
    part = cg.sds_profile(cg.SdSParams(M=0.0, Lambda=3.0, epsilon=1.0), grid2)
    assert np.max(np.abs(cg.ode_residual(part, 3.0))) <= 1e-14
    lin = cg.RadialMetric(grid2, "F", grid2.r.copy(), deriv1=np.ones(grid2.n))
    res = cg.ode_residual(lin, 0.0)
    i = np.argmin(np.abs(grid2.r - 1.0))
    assert_allclose(res, 2.0 * grid2.r)  # F + rF' = 2r by hand


def test_scale_identity_at_eps_one():
    ae = cg.bowen_york_ae(0.2, 0.5)
    sc = cg.scale_ae_data(ae, 1.0)
    rho = np.linspace(1.0, 5.0, 11)
    assert_allclose(sc.a(rho), ae.a0(rho), rtol=0)
    assert_allclose(sc.m(rho), ae.m0(rho), rtol=0)


def test_scaled_metric_closed_form():
    # A0 = (1-2M/rho)^(-1) pulled to r = eps*rho gives (1-2M eps/r)^(-1)
    ae = cg.schwarzschild_ae(0.2)
    eps = 0.01
    sc = cg.scale_ae_data(ae, eps)
    r = np.linspace(0.05, 0.5, 9)
    assert_allclose(sc.a(r), 1.0 / (1.0 - 2.0 * 0.2 * eps / r), rtol=1e-13)


def test_scaled_metric_decay_estimate():
    # |A(r) - 1| <= kappa eps / r with kappa stable across eps
    ae = cg.schwarzschild_ae(0.2)
    kappas = []
    for eps in (0.01, 0.005, 0.0025):
        sc = cg.scale_ae_data(ae, eps)
        r = np.geomspace(10 * eps, 0.5, 301)
        kappas.append(np.max(r * np.abs(sc.a(r) - 1.0)) / eps)
    assert max(kappas) / min(kappas) <= 1.2
    assert max(kappas) <= 4.0 * 0.2  # ~2M with margin


def test_scale_range_guard():
    base = cg.schwarzschild_ae(0.2)
    prof = cg.AEProfile(a0=base.a0, da0=base.da0, d2a0=base.d2a0, rho_min=1.0, rho_max=100.0)
    sc = cg.scale_ae_data(prof, 0.01)
    with pytest.raises(ProfileRangeError, match="range exceeded"):
        sc.a(np.array([2.0]))  # rho = 200 > 100


def test_bowen_york_divergence_free_and_decay_class():
    grid = cg.RadialGrid.make(1.0, 64.0, 257, "log")
    mu = cg.bowen_york_mu(0.5, grid)
    res = cg.momentum_residual(cg.radial.flat_metric(grid), cg.CmcExtrinsicCurvature(0.0, mu))
    assert np.max(np.abs(res)) <= 1e-14
    # |m| = |c|/rho^3 <= |c|/rho^2 on rho >= 1
    assert np.all(np.abs(mu.m) <= 0.5 / grid.r**2 + 1e-15)
    assert np.all(cg.bowen_york_mu(0.0, grid).m == 0.0)


def test_bowen_york_family_solves_both_constraints():
    # F0 = 2M/rho - c^2/rho^4 balances the curvature against |mu|^2 = 6 m0^2
    ae = cg.bowen_york_ae(0.2, 0.5)
    grid = cg.RadialGrid.make(1.0, 40.0, 513, "log")
    met = cg.RadialMetric(grid, "A", ae.a0(grid.r), deriv1=ae.da0(grid.r), deriv2=ae.d2a0(grid.r))
    K = cg.CmcExtrinsicCurvature(0.0, cg.TraceFreeRadialTensor(grid, ae.m0(grid.r), deriv1=ae.dm0(grid.r)))
    assert np.max(np.abs(cg.hamiltonian_residual(met, K, 0.0))) <= 1e-11
    assert np.max(np.abs(cg.momentum_residual(met, K))) <= 1e-12


def test_decay_constants_schwarzschild():
    # rho |A0 - 1| = 2M rho/(rho - 2M) decreases to 2M; the final-octave
    # constant at rho_max = 64 M sits within 10%
    M = 1.0
    rep = cg.ae_decay_constants(cg.schwarzschild_ae(M), max_order=2, rho_window=(8.0 * M, 64.0 * M))
    assert abs(rep.metric_tail[0] - 2.0 * M) <= 0.1 * 2.0 * M
    assert rep.metric_sup[0] >= rep.metric_tail[0]
    assert not rep.non_ae


def test_decay_constants_flat():
    rep = cg.ae_decay_constants(cg.flat_ae(), max_order=2, rho_window=(1.0, 64.0))
    assert all(c == 0.0 for c in rep.metric_sup)
    assert not rep.non_ae


def test_decay_constants_flags_slow_profile():
    # A0 = 1 + 1/sqrt(rho): rho |A0-1| = sqrt(rho) grows without bound
    slow = cg.AEProfile(
        a0=lambda rho: 1.0 + rho**-0.5,
        da0=lambda rho: -0.5 * rho**-1.5,
        d2a0=lambda rho: 0.75 * rho**-2.5,
    )
    rep = cg.ae_decay_constants(slow, max_order=0, rho_window=(1.0, 256.0))
    assert rep.non_ae


def test_decay_constants_narrow_window_rejected():
    with pytest.raises(ValueError, match="insufficient asymptotic range"):
        cg.ae_decay_constants(cg.schwarzschild_ae(1.0), rho_window=(8.0, 32.0))


def test_scaled_decay_constants_are_eps_times_unscaled():
    # substitution rho = r/eps scales every fitted constant by exactly eps
    ae = cg.bowen_york_ae(0.2, 0.5)
    window = (2.0, 64.0)
    base = cg.ae_decay_constants(ae, max_order=2, rho_window=window)
    eps = 0.03125
    sc = cg.scale_ae_data(ae, eps)
    scaled_prof = cg.AEProfile(
        a0=sc.a,
        da0=sc.da,
        d2a0=sc.d2a,
        m0=sc.m,
        dm0=sc.dm,
        rho_min=eps * window[0],
        rho_max=eps * window[1],
    )
    scaled = cg.ae_decay_constants(
        scaled_prof, max_order=2, rho_window=(eps * window[0], eps * window[1])
    )
    for a, b in zip(scaled.metric_sup, base.metric_sup):
        assert abs(a - eps * b) <= 1e-10 * max(abs(b), 1.0)
    for a, b in zip(scaled.curv_sup, base.curv_sup):
        assert abs(a - eps * b) <= 1e-10 * max(abs(b), 1.0)


def test_profile_file_roundtrip(tmp_path):
    ae = cg.bowen_york_ae(0.2, 0.5)
    rho = np.geomspace(1.0, 128.0, 800)
    path = tmp_path / "prof.txt"
    cg.save_ae_profile(path, rho, ae.a0(rho), ae.m0(rho))
    loaded = cg.load_ae_profile(path)
    mid = np.geomspace(2.0, 64.0, 33)
    assert_allclose(loaded.a0(mid), ae.a0(mid), rtol=1e-6)
    assert_allclose(loaded.m0(mid), ae.m0(mid), rtol=1e-6)
    assert loaded.rho_min == 1.0 and loaded.rho_max == 128.0


def test_profile_file_header_guard(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("1.0 2.0\n3.0 4.0\n")
    with pytest.raises(ValueError, match="ae-profile"):
        cg.load_ae_profile(path)


def test_background_constraint():
    # CMC slice: R = 2 Lambda - (2/3) tau^2 by construction
    m_side = cg.cosmological_background(0.3, tau=0.6)
    grid = cg.RadialGrid.make(0.2, 2.0, 65, "uniform")
    met = cg.RadialMetric(grid, "F", m_side.F(grid.r), deriv1=m_side.dF(grid.r), deriv2=m_side.d2F(grid.r))
    K = cg.CmcExtrinsicCurvature(0.6, cg.TraceFreeRadialTensor(grid, np.zeros(grid.n)))
    assert np.max(np.abs(cg.hamiltonian_residual(met, K, 0.3))) <= 1e-13
