"""Mode blocks of the flat vector Laplacian, kernel catalogue, boundary-value
solves, and the momentum repair."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

import cmcglue as cg
from cmcglue.modes import (
    KernelFamilyTag,
    ModeError,
    ModeIndex,
    ModeVectorField,
    apply_flat_mode,
    kernel_mode,
    kernel_profile_degrees,
    solve_mode_bvp,
)

ALL_TAGS = [
    KernelFamilyTag(g, f)
    for g in ("at-infinity", "at-origin")
    for f in ("radial-special", "V-coupled-a", "V-coupled-b", "W")
]


def uniform(n, lo=1.0, hi=2.0):
    return cg.RadialGrid.make(lo, hi, n, "uniform")


def mode_residual(tag, l, grid):
    mode = kernel_mode(tag, ModeIndex(l, 0), grid)
    out = apply_flat_mode(mode, grid)
    parts = [out.u] + [p for p in (out.v, out.w) if p is not None]
    return max(float(np.max(np.abs(p))) for p in parts)


def test_mode_index_validation():
    with pytest.raises(ModeError):
        ModeIndex(1, 2)
    with pytest.raises(ModeError):
        ModeIndex(-1, 0)
    assert ModeIndex(3, -2).lam == 12.0


def test_l0_rejects_angular_profiles():
    g = uniform(64)
    with pytest.raises(ModeError, match="undefined angular mode"):
        ModeVectorField(ModeIndex(0, 0), np.zeros(g.n), v=np.zeros(g.n))


def test_dilation_field_in_kernel():
    g = uniform(256)
    out = apply_flat_mode(ModeVectorField(ModeIndex(0, 0), g.r.copy()), g)
    assert np.max(np.abs(out.u)) <= 1e-10


def test_quadratic_radial_profile():
    g = uniform(256)
    out = apply_flat_mode(ModeVectorField(ModeIndex(0, 0), g.r**2), g)
    assert_allclose(out.u, -8.0 / 3.0, rtol=1e-7)


def test_l2_coupled_kernel_example():
    # u = sqrt(6) r, v = 3 sits in the coupled kernel family at l = 2
    g = uniform(128)
    out = apply_flat_mode(
        ModeVectorField(ModeIndex(2, 0), np.sqrt(6.0) * g.r, v=np.full(g.n, 3.0)), g
    )
    assert np.max(np.abs(out.u)) <= 1e-10
    assert np.max(np.abs(out.v)) <= 1e-10


def test_w_line_linear_profile_l2():
    # w = r at l = 2: -(2r + (1 - 3) r) = 0 by hand
    g = uniform(128)
    out = apply_flat_mode(
        ModeVectorField(ModeIndex(2, 0), np.zeros(g.n), v=np.zeros(g.n), w=g.r.copy()), g
    )
    assert np.max(np.abs(out.w)) <= 1e-10


def test_kernel_catalogue_shapes():
    g = uniform(64)
    m = kernel_mode(KernelFamilyTag("at-origin", "W"), ModeIndex(1, 0), g)
    assert_allclose(m.w, g.r**-3.0)
    m = kernel_mode(KernelFamilyTag("at-origin", "radial-special"), ModeIndex(0, 0), g)
    assert_allclose(m.u, g.r**-2.0)
    m = kernel_mode(KernelFamilyTag("at-infinity", "V-coupled-b"), ModeIndex(2, 0), g)
    assert_allclose(m.u, np.sqrt(6.0) * g.r)
    assert_allclose(m.v, 3.0 * np.ones(g.n))


def test_kernel_catalogue_requires_l_ge_1():
    g = uniform(64)
    with pytest.raises(ModeError, match="l >= 1"):
        kernel_mode(KernelFamilyTag("at-infinity", "W"), ModeIndex(0, 0), g)


@pytest.mark.parametrize("tag", ALL_TAGS, ids=lambda t: f"{t.growth}-{t.family}")
def test_kernel_annihilation(tag):
    ls = [1] if tag.family == "radial-special" else [1, 2, 3, 4]
    for l in ls:
        errs = [mode_residual(tag, l, uniform(n)) for n in (256, 512)]
        degs = kernel_profile_degrees(tag, l)
        if all(0 <= d <= 2 for d in degs):
            # stencils exact on quadratics: only the h^-2 roundoff envelope
            g = uniform(512)
            scale = max(np.max(np.abs(kernel_mode(tag, ModeIndex(l, 0), g).u)), 1.0)
            assert errs[1] <= 200.0 * np.finfo(float).eps * scale / g.h**2
        else:
            assert np.log2(errs[0] / errs[1]) >= 1.8


def test_block_structure_is_decoupled():
    # the w-line never feels (u, v) and vice versa
    g = uniform(64)
    rng = np.random.default_rng(2)
    u, v, w = rng.normal(size=(3, g.n))
    a = apply_flat_mode(ModeVectorField(ModeIndex(2, 0), u, v=v, w=w), g)
    b = apply_flat_mode(ModeVectorField(ModeIndex(2, 0), u, v=v, w=2.0 * w), g)
    assert_allclose(a.u, b.u, rtol=0)
    assert_allclose(a.v, b.v, rtol=0)
    assert_allclose(2.0 * a.w, b.w, rtol=0)


# ---------------------------------------------------------------------------
# boundary-value solves
# ---------------------------------------------------------------------------


def test_bvp_manufactured_quadratic():
    g = uniform(257)
    rhs = ModeVectorField(ModeIndex(0, 0), np.full(g.n, -8.0 / 3.0))
    sol = solve_mode_bvp(ModeIndex(0, 0), rhs, {"u": (g.rmin**2, g.rmax**2)}, g)
    assert_allclose(sol.u, g.r**2, rtol=1e-9)


def test_bvp_kernel_data_reproduced_exactly():
    g = uniform(257)
    rhs = ModeVectorField(ModeIndex(0, 0), np.zeros(g.n))
    sol = solve_mode_bvp(ModeIndex(0, 0), rhs, {"u": (g.rmin, g.rmax)}, g)
    assert_allclose(sol.u, g.r, rtol=0, atol=1e-11)


def test_bvp_coupled_kernel_family():
    # boundary data sampled from the coupled at-origin family reproduce it
    errs = []
    for n in (129, 257):
        g = uniform(n)
        fam = kernel_mode(KernelFamilyTag("at-origin", "V-coupled-b"), ModeIndex(2, 0), g)
        rhs = ModeVectorField(ModeIndex(2, 0), np.zeros(g.n), v=np.zeros(g.n))
        bc = {"u": (fam.u[0], fam.u[-1]), "v": (fam.v[0], fam.v[-1])}
        sol = solve_mode_bvp(ModeIndex(2, 0), rhs, bc, g)
        errs.append(max(np.max(np.abs(sol.u - fam.u)), np.max(np.abs(sol.v - fam.v))))
    assert errs[1] <= 1e-4
    assert np.log2(errs[0] / errs[1]) >= 1.8


def test_bvp_w_component():
    g = uniform(257)
    fam = kernel_mode(KernelFamilyTag("at-infinity", "W"), ModeIndex(3, 0), g)
    rhs = ModeVectorField(ModeIndex(3, 0), np.zeros(g.n), v=np.zeros(g.n), w=np.zeros(g.n))
    bc = {"u": (0.0, 0.0), "v": (0.0, 0.0), "w": (fam.w[0], fam.w[-1])}
    sol = solve_mode_bvp(ModeIndex(3, 0), rhs, bc, g)
    assert_allclose(sol.w, fam.w, rtol=0, atol=1e-10 * np.max(np.abs(fam.w)))


def test_bvp_residual_relative():
    # the discrete operator applied to the solution reproduces the rhs
    g = uniform(257)
    rng = np.random.default_rng(9)
    rhs_u = rng.normal(size=g.n)
    rhs = ModeVectorField(ModeIndex(0, 0), rhs_u)
    sol = solve_mode_bvp(ModeIndex(0, 0), rhs, {"u": (0.0, 0.0)}, g)
    back = apply_flat_mode(sol, g)
    resid = np.max(np.abs(back.u[1:-1] - rhs_u[1:-1]))
    assert resid <= 1e-10 * np.max(np.abs(rhs_u))


# ---------------------------------------------------------------------------
# momentum repair
# ---------------------------------------------------------------------------


def make_glued(eps=2.0**-6, c=0.5):
    C = 2.0
    grid = cg.RadialGrid.make(C * eps / 2.0, 3.0, 1024, "log")
    cfg = cg.GluingConfig(C=C, epsilon=eps, nu=1.75, grid=grid)
    return cg.build_glued_data(cfg, cg.cosmological_background(0.2), cg.bowen_york_ae(0.2, c))


def test_repair_trivial_source():
    # both sides divergence-free with no seed: X = 0 and mu unchanged
    glued = make_glued(c=0.0)
    rep = cg.repair_momentum(glued)
    assert np.all(rep.X.u == 0.0)
    assert np.all(rep.mu_tilde.m == glued.mu.m)


def test_repair_kills_divergence():
    glued = make_glued()
    rep = cg.repair_momentum(glued)
    assert rep.report["div_ratio"] <= 1e-8
    assert rep.report["div_sup_before"] > 1.0
    assert rep.report["pivot_condition_estimate"] >= 1.0
    # repaired tensor is still trace-free by construction
    assert np.max(np.abs(rep.mu_tilde.trace())) <= 1e-14


def test_repair_operator_flat_limit():
    # on flat data the repair operator matrix reduces to the l = 0 block
    from cmcglue.radial import flat_metric, vector_laplacian_matrix

    errs = []
    for n in (201, 401):
        g = uniform(n, 0.5, 2.0)
        fm = flat_metric(g)
        u = np.sin(g.r)
        chained = vector_laplacian_matrix(fm) @ u
        block = apply_flat_mode(ModeVectorField(ModeIndex(0, 0), u), g)
        errs.append(np.max(np.abs(chained - block.u)[2:-2]))
    assert np.log2(errs[0] / errs[1]) >= 1.8
