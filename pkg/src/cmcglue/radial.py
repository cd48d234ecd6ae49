"""Radial grids and tensor calculus for spherically symmetric initial data.

Everything here operates on metrics of the form

    ds^2 = A(r) dr^2 + r^2 dOmega^2,      A = (1 - F)^(-1),

sampled on a one-dimensional grid with r > 0 (the origin is always
excluded).  Trace-free symmetric 2-tensors are stored through the single
radial profile m(r) of their mixed components (2m, -m, -m), which makes
trace-freeness structural rather than numerical.

Finite differences are second order: centered stencils on interior nodes
and one-sided second-order closures at the two boundary nodes.  Log-spaced
grids are differentiated in the uniform variable t = ln r and mapped back
through the chain rule, so the order is preserved.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp


class GridError(ValueError):
    pass


class DegenerateMetricError(ValueError):
    pass


# ---------------------------------------------------------------------------
# grids and finite differences
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Strictly increasing radial nodes, uniform in r or in ln r."""

    r: np.ndarray
    spacing: str = "uniform"  # 'uniform' | 'log'

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        object.__setattr__(self, "r", r)
        if r.ndim != 1 or r.size < 5:
            raise GridError("insufficient nodes")
        if r[0] <= 0.0:
            raise GridError("r_min must be positive")
        if np.any(np.diff(r) <= 0.0):
            raise GridError("nodes must be strictly increasing")
        if self.spacing not in ("uniform", "log"):
            raise GridError(f"unknown spacing tag {self.spacing!r}")
        t = r if self.spacing == "uniform" else np.log(r)
        dt = np.diff(t)
        if np.max(np.abs(dt - dt[0])) > 1e-8 * abs(dt[0]):
            raise GridError("nodes are not uniform in the declared coordinate")

    @classmethod
    def make(cls, rmin: float, rmax: float, n: int, spacing: str = "uniform") -> "RadialGrid":
        if not rmin < rmax:
            raise GridError("r_min < r_max required")
        if spacing == "log":
            r = np.exp(np.linspace(np.log(rmin), np.log(rmax), n))
        else:
            r = np.linspace(rmin, rmax, n)
        return cls(r=r, spacing=spacing)

    @property
    def n(self) -> int:
        return self.r.size

    @property
    def rmin(self) -> float:
        return float(self.r[0])

    @property
    def rmax(self) -> float:
        return float(self.r[-1])

    @property
    def t(self) -> np.ndarray:
        return self.r if self.spacing == "uniform" else np.log(self.r)

    @property
    def h(self) -> float:
        t = self.t
        return float((t[-1] - t[0]) / (t.size - 1))

    def refine(self) -> "RadialGrid":
        """Grid with 2n-1 nodes; the uniform-coordinate step exactly halves."""
        return RadialGrid.make(self.rmin, self.rmax, 2 * self.n - 1, self.spacing)


def _uniform_d1(n: int, h: float) -> sp.csr_matrix:
    m = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        m[i, i - 1] = -0.5 / h
        m[i, i + 1] = 0.5 / h
    m[0, 0], m[0, 1], m[0, 2] = -1.5 / h, 2.0 / h, -0.5 / h
    m[n - 1, n - 3], m[n - 1, n - 2], m[n - 1, n - 1] = 0.5 / h, -2.0 / h, 1.5 / h
    return m.tocsr()


def _uniform_d2(n: int, h: float) -> sp.csr_matrix:
    m = sp.lil_matrix((n, n))
    h2 = h * h
    for i in range(1, n - 1):
        m[i, i - 1] = 1.0 / h2
        m[i, i] = -2.0 / h2
        m[i, i + 1] = 1.0 / h2
    m[0, 0], m[0, 1], m[0, 2], m[0, 3] = 2.0 / h2, -5.0 / h2, 4.0 / h2, -1.0 / h2
    m[n - 1, n - 4], m[n - 1, n - 3], m[n - 1, n - 2], m[n - 1, n - 1] = (
        -1.0 / h2,
        4.0 / h2,
        -5.0 / h2,
        2.0 / h2,
    )
    return m.tocsr()


@lru_cache(maxsize=128)
def derivative_matrix(grid: RadialGrid, order: int) -> sp.csr_matrix:
    """Sparse d/dr or d^2/dr^2 on the grid nodes (second-order accurate)."""
    if order not in (1, 2):
        raise GridError("order must be 1 or 2")
    n, h = grid.n, grid.h
    d1t = _uniform_d1(n, h)
    if grid.spacing == "uniform":
        return d1t if order == 1 else _uniform_d2(n, h)
    # t = ln r:  f' = f_t / r,  f'' = (f_tt - f_t) / r^2
    inv_r = sp.diags(1.0 / grid.r)
    if order == 1:
        return (inv_r @ d1t).tocsr()
    d2t = _uniform_d2(n, h)
    inv_r2 = sp.diags(1.0 / grid.r**2)
    return (inv_r2 @ (d2t - d1t)).tocsr()


def fd_derivative(f: np.ndarray, order: int, grid: RadialGrid) -> np.ndarray:
    """First or second radial derivative of a node profile."""
    f = np.asarray(f, dtype=float)
    if f.shape != grid.r.shape:
        raise GridError("profile does not match grid")
    return derivative_matrix(grid, order) @ f


# ---------------------------------------------------------------------------
# field types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RadialMetric:
    """Spherically symmetric 3-metric, stored as an F- or A-profile.

    ``deriv1``/``deriv2`` optionally hold closed-form derivatives of the
    stored profile evaluated on the nodes; operators use them instead of
    finite differences whenever present.
    """

    grid: RadialGrid
    form: str  # 'F' | 'A'
    values: np.ndarray
    deriv1: np.ndarray | None = None
    deriv2: np.ndarray | None = None

    def __post_init__(self):
        if self.form not in ("F", "A"):
            raise ValueError(f"unknown metric form {self.form!r}")
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if self.form == "F":
            if np.any(v >= 1.0):
                raise DegenerateMetricError("metric degenerates: F >= 1 on grid")
        else:
            if np.any(v <= 0.0):
                raise DegenerateMetricError("degenerate metric: A <= 0 on grid")

    @property
    def has_analytic(self) -> bool:
        return self.deriv1 is not None

    def a(self) -> np.ndarray:
        return 1.0 / (1.0 - self.values) if self.form == "F" else self.values

    def f(self) -> np.ndarray:
        return self.values if self.form == "F" else 1.0 - 1.0 / self.values

    def f_deriv1(self) -> np.ndarray:
        if self.form == "F":
            if self.deriv1 is not None:
                return self.deriv1
            return fd_derivative(self.values, 1, self.grid)
        # F = 1 - 1/A
        da = self.a_deriv1()
        return da / self.a() ** 2

    def a_deriv1(self) -> np.ndarray:
        if self.form == "A":
            if self.deriv1 is not None:
                return self.deriv1
            return fd_derivative(self.values, 1, self.grid)
        # A = (1-F)^(-1)
        df = self.f_deriv1()
        return df * self.a() ** 2

    def a_deriv2(self) -> np.ndarray:
        if self.form == "A":
            if self.deriv2 is not None:
                return self.deriv2
            return fd_derivative(self.a(), 2, self.grid)
        if self.deriv2 is not None:
            a = self.a()
            return self.deriv2 * a**2 + 2.0 * self.f_deriv1() ** 2 * a**3
        return fd_derivative(self.a(), 2, self.grid)


def flat_metric(grid: RadialGrid) -> RadialMetric:
    z = np.zeros(grid.n)
    return RadialMetric(grid, "F", z, deriv1=z, deriv2=z)


@dataclass(frozen=True, eq=False)
class TraceFreeRadialTensor:
    """Trace-free symmetric radial 2-tensor via mixed components (2m,-m,-m).

    ``deriv1`` optionally holds the closed-form m'(r) on the nodes and
    ``div_analytic`` the fully simplified closed form of 2m' + 6m/r (for
    divergence-free constructions the latter is identically zero, which a
    float re-evaluation of the two terms cannot reproduce bitwise).
    """

    grid: RadialGrid
    m: np.ndarray
    deriv1: np.ndarray | None = None
    div_analytic: np.ndarray | None = None

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        object.__setattr__(self, "m", m)
        if not np.all(np.isfinite(m)):
            raise ValueError("non-finite tensor profile")

    def modulus_sq(self) -> np.ndarray:
        # |mu|^2_g = (2m)^2 + m^2 + m^2, independent of A in mixed components
        return 6.0 * self.m**2

    def trace(self, g: RadialMetric | None = None) -> np.ndarray:
        return 2.0 * self.m - self.m - self.m

    def m_deriv1(self) -> np.ndarray:
        if self.deriv1 is not None:
            return self.deriv1
        return fd_derivative(self.m, 1, self.grid)


@dataclass(frozen=True, eq=False)
class CmcExtrinsicCurvature:
    """K = mu + (tau/3) g with constant mean curvature tau."""

    tau: float
    mu: TraceFreeRadialTensor

    def trace(self, g: RadialMetric | None = None) -> np.ndarray:
        return self.tau + self.mu.trace(g)


@dataclass(frozen=True, eq=False)
class RadialVectorField:
    """X = u(r) d/dr."""

    grid: RadialGrid
    u: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        object.__setattr__(self, "u", u)
        if not np.all(np.isfinite(u)):
            raise ValueError("non-finite vector profile")


@dataclass(frozen=True, eq=False)
class DiagRadialTensor:
    """General diagonal radial (1,1)-tensor with mixed components (tr, tt, tt)."""

    grid: RadialGrid
    tr: np.ndarray
    tt: np.ndarray


# ---------------------------------------------------------------------------
# geometric operators
# ---------------------------------------------------------------------------


def scalar_curvature(g: RadialMetric) -> np.ndarray:
    """Scalar curvature R(g); reduces to 2(F + r F')/r^2 in the F-profile."""
    r = g.grid.r
    if g.form == "F":
        return 2.0 * (g.values + r * g.f_deriv1()) / r**2
    a = g.values
    return (2.0 / r**2) * (1.0 - 1.0 / a) + (2.0 / r) * g.a_deriv1() / a**2


def hamiltonian_residual(g: RadialMetric, K: CmcExtrinsicCurvature, lam: float) -> np.ndarray:
    """Pointwise R(g) - |mu|^2 + (2/3) tau^2 - 2 Lambda (CMC reduction)."""
    return scalar_curvature(g) - K.mu.modulus_sq() + (2.0 / 3.0) * K.tau**2 - 2.0 * lam


@lru_cache(maxsize=128)
def divergence_matrix(grid: RadialGrid) -> sp.csr_matrix:
    """Conservative divergence 2 m' + 6 m/r assembled as (2/r^3) d(r^3 m)/dr.

    The flux form is exact on the divergence-free profile m = c/r^3, so the
    discrete divergence of such seeds vanishes identically.
    """
    r3 = grid.r**3
    return (sp.diags(2.0 / r3) @ derivative_matrix(grid, 1) @ sp.diags(r3)).tocsr()


def momentum_residual(g: RadialMetric, K: CmcExtrinsicCurvature) -> np.ndarray:
    """Radial covector component of div_g mu (equals 2 m' + 6 m/r).

    Uses the tensor's simplified closed-form divergence when present, then
    its closed-form derivative, then the conservative finite-difference
    form.
    """
    mu = K.mu
    if mu.div_analytic is not None:
        return mu.div_analytic.copy()
    if mu.deriv1 is not None:
        return 2.0 * mu.deriv1 + 6.0 * mu.m / mu.grid.r
    return divergence_matrix(mu.grid) @ mu.m


@lru_cache(maxsize=128)
def _ck_matrix_cached(g: RadialMetric) -> sp.csr_matrix:
    grid = g.grid
    a = g.a()
    da = g.a_deriv1()
    d1 = derivative_matrix(grid, 1)
    return ((d1 + sp.diags(da / (2.0 * a) - 1.0 / grid.r)) / 3.0).tocsr()


def conformal_killing_matrix(g: RadialMetric) -> sp.csr_matrix:
    """Matrix taking u-nodes to the m-profile of the conformal Killing image."""
    return _ck_matrix_cached(g)


def conformal_killing_apply(g: RadialMetric, X: RadialVectorField) -> TraceFreeRadialTensor:
    """Trace-free symmetrized gradient of X = u d/dr.

    In mixed components the image has m = (u' + (A'/2A) u - u/r)/3; the
    output is trace-free by construction.
    """
    m = conformal_killing_matrix(g) @ X.u
    return TraceFreeRadialTensor(g.grid, m)


def vector_laplacian_apply(g: RadialMetric, X: RadialVectorField) -> RadialVectorField:
    """L X = -(div (CK X))^sharp expanded into a single second-order operator."""
    grid = g.grid
    r = grid.r
    a = g.a()
    da = g.a_deriv1()
    d2a = g.a_deriv2()
    u = X.u
    du = fd_derivative(u, 1, grid)
    d2u = fd_derivative(u, 2, grid)
    la = da / a
    coeff0 = (d2a / a - la**2) / 3.0 - 4.0 / (3.0 * r**2) + la / r
    out = -(2.0 / 3.0 * d2u + (la / 3.0 + 4.0 / (3.0 * r)) * du + coeff0 * u) / a
    return RadialVectorField(grid, out)


def vector_laplacian_chained(g: RadialMetric, X: RadialVectorField) -> RadialVectorField:
    """Same operator evaluated by chaining divergence after the Killing map."""
    m = conformal_killing_matrix(g) @ X.u
    div = divergence_matrix(g.grid) @ m
    return RadialVectorField(g.grid, -div / g.a())


@lru_cache(maxsize=128)
def vector_laplacian_matrix(g: RadialMetric) -> sp.csr_matrix:
    """Chained discrete vector Laplacian as a sparse matrix on u-nodes."""
    return (
        sp.diags(-1.0 / g.a()) @ divergence_matrix(g.grid) @ conformal_killing_matrix(g)
    ).tocsr()


@lru_cache(maxsize=128)
def laplace_beltrami_matrix(g: RadialMetric) -> sp.csr_matrix:
    """Scalar Laplacian (1/A)[d2 + (2/r - A'/(2A)) d1] on node profiles."""
    grid = g.grid
    a = g.a()
    da = g.a_deriv1()
    d1 = derivative_matrix(grid, 1)
    d2 = derivative_matrix(grid, 2)
    op = d2 + sp.diags(2.0 / grid.r - da / (2.0 * a)) @ d1
    return (sp.diags(1.0 / a) @ op).tocsr()


def laplace_beltrami_apply(g: RadialMetric, f: np.ndarray) -> np.ndarray:
    return laplace_beltrami_matrix(g) @ f


# ---------------------------------------------------------------------------
# pointwise covariant moduli |nabla^j T|_g  (used by the weighted norms)
# ---------------------------------------------------------------------------


def _diag_gradient_modulus(tr, tt, g: RadialMetric) -> np.ndarray:
    grid = g.grid
    a = g.a()
    dtr = fd_derivative(tr, 1, grid)
    dtt = fd_derivative(tt, 1, grid)
    return np.sqrt((dtr**2 + 2.0 * dtt**2 + 4.0 * (tr - tt) ** 2 / grid.r**2) / a)


def covariant_modulus(T, g: RadialMetric, order: int) -> np.ndarray:
    """Pointwise |nabla^j T|_g for scalars, radial vectors, and diagonal tensors.

    Supported depths: j <= 2 for scalars and vectors, j <= 1 for 2-tensors.
    """
    grid = g.grid
    r = grid.r
    a = g.a()
    if isinstance(T, np.ndarray):
        f = T
        if order == 0:
            return np.abs(f)
        df = fd_derivative(f, 1, grid)
        if order == 1:
            return np.abs(df) / np.sqrt(a)
        if order == 2:
            da = g.a_deriv1()
            d2f = fd_derivative(f, 2, grid)
            hess_r = (d2f - da / (2.0 * a) * df) / a
            hess_t = df / (r * a)
            return np.sqrt(hess_r**2 + 2.0 * hess_t**2)
        raise NotImplementedError("scalar moduli implemented for j <= 2")
    if isinstance(T, RadialVectorField):
        u = T.u
        if order == 0:
            return np.sqrt(a) * np.abs(u)
        da = g.a_deriv1()
        s_r = fd_derivative(u, 1, grid) + da / (2.0 * a) * u
        s_t = u / r
        if order == 1:
            return np.sqrt(s_r**2 + 2.0 * s_t**2)
        if order == 2:
            return _diag_gradient_modulus(s_r, s_t, g)
        raise NotImplementedError("vector moduli implemented for j <= 2")
    if isinstance(T, TraceFreeRadialTensor):
        if order == 0:
            return np.sqrt(T.modulus_sq())
        if order == 1:
            dm = T.m_deriv1()
            return np.sqrt((6.0 * dm**2 + 36.0 * T.m**2 / r**2) / a)
        raise NotImplementedError("2-tensor moduli implemented for j <= 1")
    if isinstance(T, DiagRadialTensor):
        if order == 0:
            return np.sqrt(T.tr**2 + 2.0 * T.tt**2)
        if order == 1:
            return _diag_gradient_modulus(T.tr, T.tt, g)
        raise NotImplementedError("2-tensor moduli implemented for j <= 1")
    raise TypeError(f"unsupported field type {type(T).__name__}")
