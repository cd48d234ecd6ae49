"""Nonlinear conformal-factor equation on the glued data, its linearization
and quadratic remainder, a fixed-point (successive substitution) solver,
the conformal change of data, and symmetry diagnostics.

With h0 = Lambda/4 - tau^2/12 the operator, its linearization at 1, and
the remainder are

    N(phi)  = Lap phi - (R/8) phi + (1/8)|mu|^2 phi^-7 + h0 phi^5
    L eta   = Lap eta - (R/8) eta - (7/8)|mu|^2 eta + 5 h0 eta
    Q(eta)  = (1/8)|mu|^2 ((1+eta)^-7 - 1 + 7 eta) + h0 ((1+eta)^5 - 1 - 5 eta)

so that N(1 + eta) = N(1) + L eta + Q(eta) holds pointwise as an algebraic
identity (all three share one discrete Laplacian).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal

from .gluing import WeightFunction
from .norms import NormSpec, weighted_norm
from .radial import (
    CmcExtrinsicCurvature,
    RadialGrid,
    RadialMetric,
    RadialVectorField,
    TraceFreeRadialTensor,
    fd_derivative,
    laplace_beltrami_matrix,
    momentum_residual,
    scalar_curvature,
)


class PositivityError(ValueError):
    pass


class ContractionError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class LichnerowiczProblem:
    """Coefficient data for the conformal-factor equation on one annulus."""

    metric: RadialMetric
    mu_tilde: TraceFreeRadialTensor
    tau: float
    Lambda: float
    bc: tuple = (1.0, 1.0)

    @property
    def grid(self) -> RadialGrid:
        return self.metric.grid

    @property
    def h0(self) -> float:
        return self.Lambda / 4.0 - self.tau**2 / 12.0


@dataclass(frozen=True, eq=False)
class SolveReport:
    iterations: int
    contraction_ratios: tuple
    final_residual: float
    final_residual_weighted: float
    eta_norm: float
    eta: np.ndarray | None = None
    residual: np.ndarray | None = None


def _check_positive(phi: np.ndarray) -> None:
    if np.any(phi <= 0.0):
        raise PositivityError("conformal factor not positive")


def n_residual(p: LichnerowiczProblem, phi: np.ndarray, eta: np.ndarray | None = None) -> np.ndarray:
    """Pointwise nonlinear residual N(phi).

    The Laplacian acts on the deviation phi - 1 (identical analytically,
    since constants are annihilated) so the stiff 1/(r^2 h^2) rows cancel
    on a small quantity instead of an O(1) offset.  Callers that hold the
    deviation to full precision should pass it as ``eta``; recovering it
    from phi itself costs machine epsilon times the row magnitude.
    """
    _check_positive(phi)
    dev = (phi - 1.0) if eta is None else np.asarray(eta, dtype=float)
    lap = laplace_beltrami_matrix(p.metric) @ dev
    R = scalar_curvature(p.metric)
    musq = p.mu_tilde.modulus_sq()
    return lap - R / 8.0 * phi + musq / 8.0 * phi**-7.0 + p.h0 * phi**5


def linearized_coefficient(p: LichnerowiczProblem) -> np.ndarray:
    """Zeroth-order coefficient of the linearization at phi = 1."""
    R = scalar_curvature(p.metric)
    return -R / 8.0 - 7.0 / 8.0 * p.mu_tilde.modulus_sq() + 5.0 * p.h0


def linearized_matrix(p: LichnerowiczProblem) -> sp.csr_matrix:
    return (laplace_beltrami_matrix(p.metric) + sp.diags(linearized_coefficient(p))).tocsr()


def linearized_apply(p: LichnerowiczProblem, eta: np.ndarray) -> np.ndarray:
    # split evaluation: merging the diagonal into the stiff Laplacian rows
    # would round the zeroth-order part at the 1/h^2 scale
    return laplace_beltrami_matrix(p.metric) @ eta + linearized_coefficient(p) * eta


def q_remainder(p: LichnerowiczProblem, eta: np.ndarray) -> np.ndarray:
    """Quadratic remainder Q(eta) = N(1+eta) - N(1) - L eta; Q(0) = 0."""
    one = 1.0 + np.asarray(eta, dtype=float)
    if np.any(one <= 0.0):
        raise PositivityError("1 + eta must stay positive")
    musq = p.mu_tilde.modulus_sq()
    return musq / 8.0 * (one**-7.0 - 1.0 + 7.0 * eta) + p.h0 * (one**5 - 1.0 - 5.0 * eta)


def _equilibrated_lu(mat: sp.csr_matrix):
    scale = np.maximum(np.abs(mat).sum(axis=1).A1, 1e-300)
    lu = spla.splu((sp.diags(1.0 / scale) @ mat).tocsc())
    return lu, scale


def picard_solve(
    p: LichnerowiczProblem,
    nu: float,
    tol: float = 1e-8,
    max_iter: int = 80,
    weight: WeightFunction | None = None,
    eta0: np.ndarray | None = None,
):
    """Successive substitution eta <- -L^(-1)(N(1) + Q(eta)).

    Stops when the interior sup of N(1+eta) falls below ``tol`` (the two
    Dirichlet rows carry boundary data, not the operator).  Records the
    increment contraction ratios; three consecutive ratios >= 1 abort with
    a contraction failure.
    """
    grid = p.grid
    n = grid.n
    weight = weight or WeightFunction("r")
    mat = linearized_matrix(p).tolil()
    for i in (0, n - 1):
        mat.rows[i] = [i]
        mat.data[i] = [1.0]
    lu, scale = _equilibrated_lu(mat.tocsr())
    n1 = n_residual(p, np.ones(n))
    bc_eta = (p.bc[0] - 1.0, p.bc[1] - 1.0)

    eta = np.zeros(n) if eta0 is None else np.asarray(eta0, dtype=float).copy()
    spec = NormSpec(nu=nu - 1.0, k=0, tensor_type=(0, 0))
    ratios: list = []
    increments: list = []
    for it in range(1, max_iter + 1):
        b = -(n1 + q_remainder(p, eta))
        b[0], b[-1] = bc_eta
        eta_new = lu.solve(b / scale)
        inc = float(np.max(np.abs(eta_new - eta)))
        increments.append(inc)
        if len(increments) >= 2 and increments[-2] > 0.0:
            ratios.append(increments[-1] / increments[-2])
            if len(ratios) >= 3 and all(rr >= 1.0 for rr in ratios[-3:]):
                raise ContractionError("contraction failure: ratios >= 1")
        eta = eta_new
        resid = n_residual(p, 1.0 + eta, eta=eta)
        res_sup = float(np.max(np.abs(resid[1:-1])))
        if res_sup <= tol:
            phi = 1.0 + eta
            wr = weight(grid.r)
            res_w = float(np.max(wr[1:-1] ** (nu + 1.0) * np.abs(resid[1:-1])))
            eta_norm = weighted_norm(eta, p.metric, weight, spec)
            report = SolveReport(
                iterations=it,
                contraction_ratios=tuple(ratios),
                final_residual=res_sup,
                final_residual_weighted=res_w,
                eta_norm=eta_norm,
                eta=eta,
                residual=resid,
            )
            return phi, report
    raise ContractionError(f"no convergence within {max_iter} iterations")


# ---------------------------------------------------------------------------
# conformal change of the data
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TransformedData:
    """Data after g -> phi^4 g: areal radius r_hat = phi^2 r, the rr-profile
    in the new areal coordinate, and the extrinsic curvature in mixed
    components (values attached to the r_hat nodes)."""

    r_hat: np.ndarray
    a_hat: np.ndarray
    curvature: CmcExtrinsicCurvature
    phi: np.ndarray


def conformal_transform(p: LichnerowiczProblem, phi: np.ndarray) -> TransformedData:
    """Apply g -> phi^4 g, K -> phi^-2 mu + (tau/3) phi^4 g.

    In mixed components the trace-free part becomes phi^-6 m, so the mean
    curvature of the output equals tau identically.
    """
    _check_positive(phi)
    grid = p.grid
    r = grid.r
    a = p.metric.a()
    dphi = fd_derivative(phi, 1, grid)
    stretch = phi**2 + 2.0 * r * phi * dphi  # d(r_hat)/dr
    if np.any(stretch <= 0.0):
        raise PositivityError("conformal factor folds the areal radius")
    r_hat = phi**2 * r
    a_hat = phi**4 * a / stretch**2
    m_hat = phi**-6.0 * p.mu_tilde.m
    curv = CmcExtrinsicCurvature(p.tau, TraceFreeRadialTensor(grid, m_hat))
    return TransformedData(r_hat=r_hat, a_hat=a_hat, curvature=curv, phi=np.asarray(phi, dtype=float))


def transformed_hamiltonian_residual(
    p: LichnerowiczProblem, phi: np.ndarray, eta: np.ndarray | None = None
) -> np.ndarray:
    """Hamiltonian residual of the transformed data via the exact identity
    H(phi^4 g, ...) = -8 phi^-5 N(phi)."""
    return -8.0 * phi**-5.0 * n_residual(p, phi, eta=eta)


def transformed_momentum_residual(p: LichnerowiczProblem, phi: np.ndarray) -> np.ndarray:
    """Radial momentum residual of the transformed data via the exact scaling
    identity div_hat = phi^-8 (1 + 2 r phi'/phi)^(-1) div."""
    _check_positive(phi)
    grid = p.grid
    dphi = fd_derivative(phi, 1, grid)
    pref = phi**-8.0 / (1.0 + 2.0 * grid.r * dphi / phi)
    base = momentum_residual(p.metric, CmcExtrinsicCurvature(p.tau, p.mu_tilde))
    return pref * base


def resampled_constraint_residuals(p: LichnerowiczProblem, td: TransformedData, n: int | None = None) -> dict:
    """Re-discretized constraint residuals of the transformed data.

    Splines the transformed profiles onto a fresh log grid in the new areal
    radius and re-runs the finite-difference constraint operators.  Purely
    diagnostic: the values carry the interpolation and truncation error of
    the re-discretization, unlike the identity-based residuals.
    """
    n = n or p.grid.n
    r_hat, a_hat = td.r_hat, td.a_hat
    grid2 = RadialGrid.make(r_hat[2] * 1.0000001, r_hat[-3] * 0.9999999, n, "log")
    a_spl = CubicSpline(r_hat, a_hat)
    m_spl = CubicSpline(r_hat, td.curvature.mu.m)
    g2 = RadialMetric(grid2, "A", a_spl(grid2.r))
    K2 = CmcExtrinsicCurvature(p.tau, TraceFreeRadialTensor(grid2, m_spl(grid2.r)))
    from .radial import hamiltonian_residual

    ham = hamiltonian_residual(g2, K2, p.Lambda)
    mom = momentum_residual(g2, K2)
    sl = slice(2, -2)
    return {
        "hamiltonian_sup": float(np.max(np.abs(ham[sl]))),
        "momentum_sup": float(np.max(np.abs(mom[sl]))),
    }


# ---------------------------------------------------------------------------
# Killing initial-data residuals
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KidCandidate:
    """Candidate symmetry generator split into lapse part C and shift X."""

    C: np.ndarray | None = None
    X: RadialVectorField | None = None


def kid_residual(
    g: RadialMetric,
    K: CmcExtrinsicCurvature,
    lam: float,
    cand: KidCandidate,
) -> tuple:
    """Pointwise moduli of the two Killing initial-data equations.

    Equation one is -2 C K + Lie_X g; equation two is
    -Hess C + (Ric - 2 K^2 + tau K - Lambda g) C + Lie_X K.  Only the rr
    and tangential components are nontrivial in the radial sector; the
    returned profiles are the mixed-component moduli of each equation.
    """
    grid = g.grid
    r = grid.r
    a = g.a()
    da = g.a_deriv1()
    n = grid.n
    C = np.zeros(n) if cand.C is None else np.asarray(cand.C, dtype=float)
    u = np.zeros(n) if cand.X is None else cand.X.u
    dC = fd_derivative(C, 1, grid)
    d2C = fd_derivative(C, 2, grid)
    du = fd_derivative(u, 1, grid)
    tau = K.tau
    m = K.mu.m
    dm = K.mu.m_deriv1()

    k_rr = a * (tau / 3.0 + 2.0 * m)
    k_tt = r**2 * (tau / 3.0 - m)
    dk_rr = da * (tau / 3.0 + 2.0 * m) + a * 2.0 * dm
    dk_tt = 2.0 * r * (tau / 3.0 - m) - r**2 * dm

    e1_rr = -2.0 * C * k_rr + (da * u + 2.0 * a * du)
    e1_tt = -2.0 * C * k_tt + 2.0 * r * u

    ric_rr = da / (r * a)
    ric_tt = r * da / (2.0 * a**2) + 1.0 - 1.0 / a
    hess_rr = d2C - da / (2.0 * a) * dC
    hess_tt = r / a * dC
    e2_rr = (
        -hess_rr
        + (ric_rr - 2.0 * a * (tau / 3.0 + 2.0 * m) ** 2 + tau * k_rr - lam * a) * C
        + u * dk_rr
        + 2.0 * k_rr * du
    )
    e2_tt = (
        -hess_tt
        + (ric_tt - 2.0 * r**2 * (tau / 3.0 - m) ** 2 + tau * k_tt - lam * r**2) * C
        + u * dk_tt
    )

    e1 = np.sqrt((e1_rr / a) ** 2 + 2.0 * (e1_tt / r**2) ** 2)
    e2 = np.sqrt((e2_rr / a) ** 2 + 2.0 * (e2_tt / r**2) ** 2)
    return e1, e2


# ---------------------------------------------------------------------------
# injectivity-operator spectrum
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: tuple  # sorted by |.|, smallest first
    has_kernel: bool
    zero_tol: float


def _sl_spectrum(x: np.ndarray, p_nodes: np.ndarray, w_nodes: np.ndarray, V: np.ndarray, bc: tuple, n_eigs: int):
    """Symmetric finite-volume eigensolve of (1/w)(p C')' - V C on nodes x."""
    n = x.size
    dx = np.diff(x)
    p_face = 0.5 * (p_nodes[:-1] + p_nodes[1:])
    cell = np.empty(n)
    cell[0] = dx[0] / 2.0
    cell[-1] = dx[-1] / 2.0
    cell[1:-1] = 0.5 * (dx[:-1] + dx[1:])
    vol = w_nodes * cell

    keep = np.arange(n)
    if bc[0] == "dirichlet":
        keep = keep[1:]
    if bc[1] == "dirichlet":
        keep = keep[:-1]
    k0 = keep[0]
    m = keep.size

    diag = np.zeros(m)
    off = np.zeros(m - 1)
    for idx in range(m):
        i = idx + k0
        left = p_face[i - 1] / dx[i - 1] if i > 0 else 0.0
        right = p_face[i] / dx[i] if i < n - 1 else 0.0
        if i == k0 and bc[0] == "neumann":
            left = 0.0
        if i == keep[-1] and bc[1] == "neumann":
            right = 0.0
        diag[idx] = -(left + right) / vol[i] - V[i]
        if idx < m - 1:
            off[idx] = (p_face[i] / dx[i]) / np.sqrt(vol[i] * vol[i + 1])
    vals = eigh_tridiagonal(diag, off, eigvals_only=True)
    order = np.argsort(np.abs(vals))
    return vals[order][:n_eigs]


def injectivity_spectrum(
    g: RadialMetric,
    K: CmcExtrinsicCurvature,
    lam: float,
    bc: tuple = ("neumann", "neumann"),
    n_eigs: int = 6,
    zero_tol: float = 1e-4,
) -> SpectrumReport:
    """Smallest-|.| eigenvalues of Lap_g - (|K|^2 - Lambda) on radial functions.

    The operator is assembled in symmetric Sturm-Liouville form with
    p = r^2/sqrt(A) and weight sqrt(A) r^2; a near-zero eigenvalue flags a
    radial kernel candidate (the default threshold sits above the O(h^2)
    eigenvalue discretization error at desk resolutions).
    """
    grid = g.grid
    a = g.a()
    sqa = np.sqrt(a)
    V = (K.tau**2 / 3.0 + 6.0 * K.mu.m**2) - lam
    vals = _sl_spectrum(grid.r, grid.r**2 / sqa, sqa * grid.r**2, V, bc, n_eigs)
    return SpectrumReport(tuple(float(v) for v in vals), bool(abs(vals[0]) <= zero_tol), zero_tol)


def injectivity_spectrum_polar(
    rho_of_s,
    potential,
    s: np.ndarray,
    bc: tuple = ("neumann", "dirichlet"),
    n_eigs: int = 6,
    zero_tol: float = 1e-4,
) -> SpectrumReport:
    """Same eigensolve in arc-length parametrization ds^2 + rho(s)^2 dOmega^2.

    Used for closed round backgrounds whose areal-radius chart degenerates
    at the equator; rho(s) stays regular there.  ``potential`` is
    |K|^2 - Lambda as a callable of s or a constant.
    """
    s = np.asarray(s, dtype=float)
    rho = rho_of_s(s)
    V = potential(s) if callable(potential) else np.full_like(s, float(potential))
    vals = _sl_spectrum(s, rho**2, rho**2, V, bc, n_eigs)
    return SpectrumReport(tuple(float(v) for v in vals), bool(abs(vals[0]) <= zero_tol), zero_tol)
