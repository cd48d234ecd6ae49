"""Closed-form model data: black-hole and cosmological radial profiles,
asymptotically Euclidean (AE) seed families, the shrink-scaling map, and
asymptotic-decay diagnostics.

The built-in AE family

    F0(rho) = 2M/rho - c^2/rho^4,      m0(rho) = c/rho^3

solves both vacuum constraints exactly with zero mean curvature: the
momentum constraint because c/rho^3 is divergence-free in any radial
metric, the Hamiltonian one because (rho F0)' = 3 c^2 / rho^4 integrates
the curvature sourced by |mu|^2 = 6 m0^2.  c = 0 is Schwarzschild.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .radial import (
    DegenerateMetricError,
    RadialGrid,
    RadialMetric,
    TraceFreeRadialTensor,
)

AE_PROFILE_HEADER = "# ae-profile v1"


class ProfileRangeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# closed-form cosmological / black-hole family
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SdSParams:
    """Mass M, cosmological constant, and shrink parameter epsilon."""

    M: float = 1.0
    Lambda: float = 3.0
    epsilon: float = 1.0

    def __post_init__(self):
        if self.M < 0.0:
            raise ValueError("M must be nonnegative")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in (0, 1]")


def sds_F(p: SdSParams, r):
    """F(r) = (Lambda/3) r^2 + 2 M eps / r (general solution of F + rF' = Lambda r^2)."""
    r = np.asarray(r, dtype=float)
    return p.Lambda / 3.0 * r**2 + 2.0 * p.M * p.epsilon / r


def sds_dF(p: SdSParams, r):
    r = np.asarray(r, dtype=float)
    return 2.0 * p.Lambda / 3.0 * r - 2.0 * p.M * p.epsilon / r**2


def sds_d2F(p: SdSParams, r):
    r = np.asarray(r, dtype=float)
    return 2.0 * p.Lambda / 3.0 + 4.0 * p.M * p.epsilon / r**3


def sds_profile(p: SdSParams, grid: RadialGrid) -> RadialMetric:
    """F-form metric with closed-form derivatives; rejects horizon crossings."""
    f = sds_F(p, grid.r)
    if np.any(f >= 1.0):
        raise DegenerateMetricError("metric degenerates: 1 - F changes sign on grid")
    return RadialMetric(grid, "F", f, deriv1=sds_dF(p, grid.r), deriv2=sds_d2F(p, grid.r))


def ode_residual(g: RadialMetric, lam: float) -> np.ndarray:
    """Pointwise F + r F' - Lambda r^2 for an F-form metric."""
    if g.form != "F":
        raise ValueError("ode_residual expects an F-form metric")
    r = g.grid.r
    return g.values + r * g.f_deriv1() - lam * r**2


# ---------------------------------------------------------------------------
# background (large-scale) side of the gluing
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MSideModel:
    """Background data near the gluing point: F-profile callables, the
    trace-free curvature profile (zero in the regular radial sector), and
    the constants tau, Lambda."""

    F: Callable
    dF: Callable
    d2F: Callable
    mu_m: Callable
    dmu_m: Callable
    div_mu_m: Callable | None = None  # simplified 2 m' + 6 m/r; zero profile when mu is divergence-free
    tau: float = 0.0
    Lambda: float = 0.0


def _zero_profile(r):
    return np.zeros_like(np.asarray(r, dtype=float))


def cosmological_background(Lambda: float, tau: float = 0.0) -> MSideModel:
    """CMC slice with R = 2 Lambda - (2/3) tau^2, i.e. F = (Lambda_eff/3) r^2.

    The only trace-free divergence-free radial tensor regular at the center
    is zero, so mu vanishes on this side.
    """
    lam_eff = Lambda - tau**2 / 3.0
    F = lambda r: lam_eff / 3.0 * np.asarray(r, dtype=float) ** 2
    dF = lambda r: 2.0 * lam_eff / 3.0 * np.asarray(r, dtype=float)
    d2F = lambda r: np.full_like(np.asarray(r, dtype=float), 2.0 * lam_eff / 3.0)
    return MSideModel(
        F=F, dF=dF, d2F=d2F,
        mu_m=_zero_profile, dmu_m=_zero_profile, div_mu_m=_zero_profile,
        tau=tau, Lambda=Lambda,
    )


def flat_background() -> MSideModel:
    return MSideModel(
        F=_zero_profile,
        dF=_zero_profile,
        d2F=_zero_profile,
        mu_m=_zero_profile,
        dmu_m=_zero_profile,
        div_mu_m=_zero_profile,
    )


# ---------------------------------------------------------------------------
# AE seed profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AEProfile:
    """AE end data as radial callables in the end coordinate rho.

    ``a0`` is the rr metric profile with a0 -> 1 at infinity; ``m0`` (may be
    None) is the mixed trace-free profile of the zero-mean-curvature
    extrinsic curvature.  ``rho_min``/``rho_max`` bound the validity range;
    closed-form profiles use an unbounded upper range.
    """

    a0: Callable
    da0: Callable
    d2a0: Callable
    m0: Callable | None = None
    dm0: Callable | None = None
    div_m0: Callable | None = None  # simplified 2 m0' + 6 m0/rho; zero profile for divergence-free seeds
    rho_min: float = 0.0
    rho_max: float = np.inf
    label: str = "ae"

    def check_range(self, rho) -> None:
        rho = np.asarray(rho, dtype=float)
        if rho.min() < self.rho_min or rho.max() > self.rho_max:
            raise ProfileRangeError(
                f"AE profile range exceeded: need [{rho.min():.4g}, {rho.max():.4g}], "
                f"have [{self.rho_min:.4g}, {self.rho_max:.4g}]"
            )


def flat_ae() -> AEProfile:
    one = lambda rho: np.ones_like(np.asarray(rho, dtype=float))
    zero = lambda rho: np.zeros_like(np.asarray(rho, dtype=float))
    return AEProfile(a0=one, da0=zero, d2a0=zero, label="flat")


def _ae_from_F(F, dF, d2F, m0, dm0, rho_min, label, div_m0=None) -> AEProfile:
    def a0(rho):
        f = F(np.asarray(rho, dtype=float))
        return 1.0 / (1.0 - f)

    def da0(rho):
        rho = np.asarray(rho, dtype=float)
        a = a0(rho)
        return dF(rho) * a**2

    def d2a0(rho):
        rho = np.asarray(rho, dtype=float)
        a = a0(rho)
        return d2F(rho) * a**2 + 2.0 * dF(rho) ** 2 * a**3

    return AEProfile(a0=a0, da0=da0, d2a0=d2a0, m0=m0, dm0=dm0, div_m0=div_m0, rho_min=rho_min, label=label)


def schwarzschild_ae(M: float) -> AEProfile:
    """Time-symmetric Schwarzschild end: A0 = (1 - 2M/rho)^(-1)."""
    F = lambda rho: 2.0 * M / rho
    dF = lambda rho: -2.0 * M / rho**2
    d2F = lambda rho: 4.0 * M / rho**3
    return _ae_from_F(F, dF, d2F, None, None, rho_min=2.0 * M * 1.0000001, label="schwarzschild")


def bowen_york_ae(M: float, c: float) -> AEProfile:
    """Exact AE solution carrying the divergence-free seed m0 = c/rho^3."""
    F = lambda rho: 2.0 * M / rho - c**2 / rho**4
    dF = lambda rho: -2.0 * M / rho**2 + 4.0 * c**2 / rho**5
    d2F = lambda rho: 4.0 * M / rho**3 - 20.0 * c**2 / rho**6
    m0 = lambda rho: c / np.asarray(rho, dtype=float) ** 3
    dm0 = lambda rho: -3.0 * c / np.asarray(rho, dtype=float) ** 4
    # horizon guard: scan for sign changes of 1 - F (often none, the c-term
    # pushes F down near the origin)
    probe = np.geomspace(1e-3, max(8.0 * M + 4.0, 10.0), 8192)
    bad = probe[F(probe) >= 1.0]
    rho_min = float(bad.max()) * 1.02 if bad.size else 1e-3
    # the seed is divergence-free in closed form: 2(-3c/rho^4) + 6(c/rho^3)/rho = 0
    return _ae_from_F(F, dF, d2F, m0, dm0, rho_min=rho_min, label="bowen-york", div_m0=_zero_profile)


def bowen_york_mu(c: float, grid: RadialGrid) -> TraceFreeRadialTensor:
    """Divergence-free seed m = c/r^3 with its closed-form derivative."""
    r = grid.r
    return TraceFreeRadialTensor(grid, c / r**3, deriv1=-3.0 * c / r**4)


# ---------------------------------------------------------------------------
# profile file format:  "# ae-profile v1"  then columns  rho A0 [m0]
# ---------------------------------------------------------------------------


def save_ae_profile(path, rho: np.ndarray, a0: np.ndarray, m0: np.ndarray | None = None) -> None:
    rho = np.asarray(rho, dtype=float)
    if np.any(np.diff(rho) <= 0):
        raise ValueError("monotone rho required")
    cols = [rho, np.asarray(a0, dtype=float)]
    if m0 is not None:
        cols.append(np.asarray(m0, dtype=float))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(AE_PROFILE_HEADER + "\n")
        for row in zip(*cols):
            fh.write(" ".join(format(x, ".17g") for x in row) + "\n")


def load_ae_profile(path) -> AEProfile:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != AE_PROFILE_HEADER:
            raise ValueError(f"not an ae-profile file: {path}")
        data = np.loadtxt(fh)
    if data.ndim != 2 or data.shape[1] not in (2, 3):
        raise ValueError("ae-profile needs 2 or 3 columns")
    rho = data[:, 0]
    if np.any(np.diff(rho) <= 0):
        raise ValueError("monotone rho required")
    a_spl = CubicSpline(rho, data[:, 1])
    m_spl = CubicSpline(rho, data[:, 2]) if data.shape[1] == 3 else None
    return AEProfile(
        a0=a_spl,
        da0=a_spl.derivative(1),
        d2a0=a_spl.derivative(2),
        m0=m_spl,
        dm0=m_spl.derivative(1) if m_spl is not None else None,
        rho_min=float(rho[0]),
        rho_max=float(rho[-1]),
        label=path.name,
    )


# ---------------------------------------------------------------------------
# shrink scaling  r = eps * rho
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ScaledAE:
    """The AE data scaled into the gluing coordinate r = eps * rho.

    The metric profile transports as A(r) = A0(r/eps).  In mixed components
    the scaled extrinsic curvature picks up 1/eps: m(r) = m0(r/eps)/eps
    (its coordinate components then satisfy the expected eps/rho^2 decay
    and the scaled tensor stays divergence-free).
    """

    ae: AEProfile
    epsilon: float

    def _rho(self, r):
        rho = np.asarray(r, dtype=float) / self.epsilon
        self.ae.check_range(rho)
        return rho

    def a(self, r):
        return self.ae.a0(self._rho(r))

    def da(self, r):
        return self.ae.da0(self._rho(r)) / self.epsilon

    def d2a(self, r):
        return self.ae.d2a0(self._rho(r)) / self.epsilon**2

    def m(self, r):
        if self.ae.m0 is None:
            return np.zeros_like(np.asarray(r, dtype=float))
        return self.ae.m0(self._rho(r)) / self.epsilon

    def dm(self, r):
        if self.ae.dm0 is None:
            return np.zeros_like(np.asarray(r, dtype=float))
        return self.ae.dm0(self._rho(r)) / self.epsilon**2

    def div_m(self, r):
        """Scaled divergence (1/eps^2) (2 m0' + 6 m0/rho) at rho = r/eps."""
        r = np.asarray(r, dtype=float)
        if self.ae.m0 is None:
            return np.zeros_like(r)
        if self.ae.div_m0 is not None:
            return self.ae.div_m0(self._rho(r)) / self.epsilon**2
        rho = self._rho(r)
        return (2.0 * self.ae.dm0(rho) + 6.0 * self.ae.m0(rho) / rho) / self.epsilon**2


def scale_ae_data(ae: AEProfile, epsilon: float) -> ScaledAE:
    if not 0.0 < epsilon <= 1.0:
        raise ValueError("epsilon must lie in (0, 1]")
    return ScaledAE(ae=ae, epsilon=epsilon)


# ---------------------------------------------------------------------------
# decay diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayReport:
    """Fitted decay constants for one AE profile.

    ``metric_sup[j]`` is sup over the window of rho^(j+1) |d^j (A0 - 1)|
    (j = 0 uses A0 - 1 itself); ``metric_tail[j]`` takes the sup over the
    last octave only, which converges to the sharp constant as the window
    grows.  ``curv_*`` are the analogous rho^(j+2)-weighted constants for
    m0 when present.  ``non_ae`` flags windows where the running sup keeps
    growing, i.e. the profile does not belong to the 1/rho decay class.
    """

    rho_window: tuple
    metric_sup: tuple
    metric_tail: tuple
    curv_sup: tuple = ()
    curv_tail: tuple = ()
    non_ae: bool = False


def _window_constants(rho, weighted):
    sup = float(np.max(weighted))
    tail = float(np.max(weighted[rho >= rho[-1] / 2.0]))
    # running sup over octave blocks; monotone growth marks a non-AE profile
    edges = np.geomspace(rho[0], rho[-1], 9)
    blocks = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = (rho >= lo) & (rho <= hi)
        if np.any(mask):
            blocks.append(np.max(weighted[mask]))
    growing = all(b2 > b1 * 1.05 for b1, b2 in zip(blocks[:-1], blocks[1:])) if len(blocks) > 2 else False
    return sup, tail, growing


def ae_decay_constants(
    ae: AEProfile,
    max_order: int = 2,
    rho_window: tuple | None = None,
    n_samples: int = 4096,
) -> DecayReport:
    """Measure the pointwise decay constants of an AE profile.

    Requires a window with rho_max/rho_min >= 8 so the tail constants mean
    something; raises otherwise.
    """
    if rho_window is None:
        lo = max(ae.rho_min, 1e-8) if np.isfinite(ae.rho_min) and ae.rho_min > 0 else 1.0
        hi = ae.rho_max if np.isfinite(ae.rho_max) else 64.0 * max(lo, 1.0)
        rho_window = (lo, hi)
    lo, hi = rho_window
    if hi / lo < 8.0:
        raise ValueError("insufficient asymptotic range: need rho_max/rho_min >= 8")
    ae.check_range(np.array([lo, hi]))
    rho = np.geomspace(lo, hi, n_samples)
    metric_sup, metric_tail = [], []
    non_ae = False
    derivs = [lambda x: ae.a0(x) - 1.0, ae.da0, ae.d2a0]
    for j in range(min(max_order, 2) + 1):
        weighted = rho ** (j + 1) * np.abs(derivs[j](rho))
        s, t, growing = _window_constants(rho, weighted)
        metric_sup.append(s)
        metric_tail.append(t)
        non_ae = non_ae or growing
    curv_sup, curv_tail = [], []
    if ae.m0 is not None:
        cders = [ae.m0, ae.dm0]
        for j in range(min(max_order, 1) + 1):
            if cders[j] is None:
                break
            weighted = rho ** (j + 2) * np.abs(cders[j](rho))
            s, t, growing = _window_constants(rho, weighted)
            curv_sup.append(s)
            curv_tail.append(t)
            non_ae = non_ae or growing
    return DecayReport(
        rho_window=(float(lo), float(hi)),
        metric_sup=tuple(metric_sup),
        metric_tail=tuple(metric_tail),
        curv_sup=tuple(curv_sup),
        curv_tail=tuple(curv_tail),
        non_ae=non_ae,
    )
