"""Cutoffs, weight functions, and the approximate glued data.

The glued family lives on a radial patch covering the neck annulus.  The
metric blends the shrunk AE profile into the background over
sqrt(eps) <= r <= 4 sqrt(eps); the trace-free curvature is killed on that
band and matches the shrunk seed below sqrt(eps)/2 and the background
tensor above 8 sqrt(eps).  Outside the blend bands the sources are copied
verbatim, never re-evaluated through the blend, so exact matching holds
bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .models import AEProfile, MSideModel, ScaledAE, scale_ae_data
from .radial import RadialGrid, RadialMetric, TraceFreeRadialTensor


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# smooth cutoff: identically 1 below 1, identically 0 above 4
# ---------------------------------------------------------------------------


def _stable_logistic(g: np.ndarray) -> np.ndarray:
    # 1/(1+e^g) without overflow for large |g|
    out = np.empty_like(g)
    pos = g > 0
    eg = np.exp(-g[pos])
    out[pos] = eg / (1.0 + eg)
    out[~pos] = 1.0 / (1.0 + np.exp(g[~pos]))
    return out


@dataclass(frozen=True)
class Cutoff:
    """Decreasing C^inf cutoff chi with chi = 1 on (-inf,1], chi = 0 on [4,inf).

    chi(s) = 1/(1 + exp(g(s))), g(s) = 3/(4-s) - 3/(s-1); symmetric about
    s = 2.5.  Derivatives up to ``smoothness`` are closed-form; they all
    vanish identically outside (1, 4).
    """

    smoothness: int = 4

    def __call__(self, s, deriv: int = 0):
        if deriv > self.smoothness:
            raise ValueError(f"derivative order {deriv} exceeds declared smoothness")
        s = np.asarray(s, dtype=float)
        scalar = s.ndim == 0
        s = np.atleast_1d(s)
        out = np.zeros_like(s)
        if deriv == 0:
            out[s <= 1.0] = 1.0
        inside = (s > 1.0) & (s < 4.0)
        if np.any(inside):
            out[inside] = self._interior(s[inside], deriv)
        return float(out[0]) if scalar else out

    @staticmethod
    def _interior(s: np.ndarray, deriv: int) -> np.ndarray:
        a = 4.0 - s
        b = s - 1.0
        g1 = 3.0 / a**2 + 3.0 / b**2
        chi = _stable_logistic(3.0 / a - 3.0 / b)
        if deriv == 0:
            return chi
        one_m = 1.0 - chi
        p = chi * one_m
        c1 = -p * g1
        if deriv == 1:
            return c1
        g2 = 6.0 / a**3 - 6.0 / b**3
        p1 = c1 * (1.0 - 2.0 * chi)
        c2 = -(p1 * g1 + p * g2)
        if deriv == 2:
            return c2
        g3 = 18.0 / a**4 + 18.0 / b**4
        p2 = c2 * (1.0 - 2.0 * chi) - 2.0 * c1**2
        c3 = -(p2 * g1 + 2.0 * p1 * g2 + p * g3)
        if deriv == 3:
            return c3
        g4 = 72.0 / a**5 - 72.0 / b**5
        p3 = c3 * (1.0 - 2.0 * chi) - 6.0 * c1 * c2
        return -(p3 * g1 + 3.0 * p2 * g2 + 3.0 * p1 * g3 + p * g4)


def cutoff_eval(chi: Cutoff, s, deriv: int = 0):
    return chi(s, deriv)


# ---------------------------------------------------------------------------
# gluing configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GluingConfig:
    """Neck geometry: truncation size C, shrink eps, weight exponent nu."""

    C: float
    epsilon: float
    nu: float
    grid: RadialGrid
    min_band_nodes: int = 32

    def __post_init__(self):
        if not self.C > 1.0:
            raise ConfigError("C must exceed 1")
        if not 0.0 < self.epsilon <= 1.0 / (2.0 * self.C) ** 2:
            raise ConfigError("epsilon must lie in (0, (2C)^-2]")
        if not 1.5 < self.nu < 2.0:
            raise ConfigError("nu must lie strictly inside (3/2, 2)")
        if self.grid.rmin > self.C * self.epsilon / 2.0 * (1.0 + 1e-12):
            raise ConfigError("grid must start at or below C*eps/2")
        if self.grid.rmax < 2.0 / self.C * (1.0 - 1e-12):
            raise ConfigError("grid must reach at least 2/C")
        for lo, hi in (self.mu_inner_band, self.metric_band, self.mu_outer_band):
            if lo < self.grid.rmin or hi > self.grid.rmax:
                raise ConfigError("transition bands must lie inside the grid")
            count = int(np.count_nonzero((self.grid.r >= lo) & (self.grid.r <= hi)))
            if count < self.min_band_nodes:
                raise ConfigError(
                    f"band [{lo:.4g}, {hi:.4g}] has {count} nodes, "
                    f"need >= {self.min_band_nodes}"
                )

    @property
    def sqrt_eps(self) -> float:
        return float(np.sqrt(self.epsilon))

    @property
    def metric_band(self) -> tuple:
        return (self.sqrt_eps, 4.0 * self.sqrt_eps)

    @property
    def mu_inner_band(self) -> tuple:
        return (0.5 * self.sqrt_eps, self.sqrt_eps)

    @property
    def mu_outer_band(self) -> tuple:
        return (4.0 * self.sqrt_eps, 8.0 * self.sqrt_eps)

    @property
    def chart_band(self) -> tuple:
        # centers admitted for the rescaled-neck charts
        return (4.0 * self.C * self.epsilon, 1.0 / (4.0 * self.C))


# ---------------------------------------------------------------------------
# weight functions
# ---------------------------------------------------------------------------


def _quintic_rise(t: np.ndarray, end_slope: float) -> np.ndarray:
    """Monotone quintic on [0,1]: value/slope/curvature (0,0,0) -> (1,end_slope,0)."""
    d = end_slope
    a3, a4, a5 = 10.0 - 4.0 * d, 7.0 * d - 15.0, 6.0 - 3.0 * d
    return t**3 * (a3 + t * (a4 + t * a5))


def _w0_line(s: np.ndarray, C: float) -> np.ndarray:
    """Increasing profile: constant C below 1.5C, identity above 2C."""
    s = np.asarray(s, dtype=float)
    out = np.where(s <= 1.5 * C, C, 0.0)
    out = np.where(s >= 2.0 * C, s, out)
    mid = (s > 1.5 * C) & (s < 2.0 * C)
    if np.any(mid):
        t = (s[mid] - 1.5 * C) / (0.5 * C)
        # dw/ds at the upper end must be 1: w = C + C*y(t), t' = 2/C
        out[mid] = C * (1.0 + _quintic_rise(t, 0.5))
    return out


def _wM_line(s: np.ndarray, C: float) -> np.ndarray:
    """Increasing profile: identity below (2C)^-1, constant C^-1 above (1.5C)^-1."""
    s = np.asarray(s, dtype=float)
    lo, hi = 1.0 / (2.0 * C), 1.0 / (1.5 * C)
    out = np.where(s <= lo, s, 0.0)
    out = np.where(s >= hi, 1.0 / C, out)
    mid = (s > lo) & (s < hi)
    if np.any(mid):
        t = (s[mid] - lo) / (hi - lo)
        # mirrored quintic: slope 1 at the lower end, width (6C)^-1
        z = 1.0 - _quintic_rise(1.0 - t, 1.0 / 3.0)
        out[mid] = lo * (1.0 + z)
    return out


@dataclass(frozen=True, eq=False)
class WeightFunction:
    """One of the four weight geometries used by the weighted norms.

    kind 'w_eps' needs C and epsilon (glued manifold: plateau C*eps on the
    shrunk side, |x| through the neck, plateau 1/C on the background side);
    'w_M' is the punctured-background weight, 'w_0' the AE end weight, and
    'r' the plain radial function.
    """

    kind: str
    C: float = 10.0
    epsilon: float | None = None

    def __post_init__(self):
        if self.kind not in ("w_eps", "w_M", "w_0", "r"):
            raise ConfigError(f"unknown weight kind {self.kind!r}")
        if self.kind == "w_eps" and self.epsilon is None:
            raise ConfigError("w_eps needs epsilon")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        scalar = r.ndim == 0
        r = np.atleast_1d(r)
        if self.kind == "r":
            out = r.copy()
        elif self.kind == "w_M":
            out = _wM_line(r, self.C)
        elif self.kind == "w_0":
            out = _w0_line(r, self.C)
        else:
            eps = self.epsilon
            out = np.where(
                r >= 2.0 * self.C * eps,
                _wM_line(r, self.C),
                eps * _w0_line(r / eps, self.C),
            )
        return float(out[0]) if scalar else out

    def preimage_interval(self, grid: RadialGrid, lo: float = -np.inf, hi: float = np.inf) -> tuple:
        """Smallest node interval containing {lo < w < hi} (w is monotone)."""
        w = self(grid.r)
        mask = (w > lo) & (w < hi)
        if not np.any(mask):
            raise ConfigError("empty weight preimage on this grid")
        r = grid.r[mask]
        return (float(r[0]), float(r[-1]))


def weight_eval(w: WeightFunction, r):
    return w(r)


def weight_for_config(cfg: GluingConfig) -> WeightFunction:
    return WeightFunction("w_eps", C=cfg.C, epsilon=cfg.epsilon)


# ---------------------------------------------------------------------------
# glued data
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GluedData:
    """The approximate glued pair (metric, trace-free curvature) on the patch.

    Carries closed-form callables for the blended profiles so operators can
    use exact derivatives through the neck.
    """

    cfg: GluingConfig
    metric: RadialMetric
    mu: TraceFreeRadialTensor
    tau: float
    Lambda: float
    a_of: Callable
    da_of: Callable
    d2a_of: Callable
    m_of: Callable
    dm_of: Callable
    div_mu_of: Callable
    m_side: "MSideModel"
    scaled_ae: ScaledAE
    chi: Cutoff

    @property
    def grid(self) -> RadialGrid:
        return self.cfg.grid


def _piecewise(r, lo, hi, inner, blend, outer):
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    mi = r <= lo
    mo = r >= hi
    mb = ~(mi | mo)
    if np.any(mi):
        out[mi] = inner(r[mi])
    if np.any(mo):
        out[mo] = outer(r[mo])
    if np.any(mb):
        out[mb] = blend(r[mb])
    return out


def glue_metric(cfg: GluingConfig, m_side: "MSideModel", ae: AEProfile, chi: Cutoff):
    """A-profile callables of the glued metric (blend only inside the band)."""
    eps = cfg.epsilon
    se = cfg.sqrt_eps
    sc = scale_ae_data(ae, eps)

    aM = lambda r: 1.0 / (1.0 - m_side.F(r))
    daM = lambda r: m_side.dF(r) * aM(r) ** 2
    d2aM = lambda r: m_side.d2F(r) * aM(r) ** 2 + 2.0 * m_side.dF(r) ** 2 * aM(r) ** 3

    def blend0(r):
        x = chi(r / se)
        return x * sc.a(r) + (1.0 - x) * aM(r)

    def blend1(r):
        x = chi(r / se)
        dx = chi(r / se, 1) / se
        return dx * (sc.a(r) - aM(r)) + x * sc.da(r) + (1.0 - x) * daM(r)

    def blend2(r):
        x = chi(r / se)
        dx = chi(r / se, 1) / se
        d2x = chi(r / se, 2) / eps
        return (
            d2x * (sc.a(r) - aM(r))
            + 2.0 * dx * (sc.da(r) - daM(r))
            + x * sc.d2a(r)
            + (1.0 - x) * d2aM(r)
        )

    lo, hi = cfg.metric_band
    a_of = lambda r: _piecewise(r, lo, hi, sc.a, blend0, aM)
    da_of = lambda r: _piecewise(r, lo, hi, sc.da, blend1, daM)
    d2a_of = lambda r: _piecewise(r, lo, hi, sc.d2a, blend2, d2aM)
    return a_of, da_of, d2a_of


def glue_mu(cfg: GluingConfig, m_side: "MSideModel", ae: AEProfile, chi: Cutoff):
    """m-profile callables of the glued trace-free curvature.

    Inner factor chi(6r/sqrt(eps) - 2) releases the shrunk seed below
    sqrt(eps); outer factor (1-chi)(3r/(4 sqrt(eps)) - 2) re-enables the
    background tensor above 4 sqrt(eps); the band between carries zero.
    """
    eps = cfg.epsilon
    se = cfg.sqrt_eps
    sc = scale_ae_data(ae, eps)
    mM = m_side.mu_m
    dmM = m_side.dmu_m

    def inner0(r):
        x = chi(6.0 * r / se - 2.0)
        return x * sc.m(r)

    def inner1(r):
        x = chi(6.0 * r / se - 2.0)
        dx = chi(6.0 * r / se - 2.0, 1) * 6.0 / se
        return dx * sc.m(r) + x * sc.dm(r)

    def outer0(r):
        y = 1.0 - chi(3.0 * r / (4.0 * se) - 2.0)
        return y * mM(r)

    def outer1(r):
        y = 1.0 - chi(3.0 * r / (4.0 * se) - 2.0)
        dy = -chi(3.0 * r / (4.0 * se) - 2.0, 1) * 3.0 / (4.0 * se)
        return dy * mM(r) + y * dmM(r)

    zero = lambda r: np.zeros_like(np.asarray(r, dtype=float))
    div_M = m_side.div_mu_m or (lambda r: 2.0 * dmM(r) + 6.0 * mM(r) / np.asarray(r, dtype=float))

    # simplified divergence 2 m' + 6 m/r of the blended profile: the product
    # rule leaves only cutoff-derivative terms plus the sources' own
    # divergences, so it vanishes identically outside the two transition
    # collars whenever both sources are divergence-free
    def inner_div(r):
        dx = chi(6.0 * r / se - 2.0, 1) * 6.0 / se
        x = chi(6.0 * r / se - 2.0)
        return 2.0 * dx * sc.m(r) + x * sc.div_m(r)

    def outer_div(r):
        y = 1.0 - chi(3.0 * r / (4.0 * se) - 2.0)
        dy = -chi(3.0 * r / (4.0 * se) - 2.0, 1) * 3.0 / (4.0 * se)
        return 2.0 * dy * mM(r) + y * div_M(r)

    def m_of(r):
        lo_i, hi_i = cfg.mu_inner_band
        lo_o, hi_o = cfg.mu_outer_band
        inner = lambda rr: _piecewise(rr, lo_i, hi_i, sc.m, inner0, zero)
        outer = lambda rr: _piecewise(rr, lo_o, hi_o, zero, outer0, mM)
        return _piecewise(r, hi_i, lo_o, inner, zero, outer)

    def dm_of(r):
        lo_i, hi_i = cfg.mu_inner_band
        lo_o, hi_o = cfg.mu_outer_band
        inner = lambda rr: _piecewise(rr, lo_i, hi_i, sc.dm, inner1, zero)
        outer = lambda rr: _piecewise(rr, lo_o, hi_o, zero, outer1, dmM)
        return _piecewise(r, hi_i, lo_o, inner, zero, outer)

    def div_of(r):
        lo_i, hi_i = cfg.mu_inner_band
        lo_o, hi_o = cfg.mu_outer_band
        inner = lambda rr: _piecewise(rr, lo_i, hi_i, sc.div_m, inner_div, zero)
        outer = lambda rr: _piecewise(rr, lo_o, hi_o, zero, outer_div, div_M)
        return _piecewise(r, hi_i, lo_o, inner, zero, outer)

    return m_of, dm_of, div_of


def build_glued_data(cfg: GluingConfig, m_side: "MSideModel", ae: AEProfile, chi: Cutoff | None = None) -> GluedData:
    chi = chi or Cutoff()
    a_of, da_of, d2a_of = glue_metric(cfg, m_side, ae, chi)
    m_of, dm_of, div_of = glue_mu(cfg, m_side, ae, chi)
    r = cfg.grid.r
    metric = RadialMetric(cfg.grid, "A", a_of(r), deriv1=da_of(r), deriv2=d2a_of(r))
    mu = TraceFreeRadialTensor(cfg.grid, m_of(r), deriv1=dm_of(r), div_analytic=div_of(r))
    return GluedData(
        cfg=cfg,
        metric=metric,
        mu=mu,
        tau=m_side.tau,
        Lambda=m_side.Lambda,
        a_of=a_of,
        da_of=da_of,
        d2a_of=d2a_of,
        m_of=m_of,
        dm_of=dm_of,
        div_mu_of=div_of,
        m_side=m_side,
        scaled_ae=scale_ae_data(ae, cfg.epsilon),
        chi=chi,
    )


def region_classify(cfg: GluingConfig, r: float) -> tuple:
    """(metric regime, curvature regime) tags at radius r."""
    se = cfg.sqrt_eps
    if r <= se:
        metric = "AE-exact"
    elif r >= 4.0 * se:
        metric = "M-exact"
    else:
        metric = "transition"
    if r <= 0.5 * se:
        mu = "AE-exact"
    elif r < se:
        mu = "inner-transition"
    elif r <= 4.0 * se:
        mu = "silent"
    elif r < 8.0 * se:
        mu = "outer-transition"
    else:
        mu = "M-exact"
    return metric, mu


# ---------------------------------------------------------------------------
# rescaled neck charts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChartSample:
    """Radial restriction of the dilation chart centered at radius x_P."""

    x_P: float
    t: np.ndarray          # chart coordinate in [-1/2, 1/2]
    radii: np.ndarray      # |H_P(t)| = x_P (1 + t/2)
    a_values: np.ndarray   # rr-component of the rescaled pullback
    deviation: float       # sup |g_P - delta| along the sampled axis
    w_values: np.ndarray   # weight sampled through the chart


def chart_rescaled_metric(glued: GluedData, x_P: float, n_samples: int = 41) -> ChartSample:
    """Sample the rescaled metric 4/x_P^2 * (pullback along the dilation chart).

    For metrics A dr^2 + r^2 dOmega^2 the rescaled pullback deviates from
    the flat metric only through (A - 1) dr (x) dr, so the axis deviation is
    sup |A(radii) - 1|.
    """
    lo, hi = glued.cfg.chart_band
    if not lo < x_P < hi:
        raise ConfigError(f"chart center {x_P:.4g} outside admissible band ({lo:.4g}, {hi:.4g})")
    t = np.linspace(-0.5, 0.5, n_samples)
    radii = x_P * (1.0 + 0.5 * t)
    a_vals = glued.a_of(radii)
    w = weight_for_config(glued.cfg)(radii)
    return ChartSample(
        x_P=float(x_P),
        t=t,
        radii=radii,
        a_values=a_vals,
        deviation=float(np.max(np.abs(a_vals - 1.0))),
        w_values=w,
    )
