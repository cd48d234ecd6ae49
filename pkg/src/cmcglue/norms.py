"""Discrete weighted sup-norms over the four weight geometries.

For a (p,q)-tensor T of derivative depth k the norm is

    sum_{j=0..k}  sup_nodes  w(r)^(-p+q+nu+j) |nabla^j T|_g,

optionally restricted to a radius interval.  k = 0 norms are exact sup
evaluations; k >= 1 use the second-order covariant moduli from
:mod:`cmcglue.radial`.  Raising an index shifts (p,q+1) -> (p+1,q) and
nu -> nu+2, which leaves every exponent -p+q+nu+j unchanged, so the
implementation realizes index raising as an exact identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gluing import WeightFunction
from .radial import (
    DiagRadialTensor,
    RadialMetric,
    RadialVectorField,
    TraceFreeRadialTensor,
    covariant_modulus,
)


class NormDomainError(ValueError):
    pass


@dataclass(frozen=True)
class NormSpec:
    """Descriptor: derivative depth k <= 2, weight exponent nu, tensor type
    (p, q), and an optional radius-interval restriction."""

    nu: float
    k: int = 0
    tensor_type: tuple = (0, 0)
    subset: tuple | None = None

    def __post_init__(self):
        if not 0 <= self.k <= 2:
            raise ValueError("k must lie in 0..2")

    def exponent(self, j: int) -> float:
        p, q = self.tensor_type
        return -p + q + self.nu + j


_EXPECTED_TYPES = {
    "scalar": {(0, 0)},
    "vector": {(1, 0), (0, 1)},
    "tensor2": {(0, 2), (1, 1), (2, 0)},
}


def _type_class(T) -> str:
    if isinstance(T, np.ndarray):
        return "scalar"
    if isinstance(T, RadialVectorField):
        return "vector"
    if isinstance(T, (TraceFreeRadialTensor, DiagRadialTensor)):
        return "tensor2"
    raise TypeError(f"unsupported field type {type(T).__name__}")


def _mask(g: RadialMetric, subset) -> np.ndarray:
    r = g.grid.r
    if subset is None:
        return np.ones_like(r, dtype=bool)
    lo, hi = subset
    mask = (r >= lo) & (r <= hi)
    if not np.any(mask):
        raise NormDomainError("subset empty after intersection with grid")
    return mask


def weighted_norm(T, g: RadialMetric, w: WeightFunction, spec: NormSpec) -> float:
    """Weighted Hoelder-type sup norm of T on (a subset of) the grid."""
    cls = _type_class(T)
    if spec.tensor_type not in _EXPECTED_TYPES[cls]:
        raise ValueError(f"tensor type {spec.tensor_type} does not match a {cls} field")
    mask = _mask(g, spec.subset)
    wr = w(g.grid.r)
    total = 0.0
    for j in range(spec.k + 1):
        mod = covariant_modulus(T, g, j)
        total += float(np.max(wr[mask] ** spec.exponent(j) * mod[mask]))
    return total


def norm_monotonicity_gap(
    T,
    g: RadialMetric,
    w: WeightFunction,
    spec1: NormSpec,
    spec2: NormSpec,
    subset: tuple | None = None,
) -> tuple:
    """Sandwich (inf w)^(nu2-nu1) ||T||_nu1 <= ||T||_nu2 <= (sup w)^(nu2-nu1) ||T||_nu1.

    Exact for k = 0 sup-norms; both specs must share k = 0 and satisfy
    nu1 < nu2.  Returns (lhs, mid, rhs).
    """
    if spec1.k != 0 or spec2.k != 0:
        raise ValueError("the sandwich is stated for k = 0 norms")
    if not spec1.nu < spec2.nu:
        raise ValueError("need nu1 < nu2")
    subset = subset if subset is not None else spec1.subset
    s1 = NormSpec(nu=spec1.nu, k=0, tensor_type=spec1.tensor_type, subset=subset)
    s2 = NormSpec(nu=spec2.nu, k=0, tensor_type=spec2.tensor_type, subset=subset)
    mask = _mask(g, subset)
    wr = w(g.grid.r)[mask]
    gap = spec2.nu - spec1.nu
    n1 = weighted_norm(T, g, w, s1)
    n2 = weighted_norm(T, g, w, s2)
    return (float(np.min(wr) ** gap * n1), n2, float(np.max(wr) ** gap * n1))
