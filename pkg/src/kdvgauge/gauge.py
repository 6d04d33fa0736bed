"""Primitives, exponential gauge weights and the bounded-primitive data norm.

Gauge variables for ``d_t u + (1/3) d_x^3 u = c1 u u_xx + c2 u_x^2`` (and its
quadratic extension with ``c3 u_x u_xx + c4 u_xx^2``), with ``I = int_{-inf}^x u``:

=========  ============================================
Lambda     c1 I
vf         exp(-Lambda) u_x             (coupled system)
Xi         c2 I
uf         exp(-Xi) u
Theta      (c1 - c2) I
vf         exp(-Theta) d_x uf           (double gauge)
J          2 c4 u_x
w          exp(-J) u_xx
K          c1 I + c3 u
wf         exp(-K) d_x w                (quadratic chain)
=========  ============================================
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import GaugeOverflowError, ValidationError
from .reports import NormReport
from .spectral import (
    Field,
    bessel,
    primitive_periodic,
    spectral_derivative,
)

OVERFLOW_GUARD = 30.0
BOUNDARY_TOL = 1e-8

VARIANTS = ("direct_kdv", "coupled", "double_gauged", "quadratic", "quadratic_gauged", "kdv")
_CUBIC_FAMILY = ("direct_kdv", "coupled", "double_gauged", "kdv")


class BoundaryWarning(UserWarning):
    """The field is not small at the window edges."""


@dataclass(frozen=True)
class EquationSpec:
    """Coefficients and system selector.

    ``kdv`` evolves ``L v = 2 c2 v v_x``, the equation satisfied by ``u_x``
    when ``c1 = 0``.
    """

    c1: float = 0.0
    c2: float = 0.0
    c3: float = 0.0
    c4: float = 0.0
    variant: str = "direct_kdv"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        for name in ("c1", "c2", "c3", "c4"):
            if not np.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite")
        if self.variant in _CUBIC_FAMILY and (self.c3 != 0 or self.c4 != 0):
            raise ValidationError(f"variant {self.variant} requires c3 = c4 = 0")

    @property
    def fields(self) -> tuple:
        return {
            "direct_kdv": ("u",),
            "kdv": ("v",),
            "coupled": ("u", "vf"),
            "double_gauged": ("uf", "vf"),
            "quadratic": ("u",),
            "quadratic_gauged": ("u", "w"),
        }[self.variant]

    def with_variant(self, variant: str) -> "EquationSpec":
        return EquationSpec(self.c1, self.c2, self.c3, self.c4, variant)

    def to_dict(self) -> dict:
        return {"c1": self.c1, "c2": self.c2, "c3": self.c3, "c4": self.c4,
                "variant": self.variant}


# -- derived coefficient tables ---------------------------------------------


def double_gauge_coefficients(c1, c2) -> dict:
    """Coefficients of the monomials in L vf for the double gauge.

    Keys name the monomials (``Q = int u_x^2``)::

        a: exp(2 Xi) uf^2 d_x vf        b: exp(2 Xi + Theta) uf vf^2
        c: exp(3 Xi) uf^3 vf            d: vf Q
        e: exp(4 Xi - Theta) uf^5
    """
    third = Fraction(1, 3)
    return {
        "a": c1 * c1,
        "b": 4 * c1 * c2 - 2 * c2 * c2,
        "c": 2 * third * c1**3 + 8 * c1 * c2**2 - 4 * c2**3,
        "d": c1 * (c1 - c2),
        "e": 4 * c1 * c2**3 - 2 * c2**4,
    }


def chain_coefficients(c1, c2, c3, c4) -> dict:
    """Coefficients of N1 in ``L w = (c1 u + c3 u_x) w_xx + N1``.

    With ``W = exp(J) w = u_xx``, ``N1 = P w_x + exp(-J) R`` where
    ``P`` and ``R`` are polynomials in ``(u, u_x, W)`` keyed by the
    exponents ``(i, j, k)`` of ``u^i u_x^j W^k``.
    """
    P = {
        (0, 1, 0): 2 * (c1 + c2),
        (0, 0, 1): 3 * c3,
        (1, 0, 1): 4 * c1 * c4,
        (0, 1, 1): 4 * c3 * c4,
        (0, 0, 2): 4 * c4 * c4,
    }
    R = {
        (0, 0, 2): c1 + 2 * c2,
        (0, 1, 2): 2 * c1 * c4,
        (0, 0, 3): 4 * c3 * c4,
        (1, 0, 3): 4 * c1 * c4 * c4,
        (0, 1, 3): 4 * c3 * c4 * c4,
        (0, 0, 4): Fraction(16, 3) * c4**3,
    }
    return {"P": P, "R": R}


def eval_poly(table: dict, u, ux, W):
    out = 0.0
    for (i, j, k), coef in table.items():
        if coef:
            out = out + float(coef) * u**i * ux**j * W**k
    return out


# -- primitive --------------------------------------------------------------


def boundary_ratio(values: np.ndarray) -> float:
    sup = float(np.max(np.abs(values)))
    if sup == 0.0:
        return 0.0
    return max(abs(values[0]), abs(values[-1])) / sup


def primitive(u: Field, method: str = "trapezoid", warn: bool = True) -> Field:
    """Primitive from the left window edge, equal to 0 at ``x = -L``.

    ``trapezoid`` is the cumulative trapezoid rule; ``spectral`` integrates
    the interpolant exactly (mean handled by a linear ramp).  A
    :class:`BoundaryWarning` is issued when ``u`` is not small at the edges.
    """
    g = u.grid
    vals = u.physical().values
    if warn and boundary_ratio(vals) > BOUNDARY_TOL:
        warnings.warn(
            f"field is not small at the window edges (ratio {boundary_ratio(vals):.2e})",
            BoundaryWarning, stacklevel=2,
        )
    if method == "trapezoid":
        out = np.empty_like(vals)
        out[0] = 0.0
        np.cumsum(0.5 * g.dx * (vals[1:] + vals[:-1]), out=out[1:])
    elif method == "spectral":
        out = primitive_periodic(vals, g.L)
    else:
        raise ValidationError(f"unknown primitive method {method!r}")
    return g.field(out)


def window_total(u: Field) -> float:
    """Discrete total integral (the trapezoid primitive continued to ``x = +L``)."""
    return float(np.sum(u.physical().values) * u.grid.dx)


def sup_primitive(u: Field, method: str = "trapezoid") -> float:
    vals = primitive(u, method, warn=False).values
    return float(max(np.max(np.abs(vals)), abs(window_total(u))))


# -- gauge bundle -----------------------------------------------------------


@dataclass
class GaugeBundle:
    variant: str
    u: Field
    I_u: Field
    fields: dict = field(default_factory=dict)

    def __getitem__(self, key) -> Field:
        if key == "u":
            return self.u
        if key == "I_u":
            return self.I_u
        return self.fields[key]

    def __contains__(self, key) -> bool:
        return key in ("u", "I_u") or key in self.fields


def _guard(name: str, values: np.ndarray) -> None:
    sup = float(np.max(np.abs(values)))
    if not np.isfinite(sup) or sup > OVERFLOW_GUARD:
        raise GaugeOverflowError(name, sup)


def check_gauge_precondition(u: Field) -> None:
    vals = u.physical().values
    if boundary_ratio(vals) > BOUNDARY_TOL and abs(window_total(u)) > BOUNDARY_TOL:
        raise ValidationError(
            "gauge weights need boundary smallness or a vanishing window mean; "
            f"edge ratio {boundary_ratio(vals):.2e}, window integral {window_total(u):.2e}"
        )


def make_gauge_bundle(u: Field, spec: EquationSpec, method: str = "spectral") -> GaugeBundle:
    """All gauge variables of ``spec.variant`` computed from ``u``."""
    u = u.physical()
    check_gauge_precondition(u)
    g = u.grid
    I = primitive(u, method, warn=False)
    ux = spectral_derivative(u, 1).values
    F = {}
    v = spec.variant
    if v in ("coupled", "direct_kdv", "kdv"):
        lam = spec.c1 * I.values
        _guard("Lambda", lam)
        F["Lambda"] = g.field(lam)
        F["vf"] = g.field(np.exp(-lam) * ux)
    if v == "double_gauged":
        xi = spec.c2 * I.values
        theta = (spec.c1 - spec.c2) * I.values
        _guard("Xi", xi)
        _guard("Theta", theta)
        uf = g.field(np.exp(-xi) * u.values)
        F["Xi"] = g.field(xi)
        F["Theta"] = g.field(theta)
        F["uf"] = uf
        F["vf"] = g.field(np.exp(-theta) * spectral_derivative(uf, 1).values)
    if v in ("quadratic", "quadratic_gauged"):
        J = 2.0 * spec.c4 * ux
        K = spec.c1 * I.values + spec.c3 * u.values
        _guard("J", J)
        _guard("K", K)
        uxx = spectral_derivative(u, 2).values
        w = g.field(np.exp(-J) * uxx)
        F["J"] = g.field(J)
        F["K"] = g.field(K)
        F["w"] = w
        F["wf"] = g.field(np.exp(-K) * spectral_derivative(w, 1).values)
    return GaugeBundle(v, u, I, F)


def reconstruct_from_double_gauge(uf: np.ndarray, grid, c2: float):
    """Recover ``(u, I)`` from ``uf = exp(-c2 I) u``.

    Uses ``exp(-Xi) = 1 - c2 int uf``, which follows from
    ``d_x exp(-Xi) = -c2 uf``.
    """
    P = primitive_periodic(uf, grid.L)
    if c2 == 0:
        return uf.copy(), P
    base = 1.0 - c2 * P
    if np.min(base) <= 0:
        raise GaugeOverflowError("Xi", float("inf"))
    xi = -np.log(base)
    return uf / base, xi / c2


# -- data norm ----------------------------------------------------------------


def hs_norm(u: Field, s: float) -> float:
    f = u.fourier()
    w = bessel(s).evaluate(f.grid.xi)
    return float(np.sqrt(f.grid.dxi * np.sum((w * np.abs(f.values)) ** 2)))


def xs_norm(u: Field, s: float, method: str = "trapezoid") -> NormReport:
    """``||u||_{H^s} + sup_x |int_{-inf}^x u|`` with both parts reported."""
    return NormReport(
        "X^s",
        {"H^s": hs_norm(u, s), "sup_primitive": sup_primitive(u, method)},
        {"s": s},
    )


# -- operator form of the gauge identity --------------------------------------


def gauge_identity_terms(lam, lam_x, lam_xx, lam_xxx, lam_t, v, v_x, v_xx):
    """Right side of ``exp(Lam) L(exp(-Lam) v) - L v`` in terms of jets.

    Returns ``(Lam_x Lam_xx - Lam_x^3/3 - L Lam) v
    + (-Lam_xx + Lam_x^2) v_x - Lam_x v_xx``.
    """
    L_lam = lam_t + lam_xxx / 3.0
    return ((lam_x * lam_xx - lam_x**3 / 3.0 - L_lam) * v
            + (-lam_xx + lam_x**2) * v_x - lam_x * v_xx)


__all__ = [
    "BoundaryWarning", "EquationSpec", "GaugeBundle", "VARIANTS", "boundary_ratio",
    "chain_coefficients", "double_gauge_coefficients", "eval_poly", "gauge_identity_terms",
    "hs_norm", "make_gauge_bundle", "primitive", "reconstruct_from_double_gauge",
    "sup_primitive", "window_total", "xs_norm",
]
