"""Fourier representation of fields on a large periodic window.

The real line is replaced by the window ``[-L, L)`` sampled at ``n`` points.
Frequency coefficients are normalized to approximate the unitary continuous
transform

    u_hat(xi) = (2 pi)^(-1/2) * int exp(-i x xi) u(x) dx,

so Parseval holds with the quadrature weights ``dx`` (space) and
``dxi = pi / L`` (frequency), and ``sqrt(2 pi) * u_hat(0)`` is the total
integral of ``u`` over the window.  Coefficient arrays use numpy's FFT
ordering (``numpy.fft.fftfreq``), not ascending frequency.

The Nyquist mode cannot carry an odd or complex symbol while keeping the
physical field real; such symbols act on it through their real part, and
dealiased products drop it altogether.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import cached_property
from typing import Callable, Union

import numpy as np

from .errors import RepresentationError, ValidationError

PHYSICAL = "physical"
FOURIER = "fourier"

DEFAULT_PAD = 3


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid on ``[-L, L)`` with ``n`` nodes (``n`` a power of two)."""

    L: float
    n: int

    def __post_init__(self):
        if not (self.L > 0 and np.isfinite(self.L)):
            raise ValidationError(f"half length must be positive, got {self.L}")
        n = int(self.n)
        if n != self.n or n < 16 or n & (n - 1):
            raise ValidationError(f"n must be a power of two >= 16, got {self.n}")

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def dxi(self) -> float:
        return np.pi / self.L

    @property
    def nyquist(self) -> float:
        return np.pi * self.n / (2.0 * self.L)

    @cached_property
    def x(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.n)

    @cached_property
    def index(self) -> np.ndarray:
        """Signed integer mode numbers in FFT order."""
        return np.fft.fftfreq(self.n, 1.0 / self.n).astype(np.int64)

    @cached_property
    def xi(self) -> np.ndarray:
        return self.dxi * self.index

    @cached_property
    def rxi(self) -> np.ndarray:
        """Non-negative frequencies matching ``numpy.fft.rfft``."""
        return self.dxi * np.arange(self.n // 2 + 1)

    @cached_property
    def _phase(self) -> np.ndarray:
        # exp(i xi_k L) = (-1)^k because the first node sits at x = -L
        return np.where(self.index % 2 == 0, 1.0, -1.0)

    def refined(self, factor: int = 2) -> "Grid1D":
        return Grid1D(self.L, self.n * factor)

    def field(self, values) -> "Field":
        return Field(self, np.asarray(values, dtype=float), PHYSICAL)

    def sample(self, func: Callable[[np.ndarray], np.ndarray]) -> "Field":
        return self.field(func(self.x))

    def zeros(self) -> "Field":
        return self.field(np.zeros(self.n))


@dataclass(frozen=True, eq=False)
class Field:
    """One spatial function on a grid, stored in physical or Fourier space."""

    grid: Grid1D
    values: np.ndarray
    space: str = PHYSICAL

    def __post_init__(self):
        if self.space not in (PHYSICAL, FOURIER):
            raise ValidationError(f"unknown representation {self.space!r}")
        if self.values.shape != (self.grid.n,):
            raise ValidationError(
                f"expected {self.grid.n} values, got shape {self.values.shape}"
            )
        if self.space == PHYSICAL and np.iscomplexobj(self.values):
            raise RepresentationError("physical-space values must be real")

    @property
    def is_physical(self) -> bool:
        return self.space == PHYSICAL

    def physical(self) -> "Field":
        return self if self.is_physical else transform(self, "inverse")

    def fourier(self) -> "Field":
        return transform(self, "forward") if self.is_physical else self

    def norm(self) -> float:
        """Discrete L2 norm (either representation)."""
        w = self.grid.dx if self.is_physical else self.grid.dxi
        return float(np.sqrt(w * np.sum(np.abs(self.values) ** 2)))

    def sup(self) -> float:
        return float(np.max(np.abs(self.physical().values)))

    def _combine(self, other, op):
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise ValidationError("fields live on different grids")
            other = other.fourier().values if not self.is_physical else other.physical().values
        return Field(self.grid, op(self.values, other), self.space)

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, scalar):
        if isinstance(scalar, Field):
            return product(self, scalar)
        return Field(self.grid, self.values * scalar, self.space)

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values, self.space)


def transform(field: Field, direction: str) -> Field:
    """Switch representation; ``direction`` is ``"forward"`` or ``"inverse"``."""
    g = field.grid
    if direction == "forward":
        if not field.is_physical:
            raise RepresentationError("forward transform needs a physical field")
        coef = np.fft.fft(field.values) * (g.dx / np.sqrt(2 * np.pi)) * g._phase
        return Field(g, coef, FOURIER)
    if direction == "inverse":
        if field.is_physical:
            raise RepresentationError("inverse transform needs a Fourier field")
        vals = np.fft.ifft(field.values * g._phase) * (g.n * g.dxi / np.sqrt(2 * np.pi))
        return Field(g, np.ascontiguousarray(vals.real), PHYSICAL)
    raise ValidationError(f"unknown direction {direction!r}")


# -- Fourier multipliers ----------------------------------------------------


@dataclass(frozen=True)
class MultiplierSpec:
    symbol: Callable[[np.ndarray], np.ndarray]
    label: str = dc_field(default="m")

    def evaluate(self, xi: np.ndarray) -> np.ndarray:
        m = np.asarray(self.symbol(xi))
        if m.shape == ():
            m = np.full(xi.shape, m)
        if not np.all(np.isfinite(m)):
            bad = xi[~np.isfinite(m)]
            raise ValidationError(f"symbol {self.label} is not finite at xi = {bad[:3]}")
        return m


def identity() -> MultiplierSpec:
    return MultiplierSpec(lambda xi: np.ones_like(xi), "1")


def bessel(s: float) -> MultiplierSpec:
    """<d_x>^s with symbol (1 + xi^2)^(s/2)."""
    return MultiplierSpec(lambda xi: (1.0 + xi * xi) ** (0.5 * s), f"<dx>^{s:g}")


def riesz(s: float) -> MultiplierSpec:
    """|d_x|^s; the symbol is set to 0 at xi = 0 for every s."""

    def sym(xi):
        a = np.abs(xi)
        out = np.zeros_like(a)
        nz = a > 0
        out[nz] = a[nz] ** s
        return out

    return MultiplierSpec(sym, f"|dx|^{s:g}")


def derivative(k: int = 1) -> MultiplierSpec:
    return MultiplierSpec(lambda xi: (1j * xi) ** k, f"dx^{k}")


def airy(t: float) -> MultiplierSpec:
    """Symbol of the propagator of d_t + (1/3) d_x^3."""
    return MultiplierSpec(lambda xi: np.exp(1j * t * xi**3 / 3.0), f"U({t:g})")


def apply_multiplier(field: Field, m: MultiplierSpec) -> Field:
    sym = m.evaluate(field.grid.xi)
    if field.is_physical:
        return transform(Field(field.grid, field.fourier().values * sym, FOURIER), "inverse")
    return Field(field.grid, field.values * sym, FOURIER)


def airy_propagate(field: Field, t: float) -> Field:
    """Exact free evolution by ``t`` (an L2 isometry away from the Nyquist mode)."""
    if t == 0:
        return field
    return apply_multiplier(field, airy(t))


def spectral_derivative(field: Field, k: int = 1) -> Field:
    return apply_multiplier(field, derivative(k))


# -- Littlewood-Paley blocks -------------------------------------------------

Block = Union[str, int]


def admissible_blocks(grid: Grid1D) -> list:
    blocks: list = ["low"]
    N = 2
    while N / 2 < grid.nyquist:
        blocks.append(N)
        N *= 2
    return blocks


def _block_mask(grid: Grid1D, block: Block) -> np.ndarray:
    a = np.abs(grid.xi)
    if block == "low" or block == 1:
        return a <= 1.0
    N = int(block)
    if N != block or N < 2 or N & (N - 1):
        raise ValidationError(f"block must be 'low' or a power of two >= 2, got {block!r}")
    if N / 2 >= grid.nyquist:
        raise ValidationError(f"block {N} lies beyond the Nyquist frequency {grid.nyquist:.4g}")
    return (a > N / 2) & (a <= N)


def littlewood_paley(field: Field, block: Block) -> Field:
    """Sharp inhomogeneous projection: low keeps |xi| <= 1, N keeps N/2 < |xi| <= N."""
    mask = _block_mask(field.grid, block)
    out = Field(field.grid, field.fourier().values * mask, FOURIER)
    return out.physical() if field.is_physical else out


# -- padded products ---------------------------------------------------------


def required_pad(degree: int) -> float:
    return (degree + 1) / 2.0


def check_pad(degree: int, pad_factor: int) -> None:
    if int(pad_factor) != pad_factor or pad_factor < 2:
        raise ValidationError(f"pad_factor must be an integer >= 2, got {pad_factor}")
    if pad_factor < required_pad(degree):
        raise ValidationError(
            f"pad_factor {pad_factor} is too small for a degree-{degree} product "
            f"(needs >= {required_pad(degree):g})"
        )


def pad_values(coef_r: np.ndarray, n: int, m: int) -> np.ndarray:
    """Physical samples on an ``m``-point mesh from unnormalized ``rfft`` coefficients
    of an ``n``-point signal.  The Nyquist coefficient must already be zero."""
    return np.fft.irfft(coef_r, m) * (m / n)


def unpad_coef(values_m: np.ndarray, n: int) -> np.ndarray:
    """Truncate ``m``-point physical samples to the ``n``-point ``rfft`` band."""
    m = values_m.shape[-1]
    c = np.fft.rfft(values_m, axis=-1)[..., : n // 2 + 1] * (n / m)
    c[..., -1] = 0.0
    return c


def dealias(field: Field) -> Field:
    """Project onto the band carried exactly through padded products (drops Nyquist)."""
    c = field.fourier().values.copy()
    c[field.grid.n // 2] = 0.0
    out = Field(field.grid, c, FOURIER)
    return out.physical() if field.is_physical else out


def padded_samples(field: Field, pad_factor: int = DEFAULT_PAD) -> np.ndarray:
    """The field interpolated spectrally onto the ``pad_factor * n`` mesh."""
    n = field.grid.n
    c = np.fft.rfft(field.physical().values)
    c[-1] = 0.0
    return pad_values(c, n, pad_factor * n)


def product(*fields: Field, pad_factor: int = DEFAULT_PAD) -> Field:
    """Alias-free pointwise product of ``fields`` (degree = number of factors)."""
    if not fields:
        raise ValidationError("product needs at least one field")
    grid = fields[0].grid
    if any(f.grid != grid for f in fields):
        raise ValidationError("fields live on different grids")
    check_pad(len(fields), pad_factor)
    acc = padded_samples(fields[0], pad_factor)
    for f in fields[1:]:
        acc = acc * padded_samples(f, pad_factor)
    c = unpad_coef(acc, grid.n)
    return Field(grid, np.fft.irfft(c, grid.n), PHYSICAL)


def power(field: Field, p: int, pad_factor: int = DEFAULT_PAD) -> Field:
    return product(*([field] * p), pad_factor=pad_factor)


# -- array-level helpers used by the solver and the norm engine -------------


def primitive_periodic(values: np.ndarray, L: float) -> np.ndarray:
    """Spectrally exact primitive from the left window edge (value 0 at x = -L).

    Splits off the window mean so the remainder has a periodic antiderivative;
    works along the last axis.
    """
    m = values.shape[-1]
    dx = 2.0 * L / m
    total = values.sum(axis=-1, keepdims=True) * dx
    c = np.fft.rfft(values - total / (2.0 * L), axis=-1)
    k = np.arange(c.shape[-1]) * (np.pi / L)
    c[..., 0] = 0.0
    c[..., 1:] /= 1j * k[1:]
    if m % 2 == 0:
        c[..., -1] = 0.0
    p = np.fft.irfft(c, m, axis=-1)
    x = dx * np.arange(m)
    return p - p[..., :1] + total * x / (2.0 * L)


def apply_symbol_rows(values: np.ndarray, grid: Grid1D, symbol: np.ndarray) -> np.ndarray:
    """Apply an ``rfft``-ordered real-output multiplier to each row of ``values``."""
    c = np.fft.rfft(values, axis=-1) * symbol
    return np.fft.irfft(c, grid.n, axis=-1)
