"""Scripted end-to-end experiments.

Each function returns an :class:`~kdvgauge.reports.ExperimentReport` with its
measurements, pass/fail checks and the provenance of every reference value.

The ill-posedness families live on frequency lattices ``k * dxi`` fine
enough to resolve bands of width ``N^-2`` at ``|xi| ~ N``; since such a
lattice would need tens of millions of grid points for ``N = 128``, they are
stored as :class:`SparseSpectrum` objects holding only the occupied bins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import optimize, special

from .errors import ResolutionError, ValidationError
from .evolve import (
    StepperConfig,
    Trajectory,
    cumulative_quad4,
    evolve,
    initial_state,
    linear_operator_fd,
    picard,
    proxy_norm,
)
from .gauge import (
    EquationSpec,
    chain_coefficients,
    eval_poly,
    gauge_identity_terms,
    hs_norm,
    reconstruct_from_double_gauge,
    sup_primitive,
    xs_norm,
)
from .norms import composite_norm
from .reports import ExperimentReport, fit_loglog
from .spectral import (
    FOURIER,
    Field,
    Grid1D,
    airy_propagate,
    primitive_periodic,
    product,
    spectral_derivative,
)

SQ2PI = math.sqrt(2.0 * math.pi)
FAMILIES = ("pilod", "bounded_primitive")


# -- data families ---------------------------------------------------------------


@dataclass(frozen=True)
class IllposedDataSpec:
    """``pilod``: low band of height N plus bands of height N^(1-s) at +-N,
    all of half width N^-2.  ``bounded_primitive``: bands of height
    N^(-s+a/2) and half width N^-a at +-N."""

    family: str
    N: float
    s: float = 0.0
    a: Optional[float] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown family {self.family!r}; expected {FAMILIES}")
        if not self.N >= 2:
            raise ValidationError(f"N must be >= 2, got {self.N}")
        if self.family == "bounded_primitive" and not (self.a is not None and self.a > 0):
            raise ValidationError("the bounded_primitive family needs a > 0")

    @property
    def half_width(self) -> float:
        return self.N ** -2.0 if self.family == "pilod" else self.N ** -self.a

    def bands(self) -> list:
        """``(center, half_width, height)`` triples."""
        N, d = self.N, self.half_width
        if self.family == "pilod":
            hi = N ** (1.0 - self.s)
            return [(0.0, d, N), (-N, d, hi), (N, d, hi)]
        h = N ** (-self.s + self.a / 2.0)
        return [(-N, d, h), (N, d, h)]

    def closed_form(self, x: np.ndarray, dxi: Optional[float] = None) -> np.ndarray:
        """Physical-space formula; with ``dxi`` the ``1/x`` factor is replaced by
        its lattice-periodized version ``(dxi/2) cot(dxi x / 2)``."""
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / x if dxi is None else 0.5 * dxi / np.tan(0.5 * dxi * x)
            d = self.half_width
            sinc = np.where(x == 0, d, np.sin(d * x) * inv)
        c = math.sqrt(2.0 / math.pi)
        if self.family == "pilod":
            return c * (1.0 + 2.0 * self.N ** -self.s * np.cos(self.N * x)) * self.N * sinc
        return 2.0 * c * self.N ** (-self.s + self.a / 2.0) * sinc * np.cos(self.N * x)


def _bin_weights(k: np.ndarray, dxi: float, center: float, half: float) -> np.ndarray:
    """Fraction of each cell ``[k dxi - dxi/2, k dxi + dxi/2]`` inside the band."""
    lo = np.maximum(k * dxi - dxi / 2, center - half)
    hi = np.minimum(k * dxi + dxi / 2, center + half)
    return np.clip(hi - lo, 0.0, None) / dxi


def _check_resolution(spec: IllposedDataSpec, dxi: float) -> None:
    if dxi > spec.half_width / 4 * (1 + 1e-12):
        raise ResolutionError(
            f"frequency spacing {dxi:.3g} does not resolve the band half width "
            f"{spec.half_width:.3g} (need spacing <= half width / 4)")


@dataclass
class SparseSpectrum:
    """Fourier coefficients on the lattice ``xi = k * dxi`` for a sorted set of ``k``."""

    k: np.ndarray
    values: np.ndarray
    dxi: float

    @property
    def xi(self) -> np.ndarray:
        return self.k * self.dxi

    def hs_norm(self, s: float) -> float:
        w = (1.0 + self.xi**2) ** (s / 2.0)
        return float(np.sqrt(self.dxi * np.sum((w * np.abs(self.values)) ** 2)))

    def at_zero(self) -> complex:
        hit = np.nonzero(self.k == 0)[0]
        return complex(self.values[hit[0]]) if hit.size else 0j

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Physical values (periodic with period ``2 pi / dxi``)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        ph = np.exp(1j * np.outer(x, self.xi))
        return (self.dxi / SQ2PI) * (ph @ self.values).real

    def primitive_values(self, x: np.ndarray) -> np.ndarray:
        """Values of the decaying primitive; requires a vanishing zero mode."""
        if abs(self.at_zero()) > 0:
            raise ValidationError("primitive evaluation needs a vanishing zero-frequency value")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        nz = self.k != 0
        coef = self.values[nz] / (1j * self.xi[nz])
        ph = np.exp(1j * np.outer(x, self.xi[nz]))
        return (self.dxi / SQ2PI) * (ph @ coef).real

    def scaled(self, alpha: complex) -> "SparseSpectrum":
        return SparseSpectrum(self.k, alpha * self.values, self.dxi)


def illposed_spectrum(spec: IllposedDataSpec, dxi: Optional[float] = None,
                      per_half_width: int = 4) -> SparseSpectrum:
    """Sparse exact-indicator data; default spacing is half width / ``per_half_width``."""
    dxi = spec.half_width / per_half_width if dxi is None else dxi
    _check_resolution(spec, dxi)
    ks, vals = [], []
    for c, d, hgt in spec.bands():
        k = np.arange(math.floor((c - d) / dxi) - 1, math.ceil((c + d) / dxi) + 2)
        w = _bin_weights(k, dxi, c, d)
        keep = w > 0
        ks.append(k[keep])
        vals.append(hgt * w[keep])
    k = np.concatenate(ks)
    v = np.concatenate(vals)
    order = np.argsort(k, kind="stable")
    k, v = k[order], v[order]
    uk, inv = np.unique(k, return_inverse=True)
    acc = np.zeros(uk.size)
    np.add.at(acc, inv, v)
    return SparseSpectrum(uk.astype(np.int64), acc.astype(complex), dxi)


def make_illposed_data(spec: IllposedDataSpec, grid: Grid1D) -> Field:
    """Dense version of :func:`illposed_spectrum` on ``grid`` (Fourier representation)."""
    if grid.nyquist <= spec.N + 2:
        raise ResolutionError(
            f"grid Nyquist {grid.nyquist:.4g} must exceed N + 2 = {spec.N + 2:g}")
    _check_resolution(spec, grid.dxi)
    coef = np.zeros(grid.n, dtype=complex)
    for c, d, hgt in spec.bands():
        coef += hgt * _bin_weights(grid.index.astype(float), grid.dxi, c, d)
    return Field(grid, coef, FOURIER)


def dense_to_sparse(u: Field, rel_threshold: float = 1e-13) -> SparseSpectrum:
    """Coefficients above ``rel_threshold`` times the largest one."""
    f = u.fourier()
    c = f.values.copy()
    c[f.grid.n // 2] = 0.0
    keep = np.abs(c) > rel_threshold * np.max(np.abs(c), initial=0.0)
    order = np.argsort(f.grid.index[keep], kind="stable")
    return SparseSpectrum(f.grid.index[keep][order], c[keep][order], f.grid.dxi)


def sparse_to_dense(sp: SparseSpectrum, grid: Grid1D) -> Field:
    if abs(sp.dxi - grid.dxi) > 1e-12 * grid.dxi:
        raise ValidationError("lattice spacing differs from the grid's")
    if np.max(np.abs(sp.k)) >= grid.n // 2:
        raise ResolutionError("spectrum extends beyond the grid's Nyquist frequency")
    coef = np.zeros(grid.n, dtype=complex)
    coef[sp.k % grid.n] = sp.values
    return Field(grid, coef, FOURIER)


# -- second Picard iterate ----------------------------------------------------------


def time_factor(omega: np.ndarray, t: float) -> np.ndarray:
    """``int_0^t exp(-i s omega / 3) ds`` with the removable limit ``t`` at 0."""
    th = t * np.asarray(omega, dtype=float) / 3.0
    out = np.empty(th.shape, dtype=complex)
    small = np.abs(th) < 1e-6
    out[small] = t * (1.0 - 0.5j * th[small] - th[small] ** 2 / 6.0)
    big = ~small
    out[big] = t * (1.0 - np.exp(-1j * th[big])) / (1j * th[big])
    return out


def _second_iterate_sparse(sp: SparseSpectrum, t: float, c1: float, chunk: int) -> SparseSpectrum:
    k, v, dxi = sp.k, sp.values, sp.dxi
    xi = k * dxi
    d2 = -(xi**2) * v
    kmin = 2 * int(k.min())
    size = 2 * int(k.max()) - kmin + 1
    re = np.zeros(size)
    im = np.zeros(size)
    for a0 in range(0, k.size, chunk):
        ka = k[a0:a0 + chunk, None]
        xa = xi[a0:a0 + chunk, None]
        kout = ka + k[None, :]
        xo = kout * dxi
        om = 3.0 * xo * xi[None, :] * xa
        val = v[a0:a0 + chunk, None] * d2[None, :] * time_factor(om, t)
        idx = (kout - kmin).ravel()
        re += np.bincount(idx, weights=val.real.ravel(), minlength=size)
        im += np.bincount(idx, weights=val.imag.ravel(), minlength=size)
    kk = np.arange(kmin, kmin + size, dtype=np.int64)
    xo = kk * dxi
    out = (re + 1j * im) * (c1 * dxi / SQ2PI) * np.exp(1j * t * xo**3 / 3.0)
    keep = (re != 0) | (im != 0)
    return SparseSpectrum(kk[keep], out[keep], dxi)


def second_iterate(u0: Union[Field, SparseSpectrum], t: float, c1: float = 1.0,
                   chunk: int = 256) -> Union[Field, SparseSpectrum]:
    """Closed-form ``int_0^t U(t - s)(U(s) u0 * U(s) d_x^2 u0) ds`` in frequency space.

    Each output frequency sums ``u0^(xi - xi1) (-xi1^2) u0^(xi1)`` against the
    exact time factor of the resonance ``3 xi xi1 (xi - xi1)``.  Dense input
    must be band-limited well inside the Nyquist frequency.
    """
    if t == 0:
        if isinstance(u0, Field):
            return u0.grid.zeros()
        return SparseSpectrum(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=complex), u0.dxi)
    if isinstance(u0, SparseSpectrum):
        return _second_iterate_sparse(u0, t, c1, chunk)
    sp = dense_to_sparse(u0)
    if sp.k.size and 2 * np.max(np.abs(sp.k)) >= u0.grid.n // 2:
        raise ResolutionError("input spectrum too wide: the product would alias")
    return sparse_to_dense(_second_iterate_sparse(sp, t, c1, chunk), u0.grid).physical()


def duhamel_product_forcing(u0: Field, t: float, M: int, c1: float = 1.0) -> Trajectory:
    """Snapshots of ``c1 * U(s) u0 * U(s) d_x^2 u0`` on ``M + 1`` uniform nodes in ``[0, t]``."""
    times = np.linspace(0.0, t, M + 1)
    u0 = u0.physical()
    uxx = spectral_derivative(u0, 2)
    vals = np.array([c1 * product(airy_propagate(u0, s), airy_propagate(uxx, s)).values
                     for s in times])
    return Trajectory(u0.grid, times, {"F": vals}, None, {"method": "forcing"})


# -- primitive sup for sparse data --------------------------------------------------


def sparse_sup_primitive(sp: SparseSpectrum, N: float, periods: int = 12,
                         per_period: int = 64) -> float:
    """Sup over ``x > 0`` of the decaying primitive (odd for even data).

    A mesh over ``periods`` oscillations of ``cos(N x)`` is refined around its
    best point with a bounded scalar search.
    """
    period = 2 * math.pi / N
    x = np.linspace(0.0, periods * period, periods * per_period + 1)[1:]
    p = np.abs(sp.primitive_values(x))
    i = int(np.argmax(p))
    lo, hi = x[max(i - 1, 0)], x[min(i + 1, x.size - 1)]
    res = optimize.minimize_scalar(lambda z: -abs(sp.primitive_values(z)[0]),
                                   bounds=(lo, hi), method="bounded",
                                   options={"xatol": period * 1e-9})
    return float(max(p[i], -res.fun))


def sici_sup_primitive(spec: IllposedDataSpec, periods: int = 12, per_period: int = 64) -> float:
    """Same quantity from the sine-integral closed form of the whole-line primitive."""
    if spec.family != "bounded_primitive":
        raise ValidationError("closed form available for the bounded_primitive family")
    N, d = spec.N, spec.half_width
    amp = math.sqrt(2 / math.pi) * N ** (-spec.s + spec.a / 2)
    f = lambda x: amp * (special.sici((N + d) * x)[0] - special.sici((N - d) * x)[0])
    period = 2 * math.pi / N
    x = np.linspace(0.0, periods * period, periods * per_period + 1)[1:]
    p = np.abs(f(x))
    i = int(np.argmax(p))
    res = optimize.minimize_scalar(lambda z: -abs(f(z)), bounds=(x[max(i - 1, 0)], x[min(i + 1, x.size - 1)]),
                                   method="bounded", options={"xatol": period * 1e-9})
    return float(max(p[i], -res.fun))


def pilod_window_integral(spec: IllposedDataSpec, X: float, points_per_unit: int = 16) -> float:
    """Trapezoid quadrature of the whole-line closed form over ``[-X, X]``."""
    n = int(math.ceil(2 * X * max(points_per_unit, 8 * spec.N / math.pi)))
    x = np.linspace(-X, X, n + 1)
    y = spec.closed_form(x)
    return float(np.trapezoid(y, x))


def pilod_window_integral_exact(spec: IllposedDataSpec, X: float) -> float:
    """Sine-integral value of the whole-line closed form integrated over ``[-X, X]``."""
    N, d = spec.N, spec.half_width
    si = lambda y: special.sici(y)[0]
    c = math.sqrt(2 / math.pi)
    return float(c * N * 2 * si(d * X) + c * 2 * N ** (1 - spec.s) * (si((N + d) * X) - si((N - d) * X)))


def window_integral_convergence(N: float = 8, s: float = 0.0, levels: int = 4) -> ExperimentReport:
    """Window quadrature of the data against its total integral ``sqrt(2 pi) N``.

    Windows ``X_k = 2^k 2 pi / delta`` sit where the sine-integral tails are at
    their envelope, so the error should shrink monotonically as ``X`` grows.
    """
    spec = IllposedDataSpec("pilod", N, s)
    total = SQ2PI * N
    rep = ExperimentReport("window_integral")
    errs, agree = [], []
    for k in range(levels):
        X = 2.0**k * 2 * math.pi / spec.half_width
        q = pilod_window_integral(spec, X)
        e = pilod_window_integral_exact(spec, X)
        errs.append(abs(q - total))
        agree.append(abs(q - e) / total)
        rep.add_row(X=X, quadrature=q, sine_integral=e, total=total, error=abs(q - total))
    rep.check("quadrature vs sine-integral value (max relative)", max(agree), None, 1e-6,
              "closed-form window integral")
    rep.check("window error decreases as the window grows",
              float(all(b < a for a, b in zip(errs, errs[1:]))), 1, 1,
              "convergence toward the total integral")
    return rep


# -- scans -----------------------------------------------------------------------


def illposed_scan(family: str, s: float, N_list: Sequence[float], t: float = 0.01,
                  a: Optional[float] = None, per_half_width: int = 4,
                  observable: Optional[str] = None) -> ExperimentReport:
    """Scaling of the second iterate (and of the data primitive) with ``N``.

    ``pilod``: ``||A2(t)||_{H^s}`` against ``N`` (target slope 1).
    ``bounded_primitive``: ``observable="primitive"`` fits the primitive sup
    (target ``-s - a/2 - 1``) and ``observable="zero"`` fits
    ``|F[A2(t)](0)|`` (target ``2 - 2 s``); both are measured, the default
    checks both.
    """
    N_list = [float(N) for N in N_list]
    if len(N_list) < 4:
        raise ValidationError("a scan needs at least four values of N")
    rep = ExperimentReport(f"illposed_{family}")
    rep.scalars.update({"s": s, "t": t, "a": a, "per_half_width": per_half_width})
    if family == "pilod":
        ys = []
        for N in N_list:
            sp = illposed_spectrum(IllposedDataSpec("pilod", N, s), per_half_width=per_half_width)
            A2 = second_iterate(sp, t)
            y = A2.hs_norm(s)
            ys.append(y)
            rep.add_row(N=N, data_hs=sp.hs_norm(s), total_integral=SQ2PI * sp.at_zero().real,
                        second_iterate_hs=y, ratio_to_tN=y / (t * N))
        fit = fit_loglog(N_list, ys)
        rep.fits["second_iterate_hs"] = fit
        rep.check("slope of ||A2||_{H^s}", fit.slope, 0.9, 1.1, "target exponent 1 (growth like T N)")
        return rep
    if family != "bounded_primitive":
        raise ValidationError(f"unknown family {family!r}")
    if a is None:
        raise ValidationError("the bounded_primitive family needs a")
    obs = ("primitive", "zero") if observable is None else (observable,)
    prim, zero = [], []
    for N in N_list:
        spec = IllposedDataSpec("bounded_primitive", N, s, a)
        sp = illposed_spectrum(spec, per_half_width=per_half_width)
        row = {"N": N, "data_hs": sp.hs_norm(s)}
        if "primitive" in obs:
            row["sup_primitive"] = sparse_sup_primitive(sp, N)
            row["sup_primitive_sici"] = sici_sup_primitive(spec)
            prim.append(row["sup_primitive"])
        if "zero" in obs:
            row["second_iterate_zero"] = abs(second_iterate(sp, t).at_zero())
            zero.append(row["second_iterate_zero"])
        rep.add_row(**row)
    if prim:
        fit = fit_loglog(N_list, prim)
        rep.fits["sup_primitive"] = fit
        target = -s - a / 2 - 1
        rep.scalars["primitive_target"] = target
        rep.check("slope of sup|primitive|", fit.slope, target - 0.15, target + 0.15,
                  "target exponent -s - a/2 - 1")
    if zero:
        fit = fit_loglog(N_list, zero)
        rep.fits["second_iterate_zero"] = fit
        target = 2 - 2 * s
        rep.scalars["zero_target"] = target
        rep.check("slope of |F[A2](0)|", fit.slope, target - 0.15, target + 0.15,
                  "target exponent 2 - 2 s")
    return rep


def duhamel_oracle_check(N: float = 8, s: float = 0.0, t: float = 0.01,
                         grid: Optional[Grid1D] = None, M: int = 100) -> ExperimentReport:
    """Closed-form second iterate against trapezoid Duhamel quadrature on a dense grid."""
    from .evolve import duhamel

    grid = grid or Grid1D(256 * math.pi, 2**16)
    spec = IllposedDataSpec("pilod", N, s)
    u0 = make_illposed_data(spec, grid).physical()
    closed = second_iterate(u0, t)
    forcing = duhamel_product_forcing(u0, t, M)
    quad = duhamel(forcing, t)
    err = (quad - closed).norm() / closed.norm()
    rep = ExperimentReport("duhamel_oracle")
    rep.scalars.update({"N": N, "t": t, "M": M, "n": grid.n, "L": grid.L,
                        "closed_l2": closed.norm(), "quadrature_l2": quad.norm()})
    rep.check("relative L2 difference", err, None, 0.01, "closed form vs time quadrature")
    return rep


# -- gauge consistency ---------------------------------------------------------------


def _rows_d(A: np.ndarray, grid: Grid1D, k: int) -> np.ndarray:
    return np.fft.irfft(np.fft.rfft(A, axis=1) * (1j * grid.rxi) ** k, grid.n, axis=1)


def w_residual(traj: Trajectory, c1: float) -> np.ndarray:
    """``||u_x - exp(Lambda) vf||_2 / ||u_x||_2`` per snapshot."""
    g = traj.grid
    U, V = np.asarray(traj["u"]), np.asarray(traj["vf"])
    ux = _rows_d(U, g, 1)
    w = ux - np.exp(c1 * primitive_periodic(U, g.L)) * V
    den = np.sqrt(np.sum(ux * ux, axis=1))
    num = np.sqrt(np.sum(w * w, axis=1))
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), num)


def primitive_identity_residual(traj: Trajectory, spec: EquationSpec) -> np.ndarray:
    """Sup-norm residual of the time-integrated evolution law of ``int u``.

    Compares ``I(t) - I(0)`` with the time integral of
    ``-(1/3) u_xx + c1 exp(L) u vf - c1 int exp(L) u_x vf + c2 int exp(2 L) vf^2``.
    """
    g = traj.grid
    c1, c2 = spec.c1, spec.c2
    U, V = np.asarray(traj["u"]), np.asarray(traj["vf"])
    I = primitive_periodic(U, g.L)
    E = np.exp(c1 * I)
    dens = (-_rows_d(U, g, 2) / 3.0 + c1 * E * U * V
            - c1 * primitive_periodic(E * _rows_d(U, g, 1) * V, g.L)
            + c2 * primitive_periodic(E * E * V * V, g.L))
    acc = cumulative_quad4(dens, traj.dt_snap)
    return np.max(np.abs(I - I[0] - acc), axis=1)


def gauge_consistency_run(u0: Field, T: float, spec: EquationSpec,
                          cfg: Optional[StepperConfig] = None) -> ExperimentReport:
    """Coupled run from compatible data; the gauge residual and the primitive law."""
    spec = spec.with_variant("coupled")
    cfg = cfg or StepperConfig(dt=T / 200, dt_snap=T / 200)
    rep = ExperimentReport("gauge_consistency")
    traj = evolve(u0, T, cfg, spec)
    wr = w_residual(traj, spec.c1)
    pr = primitive_identity_residual(traj, spec)
    for i in range(0, traj.times.size, max(1, traj.times.size // 20)):
        rep.add_row(t=traj.times[i], w_ratio=wr[i], primitive_residual=pr[i])
    rep.scalars.update({"T": T, "edge_ratio_max": traj.meta["edge_ratio_max"],
                        "u0_window_integral": float(np.sum(u0.physical().values) * u0.grid.dx)})
    rep.check("sup_t ||w|| / ||u_x||", float(wr.max()), None, 1e-6, "exact vanishing of w")
    rep.check("primitive identity sup residual", float(pr.max()), None, 1e-5,
              "fundamental theorem of calculus applied to int u")
    rep.trajectory = traj
    return rep


def kdv_reduction_run(u0: Field, T: float, cfg: StepperConfig, c2: float = 1.0) -> ExperimentReport:
    """With ``c1 = 0``, ``u_x`` of the direct flow against the KdV flow of ``d_x u0``."""
    a = evolve(u0, T, cfg, EquationSpec(c1=0.0, c2=c2))
    v0 = spectral_derivative(u0.physical(), 1)
    b = evolve(v0, T, cfg, EquationSpec(c2=c2, variant="kdv"))
    ux = spectral_derivative(a.snapshot("u"), 1)
    err = (ux - b.snapshot("v")).norm() / b.snapshot("v").norm()
    rep = ExperimentReport("kdv_reduction")
    rep.scalars.update({"T": T, "c2": c2, "edge_ratio_max": max(a.meta["edge_ratio_max"],
                                                                b.meta["edge_ratio_max"])})
    rep.check("relative L2 of d_x u(T) - v(T)", err, None, 1e-6, "u_x solves the KdV equation")
    return rep


def double_gauge_run(u0: Field, T: float, spec: EquationSpec, cfg: StepperConfig) -> ExperimentReport:
    """``exp(Xi) uf`` from the double-gauged run against the direct run."""
    d = evolve(u0, T, cfg, spec.with_variant("direct_kdv"))
    gg = evolve(u0, T, cfg, spec.with_variant("double_gauged"))
    u, _ = reconstruct_from_double_gauge(np.asarray(gg["uf"][-1]), u0.grid, spec.c2)
    ref = d["u"][-1]
    err = float(np.linalg.norm(u - ref) / np.linalg.norm(ref))
    rep = ExperimentReport("double_gauge")
    rep.scalars.update({"T": T, "edge_ratio_max": max(d.meta["edge_ratio_max"],
                                                      gg.meta["edge_ratio_max"])})
    rep.check("relative L2 of exp(Xi) uf - u", err, None, 1e-5, "equivalence of the two systems")
    return rep


def chain_residual(traj: Trajectory, spec: EquationSpec) -> np.ndarray:
    """Residual of ``L w = (c1 u + c3 u_x) exp(K) d_x wf + N1~`` per interior snapshot.

    Relative to the right side; absolute when the right side vanishes.

    ``w`` and ``wf`` are rebuilt from ``u``; ``L w`` uses the fourth-order
    interaction-picture difference.
    """
    g = traj.grid
    c1, c2, c3, c4 = spec.c1, spec.c2, spec.c3, spec.c4
    U = np.asarray(traj["u"])
    ux, uxx = _rows_d(U, g, 1), _rows_d(U, g, 2)
    J = 2 * c4 * ux
    w = np.exp(-J) * uxx
    K = c1 * primitive_periodic(U, g.L) + c3 * U
    wx = _rows_d(w, g, 1)
    wf = np.exp(-K) * wx
    idx, Lw = linear_operator_fd(traj.with_fields(w=w), "w")
    tab = chain_coefficients(c1, c2, c3, c4)
    res = np.empty(idx.size)
    for r, j in enumerate(idx):
        coef = c1 * U[j] + c3 * ux[j]
        W = uxx[j]
        dwf = _rows_d(wf[j:j + 1], g, 1)[0]
        N1 = (eval_poly(tab["P"], U[j], ux[j], W) * wx[j]
              + eval_poly(tab["R"], U[j], ux[j], W) * np.exp(-J[j]))
        rhs = coef * np.exp(K[j]) * dwf + N1 + coef**2 * np.exp(K[j]) * wf[j]
        scale = np.linalg.norm(rhs)
        res[r] = np.linalg.norm(Lw[r] - rhs) / (scale if scale > 0 else 1.0)
    return res


def chain_residual_run(u0: Field, T: float, spec: EquationSpec, cfg: StepperConfig) -> ExperimentReport:
    traj = evolve(u0, T, cfg, spec.with_variant("quadratic"))
    res = chain_residual(traj, spec)
    rep = ExperimentReport("quadratic_chain")
    rep.scalars.update({"T": T, "edge_ratio_max": traj.meta["edge_ratio_max"]})
    rep.check("sup relative residual of the w equation", float(res.max()), None, 1e-5,
              "gauge chain for the quadratic equation")
    return rep


# -- operator identity ----------------------------------------------------------------


def gauge_identity_order(steps: Sequence[float] = (0.04, 0.02, 0.01, 0.005),
                         grid: Optional[Grid1D] = None, t0: float = 0.3) -> ExperimentReport:
    """Residual of ``exp(L) L(exp(-L) v) = L v + ...`` with a differenced ``d_t``.

    Test fields are moving Gaussians with closed-form time derivatives; only
    ``d_t(exp(-L) v)`` is approximated, by the fourth-order central stencil.
    """
    g = grid or Grid1D(8 * math.pi, 512)
    x = g.x

    def lam(t):
        return 0.4 * np.exp(-((x - 0.5 * t) ** 2)) * (1 + t)

    def lam_t(t):
        e = np.exp(-((x - 0.5 * t) ** 2))
        return 0.4 * e * ((1 + t) * (x - 0.5 * t) + 1)

    def v(t):
        return np.exp(-((x + t) ** 2) / 2) * np.cos(x)

    def v_t(t):
        return -(x + t) * np.exp(-((x + t) ** 2) / 2) * np.cos(x)

    def dx(a, k):
        return spectral_derivative(g.field(a), k).values

    L0, V0 = lam(t0), v(t0)
    lx, lxx, lxxx = dx(L0, 1), dx(L0, 2), dx(L0, 3)
    vx, vxx, vxxx = dx(V0, 1), dx(V0, 2), dx(V0, 3)
    Lv = v_t(t0) + vxxx / 3
    extra = gauge_identity_terms(L0, lx, lxx, lxxx, lam_t(t0), V0, vx, vxx)
    rep = ExperimentReport("gauge_identity_order")
    errs = []
    for h in steps:
        f = lambda t: np.exp(-lam(t)) * v(t)
        ft = (f(t0 - 2 * h) - 8 * f(t0 - h) + 8 * f(t0 + h) - f(t0 + 2 * h)) / (12 * h)
        lhs = np.exp(L0) * (ft + dx(np.exp(-L0) * V0, 3) / 3)
        e = float(np.sqrt(g.dx * np.sum((lhs - Lv - extra) ** 2)))
        errs.append(e)
        rep.add_row(h=h, residual=e)
    fit = fit_loglog(steps, errs)
    rep.fits["residual"] = fit
    rep.check("order of the identity residual", fit.slope, 3.7, 4.3, "fourth-order stencil")
    return rep


# -- solver checks --------------------------------------------------------------------


def linear_exactness_run(u0: Field, T: float, cfg: StepperConfig) -> ExperimentReport:
    tr = evolve(u0, T, cfg, EquationSpec())
    ref = airy_propagate(u0.physical(), T)
    err = (tr.snapshot("u") - ref).norm() / ref.norm()
    rep = ExperimentReport("linear_exactness")
    rep.check("relative L2 against the exact propagator", err, None, 1e-11, "nonlinearity off")
    return rep


def solver_order_run(u0: Field, T: float, h: float, spec: EquationSpec,
                     dt_snap: Optional[float] = None) -> ExperimentReport:
    """Self-convergence order from runs with steps ``4h``, ``2h`` and ``h``."""
    dt_snap = dt_snap or T
    finals = [evolve(u0, T, StepperConfig(k * h, dt_snap), spec).snapshot(spec.fields[0])
              for k in (4, 2, 1)]
    e1 = (finals[0] - finals[1]).norm()
    e2 = (finals[1] - finals[2]).norm()
    order = math.log2(e1 / e2) if e2 > 0 else float("inf")
    rep = ExperimentReport("solver_order")
    rep.scalars.update({"e_4h_2h": e1, "e_2h_h": e2, "h": h})
    rep.check("self-convergence order", order, 3.8, 4.2, "fourth-order scheme")
    return rep


# -- Picard ---------------------------------------------------------------------------


def picard_run(u0: Field, T: float, spec: EquationSpec, dt: float, tol: float = 1e-10,
               max_iter: int = 60) -> ExperimentReport:
    """Contraction ratios at ``T`` and ``T/2``."""
    spec = spec.with_variant("coupled")
    rep = ExperimentReport("picard")
    res = picard(u0, T, spec, tol, max_iter, dt)
    half = picard(u0, T / 2, spec, tol, max_iter, dt / 2)
    for i, d in enumerate(res.differences):
        rep.add_row(T=T, k=i, difference=d, ratio=res.ratios[i - 1] if i else None)
    for i, d in enumerate(half.differences):
        rep.add_row(T=T / 2, k=i, difference=d, ratio=half.ratios[i - 1] if i else None)
    rep.scalars.update({"iterations": res.iterations, "converged": res.converged,
                        "w_residual": float(w_residual(res.trajectory, spec.c1).max())})
    rep.check("converged", float(res.converged), 1, 1)
    rep.check("max successive ratio", max(res.ratios) if res.ratios else 0.0, None, 0.9,
              "contraction on a small ball")
    if res.ratios and half.ratios:
        rep.check("first-ratio reduction when T is halved", res.ratios[0] / half.ratios[0],
                  1.2, 1.7, "T^(1/2) trend")
    rep.result = res
    return rep


# -- Lipschitz probe ------------------------------------------------------------------


def x1_norm(u: Field) -> float:
    return xs_norm(u, 1.0, method="spectral").total


def lipschitz_probe(u0: Field, g: Field, deltas: Sequence[float], T: float,
                    spec: EquationSpec, cfg: StepperConfig) -> ExperimentReport:
    """Difference quotients of the flow map along the direction ``g``."""
    rep = ExperimentReport("lipschitz")
    base = evolve(u0, T, cfg, spec).snapshot(spec.fields[0])
    ratios_x, ratios_h = [], []
    for d in deltas:
        if d == 0:
            rep.add_row(delta=0.0, skipped=True)
            continue
        pert = evolve(u0 + g * d, T, cfg, spec).snapshot(spec.fields[0])
        diff = pert - base
        rx = x1_norm(diff) / x1_norm(g * d)
        rh = hs_norm(diff, 1.0) / hs_norm(g * d, 1.0)
        ratios_x.append(rx)
        ratios_h.append(rh)
        rep.add_row(delta=d, ratio_X1=rx, ratio_H1=rh, skipped=False)
    if ratios_x:
        spread = max(ratios_x) / min(ratios_x)
        rep.scalars.update({"ratio_X1_spread": spread,
                            "ratio_H1_spread": max(ratios_h) / min(ratios_h)})
        rep.check("X^1 ratio spread across delta", spread, None, 2.0, "local Lipschitz bound")
        if spec.c1 == spec.c2 == spec.c3 == spec.c4 == 0:
            dev = max(abs(r - 1.0) for r in ratios_h)
            rep.check("H^1 ratio deviation from 1 (linear flow)", dev, None, 1e-9,
                      "unitary free flow")
    return rep


# -- a priori diagnostic ---------------------------------------------------------------


def apriori_diagnostic(u0: Field, T_list: Sequence[float], spec: EquationSpec,
                       cfg_dt: float, which: str = "Z_T", snaps_per_T: int = 100,
                       eps: float = 0.01) -> ExperimentReport:
    """Growth in ``T`` of the solution norm and of its nonlinear part.

    ``C1`` makes the bound tight at ``T -> 0`` (the norm of the single-snapshot
    trajectory over ``||u0||_{X^1}``) and ``excess = norm - C1 ||u0||_{X^1}``.
    The nonlinear excess is the ``X_T`` norm of the Duhamel part
    ``f - U(t) f(0)`` summed over the evolved fields; its fitted ``T``
    exponent is checked against ``1/2``.
    """
    variant = {"Z_T": "coupled", "Ztilde_T": "double_gauged", "calZ_T": "quadratic_gauged",
               "calZprime_T": "quadratic_gauged"}.get(which)
    if variant is None:
        raise ValidationError(f"unsupported norm {which!r}")
    spec = spec.with_variant(variant)
    rep = ExperimentReport("apriori")
    data = x1_norm(u0)
    zero = Trajectory(u0.grid, np.zeros(1), {"u": u0.physical().values[None, :]}, spec)
    z0 = composite_norm(zero, which, eps=eps, spec=spec).total
    rep.scalars.update({"data_norm": data, "norm_T0": z0, "which": which})
    if data == 0:
        rep.scalars["C1"] = 0.0
        rep.check("zero data gives zero norm", z0, None, 0.0)
        return rep
    C1 = z0 / data
    excess, nonlin = [], []
    for T in T_list:
        h = T / snaps_per_T
        steps = max(1, int(math.ceil(h / cfg_dt - 1e-9)))
        tr = evolve(u0, T, StepperConfig(h / steps, h), spec)
        if "u" not in tr.fields:
            tr = tr.with_fields(u=_reconstruct_u(tr, spec))
        z = composite_norm(tr, which, eps=eps, spec=spec).total
        duh = 0.0
        for name in spec.fields:
            A = np.asarray(tr[name])
            f0 = u0.grid.field(A[0])
            lin = np.array([airy_propagate(f0, t).values for t in tr.times])
            part = Trajectory(u0.grid, tr.times, {"u": A - lin}, spec)
            duh += composite_norm(part, "X_T", eps=eps, spec=spec).total
        excess.append(z - C1 * data)
        nonlin.append(duh)
        rep.add_row(T=T, norm=z, excess=z - C1 * data, nonlinear_excess=duh,
                    C2=duh / (math.sqrt(T) * z * (1 + z**3)))
    rep.scalars.update({"C1": C1, "C2": max(r["C2"] for r in rep.rows)})
    if min(excess) > 0:
        rep.fits["excess"] = fit_loglog(T_list, excess)
    if min(nonlin) > 0:
        fit = fit_loglog(T_list, nonlin)
        rep.fits["nonlinear_excess"] = fit
        rep.check("T-exponent of the nonlinear excess", fit.slope, 0.3, 0.7,
                  "T^(1/2) factor of the a priori bound")
    else:
        rep.check("T-exponent of the nonlinear excess", float("nan"), 0.3, 0.7)
    return rep


def _reconstruct_u(tr: Trajectory, spec: EquationSpec) -> np.ndarray:
    if spec.variant == "double_gauged":
        return np.array([reconstruct_from_double_gauge(np.asarray(r), tr.grid, spec.c2)[0]
                         for r in tr["uf"]])
    raise ValidationError(f"cannot recover u from variant {spec.variant}")
