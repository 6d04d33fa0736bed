"""Mixed space-time norms, composite solution norms and estimate checks.

Time integrals use the trapezoid rule over the stored snapshots and space
integrals use the grid weight ``dx``.  Time windows are one-sided ``[0, T]``
unless a backward run is fused in with :func:`fuse_symmetric`.  Estimate
checks never compare against invented constants; they measure ratios and
test whether the worst ratio over a fixed sample set is stable when the grid
and the snapshot spacing are both refined by a factor of two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import AdmissibilityError, ValidationError
from .gauge import EquationSpec
from .reports import ExperimentReport, NormReport
from .spectral import Field, Grid1D, MultiplierSpec, bessel, derivative, product, riesz, primitive_periodic

INF = math.inf
DEFAULT_EPS = 0.01
REFINE_TOL = 0.2


@dataclass(frozen=True)
class MixedNormSpec:
    """``L_outer^p L_inner^q``; ``outer`` is ``"x"`` or ``"t"``."""

    outer: str
    p: float
    q: float
    multiplier: Optional[MultiplierSpec] = None

    def __post_init__(self):
        if self.outer not in ("x", "t"):
            raise ValidationError(f"outer variable must be 'x' or 't', got {self.outer!r}")
        for e in (self.p, self.q):
            if not (e >= 1):
                raise ValidationError(f"exponents must lie in [1, inf], got {e}")

    @property
    def label(self) -> str:
        inner = "t" if self.outer == "x" else "x"
        fmt = lambda e: "inf" if e == INF else f"{e:g}"
        pre = f"{self.multiplier.label} " if self.multiplier else ""
        return f"{pre}L_{self.outer}^{fmt(self.p)} L_{inner}^{fmt(self.q)}"


def time_weights(M1: int, h: float) -> np.ndarray:
    w = np.full(M1, h)
    if M1 == 1:
        return np.zeros(1)
    w[0] = w[-1] = h / 2.0
    return w


def _lp(A: np.ndarray, p: float, w, axis: int) -> np.ndarray:
    A = np.abs(A)
    if p == INF:
        return A.max(axis=axis)
    w = np.asarray(w)
    if axis == 0:
        s = np.tensordot(w, A**p, axes=(0, 0)) if w.ndim else w * (A**p).sum(axis=0)
    else:
        s = (A**p) @ w if w.ndim else w * (A**p).sum(axis=1)
    return s ** (1.0 / p)


def apply_rows(A: np.ndarray, grid: Grid1D, m: Optional[MultiplierSpec]) -> np.ndarray:
    if m is None:
        return A
    sym = m.evaluate(grid.rxi)
    return np.fft.irfft(np.fft.rfft(A, axis=-1) * sym, grid.n, axis=-1)


def mixed_norm_array(A: np.ndarray, grid: Grid1D, h: float, spec: MixedNormSpec) -> float:
    """Mixed norm of samples ``A`` with shape ``(M + 1, n)`` and snapshot spacing ``h``."""
    A = apply_rows(np.atleast_2d(A), grid, spec.multiplier)
    tw = time_weights(A.shape[0], h)
    if spec.outer == "x":
        inner = _lp(A, spec.q, tw, axis=0)
        return float(_lp(inner, spec.p, grid.dx, axis=0))
    inner = _lp(A, spec.q, grid.dx, axis=1)
    return float(_lp(inner, spec.p, tw, axis=0))


def mixed_norm(traj, name: str, spec: MixedNormSpec) -> float:
    """Mixed space-time norm of the stored field ``name``."""
    return mixed_norm_array(traj[name], traj.grid, traj.dt_snap, spec)


def fuse_symmetric(forward, backward):
    """Join a forward run on ``[0, T]`` and a backward run on ``[-T, 0]``."""
    from .evolve import Trajectory

    if (forward.times.shape != backward.times.shape
            or not np.allclose(forward.times[1:], -backward.times[1:])):
        raise ValidationError("forward and backward runs must share snapshot times")
    fields = {k: np.concatenate([backward[k][:0:-1], forward[k]]) for k in forward.names}
    times = np.concatenate([backward.times[:0:-1], forward.times])
    meta = dict(forward.meta, window="symmetric")
    return Trajectory(forward.grid, times, fields, forward.spec, meta)


# -- composite norms -----------------------------------------------------------


def x_t_components(A: np.ndarray, grid: Grid1D, h: float, eps: float = DEFAULT_EPS) -> dict:
    """The four pieces of ``X_T``."""
    return {
        "L_T^inf L_x^2": mixed_norm_array(A, grid, h, MixedNormSpec("t", INF, 2)),
        "L_T^6 L_x^inf": mixed_norm_array(A, grid, h, MixedNormSpec("t", 6, INF)),
        "dx L_x^inf L_T^2": mixed_norm_array(A, grid, h, MixedNormSpec("x", INF, 2, derivative(1))),
        "<dx>^(-3/4-eps) L_x^2 L_T^inf": mixed_norm_array(
            A, grid, h, MixedNormSpec("x", 2, INF, bessel(-0.75 - eps))),
    }


def xr_t_components(A: np.ndarray, grid: Grid1D, h: float, r: float,
                    eps: float = DEFAULT_EPS) -> dict:
    """Pieces of ``X^r_T``; the fractional piece is omitted for integer ``r``."""
    if r < 0:
        raise ValidationError(f"r must be >= 0, got {r}")
    out = {f"<dx>^{r:g} {k}": v
           for k, v in x_t_components(apply_rows(A, grid, bessel(r)), grid, h, eps).items()}
    out[f"|dx|^{r + 0.125:g} L_T^8 L_x^4"] = mixed_norm_array(
        A, grid, h, MixedNormSpec("t", 8, 4, riesz(r + 0.125)))
    if r != int(r):
        k = math.ceil(r) - 1
        th = r - k
        out[f"dx^{k + 1} L_x^{4 / th:g} L_T^{4 / (2 - th):g}"] = mixed_norm_array(
            A, grid, h, MixedNormSpec("x", 4.0 / th, 4.0 / (2.0 - th), derivative(k + 1)))
    return out


def _rows_deriv(A: np.ndarray, grid: Grid1D, k: int = 1) -> np.ndarray:
    return apply_rows(A, grid, derivative(k))


def _prefixed(prefix: str, comps: dict) -> dict:
    return {f"{prefix}: {k}": v for k, v in comps.items()}


_ALIASES = {
    "X_T": "X_T", "Y_T": "Y_T", "Z_T": "Z_T",
    "Ytilde_T": "Ytilde_T", "Ỹ_T": "Ytilde_T",
    "Ztilde_T": "Ztilde_T", "Z̃_T": "Ztilde_T",
    "Xr_T": "Xr_T", "X^r_T": "Xr_T",
    "Zs_T": "Zs_T", "Z^s_T": "Zs_T",
    "calZ_T": "calZ_T", "𝒵_T": "calZ_T",
    "calZprime_T": "calZprime_T", "𝒵'_T": "calZprime_T",
}
COMPOSITES = tuple(sorted(set(_ALIASES.values())))


def composite_norm(traj, which: str, s: Optional[float] = None, r: Optional[float] = None,
                   eps: float = DEFAULT_EPS, spec: Optional[EquationSpec] = None,
                   name: str = "u", chain_weight: float = 2.0) -> NormReport:
    """Composite solution norms, every component reported separately.

    Gauge fields are rebuilt from ``name`` with the coefficients of ``spec``
    (default: the trajectory's own).  ``Y_T`` uses a stored ``vf`` field when
    present.  ``chain_weight`` multiplies ``c4`` in the weight of ``u_xx``
    inside ``calZ_T``.
    """
    key = _ALIASES.get(which)
    if key is None:
        raise ValidationError(f"unknown composite norm {which!r}; choose from {COMPOSITES}")
    spec = spec or traj.spec or EquationSpec()
    g, h = traj.grid, traj.dt_snap
    u = np.asarray(traj[name])
    I = primitive_periodic(u, g.L)
    ux = _rows_deriv(u, g)
    supI = float(np.max(np.abs(I)))
    c1, c2, c3, c4 = spec.c1, spec.c2, spec.c3, spec.c4
    X = lambda A: x_t_components(A, g, h, eps)
    params = {"eps": eps, "T": float(traj.T), "window": traj.meta.get("window", "one-sided")}
    comps = {}
    if key == "X_T":
        comps = X(u)
    elif key == "Y_T":
        vf = np.asarray(traj["vf"]) if "vf" in traj.fields else np.exp(-c1 * I) * ux
        comps.update(_prefixed("<dx>u", X(apply_rows(u, g, bessel(1)))))
        comps.update(_prefixed("<dx>vf", X(apply_rows(vf, g, bessel(1)))))
        comps["sup |int u|"] = supI
    elif key in ("Z_T", "Ytilde_T"):
        vf = np.exp(-c1 * I) * ux
        comps.update(_prefixed("u", X(u)))
        comps.update(_prefixed("exp(-c1 I) u_x", X(vf)))
        comps["sup |int u|"] = supI
        if key == "Ytilde_T":
            comps.update(_prefixed("<dx>(exp(-c1 I) u_x)", X(apply_rows(vf, g, bessel(1)))))
    elif key == "Ztilde_T":
        uf = np.exp(-c2 * I) * u
        comps.update(_prefixed("uf", X(uf)))
        comps.update(_prefixed("vf", X(np.exp(-(c1 - c2) * I) * _rows_deriv(uf, g))))
        comps["sup |int u|"] = supI
    elif key == "Xr_T":
        if r is None:
            raise ValidationError("X^r_T needs r")
        comps = xr_t_components(u, g, h, r, eps)
        params["r"] = r
    elif key == "Zs_T":
        if s is None:
            raise ValidationError("Z^s_T needs s")
        rr = s - 1.0
        comps.update(_prefixed("u", xr_t_components(u, g, h, rr, eps)))
        comps.update(_prefixed("exp(-c1 I) u_x", xr_t_components(np.exp(-c1 * I) * ux, g, h, rr, eps)))
        comps["sup |int u|"] = supI
        params["s"] = s
    elif key == "calZ_T":
        uxx = _rows_deriv(u, g, 2)
        w = np.exp(-chain_weight * c4 * ux) * uxx
        comps.update(_prefixed("u", X(u)))
        comps.update(_prefixed("u_x", X(ux)))
        comps.update(_prefixed("w", X(w)))
        comps.update(_prefixed("wf", X(np.exp(-c1 * I - c3 * u) * _rows_deriv(w, g))))
        comps["sup |c1 int u|"] = abs(c1) * supI
        params["chain_weight"] = chain_weight
    elif key == "calZprime_T":
        if c4 != 0:
            raise ValidationError("calZprime_T is defined for c4 = 0")
        y = np.exp(-c3 * u) * ux
        comps.update(_prefixed("u", X(u)))
        comps.update(_prefixed("exp(-c3 u) u_x", X(y)))
        comps.update(_prefixed("exp(-c1 I) d_x(...)", X(np.exp(-c1 * I) * _rows_deriv(y, g))))
        comps["sup |c1 int u|"] = abs(c1) * supI
    return NormReport(key, comps, params)


# -- linear estimates ----------------------------------------------------------


def check_admissible(q, r, s) -> None:
    """Exact check of ``-s + 3/q + 1/r = 1/2`` with ``2 <= q, r <= inf`` and ``0 <= s <= 1/q``."""
    def frac(v):
        if v == INF:
            return Fraction(0)
        return 1 / Fraction(v).limit_denominator(10**6) if not isinstance(v, Fraction) else 1 / v

    inv_q, inv_r = frac(q), frac(r)
    fs = Fraction(s).limit_denominator(10**6)
    if inv_q > Fraction(1, 2) or inv_r > Fraction(1, 2):
        raise AdmissibilityError(f"(q, r, s) = ({q}, {r}, {s}): need 2 <= q, r <= inf")
    if not (0 <= fs <= inv_q):
        raise AdmissibilityError(f"(q, r, s) = ({q}, {r}, {s}): need 0 <= s <= 1/q")
    val = -fs + 3 * inv_q + inv_r
    if val != Fraction(1, 2):
        raise AdmissibilityError(
            f"(q, r, s) = ({q}, {r}, {s}) is not admissible: -s + 3/q + 1/r = {val} != 1/2")


DEFAULT_TRIPLES = ((6, INF, 0.0), (4, INF, 0.25), (8, 8, 0.0))


def sample_set(seed: int = 0, count: int = 8) -> list:
    """Seeded wave packets, returned as callables of ``x``."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        x0 = rng.uniform(-4.0, 4.0)
        width = rng.uniform(0.7, 2.0)
        k = rng.uniform(0.0, 3.0)
        phi = rng.uniform(0.0, 2 * np.pi)
        amp = rng.uniform(0.5, 1.5)
        out.append(lambda x, x0=x0, w=width, k=k, phi=phi, a=amp:
                   a * np.exp(-((x - x0) / w) ** 2) * np.cos(k * x + phi))
    return out


def _free_rows(u0: Field, times: np.ndarray) -> np.ndarray:
    g = u0.grid
    c = np.fft.rfft(u0.values)
    ph = np.exp(np.outer(times, 1j * g.rxi**3 / 3.0))
    return np.fft.irfft(ph * c, g.n, axis=1)


def _l2(u: Field) -> float:
    return float(np.sqrt(u.grid.dx * np.sum(u.values**2)))


def _hs(u: Field, s: float) -> float:
    f = u.fourier()
    return float(np.sqrt(f.grid.dxi * np.sum(((1 + f.grid.xi**2) ** (s / 2) * np.abs(f.values)) ** 2)))


def linear_ratios(u0: Field, T: float, dt_snap: float, triples=DEFAULT_TRIPLES,
                  s_max: float = 0.8) -> dict:
    """LHS/RHS ratios of the Strichartz, smoothing and maximal estimates for one datum."""
    M = int(round(T / dt_snap))
    times = dt_snap * np.arange(M + 1)
    A = _free_rows(u0, times)
    g = u0.grid
    n0 = _l2(u0)
    out = {}
    for q, r, s in triples:
        lhs = mixed_norm_array(A, g, dt_snap, MixedNormSpec("t", q, r, riesz(s) if s else None))
        out[f"strichartz q={q:g} r={r:g} s={s:g}"] = lhs / n0
    out["kato"] = mixed_norm_array(A, g, dt_snap, MixedNormSpec("x", INF, 2, derivative(1))) / n0
    out[f"maximal s={s_max:g}"] = (mixed_norm_array(A, g, dt_snap, MixedNormSpec("x", 2, INF))
                                   / _hs(u0, s_max))
    return out


def _stability(report: ExperimentReport, label: str, coarse: float, fine: float) -> None:
    change = abs(fine / coarse - 1.0) if coarse > 0 else (0.0 if fine == 0 else INF)
    report.scalars[f"{label} max coarse"] = coarse
    report.scalars[f"{label} max fine"] = fine
    report.check(f"{label} refinement change", change, None, REFINE_TOL,
                 "measured ratio; stability under 2x refinement")


def check_linear_estimates(samples: Sequence, T: float, grid: Grid1D, dt_snap: float,
                           triples=DEFAULT_TRIPLES, s_max: float = 0.8) -> ExperimentReport:
    """Worst-case ratios over ``samples`` on a grid and on its 2x refinement."""
    for q, r, s in triples:
        check_admissible(q, r, s)
    if not s_max > 0.75:
        raise AdmissibilityError(f"the maximal estimate needs s > 3/4, got {s_max}")
    rep = ExperimentReport("linear_estimates")
    levels = [(grid, dt_snap), (grid.refined(2), dt_snap / 2)]
    per_level = []
    for lvl, (g, h) in enumerate(levels):
        table = {}
        for i, f in enumerate(samples):
            ratios = linear_ratios(g.sample(f) if callable(f) else f, T, h, triples, s_max)
            for k, v in ratios.items():
                table.setdefault(k, []).append(v)
                rep.add_row(level=lvl, n=g.n, dt_snap=h, sample=i, estimate=k, ratio=v)
        per_level.append(table)
    for k in per_level[0]:
        c, f = max(per_level[0][k]), max(per_level[1][k])
        rep.scalars[f"{k} median coarse"] = float(np.median(per_level[0][k]))
        _stability(rep, k, c, f)
    rep.scalars.update({"T": T, "n": grid.n, "dt_snap": dt_snap})
    return rep


# -- product estimate -----------------------------------------------------------


def _hdot(u: Field, k: float) -> float:
    f = u.fourier()
    return float(np.sqrt(f.grid.dxi * np.sum((riesz(k).evaluate(f.grid.xi) * np.abs(f.values)) ** 2)))


def check_product_estimate(f: Field, g: Field, r: float) -> float:
    """``||f g||_{H^r}`` over ``||f||_{H^r} ||g||_inf + ||f||_{H^{r-[r]}} ||g||_{Hdot^{[r]+1}}``."""
    if r < 0:
        raise ValidationError(f"r must be >= 0, got {r}")
    fr = math.floor(r)
    lhs = _hs(product(f, g), r)
    rhs = _hs(f, r) * g.sup() + _hs(f, r - fr) * _hdot(g, fr + 1)
    if rhs == 0:
        return 0.0
    return lhs / rhs


def product_pairs(seed: int = 0, count: int = 6) -> list:
    """Seeded ``(f, g)`` pairs: smooth bumps plus high-low separated packets."""
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(count):
        x0, x1 = rng.uniform(-2, 2, size=2)
        w0, w1 = rng.uniform(0.8, 2.0, size=2)
        if i % 2 == 0:
            f = lambda x, x0=x0, w=w0: np.exp(-((x - x0) / w) ** 2)
            g = lambda x, x1=x1, w=w1: np.exp(-((x - x1) / w) ** 2)
        else:
            kf = rng.uniform(12.0, 16.0)
            f = lambda x, x0=x0, w=w0, k=kf: np.exp(-((x - x0) / (2 * w)) ** 2) * np.cos(k * x)
            g = lambda x, x1=x1, w=w1: np.exp(-((x - x1) / (2 * w)) ** 2) * np.cos(2 * x)
        pairs.append((f, g))
    return pairs


def product_estimate_report(grid: Grid1D, r: float, pairs=None) -> ExperimentReport:
    pairs = pairs or product_pairs()
    rep = ExperimentReport("product_estimate")
    worst = []
    for lvl, g in enumerate([grid, grid.refined(2)]):
        vals = []
        for i, (f, h) in enumerate(pairs):
            v = check_product_estimate(g.sample(f), g.sample(h), r)
            vals.append(v)
            rep.add_row(level=lvl, n=g.n, pair=i, r=r, ratio=v)
        worst.append(max(vals))
    _stability(rep, f"product r={r:g}", worst[0], worst[1])
    return rep


# -- primitive-weighted maximal estimate ---------------------------------------


@dataclass
class UnboundResult:
    ratio: float
    lhs: float
    rhs: float
    degenerate: bool = False


def check_unbound_lemma(traj, r: float = 0.0, eps: float = DEFAULT_EPS) -> UnboundResult:
    """Ratio of ``||<dx>^r u||_{L_x^2 L_T^inf}`` to the gauge-weighted bound.

    ``r = 0`` uses ``exp(3/2 |Lambda|)(|u|_X + |u|_X^2 + |vf|_X^2)``; ``r > 0``
    uses ``exp(2 |Lambda|)(|u|_Xt + |u|_Xt^([r]+3))`` with
    ``Xt = X^rho + X^rho(vf)`` and ``rho = max(r - 1/4 + 2 eps, 0)``.
    """
    if "vf" not in traj.fields or "u" not in traj.fields:
        raise ValidationError("the check needs a coupled trajectory with fields 'u' and 'vf'")
    c1 = traj.spec.c1 if traj.spec is not None else 0.0
    g, h = traj.grid, traj.dt_snap
    u = np.asarray(traj["u"])
    vf = np.asarray(traj["vf"])
    lam = float(np.max(np.abs(c1 * primitive_periodic(u, g.L))))
    lhs = mixed_norm_array(u, g, h, MixedNormSpec("x", 2, INF, bessel(r) if r else None))
    if r == 0:
        xu = sum(x_t_components(u, g, h, eps).values())
        xv = sum(x_t_components(vf, g, h, eps).values())
        rhs = math.exp(1.5 * lam) * (xu + xu**2 + xv**2)
    else:
        rho = max(r - 0.25 + 2 * eps, 0.0)
        xt = (sum(xr_t_components(u, g, h, rho, eps).values())
              + sum(xr_t_components(vf, g, h, rho, eps).values()))
        rhs = math.exp(2.0 * lam) * (xt + xt ** (math.floor(r) + 3))
    if rhs == 0:
        return UnboundResult(0.0, lhs, rhs, True)
    return UnboundResult(lhs / rhs, lhs, rhs, False)
