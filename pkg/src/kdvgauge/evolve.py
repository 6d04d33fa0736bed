"""Time integration, Duhamel quadrature and the Picard harness.

Every system is written as ``L f = N(f)`` with ``L = d_t + (1/3) d_x^3``.  The
dispersive part is removed exactly by the Airy multiplier and the remaining
ODE is advanced with the integrating-factor (Lawson) RK4 scheme.  Nonlinear
terms are evaluated pointwise on a zero-padded mesh, and primitives
``int_{-L}^x`` inside them are recomputed at every stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

import numpy as np

from .errors import BlowUpError, GaugeOverflowError, ValidationError
from .gauge import (
    OVERFLOW_GUARD,
    EquationSpec,
    boundary_ratio,
    chain_coefficients,
    check_gauge_precondition,
    double_gauge_coefficients,
    eval_poly,
    make_gauge_bundle,
)
from .spectral import (
    DEFAULT_PAD,
    Field,
    Grid1D,
    airy_propagate,
    check_pad,
    pad_values,
    primitive_periodic,
    unpad_coef,
)

BLOWUP_FACTOR = 1e3
CFL_LIMIT = 0.5

# highest product degree per variant, used for the padding check
_DEGREE = {
    "direct_kdv": 2, "kdv": 2, "quadratic": 2,
    "coupled": 4, "double_gauged": 5, "quadratic_gauged": 5,
}


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    dt_snap: Optional[float] = None
    pad_factor: int = DEFAULT_PAD
    scheme: str = "if-rk4"

    def __post_init__(self):
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ValidationError(f"dt must be positive, got {self.dt}")
        snap = self.snap
        ratio = snap / self.dt
        if snap < self.dt or abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ValidationError(f"dt_snap ({snap}) must be an integer multiple of dt ({self.dt})")
        if self.scheme != "if-rk4":
            raise ValidationError(f"unknown scheme {self.scheme!r}")
        check_pad(2, self.pad_factor)

    @property
    def snap(self) -> float:
        return self.dt if self.dt_snap is None else self.dt_snap

    @property
    def steps_per_snap(self) -> int:
        return int(round(self.snap / self.dt))


@dataclass
class Trajectory:
    """Uniformly spaced snapshots of named real fields, shape ``(M + 1, n)``."""

    grid: Grid1D
    times: np.ndarray
    fields: dict
    spec: Optional[EquationSpec] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        for k, v in list(self.fields.items()):
            v = np.asarray(v, dtype=float)
            if v.ndim != 2 or v.shape != (self.times.size, self.grid.n):
                raise ValidationError(f"field {k} has shape {v.shape}")
            v.setflags(write=False)
            self.fields[k] = v

    @property
    def names(self) -> tuple:
        return tuple(self.fields)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def dt_snap(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    def __getitem__(self, name: str) -> np.ndarray:
        if name not in self.fields:
            raise ValidationError(f"trajectory has no field {name!r}; available {self.names}")
        return self.fields[name]

    def snapshot(self, name: str, i: int = -1) -> Field:
        return self.grid.field(self[name][i])

    def with_fields(self, **extra) -> "Trajectory":
        f = dict(self.fields)
        f.update(extra)
        return Trajectory(self.grid, self.times, f, self.spec, dict(self.meta))


# -- right-hand sides --------------------------------------------------------


class _Padded:
    """Lazy padded-mesh samples of fields and their derivatives."""

    def __init__(self, coefs: Mapping[str, np.ndarray], grid: Grid1D, pad: int):
        self.coefs = coefs
        self.n = grid.n
        self.m = pad * grid.n
        self.L = grid.L
        self.ik = 1j * grid.rxi
        self._cache = {}

    def __call__(self, name: str, k: int = 0) -> np.ndarray:
        key = (name, k)
        if key not in self._cache:
            c = self.coefs[name]
            if k:
                c = c * self.ik**k
            self._cache[key] = pad_values(c, self.n, self.m)
        return self._cache[key]

    def prim(self, values: np.ndarray) -> np.ndarray:
        return primitive_periodic(values, self.L)


def _exp(name: str, arg: np.ndarray) -> np.ndarray:
    sup = float(np.max(np.abs(arg)))
    if not np.isfinite(sup) or sup > OVERFLOW_GUARD:
        raise GaugeOverflowError(name, sup)
    return np.exp(arg)


def nonlinear_terms(P: _Padded, spec: EquationSpec) -> dict:
    """Pointwise right-hand sides on the padded mesh."""
    c1, c2, c3, c4 = spec.c1, spec.c2, spec.c3, spec.c4
    v = spec.variant
    if v == "direct_kdv":
        return {"u": c1 * P("u") * P("u", 2) + c2 * P("u", 1) ** 2}
    if v == "kdv":
        return {"v": 2.0 * c2 * P("v") * P("v", 1)}
    if v == "quadratic":
        u, ux, uxx = P("u"), P("u", 1), P("u", 2)
        return {"u": c1 * u * uxx + c2 * ux**2 + c3 * ux * uxx + c4 * uxx**2}
    if v == "coupled":
        u, vf, vx = P("u"), P("vf"), P("vf", 1)
        E = _exp("Lambda", c1 * P.prim(u))
        inner = vx + c1 * u * vf
        Q = P.prim(E * E * vf * vf)
        Nu = c1 * E * u * inner + c2 * E * E * vf * vf
        Nv = (2.0 * c2 * E * vf * inner + c1 * c1 * u * u * vx
              + c1 * (c1 - c2) * vf * Q + (2.0 / 3.0) * c1**3 * u**3 * vf)
        return {"u": Nu, "vf": Nv}
    if v == "double_gauged":
        uf, vf, vx = P("uf"), P("vf"), P("vf", 1)
        base = 1.0 - c2 * P.prim(uf)
        if np.min(base) <= 0:
            raise GaugeOverflowError("Xi", float("inf"))
        eX = 1.0 / base
        I = -np.log(base) / c2 if c2 != 0 else P.prim(uf)
        eT = _exp("Theta", (c1 - c2) * I)
        ux = c2 * eX * eX * uf * uf + eX * eT * vf
        Q = P.prim(ux * ux)
        k = {key: float(val) for key, val in double_gauge_coefficients(c1, c2).items()}
        Nu = ((c1 - c2) * eX * eT * uf * vx + c1 * c1 * eX * eX * eT * uf * uf * vf
              + (c1 - c2) * c2 * uf * Q + (c1 - c2 / 3.0) * c2 * c2 * eX**3 * uf**4)
        Nv = (k["a"] * eX**2 * uf**2 * vx + k["b"] * eX**2 * eT * uf * vf**2
              + k["c"] * eX**3 * uf**3 * vf + k["d"] * vf * Q
              + k["e"] * eX**4 / eT * uf**5)
        return {"uf": Nu, "vf": Nv}
    if v == "quadratic_gauged":
        u, ux, w, wx, wxx = P("u"), P("u", 1), P("w"), P("w", 1), P("w", 2)
        eJ = _exp("J", 2.0 * c4 * ux)
        W = eJ * w
        tab = chain_coefficients(c1, c2, c3, c4)
        Nu = c1 * eJ * u * w + c2 * ux**2 + c3 * eJ * ux * w + c4 * eJ**2 * w**2
        Nw = ((c1 * u + c3 * ux) * wxx + eval_poly(tab["P"], u, ux, W) * wx
              + eval_poly(tab["R"], u, ux, W) / eJ)
        return {"u": Nu, "w": Nw}
    raise ValidationError(f"unknown variant {v!r}")


def _is_linear(spec: EquationSpec) -> bool:
    return spec.c1 == spec.c2 == spec.c3 == spec.c4 == 0


def _check_degree(spec: EquationSpec, pad: int) -> None:
    deg = _DEGREE[spec.variant]
    try:
        check_pad(deg, pad)
    except ValidationError as exc:
        raise ValidationError(f"variant {spec.variant}: {exc}") from None


def _rhs_coef(coefs: dict, grid: Grid1D, spec: EquationSpec, pad: int) -> dict:
    names = spec.fields
    if _is_linear(spec):
        return {k: np.zeros_like(coefs[k]) for k in names}
    P = _Padded(coefs, grid, pad)
    out = nonlinear_terms(P, spec)
    return {k: unpad_coef(out[k], grid.n) for k in names}


def _coefs(state: Mapping[str, Field], spec: EquationSpec) -> dict:
    out = {}
    for k in spec.fields:
        if k not in state:
            raise ValidationError(f"state lacks field {k!r} needed by variant {spec.variant}")
        c = np.fft.rfft(state[k].physical().values)
        c[-1] = 0.0
        out[k] = c
    return out


def rhs(state: Mapping[str, Field], spec: EquationSpec, pad_factor: int = DEFAULT_PAD) -> dict:
    """Right-hand sides ``N`` with ``d_t f = -(1/3) d_x^3 f + N``, as physical Fields."""
    _check_degree(spec, pad_factor)
    extra = set(state) - set(spec.fields)
    if extra:
        raise ValidationError(f"unexpected fields {sorted(extra)} for variant {spec.variant}")
    grid = next(iter(state.values())).grid
    out = _rhs_coef(_coefs(state, spec), grid, spec, pad_factor)
    return {k: grid.field(np.fft.irfft(c, grid.n)) for k, c in out.items()}


def initial_state(u0: Field, spec: EquationSpec) -> dict:
    """Compatible data for ``spec.variant`` built from ``u0``."""
    u0 = u0.physical()
    v = spec.variant
    if v in ("direct_kdv", "quadratic"):
        return {"u": u0}
    if v == "kdv":
        return {"v": u0}
    b = make_gauge_bundle(u0, spec)
    if v == "coupled":
        return {"u": u0, "vf": b["vf"]}
    if v == "double_gauged":
        return {"uf": b["uf"], "vf": b["vf"]}
    return {"u": u0, "w": b["w"]}


# -- integrating-factor RK4 --------------------------------------------------


def _state_sup(coefs: dict, grid: Grid1D) -> float:
    return max(float(np.max(np.abs(np.fft.irfft(c, grid.n)))) for c in coefs.values())


def cfl_number(state: Mapping[str, Field], dt: float) -> float:
    grid = next(iter(state.values())).grid
    sup = max(f.sup() for f in state.values())
    return dt * sup * grid.nyquist**2


def evolve(state0: Union[Field, Mapping[str, Field]], T: float, cfg: StepperConfig,
           spec: EquationSpec, backward: bool = False) -> Trajectory:
    """Integrate from ``t = 0`` to ``t = T`` (or ``-T`` when ``backward``)."""
    if isinstance(state0, Field):
        state0 = initial_state(state0, spec)
    _check_degree(spec, cfg.pad_factor)
    if not (T > 0 and np.isfinite(T)):
        raise ValidationError(f"T must be positive, got {T}")
    nsnap = T / cfg.snap
    if abs(nsnap - round(nsnap)) > 1e-9 * max(nsnap, 1.0) or round(nsnap) < 1:
        raise ValidationError(f"T ({T}) must be a positive multiple of dt_snap ({cfg.snap})")
    nsnap = int(round(nsnap))
    if spec.variant in ("coupled", "double_gauged"):
        primary = state0["u"] if "u" in state0 else state0["uf"]
        check_gauge_precondition(primary)
    if not _is_linear(spec):
        cfl = cfl_number(state0, cfg.dt)
        if cfl > CFL_LIMIT:
            raise ValidationError(
                f"CFL proxy dt*sup|u|*xi_max^2 = {cfl:.3g} exceeds {CFL_LIMIT}; reduce dt"
            )

    grid = next(iter(state0.values())).grid
    names = spec.fields
    coefs = _coefs(state0, spec)
    h = -cfg.dt if backward else cfg.dt
    phase = 1j * grid.rxi**3 / 3.0
    E = np.exp(phase * h)
    E2 = np.exp(phase * h / 2)
    pad = cfg.pad_factor

    def F(c):
        return _rhs_coef(c, grid, spec, pad)

    sup0 = _state_sup(coefs, grid)
    limit = BLOWUP_FACTOR * sup0 if sup0 > 0 else np.inf
    snaps = {k: [np.fft.irfft(coefs[k], grid.n)] for k in names}
    times = [0.0]
    edge = max(boundary_ratio(snaps[k][0]) for k in names)

    def partial():
        return Trajectory(grid, np.array(times), {k: np.array(v) for k, v in snaps.items()},
                          spec, {"edge_ratio_max": edge, "aborted": True})

    for isnap in range(nsnap):
        for _ in range(cfg.steps_per_snap):
            k1 = F(coefs)
            k2 = F({k: E2 * (coefs[k] + 0.5 * h * k1[k]) for k in names})
            k3 = F({k: E2 * coefs[k] + 0.5 * h * k2[k] for k in names})
            k4 = F({k: E * coefs[k] + h * E2 * k3[k] for k in names})
            coefs = {
                k: E * coefs[k] + (h / 6.0) * (E * k1[k] + 2.0 * E2 * (k2[k] + k3[k]) + k4[k])
                for k in names
            }
        vals = {k: np.fft.irfft(coefs[k], grid.n) for k in names}
        sup = max(float(np.max(np.abs(v))) for v in vals.values())
        if not np.isfinite(sup) or sup > limit:
            raise BlowUpError(
                f"sup norm {sup:.3g} exceeded {BLOWUP_FACTOR:g} x initial near t = "
                f"{(isnap + 1) * cfg.snap * (-1 if backward else 1):.4g}",
                partial(),
            )
        for k in names:
            snaps[k].append(vals[k])
            edge = max(edge, boundary_ratio(vals[k]))
        times.append((isnap + 1) * cfg.snap * (-1.0 if backward else 1.0))

    meta = {"edge_ratio_max": edge, "dt": cfg.dt, "pad_factor": pad, "scheme": cfg.scheme}
    return Trajectory(grid, np.array(times), {k: np.array(v) for k, v in snaps.items()},
                      spec, meta)


# -- Duhamel and time quadrature ---------------------------------------------


def duhamel(forcing: Trajectory, t: float, name: Optional[str] = None) -> Field:
    """Trapezoid approximation of ``int_0^t U(t - s) F(s) ds``."""
    name = name or forcing.names[0]
    F = forcing[name]
    times = forcing.times
    if t < 0 or t > times[-1] * (1 + 1e-12) + 1e-15:
        raise ValidationError(f"t = {t} lies outside the forcing window [0, {times[-1]}]")
    if t == 0:
        return forcing.grid.zeros()
    g = forcing.grid
    j = int(np.searchsorted(times, t, side="right")) - 1
    j = min(j, times.size - 1)
    nodes = list(times[: j + 1])
    vals = [F[i] for i in range(j + 1)]
    if t - times[j] > 1e-14 * max(1.0, t):
        theta = (t - times[j]) / (times[j + 1] - times[j])
        nodes.append(t)
        vals.append((1 - theta) * F[j] + theta * F[j + 1])
    nodes = np.array(nodes)
    sym = 1j * g.rxi**3 / 3.0
    c = np.fft.rfft(np.array(vals), axis=-1) * np.exp(np.outer(t - nodes, sym))
    w = np.zeros(nodes.size)
    d = np.diff(nodes)
    w[:-1] += d / 2
    w[1:] += d / 2
    total = np.tensordot(w, c, axes=1)
    return g.field(np.fft.irfft(total, g.n))


def cumulative_quad4(G: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order cumulative integral along axis 0 on uniform nodes."""
    M = G.shape[0] - 1
    out = np.zeros_like(G)
    if M == 0:
        return out
    if M < 3:
        for j in range(M):
            out[j + 1] = out[j] + 0.5 * h * (G[j] + G[j + 1])
        return out
    s = h / 24.0
    panels = np.empty((M,) + G.shape[1:], dtype=G.dtype)
    panels[0] = s * (9 * G[0] + 19 * G[1] - 5 * G[2] + G[3])
    panels[1:M - 1] = s * (-G[0:M - 2] + 13 * G[1:M - 1] + 13 * G[2:M] - G[3:M + 1])
    panels[M - 1] = s * (G[M - 3] - 5 * G[M - 2] + 19 * G[M - 1] + 9 * G[M])
    np.cumsum(panels, axis=0, out=out[1:])
    return out


def linear_operator_fd(traj: Trajectory, name: str) -> tuple:
    """``L f`` at interior snapshots via ``U(t) d_t [U(-t) f]``.

    The time derivative is the fourth-order central difference, so the result
    lives on snapshots ``2 .. M - 2``; returns ``(indices, values)``.
    """
    f = traj[name]
    g = traj.grid
    h = traj.dt_snap
    if f.shape[0] < 5:
        raise ValidationError("need at least five snapshots for the difference stencil")
    sym = 1j * g.rxi**3 / 3.0
    c = np.fft.rfft(f, axis=-1)
    idx = np.arange(2, f.shape[0] - 2)
    out = np.empty((idx.size, g.n))
    for r, j in enumerate(idx):
        acc = np.zeros(c.shape[1], dtype=complex)
        for off, wgt in ((-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0)):
            acc += wgt * np.exp(-sym * off * h) * c[j + off]
        out[r] = np.fft.irfft(acc / (12.0 * h), g.n)
    return idx, out


# -- Picard harness ------------------------------------------------------------


@dataclass
class PicardResult:
    trajectory: Trajectory
    differences: list
    ratios: list
    converged: bool
    iterations: int


def proxy_norm(u: np.ndarray, grid: Grid1D, h: float) -> float:
    """max(L_T^inf L_x^2, L_x^inf L_T^2 of d_x) for samples of shape ``(M + 1, n)``."""
    l2 = float(np.max(np.sqrt(grid.dx * np.sum(u * u, axis=1))))
    ux = np.fft.irfft(np.fft.rfft(u, axis=1) * (1j * grid.rxi), grid.n, axis=1)
    sq = ux * ux
    tw = np.full(u.shape[0], h)
    tw[0] = tw[-1] = h / 2
    kato = float(np.sqrt(np.max(tw @ sq))) if u.shape[0] > 1 else 0.0
    return max(l2, kato)


def picard(u0: Field, T: float, spec: EquationSpec, tol: float = 1e-10, max_iter: int = 60,
           dt: float = 1e-3, pad_factor: int = DEFAULT_PAD) -> PicardResult:
    """Iterate the Duhamel map of the coupled system from the free evolution.

    Differences between iterates are measured in :func:`proxy_norm`, summed
    over ``u`` and ``vf``.  Non-convergence is reported, not raised.
    """
    if spec.variant != "coupled":
        raise ValidationError("picard works on the coupled variant")
    _check_degree(spec, pad_factor)
    M = T / dt
    if abs(M - round(M)) > 1e-9 * M or round(M) < 3:
        raise ValidationError(f"T ({T}) must be a multiple of dt ({dt}) with at least 3 steps")
    M = int(round(M))
    grid = u0.grid
    st = initial_state(u0, spec)
    times = dt * np.arange(M + 1)
    sym = 1j * grid.rxi**3 / 3.0
    prop = np.exp(np.outer(times, sym))
    c0 = {k: np.fft.rfft(st[k].values) for k in ("u", "vf")}
    for c in c0.values():
        c[-1] = 0.0
    cur = {k: prop * c0[k] for k in c0}

    diffs, ratios = [], []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        P = _Padded(cur, grid, pad_factor)
        N = nonlinear_terms(P, spec)
        new = {}
        for k in ("u", "vf"):
            Nc = unpad_coef(N[k], grid.n)
            G = Nc / prop
            new[k] = prop * (c0[k] + cumulative_quad4(G, dt))
        d = sum(
            proxy_norm(np.fft.irfft(new[k] - cur[k], grid.n, axis=1), grid, dt)
            for k in ("u", "vf")
        )
        diffs.append(d)
        if len(diffs) > 1 and diffs[-2] > 0:
            ratios.append(d / diffs[-2])
        cur = new
        if d < tol:
            converged = True
            break
        if not np.isfinite(d):
            break

    fields = {k: np.fft.irfft(cur[k], grid.n, axis=1) for k in ("u", "vf")}
    traj = Trajectory(grid, times, fields, spec,
                      {"edge_ratio_max": max(boundary_ratio(f[-1]) for f in fields.values()),
                       "method": "picard"})
    return PicardResult(traj, diffs, ratios, converged, it)


def free_trajectory(u0: Field, times) -> Trajectory:
    """Snapshots of the free evolution at ``times``."""
    times = np.asarray(times, dtype=float)
    vals = np.array([airy_propagate(u0, t).values for t in times])
    return Trajectory(u0.grid, times, {"u": vals}, EquationSpec(), {"method": "exact"})
