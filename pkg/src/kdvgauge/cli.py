"""Batch command-line front end.

Usage::

    kdvgauge <subcommand> [--config FILE] [--section.key VALUE ...] [--output-dir DIR]

Every subcommand writes ``summary.json`` and one or more CSV series into
``<output dir>/<subcommand>/``.  The output directory is taken from
``--output-dir``, then the ``KDVGAUGE_OUTPUT_DIR`` environment variable, then
``output.dir`` in the configuration.

Exit codes: 0 all checks passed, 2 invalid configuration or violated
precondition, 3 numerical abort, 4 a check outside its tolerance.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import sys
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import __version__
from . import experiments as ex
from .errors import NumericalError, ValidationError
from .evolve import StepperConfig, evolve
from .gauge import EquationSpec, boundary_ratio, window_total
from .norms import (
    DEFAULT_TRIPLES,
    INF,
    check_admissible,
    check_linear_estimates,
    check_unbound_lemma,
    composite_norm,
    product_estimate_report,
    product_pairs,
    sample_set,
)
from .reports import ExperimentReport
from .spectral import Grid1D, airy_propagate

ENV_OUTPUT = "KDVGAUGE_OUTPUT_DIR"
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_TOLERANCE = 0, 2, 3, 4
SUBCOMMANDS = ("simulate", "picard", "gauge-check", "estimates", "illposed-a",
               "illposed-b", "lipschitz", "apriori")

_BASE = {
    "equation": {"c1": 0.0, "c2": 0.0, "c3": 0.0, "c4": 0.0, "variant": "direct_kdv"},
    "grid": {"L": 16 * math.pi, "n": 512},
    "stepper": {"dt": 0.0025, "dt_snap": 0.05, "pad_factor": 3},
    "data": {"profile": "gaussian", "amp": 0.1, "width": 1.0, "shift": 0.0},
    "experiment": {},
    "seed": 0,
    "output": {"dir": "kdvgauge-output"},
}

_DEFAULTS = {
    "simulate": {
        "experiment": {"T": 1.0, "norm": "X_T", "tol": 1e-11},
    },
    "picard": {
        "equation": {"c1": 1.0},
        "grid": {"n": 512},
        "data": {"width": 0.5},
        "experiment": {"T": 0.2, "dt": 0.002, "tol": 1e-10, "max_iter": 60},
    },
    "gauge-check": {
        "equation": {"c1": 1.0},
        "data": {"profile": "dgaussian"},
        "stepper": {"dt": 0.0025, "dt_snap": 0.0025},
        "experiment": {"T": 0.5},
    },
    "estimates": {
        "stepper": {"dt_snap": 0.01},
        "equation": {"c1": 1.0},
        "data": {"profile": "dgaussian"},
        "experiment": {"T": 1.0, "samples": 8, "s_max": 0.8, "product_r": [0.0, 1.5],
                       "product_pairs": 6, "unbound_r": [0.0, 1.0], "unbound_T": 0.5,
                       "triples": [[q if q != INF else "inf", r if r != INF else "inf", s]
                                   for q, r, s in DEFAULT_TRIPLES]},
    },
    "illposed-a": {
        "experiment": {"N_list": [8, 16, 32, 64, 128], "s_list": [0.0, 1.0], "t": 0.01,
                       "per_half_width": 4, "oracle": True, "oracle_N": 8, "oracle_M": 100,
                       "oracle_grid_n": 65536, "oracle_grid_L": 256 * math.pi,
                       "window_N": 8, "window_levels": 4},
    },
    "illposed-b": {
        "experiment": {"N_list": [8, 16, 32, 64, 128], "t": 0.01, "per_half_width": 4,
                       "primitive_s": 0.5, "primitive_a": 1.0, "zero_s": 0.0, "zero_a": 1.0},
    },
    "lipschitz": {
        "equation": {"c1": 1.0, "c2": 0.5},
        "experiment": {"T": 0.5, "deltas": [1e-2, 1e-3, 1e-4],
                       "perturbation": {"amp": 1.0, "width": 1.0, "shift": 1.0},
                       "linear_check": True},
    },
    "apriori": {
        "equation": {"c1": 1.0},
        "grid": {"n": 1024},
        "data": {"width": 0.5},
        "experiment": {"T_list": [0.05, 0.1, 0.2, 0.4], "dt": 0.0005, "norm": "Z_T",
                       "snaps_per_T": 100},
    },
}


# -- configuration -------------------------------------------------------------


def _merge(base: dict, over: dict, path: str = "", strict: bool = True) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        key = f"{path}{k}"
        if strict and k not in out:
            raise ValidationError(f"unknown configuration key {key!r}")
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v, key + ".", strict)
        else:
            out[k] = copy.deepcopy(v)
    return out


def default_config(subcommand: str) -> dict:
    if subcommand not in SUBCOMMANDS:
        raise ValidationError(f"unknown subcommand {subcommand!r}")
    return _merge(_BASE, _DEFAULTS[subcommand], strict=False)


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _set_dotted(cfg: dict, dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ValidationError(f"unknown configuration key {dotted!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ValidationError(f"unknown configuration key {dotted!r}")
    node[parts[-1]] = value


def build_config(subcommand: str, config_path: Optional[str] = None,
                 overrides: Optional[list] = None) -> dict:
    """Defaults, then the JSON file, then ``(dotted key, value)`` overrides."""
    cfg = default_config(subcommand)
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as fh:
                user = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {config_path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ValidationError("config file must hold a JSON object")
        cfg = _merge(cfg, user)
    for key, value in overrides or []:
        _set_dotted(cfg, key, value)
    return cfg


def _num(v, name, positive=False, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(f"{name} must be a number, got {v!r}")
    if not math.isfinite(v):
        raise ValidationError(f"{name} must be finite")
    if positive and v <= 0:
        raise ValidationError(f"{name} must be positive, got {v}")
    if integer and int(v) != v:
        raise ValidationError(f"{name} must be an integer, got {v}")
    return int(v) if integer else float(v)


def _inf(v):
    return INF if v in ("inf", "Infinity", float("inf")) else v


# -- builders ---------------------------------------------------------------------


def make_grid(cfg: dict) -> Grid1D:
    g = cfg["grid"]
    return Grid1D(_num(g["L"], "grid.L", positive=True), _num(g["n"], "grid.n", integer=True))


def make_equation(cfg: dict, variant: Optional[str] = None) -> EquationSpec:
    e = cfg["equation"]
    return EquationSpec(*(_num(e[k], f"equation.{k}") for k in ("c1", "c2", "c3", "c4")),
                        variant=variant or e["variant"])


def make_stepper(cfg: dict) -> StepperConfig:
    s = cfg["stepper"]
    snap = s["dt_snap"]
    return StepperConfig(_num(s["dt"], "stepper.dt", positive=True),
                         None if snap is None else _num(snap, "stepper.dt_snap", positive=True),
                         _num(s["pad_factor"], "stepper.pad_factor", integer=True))


def profile(grid: Grid1D, d: dict, name: str = "data"):
    """``gaussian``: ``amp exp(-y^2)``; ``dgaussian``: ``-2 amp y exp(-y^2)``
    (zero mean); with ``y = (x - shift) / width``."""
    amp = _num(d["amp"], f"{name}.amp")
    w = _num(d["width"], f"{name}.width", positive=True)
    y = (grid.x - _num(d["shift"], f"{name}.shift")) / w
    kind = d.get("profile", "gaussian")
    if kind == "gaussian":
        return grid.field(amp * np.exp(-y * y))
    if kind == "dgaussian":
        return grid.field(-2.0 * amp * y * np.exp(-y * y))
    raise ValidationError(f"unknown {name}.profile {kind!r}; expected gaussian or dgaussian")


# -- subcommands -------------------------------------------------------------------


def _grid_diag(u0) -> dict:
    return {"L": u0.grid.L, "n": u0.grid.n, "dx": u0.grid.dx,
            "data_edge_ratio": boundary_ratio(u0.physical().values),
            "data_window_integral": window_total(u0)}


def cmd_simulate(cfg):
    g = make_grid(cfg)
    spec = make_equation(cfg)
    stepper = make_stepper(cfg)
    u0 = profile(g, cfg["data"])
    exp = cfg["experiment"]
    T = _num(exp["T"], "experiment.T", positive=True)
    tr = evolve(u0, T, stepper, spec)
    rep = ExperimentReport("simulate")
    series = []
    for i, t in enumerate(tr.times):
        row = {"t": t}
        for name in tr.names:
            a = np.asarray(tr[name][i])
            row[f"{name}_l2"] = float(np.sqrt(g.dx * np.sum(a * a)))
            row[f"{name}_sup"] = float(np.max(np.abs(a)))
        series.append(row)
    first = spec.fields[0]
    if "u" in tr.fields:
        nr = composite_norm(tr, exp["norm"], spec=spec)
        rep.scalars["norm"] = nr.to_dict()
    rep.scalars["edge_ratio_max"] = tr.meta["edge_ratio_max"]
    if spec.c1 == spec.c2 == spec.c3 == spec.c4 == 0:
        ref = airy_propagate(tr.snapshot(first, 0), T)
        err = (tr.snapshot(first) - ref).norm() / ref.norm()
        rep.check("final L2 error against the exact propagator", err, None,
                  _num(exp["tol"], "experiment.tol", positive=True), "linear flow is exact")
    else:
        half = evolve(u0, T, StepperConfig(stepper.dt / 2, stepper.snap, stepper.pad_factor), spec)
        rep.scalars["step_error_estimate"] = ((tr.snapshot(first) - half.snapshot(first)).norm()
                                              / half.snapshot(first).norm())
    return rep, {"series": series}, _grid_diag(u0)


def cmd_picard(cfg):
    g = make_grid(cfg)
    u0 = profile(g, cfg["data"])
    exp = cfg["experiment"]
    rep = ex.picard_run(u0, _num(exp["T"], "experiment.T", positive=True), make_equation(cfg),
                        _num(exp["dt"], "experiment.dt", positive=True),
                        _num(exp["tol"], "experiment.tol", positive=True),
                        _num(exp["max_iter"], "experiment.max_iter", integer=True))
    return rep, {"iterations": rep.rows}, _grid_diag(u0)


def cmd_gauge_check(cfg):
    g = make_grid(cfg)
    u0 = profile(g, cfg["data"])
    rep = ex.gauge_consistency_run(u0, _num(cfg["experiment"]["T"], "experiment.T", positive=True),
                                   make_equation(cfg), make_stepper(cfg))
    return rep, {"residuals": rep.rows}, _grid_diag(u0)


def cmd_estimates(cfg):
    g = make_grid(cfg)
    exp = cfg["experiment"]
    T = _num(exp["T"], "experiment.T", positive=True)
    snap = make_stepper(cfg).snap
    triples = []
    for t in exp["triples"]:
        if not (isinstance(t, list) and len(t) == 3):
            raise ValidationError("experiment.triples entries must be [q, r, s]")
        q, r, s = (_inf(v) for v in t)
        check_admissible(q, r, s)
        triples.append((q, r, s))
    seed = _num(cfg["seed"], "seed", integer=True)
    samples = sample_set(seed, _num(exp["samples"], "experiment.samples", integer=True))
    rep = check_linear_estimates(samples, T, g, snap, tuple(triples),
                                 _num(exp["s_max"], "experiment.s_max"))
    rep.name = "estimates"
    rows = {"linear": rep.rows}
    pairs = product_pairs(seed, _num(exp["product_pairs"], "experiment.product_pairs", integer=True))
    prod_rows = []
    for r in exp["product_r"]:
        pr = product_estimate_report(g, _num(r, "experiment.product_r"), pairs)
        rep.checks.update(pr.checks)
        rep.provenance.update(pr.provenance)
        rep.scalars.update(pr.scalars)
        prod_rows += pr.rows
    rows["product"] = prod_rows
    spec = make_equation(cfg, "coupled")
    u0 = profile(g, cfg["data"])
    Tu = _num(exp["unbound_T"], "experiment.unbound_T", positive=True)
    unb_rows = []
    for r in exp["unbound_r"]:
        r = _num(r, "experiment.unbound_r")
        vals = []
        for lvl, (gg, h) in enumerate(((g, snap), (g.refined(2), snap / 2))):
            st = StepperConfig(min(make_stepper(cfg).dt, h), h)
            tr = evolve(profile(gg, cfg["data"]), Tu, st, spec)
            res = check_unbound_lemma(tr, r)
            vals.append(res.ratio)
            unb_rows.append({"level": lvl, "n": gg.n, "r": r, "ratio": res.ratio,
                             "lhs": res.lhs, "rhs": res.rhs})
        change = abs(vals[1] - vals[0]) / max(vals[0], 1e-300)
        rep.check(f"unbound r={r:g} refinement change", change, None, 0.2,
                  "ratio stable under 2x refinement")
    rows["unbound"] = unb_rows
    return rep, rows, _grid_diag(u0)


def cmd_illposed_a(cfg):
    exp = cfg["experiment"]
    t = _num(exp["t"], "experiment.t", positive=True)
    phw = _num(exp["per_half_width"], "experiment.per_half_width", integer=True)
    rep = ExperimentReport("illposed_a")
    rows = {}
    for s in exp["s_list"]:
        s = _num(s, "experiment.s_list")
        sc = ex.illposed_scan("pilod", s, [_num(N, "experiment.N_list") for N in exp["N_list"]],
                              t, per_half_width=phw)
        for k, v in sc.checks.items():
            rep.checks[f"s={s:g}: {k}"] = v
        for k, v in sc.provenance.items():
            rep.provenance[f"s={s:g}: {k}"] = v
        for k, v in sc.fits.items():
            rep.fits[f"s={s:g}: {k}"] = v
        rows[f"scan_s{s:g}"] = sc.rows
        for r in sc.rows:
            err = abs(r["total_integral"] - ex.SQ2PI * r["N"]) / (ex.SQ2PI * r["N"])
            rep.scalars.setdefault("total_integral_max_rel_error", 0.0)
            rep.scalars["total_integral_max_rel_error"] = max(
                rep.scalars["total_integral_max_rel_error"], err)
    rep.check("total integral sqrt(2 pi) N from the zero frequency",
              rep.scalars["total_integral_max_rel_error"], None, 1e-13, "exact identity")
    wrep = ex.window_integral_convergence(
        _num(exp["window_N"], "experiment.window_N"),
        levels=_num(exp["window_levels"], "experiment.window_levels", integer=True))
    rep.checks.update(wrep.checks)
    rep.provenance.update(wrep.provenance)
    rows["window_integral"] = wrep.rows
    if exp["oracle"]:
        og = Grid1D(_num(exp["oracle_grid_L"], "experiment.oracle_grid_L", positive=True),
                    _num(exp["oracle_grid_n"], "experiment.oracle_grid_n", integer=True))
        orc = ex.duhamel_oracle_check(_num(exp["oracle_N"], "experiment.oracle_N"), 0.0, t, og,
                                      _num(exp["oracle_M"], "experiment.oracle_M", integer=True))
        rep.checks.update(orc.checks)
        rep.provenance.update(orc.provenance)
        rep.scalars["oracle"] = orc.scalars
    return rep, rows, {}


def cmd_illposed_b(cfg):
    exp = cfg["experiment"]
    Ns = [_num(N, "experiment.N_list") for N in exp["N_list"]]
    t = _num(exp["t"], "experiment.t", positive=True)
    phw = _num(exp["per_half_width"], "experiment.per_half_width", integer=True)
    rep = ExperimentReport("illposed_b")
    rows = {}
    for obs, s, a in (("primitive", exp["primitive_s"], exp["primitive_a"]),
                      ("zero", exp["zero_s"], exp["zero_a"])):
        s, a = _num(s, f"experiment.{obs}_s"), _num(a, f"experiment.{obs}_a", positive=True)
        sc = ex.illposed_scan("bounded_primitive", s, Ns, t, a=a, per_half_width=phw,
                              observable=obs)
        rep.checks.update(sc.checks)
        rep.provenance.update(sc.provenance)
        rep.fits.update(sc.fits)
        rep.scalars.update({f"{obs}_{k}": v for k, v in sc.scalars.items()})
        rows[obs] = sc.rows
    return rep, rows, {}


def cmd_lipschitz(cfg):
    g = make_grid(cfg)
    u0 = profile(g, cfg["data"])
    exp = cfg["experiment"]
    pert = dict(exp["perturbation"], profile="gaussian")
    gp = profile(g, pert, "experiment.perturbation")
    T = _num(exp["T"], "experiment.T", positive=True)
    deltas = [_num(d, "experiment.deltas") for d in exp["deltas"]]
    rep = ex.lipschitz_probe(u0, gp, deltas, T, make_equation(cfg), make_stepper(cfg))
    rows = {"nonlinear": rep.rows}
    if exp["linear_check"]:
        lin = ex.lipschitz_probe(u0, gp, deltas, T, EquationSpec(), make_stepper(cfg))
        for k, v in lin.checks.items():
            rep.checks[f"linear: {k}"] = v
        for k, v in lin.provenance.items():
            rep.provenance[f"linear: {k}"] = v
        rows["linear"] = lin.rows
    return rep, rows, _grid_diag(u0)


def cmd_apriori(cfg):
    g = make_grid(cfg)
    u0 = profile(g, cfg["data"])
    exp = cfg["experiment"]
    rep = ex.apriori_diagnostic(u0, [_num(T, "experiment.T_list", positive=True)
                                     for T in exp["T_list"]],
                                make_equation(cfg), _num(exp["dt"], "experiment.dt", positive=True),
                                exp["norm"],
                                _num(exp["snaps_per_T"], "experiment.snaps_per_T", integer=True))
    return rep, {"sweep": rep.rows}, _grid_diag(u0)


COMMANDS = {
    "simulate": cmd_simulate, "picard": cmd_picard, "gauge-check": cmd_gauge_check,
    "estimates": cmd_estimates, "illposed-a": cmd_illposed_a, "illposed-b": cmd_illposed_b,
    "lipschitz": cmd_lipschitz, "apriori": cmd_apriori,
}


# -- writers ------------------------------------------------------------------------


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        v = v.item()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: Path, rows: list) -> None:
    """RFC 4180 CSV with a header row (union of keys in first-seen order)."""
    cols = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in cols])


def write_outputs(outdir: Path, subcommand: str, cfg: dict, rep: ExperimentReport,
                  series: dict, diag: dict, status: str) -> Path:
    target = outdir / subcommand
    target.mkdir(parents=True, exist_ok=True)
    summary = {
        "subcommand": subcommand,
        "version": __version__,
        "status": status,
        "config": cfg,
        "diagnostics": diag,
        "report": rep.to_dict() if rep is not None else None,
        "series_files": sorted(f"{k}.csv" for k in series),
    }
    if summary["report"] is not None:
        summary["report"].pop("rows", None)
    with open(target / "summary.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    for name, rows in series.items():
        write_csv(target / f"{name}.csv", rows)
    return target


# -- entry point -----------------------------------------------------------------------


def parse_args(argv):
    parser = argparse.ArgumentParser(
        prog="kdvgauge",
        description="Gauge-transformed dispersive flows: simulation, estimate checks, "
                    "ill-posedness scans.",
        epilog="Any configuration key can be set with --section.key VALUE "
               "(values are parsed as JSON when possible).")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--output-dir", help=f"output directory (overrides ${ENV_OUTPUT})")
    parser.add_argument("--print-config", action="store_true",
                        help="print the effective configuration and exit")
    args, rest = parser.parse_known_args(argv)
    overrides = []
    i = 0
    while i < len(rest):
        tok = rest[i]
        if not tok.startswith("--") or len(tok) <= 2:
            raise ValidationError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(rest):
                raise ValidationError(f"flag {tok} needs a value")
            val = rest[i + 1]
            i += 2
        overrides.append((key, _parse_value(val)))
    return args, overrides


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args, overrides = parse_args(argv)
        cfg = build_config(args.subcommand, args.config, overrides)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.print_config:
        print(json.dumps(_jsonable(cfg), indent=2, sort_keys=True))
        return EXIT_OK
    outdir = Path(args.output_dir or os.environ.get(ENV_OUTPUT) or cfg["output"]["dir"])
    rep, series, diag = None, {}, {}
    try:
        with np.errstate(over="raise", invalid="raise"):
            rep, series, diag = COMMANDS[args.subcommand](cfg)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        write_outputs(outdir, args.subcommand, cfg, None, {}, {"error": str(exc)}, "validation")
        return EXIT_VALIDATION
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        write_outputs(outdir, args.subcommand, cfg, None, {}, {"error": str(exc)}, "numerical")
        return EXIT_NUMERICAL
    status = "pass" if rep.passed else "fail"
    target = write_outputs(outdir, args.subcommand, cfg, rep, series, diag, status)
    for label, c in rep.checks.items():
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {label}: {c['value']:.6g}")
    print(f"wrote {target}")
    return EXIT_OK if rep.passed else EXIT_TOLERANCE


if __name__ == "__main__":
    sys.exit(main())
