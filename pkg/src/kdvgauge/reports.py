"""Result containers shared by the norm engine, the experiments and the CLI."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
from scipy import stats

from .errors import ValidationError


@dataclass
class NormReport:
    """Named non-negative components whose sum is ``total``."""

    name: str
    components: dict
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        for k, v in self.components.items():
            v = float(v)
            if not (np.isfinite(v) and v >= 0):
                raise ValidationError(f"norm component {k} is {v}")
            self.components[k] = v

    @property
    def total(self) -> float:
        return float(sum(self.components.values()))

    def __getitem__(self, key):
        return self.components[key]

    def to_dict(self) -> dict:
        return {"name": self.name, "components": dict(self.components),
                "total": self.total, "params": dict(self.params)}


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    npoints: int

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "stderr": self.stderr, "npoints": self.npoints}


def fit_loglog(x, y, min_points: int = 4) -> SlopeFit:
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < min_points:
        raise ValidationError(f"a slope fit needs at least {min_points} points, got {x.size}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValidationError("log-log fit needs positive data")
    r = stats.linregress(np.log(x), np.log(y))
    return SlopeFit(float(r.slope), float(r.intercept), float(r.stderr), int(x.size))


@dataclass
class ExperimentReport:
    """Rows of measurements plus named scalar results and pass/fail checks.

    ``checks`` maps a label to ``(value, lo, hi, passed)``; ``provenance``
    records where each reference value comes from.
    """

    name: str
    rows: list = field(default_factory=list)
    scalars: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def add_row(self, **row: Any) -> None:
        self.rows.append(row)

    def check(self, label: str, value: float, lo: Optional[float] = None,
              hi: Optional[float] = None, source: str = "") -> bool:
        value = float(value)
        ok = bool(np.isfinite(value)
                  and (lo is None or value >= lo)
                  and (hi is None or value <= hi))
        self.checks[label] = {"value": value, "lo": lo, "hi": hi, "passed": ok}
        if source:
            self.provenance[label] = source
        return ok

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "scalars": {k: _plain(v) for k, v in self.scalars.items()},
            "checks": {k: dict(v) for k, v in self.checks.items()},
            "fits": {k: v.to_dict() for k, v in self.fits.items()},
            "provenance": dict(self.provenance),
            "notes": list(self.notes),
            "rows": [{k: _plain(v) for k, v in r.items()} for r in self.rows],
        }


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v
