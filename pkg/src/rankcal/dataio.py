"""CSV ingestion, config files and the JSON result document."""
from __future__ import annotations

import csv
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .domain import RankCalError, TrialData

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "AnalysisConfig",
    "Comparison",
    "ResultDocument",
    "load_config",
    "read_table",
    "ingest_csv",
    "config_hash",
    "dumps",
]


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def config_hash(obj) -> str:
    raw = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(raw.encode()).hexdigest()[:16]


def load_config(path) -> dict:
    """Parse a JSON or TOML file (chosen by extension, JSON otherwise)."""
    path = Path(path)
    try:
        if path.suffix.lower() == ".toml":
            with open(path, "rb") as fh:
                return tomllib.load(fh)
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise RankCalError(f"config file not found: {path}") from None
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise RankCalError(f"cannot parse {path}: {exc}") from None


@dataclass
class AnalysisConfig:
    """What to analyze in a trial CSV.

    ``pairs`` lists ``(label_j, label_k)`` comparisons by raw arm label;
    alternatively ``control`` compares every other arm against it. ``arms``
    fixes the order in which raw labels map to ``1..J``.
    """

    arm_column: str
    outcome_column: str
    covariate_columns: list
    stratum_column: Optional[str] = None
    arms: Optional[list] = None
    pairs: Optional[list] = None
    control: Optional[str] = None
    pi: Optional[list] = None
    pi_source: str = "design"
    alpha: float = 0.05
    continuity: bool = False
    adjustment: str = "pooled"
    ridge: float = 0.0
    output: Optional[str] = None

    def problems(self) -> list:
        out = []
        if not self.covariate_columns:
            out.append("at least one covariate column is required")
        if self.adjustment not in ("pooled", "restricted", "none"):
            out.append("adjustment must be pooled, restricted or none")
        if self.pi_source not in ("design", "empirical"):
            out.append("pi_source must be design or empirical")
        if self.pi is None and self.pi_source == "design":
            out.append("allocation proportions (pi) are required unless "
                       "pi_source is empirical")
        if not 0 < self.alpha < 0.5:
            out.append("alpha must lie in (0, 0.5)")
        if self.pairs is not None and self.control is not None:
            out.append("give either pairs or control, not both")
        if self.ridge < 0:
            out.append("ridge must be >= 0")
        return out

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def read_table(path) -> tuple:
    """Header and rows of a CSV file as strings."""
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = [r for r in reader if any(cell.strip() for cell in r)]
    except FileNotFoundError:
        raise RankCalError(f"data file not found: {path}") from None
    if not header:
        raise RankCalError(f"{path} is empty")
    if not rows:
        raise RankCalError(f"{path} has a header but no data rows")
    return [h.strip() for h in header], rows


def _column(header, name):
    try:
        return header.index(name)
    except ValueError:
        raise RankCalError(f"column {name!r} not found; available: "
                           f"{', '.join(header)}") from None


def _parse_float(text, row, name):
    # float() is locale-independent and only accepts '.' as decimal point
    try:
        value = float(text.strip())
    except ValueError:
        what = "missing value" if not text.strip() else f"cannot parse {text!r}"
        raise RankCalError(f"{what} at row {row}, column {name!r}") from None
    if not np.isfinite(value):
        raise RankCalError(f"non-finite value at row {row}, column {name!r}")
    return value


def ingest_csv(path, config: AnalysisConfig):
    """Load a trial CSV as :class:`TrialData`.

    Returns ``(data, arm_labels)`` where ``arm_labels[t - 1]`` is the raw
    label of arm ``t``. Row numbers in errors count data rows from 1.
    """
    header, rows = read_table(path)
    names = [config.arm_column, config.outcome_column, *config.covariate_columns]
    if config.stratum_column:
        names.append(config.stratum_column)
    missing = [n for n in names if n not in header]
    if missing:
        raise RankCalError(f"columns not found: {', '.join(missing)}")
    i_arm = _column(header, config.arm_column)
    i_y = _column(header, config.outcome_column)
    i_x = [_column(header, c) for c in config.covariate_columns]
    i_z = _column(header, config.stratum_column) if config.stratum_column else None

    arms_raw, y, x, z = [], [], [], []
    for r, cells in enumerate(rows, start=1):
        if len(cells) < len(header):
            cells = cells + [""] * (len(header) - len(cells))
        label = cells[i_arm].strip()
        if not label:
            raise RankCalError(f"missing value at row {r}, column {config.arm_column!r}")
        arms_raw.append(label)
        y.append(_parse_float(cells[i_y], r, config.outcome_column))
        x.append([_parse_float(cells[i], r, c)
                  for i, c in zip(i_x, config.covariate_columns)])
        if i_z is not None:
            z.append(cells[i_z].strip())

    if config.arms:
        order = [str(a) for a in config.arms]
        unknown = sorted(set(arms_raw) - set(order))
        if unknown:
            raise RankCalError(f"arm labels not in declared order: {', '.join(unknown)}")
    else:
        order = sorted(set(arms_raw))
    code = {label: t + 1 for t, label in enumerate(order)}
    data = TrialData(
        treatments=np.array([code[a] for a in arms_raw]),
        outcomes=np.array(y),
        covariates=np.array(x),
        num_treatments=len(order),
        strata=np.array(z) if i_z is not None else None,
    )
    return data, order


@dataclass
class Comparison:
    """Everything reported for one ordered pair of arms."""

    labels: list
    pair: list
    group_sizes: list
    flags: list
    tests: dict
    variance: Optional[dict] = None
    calibration: Optional[dict] = None

    def to_dict(self) -> dict:
        return {"labels": self.labels, "pair": self.pair,
                "group_sizes": self.group_sizes, "flags": self.flags,
                "tests": {k: v.to_dict() for k, v in self.tests.items()},
                "variance": self.variance, "calibration": self.calibration}

    @classmethod
    def from_dict(cls, d: dict) -> "Comparison":
        from .inference import TestReport
        d = dict(d)
        d["tests"] = {k: TestReport.from_dict(v) for k, v in d["tests"].items()}
        return cls(**d)


@dataclass
class ResultDocument:
    provenance: dict
    config: dict
    comparisons: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"provenance": self.provenance, "config": self.config,
                "comparisons": [c.to_dict() for c in self.comparisons]}

    def to_json(self) -> str:
        return dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ResultDocument":
        d = json.loads(text)
        return cls(d["provenance"], d["config"],
                   [Comparison.from_dict(c) for c in d["comparisons"]])
