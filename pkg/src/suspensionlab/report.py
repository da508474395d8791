"""Deterministic CSV and JSON reports."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def _clean(v):
    if hasattr(v, "item") and not isinstance(v, (list, tuple, dict)):
        v = v.item()
    if isinstance(v, float):
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


@dataclass
class Criterion:
    name: str
    value: float
    target: float | None
    tol: float | None
    passed: bool

    def as_dict(self) -> dict:
        return {"name": self.name, "value": _clean(float(self.value)),
                "target": None if self.target is None else _clean(float(self.target)),
                "tol": None if self.tol is None else _clean(float(self.tol)), "pass": bool(self.passed)}


def upper(name: str, value: float, bound: float) -> Criterion:
    """value <= bound."""
    return Criterion(name, value, bound, 0.0, bool(value <= bound))


def close(name: str, value: float, target: float, tol: float, relative: bool = False) -> Criterion:
    err = abs(value - target) / abs(target) if relative else abs(value - target)
    return Criterion(name, value, target, tol, bool(err < tol))


def flag(name: str, ok: bool) -> Criterion:
    return Criterion(name, float(bool(ok)), 1.0, 0.0, bool(ok))


@dataclass
class Report:
    kind: str
    config: dict
    seed: int
    header: Sequence[str] = ()
    rows: list = field(default_factory=list)
    criteria: list[Criterion] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    def summary(self) -> dict:
        return {"kind": self.kind, "config_hash": config_hash(self.config), "seed": self.seed,
                "criteria": [c.as_dict() for c in self.criteria], "pass": self.passed,
                "extra": _clean(self.extra)}

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = write_csv(out / f"{self.kind}.csv", self.header, self.rows)
        json_path = out / f"{self.kind}.json"
        json_path.write_text(self.to_json(), encoding="utf-8")
        return csv_path, json_path


def _cell(v) -> str:
    if hasattr(v, "item"):
        v = v.item()
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """UTF-8, RFC-4180 quoting, CRLF line ends, floats as shortest repr."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        if header:
            w.writerow(list(header))
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path
