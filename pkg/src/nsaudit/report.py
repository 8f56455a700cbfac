"""Audit verdicts and their JSON/CSV serialization."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"

EXIT_CODES = {PASS: 0, FAIL: 1, INCONCLUSIVE: 2}


def _clean(value):
    """Make a value JSON-safe and deterministic (non-finite floats become strings)."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "tolist"):
        return _clean(value.tolist())
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        return value if math.isfinite(value) else repr(value)
    return value


@dataclass
class AuditReport:
    """Verdict for one inequality or identity: both sides, fitted numbers, status."""

    name: str
    params: dict = field(default_factory=dict)
    lhs: float | None = None
    rhs: float | None = None
    fitted_constant: float | None = None
    fitted_exponent: float | None = None
    window: tuple[float, float] | None = None
    status: str = PASS
    tail_bound: float | None = None
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self) -> dict:
        return _clean({
            "name": self.name,
            "params": self.params,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "fitted_constant": self.fitted_constant,
            "fitted_exponent": self.fitted_exponent,
            "window": list(self.window) if self.window is not None else None,
            "pass": self.passed,
            "status": self.status,
            "tail_bound": self.tail_bound,
            "details": self.details,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> AuditReport:
        window = d.get("window")
        return cls(
            name=d["name"],
            params=d.get("params", {}),
            lhs=d.get("lhs"),
            rhs=d.get("rhs"),
            fitted_constant=d.get("fitted_constant"),
            fitted_exponent=d.get("fitted_exponent"),
            window=tuple(window) if window is not None else None,
            status=d.get("status", PASS if d.get("pass") else FAIL),
            tail_bound=d.get("tail_bound"),
            details=d.get("details", {}),
        )

    def summary_line(self) -> str:
        return f"[{self.status.upper():>12}] {self.name} {json.dumps(_clean(self.params), sort_keys=True)}"


def combine_status(statuses) -> str:
    """fail dominates inconclusive, which dominates pass."""
    statuses = list(statuses)
    if FAIL in statuses:
        return FAIL
    if INCONCLUSIVE in statuses:
        return INCONCLUSIVE
    return PASS


def write_reports(path, reports) -> None:
    payload = [r.to_dict() for r in reports]
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_reports(path) -> list[AuditReport]:
    return [AuditReport.from_dict(d) for d in json.loads(Path(path).read_text())]


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, float) else x for x in row])
    Path(path).write_text(buf.getvalue())
