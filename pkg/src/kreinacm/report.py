"""Verification reports and their JSON/text renderings."""
from __future__ import annotations

import json
import math
import sys
from dataclasses import asdict, dataclass, field

from . import __version__

PASS, FAIL = "PASS", "FAIL"
# non-finite residuals are clamped here so the JSON stays standard
RESIDUAL_CEILING = sys.float_info.max


@dataclass
class CheckRecord:
    name: str
    reference: str
    status: str
    max_residual: float
    tolerance: float
    samples: int = 0
    wall_time: float | None = None
    backend: str | None = None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        r = float(self.max_residual)
        if not math.isfinite(r):
            r = RESIDUAL_CEILING
            self.status = FAIL
        self.max_residual = r


@dataclass
class VerificationReport:
    spec: dict
    checks: list = field(default_factory=list)
    tool_version: str = __version__
    errors: list = field(default_factory=list)

    def add(self, name, reference, residual, tolerance, samples=0, passed=None, backend=None,
            wall_time=None, **details) -> CheckRecord:
        residual = float(residual)
        if passed is None:
            passed = math.isfinite(residual) and residual <= tolerance
        rec = CheckRecord(name, reference, PASS if passed else FAIL, residual, float(tolerance), int(samples),
                          wall_time, backend, _plain(details))
        self.checks.append(rec)
        return rec

    @property
    def passed(self) -> bool:
        return not self.errors and all(c.status == PASS for c in self.checks)

    @property
    def summary(self) -> str:
        if not self.checks and not self.errors:
            return "no checks"
        failed = sum(c.status != PASS for c in self.checks)
        head = f"{len(self.checks) - failed}/{len(self.checks)} checks passed"
        if self.errors:
            head += f", {len(self.errors)} error(s)"
        return head

    def to_dict(self) -> dict:
        return {
            "tool_version": self.tool_version,
            "spec": self.spec,
            "checks": [asdict(c) for c in self.checks],
            "errors": list(self.errors),
            "summary": {"status": PASS if self.passed else FAIL, "text": self.summary},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "VerificationReport":
        rep = cls(data["spec"], [CheckRecord(**c) for c in data["checks"]], data["tool_version"],
                  list(data.get("errors", [])))
        return rep


def _plain(obj):
    """Recursively convert numpy scalars, tuples and complex numbers into JSON types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, complex):
        return [_plain(obj.real), _plain(obj.imag)]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        return _plain(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _text(report: VerificationReport) -> str:
    lines = [f"kreinacm {report.tool_version}",
             f"command: {report.spec.get('command')}  model: {report.spec.get('model')}  "
             f"seed: {report.spec.get('seed')}"]
    for c in report.checks:
        line = (f"[{c.status}] {c.name}  ({c.reference})  residual {c.max_residual:.3e}"
                f"  tol {c.tolerance:.1e}  samples {c.samples}")
        if c.backend:
            line += f"  backend {c.backend}"
        if c.wall_time is not None:
            line += f"  {c.wall_time:.3f}s"
        lines.append(line)
        for k, v in c.details.items():
            lines.append(f"    {k}: {json.dumps(v, sort_keys=True)}")
    for e in report.errors:
        if isinstance(e, dict):
            lines.append(f"[ERROR] {e.get('kind', 'error')}: {e.get('message', '')}")
        else:
            lines.append(f"[ERROR] {e}")
    lines.append(f"summary: {'PASS' if report.passed else 'FAIL'} ({report.summary})")
    return "\n".join(lines) + "\n"


def emit_report(report: VerificationReport, fmt: str = "json") -> bytes:
    if fmt == "json":
        return (json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n").encode("utf-8")
    if fmt == "text":
        return _text(report).encode("utf-8")
    raise ValueError(f"unknown report format {fmt!r}")


__all__ = ["CheckRecord", "FAIL", "PASS", "VerificationReport", "emit_report"]
