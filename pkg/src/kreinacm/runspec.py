"""Run specifications: JSON text in, validated :class:`RunSpec` out.

Layout (every key optional except where a command needs it)::

    {"command": "decompose", "model": "EW",
     "lattice": {"t": 1, "s": 1, "sites": [8, 8], "spacing": null},
     "fields": {"Lambda": [[{"k": [1, 0], "c": [0.3, 0.0]}], ...]},
     "m": 1.0, "m_nu": 1.0, "m_e": 1.0, "m_R": 1.0, "yukawa": null,
     "generations": null, "v": 1.0, "function": [{"k": [0, 1], "c": 1.0}],
     "sizes": [16, 32, 64], "samples": null, "seed": 0,
     "backend": "algebraic", "output": null}

``model`` is ED, EW, SM or a path to a custom triple JSON file. Missing
``samples`` takes the per-command default below; a missing seed is 0.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .fields import SmoothFieldSpec, TrigPolynomial
from .lattice import LatticeSpec

COMMANDS = ("verify-triple", "gauge-group", "fluctuate", "action", "decompose", "majorana", "convergence")
BACKENDS = ("algebraic", "continuum-form")
BUILTIN_MODELS = ("ED", "EW", "SM")

DEFAULT_SAMPLES = {
    "verify-triple": 100,
    "gauge-group": 10_000,
    "fluctuate": 20,
    "action": 20,
    "decompose": 20,
    "majorana": 3,
    "convergence": 5,
}
DEFAULT_LATTICE = {"t": 1, "s": 1, "sites": [8, 8]}
MAJORANA_LATTICE = {"t": 1, "s": 3, "sites": [4, 4, 4, 4]}

_KEYS = {"command", "model", "lattice", "fields", "m", "m_nu", "m_e", "m_R", "yukawa", "generations",
         "v", "function", "sizes", "samples", "seed", "backend", "output"}
_LATTICE_KEYS = {"t", "s", "sites", "spacing"}


class SpecError(ValueError):
    """Invalid run specification; ``field`` names the offending key when known."""

    def __init__(self, message: str, field: str = None, line: int = None, column: int = None):
        self.field, self.line, self.column = field, line, column
        where = ""
        if line is not None:
            where = f"line {line}, column {column}: "
        elif field:
            where = f"{field}: "
        super().__init__(where + message)


@dataclass
class RunSpec:
    command: str = "verify-triple"
    model: str = "ED"
    lattice: dict = None
    fields: dict = None
    params: dict = field(default_factory=dict)
    v: float = 1.0
    function: list = None
    sizes: tuple = (16, 32, 64)
    samples: int = None
    seed: int = 0
    backend: str = "algebraic"
    output: str = None

    @property
    def n_samples(self) -> int:
        return self.samples if self.samples is not None else DEFAULT_SAMPLES[self.command]

    def lattice_spec(self) -> LatticeSpec:
        data = self.lattice
        if data is None:
            data = MAJORANA_LATTICE if self.command == "majorana" else DEFAULT_LATTICE
        return LatticeSpec(data["t"], data["s"], tuple(data["sites"]), data.get("spacing"))

    def field_spec(self) -> SmoothFieldSpec | None:
        if self.fields is None:
            return None
        return SmoothFieldSpec.from_json(self.fields, self.lattice_spec().n)

    def probe_function(self) -> TrigPolynomial | None:
        if self.function is None:
            return None
        return TrigPolynomial.from_json(self.function, self.lattice_spec().n)

    def echo(self) -> dict:
        """Spec with defaults filled; feeding it back to :func:`parse_spec` reproduces the run."""
        out = {
            "command": self.command,
            "model": self.model,
            "lattice": self.lattice,
            "fields": self.fields,
            "v": self.v,
            "function": self.function,
            "sizes": list(self.sizes),
            "samples": self.n_samples,
            "seed": self.seed,
            "backend": self.backend,
            "output": self.output,
        }
        out.update(self.params)
        return out


def _require(cond: bool, message: str, key: str):
    if not cond:
        raise SpecError(message, key)


def _int(data, key, minimum=None):
    v = data[key]
    _require(isinstance(v, int) and not isinstance(v, bool), "must be an integer", key)
    if minimum is not None:
        _require(v >= minimum, f"must be >= {minimum}", key)
    return v


def _real(data, key):
    v = data[key]
    _require(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v),
             "must be a finite number", key)
    return float(v)


def _lattice(data) -> dict:
    _require(isinstance(data, dict), "must be an object", "lattice")
    extra = set(data) - _LATTICE_KEYS
    _require(not extra, f"unknown keys {sorted(extra)}", "lattice")
    for k in ("t", "s", "sites"):
        _require(k in data, f"missing {k!r}", "lattice")
    t, s = _int(data, "t", 0), _int(data, "s", 0)
    _require(isinstance(data["sites"], list) and all(isinstance(v, int) for v in data["sites"]),
             "sites must be a list of integers", "lattice.sites")
    out = {"t": t, "s": s, "sites": list(data["sites"])}
    if data.get("spacing") is not None:
        out["spacing"] = data["spacing"]
    try:
        LatticeSpec(t, s, tuple(out["sites"]), out.get("spacing"))
    except ValueError as exc:
        raise SpecError(str(exc), "lattice") from None
    return out


def spec_from_dict(data: dict) -> RunSpec:
    if not isinstance(data, dict):
        raise SpecError("top level must be a JSON object")
    extra = set(data) - _KEYS
    if extra:
        raise SpecError(f"unknown keys {sorted(extra)}", sorted(extra)[0])
    rs = RunSpec()
    if "command" in data:
        _require(data["command"] in COMMANDS, f"must be one of {list(COMMANDS)}", "command")
        rs.command = data["command"]
    if "model" in data:
        _require(isinstance(data["model"], str) and data["model"], "must be ED, EW, SM or a file path", "model")
        rs.model = data["model"]
    if data.get("lattice") is not None:
        rs.lattice = _lattice(data["lattice"])
    for key in ("m", "m_nu", "m_e", "m_R"):
        if data.get(key) is not None:
            rs.params[key] = _real(data, key)
    if data.get("generations") is not None:
        rs.params["generations"] = _int(data, "generations", 1)
    if data.get("yukawa") is not None:
        _require(isinstance(data["yukawa"], dict) and set(data["yukawa"]) <= {"nu", "e", "u", "d"},
                 "must map nu/e/u/d to matrices", "yukawa")
        rs.params["yukawa"] = data["yukawa"]
    if data.get("v") is not None:
        rs.v = _real(data, "v")
    if data.get("samples") is not None:
        rs.samples = _int(data, "samples", 1)
    if data.get("seed") is not None:
        rs.seed = _int(data, "seed", 0)
    if data.get("backend") is not None:
        _require(data["backend"] in BACKENDS, f"must be one of {list(BACKENDS)}", "backend")
        rs.backend = data["backend"]
    if data.get("output") is not None:
        _require(isinstance(data["output"], str), "must be a path string", "output")
        rs.output = data["output"]
    if data.get("sizes") is not None:
        sizes = data["sizes"]
        _require(isinstance(sizes, list) and len(sizes) >= 2 and all(isinstance(v, int) and v >= 4 for v in sizes),
                 "must list at least two lattice sizes >= 4", "sizes")
        rs.sizes = tuple(sizes)
    n = rs.lattice_spec().n
    if data.get("fields") is not None:
        try:
            SmoothFieldSpec.from_json(data["fields"], n)
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise SpecError(str(exc), "fields") from None
        rs.fields = data["fields"]
    if data.get("function") is not None:
        try:
            TrigPolynomial.from_json(data["function"], n)
        except (ValueError, KeyError, TypeError) as exc:
            raise SpecError(str(exc), "function") from None
        rs.function = data["function"]
    return rs


def parse_spec(text) -> RunSpec:
    """Parse and validate JSON spec text (``str`` or UTF-8 ``bytes``)."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SpecError(f"not valid UTF-8 ({exc.reason})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(exc.msg, line=exc.lineno, column=exc.colno) from None
    return spec_from_dict(data)


def load_spec(path) -> RunSpec:
    with open(path, "rb") as fh:
        return parse_spec(fh.read())


__all__ = ["BACKENDS", "COMMANDS", "DEFAULT_SAMPLES", "RunSpec", "SpecError", "load_spec", "parse_spec",
           "spec_from_dict"]
