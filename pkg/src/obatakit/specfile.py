"""JSON model files: validation, loading and deterministic serialization.

A model file is a JSON object with ``"schema": 1`` and a ``type`` of
``flat``, ``quadric``, ``warped`` or ``custom``.  Unknown keys are rejected.
Box bounds are ``[lo, hi]`` pairs where ``null`` means unbounded.  Nested
fiber specs omit ``schema``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .expr import Expression, ExpressionError, parse
from .manifold import (
    Custom,
    Flat,
    GeometryError,
    MetricModel,
    Quadric,
    Warped,
    metric_at,
    restrict_linear,
    sample_points,
)

__all__ = ["SpecError", "LoadedModel", "load_spec", "model_from_spec", "read_model", "dumps", "write_json"]

SCHEMA_VERSION = 1

_COMMON = {"type", "dimension", "signature", "domain"}
_FIELD_KEYS = {"omega", "omega_ambient", "kappa", "expected_h", "theorem"}
_TYPE_KEYS = {
    "flat": set(),
    "quadric": {"ambient_signature", "level", "chart", "min_radicand"},
    "warped": {"base_sign", "alpha", "t_interval", "fiber"},
    "custom": {"entries"},
}


class SpecError(ValueError):
    """Malformed or inconsistent model file."""


@dataclass
class LoadedModel:
    model: MetricModel
    omega: Expression | None = None
    kappa: float | None = None
    extras: dict[str, Any] = field(default_factory=dict)


def _expect(cond: bool, message: str) -> None:
    if not cond:
        raise SpecError(message)


def _number(x, what: str) -> float:
    _expect(isinstance(x, (int, float)) and not isinstance(x, bool), f"{what} must be a number")
    v = float(x)
    _expect(math.isfinite(v), f"{what} must be finite")
    return v


def _int(x, what: str) -> int:
    _expect(isinstance(x, int) and not isinstance(x, bool), f"{what} must be an integer")
    return int(x)


def _pair(x, what: str) -> list[int]:
    _expect(isinstance(x, list) and len(x) == 2, f"{what} must be a list [r, p]")
    return [_int(v, what) for v in x]


def _bounds(x, what: str):
    _expect(isinstance(x, list), f"{what} must be a list of [lo, hi] pairs")
    out = []
    for b in x:
        _expect(isinstance(b, list) and len(b) == 2, f"{what} entries must be [lo, hi]")
        out.append([None if v is None else _number(v, what) for v in b])
    return out


def model_from_spec(spec: dict, nested: bool = False) -> MetricModel:
    """Build the metric model described by ``spec`` (field keys are ignored here)."""
    _expect(isinstance(spec, dict), "model spec must be a JSON object")
    kind = spec.get("type")
    _expect(isinstance(kind, str) and kind in _TYPE_KEYS, f"unknown model type {kind!r}")
    allowed = _COMMON | _TYPE_KEYS[kind] | ({"schema"} | _FIELD_KEYS if not nested else set())
    unknown = sorted(set(spec) - allowed)
    _expect(not unknown, f"unknown keys for {kind} model: {', '.join(unknown)}")
    box = _bounds(spec["domain"], "domain") if "domain" in spec else None

    if kind == "flat":
        r, p = _pair(spec.get("signature"), "signature")
        model: MetricModel = Flat(r, p, box)
    elif kind == "quadric":
        amb = _pair(spec.get("ambient_signature"), "ambient_signature")
        level = _number(spec.get("level"), "level")
        chart = spec.get("chart", {})
        _expect(isinstance(chart, dict), "chart must be an object")
        _expect(not set(chart) - {"solved_axis", "branch"}, "chart accepts only solved_axis and branch")
        axis = _int(chart["solved_axis"], "solved_axis") if "solved_axis" in chart else None
        branch = _int(chart.get("branch", 1), "branch")
        minr = _number(spec.get("min_radicand", 0.01), "min_radicand")
        model = Quadric(amb, level, axis, branch, box, minr)
    elif kind == "warped":
        eps = _int(spec.get("base_sign"), "base_sign")
        _expect(isinstance(spec.get("alpha"), str), "alpha must be an expression string")
        _expect("fiber" in spec, "warped model needs a fiber")
        fiber = model_from_spec(spec["fiber"], nested=True)
        ti = spec.get("t_interval", [None, None])
        (lo, hi), = _bounds([ti], "t_interval")
        _expect(box is None, "warped models take t_interval and the fiber's domain, not domain")
        model = Warped(eps, parse(spec["alpha"], 1), fiber, (lo, hi))
    else:
        dim = _int(spec.get("dimension"), "dimension")
        sig = _pair(spec.get("signature"), "signature")
        entries = spec.get("entries")
        _expect(
            isinstance(entries, list) and all(isinstance(row, list) for row in entries),
            "entries must be a matrix of expression strings",
        )
        _expect(all(isinstance(e, str) for row in entries for e in row), "entries must be strings")
        _expect(len(entries) == dim and all(len(row) == dim for row in entries), f"entries must be {dim}x{dim}")
        for i in range(dim):
            for j in range(i + 1, dim):
                _expect(
                    parse(entries[i][j], dim).text == parse(entries[j][i], dim).text,
                    f"entries must be symmetric (entry [{i}][{j}] differs from [{j}][{i}])",
                )
        model = Custom(dim, sig, entries, box)

    if "dimension" in spec:
        _expect(_int(spec["dimension"], "dimension") == model.dim, f"dimension does not match the {kind} model ({model.dim})")
    if "signature" in spec:
        _expect(_pair(spec["signature"], "signature") == list(model.signature), f"declared signature does not match the {kind} model {list(model.signature)}")
    return model


def _check_inertia(model: MetricModel, samples: int = 20, seed: int = 0) -> None:
    rng = np.random.default_rng(seed)
    for p in sample_points(model, rng, samples):
        metric_at(model, p)


def load_spec(spec: dict, check: bool = True) -> LoadedModel:
    """Validate a top-level spec and return the model with optional field data."""
    _expect(isinstance(spec, dict), "model file must contain a JSON object")
    _expect(spec.get("schema") == SCHEMA_VERSION, f"model file needs \"schema\": {SCHEMA_VERSION}")
    try:
        model = model_from_spec(spec)
        if check:
            _check_inertia(model)
        omega = None
        if "omega" in spec:
            _expect("omega_ambient" not in spec, "give omega or omega_ambient, not both")
            _expect(isinstance(spec["omega"], str), "omega must be an expression string")
            omega = parse(spec["omega"], model.dim)
        elif "omega_ambient" in spec:
            _expect(isinstance(model, Quadric), "omega_ambient needs a quadric model")
            coeffs = spec["omega_ambient"]
            _expect(isinstance(coeffs, list), "omega_ambient must be a list of numbers")
            omega = restrict_linear(model, [_number(c, "omega_ambient") for c in coeffs])
        kappa = _number(spec["kappa"], "kappa") if "kappa" in spec else None
    except (ExpressionError, GeometryError) as exc:
        raise SpecError(str(exc)) from exc
    except ValueError as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError(str(exc)) from exc
    extras = {k: spec[k] for k in ("expected_h", "theorem") if k in spec}
    return LoadedModel(model, omega, kappa, extras)


def read_model(path: str | Path, check: bool = True) -> LoadedModel:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    return load_spec(spec, check)


# --------------------------------------------------------------------------
# deterministic output


def _encode(obj, indent: int | None, level: int) -> str:
    if indent is None:
        # single line
        if isinstance(obj, dict):
            return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode(v, None, 0)}" for k, v in obj.items()) + "}"
        if isinstance(obj, (list, tuple)):
            return "[" + ", ".join(_encode(v, None, 0) for v in obj) + "]"
    pad = " " * ((indent or 0) * (level + 1))
    end = " " * ((indent or 0) * level)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return "null"
        text = format(x, ".17g")
        # keep floats recognizable as floats
        return text if "." in text or "e" in text else text + ".0"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) or v is None for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int | None = 2) -> str:
    """JSON text with floats at 17 significant digits; inf and nan become null.

    ``indent=None`` gives a single line.
    """
    return _encode(obj, indent, 0) + "\n"


def write_json(obj, path: str | Path | None) -> None:
    text = dumps(obj)
    if path is None:
        print(text, end="")
    else:
        Path(path).write_text(text)
