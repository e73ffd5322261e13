"""JSON operator specifications and deterministic CSV/JSON writers."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .dirac import OperatorSpec, build_dirac
from .errors import LinearlyDependentFrame, SchemaError
from .frames import FrameBundle, k3_frame
from .trigpoly import TrigPolyField

_WAVE = {"type": "array", "items": {"type": "integer"}, "minItems": 3, "maxItems": 3}
_NUMBER = {"type": "number"}

INPUT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "label": {"type": "string"},
        "manifold": {
            "type": "object",
            "additionalProperties": False,
            "required": ["type"],
            "properties": {
                "type": {"const": "torus3"},
                "periods": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                            "minItems": 3, "maxItems": 3},
            },
        },
        "frame": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["preset", "k3"],
                    "properties": {"preset": {"const": "k3"}, "k3": {"type": "integer"}},
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["harmonics"],
                    "properties": {
                        "harmonics": {
                            "type": "array",
                            "minItems": 1,
                            "items": {
                                "type": "object",
                                "additionalProperties": False,
                                "required": ["j", "alpha", "wave", "re"],
                                "properties": {
                                    "j": {"type": "integer", "minimum": 1, "maximum": 3},
                                    "alpha": {"type": "integer", "minimum": 1, "maximum": 3},
                                    "wave": _WAVE, "re": _NUMBER, "im": _NUMBER,
                                },
                            },
                        }
                    },
                },
            ]
        },
        "potential": {
            "type": "object",
            "additionalProperties": False,
            "required": ["harmonics"],
            "properties": {
                "harmonics": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["row", "col", "wave", "re"],
                        "properties": {
                            "row": {"type": "integer", "minimum": 1, "maximum": 2},
                            "col": {"type": "integer", "minimum": 1, "maximum": 2},
                            "wave": _WAVE, "re": _NUMBER, "im": _NUMBER,
                        },
                    },
                }
            },
        },
        "half_density": {"type": "boolean"},
        "truncation": {
            "type": "object", "additionalProperties": False,
            "properties": {"K": {"type": "integer", "minimum": 1}},
        },
        "quadrature": {
            "type": "object", "additionalProperties": False,
            "properties": {"polar": {"type": "integer", "minimum": 2},
                           "azimuthal": {"type": "integer", "minimum": 3}},
        },
        "mollifier": {
            "type": "object", "additionalProperties": False,
            "properties": {"T": {"type": "number", "exclusiveMinimum": 0}},
        },
        "tolerances": {"type": "object", "additionalProperties": {"type": "number", "exclusiveMinimum": 0}},
    },
    "required": ["frame"],
}

DEFAULT_TOLERANCES = {
    "identity": 1e-8,
    "curvature_torsion": 1e-6,
    "unitary_invariance": 1e-6,
    "selfadjointness": 1e-10,
    "charge_conjugation": 1e-10,
    "a_fit_rel": 0.01,
    "b_fit_rel": 0.15,
}


@dataclass
class OperatorInput:
    operator: OperatorSpec
    bundle: FrameBundle
    K: int = 16
    quadrature: tuple = (32, 64)
    mollifier_T: float = 6.0
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    source: dict = field(default_factory=dict)


def _pointer(path):
    return "/" + "/".join(str(p) for p in path) if path else ""


def _harmonic_field(entries, shape, index_keys, periods):
    waves, coeffs = [], []
    for item in entries:
        c = np.zeros(shape, dtype=complex)
        c[tuple(item[k] - 1 for k in index_keys)] = item["re"] + 1j * item.get("im", 0.0)
        waves.append(item["wave"])
        coeffs.append(c)
    if not waves:
        return TrigPolyField.zeros(shape, 3, periods)
    return TrigPolyField(np.array(waves), np.array(coeffs), periods, shape)


def parse_spec(data: dict) -> OperatorInput:
    """Validate a JSON-compatible dict and build the operator it describes."""
    validator = jsonschema.Draft202012Validator(INPUT_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        raise SchemaError(err.message, _pointer(err.absolute_path))
    periods = np.asarray(data.get("manifold", {}).get("periods", [2 * np.pi] * 3), dtype=float)
    frame_spec = data["frame"]
    try:
        if "preset" in frame_spec:
            bundle = k3_frame(frame_spec["k3"], periods)
        else:
            V = _harmonic_field(frame_spec["harmonics"], (3, 3), ("j", "alpha"), periods)
            bundle = FrameBundle(V)
    except (LinearlyDependentFrame, ValueError) as exc:
        raise SchemaError(str(exc), "/frame") from exc
    half = data.get("half_density", True)
    op = build_dirac(bundle, half_density=half)
    if "potential" in data:
        pot = _harmonic_field(data["potential"]["harmonics"], (2, 2), ("row", "col"), periods)
        op = op.plus_potential(pot)
    quad = data.get("quadrature", {})
    tolerances = dict(DEFAULT_TOLERANCES)
    tolerances.update(data.get("tolerances", {}))
    op.label = data.get("label", op.label)
    return OperatorInput(
        op, bundle, data.get("truncation", {}).get("K", 16),
        (quad.get("polar", 32), quad.get("azimuthal", 64)),
        data.get("mollifier", {}).get("T", 6.0), tolerances, data,
    )


def load_spec(path) -> OperatorInput:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SchemaError(f"cannot read input: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc
    return parse_spec(data)


def preset_spec(k3: int, potential=None) -> dict:
    """Input dict for the rotating-frame preset, optionally with a constant potential."""
    data = {"manifold": {"type": "torus3"}, "frame": {"preset": "k3", "k3": int(k3)}}
    if potential is not None:
        P = np.asarray(potential, dtype=complex)
        data["potential"] = {"harmonics": [
            {"row": i + 1, "col": j + 1, "wave": [0, 0, 0], "re": float(P[i, j].real), "im": float(P[i, j].imag)}
            for i in range(2) for j in range(2) if P[i, j] != 0
        ]}
    return data


# ------------------------------------------------------------------ writers
def fmt(value):
    """Fixed 17-significant-digit rendering, enough to round-trip any double."""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.17g}"


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
