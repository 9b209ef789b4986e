"""JSON run configuration for ``pigan train``.

A run config looks like::

    {
      "schema_version": 1,
      "gan":   {"pi": 0.1, "iterations": 2000, "m": 128, "n": 16, "seed": 0},
      "data":  {"type": "mixture", "preset": "ring"},
      "model": {"architecture": "mlp"},
      "out":   "runs/ring-pi0.1"
    }

``data`` is one of a mixture (``preset`` or explicit ``components``), a glyph
spec (``"type": "glyphs"`` plus any :class:`~pigan.datasets.GlyphSpec`
field) or a saved dataset (``"type": "dataset", "path": ...``).  Unknown keys
anywhere are rejected before any work starts.
"""
from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema

from .exceptions import ConfigError

SCHEMA_VERSION = 1

_NUM = {"type": "number"}
_INT = {"type": "integer"}

GAN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "pi": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "k": {"type": ["integer", "null"], "minimum": 1},
        "m": {"type": "integer", "minimum": 1},
        "n": {"type": "integer", "minimum": 1},
        "iterations": {"type": "integer", "minimum": 0},
        "learning_rate": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "prior": {"enum": ["uniform_01"]},
        "checkpoint_every": {"type": "integer", "minimum": 0},
        "sample_every": {"type": "integer", "minimum": 0},
    },
}

_COMPONENT = {
    "type": "object",
    "additionalProperties": False,
    "required": ["mean", "sigma"],
    "properties": {
        "mean": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        "sigma": {"type": "number", "exclusiveMinimum": 0},
        "weight": {"type": "number", "exclusiveMinimum": 0},
    },
}

MIXTURE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["type"],
    "properties": {
        "type": {"const": "mixture"},
        "preset": {"enum": ["ring"]},
        "n_modes": {"type": "integer", "minimum": 1},
        "radius": {"type": "number", "exclusiveMinimum": 0},
        "sigma": {"type": "number", "exclusiveMinimum": 0},
        "components": {"type": "array", "items": _COMPONENT, "minItems": 1},
    },
    "oneOf": [{"required": ["preset"]}, {"required": ["components"]}],
}

GLYPH_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["type"],
    "properties": {
        "type": {"const": "glyphs"},
        "class_count": {"type": "integer", "minimum": 1},
        "examples_per_class": {"type": "integer", "minimum": 1},
        "image_size": {"type": "integer", "minimum": 4, "multipleOf": 4},
        "strokes": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2},
        "thickness": {"type": "number", "exclusiveMinimum": 0},
        "jitter": {"type": "number", "minimum": 0},
        "classes_per_alphabet": {"type": "integer", "minimum": 1},
        "evaluation_class_count": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0},
    },
}

DATASET_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["type", "path"],
    "properties": {"type": {"const": "dataset"}, "path": {"type": "string"}},
}

MODEL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"architecture": {"enum": ["mlp", "conv"]}},
}

RUN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["gan", "data"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "gan": GAN_SCHEMA,
        "data": {"oneOf": [MIXTURE_SCHEMA, GLYPH_SCHEMA, DATASET_SCHEMA]},
        "model": MODEL_SCHEMA,
        "out": {"type": "string"},
    },
}


def _best_error(errors):
    # oneOf failures are clearer when reported through the branch that matched "type"
    err = jsonschema.exceptions.best_match(errors)
    where = "/".join(str(p) for p in err.absolute_path) or "<root>"
    return f"{where}: {err.message}"


def validate_run_config(doc: dict) -> dict:
    """Validate ``doc`` and return a deep copy; raises ConfigError with the first problem."""
    validator = jsonschema.Draft202012Validator(RUN_SCHEMA)
    errors = list(validator.iter_errors(doc))
    if errors:
        data = doc.get("data") if isinstance(doc, dict) else None
        kind = data.get("type") if isinstance(data, dict) else None
        sub = {"mixture": MIXTURE_SCHEMA, "glyphs": GLYPH_SCHEMA, "dataset": DATASET_SCHEMA}.get(kind)
        if sub is not None:
            inner = list(jsonschema.Draft202012Validator(sub).iter_errors(data))
            if inner:
                raise ConfigError("invalid run config: data/" + _best_error(inner).removeprefix("<root>"))
        raise ConfigError("invalid run config: " + _best_error(errors))
    return copy.deepcopy(doc)


def load_run_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return validate_run_config(doc)
