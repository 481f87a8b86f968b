"""Run configuration: JSON schema, validation and conversion to objects."""
import copy
import json

import jsonschema

from .dynamics import builtin, parse_vector_field
from .errors import SchemaError
from .loss import BoundSpec, LossSpec
from .network import NetShape
from .trainer import TrainConfig

_POS_INT = {"type": "integer", "minimum": 1}
_NUM = {"type": "number"}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["system", "net", "loss", "train"],
    "properties": {
        "system": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["builtin"],
                    "properties": {"builtin": {"enum": ["example_2d", "example_10d"]}},
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["n", "expressions"],
                    "properties": {
                        "n": _POS_INT,
                        "name": {"type": "string"},
                        "expressions": {
                            "oneOf": [
                                {"type": "string"},
                                {"type": "array", "items": {"type": "string"}, "minItems": 1},
                            ]
                        },
                        "transform": {
                            "type": "array",
                            "items": {"type": "array", "items": _NUM},
                        },
                    },
                },
            ]
        },
        "net": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n_sub", "d_max", "m_per"],
            "properties": {
                "n_sub": _POS_INT,
                "d_max": _POS_INT,
                "m_per": _POS_INT,
                "freeze_first_layer": {"type": "boolean"},
            },
        },
        "loss": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["pde", "pdi"]},
                "nu": {"type": "number", "minimum": 0},
                "c1": {"type": "number", "exclusiveMinimum": 0},
                "c2": {"type": "number", "exclusiveMinimum": 0},
                "power": {"type": "number", "minimum": 1},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "required": ["m"],
            "properties": {
                "m": _POS_INT,
                "batch_size": _POS_INT,
                "max_epochs": {"type": "integer", "minimum": 0},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "shuffle_each_epoch": {"type": "boolean"},
                "resample_each_epoch": {"type": "boolean"},
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"checkpoint": {"type": "string"}, "report": {"type": "string"}},
        },
    },
}

DEFAULTS = {
    "net": {"freeze_first_layer": False},
    "loss": {"nu": 1.0, "c1": 0.1, "c2": 10.0, "power": 2.0},
    "train": {
        "batch_size": 32,
        "max_epochs": 30,
        "tol": 1e-6,
        "seed": 0,
        "shuffle_each_epoch": True,
        "resample_each_epoch": False,
    },
    "outputs": {"checkpoint": "checkpoint.json", "report": "report.json"},
}


def _field_path(err):
    path = ".".join(str(p) for p in err.absolute_path)
    if err.validator == "additionalProperties":
        return path or "<root>"
    if err.validator == "required":
        missing = err.message.split("'")[1] if "'" in err.message else ""
        return ".".join(filter(None, [path, missing]))
    return path or "<root>"


def validate(doc):
    """Validate against the schema and return a normalized copy with defaults
    filled in. Raises SchemaError naming the offending field."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise SchemaError(f"{_field_path(err)}: {err.message}")
    out = copy.deepcopy(doc)
    for section, defaults in DEFAULTS.items():
        block = out.setdefault(section, {})
        for key, value in defaults.items():
            block.setdefault(key, value)
    for key in ("nu", "c1", "c2", "power"):
        out["loss"][key] = float(out["loss"][key])
    out["train"]["tol"] = float(out["train"]["tol"])
    if not out["loss"]["c1"] < out["loss"]["c2"]:
        raise SchemaError("loss.c1: must be smaller than loss.c2")
    if out["train"]["batch_size"] > out["train"]["m"]:
        raise SchemaError("train.batch_size: must not exceed train.m")
    return out


def load_config(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return validate(doc)


def build_system(cfg):
    sysc = cfg["system"]
    if "builtin" in sysc:
        return builtin(sysc["builtin"])
    return parse_vector_field(sysc["expressions"], sysc["n"], name=sysc.get("name", "custom"), transform=sysc.get("transform"))


def build_shape(cfg, n):
    net = cfg["net"]
    return NetShape(n, net["n_sub"], net["d_max"], net["m_per"])


def build_loss(cfg):
    lc = cfg["loss"]
    return LossSpec(lc["kind"], lc["nu"], BoundSpec(lc["c1"], lc["c2"], lc["power"]))


def build_train(cfg):
    tc = cfg["train"]
    return TrainConfig(
        m=tc["m"],
        batch_size=tc["batch_size"],
        max_epochs=tc["max_epochs"],
        tol=tc["tol"],
        seed=tc["seed"],
        shuffle_each_epoch=tc["shuffle_each_epoch"],
        resample_each_epoch=tc["resample_each_epoch"],
        freeze_first_layer=cfg["net"]["freeze_first_layer"],
    )
