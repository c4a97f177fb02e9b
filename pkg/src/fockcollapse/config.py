"""Scenario config files: YAML validated against the bundled JSON schema.

Errors point at the offending line of the file. Defaults declared in the
schema are filled in after validation, so a loaded config is always
complete.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass
import hashlib
from importlib import resources
import json
from typing import Any

import jsonschema
import yaml

from .dynamics import InteractionModel, Term, parse_ops
from .errors import ConfigError, ModelError, RegistryError
from .fock import Mode, ParticleSpecies, Registry
from . import models

MODEL_DEFAULTS = {
    "absorption": "absorption",
    "pair_production": "pair_production",
    "dyson": "decay",
    "unitarity": "decay",
    "gamma": "pair_production",
}


def schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("schema.json").read_text())


def _line_map(text: str) -> dict:
    """``{path tuple: 1-based line}`` for every node of a YAML document."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"not valid YAML: {getattr(exc, 'problem', exc)}",
                          mark.line + 1 if mark else None) from None
    out = {}

    def walk(node, path):
        out[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                out[path + (k.value, "__key__")] = k.start_mark.line + 1
                walk(v, path + (k.value,))
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, path + (i,))

    if root is not None:
        walk(root, ())
    return out


def _resolve(sch: dict, root: dict) -> dict:
    while "$ref" in sch:
        name = sch["$ref"].split("/")[-1]
        sch = root["definitions"][name]
    return sch


def _fill_defaults(sch: dict, inst, root: dict):
    sch = _resolve(sch, root)
    if isinstance(inst, dict) and "properties" in sch:
        for key, sub in sch["properties"].items():
            sub_r = _resolve(sub, root)
            if key not in inst and "default" in sub_r:
                inst[key] = copy.deepcopy(sub_r["default"])
            if key in inst:
                _fill_defaults(sub_r, inst[key], root)
    elif isinstance(inst, list) and isinstance(sch.get("items"), dict):
        for item in inst:
            _fill_defaults(sch["items"], item, root)


def _format_path(path) -> str:
    return ".".join(str(p) for p in path) or "<root>"


def _error_line(err, lines: dict):
    path = tuple(err.absolute_path)
    if err.validator == "additionalProperties" and isinstance(err.instance, dict):
        allowed = set(_resolve(err.schema, schema()).get("properties", {}))
        extra = sorted(k for k in err.instance if k not in allowed)
        if extra:
            return lines.get(path + (extra[0], "__key__"), lines.get(path)), \
                f"{_format_path(path + (extra[0],))}: unknown key"
    while path and path not in lines:
        path = path[:-1]
    return lines.get(path), f"{_format_path(tuple(err.absolute_path))}: {err.message}"


@dataclass(frozen=True)
class ScenarioConfig:
    data: dict
    digest: str           # sha256 of the file bytes
    path: str = ""

    @property
    def kind(self) -> str:
        return self.data["process"]["kind"]

    @property
    def params(self) -> dict:
        return self.data["process"]["params"]

    @property
    def execution(self) -> dict:
        return self.data["execution"]

    @property
    def tolerances(self) -> dict:
        return self.data["execution"]["tolerances"]

    def effective_digest(self) -> str:
        blob = json.dumps(self.data, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def validate(data: Any, lines: dict | None = None) -> dict:
    """Schema-check a parsed config and return it with defaults filled."""
    lines = lines or {}
    sch = schema()
    validator = jsonschema.Draft7Validator(sch)
    errors = sorted(validator.iter_errors(data), key=lambda e: (len(list(e.absolute_path)), str(e.message)))
    if errors:
        # report the deepest, most specific problem
        err = max(errors, key=lambda e: len(list(e.absolute_path)))
        line, msg = _error_line(err, lines)
        raise ConfigError(msg, line)
    data = copy.deepcopy(data)
    _fill_defaults(sch, data, sch)
    data.setdefault("model", {})
    data.setdefault("execution", {})
    _fill_defaults(sch["definitions"]["model"], data["model"], sch)
    _fill_defaults(sch["definitions"]["execution"], data["execution"], sch)
    kind = data["process"]["kind"]
    _fill_defaults(sch["definitions"][_param_def(kind)], data["process"]["params"], sch)
    model = data["model"]
    if "registry" in data and "bundled" in model:
        raise ConfigError("model.bundled and a custom registry are mutually exclusive",
                          lines.get(("model", "bundled", "__key__")))
    if "bundled" not in model and "registry" not in data and kind in MODEL_DEFAULTS:
        model["bundled"] = MODEL_DEFAULTS[kind]
    if "bundled" not in model and model.get("interaction_terms") and "registry" not in data:
        raise ConfigError("interaction_terms need a registry block", lines.get(("model",)))
    return data


def _param_def(kind: str) -> str:
    return {"absorption": "p_sectors", "pair_production": "p_sectors"}.get(kind, f"p_{kind}")


def loads(text: str, path: str = "<string>") -> ScenarioConfig:
    raw = text.encode("utf-8")
    lines = _line_map(text)
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:  # pragma: no cover - compose already caught it
        raise ConfigError(str(exc)) from None
    if data is None:
        raise ConfigError("empty config file", 1)
    return ScenarioConfig(validate(data, lines), hashlib.sha256(raw).hexdigest(), path)


def load(path) -> ScenarioConfig:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}") from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise ConfigError("config is not UTF-8 text") from None
    cfg = loads(text, str(path))
    return ScenarioConfig(cfg.data, hashlib.sha256(raw).hexdigest(), str(path))


# -- dotted parameter paths (sweeps) ----------------------------------------

def _step(node, key):
    if isinstance(node, list):
        try:
            return int(key)
        except ValueError:
            raise ConfigError(f"'{key}' is not a list index") from None
    return key


def get_path(data: dict, dotted: str):
    node = data
    for part in dotted.split("."):
        key = _step(node, part)
        try:
            node = node[key]
        except (KeyError, IndexError, TypeError):
            raise ConfigError(f"unknown parameter path '{dotted}'") from None
    return node


def with_value(cfg: ScenarioConfig, dotted: str, value) -> ScenarioConfig:
    """Copy of ``cfg`` with one addressable parameter replaced and revalidated."""
    parts = dotted.split(".")
    data = copy.deepcopy(cfg.data)
    node = get_path(data, ".".join(parts[:-1])) if len(parts) > 1 else data
    key = _step(node, parts[-1])
    if isinstance(node, list) and not -len(node) <= key < len(node):
        raise ConfigError(f"unknown parameter path '{dotted}'")
    if not isinstance(node, (list, dict)):
        raise ConfigError(f"unknown parameter path '{dotted}'")
    # new dict keys are allowed here; schema validation rejects unknown ones
    node[key] = value
    return ScenarioConfig(validate(data), cfg.digest, cfg.path)


# -- model construction -------------------------------------------------------

def build_model(cfg: ScenarioConfig) -> InteractionModel:
    data = cfg.data
    m = data["model"]
    try:
        if "bundled" in m:
            try:
                model = models.BUNDLED[m["bundled"]](**m["params"])
            except TypeError as exc:
                raise ConfigError(f"model.params: {exc}") from None
            return InteractionModel(model.registry, model.free_terms, model.interaction_terms,
                                    m["switching_epsilon"], t_schedule=m["t_schedule"],
                                    hermitize=False, name=model.name)
        if "registry" not in data:
            raise ConfigError(f"process '{cfg.kind}' needs a model (bundled or registry + terms)")
        r = data["registry"]
        species = [ParticleSpecies(s["id"], s["statistics"], s["mass"], s["charge"], s["max_occupation"])
                   for s in r["species"]]
        modes = None
        if "modes" in r:
            modes = [Mode(x["species"], tuple(x["momentum"]), x["spin"]) for x in r["modes"]]
        reg = Registry(species, modes, n_max=r["n_max"])
        if "free_terms" in m:
            free = [(parse_ops(t["mode"], reg)[0][0], t["energy"]) for t in m["free_terms"]]
        else:
            free = [(md, reg.species[md.species].mass) for md in reg.modes]
        terms = [Term(t["coupling"], parse_ops(t["ops"], reg)) for t in m["interaction_terms"]]
        return InteractionModel(reg, free, terms, m["switching_epsilon"], dim_cap=r["dim_cap"],
                                t_schedule=m["t_schedule"], hermitize=m["hermitize"], name="custom")
    except (RegistryError, ModelError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from None
