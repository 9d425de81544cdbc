"""Strict JSON run configuration: unknown keys are errors at every level."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .fusion import FusionMethod, FusionPlan, plan_table6_best
from .model import ModelConfig
from .representations import KINDS
from .signals import FilterKind, FilterSpec, Modality, SignalError


class RunConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    filters: dict = field(default_factory=dict)   # Modality -> FilterSpec override
    kinds: tuple = KINDS
    fusion: FusionPlan = field(default_factory=plan_table6_best)
    seed: int = 0
    weights: str | None = None
    out_dir: str = "."


def _check_keys(obj: dict, allowed, where: str) -> None:
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise RunConfigError(f"{where}: unknown key(s) {unknown}")


def _parse_model(obj) -> ModelConfig:
    if not isinstance(obj, dict):
        raise RunConfigError("model: expected an object")
    names = [f.name for f in dataclasses.fields(ModelConfig)]
    _check_keys(obj, names, "model")
    kwargs = {}
    for k, v in obj.items():
        kwargs[k] = tuple(v) if isinstance(v, list) else v
    try:
        return ModelConfig(**kwargs)
    except (ValueError, TypeError) as e:
        raise RunConfigError(f"model: {e}") from None


def _parse_filters(obj) -> dict:
    if not isinstance(obj, dict):
        raise RunConfigError("filters: expected an object keyed by modality")
    out = {}
    mods = {m.value: m for m in Modality}
    kinds = {k.value: k for k in FilterKind}
    for mod_name, spec in obj.items():
        if mod_name not in mods:
            raise RunConfigError(f"filters: unknown modality '{mod_name}'")
        if not isinstance(spec, dict):
            raise RunConfigError(f"filters.{mod_name}: expected an object")
        _check_keys(spec, ("kind", "lo_hz", "hi_hz"), f"filters.{mod_name}")
        if spec.get("kind") not in kinds:
            raise RunConfigError(f"filters.{mod_name}: kind must be one of {sorted(kinds)}")
        try:
            out[mods[mod_name]] = FilterSpec(
                kind=kinds[spec["kind"]],
                lo_hz=float(spec.get("lo_hz", 0.0)),
                hi_hz=float(spec.get("hi_hz", 0.0)))
        except SignalError as e:
            raise RunConfigError(f"filters.{mod_name}: {e}") from None
    return out


def _parse_fusion(obj) -> FusionPlan:
    if not isinstance(obj, dict):
        raise RunConfigError("fusion: expected an object")
    _check_keys(obj, ("method", "inputs"), "fusion")
    methods = {m.value: m for m in FusionMethod}
    if obj.get("method") not in methods:
        raise RunConfigError(f"fusion: method must be one of {sorted(methods)}")
    inputs = obj.get("inputs")
    if not isinstance(inputs, list):
        raise RunConfigError("fusion: inputs must be a list of [modality, kind] pairs")
    mods = {m.value: m for m in Modality}
    pairs = []
    for item in inputs:
        if not (isinstance(item, list) and len(item) == 2):
            raise RunConfigError(f"fusion: bad input entry {item!r}")
        mod_name, kind = item
        if mod_name not in mods:
            raise RunConfigError(f"fusion: unknown modality '{mod_name}'")
        if kind not in KINDS:
            raise RunConfigError(f"fusion: unknown representation '{kind}'")
        pairs.append((mods[mod_name], kind))
    try:
        return FusionPlan(inputs=tuple(pairs), method=methods[obj["method"]])
    except ValueError as e:
        raise RunConfigError(f"fusion: {e}") from None


def parse_runconfig(text: str) -> RunConfig:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise RunConfigError(f"not valid JSON: {e}") from None
    if not isinstance(obj, dict):
        raise RunConfigError("top level: expected an object")
    _check_keys(obj, ("model", "filters", "kinds", "fusion", "seed", "io"), "top level")
    kwargs = {}
    if "model" in obj:
        kwargs["model"] = _parse_model(obj["model"])
    if "filters" in obj:
        kwargs["filters"] = _parse_filters(obj["filters"])
    if "kinds" in obj:
        ks = obj["kinds"]
        if not isinstance(ks, list) or not ks:
            raise RunConfigError("kinds: expected a non-empty list")
        bad = [k for k in ks if k not in KINDS]
        if bad:
            raise RunConfigError(f"kinds: unknown representation(s) {bad}")
        kwargs["kinds"] = tuple(ks)
    if "fusion" in obj:
        kwargs["fusion"] = _parse_fusion(obj["fusion"])
    if "seed" in obj:
        if not isinstance(obj["seed"], int):
            raise RunConfigError("seed: expected an integer")
        kwargs["seed"] = obj["seed"]
    if "io" in obj:
        io = obj["io"]
        if not isinstance(io, dict):
            raise RunConfigError("io: expected an object")
        _check_keys(io, ("weights", "out_dir"), "io")
        if "weights" in io and io["weights"] is not None:
            kwargs["weights"] = str(io["weights"])
        if "out_dir" in io:
            kwargs["out_dir"] = str(io["out_dir"])
    return RunConfig(**kwargs)


def load_runconfig(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise RunConfigError(f"cannot read config: {e}") from None
    return parse_runconfig(text)
