"""Loading run and sweep configuration files (YAML or JSON).

Field names mirror :class:`SimConfig` and :class:`SweepSpec`; unknown keys are
rejected rather than ignored.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import yaml

from .agents import RewardSpec
from .harness import SimConfig
from .sweep import SweepSpec
from .tabular_q import LearningParams


class ConfigError(ValueError):
    pass


def _fields(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def _check_keys(d: dict, cls, where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(d).__name__}")
    unknown = set(d) - _fields(cls)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def validate_sim_dict(d: dict, where: str = "config") -> dict:
    _check_keys(d, SimConfig, where)
    if "reward" in d:
        _check_keys(d["reward"], RewardSpec, f"{where}.reward")
    if "learning" in d:
        _check_keys(d["learning"], LearningParams, f"{where}.learning")
    return d


def sim_config_from_dict(d: dict) -> SimConfig:
    d = dict(validate_sim_dict(d))
    try:
        return SimConfig(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def sweep_spec_from_dict(d: dict) -> SweepSpec:
    _check_keys(d, SweepSpec, "sweep")
    validate_sim_dict(d.get("base", {}), "sweep.base")
    try:
        return SweepSpec(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def read_document(path: str | Path) -> dict:
    doc = yaml.safe_load(Path(path).read_text())
    return {} if doc is None else doc


def load_sim_config(path: str | Path, overrides: dict | None = None) -> SimConfig:
    d = read_document(path)
    if overrides:
        d = merge(d, overrides)
    return sim_config_from_dict(d)


def load_sweep_spec(path: str | Path) -> SweepSpec:
    return sweep_spec_from_dict(read_document(path))


def merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = v
    return out


def parse_override(text: str) -> dict:
    """``learning.alpha=0.3`` -> ``{"learning": {"alpha": 0.3}}`` (value parsed as YAML)."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    value = yaml.safe_load(raw)
    out: dict = {}
    node = out
    parts = key.strip().split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    return out
