"""Experiment-plan files (TOML) with strict key checking and dotted overrides."""

from __future__ import annotations

import dataclasses
import re
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .categories import CATEGORIES
from .channel import ClutterTable, LinkBudgetParams
from .engine import ExperimentPlan
from .errors import ConfigError, DomainError
from .orbital import ConstellationConfig, preset
from .policies import QuotaConfig, check_policy_names
from .scenario import ScenarioConfig

SECTIONS = ("experiment", "scenario", "constellation", "channel", "clutter", "quotas")
EXPERIMENT_KEYS = ("policies", "interference", "redistribute_idle")
CONSTELLATION_KEYS = ("name",) + tuple(f.name for f in dataclasses.fields(ConstellationConfig))


def _field_names(cls) -> tuple:
    return tuple(f.name for f in dataclasses.fields(cls))


ALLOWED = {
    "experiment": EXPERIMENT_KEYS,
    "scenario": _field_names(ScenarioConfig),
    "constellation": CONSTELLATION_KEYS,
    "channel": _field_names(LinkBudgetParams),
    "clutter": CATEGORIES,
    "quotas": CATEGORIES,
}


def _line_of(text: str | None, section: str | None, key: str) -> int | None:
    """1-based line where ``key`` is assigned (inside ``[section]`` when given)."""
    if not text:
        return None
    current = None
    key_re = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for n, line in enumerate(text.splitlines(), start=1):
        head = re.match(r"^\s*\[([^\]]+)\]", line)
        if head:
            current = head.group(1).strip()
            if section is None and current == key:
                return n
            continue
        if key_re.match(line) and (section is None or current == section):
            return n
    return None


def _coerce(value: Any, default: Any, where: str):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(f"{where} must be a table")
        unknown = set(value) - set(default)
        if unknown:
            raise ConfigError(f"{where} has unknown key(s): {', '.join(sorted(unknown))}")
        merged = dict(default)
        for k, v in value.items():
            merged[k] = _coerce(v, default[k], f"{where}.{k}")
        return merged
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
    return value


def _update(obj, values: dict, section: str, text: str | None):
    changes = {}
    for key, value in values.items():
        try:
            changes[key] = _coerce(value, getattr(obj, key), f"{section}.{key}")
        except ConfigError as exc:
            raise ConfigError(str(exc), _line_of(text, section, key)) from None
    return replace(obj, **changes)


def plan_from_dict(data: dict, text: str | None = None) -> ExperimentPlan:
    """Build and validate a plan; every key must be known."""
    for section, body in data.items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]", _line_of(text, None, section))
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table", _line_of(text, None, section))
        for key in body:
            if key not in ALLOWED[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]", _line_of(text, section, key))

    plan = ExperimentPlan()
    exp = data.get("experiment", {})
    if "policies" in exp:
        pol = exp["policies"]
        if not isinstance(pol, list):
            raise ConfigError("experiment.policies must be a list", _line_of(text, "experiment", "policies"))
        try:
            plan = replace(plan, policies=tuple(check_policy_names(pol)))
        except ConfigError as exc:
            raise ConfigError(str(exc), _line_of(text, "experiment", "policies")) from None
    for key in ("interference", "redistribute_idle"):
        if key in exp:
            plan = replace(plan, **{key: _coerce(exp[key], getattr(plan, key), f"experiment.{key}")})

    scenario = _update(plan.scenario, data.get("scenario", {}), "scenario", text)
    try:
        scenario.validate()
    except ConfigError as exc:
        raise ConfigError(str(exc), _line_of(text, None, "scenario")) from None

    cons = dict(data.get("constellation", {}))
    name = cons.pop("name", plan.constellation_name)
    if not isinstance(name, str):
        raise ConfigError("constellation.name must be a string", _line_of(text, "constellation", "name"))
    try:
        base = preset(name)
    except ConfigError as exc:
        raise ConfigError(str(exc), _line_of(text, "constellation", "name")) from None
    constellation = _update(base, cons, "constellation", text)

    link = _update(plan.link, data.get("channel", {}), "channel", text)

    clutter = plan.clutter
    if "clutter" in data:
        values = {c: tuple(clutter.values[c]) for c in CATEGORIES}
        for cat, col in data["clutter"].items():
            if not isinstance(col, list) or not all(isinstance(v, (int, float)) for v in col):
                raise ConfigError(f"clutter.{cat} must be a list of numbers", _line_of(text, "clutter", cat))
            values[cat] = tuple(float(v) for v in col)
        try:
            clutter = ClutterTable(values)
        except DomainError as exc:
            raise ConfigError(str(exc), _line_of(text, None, "clutter")) from None

    quotas = plan.quotas
    if "quotas" in data:
        q = {c: getattr(quotas, c) for c in CATEGORIES}
        q.update({k: float(v) for k, v in data["quotas"].items()})
        quotas = QuotaConfig(**q)

    return replace(
        plan,
        scenario=scenario,
        constellation_name=name,
        constellation=constellation,
        link=link,
        clutter=clutter,
        quotas=quotas,
    )


def parse_override(item: str) -> tuple[list, Any]:
    """``section.key=value`` with the value parsed as a TOML literal (bare words become strings)."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    path = key.strip().split(".")
    if len(path) < 2 or not all(path):
        raise ConfigError(f"override key {key!r} must look like section.key")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return path, value


def apply_overrides(data: dict, overrides: Sequence[str]) -> dict:
    out = {k: dict(v) if isinstance(v, dict) else v for k, v in data.items()}
    for item in overrides:
        path, value = parse_override(item)
        node = out.setdefault(path[0], {})
        for part in path[1:-1]:
            node = node.setdefault(part, {})
        node[path[-1]] = value
    return out


def load_text(path: str | Path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None


def load_plan(path: str | Path | None = None, overrides: Sequence[str] = ()) -> ExperimentPlan:
    text = None
    data: dict = {}
    if path is not None:
        text = load_text(path)
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return plan_from_dict(apply_overrides(data, overrides), text)
