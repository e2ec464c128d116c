"""TOML experiment configuration.

Sections: ``[sim]`` (SimParams fields), ``[track]``, ``[experiment]``,
``[llm]`` and a ``[[conditions]]`` array with id, v0_left, v0_right, h, dv.
Anything omitted falls back to the built-in defaults.
"""

from __future__ import annotations

import sys
from dataclasses import fields
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .domain import ConfigError, KinematicCondition, SimParams, TrackGeometry, default_conditions
from .runner import ExperimentSpec, LlmSettings

_EXPERIMENT_KEYS = {"repetitions", "variant", "agent", "agent_left", "agent_right", "parallelism",
                    "time_budget", "templates_dir"}


def _section(data: dict, name: str, cls: type) -> Any:
    raw = data.get(name, {})
    allowed = {f.name for f in fields(cls)}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"[{name}] has unknown key(s): {', '.join(sorted(unknown))}")
    return cls(**raw)


def spec_from_mapping(data: dict, base_dir: Path = Path(".")) -> ExperimentSpec:
    unknown = set(data) - {"sim", "track", "experiment", "llm", "conditions"}
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    exp = dict(data.get("experiment", {}))
    bad = set(exp) - _EXPERIMENT_KEYS
    if bad:
        raise ConfigError(f"[experiment] has unknown key(s): {', '.join(sorted(bad))}")
    conditions = default_conditions()
    if "conditions" in data:
        try:
            conditions = [KinematicCondition(str(c["id"]), float(c["v0_left"]), float(c["v0_right"]),
                                             float(c["h"]), float(c["dv"])) for c in data["conditions"]]
        except KeyError as exc:
            raise ConfigError(f"condition entry missing key {exc}") from None
    both = exp.pop("agent", "heuristic")
    templates_dir = exp.pop("templates_dir", None)
    if templates_dir is not None:
        templates_dir = str((base_dir / templates_dir).resolve())
    return ExperimentSpec(
        conditions=tuple(conditions),
        repetitions=int(exp.pop("repetitions", 10)),
        variant=exp.pop("variant", "baseline"),
        agent_left=exp.pop("agent_left", both),
        agent_right=exp.pop("agent_right", both),
        params=_section(data, "sim", SimParams),
        track=_section(data, "track", TrackGeometry),
        parallelism=int(exp.pop("parallelism", 1)),
        time_budget=float(exp.pop("time_budget", 120.0)),
        llm=_section(data, "llm", LlmSettings),
        templates_dir=templates_dir,
    )


def load_config(path: Path) -> ExperimentSpec:
    path = Path(path)
    with path.open("rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return spec_from_mapping(data, path.parent)
