"""Structured prompt assembly from components C0-C5 and the single-factor ablations."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from string import Template
from typing import Optional, Union

from .domain import SimParams

TEMPLATE_NAMES = (
    "system", "c0_observations", "c1_history", "c2_previous_plan", "c3_header",
    "c3_safety", "c3_human", "c3_distance", "c3_reassess", "c4_tactical", "c5_output",
)

# C3 sub-instructions in render order, with the ablation that drops each one
C3_ITEMS = (("c3_safety", "A3"), ("c3_human", "A4"), ("c3_distance", "A5"), ("c3_reassess", "A6"))


class PromptContextError(ValueError):
    pass


class PromptVariant(str, Enum):
    BASELINE = "baseline"
    A1 = "a1"  # -history
    A2 = "a2"  # -previous plan
    A3 = "a3"  # -safety
    A4 = "a4"  # -human-likeness
    A5 = "a5"  # -distance keeping
    A6 = "a6"  # -reassessment
    A7 = "a7"  # -tactical plan

    @classmethod
    def parse(cls, value: Union[str, "PromptVariant"]) -> "PromptVariant":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown prompt variant {value!r}; choose from baseline, a1..a7") from None

    @property
    def label(self) -> str:
        return "Baseline" if self is PromptVariant.BASELINE else self.name


@dataclass(frozen=True)
class HistoryEntry:
    time: float
    ego_acceleration: float
    other_velocity: float


@dataclass(frozen=True)
class PromptContext:
    ego_velocity: float
    other_velocity: float
    relative_distance: float
    distance_to_merge: Optional[float]
    road_type: str
    vehicle_length: float
    time: float = 0.0
    history: tuple[HistoryEntry, ...] = ()
    previous_plan_remainder: Optional[tuple[float, ...]] = None

    def validate(self, params: Optional[SimParams] = None) -> None:
        if self.road_type not in ("merge", "straight"):
            raise PromptContextError(f"unknown road type {self.road_type!r}")
        if (self.road_type == "merge") != (self.distance_to_merge is not None):
            raise PromptContextError("distance_to_merge must be given exactly when road_type is 'merge'")
        if params is not None:
            if self.previous_plan_remainder is not None and len(self.previous_plan_remainder) > params.N:
                raise PromptContextError("previous plan remainder longer than the plan horizon")
            if self.history and self.history[-1].time - self.history[0].time > params.memory_window_Tm + 1e-9:
                raise PromptContextError("history spans more than the memory window")

    def digest(self) -> str:
        payload = repr((
            self.time, self.ego_velocity, self.other_velocity, self.relative_distance,
            self.distance_to_merge, self.road_type, self.vehicle_length,
            tuple((e.time, e.ego_acceleration, e.other_velocity) for e in self.history),
            self.previous_plan_remainder,
        ))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class SchemaDescriptor:
    requires_MY_token: bool
    N: int


class TemplateSet:
    """Component wording loaded from plain-text files with ``$name`` placeholders."""

    def __init__(self, texts: dict[str, str]):
        missing = [n for n in TEMPLATE_NAMES if n not in texts]
        if missing:
            raise FileNotFoundError(f"missing prompt templates: {', '.join(missing)}")
        self.texts = {n: texts[n].rstrip("\n") for n in TEMPLATE_NAMES}

    @classmethod
    def load(cls, directory: Optional[Path] = None) -> "TemplateSet":
        if directory is None:
            root = resources.files("mergesim") / "templates"
            return cls({n: (root / f"{n}.txt").read_text(encoding="utf-8") for n in TEMPLATE_NAMES})
        directory = Path(directory)
        return cls({n: (directory / f"{n}.txt").read_text(encoding="utf-8") for n in TEMPLATE_NAMES})

    def hashes(self) -> dict[str, str]:
        return {n: hashlib.sha256(t.encode()).hexdigest() for n, t in self.texts.items()}

    def render(self, name: str, **values: object) -> str:
        return Template(self.texts[name]).substitute(values)


_DEFAULT: Optional[TemplateSet] = None


def default_templates() -> TemplateSet:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = TemplateSet.load()
    return _DEFAULT


def _f(x: float) -> str:
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


def _history_lines(ctx: PromptContext) -> str:
    if not ctx.history:
        return "(no history yet)"
    return "\n".join(
        f"t{_f(e.time - ctx.time)} s: acceleration {_f(e.ego_acceleration)} m/s^2, other speed {_f(e.other_velocity)} m/s"
        for e in ctx.history
    )


def build_prompt(ctx: PromptContext, variant: Union[PromptVariant, str], params: SimParams,
                 templates: Optional[TemplateSet] = None) -> str:
    """Render the user prompt for one agent at one query tick."""
    ctx.validate(params)
    variant = PromptVariant.parse(variant)
    tpl = templates or default_templates()

    if ctx.distance_to_merge is not None:
        merge_line = f"Distance to the merge point: {_f(ctx.distance_to_merge)} m"
    else:
        merge_line = "You have passed the merge point and are on the shared lane."
    blocks = [tpl.render(
        "c0_observations",
        road_type=ctx.road_type, vehicle_length=_f(ctx.vehicle_length),
        ego_velocity=_f(ctx.ego_velocity), other_velocity=_f(ctx.other_velocity),
        relative_distance=_f(ctx.relative_distance), merge_line=merge_line,
        dt=_f(params.dt), a_max=_f(params.a_max),
    )]
    if variant is not PromptVariant.A1:
        blocks.append(tpl.render("c1_history", memory_window=_f(params.memory_window_Tm),
                                 history_lines=_history_lines(ctx)))
    if variant is not PromptVariant.A2 and ctx.previous_plan_remainder is not None:
        plan = "[" + ", ".join(_f(u) for u in ctx.previous_plan_remainder) + "]"
        blocks.append(tpl.render("c2_previous_plan", previous_plan=plan))
    c3 = [tpl.render("c3_header")]
    c3 += [tpl.render(name) for name, dropped_by in C3_ITEMS if variant.name != dropped_by]
    blocks.append("\n".join(c3))
    if ctx.road_type == "merge" and variant is not PromptVariant.A7:
        blocks.append(tpl.render("c4_tactical"))
    blocks.append(tpl.render("c5_output", N=params.N, dt=_f(params.dt),
                             horizon=_f(params.plan_horizon_T), a_max=_f(params.a_max)))
    return "\n\n".join(blocks) + "\n"


def system_prompt(templates: Optional[TemplateSet] = None) -> str:
    return (templates or default_templates()).render("system")


def expected_schema(variant: Union[PromptVariant, str], road_type: str, params: Optional[SimParams] = None) -> SchemaDescriptor:
    variant = PromptVariant.parse(variant)
    n = (params or SimParams()).N
    return SchemaDescriptor(requires_MY_token=(road_type == "merge" and variant is not PromptVariant.A7), N=n)


def component_markers(prompt: str) -> dict[str, bool]:
    """Which of C0-C5 (and the C3 sub-instructions) a rendered prompt contains."""
    found = {f"C{i}": f"## [C{i}]" in prompt for i in range(6)}
    for name, _ in C3_ITEMS:
        tag = name.replace("c3_", "C3.")
        found[tag] = f"[{tag}]" in prompt
    return found
