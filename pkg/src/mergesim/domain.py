"""Shared value types for the merging harness.

All types are frozen dataclasses. Units are SI throughout (m, s, m/s, m/s^2).
Sign convention: positive headway and positive relative velocity mean the
left vehicle has the advantage.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Optional, Sequence

TRIAL_SCHEMA = "trial/1"


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def _exact_ratio(num: float, den: float, label: str) -> int:
    ratio = num / den
    k = round(ratio)
    if k < 1 or abs(ratio - k) > 1e-9 * max(1.0, abs(ratio)):
        raise ConfigError(f"{label} is not a positive integer multiple ({num} / {den} = {ratio})")
    return int(k)


@dataclass(frozen=True)
class SimParams:
    dt: float = 0.2
    plan_horizon_T: float = 4.0
    memory_window_Tm: float = 2.0
    prompt_rate_fp: float = 1.0
    a_max: float = 2.5
    vehicle_length_lveh: float = 4.5
    temperature_gamma: float = 1.0

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.a_max > 0:
            raise ConfigError(f"a_max must be positive, got {self.a_max}")
        if not self.vehicle_length_lveh > 0:
            raise ConfigError("vehicle_length_lveh must be positive")
        if not self.prompt_rate_fp > 0:
            raise ConfigError("prompt_rate_fp must be positive")
        if self.temperature_gamma < 0:
            raise ConfigError("temperature_gamma must be non-negative")
        if self.memory_window_Tm < 0:
            raise ConfigError("memory_window_Tm must be non-negative")

    @property
    def N(self) -> int:
        return derive_counts(self)[0]

    @property
    def actions_per_prompt(self) -> int:
        return derive_counts(self)[1]

    @property
    def history_len(self) -> int:
        return int(round(self.memory_window_Tm / self.dt))


def derive_counts(params: SimParams) -> tuple[int, int]:
    """Return (plan length N, actions executed per prompt).

    Raises ConfigError naming the offending pair when either ratio is not a
    positive integer.
    """
    n = _exact_ratio(params.plan_horizon_T, params.dt, "plan_horizon_T/dt")
    per_prompt = _exact_ratio(1.0 / params.prompt_rate_fp, params.dt, "(1/prompt_rate_fp)/dt")
    if per_prompt > n:
        raise ConfigError(f"prompt period covers {per_prompt} steps but the plan has only {n}")
    return n, per_prompt


@dataclass(frozen=True)
class TrackGeometry:
    approach_length: float = 50.0
    merged_length: float = 50.0

    def __post_init__(self) -> None:
        if not (self.approach_length > 0 and self.merged_length > 0):
            raise ConfigError("track lengths must be strictly positive")

    @property
    def total_length(self) -> float:
        return self.approach_length + self.merged_length


@dataclass(frozen=True)
class KinematicCondition:
    id: str
    v0_left: float
    v0_right: float
    projected_headway_h: float
    relative_velocity_dv: float

    def validate(self) -> None:
        if not math.isfinite(self.projected_headway_h):
            raise ConfigError(f"condition {self.id}: headway must be finite")
        if not (self.v0_left > 0 and self.v0_right > 0):
            raise ConfigError(f"condition {self.id}: initial speeds must be positive")
        # tolerance only absorbs binary representation error (10.4 - 9.6 != 0.8)
        if not math.isclose(self.v0_left - self.v0_right, self.relative_velocity_dv, rel_tol=0, abs_tol=1e-9):
            raise ConfigError(
                f"condition {self.id}: dv={self.relative_velocity_dv} but "
                f"v0_left - v0_right = {self.v0_left - self.v0_right}"
            )

    @classmethod
    def from_advantage(cls, id: str, h: float, dv: float, base_speed: float = 10.0) -> "KinematicCondition":
        return cls(id, base_speed + dv / 2, base_speed - dv / 2, h, dv)


def validate_condition_set(conditions: Sequence[KinematicCondition]) -> None:
    if not conditions:
        raise ConfigError("condition set is empty")
    seen: set[str] = set()
    for c in conditions:
        if c.id in seen:
            raise ConfigError(f"duplicate condition id {c.id!r}")
        seen.add(c.id)
        c.validate()


def default_conditions() -> list[KinematicCondition]:
    """Stand-in for the 11 experimental conditions.

    dv in {-0.8, 0, +0.8} m/s around a 10 m/s base speed. For dv != 0 the
    faster vehicle is given a headway disadvantage (or none), which is where
    the tactical conflict is interesting.
    """
    levels = [
        (0.0, -4.0), (0.0, -2.0), (0.0, 0.0), (0.0, 2.0), (0.0, 4.0),
        (0.8, -4.0), (0.8, -2.0), (0.8, 0.0),
        (-0.8, 0.0), (-0.8, 2.0), (-0.8, 4.0),
    ]
    return [KinematicCondition.from_advantage(f"C{i + 1}", h, dv) for i, (dv, h) in enumerate(levels)]


@dataclass(frozen=True)
class VehicleState:
    arc_position: float
    velocity: float
    acceleration: float = 0.0

    def __post_init__(self) -> None:
        if not self.velocity >= 0:
            raise ValueError(f"velocity must be non-negative, got {self.velocity}")


class PlanError(ValueError):
    """A plan with non-finite or out-of-range values."""


@dataclass(frozen=True)
class Plan:
    normalized_values: tuple[float, ...]
    cursor: int = 0

    def __post_init__(self) -> None:
        values = tuple(float(v) for v in self.normalized_values)
        object.__setattr__(self, "normalized_values", values)
        if not values:
            raise PlanError("plan is empty")
        for v in values:
            if not math.isfinite(v) or v < -1.0 or v > 1.0:
                raise PlanError(f"plan value {v!r} outside [-1, 1]")
        if not 0 <= self.cursor <= len(values):
            raise PlanError(f"cursor {self.cursor} outside [0, {len(values)}]")

    def __len__(self) -> int:
        return len(self.normalized_values)

    @classmethod
    def constant(cls, value: float, n: int) -> "Plan":
        return cls((value,) * n)

    @property
    def remainder(self) -> tuple[float, ...]:
        return self.normalized_values[self.cursor:]

    def advanced(self, k: int) -> "Plan":
        return Plan(self.normalized_values, min(len(self), self.cursor + k))


@dataclass(frozen=True)
class AgentResponse:
    plan: Plan
    tactical_token: Optional[str] = None
    rationale: str = ""

    def __post_init__(self) -> None:
        if self.tactical_token not in (None, "M", "Y"):
            raise ValueError(f"tactical token must be M or Y, got {self.tactical_token!r}")


class Outcome(str, Enum):
    LEFT_FIRST = "left-merged-first"
    RIGHT_FIRST = "right-merged-first"
    COLLISION = "collision"
    NON_FINISHED = "non-finished"


@dataclass(frozen=True)
class StepSnapshot:
    """State at ``time``; accelerations are the ones applied over the step ending here."""

    time: float
    left: VehicleState
    right: VehicleState


@dataclass(frozen=True)
class Exchange:
    time: float
    side: str
    context_digest: str
    raw_text: str
    status: str
    failure_reason: Optional[str] = None
    tactical_token: Optional[str] = None
    plan: tuple[float, ...] = ()


@dataclass(frozen=True)
class TrialRecord:
    condition: KinematicCondition
    prompt_variant: str
    steps: tuple[StepSnapshot, ...]
    exchanges: tuple[Exchange, ...]
    outcome: Outcome
    gap_at_merge: Optional[float]
    repetition: int = 0
    flags: tuple[str, ...] = ()
    error: Optional[str] = None

    def __post_init__(self) -> None:
        if self.outcome is Outcome.COLLISION and self.gap_at_merge is not None:
            raise ValueError("collision trials carry no gap_at_merge")
        if self.outcome in (Outcome.LEFT_FIRST, Outcome.RIGHT_FIRST):
            if self.gap_at_merge is None or self.gap_at_merge < 0:
                raise ValueError("merged trials need a non-negative gap_at_merge")

    def to_dict(self) -> dict[str, Any]:
        c = self.condition
        return {
            "schema": TRIAL_SCHEMA,
            "condition": {
                "id": c.id, "v0_left": c.v0_left, "v0_right": c.v0_right,
                "h": c.projected_headway_h, "dv": c.relative_velocity_dv,
            },
            "prompt_variant": self.prompt_variant,
            "repetition": self.repetition,
            "outcome": self.outcome.value,
            "gap_at_merge": self.gap_at_merge,
            "flags": list(self.flags),
            "error": self.error,
            "steps": [
                [s.time, s.left.arc_position, s.left.velocity, s.left.acceleration,
                 s.right.arc_position, s.right.velocity, s.right.acceleration]
                for s in self.steps
            ],
            "exchanges": [
                {
                    "time": e.time, "side": e.side, "context_digest": e.context_digest,
                    "raw_text": e.raw_text, "status": e.status, "failure_reason": e.failure_reason,
                    "tactical_token": e.tactical_token, "plan": list(e.plan),
                }
                for e in self.exchanges
            ],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TrialRecord":
        if d.get("schema") != TRIAL_SCHEMA:
            raise ValueError(f"unsupported trial schema {d.get('schema')!r}")
        c = d["condition"]
        steps = tuple(
            StepSnapshot(row[0], VehicleState(row[1], row[2], row[3]), VehicleState(row[4], row[5], row[6]))
            for row in d["steps"]
        )
        exchanges = tuple(
            Exchange(
                e["time"], e["side"], e["context_digest"], e["raw_text"], e["status"],
                e.get("failure_reason"), e.get("tactical_token"), tuple(e.get("plan", ())),
            )
            for e in d["exchanges"]
        )
        return cls(
            condition=KinematicCondition(c["id"], c["v0_left"], c["v0_right"], c["h"], c["dv"]),
            prompt_variant=d["prompt_variant"],
            steps=steps,
            exchanges=exchanges,
            outcome=Outcome(d["outcome"]),
            gap_at_merge=d["gap_at_merge"],
            repetition=d.get("repetition", 0),
            flags=tuple(d.get("flags", ())),
            error=d.get("error"),
        )


@dataclass(frozen=True)
class RegressionFit:
    names: tuple[str, ...]
    coefficients: tuple[float, ...]
    standard_errors: tuple[float, ...]
    test_statistics: tuple[float, ...]
    p_values: tuple[float, ...]
    n_observations: int
    model_kind: str
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        k = len(self.coefficients)
        if not (len(self.names) == len(self.standard_errors) == len(self.test_statistics) == len(self.p_values) == k):
            raise ValueError("per-predictor vectors differ in length")
        if self.model_kind not in ("logistic", "linear"):
            raise ValueError(f"unknown model kind {self.model_kind!r}")
        for p in self.p_values:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"p-value {p} outside [0, 1]")
        if self.n_observations < k + 1:
            raise ValueError("too few observations for the number of predictors")

    def coef(self, name: str) -> float:
        return self.coefficients[self.names.index(name)]

    def p(self, name: str) -> float:
        return self.p_values[self.names.index(name)]


def iter_records(lines: Iterable[str]) -> Iterable[TrialRecord]:
    for line in lines:
        line = line.strip()
        if line:
            yield TrialRecord.from_dict(json.loads(line))
