"""Driver agents: deterministic test doubles and the LLM-backed policy.

Every agent answers ``decide(ctx)`` with an :class:`AgentReply`. A reply
without a response means the agent produced nothing usable this tick; the
runner then falls back to the most recent valid plan.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol, Sequence

from .domain import AgentResponse, Plan, SimParams
from .llm_client import CassetteMiss, CompletionRequest, LLMClient, LLMError
from .parser import parse_response, render_response
from .prompting import (
    PromptContext, PromptVariant, TemplateSet, build_prompt, expected_schema, system_prompt,
)

log = logging.getLogger(__name__)


class ScriptExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class AgentReply:
    response: Optional[AgentResponse]
    raw_text: str = ""
    failure_reason: Optional[str] = None
    error: Optional[str] = None

    @property
    def status(self) -> str:
        return "valid" if self.response is not None else "invalid"


class Agent(Protocol):
    remote: bool

    def decide(self, ctx: PromptContext) -> AgentReply: ...


def _reply(response: AgentResponse) -> AgentReply:
    return AgentReply(response, render_response(response))


class ConstantAccelAgent:
    remote = False

    def __init__(self, u: float, n: int = 20):
        if not -1.0 <= u <= 1.0:
            raise ValueError(f"constant normalized acceleration must be in [-1, 1], got {u}")
        self.plan = Plan.constant(u, n)

    def decide(self, ctx: PromptContext) -> AgentReply:
        return _reply(AgentResponse(self.plan))


class ScriptedAgent:
    """Returns its k-th stored plan on the k-th call."""

    remote = False

    def __init__(self, plans: Sequence[Plan | Sequence[float]]):
        self.plans = [p if isinstance(p, Plan) else Plan(tuple(p)) for p in plans]
        self.calls = 0

    @classmethod
    def from_file(cls, path: Path, side: str) -> "ScriptedAgent":
        """JSON file: either a list of plans, or ``{"left": [...], "right": [...]}``."""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if isinstance(data, dict):
            data = data[side]
        return cls(data)

    def decide(self, ctx: PromptContext) -> AgentReply:
        if self.calls >= len(self.plans):
            raise ScriptExhausted(f"script exhausted after {len(self.plans)} plans")
        plan = self.plans[self.calls]
        self.calls += 1
        return _reply(AgentResponse(plan))


class HeuristicYieldAgent:
    """Yields when it would reach the merge point shortly after the other car.

    Both cars' arrival times are projected at current speed. If the ego is
    behind by less than ``threshold`` seconds it brakes at ``decel``
    (normalized), otherwise it holds speed. Exact ties are broken by side:
    the right car yields.
    """

    remote = False

    def __init__(self, side: str, n: int = 20, threshold: float = 1.5, decel: float = -0.4):
        if side not in ("left", "right"):
            raise ValueError(f"side must be left or right, got {side!r}")
        self.side, self.n, self.threshold, self.decel = side, n, threshold, decel

    def arrival_gap(self, ctx: PromptContext) -> Optional[float]:
        """Ego arrival time minus other arrival time, or None when there is no conflict."""
        if ctx.distance_to_merge is None:
            return None
        other_dtm = ctx.distance_to_merge + ctx.relative_distance
        if other_dtm <= 0:
            return None
        t_ego = ctx.distance_to_merge / ctx.ego_velocity if ctx.ego_velocity > 0 else math.inf
        t_other = other_dtm / ctx.other_velocity if ctx.other_velocity > 0 else math.inf
        return t_ego - t_other

    def decide(self, ctx: PromptContext) -> AgentReply:
        gap = self.arrival_gap(ctx)
        if gap is None:
            return _reply(AgentResponse(Plan.constant(0.0, self.n)))
        behind = gap > 1e-9 or (abs(gap) <= 1e-9 and self.side == "right")
        if behind and gap < self.threshold:
            return _reply(AgentResponse(Plan.constant(self.decel, self.n), rationale="Yielding."))
        return _reply(AgentResponse(Plan.constant(0.0, self.n), rationale="Holding speed."))


class LlmAgent:
    """prompt -> completion -> parse. Transport failures come back as invalid replies."""

    remote = True

    def __init__(self, client: LLMClient, model_id: str, variant: PromptVariant | str,
                 params: SimParams, templates: Optional[TemplateSet] = None,
                 max_output_tokens: int = 8192, tag: str = ""):
        self.client = client
        self.model_id = model_id
        self.variant = PromptVariant.parse(variant)
        self.params = params
        self.templates = templates
        self.max_output_tokens = max_output_tokens
        self.tag = tag

    def decide(self, ctx: PromptContext) -> AgentReply:
        request = CompletionRequest(
            system_text=system_prompt(self.templates),
            user_text=build_prompt(ctx, self.variant, self.params, self.templates),
            temperature=self.params.temperature_gamma,
            model_id=self.model_id,
            max_output_tokens=self.max_output_tokens,
            tag=self.tag,
        )
        try:
            result = self.client.complete(request)
        except CassetteMiss:
            raise
        except LLMError as exc:
            log.error("transport failure for %s: %s", self.tag or self.model_id, exc)
            return AgentReply(None, "", failure_reason="transport", error=str(exc))
        outcome = parse_response(result.raw_text, expected_schema(self.variant, ctx.road_type, self.params))
        return AgentReply(outcome.response, outcome.raw_text, outcome.failure_reason)
