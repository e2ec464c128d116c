"""Receding-horizon closed loop for one trial, and experiment orchestration."""

from __future__ import annotations

import json
import logging
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import __version__
from .agents import (
    Agent, AgentReply, ConstantAccelAgent, HeuristicYieldAgent, LlmAgent, ScriptedAgent,
)
from .domain import (
    Exchange, KinematicCondition, Outcome, Plan, SimParams, StepSnapshot, TrackGeometry,
    TrialRecord, default_conditions, validate_condition_set,
)
from .llm_client import Cassette, LLMClient, make_provider
from .parser import fallback_plan
from .prompting import HistoryEntry, PromptContext, PromptVariant, TemplateSet, default_templates
from .simulator import Status, WorldState, advance, check_termination, clamp_and_scale, initial_world, merge_event

log = logging.getLogger(__name__)

SIDES = ("left", "right")


@dataclass(frozen=True)
class LlmSettings:
    max_attempts: int = 4
    max_in_flight: int = 4
    max_output_tokens: int = 8192
    base_delay: float = 1.0


@dataclass(frozen=True)
class ExperimentSpec:
    conditions: tuple[KinematicCondition, ...] = field(default_factory=lambda: tuple(default_conditions()))
    repetitions: int = 10
    variant: PromptVariant = PromptVariant.BASELINE
    agent_left: str = "heuristic"
    agent_right: str = "heuristic"
    params: SimParams = field(default_factory=SimParams)
    track: TrackGeometry = field(default_factory=TrackGeometry)
    parallelism: int = 1
    time_budget: float = 120.0
    llm: LlmSettings = field(default_factory=LlmSettings)
    templates_dir: Optional[str] = None

    def __post_init__(self) -> None:
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        object.__setattr__(self, "variant", PromptVariant.parse(self.variant))
        object.__setattr__(self, "conditions", tuple(self.conditions))
        validate_condition_set(self.conditions)
        self.params.N  # derive_counts raises on a bad configuration

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        return cls(
            conditions=tuple(KinematicCondition(**c) for c in d["conditions"]),
            repetitions=d["repetitions"],
            variant=PromptVariant.parse(d["variant"]),
            agent_left=d["agent_left"],
            agent_right=d["agent_right"],
            params=SimParams(**d["params"]),
            track=TrackGeometry(**d["track"]),
            parallelism=d.get("parallelism", 1),
            time_budget=d.get("time_budget", 120.0),
            llm=LlmSettings(**d.get("llm", {})),
            templates_dir=d.get("templates_dir"),
        )


class TrialAborted(RuntimeError):
    pass


def _context(world: WorldState, side: str, track: TrackGeometry, params: SimParams,
             history: Sequence[HistoryEntry], plan: Optional[Plan]) -> PromptContext:
    ego, other = (world.left, world.right) if side == "left" else (world.right, world.left)
    merged = world.left_merged if side == "left" else world.right_merged
    return PromptContext(
        ego_velocity=ego.velocity,
        other_velocity=other.velocity,
        relative_distance=ego.arc_position - other.arc_position,
        distance_to_merge=None if merged else track.approach_length - ego.arc_position,
        road_type="straight" if merged else "merge",
        vehicle_length=params.vehicle_length_lveh,
        time=world.time,
        history=tuple(history),
        previous_plan_remainder=None if plan is None else plan.remainder,
    )


def run_trial(condition: KinematicCondition, agents: dict[str, Agent], *,
              params: SimParams = SimParams(), track: TrackGeometry = TrackGeometry(),
              variant: PromptVariant | str = PromptVariant.BASELINE, repetition: int = 0,
              time_budget: float = 120.0,
              on_context: Optional[Callable[[str, PromptContext], None]] = None) -> TrialRecord:
    """Simulate one trial.

    Both agents are queried at t=0 and then every ``actions_per_prompt``
    steps; simulated time is paused while they answer. ``on_context`` is a
    test hook that sees every context handed to an agent.
    """
    variant = PromptVariant.parse(variant)
    n, per_prompt = params.N, params.actions_per_prompt
    world = initial_world(condition, track)
    steps = [StepSnapshot(0.0, world.left, world.right)]
    histories = {s: deque(maxlen=params.history_len) for s in SIDES}
    plans: dict[str, Optional[Plan]] = {s: None for s in SIDES}
    last_valid: dict[str, Optional[Plan]] = {s: None for s in SIDES}
    exchanges: list[Exchange] = []
    flags: list[str] = []
    status = Status.CONTINUE
    error = None
    step_index = 0
    pool = ThreadPoolExecutor(max_workers=2) if any(a.remote for a in agents.values()) else None

    try:
        while status is Status.CONTINUE:
            contexts = {s: _context(world, s, track, params, histories[s], plans[s]) for s in SIDES}
            if on_context is not None:
                for s in SIDES:
                    on_context(s, contexts[s])
            if pool is not None:
                futures = {s: pool.submit(agents[s].decide, contexts[s]) for s in SIDES}
                replies = {s: futures[s].result() for s in SIDES}
            else:
                replies = {s: agents[s].decide(contexts[s]) for s in SIDES}

            for s in SIDES:
                reply: AgentReply = replies[s]
                reason = reply.failure_reason
                if reply.response is not None and len(reply.response.plan) != n:
                    reason = "wrong-length"
                if reply.response is not None and reason is None:
                    plan = Plan(reply.response.plan.normalized_values)
                    last_valid[s] = plan
                    status_label = "valid"
                else:
                    # most recent valid plan, shifted past what was already executed
                    source = plans[s] if last_valid[s] is not None else None
                    plan, empty = fallback_plan(source, n)
                    status_label = "fallback-zero" if empty else "fallback"
                    if empty:
                        flags.append(f"no-valid-plan:{s}@{world.time:.1f}")
                plans[s] = plan
                exchanges.append(Exchange(
                    time=world.time, side=s, context_digest=contexts[s].digest(),
                    raw_text=reply.raw_text, status=status_label, failure_reason=reason,
                    tactical_token=reply.response.tactical_token if reply.response else None,
                    plan=plan.normalized_values,
                ))

            for _ in range(per_prompt):
                accel = {s: clamp_and_scale(plans[s].normalized_values[plans[s].cursor], params.a_max) for s in SIDES}
                histories["left"].append(HistoryEntry(world.time, accel["left"], world.right.velocity))
                histories["right"].append(HistoryEntry(world.time, accel["right"], world.left.velocity))
                step_index += 1
                world = advance(world, accel["left"], accel["right"], params.dt, track, step_index)
                steps.append(StepSnapshot(world.time, world.left, world.right))
                plans = {s: plans[s].advanced(1) for s in SIDES}
                status = check_termination(world, track, params.vehicle_length_lveh, time_budget)
                if status is not Status.CONTINUE:
                    break
    except Exception as exc:  # contract violations end the trial with a diagnostic record
        log.error("trial %s rep %d aborted: %s", condition.id, repetition, exc)
        error = f"{type(exc).__name__}: {exc}"
        status = Status.NON_FINISHED
    finally:
        if pool is not None:
            pool.shutdown(wait=True)

    gap = None
    if status is Status.COLLISION:
        outcome = Outcome.COLLISION
    elif status is Status.FINISHED:
        event = merge_event(steps, track.approach_length)
        assert event is not None, "a finished trial has a merge"
        outcome = Outcome.LEFT_FIRST if event.first == "left" else Outcome.RIGHT_FIRST
        gap = event.gap
    else:
        outcome = Outcome.NON_FINISHED
    return TrialRecord(
        condition=condition, prompt_variant=variant.value, steps=tuple(steps),
        exchanges=tuple(exchanges), outcome=outcome, gap_at_merge=gap,
        repetition=repetition, flags=tuple(flags), error=error,
    )


class AgentFactory:
    """Builds fresh agents per trial from spec strings.

    ``heuristic`` | ``const:<u>`` | ``scripted:<file>`` | ``llm:<provider>/<model>``.
    LLM clients are shared across trials, one per provider.
    """

    def __init__(self, spec: ExperimentSpec, cassette: Optional[Cassette] = None,
                 templates: Optional[TemplateSet] = None, provider_overrides: Optional[dict] = None):
        self.spec = spec
        self.cassette = cassette
        self.templates = templates
        self._clients: dict[str, LLMClient] = {}
        self._providers = dict(provider_overrides or {})

    def _client(self, provider: str, model: str) -> LLMClient:
        if provider not in self._clients:
            prov = self._providers.get(provider)
            if prov is None:
                kwargs = {"n": self.spec.params.N} if provider == "mock" else {}
                prov = make_provider(provider, model, **kwargs)
            s = self.spec.llm
            self._clients[provider] = LLMClient(prov, max_attempts=s.max_attempts, base_delay=s.base_delay,
                                                max_in_flight=s.max_in_flight, cassette=self.cassette)
        return self._clients[provider]

    def models(self) -> list[str]:
        return sorted({a.split(":", 1)[1] for a in (self.spec.agent_left, self.spec.agent_right) if a.startswith("llm:")})

    def build(self, text: str, side: str, tag: str) -> Agent:
        params = self.spec.params
        kind, _, arg = text.partition(":")
        if kind == "heuristic":
            return HeuristicYieldAgent(side, n=params.N)
        if kind == "const":
            return ConstantAccelAgent(float(arg), n=params.N)
        if kind == "scripted":
            return ScriptedAgent.from_file(Path(arg), side)
        if kind == "llm":
            provider, _, model = arg.partition("/")
            if not provider:
                raise ValueError(f"agent spec {text!r} needs llm:<provider>/<model>")
            return LlmAgent(self._client(provider, model), model, self.spec.variant, params,
                            templates=self.templates, max_output_tokens=self.spec.llm.max_output_tokens, tag=tag)
        raise ValueError(f"unknown agent spec {text!r}; use heuristic, const:<u>, scripted:<file> or llm:<provider>/<model>")


def run_experiment(spec: ExperimentSpec, out_dir: Path, *, record: Optional[Path] = None,
                   replay: Optional[Path] = None, provider_overrides: Optional[dict] = None) -> Path:
    """Run conditions x repetitions and write ``trials.jsonl`` + ``manifest.json`` into ``out_dir``."""
    if record and replay:
        raise ValueError("record and replay are mutually exclusive")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    templates = TemplateSet.load(Path(spec.templates_dir)) if spec.templates_dir else default_templates()
    cassette = None
    if replay:
        cassette = Cassette(Path(replay), "replay")
    elif record:
        cassette = Cassette(Path(record), "record")
    factory = AgentFactory(spec, cassette, templates, provider_overrides)

    jobs = [(ci, c, rep) for ci, c in enumerate(spec.conditions) for rep in range(spec.repetitions)]

    def one(job: tuple[int, KinematicCondition, int]) -> TrialRecord:
        _, cond, rep = job
        try:
            agents = {s: factory.build(getattr(spec, f"agent_{s}"), s, f"{cond.id}/{rep}/{s}") for s in SIDES}
        except Exception as exc:
            # unusable agent spec: record the failure and keep going
            return TrialRecord(cond, spec.variant.value, (), (), Outcome.NON_FINISHED, None, rep,
                               error=f"{type(exc).__name__}: {exc}")
        return run_trial(cond, agents, params=spec.params, track=spec.track, variant=spec.variant,
                         repetition=rep, time_budget=spec.time_budget)

    started = datetime.now(timezone.utc).isoformat()
    t0 = time.monotonic()
    if spec.parallelism > 1:
        with ThreadPoolExecutor(max_workers=spec.parallelism) as pool:
            records = list(pool.map(one, jobs))
    else:
        records = [one(j) for j in jobs]

    with (out_dir / "trials.jsonl").open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), ensure_ascii=False) + "\n")

    manifest = {
        "harness_version": __version__,
        "spec": spec.to_dict(),
        "template_hashes": templates.hashes(),
        "models": factory.models(),
        "cassette": {"mode": cassette.mode, "path": str(cassette.path)} if cassette else None,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "wall_seconds": round(time.monotonic() - t0, 3),
        "trial_count": len(records),
        "trials": [
            {"condition": r.condition.id, "repetition": r.repetition, "outcome": r.outcome.value,
             "status": "failed" if r.error else "ok", "error": r.error, "flags": list(r.flags)}
            for r in records
        ],
        "failures": [f"{r.condition.id}/{r.repetition}: {r.error}" for r in records if r.error],
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    audit_dataset(out_dir)
    return out_dir


def load_trials(path: Path) -> list[TrialRecord]:
    path = Path(path)
    if path.is_dir():
        path = path / "trials.jsonl"
    with path.open(encoding="utf-8") as fh:
        return [TrialRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def audit_dataset(out_dir: Path) -> None:
    manifest = json.loads((Path(out_dir) / "manifest.json").read_text(encoding="utf-8"))
    with (Path(out_dir) / "trials.jsonl").open(encoding="utf-8") as fh:
        lines = sum(1 for line in fh if line.strip())
    if lines != manifest["trial_count"]:
        raise RuntimeError(f"manifest lists {manifest['trial_count']} trials but trials.jsonl has {lines}")
