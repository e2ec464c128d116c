"""Behavioral indicators per trial and per dataset, plus human-data import."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .domain import Outcome, SimParams, TrackGeometry, TrialRecord
from .simulator import merge_event

JOINT_RMSE_THRESHOLD = 0.5  # m/s, both drivers
CHANGE_POINT_DEADBAND = 0.05  # m/s^2
PIECEWISE_THRESHOLD = 0.7

HUMAN_COLUMNS = ("trial_id", "h", "dv", "outcome", "gap_at_merge", "rmse_left", "rmse_right", "collided")
STEP_COLUMNS = ("trial_id", "t", "v_left", "v_right")


class DegenerateInput(ValueError):
    pass


class EmptySample(ValueError):
    pass


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class TrialMetrics:
    merge_first: Optional[int]
    gap_at_merge: Optional[float]
    collided: bool
    speed_rmse_left: float
    speed_rmse_right: float
    piecewise_score: Optional[float]

    @property
    def joint_contribution(self) -> bool:
        return self.speed_rmse_left >= JOINT_RMSE_THRESHOLD and self.speed_rmse_right >= JOINT_RMSE_THRESHOLD


@dataclass(frozen=True)
class MetricsRow:
    """Source-agnostic per-trial row: what ``analyze`` consumes."""

    trial_id: str
    h: float
    dv: float
    outcome: Outcome
    metrics: TrialMetrics
    variant: str = "baseline"

    @property
    def included(self) -> bool:
        return self.outcome in (Outcome.LEFT_FIRST, Outcome.RIGHT_FIRST)


def speed_rmse(velocities: Sequence[float], v0: float) -> float:
    if not velocities:
        raise DegenerateInput("empty velocity series")
    return math.sqrt(sum((v - v0) ** 2 for v in velocities) / len(velocities))


def piecewise_linearity(velocities: Sequence[float], dt: float,
                        deadband: float = CHANGE_POINT_DEADBAND) -> float:
    """1 - (acceleration change-points / opportunities); 1.0 means a single constant-acceleration segment."""
    if len(velocities) < 3:
        raise DegenerateInput("need at least 3 velocity samples")
    acc = [(b - a) / dt for a, b in zip(velocities, velocities[1:])]
    changes = sum(1 for a, b in zip(acc, acc[1:]) if abs(b - a) > deadband)
    return 1.0 - changes / (len(acc) - 1)


def compute_trial_metrics(trial: TrialRecord, params: SimParams = SimParams(),
                          track: TrackGeometry = TrackGeometry()) -> TrialMetrics:
    if not trial.steps:
        raise DegenerateInput("trial has no steps")
    collided = trial.outcome is Outcome.COLLISION
    merge_first = None
    if trial.outcome is Outcome.LEFT_FIRST:
        merge_first = 1
    elif trial.outcome is Outcome.RIGHT_FIRST:
        merge_first = 0

    # interaction window: t=0 until the first vehicle reaches the merge point
    event = merge_event(trial.steps, track.approach_length)
    window = [s for s in trial.steps if event is None or s.time <= event.time + 1e-12]
    rmse_l = speed_rmse([s.left.velocity for s in window], trial.condition.v0_left)
    rmse_r = speed_rmse([s.right.velocity for s in window], trial.condition.v0_right)

    score = None
    if len(trial.steps) >= 3:
        score = 0.5 * (
            piecewise_linearity([s.left.velocity for s in trial.steps], params.dt)
            + piecewise_linearity([s.right.velocity for s in trial.steps], params.dt)
        )
    return TrialMetrics(merge_first, None if collided else trial.gap_at_merge, collided, rmse_l, rmse_r, score)


def rows_from_trials(trials: Iterable[TrialRecord], params: SimParams = SimParams(),
                     track: TrackGeometry = TrackGeometry()) -> list[MetricsRow]:
    rows = []
    for t in trials:
        if not t.steps:
            continue  # aborted before the first step; nothing to measure
        c = t.condition
        rows.append(MetricsRow(f"{c.id}/{t.repetition}", c.projected_headway_h, c.relative_velocity_dv,
                               t.outcome, compute_trial_metrics(t, params, track), t.prompt_variant))
    return rows


@dataclass(frozen=True)
class Summary:
    n_trials: int
    n_included: int
    collision_rate: float
    mean_gap: float
    mean_rmse: float
    joint_rate: float
    mean_piecewise: Optional[float]


def aggregate(rows: Sequence[MetricsRow]) -> Summary:
    """Dataset indicators. Collisions count only towards the collision rate;
    gap, RMSE, joint rate and piecewise score use merged trials only."""
    if not rows:
        raise EmptySample("dataset is empty")
    n = len(rows)
    collisions = sum(1 for r in rows if r.outcome is Outcome.COLLISION)
    kept = [r for r in rows if r.included]
    if not kept:
        raise EmptySample(f"all {n} trials excluded (collisions or non-finished)")
    gaps = [r.metrics.gap_at_merge for r in kept]
    rmses = [v for r in kept for v in (r.metrics.speed_rmse_left, r.metrics.speed_rmse_right)]
    pw = [r.metrics.piecewise_score for r in kept if r.metrics.piecewise_score is not None]
    return Summary(
        n_trials=n,
        n_included=len(kept),
        collision_rate=100.0 * collisions / n,
        mean_gap=math.fsum(gaps) / len(gaps),
        mean_rmse=math.fsum(rmses) / len(rmses),
        joint_rate=100.0 * sum(1 for r in kept if r.metrics.joint_contribution) / len(kept),
        mean_piecewise=math.fsum(pw) / len(pw) if pw else None,
    )


_OUTCOME_ALIASES = {
    "left-merged-first": Outcome.LEFT_FIRST, "left": Outcome.LEFT_FIRST, "1": Outcome.LEFT_FIRST,
    "right-merged-first": Outcome.RIGHT_FIRST, "right": Outcome.RIGHT_FIRST, "0": Outcome.RIGHT_FIRST,
    "collision": Outcome.COLLISION, "non-finished": Outcome.NON_FINISHED,
}


def _num(row: dict, col: str, line: int, optional: bool = False) -> Optional[float]:
    cell = (row.get(col) or "").strip()
    if cell == "" and optional:
        return None
    try:
        return float(cell)
    except ValueError:
        raise SchemaError(f"row {line}, column {col!r}: not a number: {cell!r}") from None


def _bool(row: dict, col: str, line: int) -> bool:
    cell = (row.get(col) or "").strip().lower()
    if cell in ("1", "true", "yes"):
        return True
    if cell in ("0", "false", "no", ""):
        return False
    raise SchemaError(f"row {line}, column {col!r}: not a boolean: {cell!r}")


def read_human_csv(path: Path, steps_path: Optional[Path] = None, dt: Optional[float] = None) -> list[MetricsRow]:
    """Import trial-level human data (and optionally per-step velocities).

    Per-step data, when given, supplies the piecewise-linearity score (else an
    optional ``piecewise_score`` column is used); every other indicator is
    taken from the trial-level file.
    """
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in HUMAN_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaError(f"missing column(s): {', '.join(missing)}")
        raw = list(enumerate(reader, start=2))

    scores: dict[str, float] = {}
    if steps_path is not None:
        scores = _piecewise_from_steps(Path(steps_path), dt)

    rows = []
    for line, r in raw:
        collided = _bool(r, "collided", line)
        label = (r["outcome"] or "").strip().lower()
        if collided:
            outcome = Outcome.COLLISION
        elif label in _OUTCOME_ALIASES:
            outcome = _OUTCOME_ALIASES[label]
        else:
            raise SchemaError(f"row {line}, column 'outcome': unknown value {r['outcome']!r}")
        merge_first = {Outcome.LEFT_FIRST: 1, Outcome.RIGHT_FIRST: 0}.get(outcome)
        gap = _num(r, "gap_at_merge", line, optional=True)
        if outcome in (Outcome.LEFT_FIRST, Outcome.RIGHT_FIRST) and gap is None:
            raise SchemaError(f"row {line}, column 'gap_at_merge': required for merged trials")
        tid = r["trial_id"].strip()
        metrics = TrialMetrics(
            merge_first=merge_first,
            gap_at_merge=None if outcome is Outcome.COLLISION else gap,
            collided=collided,
            speed_rmse_left=_num(r, "rmse_left", line),
            speed_rmse_right=_num(r, "rmse_right", line),
            piecewise_score=scores.get(tid, _num(r, "piecewise_score", line, optional=True)),
        )
        rows.append(MetricsRow(tid, _num(r, "h", line), _num(r, "dv", line), outcome, metrics,
                               (r.get("variant") or "human").strip() or "human"))
    return rows


def _piecewise_from_steps(path: Path, dt: Optional[float]) -> dict[str, float]:
    series: dict[str, list[tuple[float, float, float]]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in STEP_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaError(f"missing column(s) in step file: {', '.join(missing)}")
        for line, r in enumerate(reader, start=2):
            series.setdefault(r["trial_id"].strip(), []).append(
                (_num(r, "t", line), _num(r, "v_left", line), _num(r, "v_right", line)))
    scores = {}
    for tid, pts in series.items():
        pts.sort()
        if len(pts) < 3:
            continue
        step = dt if dt is not None else (pts[-1][0] - pts[0][0]) / (len(pts) - 1)
        scores[tid] = 0.5 * (piecewise_linearity([p[1] for p in pts], step)
                             + piecewise_linearity([p[2] for p in pts], step))
    return scores


def write_human_csv(rows: Sequence[MetricsRow], path: Path) -> None:
    """Write rows in the import format (floats via repr, so re-import is exact)."""
    def cell(x: Optional[float]) -> str:
        return "" if x is None else repr(x)

    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(HUMAN_COLUMNS + ("variant", "piecewise_score"))
        for r in rows:
            m = r.metrics
            w.writerow([r.trial_id, repr(r.h), repr(r.dv), r.outcome.value, cell(m.gap_at_merge),
                        repr(m.speed_rmse_left), repr(m.speed_rmse_right), int(m.collided),
                        r.variant, cell(m.piecewise_score)])


def write_step_csv(trials: Iterable[TrialRecord], path: Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(STEP_COLUMNS)
        for t in trials:
            tid = f"{t.condition.id}/{t.repetition}"
            for s in t.steps:
                w.writerow([tid, repr(s.time), repr(s.left.velocity), repr(s.right.velocity)])
