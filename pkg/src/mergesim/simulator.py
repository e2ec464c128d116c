"""1-D two-vehicle merging world with piecewise-constant bounded acceleration."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .domain import KinematicCondition, StepSnapshot, TrackGeometry, VehicleState


class PlanCorruptionError(ValueError):
    pass


class Status(str, Enum):
    CONTINUE = "continue"
    COLLISION = "collision"
    FINISHED = "finished"
    NON_FINISHED = "non-finished"


@dataclass(frozen=True)
class WorldState:
    time: float
    left: VehicleState
    right: VehicleState
    left_merged: bool = False
    right_merged: bool = False


def clamp_and_scale(normalized_u: float, a_max: float) -> float:
    if not math.isfinite(normalized_u):
        raise PlanCorruptionError(f"non-finite plan value {normalized_u!r}")
    return a_max * min(1.0, max(-1.0, normalized_u))


def step(state: VehicleState, accel: float, dt: float) -> VehicleState:
    """Exact constant-acceleration update over ``dt``; the vehicle halts instead of reversing."""
    x, v = state.arc_position, state.velocity
    v_end = v + accel * dt
    if v_end >= 0.0:
        return VehicleState(x + v * dt + 0.5 * accel * dt * dt, v_end, accel)
    # accel < 0 here: stop at t* = -v/a and stay put for the rest of the step
    t_stop = -v / accel
    return VehicleState(x + v * t_stop + 0.5 * accel * t_stop * t_stop, 0.0, accel)


def initial_world(condition: KinematicCondition, track: TrackGeometry) -> WorldState:
    """Place both vehicles so that, holding their initial speeds, the leader
    reaches the merge point while the other is |h| short of it.

    The projected follower starts at the tunnel exit (arc 0); the leader may
    start ahead of it or, for a much faster leader, still inside the tunnel.
    """
    L = track.approach_length
    h = condition.projected_headway_h
    if h >= 0:
        v_lead, v_follow = condition.v0_left, condition.v0_right
    else:
        v_lead, v_follow = condition.v0_right, condition.v0_left
    t_lead = (L - abs(h)) / v_follow
    x_lead = L - v_lead * t_lead
    lead, follow = VehicleState(x_lead, v_lead), VehicleState(0.0, v_follow)
    left, right = (lead, follow) if h >= 0 else (follow, lead)
    return WorldState(0.0, left, right, left.arc_position >= L, right.arc_position >= L)


def advance(world: WorldState, a_left: float, a_right: float, dt: float,
            track: TrackGeometry, step_index: int) -> WorldState:
    left = step(world.left, a_left, dt)
    right = step(world.right, a_right, dt)
    L = track.approach_length
    return WorldState(
        time=step_index * dt,
        left=left,
        right=right,
        left_merged=world.left_merged or left.arc_position >= L,
        right_merged=world.right_merged or right.arc_position >= L,
    )


def check_collision(world: WorldState, l_veh: float) -> bool:
    # on the approach branches the vehicles are laterally separated
    if not (world.left_merged and world.right_merged):
        return False
    return abs(world.left.arc_position - world.right.arc_position) < l_veh


def check_termination(world: WorldState, track: TrackGeometry, l_veh: float,
                      time_budget: Optional[float] = None) -> Status:
    if check_collision(world, l_veh):
        return Status.COLLISION
    if max(world.left.arc_position, world.right.arc_position) >= track.total_length:
        return Status.FINISHED
    if time_budget is not None and world.time >= time_budget - 1e-9:
        return Status.NON_FINISHED
    return Status.CONTINUE


@dataclass(frozen=True)
class MergeEvent:
    time: float
    first: str
    gap: float


def merge_event(steps: Sequence[StepSnapshot], approach_length: float) -> Optional[MergeEvent]:
    """When the first vehicle reaches the merge point, which one it is, and the gap.

    Crossing time and the other vehicle's position are linearly interpolated
    between the bracketing snapshots. Exact ties go to the left vehicle.
    """
    L = approach_length
    if not steps:
        return None
    s0 = steps[0]
    if s0.left.arc_position >= L or s0.right.arc_position >= L:
        first = "left" if s0.left.arc_position >= s0.right.arc_position else "right"
        other = s0.right if first == "left" else s0.left
        return MergeEvent(s0.time, first, max(0.0, L - other.arc_position))
    for prev, cur in zip(steps, steps[1:]):
        fractions = {}
        for side in ("left", "right"):
            x0, x1 = getattr(prev, side).arc_position, getattr(cur, side).arc_position
            if x0 < L <= x1:
                fractions[side] = (L - x0) / (x1 - x0)
        if not fractions:
            continue
        first = min(fractions, key=lambda s: (fractions[s], s != "left"))
        f = fractions[first]
        other = "right" if first == "left" else "left"
        xo0, xo1 = getattr(prev, other).arc_position, getattr(cur, other).arc_position
        x_other = xo0 + f * (xo1 - xo0)
        return MergeEvent(prev.time + f * (cur.time - prev.time), first, max(0.0, L - x_other))
    return None
