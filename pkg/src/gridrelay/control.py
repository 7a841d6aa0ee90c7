"""Planner-following step controller and per-step reward accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .grid import Pose, SemanticGrid, wrap_heading
from .planner import Path


@dataclass
class RewardConfig:
    lambda_goal: float = 10.0
    lambda_progress: float = 1.0
    lambda_collision: float = 1.0
    lambda_drift: float = 0.5
    success_radius: float = 1.0  # meters


@dataclass
class RewardBreakdown:
    goal: float
    progress: float
    collision: float
    drift: float
    total: float


@dataclass
class StepOutcome:
    action: str  # forward | turn-left | turn-right | interact | stop
    collided: bool
    pose: Pose
    reward: RewardBreakdown


def step_reward(
    prev_dist: float,
    new_dist: float,
    reached: bool,
    collided: bool,
    drift: bool,
    cfg: RewardConfig,
) -> RewardBreakdown:
    """Weighted sum of the four reward terms; progress is the distance drop."""
    if prev_dist < 0 or new_dist < 0:
        raise ValueError("distances must be nonnegative")
    r_goal = 1.0 if reached else 0.0
    r_progress = prev_dist - new_dist
    r_collision = 1.0 if collided else 0.0
    r_drift = 1.0 if drift else 0.0
    total = (
        cfg.lambda_goal * r_goal
        + cfg.lambda_progress * r_progress
        - cfg.lambda_collision * r_collision
        - cfg.lambda_drift * r_drift
    )
    return RewardBreakdown(
        goal=r_goal, progress=r_progress, collision=r_collision, drift=r_drift, total=total
    )


@dataclass
class FollowConfig:
    arrive_radius: float = 0.3  # meters from the final path cell center
    turn_threshold: float = math.pi / 4.0  # misalignment that forces a turn
    lookahead: float = 0.35  # meters of path consumed when picking the aim point
    straight_bias: float = math.pi / 3.0  # keep heading while bearing stays inside


def follow_path(
    path: Path, pose: Pose, grid: SemanticGrid, cfg: Optional[FollowConfig] = None
) -> str:
    """Primitive action tracking the path: turn when misaligned, else forward.

    The aim point sits a lookahead distance down the path from the cell
    nearest the agent, so one forward primitive (which spans several grid
    cells) does not chase jogs shorter than a step.
    """
    cfg = cfg or FollowConfig()
    if not path.cells:
        raise ValueError("cannot follow an empty path")
    px, py = float(pose.position[0]), float(pose.position[1])
    final_xy = grid.cell_to_world(path.cells[-1])
    if math.hypot(final_xy[0] - px, final_xy[1] - py) <= cfg.arrive_radius:
        return "stop"

    centers = [grid.cell_to_world(c) for c in path.cells]
    nearest = min(
        range(len(centers)),
        key=lambda i: ((centers[i][0] - px) ** 2 + (centers[i][1] - py) ** 2, i),
    )
    aim = nearest
    consumed = 0.0
    while aim + 1 < len(centers) and consumed < cfg.lookahead:
        consumed += math.hypot(
            centers[aim + 1][0] - centers[aim][0], centers[aim + 1][1] - centers[aim][1]
        )
        aim += 1
    tx, ty = centers[aim]
    bearing = math.atan2(ty - py, tx - px)

    # Hysteresis: hold the current heading while it still points broadly at
    # the aim, so diagonal routes do not alternate turns every step.
    if abs(wrap_heading(bearing - pose.heading)) <= cfg.straight_bias and not _sweep_blocked(
        grid, pose, pose.heading
    ):
        return "forward"

    # Steer along the best cardinal whose forward sweep is clear in belief;
    # a straight primitive must not cut a corner through a known obstacle.
    candidates = sorted(
        (wrap_heading(pose.heading + k * math.pi / 2.0) for k in (0, 1, -1, 2)),
        key=lambda c: (abs(wrap_heading(c - bearing)), abs(wrap_heading(c - pose.heading))),
    )
    chosen = None
    for cand in candidates:
        if not _sweep_blocked(grid, pose, cand):
            chosen = cand
            break
    if chosen is None:
        chosen = candidates[0]
    misalign = wrap_heading(chosen - pose.heading)
    if abs(misalign) > cfg.turn_threshold:
        return "turn-left" if misalign > 0 else "turn-right"
    return "forward"


def _sweep_blocked(grid: SemanticGrid, pose: Pose, heading: float, span: float = 0.3) -> bool:
    """True when the forward sweep crosses a believed obstacle (or leaves the map)."""
    obstacles = grid.obstacle_mask()
    n = max(2, int(math.ceil(span / (grid.resolution * 0.5))) + 1)
    for t in np.linspace(grid.resolution, span, n):
        x = float(pose.position[0]) + t * math.cos(heading)
        y = float(pose.position[1]) + t * math.sin(heading)
        col = int(math.floor((x - grid.origin[0]) / grid.resolution))
        row = int(math.floor((y - grid.origin[1]) / grid.resolution))
        if not (0 <= row < grid.height and 0 <= col < grid.width):
            return True
        if obstacles[row, col]:
            return True
    return False


def drift_flag(
    pose: Pose,
    detections: Sequence,
    goal_weights: dict[str, float],
    goal_distance_before: float,
    goal_distance_after: float,
    prev_position: np.ndarray,
) -> bool:
    """Heading locked onto an unrelated object while gaining on it faster
    than on the goal. Unrelated means zero co-occurrence weight to the goal."""
    for det in detections:
        if goal_weights.get(det.label, 0.0) > 0.0:
            continue
        dx = float(det.position[0]) - float(pose.position[0])
        dy = float(det.position[1]) - float(pose.position[1])
        if math.hypot(dx, dy) < 1e-9:
            continue
        bearing = wrap_heading(math.atan2(dy, dx) - pose.heading)
        if abs(bearing) > math.pi / 6.0:
            continue
        before = math.hypot(
            float(det.position[0]) - float(prev_position[0]),
            float(det.position[1]) - float(prev_position[1]),
        )
        after = math.hypot(dx, dy)
        obj_gain = before - after
        goal_gain = goal_distance_before - goal_distance_after
        if obj_gain > goal_gain:
            return True
    return False
