"""Single-episode navigation loop.

Each iteration senses, folds detections into the scene graph and grid,
keeps or picks a subgoal (goal first, then recovery-chain anchors, then
ranked anchor prediction, then frontier exploration), plans with D*-Lite,
and issues one primitive action. Replan triggers repair the plan in place;
failures route through the recovery oracle and a soft reset.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .control import FollowConfig, RewardConfig, drift_flag, follow_path, step_reward
from .cooccurrence import CoOccurrenceGraph, RelayConfig
from .errors import NoPathError, NoValidSubgoalError, OutOfBoundsError, RecoveryExhaustedError
from .grid import Pose, SemanticGrid
from .planner import (
    PlannerConfig,
    ReplanCause,
    ReplanEvent,
    astar,
    check_replan,
    nearest_reachable_cell,
)
from .recovery import (
    FailureKind,
    FailureReport,
    detect_failure,
    filter_proposal,
    propose_recovery,
    soft_reset,
)
from .scene_graph import MatchConfig, SceneGraph, integrate_detections
from .simenv import (
    STEP_LENGTH,
    Scenario,
    SensorConfig,
    Simulator,
    bfs_distances,
    ground_truth_grid,
    ground_truth_scene,
    _stream,
)
from .subgoal import (
    FusionConfig,
    Subgoal,
    SubgoalAction,
    SubgoalModel,
    ValidationConfig,
    fuse,
    validate,
)

VARIANTS = (
    "full",
    "no-cooccurrence",
    "no-chaining",
    "random-anchors",
    "static-grid-oracle",
)


@dataclass
class EpisodeConfig:
    variant: str = "full"
    use_model: bool = True
    step_budget: int = 500
    loop_threshold: int = 3
    max_recoveries: int = 8
    resolution: float = 0.05
    anchor_score_floor: float = 0.05
    grounding_alpha: float = 0.6
    sensor: SensorConfig = field(default_factory=SensorConfig)
    match: MatchConfig = field(default_factory=MatchConfig)
    relay: RelayConfig = field(default_factory=RelayConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    validation: ValidationConfig = field(default_factory=ValidationConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    follow: FollowConfig = field(default_factory=FollowConfig)
    # Two inflation cells (~0.1 m) keep plans off corridors too tight for the
    # quantized forward primitive.
    planner: PlannerConfig = field(default_factory=lambda: PlannerConfig(inflate_cells=2))
    oracle_spec: Optional[str] = None
    inject_unreachable_every: int = 0  # test hook for failure-driven recovery

    def fingerprint(self) -> str:
        payload = json.dumps(
            {
                "variant": self.variant,
                "use_model": self.use_model,
                "step_budget": self.step_budget,
                "loop_threshold": self.loop_threshold,
                "resolution": self.resolution,
                "anchor_score_floor": self.anchor_score_floor,
                "lambda_fuse": self.fusion.lambda_fuse,
                "relay": [self.relay.max_hops, self.relay.beta],
                "reward": [
                    self.reward.lambda_goal,
                    self.reward.lambda_progress,
                    self.reward.lambda_collision,
                    self.reward.lambda_drift,
                    self.reward.success_radius,
                ],
                "inject": self.inject_unreachable_every,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass
class RecoveryEvent:
    timestep: int
    kind: str
    anchor: Optional[str]
    chain: tuple[str, ...]
    accepted: bool


@dataclass
class EpisodeRecord:
    seed: int
    variant: str
    goal: str
    success: bool
    shortest_m: float  # l_i
    traveled_m: float  # p_i
    subgoal_count: int  # a_i
    steps: int
    anchors_used: tuple[str, ...]
    failure_kinds: tuple[str, ...]
    recovery_count: int
    reward_total: float
    stop_issued: bool

    def to_json(self) -> str:
        return json.dumps(
            {
                "seed": self.seed,
                "variant": self.variant,
                "goal": self.goal,
                "success": self.success,
                "shortest_m": self.shortest_m,
                "traveled_m": self.traveled_m,
                "subgoal_count": self.subgoal_count,
                "steps": self.steps,
                "anchors_used": list(self.anchors_used),
                "failure_kinds": list(self.failure_kinds),
                "recovery_count": self.recovery_count,
                "reward_total": self.reward_total,
                "stop_issued": self.stop_issued,
            },
            sort_keys=True,
        )

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


class EpisodeState:
    """Mutable loop state; also the duck-typed protocol recovery expects."""

    def __init__(self, scenario: Scenario, cfg: EpisodeConfig):
        self.scenario = scenario
        self.cfg = cfg
        self.sim = Simulator(scenario, cfg.sensor)
        self.static = cfg.variant == "static-grid-oracle"
        if self.static:
            self.grid = ground_truth_grid(scenario)
            self.scene = ground_truth_scene(scenario, cfg.sensor.emb_dim)
        else:
            h, w = scenario.grid_shape
            scale = scenario.resolution / cfg.resolution
            self.grid = SemanticGrid(
                width=int(round(w * scale)),
                height=int(round(h * scale)),
                resolution=cfg.resolution,
                categories=scenario.vocabulary,
            )
            self.scene = SceneGraph()
        self.pose = Pose(position=scenario.start.position.copy(), heading=scenario.start.heading)
        self.anchor_rng = _stream(scenario.seed, "anchors")
        self.steps = 0
        self.timestep = 0
        self.traveled = 0.0
        self.subgoal_count = 0
        self.current: Optional[Subgoal] = None
        self.target_pos: Optional[np.ndarray] = None
        self.explore_cell: Optional[tuple[int, int]] = None
        self.inspect_queue: list[np.ndarray] = []  # pending anchor viewpoints
        self.inspect_active = False
        self.planner_state = None
        self.active_path = None
        self.changed_since_plan: set[tuple[int, int]] = set()
        self.pending_chain: list[str] = []
        self.accepted: list[str] = []
        self.visited_anchors: list[str] = []
        self.anchor_target_counts: dict[str, int] = {}
        self.pending_no_path: Optional[str] = None
        self.pending_no_valid_subgoal = False
        self.loop_threshold = cfg.loop_threshold
        self.step_budget = cfg.step_budget
        self.failure_history: list[FailureReport] = []
        self.recovery_events: list[RecoveryEvent] = []
        self.frontier_blacklist: dict[tuple[int, int], int] = {}  # cell -> step added
        # Cells the camera has swept within small-item range: if the goal sat
        # there, it would have been detected. Exploration targets its complement.
        self.camera_cover = np.zeros((self.grid.height, self.grid.width), dtype=bool)
        self.spin_queue = 0  # pending look-around turns at a waypoint
        self.target_deadline = 0  # step by which the active target must be reached
        self.plan_attempts = 0
        self.plan_retries = 0
        self.consecutive_collisions = 0
        self.reward_total = 0.0
        self.stop_issued = False
        self.success = False


def _dilate4(mask: np.ndarray) -> np.ndarray:
    out = np.zeros_like(mask)
    out[1:, :] |= mask[:-1, :]
    out[:-1, :] |= mask[1:, :]
    out[:, 1:] |= mask[:, :-1]
    out[:, :-1] |= mask[:, 1:]
    return out


def run_episode(
    scenario: Scenario,
    cfg: EpisodeConfig,
    prior_graph: CoOccurrenceGraph,
    model: Optional[SubgoalModel] = None,
    trace=None,
) -> EpisodeRecord:
    if cfg.variant not in VARIANTS:
        raise ValueError(f"unknown variant {cfg.variant!r}")
    state = EpisodeState(scenario, cfg)
    goal = scenario.goal
    goal_weights = prior_graph.weight_row(goal) if goal in prior_graph.categories else {}

    if trace is not None:
        trace.header(
            seed=scenario.seed,
            variant=cfg.variant,
            goal=goal,
            config_fingerprint=cfg.fingerprint(),
        )

    if not state.static:
        for _ in range(2):  # evidence threshold is 2: settle the initial cone
            _sense(state)
        # Queue a panoramic sweep; it aborts the moment the goal grounds.
        state.spin_queue = 8

    guard = cfg.step_budget * 8 + 200
    while guard > 0:
        guard -= 1
        if state.steps >= cfg.step_budget:
            _record_failure(state, trace)  # timeout
            break

        _maybe_switch_to_goal(state, prior_graph, model, trace)

        # Close-range reflex: any configuration stops when the believed goal
        # sits within easy reach, whether or not it was being pursued.
        node = state.scene.best_node(goal, min_confidence=cfg.validation.min_confidence)
        if node is not None:
            believed = float(np.linalg.norm(node.position[:2] - state.pose.position))
            if believed <= 0.8 * cfg.reward.success_radius:
                if state.current is None or state.current.anchor != goal:
                    state.current = Subgoal(action=SubgoalAction.GOTO, anchor=goal)
                    _accept_bookkeeping(state, state.current, trace)
                _execute_step(state, "stop", reached=True, goal_weights=goal_weights, trace=trace)
                state.stop_issued = True
                state.success = (
                    scenario.goal_distance(state.pose.position) <= cfg.reward.success_radius
                )
                break

        if state.spin_queue > 0 and state.current is None:
            state.spin_queue -= 1
            _execute_step(state, "turn-left", reached=False, goal_weights=goal_weights, trace=trace)
            continue
        state.spin_queue = 0

        while state.current is None and state.explore_cell is None and state.inspect_queue:
            pos = state.inspect_queue.pop(0)
            try:
                agent_cell = state.grid.world_to_cell(state.pose.position)
                cell = nearest_reachable_cell(state.grid, pos, agent_cell, eps=0.45, cfg=cfg.planner)
            except OutOfBoundsError:
                cell = None
            if cell is not None:
                state.explore_cell = cell
                state.inspect_active = True
                break

        if state.current is None and state.explore_cell is None:
            picked = _select_anchor(state, prior_graph, model, trace)
            if picked == "failed":
                if not _recover(state, prior_graph, trace):
                    break
                continue
            if picked == "loop":
                if not _recover(state, prior_graph, trace):
                    break
                continue
            if state.current is None and state.explore_cell is None:
                continue  # selection adjusted state; retry loop

        if state.active_path is None:
            if not _plan(state):
                if not _abandon_target(state, prior_graph, trace):
                    break
                continue

        if state.steps >= state.target_deadline:
            if not _abandon_target(state, prior_graph, trace):
                break
            continue

        action = follow_path(state.active_path, state.pose, state.grid, cfg.follow)
        if action == "stop":
            if state.explore_cell is not None:
                if ARRIVAL_BLACKLIST_RADIUS > 0:
                    _blacklist_around(state, state.explore_cell, ARRIVAL_BLACKLIST_RADIUS)
                state.explore_cell = None
                _clear_plan(state)
                state.spin_queue = ANCHOR_SPIN if state.inspect_active else ARRIVAL_SPIN
                state.inspect_active = False
                continue
            if state.current is not None and state.current.anchor == goal:
                _execute_step(state, "stop", reached=True, goal_weights=goal_weights, trace=trace)
                state.stop_issued = True
                state.success = scenario.goal_distance(state.pose.position) <= cfg.reward.success_radius
                break
            # intermediate anchor arrival: realize the subgoal as one interact,
            # then inspect around the anchor after the look-around.
            _execute_step(state, "interact", reached=True, goal_weights=goal_weights, trace=trace)
            if state.target_pos is not None:
                away = state.target_pos - state.pose.position
                norm = float(np.linalg.norm(away))
                if norm > 1e-6:
                    state.inspect_queue = [state.target_pos + away / norm * 0.55]
            state.current = None
            _clear_plan(state)
            state.spin_queue = ANCHOR_SPIN
            continue

        _execute_step(state, action, reached=False, goal_weights=goal_weights, trace=trace)

        if state.consecutive_collisions >= 4:
            state.consecutive_collisions = 0
            _clear_plan(state)  # contact marks changed belief; replan fresh
            state.plan_retries += 1
            if state.plan_retries > 3 and not _abandon_target(state, prior_graph, trace):
                break
            continue

        if state.active_path is not None:
            try:
                agent_cell = state.grid.world_to_cell(state.pose.position)
            except OutOfBoundsError:
                agent_cell = None
            if agent_cell is not None:
                event = check_replan(
                    state.active_path, state.grid, agent_cell, timestep=state.steps, cfg=cfg.planner
                )
                if event is not None and not _repair_plan(state, event, agent_cell, trace):
                    _clear_plan(state)  # retry from scratch under current belief
                    state.plan_retries += 1
                    if state.plan_retries > 3 and not _abandon_target(state, prior_graph, trace):
                        break
                    continue
    else:
        _record_failure(state, trace, forced_kind=FailureKind.TIMEOUT)

    record = EpisodeRecord(
        seed=scenario.seed,
        variant=cfg.variant,
        goal=goal,
        success=state.success,
        shortest_m=scenario.shortest_path_m,
        traveled_m=round(state.traveled, 9),
        subgoal_count=state.subgoal_count,
        steps=state.steps,
        anchors_used=tuple(state.accepted),
        failure_kinds=tuple(r.kind.value for r in state.failure_history),
        recovery_count=len(state.recovery_events),
        reward_total=round(state.reward_total, 9),
        stop_issued=state.stop_issued,
    )
    if trace is not None:
        trace.summary(record)
    return record


# --------------------------------------------------------------------------
# loop internals


def _sense(state: EpisodeState) -> None:
    if state.static:
        return
    obs = state.sim.observe(state.pose)
    state.timestep = state.sim.t
    integrate_detections(state.scene, obs.detections, state.cfg.match)
    state.grid.update(
        obs.scan,
        [(d.label, (float(d.position[0]), float(d.position[1]))) for d in obs.detections],
        state.pose,
    )
    state.changed_since_plan.update(getattr(state.grid, "last_changed", ()))
    state.last_detections = obs.detections
    _mark_camera_cover(state)


def _mark_camera_cover(state: EpisodeState) -> None:
    region = getattr(state.grid, "last_region", None)
    if region is None:
        return
    rows, cols = region
    if rows.size == 0:
        return
    res = state.grid.resolution
    cx = (cols + 0.5) * res + state.grid.origin[0]
    cy = (rows + 0.5) * res + state.grid.origin[1]
    dx = cx - float(state.pose.position[0])
    dy = cy - float(state.pose.position[1])
    sensor = state.cfg.sensor
    reach = (sensor.small_item_range * 0.95) ** 2
    bearing = np.arctan2(dy, dx) - state.pose.heading
    bearing = (bearing + math.pi) % (2.0 * math.pi) - math.pi
    seen = (dx * dx + dy * dy <= reach) & (np.abs(bearing) <= sensor.fov / 2.0)
    state.camera_cover[rows[seen], cols[seen]] = True


def _clear_plan(state: EpisodeState) -> None:
    state.planner_state = None
    state.active_path = None
    state.changed_since_plan.clear()


def _grounded_feasible(state: EpisodeState, category: str) -> Optional[np.ndarray]:
    node = state.scene.best_node(category, min_confidence=state.cfg.validation.min_confidence)
    if node is None:
        return None
    try:
        ok = state.grid.reachable(
            node.position[:2], state.pose.position, eps=state.cfg.validation.reach_eps
        )
    except Exception:
        return None
    return node.position[:2].copy() if ok else None


def _goal_subgoal_score(state: EpisodeState, prior_graph, model) -> float:
    """Fused score of targeting the goal directly.

    The prior's diagonal is zero, so this mass comes entirely from the
    learned model: without it the pipeline cannot justify goal pursuit and
    relies on the close-range stop reflex instead.
    """
    goal = state.scenario.goal
    prior = prior_graph.weight(goal, goal) if goal in prior_graph.categories else 0.0
    lam = state.cfg.fusion.lambda_fuse
    if not state.cfg.use_model or model is None:
        return (1.0 - lam) * prior if lam < 1.0 else 0.0
    previous = state.accepted[-1] if state.accepted else None
    dist = model.distribution(goal, previous)
    p = max(
        dist.get(Subgoal(action=a, anchor=goal), 0.0)
        for a in (SubgoalAction.GOTO, SubgoalAction.INSPECT, SubgoalAction.INTERACT)
    )
    return lam * p + (1.0 - lam) * prior


def _maybe_switch_to_goal(state: EpisodeState, prior_graph, model, trace) -> None:
    goal = state.scenario.goal
    if state.current is not None and state.current.anchor == goal:
        return
    if _goal_subgoal_score(state, prior_graph, model) < state.cfg.anchor_score_floor:
        return
    pos = _grounded_feasible(state, goal)
    if pos is None:
        return
    if state.current is not None or state.explore_cell is not None:
        if trace is not None:
            trace.event(state.steps, ReplanCause.ANCHOR_UPDATE.value, detail=goal)
    state.explore_cell = None
    _clear_plan(state)
    state.current = Subgoal(action=SubgoalAction.GOTO, anchor=goal)
    state.target_pos = pos
    _accept_bookkeeping(state, state.current, trace)


def _accept_bookkeeping(state: EpisodeState, sg: Subgoal, trace) -> None:
    state.plan_retries = 0
    state.subgoal_count += 1
    state.accepted.append(sg.anchor)
    state.visited_anchors.append(sg.anchor)
    state.anchor_target_counts[sg.anchor] = state.anchor_target_counts.get(sg.anchor, 0) + 1
    if trace is not None:
        trace.subgoal(state.steps, sg.action.value, sg.anchor)


def _select_anchor(state: EpisodeState, prior_graph, model, trace) -> str:
    """Fill state.current or state.explore_cell; returns a status token."""
    cfg = state.cfg
    goal = state.scenario.goal
    synonyms = state.scenario.synonyms

    # Recovery chains take precedence over fresh prediction.
    while state.pending_chain:
        anchor = state.pending_chain[0]
        sg = Subgoal(action=SubgoalAction.GOTO, anchor=anchor)
        rejection = validate(
            sg, state.scene, state.grid, state.pose, state.accepted, synonyms, cfg.validation
        )
        state.pending_chain.pop(0)
        if rejection is None:
            pos = _grounded_feasible(state, anchor)
            if pos is not None:
                state.current = sg
                state.target_pos = pos
                _accept_bookkeeping(state, sg, trace)
                if state.anchor_target_counts[anchor] >= cfg.loop_threshold:
                    return "loop"
                return "anchor"

    sg: Optional[Subgoal] = None
    if cfg.variant == "no-chaining":
        sg = None  # direct goal only; exploration carries the episode
    elif cfg.variant == "random-anchors":
        candidates = []
        for cat in sorted(set(state.scenario.vocabulary)):
            if cat == goal or cat in state.accepted:
                continue
            if any(s in state.accepted for s in synonyms.get(cat, ())):
                continue
            if _grounded_feasible(state, cat) is not None:
                candidates.append(cat)
        if candidates:
            pick = candidates[int(state.anchor_rng.integers(len(candidates)))]
            sg = Subgoal(action=SubgoalAction.GOTO, anchor=pick)
    else:
        prior_row = prior_graph.weight_row(goal) if goal in prior_graph.categories else {}
        previous = state.accepted[-1] if state.accepted else None
        use_model = model if cfg.use_model else None
        if use_model is not None:
            dist = use_model.distribution(goal, previous)
            scores = fuse(dist, prior_row, cfg.fusion)
        else:
            scores = {
                Subgoal(action=a, anchor=o): float(prior_row.get(o, 0.0))
                for a in (SubgoalAction.GOTO, SubgoalAction.INSPECT, SubgoalAction.INTERACT)
                for o in state.scenario.vocabulary
            }
        ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0].sort_key()))
        for cand, score in ranked:
            if score < cfg.anchor_score_floor:
                break
            if cand.anchor == goal:
                continue  # direct goal targeting is handled separately
            rejection = validate(
                cand, state.scene, state.grid, state.pose, state.accepted, synonyms, cfg.validation
            )
            if rejection is None:
                sg = cand
                break

    if sg is not None:
        pos = _grounded_feasible(state, sg.anchor)
        if pos is not None:
            state.current = sg
            state.target_pos = pos
            _accept_bookkeeping(state, sg, trace)
            if state.anchor_target_counts[sg.anchor] >= cfg.loop_threshold:
                return "loop"
            return "anchor"

    cell = _frontier_target(state)
    if cell is not None:
        state.explore_cell = cell
        return "explore"
    state.pending_no_valid_subgoal = True
    return "failed"


def _abandon_target(state: EpisodeState, prior_graph, trace) -> bool:
    """Give up on the current target; False ends the episode."""
    state.plan_retries = 0
    _clear_plan(state)
    if state.explore_cell is not None:
        _blacklist_around(state, state.explore_cell, radius=0.2)
        state.explore_cell = None
        return True
    state.pending_no_path = state.current.anchor if state.current else "?"
    state.current = None
    return _recover(state, prior_graph, trace)


def _blacklist_around(state: EpisodeState, cell: tuple[int, int], radius: float = 0.35) -> None:
    center = state.grid.cell_to_world(cell)
    for entry in state.grid.cells_within(center, radius):
        state.frontier_blacklist[entry] = state.steps


# Exploration behavior knobs (benchmark-tuned; see _frontier_target).
EXPLORE_MIN_DIST = 1.0
EXPLORE_BLACKLIST_TTL = 60  # steps before a blacklisted frontier may be retried
ARRIVAL_SPIN = 4  # look-around at explore waypoints
ANCHOR_SPIN = 4  # full sweep where the prior says the goal should be
ARRIVAL_BLACKLIST_RADIUS = 0.35


def _frontier_target(state: EpisodeState) -> Optional[tuple[int, int]]:
    """Nearest navigable cell that still needs a camera pass.

    Targets are camera-uncovered navigable cells plus geometry frontiers
    (navigable cells bordering unknown space). Coverage only grows, so the
    sweep terminates instead of ping-ponging.
    """
    grid = state.grid
    inflate = state.cfg.planner.inflate_cells
    nav = grid.nav_free_mask(inflate)
    targets = (nav & ~state.camera_cover) | (nav & _dilate4(grid.unknown_mask()))
    if not targets.any():
        return None
    try:
        agent_cell = grid.world_to_cell(state.pose.position)
    except OutOfBoundsError:
        return None
    if not nav[agent_cell]:
        from .planner import agent_component

        component = agent_component(grid, agent_cell, inflate)
        if component == 0:
            return None
        labels = grid.nav_labels(inflate)
        near = np.argwhere(labels == component)
        deltas = np.abs(near - np.array(agent_cell)).max(axis=1)
        agent_cell = tuple(int(v) for v in near[int(deltas.argmin())])
    dist = bfs_distances(~nav, agent_cell, targets=targets)

    rows, cols = np.nonzero(targets & (dist >= 0))
    if rows.size == 0:
        return None
    meters = dist[rows, cols].astype(float) * grid.resolution
    order = np.lexsort((cols, rows, meters))
    for idx in order:
        r, c = int(rows[idx]), int(cols[idx])
        if meters[idx] < EXPLORE_MIN_DIST:
            continue
        added = state.frontier_blacklist.get((r, c))
        if added is not None and (
            EXPLORE_BLACKLIST_TTL <= 0 or state.steps - added < EXPLORE_BLACKLIST_TTL
        ):
            continue
        return r, c
    return None


def _plan(state: EpisodeState) -> bool:
    cfg = state.cfg
    try:
        agent_cell = state.grid.world_to_cell(state.pose.position)
    except OutOfBoundsError:
        return False
    if state.explore_cell is not None:
        target_cell = state.explore_cell
    else:
        state.plan_attempts += 1
        if (
            cfg.inject_unreachable_every > 0
            and state.plan_attempts % cfg.inject_unreachable_every == 0
        ):
            return False
        target_cell = nearest_reachable_cell(
            state.grid, state.target_pos, agent_cell, eps=cfg.validation.reach_eps, cfg=cfg.planner
        )
        if target_cell is None:
            return False
    try:
        state.active_path = astar(state.grid, agent_cell, target_cell, cfg.planner)
        state.changed_since_plan.clear()
    except NoPathError:
        state.active_path = None
        return False
    forwards = math.ceil(state.active_path.cost * state.grid.resolution / STEP_LENGTH)
    state.target_deadline = state.steps + 30 + 4 * forwards
    return True


def _repair_plan(state: EpisodeState, event: ReplanEvent, agent_cell, trace) -> bool:
    """Replan from the current cell under current belief. At apartment scale a
    fresh search is cheaper than propagating the sensor's broad map growth
    through incremental repair."""
    if trace is not None:
        trace.event(state.steps, event.cause.value)
    _clear_plan(state)
    return _plan(state)


def _execute_step(state: EpisodeState, action: str, reached: bool, goal_weights, trace) -> None:
    cfg = state.cfg
    prev_position = state.pose.position.copy()
    prev_goal_dist = state.scenario.goal_distance(prev_position)
    new_pose, collided = state.sim.act(state.pose, action)
    state.steps += 1
    moved = float(np.linalg.norm(new_pose.position - state.pose.position))
    state.traveled += moved
    state.pose = new_pose
    state.consecutive_collisions = state.consecutive_collisions + 1 if collided else 0
    if collided and not state.static and state.sim.last_contact is not None:
        state.grid.mark_contact(state.sim.last_contact)
        state.changed_since_plan.update(state.grid.last_changed)

    _sense(state)
    new_goal_dist = state.scenario.goal_distance(state.pose.position)
    detections = getattr(state, "last_detections", [])
    drift = (
        drift_flag(
            state.pose,
            detections,
            goal_weights,
            prev_goal_dist,
            new_goal_dist,
            prev_position,
        )
        if not state.static
        else False
    )
    breakdown = step_reward(prev_goal_dist, new_goal_dist, reached, collided, drift, cfg.reward)
    state.reward_total += breakdown.total
    if trace is not None:
        trace.step(
            t=state.steps,
            pose=state.pose,
            action=action,
            collided=collided,
            subgoal=state.current,
            reward=breakdown,
        )


def _record_failure(
    state: EpisodeState, trace, forced_kind: Optional[FailureKind] = None
) -> Optional[FailureReport]:
    report = detect_failure(state)
    if report is None and forced_kind is not None:
        report = FailureReport(
            kind=forced_kind,
            visited=tuple(state.visited_anchors),
            graph_snapshot=state.scene.snapshot(),
            diagnostics=["loop guard tripped"],
            timestep=state.timestep,
        )
    if report is None:
        return None
    state.failure_history.append(report)
    if trace is not None:
        trace.failure(state.steps, report)
    return report


def _recover(state: EpisodeState, prior_graph, trace) -> bool:
    report = _record_failure(state, trace)
    if report is None:
        return True  # nothing actually wrong; resume
    state.pending_no_path = None
    state.pending_no_valid_subgoal = False
    if report.kind == FailureKind.TIMEOUT:
        return False
    if len(state.recovery_events) >= state.cfg.max_recoveries:
        return False
    try:
        proposal = propose_recovery(
            report, prior_graph, state.scenario.goal, state.cfg.relay, state.cfg.oracle_spec
        )
        filtered = filter_proposal(
            proposal,
            state.grid,
            state.scene,
            state.pose,
            state.scenario.synonyms,
            state.cfg.validation,
        )
    except RecoveryExhaustedError:
        state.recovery_events.append(
            RecoveryEvent(
                timestep=state.timestep,
                kind=report.kind.value,
                anchor=None,
                chain=(),
                accepted=False,
            )
        )
        if trace is not None:
            trace.recovery(state.steps, report.kind.value, None, (), accepted=False)
        # An exhausted oracle is terminal only when exploration is too.
        if report.kind != FailureKind.NO_VALID_SUBGOAL and _frontier_target(state) is not None:
            return True
        return False
    state.recovery_events.append(
        RecoveryEvent(
            timestep=state.timestep,
            kind=report.kind.value,
            anchor=filtered.anchor,
            chain=filtered.chain,
            accepted=True,
        )
    )
    if trace is not None:
        trace.recovery(state.steps, report.kind.value, filtered.anchor, filtered.chain, accepted=True)
    soft_reset(state, filtered)
    if report.kind == FailureKind.ANCHOR_LOOP:
        for anchor, count in list(state.anchor_target_counts.items()):
            if count >= state.cfg.loop_threshold:
                state.anchor_target_counts[anchor] = 0
    return True
