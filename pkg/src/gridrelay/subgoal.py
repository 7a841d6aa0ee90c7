"""Tabular subgoal prediction, prior fusion, and the validation filter.

The predictor is a smoothed conditional count table over (goal, previous
anchor) contexts: for this family, maximum likelihood of the demonstration
corpus is exactly the normalized counts. Predicted distributions are fused
with the co-occurrence prior row toward the goal and every candidate passes
a three-stage filter (grounding, feasibility, redundancy) before execution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .errors import AgentEmbeddedError, NoValidSubgoalError, OutOfBoundsError
from .grid import Pose, SemanticGrid
from .scene_graph import SceneGraph

START = "<START>"


class SubgoalAction(str, Enum):
    GOTO = "goto"
    INSPECT = "inspect"
    INTERACT = "interact"


_ACTION_ORDER = {SubgoalAction.GOTO: 0, SubgoalAction.INSPECT: 1, SubgoalAction.INTERACT: 2}


@dataclass(frozen=True)
class Subgoal:
    action: SubgoalAction
    anchor: str

    def sort_key(self) -> tuple[int, str]:
        return _ACTION_ORDER[self.action], self.anchor


@dataclass
class FusionConfig:
    lambda_fuse: float = 0.6


@dataclass
class ValidationConfig:
    min_confidence: float = 0.3
    reach_eps: float = 0.5  # meters around the anchor that must touch free space


@dataclass
class Rejection:
    stage: str  # "grounding" | "feasibility" | "redundancy"
    detail: str = ""


Context = tuple[str, str]  # (goal category, previous anchor or START)


@dataclass
class SubgoalModel:
    vocabulary: tuple[str, ...]
    smoothing: float = 0.1
    counts: dict[Context, dict[Subgoal, int]] = field(default_factory=dict)

    def subgoal_space(self) -> list[Subgoal]:
        return [
            Subgoal(action=a, anchor=o)
            for a in (SubgoalAction.GOTO, SubgoalAction.INSPECT, SubgoalAction.INTERACT)
            for o in self.vocabulary
        ]

    def distribution(self, goal: str, previous: Optional[str]) -> dict[Subgoal, float]:
        """Smoothed conditional over the full subgoal space for one context."""
        space = self.subgoal_space()
        context = (goal, previous if previous is not None else START)
        table = self.counts.get(context, {})
        total = sum(table.values())
        k = self.smoothing
        denom = total + k * len(space)
        if denom <= 0.0:
            uniform = 1.0 / len(space)
            return {sg: uniform for sg in space}
        return {sg: (table.get(sg, 0) + k) / denom for sg in space}


def fit(
    demonstrations: Iterable[tuple[str, Sequence[Subgoal]]],
    vocabulary: Sequence[str],
    smoothing: float = 0.1,
) -> SubgoalModel:
    """Count-based maximum likelihood over (goal, previous anchor) contexts."""
    model = SubgoalModel(vocabulary=tuple(vocabulary), smoothing=smoothing)
    for goal, sequence in demonstrations:
        previous = START
        for sg in sequence:
            table = model.counts.setdefault((goal, previous), {})
            table[sg] = table.get(sg, 0) + 1
            previous = sg.anchor
    return model


def fuse(
    model_dist: Mapping[Subgoal, float],
    prior_row: Mapping[str, float],
    cfg: FusionConfig,
) -> dict[Subgoal, float]:
    """Affine blend of model probability and prior weight; not renormalized."""
    lam = cfg.lambda_fuse
    return {
        sg: lam * p + (1.0 - lam) * float(prior_row.get(sg.anchor, 0.0))
        for sg, p in model_dist.items()
    }


def validate(
    subgoal: Subgoal,
    scene: SceneGraph,
    grid: SemanticGrid,
    pose: Pose,
    accepted: Sequence[str],
    synonyms: Optional[Mapping[str, Sequence[str]]] = None,
    cfg: Optional[ValidationConfig] = None,
) -> Optional[Rejection]:
    """Three-stage filter; None means accepted, otherwise the failing stage."""
    cfg = cfg or ValidationConfig()
    node = scene.best_node(subgoal.anchor, min_confidence=cfg.min_confidence)
    if node is None:
        return Rejection(stage="grounding", detail=f"{subgoal.anchor} absent or low confidence")
    try:
        ok = grid.reachable(node.position[:2], pose.position, eps=cfg.reach_eps)
    except (AgentEmbeddedError, OutOfBoundsError) as exc:
        return Rejection(stage="feasibility", detail=str(exc))
    if not ok:
        return Rejection(stage="feasibility", detail=f"{subgoal.anchor} has no reachable free cell")
    equivalent = {subgoal.anchor}
    if synonyms:
        equivalent.update(synonyms.get(subgoal.anchor, ()))
    for prior in accepted:
        if prior in equivalent:
            return Rejection(stage="redundancy", detail=f"{prior} already targeted")
    return None


def next_subgoal(
    model: Optional[SubgoalModel],
    prior_row: Mapping[str, float],
    goal: str,
    previous: Optional[str],
    scene: SceneGraph,
    grid: SemanticGrid,
    pose: Pose,
    accepted: Sequence[str],
    synonyms: Optional[Mapping[str, Sequence[str]]] = None,
    fusion: Optional[FusionConfig] = None,
    validation: Optional[ValidationConfig] = None,
    vocabulary: Optional[Sequence[str]] = None,
) -> Subgoal:
    """Highest fused-score subgoal that passes validation.

    Without a model the prior row alone ranks candidates (the lambda=0
    configuration). Ties break on action order goto < inspect < interact,
    then lexicographic anchor.
    """
    fusion = fusion or FusionConfig()
    if model is not None:
        dist = model.distribution(goal, previous)
        scores = fuse(dist, prior_row, fusion)
    else:
        vocab = tuple(vocabulary) if vocabulary else tuple(sorted(prior_row))
        if not vocab:
            raise NoValidSubgoalError("empty vocabulary")
        scores = {
            Subgoal(action=a, anchor=o): float(prior_row.get(o, 0.0))
            for a in (SubgoalAction.GOTO, SubgoalAction.INSPECT, SubgoalAction.INTERACT)
            for o in vocab
        }
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0].sort_key()))
    for sg, _ in ranked:
        if validate(sg, scene, grid, pose, accepted, synonyms, validation) is None:
            return sg
    raise NoValidSubgoalError(f"all candidates rejected for goal {goal!r}")


# --------------------------------------------------------------------------
# demonstration corpus files: one episode per line,
#   <goal>;action:anchor;action:anchor;...


def format_demo_line(goal: str, sequence: Sequence[Subgoal]) -> str:
    parts = [goal] + [f"{sg.action.value}:{sg.anchor}" for sg in sequence]
    return ";".join(parts)


def parse_demo_line(line: str) -> tuple[str, list[Subgoal]]:
    parts = [p for p in line.strip().split(";") if p]
    goal = parts[0]
    sequence = []
    for token in parts[1:]:
        action, _, anchor = token.partition(":")
        sequence.append(Subgoal(action=SubgoalAction(action), anchor=anchor))
    return goal, sequence


def read_demos(path: str | Path) -> list[tuple[str, list[Subgoal]]]:
    demos = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            demos.append(parse_demo_line(line))
    return demos


def write_demos(path: str | Path, demos: Iterable[tuple[str, Sequence[Subgoal]]]) -> None:
    lines = [format_demo_line(goal, seq) for goal, seq in demos]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
