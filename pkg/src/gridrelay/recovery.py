"""Failure detection and recovery replanning.

Failures produce a structured report (kind, visited anchors, graph snapshot,
diagnostics). A recovery oracle turns the report into a revised anchor chain:
the built-in rule-based oracle re-runs relay search with every visited anchor
banned, and an external process can serve the same role over newline-delimited
JSON on stdio or TCP (GRIDRELAY_ORACLE selects; timeouts fall back to the
rule-based path). Proposals are feasibility-filtered before a soft reset swaps
the anchor chain while preserving pose, grid, and symbolic memory.
"""

from __future__ import annotations

import json
import os
import shlex
import socket
import subprocess
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

from .cooccurrence import CoOccurrenceGraph, RelayConfig, best_relay_chain
from .errors import RecoveryExhaustedError
from .grid import Pose, SemanticGrid
from .scene_graph import SceneGraph
from .subgoal import Subgoal, SubgoalAction, ValidationConfig, validate

PROTOCOL_VERSION = 1
ORACLE_ENV_VAR = "GRIDRELAY_ORACLE"
ORACLE_TIMEOUT_S = 5.0


class FailureKind(str, Enum):
    UNREACHABLE_ANCHOR = "unreachable-anchor"
    ANCHOR_LOOP = "anchor-loop"
    TIMEOUT = "timeout"
    NO_VALID_SUBGOAL = "no-valid-subgoal"


@dataclass
class FailureReport:
    kind: FailureKind
    visited: tuple[str, ...]
    graph_snapshot: dict
    diagnostics: list[str] = field(default_factory=list)
    timestep: int = 0


@dataclass
class RecoveryProposal:
    anchor: Optional[str]
    chain: tuple[str, ...]
    scores: dict[str, float]


def detect_failure(state) -> Optional[FailureReport]:
    """Inspect episode-state flags and counters for a failure condition.

    Expects the duck-typed attributes pending_no_path, anchor_target_counts,
    loop_threshold, pending_no_valid_subgoal, steps, step_budget, visited
    anchors, scene, and timestep maintained by the episode loop.
    """
    visited = tuple(state.visited_anchors)
    snapshot = state.scene.snapshot()
    t = state.timestep

    if state.pending_no_path is not None:
        return FailureReport(
            kind=FailureKind.UNREACHABLE_ANCHOR,
            visited=visited,
            graph_snapshot=snapshot,
            diagnostics=[f"no path to anchor {state.pending_no_path}"],
            timestep=t,
        )
    looped = [
        a
        for a, n in sorted(state.anchor_target_counts.items())
        if n >= state.loop_threshold
    ]
    if looped:
        return FailureReport(
            kind=FailureKind.ANCHOR_LOOP,
            visited=visited,
            graph_snapshot=snapshot,
            diagnostics=[f"anchor {looped[0]} targeted {state.loop_threshold} times"],
            timestep=t,
        )
    if state.pending_no_valid_subgoal:
        return FailureReport(
            kind=FailureKind.NO_VALID_SUBGOAL,
            visited=visited,
            graph_snapshot=snapshot,
            diagnostics=["every candidate subgoal was rejected"],
            timestep=t,
        )
    if state.steps >= state.step_budget:
        return FailureReport(
            kind=FailureKind.TIMEOUT,
            visited=visited,
            graph_snapshot=snapshot,
            diagnostics=[f"step budget {state.step_budget} exhausted"],
            timestep=t,
        )
    return None


def rule_based_oracle(
    report: FailureReport,
    co_graph: CoOccurrenceGraph,
    goal: str,
    relay_cfg: Optional[RelayConfig] = None,
) -> RecoveryProposal:
    """Relay search over the category set with all visited anchors banned."""
    relay_cfg = relay_cfg or RelayConfig()
    banned = set(report.visited)
    remaining = [c for c in co_graph.categories if c not in banned and c != goal]
    if not remaining:
        raise RecoveryExhaustedError("no anchor categories remain after exclusions")

    # Anchor the revised chain at the most confidently seen usable category.
    start_cat = None
    seen = sorted(
        report.graph_snapshot.get("nodes", []),
        key=lambda n: (-n.get("confidence", 0.0), n.get("label", "")),
    )
    for node in seen:
        label = node.get("label")
        if label in remaining:
            start_cat = label
            break
    if start_cat is None:
        start_cat = remaining[0]

    scores = {c: co_graph.weight(c, goal) for c in remaining}
    chain = best_relay_chain(
        co_graph, start_cat, goal, relay_cfg, exclude=banned
    ).anchors
    if start_cat in chain:
        chain = tuple(a for a in chain if a != start_cat)
    if not chain:
        # Fall back to the best-scoring standalone anchor so the proposal
        # always carries at least one actionable entry.
        fallback = min(scores.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        chain = (fallback,)
    return RecoveryProposal(anchor=chain[0], chain=chain, scores=scores)


def filter_proposal(
    proposal: RecoveryProposal,
    grid: SemanticGrid,
    scene: SceneGraph,
    pose: Pose,
    synonyms: Optional[Mapping[str, Sequence[str]]] = None,
    cfg: Optional[ValidationConfig] = None,
) -> RecoveryProposal:
    """Keep chain entries that ground in the scene and touch reachable space."""
    kept = []
    for anchor in proposal.chain:
        sg = Subgoal(action=SubgoalAction.GOTO, anchor=anchor)
        rejection = validate(sg, scene, grid, pose, accepted=(), synonyms=synonyms, cfg=cfg)
        if rejection is None:
            kept.append(anchor)
    if not kept:
        raise RecoveryExhaustedError("no proposed anchor survived feasibility filtering")
    return RecoveryProposal(anchor=kept[0], chain=tuple(kept), scores=dict(proposal.scores))


def soft_reset(state, proposal: RecoveryProposal):
    """Swap in the revised chain; pose, grid, scene, and counters persist."""
    state.pending_chain = list(proposal.chain)
    state.current = None
    state.planner_state = None
    state.active_path = None
    state.pending_no_path = None
    state.pending_no_valid_subgoal = False
    return state


# --------------------------------------------------------------------------
# external oracle protocol


def build_request(
    report: FailureReport, co_graph: CoOccurrenceGraph, goal: str
) -> dict:
    return {
        "version": PROTOCOL_VERSION,
        "goal": goal,
        "visited": list(report.visited),
        "failure_kind": report.kind.value,
        "graph": {
            "nodes": report.graph_snapshot.get("nodes", []),
            "edges": report.graph_snapshot.get("edges", []),
        },
        "categories": list(co_graph.categories),
    }


def parse_response(text: str) -> RecoveryProposal:
    data = json.loads(text)
    chain = tuple(str(a) for a in data.get("chain", []))
    anchor = data.get("anchor")
    scores = {str(k): float(v) for k, v in data.get("scores", {}).items()}
    return RecoveryProposal(
        anchor=str(anchor) if anchor is not None else (chain[0] if chain else None),
        chain=chain,
        scores=scores,
    )


def _query_stdio(command: str, request_line: str) -> str:
    proc = subprocess.run(
        shlex.split(command),
        input=request_line,
        capture_output=True,
        text=True,
        timeout=ORACLE_TIMEOUT_S,
    )
    for line in proc.stdout.splitlines():
        if line.strip():
            return line
    raise ValueError("external oracle produced no response line")


def _query_tcp(endpoint: str, request_line: str) -> str:
    host, _, port = endpoint.rpartition(":")
    with socket.create_connection((host, int(port)), timeout=ORACLE_TIMEOUT_S) as sock:
        sock.settimeout(ORACLE_TIMEOUT_S)
        sock.sendall(request_line.encode("utf-8"))
        chunks = []
        while True:
            data = sock.recv(4096)
            if not data:
                break
            chunks.append(data)
            if b"\n" in data:
                break
    return b"".join(chunks).decode("utf-8").split("\n", 1)[0]


def propose_recovery(
    report: FailureReport,
    co_graph: CoOccurrenceGraph,
    goal: str,
    relay_cfg: Optional[RelayConfig] = None,
    oracle_spec: Optional[str] = None,
) -> RecoveryProposal:
    """Route to the configured oracle; any external failure falls back to rules."""
    spec = oracle_spec if oracle_spec is not None else os.environ.get(ORACLE_ENV_VAR, "rule")
    if spec == "rule":
        return rule_based_oracle(report, co_graph, goal, relay_cfg)
    if spec.startswith("stdio:"):
        endpoint = spec[len("stdio:") :]
        query = _query_stdio
    elif spec.startswith("tcp:"):
        endpoint = spec[len("tcp:") :]
        query = _query_tcp
    else:
        raise ValueError(f"unrecognized oracle spec: {spec!r}")
    request_line = json.dumps(build_request(report, co_graph, goal)) + "\n"
    try:
        return parse_response(query(endpoint, request_line))
    except (OSError, ValueError, KeyError, subprocess.SubprocessError):
        return rule_based_oracle(report, co_graph, goal, relay_cfg)
