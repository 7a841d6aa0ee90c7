"""Newline-delimited JSON episode traces, schema "TRACE v1".

One line per event. The first line is the header, the last a summary from
which metrics can be recomputed bit-exactly; step lines carry the pose,
action, and the full reward decomposition.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Optional

from .control import RewardBreakdown
from .episode import EpisodeRecord
from .grid import Pose
from .recovery import FailureReport
from .subgoal import Subgoal

TRACE_VERSION = "TRACE v1"


class TraceWriter:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lines: list[str] = []

    def _emit(self, payload: dict) -> None:
        self._lines.append(json.dumps(payload, sort_keys=True))

    def header(self, seed: int, variant: str, goal: str, config_fingerprint: str) -> None:
        self._emit(
            {
                "schema": TRACE_VERSION,
                "type": "header",
                "seed": seed,
                "variant": variant,
                "goal": goal,
                "config_fingerprint": config_fingerprint,
            }
        )

    def step(
        self,
        t: int,
        pose: Pose,
        action: str,
        collided: bool,
        subgoal: Optional[Subgoal],
        reward: RewardBreakdown,
    ) -> None:
        self._emit(
            {
                "type": "step",
                "t": t,
                "pose": [float(pose.position[0]), float(pose.position[1]), pose.heading],
                "action": action,
                "collided": collided,
                "subgoal": [subgoal.action.value, subgoal.anchor] if subgoal else None,
                "reward": {
                    "goal": reward.goal,
                    "progress": reward.progress,
                    "collision": reward.collision,
                    "drift": reward.drift,
                    "total": reward.total,
                },
            }
        )

    def subgoal(self, t: int, action: str, anchor: str) -> None:
        self._emit({"type": "subgoal", "t": t, "action": action, "anchor": anchor})

    def event(self, t: int, cause: str, detail: str = "") -> None:
        self._emit({"type": "replan", "t": t, "cause": cause, "detail": detail})

    def failure(self, t: int, report: FailureReport) -> None:
        self._emit(
            {
                "type": "failure",
                "t": t,
                "kind": report.kind.value,
                "visited": list(report.visited),
                "diagnostics": list(report.diagnostics),
                "graph": report.graph_snapshot,
            }
        )

    def recovery(
        self, t: int, kind: str, anchor: Optional[str], chain: Iterable[str], accepted: bool
    ) -> None:
        self._emit(
            {
                "type": "recovery",
                "t": t,
                "failure_kind": kind,
                "anchor": anchor,
                "chain": list(chain),
                "accepted": accepted,
            }
        )

    def summary(self, record: EpisodeRecord) -> None:
        self._emit({"type": "summary", **json.loads(record.to_json())})
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("\n".join(self._lines) + "\n", encoding="utf-8")


def read_trace(path: str | Path) -> list[dict]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [json.loads(line) for line in lines if line.strip()]


def record_from_trace(path: str | Path) -> EpisodeRecord:
    entries = read_trace(path)
    if not entries or entries[0].get("schema") != TRACE_VERSION:
        raise ValueError(f"{path} is not a {TRACE_VERSION} trace")
    summary = entries[-1]
    if summary.get("type") != "summary":
        raise ValueError(f"{path} has no summary line")
    return EpisodeRecord(
        seed=int(summary["seed"]),
        variant=summary["variant"],
        goal=summary["goal"],
        success=bool(summary["success"]),
        shortest_m=float(summary["shortest_m"]),
        traveled_m=float(summary["traveled_m"]),
        subgoal_count=int(summary["subgoal_count"]),
        steps=int(summary["steps"]),
        anchors_used=tuple(summary["anchors_used"]),
        failure_kinds=tuple(summary["failure_kinds"]),
        recovery_count=int(summary["recovery_count"]),
        reward_total=float(summary["reward_total"]),
        stop_issued=bool(summary["stop_issued"]),
    )


def records_from_dir(directory: str | Path) -> list[EpisodeRecord]:
    paths = sorted(Path(directory).glob("trace_*.jsonl"))
    return [record_from_trace(p) for p in paths]
