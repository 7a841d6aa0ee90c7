"""Benchmark metrics and reports.

SR is the success fraction; SPL weighs each success by shortest-over-actual
path length; SAE does the same with the high-level action count converted to
meters through the primitive step length so both ratios are dimensionless.
Both the ALL regime and the long-horizon L>=5 regime (shortest path above
five primitive steps) are reported.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from .episode import EpisodeRecord
from .errors import DegenerateEpisodeError
from .simenv import STEP_LENGTH

REGIME_ALL = "ALL"
REGIME_LONG = "L>=5"

TRAIN_SEEDS = range(0, 600)
VAL_SEEDS = range(600, 760)
TEST_SEEDS = range(760, 1000)


@dataclass
class BenchmarkReport:
    variant: str
    regime: str
    sr: float  # percent
    spl: float  # percent
    sae: float  # percent
    episodes: int
    per_object: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "regime": self.regime,
            "SR": self.sr,
            "SPL": self.spl,
            "SAE": self.sae,
            "episodes": self.episodes,
            "per_object": dict(sorted(self.per_object.items())),
        }


def episode_terms(record: EpisodeRecord, step_length: float = STEP_LENGTH) -> tuple[float, float, float]:
    """(success, spl, sae) contributions of one episode, each in [0, 1]."""
    if record.shortest_m <= 0.0:
        raise DegenerateEpisodeError(f"episode seed {record.seed} has zero shortest path")
    ind = 1.0 if record.success else 0.0
    spl = ind * record.shortest_m / max(record.traveled_m, record.shortest_m)
    action_length = record.subgoal_count * step_length
    sae = ind * record.shortest_m / max(action_length, record.shortest_m)
    return ind, spl, sae


def metrics(
    records: Sequence[EpisodeRecord],
    regime: str = REGIME_ALL,
    variant: str = "",
    step_length: float = STEP_LENGTH,
) -> BenchmarkReport:
    if regime == REGIME_ALL:
        included = list(records)
    elif regime == REGIME_LONG:
        included = [r for r in records if r.shortest_m > 5.0 * step_length]
    else:
        raise ValueError(f"unknown regime {regime!r}")
    if not included:
        return BenchmarkReport(
            variant=variant, regime=regime, sr=0.0, spl=0.0, sae=0.0, episodes=0, per_object={}
        )
    n = len(included)
    sr_sum = spl_sum = sae_sum = 0.0
    per_object_hits: dict[str, list[float]] = {}
    for rec in included:
        ind, spl, sae = episode_terms(rec, step_length)
        sr_sum += ind
        spl_sum += spl
        sae_sum += sae
        per_object_hits.setdefault(rec.goal, []).append(ind)
    per_object = {
        goal: 100.0 * sum(vals) / len(vals) for goal, vals in per_object_hits.items()
    }
    return BenchmarkReport(
        variant=variant or (included[0].variant if included else ""),
        regime=regime,
        sr=100.0 * sr_sum / n,
        spl=100.0 * spl_sum / n,
        sae=100.0 * sae_sum / n,
        episodes=n,
        per_object=per_object,
    )


def both_regimes(
    records: Sequence[EpisodeRecord], variant: str = "", step_length: float = STEP_LENGTH
) -> list[BenchmarkReport]:
    return [
        metrics(records, REGIME_ALL, variant, step_length),
        metrics(records, REGIME_LONG, variant, step_length),
    ]


def reports_to_csv(reports: Iterable[BenchmarkReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["variant", "regime", "SR", "SPL", "SAE", "episodes"])
    for rep in reports:
        writer.writerow(
            [rep.variant, rep.regime, repr(rep.sr), repr(rep.spl), repr(rep.sae), rep.episodes]
        )
    return buf.getvalue()


def reports_to_json(reports: Iterable[BenchmarkReport]) -> str:
    return json.dumps([rep.to_dict() for rep in reports], indent=2, sort_keys=True)
