"""Benchmark orchestration: training assets, seed sweeps, and ablations."""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .cooccurrence import CoOccurrenceGraph, RelayConfig, build_from_corpus, uniform_graph
from .episode import VARIANTS, EpisodeConfig, EpisodeRecord, run_episode
from .errors import GenerationFailedError, NoDemoError
from .metrics import BenchmarkReport, both_regimes
from .simenv import GenConfig, Scenario, expert_demonstration, generate, vocabulary
from .subgoal import Subgoal, SubgoalModel, fit
from .traces import TraceWriter


def generate_many(seeds: Iterable[int], gen_cfg: Optional[GenConfig] = None) -> list[Scenario]:
    scenarios = []
    for seed in seeds:
        try:
            scenarios.append(generate(seed, gen_cfg))
        except GenerationFailedError:
            continue  # skip unsatisfiable seeds; splits stay deterministic
    return scenarios


def corpus_scenes(scenarios: Iterable[Scenario]) -> list[set[str]]:
    scenes: list[set[str]] = []
    for scenario in scenarios:
        scenes.extend(scenario.room_scenes())
    return scenes


def demo_corpus(
    scenarios: Iterable[Scenario], relay_cfg: Optional[RelayConfig] = None
) -> list[tuple[str, list[Subgoal]]]:
    demos = []
    for scenario in scenarios:
        try:
            goal, sequence = expert_demonstration(scenario, relay_cfg)
        except NoDemoError:
            continue
        demos.append((goal, list(sequence)))
    return demos


@dataclasses.dataclass
class TrainingAssets:
    graph: CoOccurrenceGraph
    model: SubgoalModel
    demos: list[tuple[str, list[Subgoal]]]
    scenes: list[set[str]]


def build_training_assets(
    train_seeds: Iterable[int],
    gen_cfg: Optional[GenConfig] = None,
    relay_cfg: Optional[RelayConfig] = None,
    smoothing: float = 0.1,
) -> TrainingAssets:
    scenarios = generate_many(train_seeds, gen_cfg)
    scenes = corpus_scenes(scenarios)
    graph = build_from_corpus(scenes)
    demos = demo_corpus(scenarios, relay_cfg)
    model = fit(demos, vocabulary=vocabulary(), smoothing=smoothing)
    return TrainingAssets(graph=graph, model=model, demos=demos, scenes=scenes)


def graph_for_variant(variant: str, graph: CoOccurrenceGraph) -> CoOccurrenceGraph:
    if variant == "no-cooccurrence":
        return uniform_graph(graph.categories if graph.categories else vocabulary())
    return graph


def _run_chunk(args) -> list[EpisodeRecord]:
    seeds, cfg, graph, model, gen_cfg, trace_dir = args
    records = []
    for seed in seeds:
        try:
            scenario = generate(seed, gen_cfg)
        except GenerationFailedError:
            continue
        trace = None
        if trace_dir is not None:
            trace = TraceWriter(Path(trace_dir) / f"trace_{cfg.variant}_{seed:06d}.jsonl")
        records.append(run_episode(scenario, cfg, graph, model, trace))
    return records


def run_seeds(
    seeds: Iterable[int],
    cfg: EpisodeConfig,
    assets: TrainingAssets,
    gen_cfg: Optional[GenConfig] = None,
    trace_dir: Optional[str | Path] = None,
    scenarios: Optional[dict[int, Scenario]] = None,
    workers: int = 0,
) -> list[EpisodeRecord]:
    """Run episodes over a seed set, optionally across processes.

    Episodes are independent; records come back sorted by seed either way,
    so parallel output is identical to serial output.
    """
    graph = graph_for_variant(cfg.variant, assets.graph)
    model = assets.model if cfg.use_model else None
    seed_list = list(seeds)
    if workers and workers > 1 and len(seed_list) > 1:
        if trace_dir is not None:
            Path(trace_dir).mkdir(parents=True, exist_ok=True)
        chunk = max(1, len(seed_list) // (workers * 4))
        tasks = [
            (seed_list[i : i + chunk], cfg, graph, model, gen_cfg, trace_dir)
            for i in range(0, len(seed_list), chunk)
        ]
        records: list[EpisodeRecord] = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_run_chunk, tasks):
                records.extend(part)
        records.sort(key=lambda r: r.seed)
        return records

    records = []
    for seed in seed_list:
        if scenarios is not None and seed in scenarios:
            scenario = scenarios[seed]
        else:
            try:
                scenario = generate(seed, gen_cfg)
            except GenerationFailedError:
                continue
            if scenarios is not None:
                scenarios[seed] = scenario
        trace = None
        if trace_dir is not None:
            trace = TraceWriter(Path(trace_dir) / f"trace_{cfg.variant}_{seed:06d}.jsonl")
        records.append(run_episode(scenario, cfg, graph, model, trace))
    records.sort(key=lambda r: r.seed)
    return records


def run_ablation(
    seeds: Sequence[int],
    variants: Sequence[str],
    base_cfg: Optional[EpisodeConfig] = None,
    assets: Optional[TrainingAssets] = None,
    gen_cfg: Optional[GenConfig] = None,
    trace_dir: Optional[str | Path] = None,
    train_seeds: Optional[Iterable[int]] = None,
    workers: int = 0,
) -> list[BenchmarkReport]:
    """One report pair (ALL, L>=5) per variant over the identical seed set."""
    for variant in variants:
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
    if assets is None:
        from .metrics import TRAIN_SEEDS

        assets = build_training_assets(train_seeds or TRAIN_SEEDS, gen_cfg)
    base_cfg = base_cfg or EpisodeConfig()
    scenario_cache: dict[int, Scenario] = {}
    reports: list[BenchmarkReport] = []
    for variant in variants:
        cfg = dataclasses.replace(base_cfg, variant=variant)
        records = run_seeds(
            seeds,
            cfg,
            assets,
            gen_cfg,
            trace_dir=trace_dir,
            scenarios=scenario_cache if not workers else None,
            workers=workers,
        )
        reports.extend(both_regimes(records, variant=variant))
    return reports
