"""Command-line interface for the benchmark harness."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .cooccurrence import build_from_corpus, export_adjacency, read_corpus, write_corpus
from .episode import VARIANTS, EpisodeConfig
from .harness import (
    TrainingAssets,
    build_training_assets,
    corpus_scenes,
    demo_corpus,
    generate_many,
    run_ablation,
    run_seeds,
)
from .metrics import TRAIN_SEEDS, both_regimes, reports_to_csv, reports_to_json
from .simenv import GenConfig, generate, vocabulary
from .subgoal import fit, read_demos, write_demos
from .traces import records_from_dir


def parse_seed_range(text: str) -> list[int]:
    """"A..B" is inclusive; a bare integer is a single seed."""
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(text)]


def _assets_from_args(args) -> TrainingAssets:
    if args.corpus_file and args.demos_file:
        scenes = [set(s) for s in read_corpus(args.corpus_file)]
        demos = read_demos(args.demos_file)
        graph = build_from_corpus(scenes)
        model = fit(demos, vocabulary=vocabulary(), smoothing=args.smoothing)
        return TrainingAssets(graph=graph, model=model, demos=demos, scenes=scenes)
    train = parse_seed_range(args.train_seeds) if args.train_seeds else list(TRAIN_SEEDS)
    return build_training_assets(train)


def _episode_config(args) -> EpisodeConfig:
    cfg = EpisodeConfig()
    if getattr(args, "variant", None):
        cfg = dataclasses.replace(cfg, variant=args.variant)
    if getattr(args, "no_model", False):
        cfg = dataclasses.replace(cfg, use_model=False)
    if getattr(args, "lambda_fuse", None) is not None:
        cfg.fusion = dataclasses.replace(cfg.fusion, lambda_fuse=args.lambda_fuse)
    if getattr(args, "budget", None) is not None:
        cfg = dataclasses.replace(cfg, step_budget=args.budget)
    return cfg


def _add_asset_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--corpus-file", help="reuse a saved co-occurrence corpus")
    parser.add_argument("--demos-file", help="reuse a saved demonstration corpus")
    parser.add_argument("--train-seeds", help="seed range for building assets, e.g. 0..599")
    parser.add_argument("--smoothing", type=float, default=0.1)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gridrelay")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="write scenario JSON files")
    p_gen.add_argument("--seeds", required=True)
    p_gen.add_argument("--out", required=True)

    p_corpus = sub.add_parser("corpus", help="write the scene corpus (one room per line)")
    p_corpus.add_argument("--seeds", default=None)
    p_corpus.add_argument("--out", required=True)
    p_corpus.add_argument("--export-graph", help="also export the weighted adjacency list")

    p_demos = sub.add_parser("demos", help="write expert demonstrations")
    p_demos.add_argument("--seeds", default=None)
    p_demos.add_argument("--out", required=True)

    p_run = sub.add_parser("run", help="run episodes for one variant")
    p_run.add_argument("--variant", default="full", choices=VARIANTS)
    p_run.add_argument("--seeds", required=True)
    p_run.add_argument("--trace", help="directory for TRACE v1 files")
    p_run.add_argument("--no-model", action="store_true")
    p_run.add_argument("--lambda-fuse", type=float, default=None)
    p_run.add_argument("--budget", type=int, default=None)
    _add_asset_options(p_run)

    p_ablate = sub.add_parser("ablate", help="run every ablation variant")
    p_ablate.add_argument("--seeds", required=True)
    p_ablate.add_argument("--out", help="write the CSV report here")
    p_ablate.add_argument("--no-model", action="store_true")
    p_ablate.add_argument("--budget", type=int, default=None)
    _add_asset_options(p_ablate)

    p_report = sub.add_parser("report", help="recompute metrics from traces")
    p_report.add_argument("--traces", required=True)
    p_report.add_argument("--format", choices=("csv", "json"), default="csv")
    p_report.add_argument("--out")

    args = parser.parse_args(argv)

    if args.command == "generate":
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        scenarios = generate_many(parse_seed_range(args.seeds))
        for scenario in scenarios:
            (out / f"scenario_{scenario.seed:06d}.json").write_text(
                scenario.to_json() + "\n", encoding="utf-8"
            )
        print(f"wrote {len(scenarios)} scenarios to {out}")
        return 0

    if args.command == "corpus":
        seeds = parse_seed_range(args.seeds) if args.seeds else list(TRAIN_SEEDS)
        scenes = corpus_scenes(generate_many(seeds))
        write_corpus(args.out, scenes)
        print(f"wrote {len(scenes)} scenes to {args.out}")
        if args.export_graph:
            export_adjacency(build_from_corpus(scenes), args.export_graph)
            print(f"exported graph to {args.export_graph}")
        return 0

    if args.command == "demos":
        seeds = parse_seed_range(args.seeds) if args.seeds else list(TRAIN_SEEDS)
        demos = demo_corpus(generate_many(seeds))
        write_demos(args.out, demos)
        print(f"wrote {len(demos)} demonstrations to {args.out}")
        return 0

    if args.command == "run":
        assets = _assets_from_args(args)
        cfg = _episode_config(args)
        records = run_seeds(parse_seed_range(args.seeds), cfg, assets, trace_dir=args.trace)
        reports = both_regimes(records, variant=cfg.variant)
        print(reports_to_csv(reports), end="")
        return 0

    if args.command == "ablate":
        assets = _assets_from_args(args)
        cfg = _episode_config(args)
        reports = run_ablation(
            parse_seed_range(args.seeds), list(VARIANTS), base_cfg=cfg, assets=assets
        )
        text = reports_to_csv(reports)
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        print(text, end="")
        return 0

    if args.command == "report":
        records = records_from_dir(args.traces)
        by_variant: dict[str, list] = {}
        for rec in records:
            by_variant.setdefault(rec.variant, []).append(rec)
        reports = []
        for variant in sorted(by_variant):
            reports.extend(both_regimes(by_variant[variant], variant=variant))
        text = reports_to_csv(reports) if args.format == "csv" else reports_to_json(reports)
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        print(text, end="")
        return 0

    parser.error(f"unknown command {args.command!r}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
