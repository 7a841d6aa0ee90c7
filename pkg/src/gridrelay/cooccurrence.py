"""Co-occurrence knowledge graph over object categories.

Edge weights count how often two categories appear in the same scene,
normalized by the global maximum. On top of the graph sit modularity-based
clustering, optimal relay-chain search, and fusion of graph weights with
external oracle scores.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import UndefinedModularityError


@dataclass(frozen=True)
class CoOccurrenceGraph:
    categories: tuple[str, ...]
    co_freq: np.ndarray  # symmetric int matrix, zero diagonal
    weights: np.ndarray  # co_freq / max(co_freq), in [0, 1]

    def index(self, category: str) -> int:
        try:
            return self.categories.index(category)
        except ValueError:
            raise KeyError(f"unknown category: {category!r}") from None

    def weight(self, a: str, b: str) -> float:
        return float(self.weights[self.index(a), self.index(b)])

    def weight_row(self, category: str) -> dict[str, float]:
        i = self.index(category)
        return {c: float(self.weights[i, j]) for j, c in enumerate(self.categories)}


@dataclass
class ClusteringResult:
    assignment: dict[str, int]
    q: float
    total_weight: float  # m, half the weight-matrix sum
    degrees: dict[str, float]


@dataclass(frozen=True)
class RelayChain:
    start: str
    goal: str
    anchors: tuple[str, ...]
    chain_sum: float
    mean_weight: float


@dataclass
class RelayConfig:
    max_hops: int = 2
    beta: float = 0.5


def build_from_corpus(scenes: Iterable[Iterable[str]]) -> CoOccurrenceGraph:
    """Count pairwise scene co-occurrences and normalize by the global max."""
    scene_sets = [set(s) for s in scenes]
    categories = tuple(sorted(set().union(*scene_sets))) if scene_sets else ()
    n = len(categories)
    idx = {c: i for i, c in enumerate(categories)}
    co = np.zeros((n, n), dtype=np.int64)
    for scene in scene_sets:
        members = sorted(idx[c] for c in scene)
        for a_pos, a in enumerate(members):
            for b in members[a_pos + 1 :]:
                co[a, b] += 1
                co[b, a] += 1
    peak = int(co.max()) if n else 0
    weights = co / peak if peak > 0 else np.zeros((n, n), dtype=float)
    return CoOccurrenceGraph(categories=categories, co_freq=co, weights=weights)


def uniform_graph(categories: Sequence[str], weight: float = 0.5) -> CoOccurrenceGraph:
    """Degenerate graph with identical off-diagonal weights (ablation prior)."""
    cats = tuple(sorted(set(categories)))
    n = len(cats)
    w = np.full((n, n), weight, dtype=float)
    np.fill_diagonal(w, 0.0)
    co = np.ones((n, n), dtype=np.int64)
    np.fill_diagonal(co, 0)
    return CoOccurrenceGraph(categories=cats, co_freq=co, weights=w)


def modularity(graph: CoOccurrenceGraph, assignment: Mapping[str, int]) -> float:
    """Exact evaluation of the weighted-modularity objective."""
    w = graph.weights
    two_m = float(w.sum())
    if two_m <= 0.0:
        raise UndefinedModularityError("modularity undefined on an all-zero graph")
    degrees = w.sum(axis=1)
    labels = np.array([assignment[c] for c in graph.categories])
    same = labels[:, None] == labels[None, :]
    expected = np.outer(degrees, degrees) / two_m
    return float(((w - expected) * same).sum() / two_m)


def _merge_gain(w_between: float, deg_a: float, deg_b: float, two_m: float) -> float:
    # Joining clusters a, b adds the ordered pairs across them to the sum.
    return 2.0 * (w_between - deg_a * deg_b / two_m) / two_m


def cluster(graph: CoOccurrenceGraph) -> ClusteringResult:
    """Greedy agglomerative modularity maximization.

    Starts from singletons and repeatedly applies the single merge with the
    largest strictly positive gain; merge ties break on the lexicographically
    smallest pair of cluster representatives, so the result is deterministic.
    """
    w = graph.weights
    two_m = float(w.sum())
    if two_m <= 0.0:
        raise UndefinedModularityError("modularity undefined on an all-zero graph")
    n = len(graph.categories)
    members: dict[int, set[int]] = {i: {i} for i in range(n)}
    degrees = w.sum(axis=1)

    def rep(cluster_id: int) -> str:
        return min(graph.categories[i] for i in members[cluster_id])

    while len(members) > 1:
        ids = sorted(members, key=rep)
        best_gain = 0.0
        best_pair: Optional[tuple[int, int]] = None
        for ai in range(len(ids)):
            for bi in range(ai + 1, len(ids)):
                a, b = ids[ai], ids[bi]
                rows = list(members[a])
                cols = list(members[b])
                w_between = float(w[np.ix_(rows, cols)].sum())
                deg_a = float(degrees[rows].sum())
                deg_b = float(degrees[cols].sum())
                gain = _merge_gain(w_between, deg_a, deg_b, two_m)
                if gain > best_gain:
                    best_gain = gain
                    best_pair = (a, b)
        if best_pair is None:
            break
        a, b = best_pair
        members[a] |= members[b]
        del members[b]

    assignment: dict[str, int] = {}
    for new_id, cid in enumerate(sorted(members, key=rep)):
        for i in members[cid]:
            assignment[graph.categories[i]] = new_id
    q = modularity(graph, assignment)
    degree_map = {c: float(degrees[i]) for i, c in enumerate(graph.categories)}
    return ClusteringResult(assignment=assignment, q=q, total_weight=two_m / 2.0, degrees=degree_map)


_EXACT_LIMIT = 20
_BEAM_WIDTH = 32


def best_relay_chain(
    graph: CoOccurrenceGraph,
    start: str,
    goal: str,
    cfg: RelayConfig,
    exclude: Iterable[str] = (),
) -> RelayChain:
    """Anchor sequence maximizing mean edge weight from start to goal.

    Hop counts 0..max_hops are searched separately for the best chain sum of
    distinct intermediates (exhaustively up to 20 categories, beam search
    beyond); the winner across hop counts is the highest mean edge weight,
    with ties going to fewer hops and then lexicographic anchors.
    """
    si = graph.index(start)
    gi = graph.index(goal)
    if si == gi:
        raise ValueError("start and goal categories must differ")
    banned = set(exclude)
    w = graph.weights
    candidates = [
        i
        for i, c in enumerate(graph.categories)
        if i not in (si, gi) and c not in banned
    ]
    candidates.sort(key=lambda i: graph.categories[i])

    # best_by_hops[m] = (chain_sum, anchor index tuple)
    best_by_hops: dict[int, tuple[float, tuple[int, ...]]] = {0: (float(w[si, gi]), ())}

    def consider(m: int, total: float, anchors: tuple[int, ...]) -> None:
        names = tuple(graph.categories[i] for i in anchors)
        cur = best_by_hops.get(m)
        if cur is None:
            best_by_hops[m] = (total, anchors)
            return
        cur_names = tuple(graph.categories[i] for i in cur[1])
        if (-total, names) < (-cur[0], cur_names):
            best_by_hops[m] = (total, anchors)

    if cfg.max_hops > 0 and candidates:
        if len(graph.categories) <= _EXACT_LIMIT:

            def dfs(last: int, partial: float, anchors: tuple[int, ...]) -> None:
                depth = len(anchors)
                consider(depth, partial + float(w[last, gi]), anchors)
                if depth == cfg.max_hops:
                    return
                for nxt in candidates:
                    if nxt in anchors:
                        continue
                    dfs(nxt, partial + float(w[last, nxt]), anchors + (nxt,))

            for first in candidates:
                dfs(first, float(w[si, first]), (first,))
        else:
            beam: list[tuple[float, tuple[int, ...]]] = [(0.0, ())]
            for _ in range(cfg.max_hops):
                extended: list[tuple[float, tuple[int, ...]]] = []
                for partial, anchors in beam:
                    last = anchors[-1] if anchors else si
                    for nxt in candidates:
                        if nxt in anchors:
                            continue
                        extended.append((partial + float(w[last, nxt]), anchors + (nxt,)))
                extended.sort(
                    key=lambda e: (-e[0], tuple(graph.categories[i] for i in e[1]))
                )
                beam = extended[:_BEAM_WIDTH]
                for partial, anchors in beam:
                    consider(len(anchors), partial + float(w[anchors[-1], gi]), anchors)
                if not beam:
                    break

    best_key = None
    best_m = 0
    for m in sorted(best_by_hops):
        total, anchors = best_by_hops[m]
        mean = total / (m + 1)
        names = tuple(graph.categories[i] for i in anchors)
        key = (-mean, m, names)
        if best_key is None or key < best_key:
            best_key = key
            best_m = m
    total, anchors = best_by_hops[best_m]
    return RelayChain(
        start=start,
        goal=goal,
        anchors=tuple(graph.categories[i] for i in anchors),
        chain_sum=total,
        mean_weight=total / (best_m + 1),
    )


def fuse_relay_scores(
    graph: CoOccurrenceGraph,
    goal: str,
    oracle_scores: Mapping[str, float],
    beta: float,
) -> list[tuple[str, float]]:
    """Affine fusion of oracle scores with graph weights toward the goal."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    gi = graph.index(goal)
    ranked = [
        (c, beta * float(oracle_scores.get(c, 0.0)) + (1.0 - beta) * float(graph.weights[i, gi]))
        for i, c in enumerate(graph.categories)
    ]
    ranked.sort(key=lambda e: (-e[1], e[0]))
    return ranked


def read_corpus(path: str | Path) -> list[list[str]]:
    """One scene per line, comma-separated category names."""
    scenes = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        scenes.append([tok.strip() for tok in line.split(",") if tok.strip()])
    return scenes


def write_corpus(path: str | Path, scenes: Iterable[Iterable[str]]) -> None:
    lines = [",".join(sorted(set(s))) for s in scenes]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def export_adjacency(graph: CoOccurrenceGraph, path: str | Path) -> None:
    """Adjacency list with weights at six decimal places."""
    lines = []
    for i, cat in enumerate(graph.categories):
        entries = [
            f"{other}:{graph.weights[i, j]:.6f}"
            for j, other in enumerate(graph.categories)
            if j != i and graph.weights[i, j] > 0.0
        ]
        lines.append(cat + " " + " ".join(entries) if entries else cat)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
