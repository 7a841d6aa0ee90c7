"""Dynamic open-vocabulary scene graph.

Keeps the agent's symbolic memory of detected objects: nodes are matched
against incoming detections, smoothed, decayed when unobserved, and linked
by spatial-relation edges carrying an affinity score. Language-grounding
queries rank nodes by label similarity fused with relational context.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .embeddings import cosine, label_embedding


class Relation(str, Enum):
    ON_TOP_OF = "on-top-of"
    NEXT_TO = "next-to"
    INSIDE = "inside"
    NEAR = "near"


@dataclass
class SceneNode:
    node_id: str
    label: str
    embedding: np.ndarray  # unit norm
    position: np.ndarray  # (3,) meters
    bbox: np.ndarray  # (2, 3) min/max corners, meters; contains position
    confidence: float
    last_seen: int
    facing: float = 0.0  # radians, object orientation in the world frame

    def copy(self) -> "SceneNode":
        return SceneNode(
            node_id=self.node_id,
            label=self.label,
            embedding=self.embedding.copy(),
            position=self.position.copy(),
            bbox=self.bbox.copy(),
            confidence=self.confidence,
            last_seen=self.last_seen,
            facing=self.facing,
        )


@dataclass
class SceneEdge:
    src: str
    dst: str
    rel: Relation
    affinity: float  # in [0, 1]


@dataclass
class MatchConfig:
    lambda_match: float = 0.6
    epsilon_pos: float = 0.25  # meters
    sigma: float = 1.0  # meters, affinity length scale
    decay_gamma: float = 0.98
    prune_tau: float = 0.05
    # Acceptance cutoff for detection/node matching; labels must also agree
    # so distinct categories never merge.
    match_threshold: float = 0.5
    # Weight kept on the old state when a matched node is smoothed.
    ema_old: float = 0.7


@dataclass
class GroundingQuery:
    label: str
    tokens: tuple[str, ...] = ()
    relation: Optional[Relation] = None


def _wrap_angle(angle: float) -> float:
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


def facing_offset(facing_a: float, facing_b: float) -> float:
    """Absolute circular difference between two facing angles, in [0, pi]."""
    return abs(_wrap_angle(facing_a - facing_b))


def spatial_affinity(p_i: np.ndarray, p_j: np.ndarray, theta_ij: float, sigma: float) -> float:
    """Gaussian proximity kernel gated by orientation agreement.

    cos(theta) is clamped at zero so the score stays a similarity in [0, 1].
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    p_i = np.asarray(p_i, dtype=float)
    p_j = np.asarray(p_j, dtype=float)
    sq = float(np.sum((p_i - p_j) ** 2))
    return math.exp(-sq / (sigma * sigma)) * max(0.0, math.cos(theta_ij))


def node_similarity(prev: SceneNode, cand: SceneNode, cfg: MatchConfig) -> float:
    """Embedding dot product blended with a position-gate indicator."""
    if prev.embedding.shape != cand.embedding.shape:
        raise ValueError(
            f"embedding dimension mismatch: {prev.embedding.shape} vs {cand.embedding.shape}"
        )
    dot = float(np.dot(prev.embedding, cand.embedding))
    close = float(np.linalg.norm(prev.position - cand.position) < cfg.epsilon_pos)
    lam = cfg.lambda_match
    return lam * dot + (1.0 - lam) * close


def _classify_relation(a: SceneNode, b: SceneNode) -> Relation:
    """Symbolic relation of a w.r.t. b from geometry alone."""
    if np.all(a.bbox[0] >= b.bbox[0]) and np.all(a.bbox[1] <= b.bbox[1]):
        return Relation.INSIDE
    d_xy = float(np.linalg.norm(a.position[:2] - b.position[:2]))
    dz = float(a.position[2] - b.position[2])
    if dz > 0.2 and d_xy < 0.4:
        return Relation.ON_TOP_OF
    if d_xy < 0.8 and abs(dz) <= 0.2:
        return Relation.NEXT_TO
    return Relation.NEAR


class SceneGraph:
    """Single-writer graph; snapshots may be shared read-only."""

    def __init__(self) -> None:
        self.nodes: dict[str, SceneNode] = {}
        self.edges: dict[tuple[str, str, Relation], SceneEdge] = {}
        self.timestep: int = 0
        self._next_id: int = 0

    def __len__(self) -> int:
        return len(self.nodes)

    def _new_id(self) -> str:
        node_id = f"n{self._next_id:04d}"
        self._next_id += 1
        return node_id

    def nodes_with_label(self, label: str) -> list[SceneNode]:
        return [n for n in self.nodes.values() if n.label == label]

    def best_node(self, label: str, min_confidence: float = 0.0) -> Optional[SceneNode]:
        """Highest-confidence node of a label; ties broken by node id."""
        cands = [n for n in self.nodes_with_label(label) if n.confidence >= min_confidence]
        if not cands:
            return None
        return min(cands, key=lambda n: (-n.confidence, n.node_id))

    def incoming_edges(self, node_id: str) -> list[SceneEdge]:
        return [e for e in self.edges.values() if e.dst == node_id]

    def snapshot(self) -> dict:
        """JSON-ready view used by traces and the recovery protocol."""
        return {
            "timestep": self.timestep,
            "nodes": [
                {
                    "id": n.node_id,
                    "label": n.label,
                    "position": [round(float(x), 6) for x in n.position],
                    "confidence": round(float(n.confidence), 6),
                }
                for n in sorted(self.nodes.values(), key=lambda n: n.node_id)
            ],
            "edges": [
                {
                    "src": e.src,
                    "dst": e.dst,
                    "rel": e.rel.value,
                    "affinity": round(float(e.affinity), 6),
                }
                for e in sorted(self.edges.values(), key=lambda e: (e.src, e.dst, e.rel.value))
            ],
        }


def _rebuild_edges(graph: SceneGraph, cfg: MatchConfig) -> None:
    graph.edges.clear()
    nodes = sorted(graph.nodes.values(), key=lambda n: n.node_id)
    if len(nodes) < 2:
        return
    positions = np.stack([n.position for n in nodes])
    deltas = positions[:, None, :] - positions[None, :, :]
    sq = (deltas**2).sum(axis=2)
    near = sq <= (2.0 * cfg.sigma) ** 2
    for i, j in zip(*np.nonzero(np.triu(near, k=1))):
        a, b = nodes[int(i)], nodes[int(j)]
        theta = facing_offset(a.facing, b.facing)
        rho = math.exp(-float(sq[i, j]) / (cfg.sigma * cfg.sigma)) * max(0.0, math.cos(theta))
        for src, dst in ((a, b), (b, a)):
            rel = _classify_relation(src, dst)
            graph.edges[(src.node_id, dst.node_id, rel)] = SceneEdge(
                src=src.node_id, dst=dst.node_id, rel=rel, affinity=rho
            )


def integrate_detections(
    graph: SceneGraph, detections: list[SceneNode], cfg: MatchConfig
) -> SceneGraph:
    """Match detections into the graph, decay the unobserved, prune the stale.

    Detections are processed in order against the live node set, so a
    duplicate detection in the same batch folds into the node created by the
    first. An empty batch is a pure decay step.
    """
    if detections:
        graph.timestep = max(graph.timestep, max(d.last_seen for d in detections))
    else:
        graph.timestep += 1

    observed: set[str] = set()
    for det in detections:
        best_id = None
        best_sim = -math.inf
        for node in sorted(graph.nodes.values(), key=lambda n: n.node_id):
            if node.label != det.label:
                continue
            sim = node_similarity(node, det, cfg)
            if sim > best_sim:
                best_sim = sim
                best_id = node.node_id
        if best_id is not None and best_sim >= cfg.match_threshold:
            node = graph.nodes[best_id]
            w = cfg.ema_old
            node.position = w * node.position + (1.0 - w) * det.position
            emb = w * node.embedding + (1.0 - w) * det.embedding
            node.embedding = emb / np.linalg.norm(emb)
            node.bbox = det.bbox.copy()
            node.facing = det.facing
            node.confidence = det.confidence
            node.last_seen = det.last_seen
            observed.add(node.node_id)
        else:
            new = det.copy()
            new.node_id = graph._new_id()
            graph.nodes[new.node_id] = new
            observed.add(new.node_id)

    for node in graph.nodes.values():
        if node.node_id not in observed:
            node.confidence *= cfg.decay_gamma
    pruned = [nid for nid, n in graph.nodes.items() if n.confidence < cfg.prune_tau]
    for nid in pruned:
        del graph.nodes[nid]

    _rebuild_edges(graph, cfg)
    return graph


def ground_query(
    graph: SceneGraph, query: GroundingQuery, alpha: float
) -> Optional[tuple[str, float]]:
    """Best node for a language query, or None on an empty graph.

    Label similarity is the clamped cosine between the query label's
    embedding and the node embedding (an exact label match scores 1); the
    relational term is the strongest incoming edge whose relation matches
    the query hint. Ties break on confidence, then node id.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if not graph.nodes:
        return None

    q_emb: Optional[np.ndarray] = None
    best: Optional[tuple[float, float, str]] = None  # (-score, -conf, id) minimized
    best_score = 0.0
    for node in graph.nodes.values():
        if node.label == query.label:
            sim = 1.0
        else:
            if q_emb is None or q_emb.shape != node.embedding.shape:
                q_emb = label_embedding(query.label, dim=node.embedding.shape[0])
            sim = min(1.0, max(0.0, cosine(q_emb, node.embedding)))
        rel_term = 0.0
        if query.relation is not None:
            for edge in graph.incoming_edges(node.node_id):
                if edge.rel == query.relation:
                    rel_term = max(rel_term, edge.affinity)
        score = alpha * sim + (1.0 - alpha) * rel_term
        key = (-score, -node.confidence, node.node_id)
        if best is None or key < best:
            best = key
            best_score = score
    assert best is not None
    return best[2], best_score
