import math

import numpy as np
import pytest

from gridrelay.embeddings import label_embedding
from gridrelay.scene_graph import (
    GroundingQuery,
    MatchConfig,
    Relation,
    SceneEdge,
    SceneGraph,
    SceneNode,
    ground_query,
    integrate_detections,
    node_similarity,
    spatial_affinity,
)


def make_node(label, pos, conf=0.9, t=1, node_id="det", emb=None, facing=0.0):
    emb = emb if emb is not None else label_embedding(label)
    pos = np.asarray(pos, dtype=float)
    bbox = np.stack([pos - 0.2, pos + 0.2])
    return SceneNode(
        node_id=node_id,
        label=label,
        embedding=emb,
        position=pos,
        bbox=bbox,
        confidence=conf,
        last_seen=t,
        facing=facing,
    )


class TestSpatialAffinity:
    def test_same_point_aligned(self):
        p = np.array([1.0, 2.0, 0.0])
        assert spatial_affinity(p, p, 0.0, sigma=1.0) == pytest.approx(1.0, rel=1e-9)

    def test_distance_sigma(self):
        p = np.zeros(3)
        q = np.array([1.0, 0.0, 0.0])
        got = spatial_affinity(p, q, 0.0, sigma=1.0)
        assert got == pytest.approx(math.exp(-1.0), rel=1e-9)

    def test_perpendicular_orientation(self):
        p = np.zeros(3)
        q = np.array([0.3, 0.1, 0.0])
        assert spatial_affinity(p, q, math.pi / 2.0, sigma=1.0) == pytest.approx(0.0, abs=1e-12)

    def test_negative_cos_clamped(self):
        assert spatial_affinity(np.zeros(3), np.zeros(3), math.pi, sigma=1.0) == 0.0

    def test_sigma_must_be_positive(self):
        with pytest.raises(ValueError):
            spatial_affinity(np.zeros(3), np.ones(3), 0.0, sigma=0.0)

    def test_symmetry(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            p = rng.uniform(-3, 3, 3)
            q = rng.uniform(-3, 3, 3)
            theta = rng.uniform(0, math.pi)
            assert spatial_affinity(p, q, theta, 1.3) == spatial_affinity(q, p, theta, 1.3)


class TestNodeSimilarity:
    def test_pure_embedding(self):
        emb = label_embedding("Mug")
        a = make_node("Mug", [0, 0, 0], emb=emb)
        b = make_node("Mug", [3, 3, 0], emb=emb)
        cfg = MatchConfig(lambda_match=1.0)
        assert node_similarity(a, b, cfg) == pytest.approx(1.0, rel=1e-9)

    def test_pure_position_gate(self):
        a = make_node("Mug", [0, 0, 0], emb=label_embedding("Mug"))
        b = make_node("Mug", [0.01, 0, 0], emb=label_embedding("Sofa"))
        cfg = MatchConfig(lambda_match=0.0, epsilon_pos=0.1)
        assert node_similarity(a, b, cfg) == pytest.approx(1.0, rel=1e-9)

    def test_hand_evaluation(self):
        # 0.5 * 0.8 + 0.5 * 0 = 0.4 with the position gate missed
        q = label_embedding("Mug")
        ortho = np.zeros_like(q)
        ortho[0], ortho[1] = -q[1], q[0]
        ortho = ortho - q * np.dot(q, ortho)
        ortho /= np.linalg.norm(ortho)
        emb = 0.8 * q + math.sqrt(1 - 0.64) * ortho
        a = make_node("Mug", [0, 0, 0], emb=q)
        b = make_node("Mug", [0.2, 0, 0], emb=emb)
        cfg = MatchConfig(lambda_match=0.5, epsilon_pos=0.1)
        assert node_similarity(a, b, cfg) == pytest.approx(0.4, rel=1e-9)

    def test_dimension_mismatch(self):
        a = make_node("Mug", [0, 0, 0], emb=label_embedding("Mug", 16))
        b = make_node("Mug", [0, 0, 0], emb=label_embedding("Mug", 8))
        with pytest.raises(ValueError):
            node_similarity(a, b, MatchConfig())


class TestIntegrateDetections:
    def test_single_detection_creates_node(self):
        graph = SceneGraph()
        integrate_detections(graph, [make_node("Mug", [1, 1, 0.8])], MatchConfig())
        assert len(graph) == 1
        assert not graph.edges

    def test_same_detection_twice_matches(self):
        graph = SceneGraph()
        cfg = MatchConfig()
        det = make_node("Mug", [1, 1, 0.8])
        integrate_detections(graph, [det.copy(), det.copy()], cfg)
        assert len(graph) == 1

    def test_reobservation_idempotent(self):
        graph = SceneGraph()
        cfg = MatchConfig()
        dets = [make_node("Mug", [1, 1, 0.8]), make_node("Sofa", [2, 1, 0.4])]
        integrate_detections(graph, [d.copy() for d in dets], cfg)
        n_first = len(graph)
        for t in range(2, 5):
            batch = [d.copy() for d in dets]
            for d in batch:
                d.last_seen = t
            integrate_detections(graph, batch, cfg)
            assert len(graph) == n_first

    def test_prune_after_decay(self):
        graph = SceneGraph()
        cfg = MatchConfig(decay_gamma=0.5, prune_tau=0.05)
        integrate_detections(graph, [make_node("Mug", [1, 1, 0.8], conf=0.06)], cfg)
        integrate_detections(graph, [], cfg)  # 0.06 * 0.5 = 0.03 < 0.05
        assert len(graph) == 0

    def test_decay_monotone_until_empty(self):
        graph = SceneGraph()
        cfg = MatchConfig(decay_gamma=0.9, prune_tau=0.05)
        c0 = 0.8
        integrate_detections(graph, [make_node("Mug", [1, 1, 0.8], conf=c0)], cfg)
        bound = math.ceil(math.log(cfg.prune_tau / c0) / math.log(cfg.decay_gamma))
        last = c0
        for _ in range(bound + 1):
            integrate_detections(graph, [], cfg)
            if graph.nodes:
                conf = next(iter(graph.nodes.values())).confidence
                assert conf <= last
                last = conf
        assert len(graph) == 0

    def test_distinct_labels_never_merge(self):
        graph = SceneGraph()
        cfg = MatchConfig()
        integrate_detections(
            graph,
            [make_node("Mug", [1, 1, 0.8]), make_node("Kettle", [1.01, 1, 0.8])],
            cfg,
        )
        assert len(graph) == 2

    def test_edges_within_reach(self):
        graph = SceneGraph()
        cfg = MatchConfig(sigma=1.0)
        integrate_detections(
            graph,
            [make_node("Mug", [1, 1, 0.8]), make_node("Counter", [1.3, 1, 0.4])],
            cfg,
        )
        assert graph.edges
        for edge in graph.edges.values():
            assert 0.0 <= edge.affinity <= 1.0


class TestGroundQuery:
    def test_exact_label_alpha_one(self):
        graph = SceneGraph()
        integrate_detections(graph, [make_node("Mug", [1, 1, 0.8])], MatchConfig())
        node_id, score = ground_query(graph, GroundingQuery(label="Mug"), alpha=1.0)
        assert score == pytest.approx(1.0, rel=1e-9)
        assert graph.nodes[node_id].label == "Mug"

    def test_alpha_zero_tie_breaks_on_confidence(self):
        graph = SceneGraph()
        integrate_detections(
            graph,
            [
                make_node("Mug", [1, 1, 0.8], conf=0.5),
                make_node("Sofa", [4, 4, 0.4], conf=0.9),
            ],
            MatchConfig(),
        )
        node_id, score = ground_query(graph, GroundingQuery(label="Mug"), alpha=0.0)
        assert score == 0.0
        assert graph.nodes[node_id].label == "Sofa"  # higher confidence wins the tie

    def test_hand_scored_ranking(self):
        # First candidate: label similarity 0.9, no relation support -> 0.45.
        # Second: similarity 0.6 with relation affinity 0.2 -> 0.40.
        q = label_embedding("mug")

        def with_cos(target):
            v = np.zeros_like(q)
            v[0], v[1] = -q[1], q[0]
            v -= q * np.dot(q, v)
            v /= np.linalg.norm(v)
            return target * q + math.sqrt(1 - target * target) * v

        graph = SceneGraph()
        a = make_node("cup", [0, 0, 0], emb=with_cos(0.9), node_id="n0")
        b = make_node("glass", [5, 5, 0], emb=with_cos(0.6), node_id="n1")
        helper = make_node("table", [5.2, 5, -0.5], node_id="n2")
        graph.nodes = {n.node_id: n for n in (a, b, helper)}
        graph.edges[("n2", "n1", Relation.NEXT_TO)] = SceneEdge(
            src="n2", dst="n1", rel=Relation.NEXT_TO, affinity=0.2
        )
        query = GroundingQuery(label="mug", relation=Relation.NEXT_TO)
        node_id, score = ground_query(graph, query, alpha=0.5)
        assert node_id == "n0"
        assert score == pytest.approx(0.45, rel=1e-9)

    def test_empty_graph_returns_none(self):
        assert ground_query(SceneGraph(), GroundingQuery(label="Mug"), 0.5) is None

    def test_confidence_scaling_invariance(self):
        rng = np.random.default_rng(11)
        labels = ["Mug", "Sofa", "Desk", "Lamp"]
        for trial in range(50):
            graph = SceneGraph()
            dets = [
                make_node(
                    labels[int(rng.integers(len(labels)))],
                    rng.uniform(0, 5, 3),
                    conf=float(rng.uniform(0.2, 1.0)),
                )
                for _ in range(5)
            ]
            integrate_detections(graph, dets, MatchConfig())
            query = GroundingQuery(label="Mug")
            before = ground_query(graph, query, alpha=0.7)
            for node in graph.nodes.values():
                node.confidence *= 0.5
            after = ground_query(graph, query, alpha=0.7)
            assert before[0] == after[0]

    def test_score_bounds(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            graph = SceneGraph()
            dets = [
                make_node("Obj" + str(int(rng.integers(4))), rng.uniform(0, 4, 3))
                for _ in range(4)
            ]
            integrate_detections(graph, dets, MatchConfig())
            alpha = float(rng.uniform(0, 1))
            _, score = ground_query(graph, GroundingQuery(label="Obj1"), alpha)
            assert 0.0 <= score <= 1.0
