import itertools

import numpy as np
import pytest

from gridrelay.cooccurrence import (
    CoOccurrenceGraph,
    RelayConfig,
    best_relay_chain,
    build_from_corpus,
    cluster,
    export_adjacency,
    fuse_relay_scores,
    modularity,
    read_corpus,
    uniform_graph,
    write_corpus,
)
from gridrelay.errors import UndefinedModularityError


def graph_from_weights(categories, weights):
    w = np.asarray(weights, dtype=float)
    co = (w > 0).astype(np.int64)
    return CoOccurrenceGraph(categories=tuple(categories), co_freq=co, weights=w)


def all_partitions(items):
    """Every partition of a small item list (Bell-number enumeration)."""
    if not items:
        yield []
        return
    head, rest = items[0], items[1:]
    for partition in all_partitions(rest):
        for i in range(len(partition)):
            yield partition[:i] + [partition[i] + [head]] + partition[i + 1 :]
        yield partition + [[head]]


def brute_force_best_q(graph):
    best = -2.0
    for partition in all_partitions(list(graph.categories)):
        assignment = {}
        for cid, block in enumerate(partition):
            for cat in block:
                assignment[cat] = cid
        best = max(best, modularity(graph, assignment))
    return best


class TestBuildFromCorpus:
    def test_single_pair(self):
        g = build_from_corpus([{"A", "B"}])
        assert g.weight("A", "B") == 1.0

    def test_never_colocated(self):
        g = build_from_corpus([{"A"}, {"B"}])
        assert g.weight("A", "B") == 0.0

    def test_counted_and_normalized(self):
        g = build_from_corpus([{"A", "B"}, {"A", "B"}, {"A", "C"}])
        assert g.weight("A", "B") == pytest.approx(1.0, rel=1e-9)
        assert g.weight("A", "C") == pytest.approx(0.5, rel=1e-9)
        assert g.weight("B", "C") == 0.0

    def test_normalization_peak_is_one(self):
        rng = np.random.default_rng(5)
        cats = list("ABCDE")
        for _ in range(30):
            scenes = [
                set(rng.choice(cats, size=rng.integers(2, 5), replace=False))
                for _ in range(rng.integers(1, 8))
            ]
            g = build_from_corpus(scenes)
            if g.co_freq.max() > 0:
                assert g.weights.max() == 1.0

    def test_scene_order_invariance(self):
        scenes = [{"A", "B"}, {"B", "C"}, {"A", "C", "D"}, {"D"}]
        g1 = build_from_corpus(scenes)
        g2 = build_from_corpus(list(reversed(scenes)))
        assert g1.categories == g2.categories
        assert g1.weights.tobytes() == g2.weights.tobytes()

    def test_empty_corpus(self):
        g = build_from_corpus([])
        assert g.categories == ()


class TestModularity:
    def test_all_in_one_cluster_is_zero(self):
        g = build_from_corpus([{"A", "B"}, {"B", "C"}, {"A", "C"}, {"C", "D"}])
        assignment = {c: 0 for c in g.categories}
        # Sum term reaches 2m so Q collapses to 1 - (sum d)^2 / (2m)^2 = 0.
        assert modularity(g, assignment) == pytest.approx(0.0, abs=1e-12)

    def test_two_disjoint_triangles(self):
        w = np.zeros((6, 6))
        for i, j in [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]:
            w[i, j] = w[j, i] = 1.0
        g = graph_from_weights(list("ABCDEF"), w)
        assignment = {"A": 0, "B": 0, "C": 0, "D": 1, "E": 1, "F": 1}
        q = modularity(g, assignment)
        assert q == pytest.approx(0.5, rel=1e-9)
        assert q == pytest.approx(brute_force_best_q(g), rel=1e-9)

    def test_singletons_on_loop_free_graph(self):
        w = np.zeros((3, 3))
        w[0, 1] = w[1, 0] = 1.0
        w[1, 2] = w[2, 1] = 0.5
        g = graph_from_weights(list("ABC"), w)
        assignment = {"A": 0, "B": 1, "C": 2}
        two_m = w.sum()
        degrees = w.sum(axis=1)
        expected = -float((degrees**2).sum()) / (two_m**2)
        assert modularity(g, assignment) == pytest.approx(expected, rel=1e-9)

    def test_zero_graph_rejected(self):
        g = graph_from_weights(["A", "B"], np.zeros((2, 2)))
        with pytest.raises(UndefinedModularityError):
            modularity(g, {"A": 0, "B": 0})


class TestCluster:
    def test_two_disjoint_cliques(self):
        scenes = [{"A", "B", "C"}] * 3 + [{"D", "E", "F"}] * 3
        g = build_from_corpus(scenes)
        result = cluster(g)
        groups = {}
        for cat, cid in result.assignment.items():
            groups.setdefault(cid, set()).add(cat)
        assert {frozenset(v) for v in groups.values()} == {
            frozenset("ABC"),
            frozenset("DEF"),
        }
        assert result.q == pytest.approx(brute_force_best_q(g), rel=1e-9)

    def test_complete_uniform_graph(self):
        n = 5
        w = np.full((n, n), 0.7)
        np.fill_diagonal(w, 0.0)
        g = graph_from_weights(list("ABCDE"), w)
        result = cluster(g)
        assert result.q == pytest.approx(brute_force_best_q(g), abs=1e-9)

    def test_single_edge_merges(self):
        g = build_from_corpus([{"A", "B"}])
        result = cluster(g)
        assert result.assignment["A"] == result.assignment["B"]
        assert result.q == pytest.approx(0.0, abs=1e-12)

    def test_q_matches_modularity_of_own_assignment(self):
        rng = np.random.default_rng(9)
        cats = list("ABCDEFG")
        for _ in range(20):
            scenes = [
                set(rng.choice(cats, size=rng.integers(2, 5), replace=False))
                for _ in range(rng.integers(2, 9))
            ]
            g = build_from_corpus(scenes)
            if g.co_freq.max() == 0:
                continue
            result = cluster(g)
            assert result.q == pytest.approx(modularity(g, result.assignment), rel=1e-9)
            singleton_q = modularity(g, {c: i for i, c in enumerate(g.categories)})
            assert result.q >= singleton_q - 1e-12


def brute_force_chain(graph, start, goal, max_hops):
    si, gi = graph.index(start), graph.index(goal)
    others = [i for i in range(len(graph.categories)) if i not in (si, gi)]
    w = graph.weights
    best = None
    for m in range(0, max_hops + 1):
        for combo in itertools.permutations(others, m):
            seq = [si, *combo, gi]
            total = sum(w[a, b] for a, b in zip(seq, seq[1:]))
            mean = total / (m + 1)
            names = tuple(graph.categories[i] for i in combo)
            key = (-mean, m, names)
            if best is None or key < best[0]:
                best = (key, total, names)
    return best


class TestBestRelayChain:
    def test_zero_hops(self):
        g = build_from_corpus([{"S", "G"}, {"S", "X"}])
        chain = best_relay_chain(g, "S", "G", RelayConfig(max_hops=0))
        assert chain.anchors == ()
        assert chain.chain_sum == pytest.approx(g.weight("S", "G"), rel=1e-9)

    def test_triangle_prefers_relay(self):
        w = np.zeros((3, 3))
        cats = ("G", "R", "S")
        idx = {c: i for i, c in enumerate(cats)}
        w[idx["S"], idx["R"]] = w[idx["R"], idx["S"]] = 1.0
        w[idx["R"], idx["G"]] = w[idx["G"], idx["R"]] = 1.0
        w[idx["S"], idx["G"]] = w[idx["G"], idx["S"]] = 0.1
        g = graph_from_weights(cats, w)
        chain = best_relay_chain(g, "S", "G", RelayConfig(max_hops=1))
        assert chain.anchors == ("R",)
        assert chain.mean_weight == pytest.approx(1.0, rel=1e-9)

    def test_matches_brute_force_on_random_graphs(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            n = int(rng.integers(3, 7))
            cats = tuple(f"C{i}" for i in range(n))
            w = rng.uniform(0, 1, (n, n))
            w = (w + w.T) / 2.0
            np.fill_diagonal(w, 0.0)
            g = graph_from_weights(cats, w)
            got = best_relay_chain(g, cats[0], cats[1], RelayConfig(max_hops=2))
            key, total, names = brute_force_chain(g, cats[0], cats[1], 2)
            assert got.anchors == names
            assert got.chain_sum == pytest.approx(total, rel=1e-9)

    def test_mean_weight_monotone_in_max_hops(self):
        rng = np.random.default_rng(23)
        for _ in range(50):
            n = 6
            w = rng.uniform(0, 1, (n, n))
            w = (w + w.T) / 2.0
            np.fill_diagonal(w, 0.0)
            g = graph_from_weights([f"C{i}" for i in range(n)], w)
            prev = -1.0
            for hops in range(0, 3):
                chain = best_relay_chain(g, "C0", "C1", RelayConfig(max_hops=hops))
                assert chain.mean_weight >= prev - 1e-12
                prev = chain.mean_weight

    def test_exclusion(self):
        g = build_from_corpus([{"S", "R"}, {"R", "G"}, {"S", "R"}, {"R", "G"}])
        chain = best_relay_chain(g, "S", "G", RelayConfig(max_hops=1), exclude={"R"})
        assert "R" not in chain.anchors

    def test_unknown_category(self):
        g = build_from_corpus([{"A", "B"}])
        with pytest.raises(KeyError):
            best_relay_chain(g, "A", "Z", RelayConfig())


class TestFuseRelayScores:
    def test_beta_zero_uses_weights(self):
        g = build_from_corpus([{"A", "G"}, {"A", "G"}, {"B", "G"}])
        ranked = fuse_relay_scores(g, "G", {"B": 0.99}, beta=0.0)
        assert ranked[0][0] == "A"

    def test_beta_one_uses_oracle(self):
        g = build_from_corpus([{"A", "G"}, {"A", "G"}, {"B", "G"}])
        ranked = fuse_relay_scores(g, "G", {"B": 0.99}, beta=1.0)
        assert ranked[0][0] == "B"

    def test_hand_value(self):
        w = np.zeros((2, 2))
        w[0, 1] = w[1, 0] = 0.4
        g = graph_from_weights(("A", "G"), w)
        ranked = dict(fuse_relay_scores(g, "G", {"A": 0.8}, beta=0.5))
        assert ranked["A"] == pytest.approx(0.6, rel=1e-9)

    def test_missing_oracle_scores_default_zero(self):
        g = build_from_corpus([{"A", "G"}])
        ranked = dict(fuse_relay_scores(g, "G", {}, beta=1.0))
        assert ranked["A"] == 0.0

    def test_uniform_graph_helper(self):
        g = uniform_graph(["A", "B", "C"])
        assert g.weight("A", "B") == g.weight("B", "C") == 0.5
        assert g.weight("A", "A") == 0.0


class TestFiles:
    def test_corpus_roundtrip(self, tmp_path):
        scenes = [{"Mug", "Counter"}, {"Bed", "Lamp"}]
        path = tmp_path / "corpus.txt"
        write_corpus(path, scenes)
        back = read_corpus(path)
        assert [set(s) for s in back] == scenes

    def test_export_adjacency(self, tmp_path):
        g = build_from_corpus([{"A", "B"}, {"A", "B"}, {"B", "C"}])
        path = tmp_path / "graph.txt"
        export_adjacency(g, path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("A ")
        assert "B:1.000000" in lines[0]
