"""Deterministic object-goal navigation planning engine and benchmark harness."""

from .cooccurrence import (
    CoOccurrenceGraph,
    RelayChain,
    RelayConfig,
    best_relay_chain,
    build_from_corpus,
    cluster,
    fuse_relay_scores,
    modularity,
)
from .episode import EpisodeConfig, EpisodeRecord, run_episode
from .grid import Pose, RangeScan, SemanticGrid
from .metrics import BenchmarkReport, metrics
from .planner import Path, astar, check_replan, dstar_extract, dstar_init, dstar_update
from .scene_graph import (
    GroundingQuery,
    MatchConfig,
    SceneGraph,
    SceneNode,
    ground_query,
    integrate_detections,
    node_similarity,
    spatial_affinity,
)
from .simenv import GenConfig, Scenario, SensorConfig, Simulator, generate
from .subgoal import FusionConfig, Subgoal, SubgoalModel, fit, fuse, next_subgoal, validate

__version__ = "0.1.0"
