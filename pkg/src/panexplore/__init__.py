"""Deterministic frontier-exploration simulator with pan-at-branch decision making,
selection-tree recovery, and coverage-distance benchmarking."""

from .decision import Policy
from .metrics import CoverageCurve, EpisodeClock, EpisodeMetrics, auc, common_horizon
from .orchestrator import EpisodeConfig, EpisodeResult, Explorer, run_episode
from .worldsim import GroundTruthWorld, OccupancyGrid, Pose, SensorConfig, load_world
from .worldgen import gen_world, sample_starts

__all__ = [
    "Policy", "CoverageCurve", "EpisodeClock", "EpisodeMetrics", "auc", "common_horizon",
    "EpisodeConfig", "EpisodeResult", "Explorer", "run_episode", "GroundTruthWorld",
    "OccupancyGrid", "Pose", "SensorConfig", "load_world", "gen_world", "sample_starts",
]
