"""Deterministic event-driven testbed for attacks on centralized multi-agent track fusion."""

from .adversary import AdversaryParams, AttackDirective
from .bus import BoundedTimeQueue, ChannelModel, RemapRule, SimBus, StampedMessage
from .command_center import CollationConfig, CommandCenterPipeline
from .config import RunManifest, Registry, baseline_of, default_registry
from .fusion import CovarianceIntersectionFusion, FusedState, SampledAssignmentClusterer, fuse_ci
from .geometry import FrameGraph, ObjectState, Pose, WORLD
from .metrics import FrameOutcome, MetricsRecord, TruthSet, increment_metrics, match_truth
from .montecarlo import CellSpec, run_monte_carlo
from .runner import RunResult, launch
from .scenario import Detection, GroundTruthFrame, ScenarioConfig, SensorModel, generate_scenario, sense
from .tracking import MultiObjectTracker, Track, TrackerConfig

__version__ = "0.1.0"

__all__ = [
    "AdversaryParams",
    "AttackDirective",
    "BoundedTimeQueue",
    "CellSpec",
    "ChannelModel",
    "CollationConfig",
    "CommandCenterPipeline",
    "CovarianceIntersectionFusion",
    "Detection",
    "FrameGraph",
    "FrameOutcome",
    "FusedState",
    "GroundTruthFrame",
    "MetricsRecord",
    "MultiObjectTracker",
    "ObjectState",
    "Pose",
    "Registry",
    "RemapRule",
    "RunManifest",
    "RunResult",
    "SampledAssignmentClusterer",
    "ScenarioConfig",
    "SensorModel",
    "SimBus",
    "StampedMessage",
    "Track",
    "TrackerConfig",
    "TruthSet",
    "WORLD",
    "baseline_of",
    "default_registry",
    "fuse_ci",
    "generate_scenario",
    "increment_metrics",
    "launch",
    "match_truth",
    "run_monte_carlo",
    "sense",
]
