"""Registry-based pipeline construction and the run manifest.

Pipelines are declared as nested ``{"type": <registry key>, ...}``
mappings; the registry resolves each key to a constructor and builds the
tree bottom-up with strict parameter checking. The manifest is plain JSON
and round-trips to a fixed point.
"""

from __future__ import annotations

import difflib
import inspect
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Mapping

from .adversary import AdversaryParams
from .bus import ChannelModel
from .command_center import CollationConfig, CommandCenterPipeline, GroupTrackerWrapper
from .fusion import CovarianceIntersectionFusion, SampledAssignmentClusterer
from .scenario import ConfigError, ScenarioConfig, SensorModel
from .tracking import TrackerConfig


class BuildError(ValueError):
    """A component spec failed to resolve or construct."""


class ManifestError(ValueError):
    """A run manifest is structurally or semantically invalid."""


def _is_spec(value: Any) -> bool:
    return isinstance(value, Mapping) and "type" in value


class Registry:
    """Mapping from registry keys to component constructors."""

    def __init__(self) -> None:
        self._ctors: dict[str, Callable[..., Any]] = {}

    def register(self, key: str, ctor: Callable[..., Any]) -> None:
        if key in self._ctors:
            raise BuildError(f"registry key {key!r} already registered")
        self._ctors[key] = ctor

    def keys(self) -> list[str]:
        return sorted(self._ctors)

    def build(self, spec: Mapping[str, Any], path: str = "$") -> Any:
        """Recursively construct a component tree; side-effect free."""
        if not _is_spec(spec):
            raise BuildError(f"{path}: component spec must be a mapping with a 'type' key")
        key = spec["type"]
        ctor = self._ctors.get(key)
        if ctor is None:
            hint = difflib.get_close_matches(str(key), self.keys(), n=1)
            nearest = f"; nearest registered key: {hint[0]!r}" if hint else ""
            raise BuildError(f"{path}: unknown component type {key!r}{nearest}")
        params: dict[str, Any] = {}
        for name, value in spec.items():
            if name == "type":
                continue
            child_path = f"{path}.{name}"
            params[name] = self.build(value, child_path) if _is_spec(value) else value
        sig = inspect.signature(ctor)
        accepted = set(sig.parameters)
        for name in params:
            if name not in accepted:
                raise BuildError(
                    f"{path}: unknown parameter {name!r} for component {key!r}"
                )
        try:
            return ctor(**params)
        except (TypeError, ValueError) as exc:
            raise BuildError(f"{path}: cannot construct {key!r}: {exc}") from exc


def default_registry() -> Registry:
    registry = Registry()
    registry.register("KalmanTracker", TrackerConfig)
    registry.register("KalmanBoxTracker3D", TrackerConfig)
    registry.register("TrackerPipeline", AgentPipeline)
    registry.register("SampledAssignmentClusterer", SampledAssignmentClusterer)
    registry.register("CovarianceIntersectionFusion", CovarianceIntersectionFusion)
    registry.register("GroupTrackerWrapper", GroupTrackerWrapper)
    registry.register("CommandCenterPipeline", CommandCenterPipeline)
    return registry


@dataclass(frozen=True)
class AgentPipeline:
    """Per-agent pipeline config (one local tracker)."""

    tracker: TrackerConfig


def default_agent_pipeline_spec() -> dict:
    return {
        "type": "TrackerPipeline",
        "tracker": {
            "type": "KalmanTracker",
            "gate_distance": 4.0,
            "confirm_hits": 3,
            "delete_misses": 3,
            "process_noise_std": 1.0,
        },
    }


def default_command_center_spec() -> dict:
    return {
        "type": "CommandCenterPipeline",
        "clustering": {"type": "SampledAssignmentClusterer", "assign_radius": 2.0},
        "group_tracking": {
            "type": "GroupTrackerWrapper",
            "fusion": {"type": "CovarianceIntersectionFusion"},
            "tracker": {
                "type": "KalmanTracker",
                "gate_distance": 4.0,
                "confirm_hits": 2,
                "delete_misses": 3,
                "process_noise_std": 1.0,
            },
        },
    }


def _build_dataclass(cls, data: Mapping[str, Any], path: str):
    if not isinstance(data, Mapping):
        raise ManifestError(f"{path}: expected a mapping")
    accepted = set(inspect.signature(cls).parameters)
    unknown = [k for k in data if k not in accepted]
    if unknown:
        raise ManifestError(f"{path}: unknown key {unknown[0]!r}")
    try:
        return cls(**data)
    except (TypeError, ValueError, ConfigError) as exc:
        raise ManifestError(f"{path}: {exc}") from exc


def _scenario_from_dict(data: Mapping[str, Any], path: str) -> ScenarioConfig:
    data = dict(data)
    for key in ("ego_sensor", "infrastructure_sensor"):
        if key in data and isinstance(data[key], Mapping):
            data[key] = _build_dataclass(SensorModel, data[key], f"{path}.{key}")
    if "ego_waypoints" in data:
        data["ego_waypoints"] = tuple(tuple(float(v) for v in w) for w in data["ego_waypoints"])
    if "object_speed_range" in data:
        data["object_speed_range"] = tuple(float(v) for v in data["object_speed_range"])
    return _build_dataclass(ScenarioConfig, data, path)


@dataclass(frozen=True)
class RunManifest:
    """Launch-time description of one simulation run."""

    seed: int = 0
    out_dir: str | None = None
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    agent_pipeline: dict = field(default_factory=default_agent_pipeline_spec)
    command_center: dict = field(default_factory=default_command_center_spec)
    adversary: AdversaryParams = field(default_factory=AdversaryParams)
    infrastructure_channel: ChannelModel = field(
        default_factory=lambda: ChannelModel(latency_mean=0.005)
    )
    ego_channel: ChannelModel = field(
        default_factory=lambda: ChannelModel(
            latency_mean=0.05, latency_jitter_std=0.01, drop_prob=0.01
        )
    )
    adversary_channel: ChannelModel = field(
        default_factory=lambda: ChannelModel(latency_mean=0.005)
    )
    collation: CollationConfig = field(default_factory=CollationConfig)
    cc_cycle_offset: float = 0.06
    truth_distance: float = 50.0
    match_radius: float = 2.0
    snapshot_every: int | None = None
    cc_debug: bool = False
    frames_log: str | None = None

    def validate(self, registry: Registry | None = None) -> None:
        registry = registry or default_registry()
        if self.adversary.n_compromised > self.scenario.n_infrastructure:
            raise ManifestError(
                f"adversary.n_compromised={self.adversary.n_compromised} exceeds the "
                f"{self.scenario.n_infrastructure} attackable infrastructure agents"
            )
        pipeline = registry.build(self.agent_pipeline, "$.agent_pipeline")
        if not isinstance(pipeline, AgentPipeline):
            raise ManifestError("$.agent_pipeline: spec must build a TrackerPipeline")
        cc = registry.build(self.command_center, "$.command_center")
        if not isinstance(cc, CommandCenterPipeline):
            raise ManifestError("$.command_center: spec must build a CommandCenterPipeline")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "out_dir": self.out_dir,
            "scenario": self.scenario.to_jsonable(),
            "agent_pipeline": self.agent_pipeline,
            "command_center": self.command_center,
            "adversary": self.adversary.to_jsonable(),
            "infrastructure_channel": self.infrastructure_channel.to_jsonable(),
            "ego_channel": self.ego_channel.to_jsonable(),
            "adversary_channel": self.adversary_channel.to_jsonable(),
            "collation": self.collation.to_jsonable(),
            "cc_cycle_offset": self.cc_cycle_offset,
            "truth_distance": self.truth_distance,
            "match_radius": self.match_radius,
            "snapshot_every": self.snapshot_every,
            "cc_debug": self.cc_debug,
            "frames_log": self.frames_log,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunManifest":
        if not isinstance(data, Mapping):
            raise ManifestError("$: manifest must be a mapping")
        known = set(inspect.signature(cls).parameters)
        unknown = [k for k in data if k not in known]
        if unknown:
            raise ManifestError(f"$: unknown key {unknown[0]!r}")
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            if key == "scenario":
                kwargs[key] = _scenario_from_dict(value, "$.scenario")
            elif key == "adversary":
                kwargs[key] = _build_dataclass(AdversaryParams, value, "$.adversary")
            elif key in ("infrastructure_channel", "ego_channel", "adversary_channel"):
                kwargs[key] = _build_dataclass(ChannelModel, value, f"$.{key}")
            elif key == "collation":
                kwargs[key] = _build_dataclass(CollationConfig, value, "$.collation")
            else:
                kwargs[key] = value
        try:
            return cls(**kwargs)
        except (TypeError, ValueError, ConfigError) as exc:
            raise ManifestError(f"$: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def baseline_of(manifest: RunManifest) -> RunManifest:
    """The seed-paired unattacked twin of a manifest."""
    return replace(manifest, adversary=AdversaryParams(n_compromised=0), out_dir=None)
