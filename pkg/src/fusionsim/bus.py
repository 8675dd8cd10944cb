"""Logical-time publish/subscribe bus.

A single serial event loop owns the clock. Publishing schedules one
arrival per subscriber through a per-link channel model (latency, jitter,
drop); dynamic topic remapping routes a topic through an interceptor node
transparently to downstream subscribers. Determinism: per-link random
substreams plus (event-time, sequence-number) total ordering.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .rng import substream


class RoutingError(KeyError):
    """Publish or subscribe on an unregistered topic/node."""


@dataclass(frozen=True)
class ChannelModel:
    """One-way link model."""

    latency_mean: float = 0.0
    latency_jitter_std: float = 0.0
    drop_prob: float = 0.0

    def __post_init__(self) -> None:
        if self.latency_mean < 0:
            raise ValueError("latency_mean must be >= 0")
        if self.latency_jitter_std < 0:
            raise ValueError("latency_jitter_std must be >= 0")
        if not (0.0 <= self.drop_prob <= 1.0):
            raise ValueError("drop_prob must be in [0, 1]")

    def to_jsonable(self) -> dict:
        return {
            "latency_mean": self.latency_mean,
            "latency_jitter_std": self.latency_jitter_std,
            "drop_prob": self.drop_prob,
        }


INSTANT = ChannelModel()


@dataclass(frozen=True, eq=False)
class StampedMessage:
    """Timestamped payload on a named topic."""

    topic: str
    source: str
    timestamp: float
    payload: Any

    def __post_init__(self) -> None:
        if self.timestamp < 0:
            raise ValueError("timestamp must be >= 0")


@dataclass(frozen=True)
class RemapRule:
    """Route ``original`` through ``interceptor``, which republishes on ``republished``."""

    original: str
    interceptor: str
    republished: str


class BoundedTimeQueue:
    """Min-heap priority queue over timestamps with circular eviction.

    When full, inserting evicts the oldest entry (which may be the new one
    if it is older than everything queued). Pop order is nondecreasing
    timestamp; ties resolve by insertion order.
    """

    def __init__(self, capacity: int = 32):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._heap: list[tuple[float, int, Any]] = []
        self._seq = 0
        self.drops = 0

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, timestamp: float, item: Any) -> None:
        entry = (float(timestamp), self._seq, item)
        self._seq += 1
        if len(self._heap) >= self.capacity:
            heapq.heappushpop(self._heap, entry)
            self.drops += 1
        else:
            heapq.heappush(self._heap, entry)

    def pop(self) -> tuple[float, Any]:
        ts, _, item = heapq.heappop(self._heap)
        return ts, item

    def peek_ts(self) -> float:
        return self._heap[0][0]

    def newest_ts(self) -> float:
        return max(ts for ts, _, _ in self._heap)

    def clear(self) -> None:
        self._heap.clear()


class Discovery:
    """Live-agent tracking from status heartbeats."""

    def __init__(self, staleness_window: float = 0.5):
        self.staleness_window = staleness_window
        self.last_seen: dict[str, float] = {}

    def note(self, agent: str, timestamp: float) -> None:
        prev = self.last_seen.get(agent)
        if prev is None or timestamp > prev:
            self.last_seen[agent] = timestamp

    def live(self, now: float) -> set[str]:
        return {a for a, t in self.last_seen.items() if t > now - self.staleness_window}

    def forget(self, agent: str) -> None:
        self.last_seen.pop(agent, None)


Callback = Callable[[float, str, StampedMessage], None]


class SimBus:
    """The event loop, topic table, and channel models of one simulation."""

    def __init__(self, master_seed: int = 0, digest_fn: Callable[[Any], str] | None = None):
        self._master_seed = int(master_seed)
        self._now = 0.0
        self._seq = 0
        self._heap: list[tuple[float, int, str, str, StampedMessage]] = []
        self._topics: set[str] = set()
        self._subscribers: dict[str, dict[str, Callback]] = {}
        self._node_channels: dict[str, ChannelModel] = {}
        self._links: dict[tuple[str, str], ChannelModel] = {}
        self._link_rngs: dict[tuple[str, str], np.random.Generator] = {}
        self._remap_by_original: dict[str, RemapRule] = {}
        self._remap_by_republished: dict[str, RemapRule] = {}
        self._digest_fn = digest_fn
        self.event_log: list[dict] = []
        self.dropped = 0

    # ------------------------------------------------------------------ setup

    @property
    def now(self) -> float:
        return self._now

    def register_node(self, node_id: str, channel: ChannelModel = INSTANT) -> None:
        self._node_channels[node_id] = channel

    def set_link(self, source: str, dest: str, channel: ChannelModel) -> None:
        self._links[(source, dest)] = channel

    def register_topic(self, topic: str) -> None:
        self._topics.add(topic)

    def subscribe(self, topic: str, node_id: str, callback: Callback) -> None:
        if topic not in self._topics:
            raise RoutingError(f"unknown topic {topic!r}")
        if node_id not in self._node_channels:
            raise RoutingError(f"unknown node {node_id!r}")
        self._subscribers.setdefault(topic, {})[node_id] = callback

    def add_remap(self, rule: RemapRule, interceptor_callback: Callback) -> None:
        if rule.original not in self._topics:
            raise RoutingError(f"unknown topic {rule.original!r}")
        if rule.interceptor not in self._node_channels:
            raise RoutingError(f"unknown interceptor node {rule.interceptor!r}")
        if rule.original == rule.republished:
            raise RoutingError("remap must republish on a distinct topic")
        # reject cycles: walking original -> republished links must not return
        seen = {rule.original}
        cur = rule.republished
        while cur in self._remap_by_original:
            cur = self._remap_by_original[cur].republished
            if cur in seen:
                raise RoutingError("remap rules form a cycle")
            seen.add(cur)
        self._topics.add(rule.republished)
        self._remap_by_original[rule.original] = rule
        self._remap_by_republished[rule.republished] = rule
        self._subscribers.setdefault(rule.original, {})[rule.interceptor] = interceptor_callback

    # ------------------------------------------------------------- publishing

    def _link_channel(self, source: str, dest: str) -> ChannelModel:
        link = self._links.get((source, dest))
        if link is not None:
            return link
        return self._node_channels.get(source, INSTANT)

    def _link_rng(self, source: str, dest: str) -> np.random.Generator:
        key = (source, dest)
        rng = self._link_rngs.get(key)
        if rng is None:
            rng = substream(self._master_seed, "chan", source, dest)
            self._link_rngs[key] = rng
        return rng

    def _schedule(self, when: float, dest: str, topic: str, msg: StampedMessage) -> None:
        heapq.heappush(self._heap, (when, self._seq, dest, topic, msg))
        self._seq += 1

    def publish(self, msg: StampedMessage) -> int:
        """Route a message; returns the number of arrivals scheduled.

        A topic with a remap rule delivers only to its interceptor (an
        in-path tap, no channel applied). The interceptor's republication
        is delivered to the original topic's subscribers through the
        original source's channel, so downstream nodes observe no
        accounting difference.
        """
        if msg.topic not in self._topics:
            raise RoutingError(f"unknown topic {msg.topic!r}")
        rule = self._remap_by_original.get(msg.topic)
        if rule is not None:
            self._schedule(msg.timestamp, rule.interceptor, msg.topic, msg)
            return 1
        origin = self._remap_by_republished.get(msg.topic)
        topic_out = origin.original if origin is not None else msg.topic
        skip = origin.interceptor if origin is not None else None
        subs = self._subscribers.get(topic_out, {})
        scheduled = 0
        for dest in sorted(subs):
            if dest == skip:
                continue
            channel = self._link_channel(msg.source, dest)
            rng = self._link_rng(msg.source, dest)
            if channel.drop_prob > 0.0 and rng.random() < channel.drop_prob:
                self.dropped += 1
                continue
            latency = 0.0
            if channel.latency_mean > 0.0 or channel.latency_jitter_std > 0.0:
                latency = max(0.0, float(rng.normal(channel.latency_mean, channel.latency_jitter_std)))
            self._schedule(msg.timestamp + latency, dest, topic_out, msg)
            scheduled += 1
        return scheduled

    # -------------------------------------------------------------- execution

    def step(self, until: float) -> int:
        """Deliver every event with time <= ``until`` in (time, seq) order."""
        if until < self._now - 1e-12:
            raise ValueError(f"cannot step backwards: now={self._now}, until={until}")
        processed = 0
        while self._heap and self._heap[0][0] <= until:
            when, _, dest, topic, msg = heapq.heappop(self._heap)
            self._now = max(self._now, when)
            callback = self._subscribers.get(topic, {}).get(dest)
            if callback is not None:
                callback(when, topic, msg)
            if self._digest_fn is not None:
                self.event_log.append(
                    {
                        "t": round(when, 9),
                        "topic": topic,
                        "source": msg.source,
                        "dest": dest,
                        "digest": self._digest_fn(msg.payload),
                    }
                )
            processed += 1
        self._now = max(self._now, until)
        return processed

    def pending(self) -> int:
        return len(self._heap)
