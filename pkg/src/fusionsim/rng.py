"""Named, counter-based random substreams derived from one master seed.

Every stochastic component draws from its own stream keyed by what it is
(e.g. ``("sense", "infra:0", 17)``), so adding or removing one component
never perturbs another component's draws. This is what makes paired
baseline/attack runs share identical natural noise.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_part(part: object) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(str(part).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(master_seed: int, *key: object) -> np.random.Generator:
    """Return the generator for the stream named by ``key``.

    Deterministic across runs and platforms: string parts are hashed with
    sha256, never with Python's salted ``hash``.
    """
    spawn = tuple(_key_part(k) for k in key)
    seq = np.random.SeedSequence(int(master_seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=spawn)
    return np.random.default_rng(seq)
