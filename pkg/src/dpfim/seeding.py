"""Deterministic random streams, one named substream per pipeline stage.

Every source of randomness in a run is derived from a single master seed
plus a stable stream name (``"noise"``, ``"splits"``, ...). Changing how
one stage consumes randomness therefore never perturbs any other stage,
and a (master seed, name) pair always yields the same generator on every
platform.
"""

from __future__ import annotations

import hashlib

import numpy as np

# Streams used by the pipeline. Not enforced, but keeping them in one
# place makes collisions easy to spot.
KNOWN_STREAMS = (
    "synth-corpus",
    "splits",
    "fim-cuts",
    "duplicates",
    "pretrain-init",
    "adapter-init",
    "pretrain-shuffle",
    "baseline-shuffle",
    "sampling",
    "noise",
    "attack-balance",
)


def stream_key(name: str) -> int:
    """Stable 64-bit key for a stream name (independent of PYTHONHASHSEED)."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def seed_sequence(master_seed: int, name: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master_seed), stream_key(name)])


def rng_for(master_seed: int, name: str) -> np.random.Generator:
    """PCG64 generator for the named substream of a master seed."""
    return np.random.Generator(np.random.PCG64(seed_sequence(master_seed, name)))


def rng_state(rng: np.random.Generator) -> dict:
    """JSON-serializable bit generator state (for checkpoints)."""
    return rng.bit_generator.state


def rng_from_state(state: dict) -> np.random.Generator:
    if state["bit_generator"] != "PCG64":
        raise ValueError(f"unsupported bit generator {state['bit_generator']!r}")
    bg = np.random.PCG64()
    bg.state = state
    return np.random.Generator(bg)
