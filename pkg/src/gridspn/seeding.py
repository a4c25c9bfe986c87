"""Named RNG substreams so unrelated features never perturb each other's draws."""

import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Derive an independent generator from a master seed and a stream name.

    The name is hashed with crc32 (stable across runs and platforms), so
    adding a new named stream leaves every existing stream's draws intact.
    """
    tag = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, tag]))
