"""Named random substreams derived from a single integer seed.

Each concern (motion, occlusion, tracking, ...) draws from its own generator,
so extra draws in one concern never shift another.
"""
import zlib

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    key = zlib.crc32(name.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(key,))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, name: str) -> int:
    """A child integer seed, e.g. for the training scenarios of a run."""
    return int(stream(seed, "derive:" + name).integers(0, 2**31 - 1))
