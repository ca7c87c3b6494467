"""Seeded random streams.

Every run owns one ``SeedSequence(seed)``. Named child streams are spawned
from it with the crc32 of the stream name as extra entropy, so draws for
different names never overlap and do not depend on call order.
"""
import zlib

import numpy as np


def named_stream(seed: int, name: str) -> np.random.Generator:
    tag = zlib.crc32(name.encode("utf-8"))
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(tag,))
    return np.random.Generator(np.random.PCG64(seq))
