"""Named random streams derived from one master seed."""
import zlib

import numpy as np


def stream(seed: int, label: str) -> np.random.Generator:
    """Independent generator for one concern (env generation, sampling, net init...)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(label.encode())]))
