import zlib

import numpy as np


def _key(k) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode())
    return int(k)


def rng_for(seed: int, *keys) -> np.random.Generator:
    """Independent generator for a (seed, purpose, ...) tuple, stable across processes."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *(_key(k) for k in keys)]))


def seed_for(seed: int, *keys) -> int:
    return int(np.random.SeedSequence([int(seed), *(_key(k) for k in keys)]).generate_state(1)[0])
