"""Named, independent random streams.

Every consumer of randomness (holdout split, parameter init, training
samplers, the Random baseline, ...) draws from its own Philox stream keyed
by ``(master seed, stream id, *extra)``, so changing how much one consumer
draws never perturbs another.
"""

from __future__ import annotations

import numpy as np

STREAMS = {
    "split": 1,
    "init": 2,
    "train": 3,
    "random": 4,
    "search": 5,
}


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Return a counter-based generator for stream ``name``."""
    try:
        sid = STREAMS[name]
    except KeyError:
        raise ValueError(f"unknown random stream {name!r}") from None
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF, sid, *(int(e) for e in extra)]
    key = np.random.SeedSequence(words).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
