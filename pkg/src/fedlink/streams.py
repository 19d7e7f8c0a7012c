"""Reproducible parallel random streams built on the Philox counter-based
generator.

Stream addressing scheme: every consumer derives its generator from the run
seed plus a fixed integer path,

    (seed; replication, round, purpose)

fed to numpy's SeedSequence as entropy and spawn key.  Purposes: 0 selects
the round's participant draw, 1 drives everything inside the transmission
round (quantization randomness, outage coin flips, fading, receiver noise),
and 2 covers data synthesis.  Because each (path -> stream) mapping is
independent of execution order, serial and parallel runs of the same
experiment consume identical randomness.
"""

from __future__ import annotations

import numpy as np

PURPOSE_SAMPLING = 0
PURPOSE_ROUND = 1
PURPOSE_DATA = 2


def substream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the given address, disjoint from every other address."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def round_streams(
    seed: int, replication: int, round_index: int
) -> tuple[np.random.Generator, np.random.Generator]:
    """(participant-draw stream, transmission stream) for one round."""
    return (
        substream(seed, replication, round_index, PURPOSE_SAMPLING),
        substream(seed, replication, round_index, PURPOSE_ROUND),
    )
