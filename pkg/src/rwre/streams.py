"""Counter-based substreams for reproducible parallel replication.

A stream is addressed by ``(master_seed, replicate_id, phase)``; numpy's
``SeedSequence`` hashes the triple so that different phases of one replicate,
and different replicates, never share state. Results therefore do not depend
on how replicates are scheduled over workers.
"""

from __future__ import annotations

import numpy as np

PHASES = {
    "env_right": 0,
    "env_left": 1,
    "walk": 2,
    "optimizer": 3,
    "chain": 4,
}


def substream(master_seed: int, replicate_id: int = 0, phase: str = "walk", extra: int = 0) -> np.random.Generator:
    """Generator for one ``(replicate, phase)`` cell of a run.

    ``extra`` distinguishes further independent draws inside one phase, e.g.
    one walk per checkpoint when checkpoints are not nested.
    """
    if master_seed < 0 or master_seed >= 2**64:
        raise ValueError(f"master seed must be an unsigned 64-bit integer, got {master_seed}")
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(replicate_id, PHASES[phase], extra))
    return np.random.Generator(np.random.PCG64(seq))
