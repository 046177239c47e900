"""Keyed random streams.

Every stream is addressed by a master seed plus a tuple of integer keys
(iteration, particle, purpose, ...). Streams with distinct keys are
statistically independent, and a stream's output does not depend on the
order in which streams are created, so per-particle work is reproducible
under any parallel schedule.
"""
import numpy as np

# purpose tags used as the last key component
PROPOSE = 1
SIMULATE = 2
RESAMPLE = 3
INIT = 4
CHAIN = 5
DATA = 6
PILOT = 7
TRUTH = 8
REPLICATE = 9


def stream(seed, *keys):
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng):
    """Accept a Generator, an int seed, or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
