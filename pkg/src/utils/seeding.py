"""
Random streams of a run.

Each concern draws from its own child of SeedSequence(seed), so changing how
many numbers one concern consumes never shifts another's stream.
"""
import numpy as np


CONCERNS = ("classes", "init", "head", "shuffle", "episodes")


def rng_for(seed: int, concern: str) -> np.random.Generator:
    """Generator for one concern of the run seeded with `seed`."""
    if concern not in CONCERNS:
        raise ValueError(f"Unknown random stream '{concern}', expected one of {CONCERNS}")
    children = np.random.SeedSequence(seed).spawn(len(CONCERNS))
    return np.random.default_rng(children[CONCERNS.index(concern)])
