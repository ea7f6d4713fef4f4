"""Deterministic, order-independent random-stream derivation.

Every random draw in the package flows from a named seed path such as
``(master_seed, scenario_id, rep_index, "latent")``.  Paths are hashed into
a ``SeedSequence`` so that two runs with the same master seed produce
bit-identical streams regardless of scheduling or thread count.
"""

import hashlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def seed_for(*path) -> np.random.SeedSequence:
    """Map a path of ints/strings to a reproducible SeedSequence."""
    return np.random.SeedSequence([_key_to_int(k) for k in path])


def make_rng(*path) -> np.random.Generator:
    """Generator seeded from the hashed path; independent per distinct path."""
    return np.random.default_rng(seed_for(*path))
