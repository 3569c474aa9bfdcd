"""Deterministic derivation of per-stage RNG seeds from a master seed.

Every stochastic stage (data synthesis, class split, episode draw, GAN
init/training, candidate pool, classifier) gets its own stream seed derived
from the master seed plus a string tag, so changing one stage's behaviour
never perturbs the randomness of the others.

The rule: join ``str(part)`` for every part with ``/``, hash with BLAKE2b
(8-byte digest), interpret little-endian, and mask to 63 bits so the result
is a valid seed for both ``numpy.random.default_rng`` and
``torch.Generator.manual_seed``.
"""

import hashlib

import numpy as np

_MASK = (1 << 63) - 1


def derive_seed(*parts) -> int:
    """Derive a 63-bit stream seed from a tuple of ints/strings."""
    if not parts:
        raise ValueError("derive_seed needs at least one part")
    key = "/".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(digest, "little") & _MASK


def rng_for(*parts) -> np.random.Generator:
    """numpy Generator seeded via the derivation rule."""
    return np.random.default_rng(derive_seed(*parts))
