"""Derives named sub-seeds from the single run seed."""

import hashlib

SEED_MASK = (1 << 64) - 1


def derive_seed(run_seed: int, name: str) -> int:
    """
    Derive a stable 63-bit seed for a named consumer of randomness, e.g.
    "index.hnsw" or "embedder.hash".
    Args:
        run_seed (int): The run seed.
        name (str): Consumer name.

    Returns:
        int: A non-negative seed.
    """
    key = f"{run_seed & SEED_MASK}:{name}".encode("utf-8")
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1
