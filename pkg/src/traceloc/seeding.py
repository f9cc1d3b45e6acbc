"""Deterministic seed derivation.

Every random stream in the pipeline is derived from a user seed plus a
context tag, so any unit of work (one trace, one training stage) can be
reproduced in isolation and in parallel. Python's builtin ``hash`` is
process-salted, so derivation goes through SHA-256.
"""

import hashlib

import numpy as np


def stable_seed(*parts) -> int:
    """Hash integer/string parts into a 64-bit seed, stably across runs."""
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, (bool, float)):
            raise TypeError(f"seed parts must be int or str, got {type(part).__name__}")
        if isinstance(part, (int, np.integer)):
            h.update(b"i")
            h.update(int(part).to_bytes(16, "little", signed=True))
        elif isinstance(part, str):
            raw = part.encode("utf-8")
            h.update(b"s")
            h.update(len(raw).to_bytes(4, "little"))
            h.update(raw)
        else:
            raise TypeError(f"seed parts must be int or str, got {type(part).__name__}")
    return int.from_bytes(h.digest()[:8], "little")


def rng_from(*parts) -> np.random.Generator:
    """Independent numpy generator for the stream named by ``parts``."""
    return np.random.default_rng(stable_seed(*parts))
