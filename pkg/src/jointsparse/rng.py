"""Deterministic random-stream derivation.

All randomness in the package flows through :func:`substream`: a master
seed plus a purpose string (and an optional index) map to an independent
Philox counter-based generator. Streams do not depend on execution order
or thread layout, so serial and parallel runs of the same configuration
draw identical numbers.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def purpose_tag(purpose: str) -> int:
    """Stable 64-bit tag for a purpose string."""
    digest = hashlib.sha256(purpose.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(master_seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """Generator for the (master_seed, purpose, index) substream.

    Parameters
    ----------
    master_seed : int
        Experiment-level seed (any non-negative integer).
    purpose : str
        Names what the stream is used for, e.g. ``"synthesize"`` or
        ``"learn-batch"``. Distinct purposes give independent streams.
    index : int, optional
        Distinguishes repeated uses of one purpose (trial index,
        iteration number, ...).
    """
    if master_seed < 0:
        raise ValueError("master_seed must be non-negative")
    seq = np.random.SeedSequence(
        entropy=[int(master_seed) & _MASK64, purpose_tag(purpose), int(index) & _MASK64]
    )
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(master_seed: int, purpose: str, index: int = 0) -> int:
    """Plain integer seed derived from (master_seed, purpose, index).

    For functions that take a seed rather than a generator; the same
    derivation guarantees as :func:`substream` apply.
    """
    digest = hashlib.sha256(
        f"{int(master_seed)}|{purpose}|{int(index)}".encode("utf-8")
    ).digest()
    return int.from_bytes(digest[:8], "little") >> 1
