"""Seeded counter-based random streams.

Every draw comes from a Philox generator keyed by ``(seed, key)``, where
``key`` is a tuple of small integers naming the purpose of the draw:

* ``(0, rx, tx)`` channel from physical transmitter ``tx`` to receiver ``rx``
* ``(1,)`` link weights
* ``(2, attempt)`` random restart points of the iterative algorithms
* ``(3, point, start)`` extra starting points of rate-region sweeps

so any single stream can be regenerated without replaying the others.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream", "complex_gaussian", "random_psd"]


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-variance circular complex Gaussian entries (two N(0, 1/2) parts)."""
    parts = rng.standard_normal((2, *shape))
    return (parts[0] + 1j * parts[1]) * np.sqrt(0.5)


def random_psd(rng: np.random.Generator, dims, total: float) -> list[np.ndarray]:
    """Random full-rank PSD matrices, one per entry of ``dims``, with summed trace ``total``."""
    mats = []
    for n in dims:
        a = complex_gaussian(rng, (n, n))
        mats.append(a @ a.conj().T)
    tr = sum(float(np.real(np.trace(m))) for m in mats)
    return [m * (total / tr) for m in mats]
