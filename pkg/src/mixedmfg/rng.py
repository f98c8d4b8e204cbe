"""Reproducible Gaussian streams.

Every Monte Carlo replication owns an independent Philox stream keyed by
``(master_seed, run_index)``, so a run's draws never depend on how many other
runs exist or in which order they are executed.  Normals come from the
Box-Muller transform of the stream's uniforms.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def run_generator(seed: int, run: int) -> np.random.Generator:
    key = np.array([int(seed) & _MASK64, int(run) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def box_muller(gen: np.random.Generator, shape) -> np.ndarray:
    """Standard normals of ``shape``; the last axis is filled in cos/sin pairs."""
    shape = tuple(np.atleast_1d(shape))
    n = shape[-1]
    m = (n + 1) // 2
    u = gen.random(shape[:-1] + (2, m))
    radius = np.sqrt(-2.0 * np.log1p(-u[..., 0, :]))  # 1 - u in (0, 1]
    angle = 2.0 * np.pi * u[..., 1, :]
    z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)], axis=-1)
    return z[..., :n]
