"""Shared numeric types, seeded randomness and mismatch-instance sampling.

All analog behavior in this package is expressed as edge timestamps: plain
floats in seconds (double precision comfortably resolves sub-ps steps against
ns-scale windows).  Instants are absolute times, Durations are differences;
both are ordinary floats so arithmetic is closed by construction.

Randomness comes in two flavors:

* keyed draws -- value i is a pure function of (seed, i), implemented with a
  SplitMix64-style mixer plus the inverse normal CDF.  Used for everything
  that must be reproducible per instance index (tap delays, path skews, V2T
  parameters, clock jitter), independent of how many instances exist or in
  which order they are evaluated.
* stream draws -- numpy Generators over SeedSequence sub-streams, for bulk
  order-dependent sampling (stimulus phases, Monte Carlo case generation).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

Instant = float
Duration = float

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# Clamp floor for mismatch draws that parameterize a physical delay.
CLAMP_FLOOR = 0.05


def _finalize(x: np.ndarray) -> np.ndarray:
    """SplitMix64 output function (vectorized over uint64, wraparound intended)."""
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = (x ^ (x >> np.uint64(30))) * _MIX1
        x = (x ^ (x >> np.uint64(27))) * _MIX2
    return x ^ (x >> np.uint64(31))


def derive_seed(master_seed: int, label: str, index: int = 0) -> int:
    """Derive a component sub-stream seed keyed by (label, index).

    Monte Carlo reproducibility must not depend on evaluation order, so every
    component derives its own seed from the master seed instead of consuming
    a shared stream.
    """
    with np.errstate(over="ignore"):
        h = _finalize(np.uint64(master_seed % (1 << 64)) + _GOLDEN)
        h = _finalize(h ^ np.uint64(zlib.crc32(label.encode())))
        h = _finalize(h + np.uint64(index % (1 << 64)) * _GOLDEN)
    return int(h)


def keyed_u64(seed: int, indices) -> np.ndarray:
    """i-th output of a SplitMix64 sequence keyed by ``seed``.

    Negative indices are allowed (clock edges before the origin); they wrap
    modulo 2^64, which keeps the mapping injective over any practical range.
    """
    idx = np.asarray(indices, dtype=np.int64).astype(np.uint64)
    with np.errstate(over="ignore"):
        return _finalize(np.uint64(seed % (1 << 64)) + (idx + np.uint64(1)) * _GOLDEN)


def keyed_uniform(seed: int, indices) -> np.ndarray:
    """Uniforms in (0, 1), one per index, pure function of (seed, index)."""
    bits = keyed_u64(seed, indices) >> np.uint64(11)
    return bits.astype(np.float64) * 2.0**-53 + 2.0**-54


def keyed_normal(seed: int, indices) -> np.ndarray:
    """Standard normals, one per index, pure function of (seed, index)."""
    return ndtri(keyed_uniform(seed, indices))


def substream(master_seed: int, label: str, index: int = 0) -> np.random.Generator:
    """Order-dependent generator on an independent sub-stream."""
    entropy = [int(master_seed) % (1 << 64), zlib.crc32(label.encode()), int(index)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


@dataclass(frozen=True)
class MismatchModel:
    """Statistical description of per-instance deviations.

    ``sample(count)`` yields one draw per instance index; identical
    (model, index) always yields the identical value and the draws for the
    first ``n`` instances do not depend on ``count``.

    Draws whose nominal is positive parameterize a physical quantity and are
    clamped to ``CLAMP_FLOOR * nominal`` so a wide sigma can never produce a
    non-positive delay.
    """

    nominal: float
    sigma_rel: float
    distribution: str = "gaussian"
    seed: int = 0

    def __post_init__(self):
        if self.sigma_rel < 0:
            raise ValueError(f"sigma_rel must be >= 0, got {self.sigma_rel}")
        if self.distribution not in ("gaussian", "uniform"):
            raise ValueError(f"unknown distribution {self.distribution!r}")

    def sample(self, count: int) -> np.ndarray:
        if count < 1:
            raise ValueError("count must be >= 1")
        return self.sample_at(np.arange(count))

    def sample_at(self, indices) -> np.ndarray:
        indices = np.asarray(indices)
        sigma = self.sigma_rel * self.nominal
        if self.distribution == "gaussian":
            dev = keyed_normal(self.seed, indices) * sigma
        else:
            # Uniform with the requested standard deviation.
            half_width = np.sqrt(3.0) * sigma
            dev = (keyed_uniform(self.seed, indices) * 2.0 - 1.0) * half_width
        values = self.nominal + dev
        if self.nominal > 0:
            values = np.maximum(values, CLAMP_FLOOR * self.nominal)
        return values


def sample_mismatch(model: MismatchModel, count: int) -> np.ndarray:
    """Draw ``count`` per-instance samples from a mismatch model."""
    return model.sample(count)


@dataclass(frozen=True)
class ClockSpec:
    """Periodic edge source; edge k is phase0 + k*period + jitter_k.

    Jitter draws are keyed by the absolute edge index so the edges produced
    for overlapping windows agree sample-for-sample.
    """

    period: Duration
    phase0: Instant = 0.0
    jitter_sigma: Duration = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError(f"clock period must be > 0, got {self.period}")
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")


def clock_edges(spec: ClockSpec, t_start: Instant, t_end: Instant) -> np.ndarray:
    """Nominal edges in [t_start, t_end), jitter added per edge.

    Window membership is decided on nominal edge times with a guard of
    1e-9 * period so that edges lying exactly on a window boundary resolve
    deterministically despite float rounding.
    """
    if t_start > t_end:
        raise ValueError("t_start must be <= t_end")
    guard = 1e-9 * spec.period
    k0 = int(np.ceil((t_start - spec.phase0 - guard) / spec.period))
    k1 = int(np.floor((t_end - spec.phase0 - guard) / spec.period))
    if k1 < k0:
        return np.empty(0, dtype=np.float64)
    k = np.arange(k0, k1 + 1)
    times = spec.phase0 + k * spec.period
    if spec.jitter_sigma > 0:
        times = times + keyed_normal(spec.seed, k) * spec.jitter_sigma
    return times


def clock_edge_at(spec: ClockSpec, k: int) -> Instant:
    """Time of edge k (jitter included, keyed by the edge index)."""
    t = spec.phase0 + k * spec.period
    if spec.jitter_sigma > 0:
        t = t + float(keyed_normal(spec.seed, k)) * spec.jitter_sigma
    return t
