"""Seeded Gaussian perturbation engine.

Noise is generated from a counter-based stream keyed by (seed, sample index,
coordinate index), so the value of any single perturbation never depends on
evaluation order, chunking, or thread scheduling.  Gaussians come out of the
stream through the package's own inverse-CDF transform, which keeps the bits
identical across platforms.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .models import batch_evaluate, evaluate  # noqa: F401  (re-exported with smooth_eval)
from .region import AcceptRegion
from .specfun import std_normal_quantile

__all__ = [
    "NoiseConfig",
    "SmoothedEval",
    "counter_normals",
    "counter_uniforms",
    "derive_seed",
    "draw_noise",
    "smooth_eval",
]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def derive_seed(*parts) -> int:
    """Stable 64-bit sub-seed from an arbitrary tuple of ints/strings."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(repr(part).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def counter_uniforms(seed: int, start: int, count: int) -> np.ndarray:
    """Uniforms in the open interval (0, 1) at absolute stream positions.

    Position k is a pure function of (seed, k): the SplitMix64 finalizer
    applied to seed + (k + 1) * golden gamma.
    """
    if count < 0 or start < 0:
        raise DomainError("stream positions must be non-negative")
    idx = np.arange(start, start + count, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (np.uint64(seed & int(_U64)) + (idx + np.uint64(1)) * _GOLDEN) & _U64
        w = _mix64(z)
    return ((w >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def counter_normals(seed: int, start: int, count: int) -> np.ndarray:
    """Standard normal variates from the counter stream via the inverse CDF."""
    if count == 0:
        return np.empty(0)
    return std_normal_quantile(counter_uniforms(seed, start, count))


@dataclass(frozen=True)
class NoiseConfig:
    """Isotropic Gaussian input noise: standard deviation, budget, stream seed."""

    sigma: float
    n: int
    seed: int = 0

    def __post_init__(self):
        if not (float(self.sigma) > 0.0 and np.isfinite(self.sigma)):
            raise DomainError("sigma must be a positive finite real")
        if int(self.n) < 1:
            raise DomainError("sample budget n must be >= 1")
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "seed", int(self.seed) & int(_U64))


@dataclass(frozen=True)
class SmoothedEval:
    """Sample mean, unbiased sample covariance, and per-output acceptance counts."""

    mean: np.ndarray
    covariance: np.ndarray
    accept_counts: np.ndarray
    n: int

    @property
    def cov_degenerate(self) -> bool:
        """True when n = 1: the n - 1 divisor is undefined and covariance is
        fixed to zero, which is insufficient for any asymptotic statement."""
        return self.n == 1


def draw_noise(cfg: NoiseConfig, index: int, dim: int) -> np.ndarray:
    """The index-th perturbation vector of the stream, independent of order."""
    if not 0 <= index < cfg.n:
        raise DomainError(f"index must lie in [0, {cfg.n})")
    if dim < 1:
        raise DomainError("dim must be >= 1")
    return cfg.sigma * counter_normals(cfg.seed, index * dim, dim)


def noise_block(cfg: NoiseConfig, dim: int) -> np.ndarray:
    """All cfg.n perturbations as an (n, dim) array; row i equals draw_noise(cfg, i)."""
    flat = counter_normals(cfg.seed, 0, cfg.n * dim)
    return cfg.sigma * flat.reshape(cfg.n, dim)


def smooth_eval(model, x: np.ndarray, cfg: NoiseConfig, region: AcceptRegion) -> SmoothedEval:
    """Evaluate the model on cfg.n perturbed copies of x and reduce.

    The reduction (mean, unbiased covariance, acceptance counts) runs over
    the counter-ordered output array, so results are bit-identical however
    the evaluations were scheduled.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    noise = noise_block(cfg, x.shape[0])
    outputs = np.asarray(batch_evaluate(model, x[None, :] + noise), dtype=float)
    if outputs.shape[-1] != region.t:
        raise DomainError("model output dimension does not match the region")
    mean = outputs.mean(axis=0)
    if cfg.n == 1:
        cov = np.zeros((region.t, region.t))
    else:
        centered = outputs - mean
        cov = centered.T @ centered / (cfg.n - 1)
    counts = region.accept_matrix(outputs).sum(axis=0).astype(np.int64)
    return SmoothedEval(mean=mean, covariance=cov, accept_counts=counts, n=cfg.n)
