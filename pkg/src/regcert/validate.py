"""Empirical verification of certificates.

The attack surrogate is random sampling on the perturbation sphere, never a
gradient attack: the certificates quantify over all perturbations, so random
probing can only under-detect violations.  Reports therefore state a
statistical pass criterion with explicit Monte Carlo slack instead of a raw
frequency comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .models import batch_evaluate, open_model
from .region import AcceptRegion
from .sampling import NoiseConfig, counter_normals, derive_seed, noise_block, smooth_eval

__all__ = [
    "ErrorCurves",
    "PointValidation",
    "ValidationReport",
    "ValidationSpec",
    "certified_error_curve",
    "empirical_accept_prob",
    "pass_threshold",
    "sample_boundary_delta",
    "validate_point",
]

POLICY_AT_CERTIFICATE = "at-certificate"
POLICY_FRACTION = "fraction-of-certificate"
POLICY_FIXED = "fixed"
_POLICIES = (POLICY_AT_CERTIFICATE, POLICY_FRACTION, POLICY_FIXED)


@dataclass(frozen=True)
class ValidationSpec:
    """Probe counts, radius policy, and error-curve settings."""

    trials: int = 20
    directions: int = 20
    radius_policy: str = POLICY_AT_CERTIFICATE
    policy_value: float | None = None
    penalty_k: float = 150.0
    radius_grid: tuple[float, ...] = ()

    def __post_init__(self):
        if int(self.trials) < 1 or int(self.directions) < 1:
            raise DomainError("trials and directions must be >= 1")
        if self.radius_policy not in _POLICIES:
            raise DomainError(f"unknown radius policy {self.radius_policy!r}")
        if self.radius_policy == POLICY_FRACTION:
            if self.policy_value is None or not 0.0 < float(self.policy_value) <= 1.0:
                raise DomainError("fraction-of-certificate needs a value in (0, 1]")
        if self.radius_policy == POLICY_FIXED:
            if self.policy_value is None or float(self.policy_value) < 0.0:
                raise DomainError("fixed radius policy needs a value >= 0")
        if float(self.penalty_k) <= 0.0:
            raise DomainError("penalty_k must be positive")
        object.__setattr__(self, "trials", int(self.trials))
        object.__setattr__(self, "directions", int(self.directions))
        object.__setattr__(self, "penalty_k", float(self.penalty_k))
        object.__setattr__(self, "radius_grid",
                           tuple(float(r) for r in self.radius_grid))

    def probe_radius(self, cert_radius: float) -> float:
        if self.radius_policy == POLICY_AT_CERTIFICATE:
            return float(cert_radius)
        if self.radius_policy == POLICY_FRACTION:
            return float(self.policy_value) * float(cert_radius)
        return float(self.policy_value)


def pass_threshold(target_p: float, trials: int) -> float:
    """Target probability minus three binomial standard errors."""
    return target_p - 3.0 * math.sqrt(target_p * (1.0 - target_p) / trials)


def sample_boundary_delta(d: int, radius: float, seed: int, index: int) -> np.ndarray:
    """Uniform draw on the sphere of the given radius (the worst-case shell)."""
    if radius < 0.0:
        raise DomainError("radius must be >= 0")
    if d < 1:
        raise DomainError("d must be >= 1")
    if radius == 0.0:
        return np.zeros(d)
    g = counter_normals(seed, index * d, d)
    norm = float(np.linalg.norm(g))
    if norm == 0.0:  # unreachable in practice; keeps the contract total
        g = np.eye(d)[0]
        norm = 1.0
    return g * (radius / norm)


def empirical_accept_prob(model, x, region: AcceptRegion, noise: NoiseConfig,
                          delta, trials: int, mode: str = "base",
                          seed: int | None = None) -> float:
    """Fraction of trials whose output at x + delta falls in the region.

    In base mode each trial is one noisy evaluation f(x + delta + e); in
    smoothed mode each trial re-runs the n-sample average with a fresh
    sub-seed.  Returns the minimum per-output frequency, matching the
    min-over-outputs form of the robustness target.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    if delta.shape != x.shape:
        raise DomainError("delta must match the input dimension")
    if trials < 1:
        raise DomainError("trials must be >= 1")
    if seed is None:
        seed = derive_seed(noise.seed, "empirical")
    handle = open_model(model)
    owned = handle is not model
    try:
        if mode == "base":
            d = x.shape[0]
            e = noise.sigma * counter_normals(seed, 0, trials * d).reshape(trials, d)
            outs = np.asarray(batch_evaluate(handle, (x + delta)[None, :] + e))
            accept = region.accept_matrix(outs)
        elif mode == "smoothed":
            rows = []
            for k in range(trials):
                sub = NoiseConfig(noise.sigma, noise.n, derive_seed(seed, "trial", k))
                ev = smooth_eval(handle, x + delta, sub, region)
                rows.append(region.accept_matrix(ev.mean))
            accept = np.stack(rows)
        else:
            raise DomainError(f"unknown empirical mode {mode!r}")
    finally:
        if owned:
            handle.close()
    return float(accept.mean(axis=0).min())


@dataclass(frozen=True)
class PointValidation:
    index: int
    x: np.ndarray
    mode: str
    cert_radius: float
    probe_radius: float
    directions: int
    trials: int
    frequencies: np.ndarray
    min_frequency: float
    threshold: float
    passed: bool
    seed: int


def validate_point(model, x, region: AcceptRegion, noise: NoiseConfig,
                   cert_radius: float, target_p: float, vspec: ValidationSpec,
                   mode: str, seed: int, index: int = 0) -> PointValidation:
    """Probe one certified point: worst of m sphere directions, each with a
    fresh trial block, against the 3-sigma slack-adjusted target."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    probe = vspec.probe_radius(cert_radius)
    handle = open_model(model)
    owned = handle is not model
    try:
        freqs = np.empty(vspec.directions)
        for j in range(vspec.directions):
            delta = sample_boundary_delta(x.shape[0], probe, derive_seed(seed, "delta"), j)
            freqs[j] = empirical_accept_prob(
                handle, x, region, noise, delta, vspec.trials, mode=mode,
                seed=derive_seed(seed, "trials", j))
    finally:
        if owned:
            handle.close()
    threshold = pass_threshold(target_p, vspec.trials)
    min_freq = float(freqs.min())
    return PointValidation(
        index=index, x=x, mode=mode, cert_radius=float(cert_radius),
        probe_radius=probe, directions=vspec.directions, trials=vspec.trials,
        frequencies=freqs, min_frequency=min_freq, threshold=threshold,
        passed=min_freq >= threshold, seed=seed)


@dataclass(frozen=True)
class ErrorCurves:
    """Per-radius penalized error aggregated across points."""

    radii: np.ndarray
    median: np.ndarray
    mean: np.ndarray
    per_point: np.ndarray  # shape (num_points, num_radii)


@dataclass(frozen=True)
class ValidationReport:
    points: tuple[PointValidation, ...]
    curves: ErrorCurves | None
    target_p: float
    seed: int

    @property
    def all_passed(self) -> bool:
        return all(p.passed for p in self.points)


def _smoothed_error(handle, x, truth, sigma, n, seed) -> float:
    cfg = NoiseConfig(sigma, n, seed)
    outs = np.asarray(batch_evaluate(handle, x[None, :] + noise_block(cfg, x.shape[0])))
    return float(np.linalg.norm(outs.mean(axis=0) - truth))


def certified_error_curve(model, points_with_truth, certs, vspec: ValidationSpec,
                          seed: int = 0) -> ValidationReport:
    """Penalized error e_K over a radius grid.

    For each point and grid radius r, the error is the worst l2 deviation of
    the smoothed output from the ground truth over all sampled perturbations
    of norm <= r (shells accumulate, so the candidate sets nest and every
    per-point curve is non-decreasing), plus K once r exceeds the certified
    radius.  Abstained certificates count as radius 0.
    """
    if not vspec.radius_grid:
        raise DomainError("error curves need a non-empty radius grid")
    points = list(points_with_truth)
    certs = list(certs)
    if len(points) != len(certs):
        raise DomainError("one certificate per point is required")
    grid = np.array(sorted(vspec.radius_grid))
    per_point = np.empty((len(points), grid.size))
    handle = open_model(model)
    owned = handle is not model
    try:
        for p_idx, ((x, truth), cert) in enumerate(zip(points, certs)):
            x = np.atleast_1d(np.asarray(x, dtype=float))
            truth = np.atleast_1d(np.asarray(truth, dtype=float))
            eps_x = 0.0 if cert.abstain else cert.radius
            base_seed = derive_seed(seed, "curve", p_idx)
            worst = _smoothed_error(handle, x, truth, cert.sigma, cert.n,
                                    derive_seed(base_seed, "center"))
            for s_idx, r in enumerate(grid):
                if r > 0.0:
                    dseed = derive_seed(base_seed, "shell", s_idx)
                    for j in range(vspec.directions):
                        delta = sample_boundary_delta(x.shape[0], float(r), dseed, j)
                        err = _smoothed_error(
                            handle, x + delta, truth, cert.sigma, cert.n,
                            derive_seed(base_seed, "eval", s_idx, j))
                        worst = max(worst, err)
                penalty = vspec.penalty_k if r > eps_x else 0.0
                per_point[p_idx, s_idx] = worst + penalty
    finally:
        if owned:
            handle.close()
    curves = ErrorCurves(
        radii=grid,
        median=np.median(per_point, axis=0),
        mean=per_point.mean(axis=0),
        per_point=per_point,
    )
    return ValidationReport(points=(), curves=curves, target_p=float("nan"), seed=seed)
