"""Certificate computations for base and smoothed regressors.

Three certificate modes are offered:

* ``base``: a radius for the noise-perturbed base regressor from per-output
  acceptance lower bounds and the Gaussian quantile difference.
* ``smoothed-asymptotic``: a radius for the averaging regressor on bounded
  outputs, assuming the conditional mean drifts at most tau from the clean
  prediction; the required base acceptance is recovered by inverting the
  incomplete-beta lower bound.
* ``smoothed-discounted``: the finite-sample variant where the user widens
  the accepted region by a factor beta instead of assuming a drift bound.

ABSTAIN is a first-class outcome: whenever the minimum per-output radius is
non-positive the certificate abstains rather than reporting a radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, UndefinedBoundError
from .estimation import ConfidenceSpec, estimate_pa
from .models import OutputBounds, evaluate, open_model
from .region import DISS_ABS_DIFF, AcceptRegion
from .sampling import NoiseConfig, SmoothedEval, smooth_eval
from .specfun import (GaussianRect, RectProbability, gaussian_rect_prob,
                      reg_inc_beta, reg_inc_beta_inv, std_normal_quantile)

__all__ = [
    "CertRequest",
    "Certificate",
    "MODE_BASE",
    "MODE_SMOOTHED_ASYMPTOTIC",
    "MODE_SMOOTHED_DISCOUNTED",
    "MODES",
    "asymptotic_accept_prob",
    "base_radius",
    "bounded_lower_bound",
    "certify_point",
    "discounted_lower_bound",
    "discounted_region",
    "smoothed_radius_via_inversion",
]

MODE_BASE = "base"
MODE_SMOOTHED_ASYMPTOTIC = "smoothed-asymptotic"
MODE_SMOOTHED_DISCOUNTED = "smoothed-discounted"
MODES = (MODE_BASE, MODE_SMOOTHED_ASYMPTOTIC, MODE_SMOOTHED_DISCOUNTED)

ABSTAIN = "ABSTAIN"


@dataclass(frozen=True)
class CertRequest:
    """Everything needed to certify one evaluation point."""

    x: np.ndarray
    region: AcceptRegion
    noise: NoiseConfig
    target_p: float
    conf: ConfidenceSpec
    bounds: OutputBounds | None = None
    tau: float = 0.0
    beta: float = 0.0
    mode: str = MODE_BASE

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if self.mode not in MODES:
            raise DomainError(f"unknown mode {self.mode!r}")
        p = float(self.target_p)
        if not 0.0 < p < 1.0:
            raise DomainError("target_p must lie in (0, 1)")
        if float(self.tau) < 0.0 or float(self.beta) < 0.0:
            raise DomainError("tau and beta must be non-negative")
        bounds = self.bounds
        if self.mode != MODE_BASE:
            if self.region.diss != DISS_ABS_DIFF:
                raise DomainError("bounded-output modes require interval (abs-diff) regions")
            if bounds is None:
                raise DomainError(f"mode {self.mode} requires output bounds")
            bounds = bounds.broadcast(self.region.t)
            lo, hi = bounds.lower, bounds.upper
            for i in range(self.region.t):
                if not (lo[i] <= self.region.l_b[i] <= self.region.u_b[i] <= hi[i]):
                    raise DomainError(
                        f"output {i}: accepted region [{self.region.l_b[i]}, "
                        f"{self.region.u_b[i]}] not inside bounds [{lo[i]}, {hi[i]}]")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "target_p", p)
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "bounds", bounds)


@dataclass(frozen=True)
class Certificate:
    """Certified radius plus every number needed to reproduce it."""

    mode: str
    radius: float
    abstain: bool
    per_output_radii: np.ndarray
    pa_lower: np.ndarray
    sigma: float
    n: int
    alpha: float
    seed: int
    target_p: float
    phat: np.ndarray | None = None
    lower_bound_prob: float | None = None
    accept_counts: np.ndarray | None = None
    region_l_b: np.ndarray | None = None
    region_u_b: np.ndarray | None = None
    certified_l_b: np.ndarray | None = None
    certified_u_b: np.ndarray | None = None

    @property
    def provenance(self) -> tuple:
        return (self.seed, self.n, self.alpha, self.sigma)


def _quantile_ext(p: float) -> float:
    if p == 0.0:
        return -math.inf
    if p == 1.0:
        return math.inf
    return std_normal_quantile(p)


def _radius_one(pa: float, target: float, sigma: float) -> float:
    # Boundary cases never fabricate a radius: interior equality is the
    # abstain boundary, pa = 0 abstains outright, and pa = 1 (certain
    # acceptance) or target = 0 (vacuous requirement) leave the per-output
    # radius unbounded for the min over outputs to discard or keep.
    if pa == target:
        if pa == 1.0:
            return math.inf
        if pa == 0.0:
            return -math.inf
        return 0.0
    if pa == 0.0 or target == 1.0:
        return -math.inf
    if pa == 1.0 or target == 0.0:
        return math.inf
    return sigma * (_quantile_ext(pa) - _quantile_ext(target))


def per_output_radii(pa, targets, sigma: float) -> np.ndarray:
    """sigma * (quantile(pa_i) - quantile(target_i)) with explicit boundary rules."""
    pa = np.atleast_1d(np.asarray(pa, dtype=float))
    targets = np.broadcast_to(np.asarray(targets, dtype=float), pa.shape)
    if np.any(pa < 0.0) or np.any(pa > 1.0):
        raise DomainError("acceptance probabilities must lie in [0, 1]")
    if np.any(targets < 0.0) or np.any(targets > 1.0):
        raise DomainError("target probabilities must lie in [0, 1]")
    if not (float(sigma) > 0.0 and math.isfinite(sigma)):
        raise DomainError("sigma must be a positive finite real")
    return np.array([_radius_one(float(a), float(t), float(sigma))
                     for a, t in zip(pa, targets)])


def _finish(mode: str, radii: np.ndarray, pa: np.ndarray, noise_sigma: float,
            n: int, alpha: float, seed: int, target_p: float, **extra) -> Certificate:
    radius = float(np.min(radii))
    return Certificate(
        mode=mode,
        radius=radius,
        abstain=not radius > 0.0,
        per_output_radii=radii,
        pa_lower=np.asarray(pa, dtype=float),
        sigma=noise_sigma,
        n=n,
        alpha=alpha,
        seed=seed,
        target_p=target_p,
        **extra,
    )


def base_radius(pa, target_p: float, sigma: float,
                n: int = 0, alpha: float = float("nan"), seed: int = 0) -> Certificate:
    """Certified radius min_i sigma * (quantile(pa_i) - quantile(P)).

    Valid for the noise-perturbed base regressor; abstains whenever the
    minimum is non-positive, i.e. whenever P exceeds some pa_i.
    """
    target_p = float(target_p)
    if not 0.0 < target_p < 1.0:
        raise DomainError("target_p must lie in (0, 1)")
    radii = per_output_radii(pa, target_p, sigma)
    return _finish(MODE_BASE, radii, pa, float(sigma), n, alpha, seed, target_p)


def asymptotic_accept_prob(smoothed: SmoothedEval, region: AcceptRegion) -> RectProbability:
    """Probability that the sample average lands in the accepted region.

    The average of n outputs is treated as Normal(mean, covariance / n) with
    the estimated moments; the result is the rectangle probability of
    [l_b, u_b] under that law.  A zero covariance degenerates to the
    membership indicator of the mean, reported with the degenerate flag set.
    """
    if region.diss != DISS_ABS_DIFF:
        raise DomainError("asymptotic acceptance requires an interval region")
    if smoothed.n < 2:
        raise DomainError("asymptotic acceptance needs n >= 2 samples")
    rect = GaussianRect(lower=region.l_b, upper=region.u_b,
                        mean=smoothed.mean, covariance=smoothed.covariance)
    return gaussian_rect_prob(rect, scale=smoothed.n)


def _ceil_tol(value: float, tol: float = 1e-9) -> int:
    """Ceiling that forgives float fuzz just below an integer."""
    return int(math.ceil(value - tol * max(1.0, abs(value))))


def _bin_params_from_rho(rho: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    a = np.array([min(max(_ceil_tol(n * (1.0 - r)), 0), n) for r in rho], dtype=np.int64)
    b = np.array([min(max(_ceil_tol(n * r), 0), n) + 1 for r in rho], dtype=np.int64)
    return a, b


def bounded_bin_params(fx: np.ndarray, region: AcceptRegion, bounds: OutputBounds,
                       n: int, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Incomplete-beta arguments (a_i, b_i) for the drift-bounded certificate.

    Per output, the adverse side is chosen by literally evaluating
    (u - u_b)/(u - f - tau) >= (l - l_b)/(f - tau - l); the chosen side's
    relative acceptance slack rho then gives a = ceil(n(1 - rho)) and
    b = ceil(n rho) + 1, with ceilings clamped into [0, n].
    """
    fx = np.atleast_1d(np.asarray(fx, dtype=float))
    bounds = bounds.broadcast(region.t)
    lo, hi = bounds.lower, bounds.upper
    l_b, u_b = region.l_b, region.u_b
    tau = float(tau)
    slack = np.minimum(fx - l_b, u_b - fx)
    for i in range(region.t):
        if not 0.0 <= tau <= slack[i]:
            raise DomainError(
                f"output {i}: tau={tau} outside [0, min(f - l_b, u_b - f)] = [0, {slack[i]}]")
    with np.errstate(divide="ignore", invalid="ignore"):
        upper_ratio = (hi - u_b) / (hi - fx - tau)
        lower_ratio = (lo - l_b) / (fx - tau - lo)
        use_upper = upper_ratio >= lower_ratio
    rho = np.empty(region.t)
    for i in range(region.t):
        if use_upper[i]:
            den = hi[i] - fx[i] - tau
            num = u_b[i] - fx[i] - tau
        else:
            den = fx[i] - tau - lo[i]
            num = fx[i] - tau - l_b[i]
        if den <= 0.0:
            raise UndefinedBoundError(
                f"output {i}: degenerate geometry, bound denominator {den} <= 0")
        rho[i] = num / den
    return _bin_params_from_rho(rho, int(n))


def discounted_region(region: AcceptRegion, fx: np.ndarray,
                      beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Widened acceptance bounds (l_b - beta|l_b - f|, u_b + beta|u_b - f|)."""
    fx = np.atleast_1d(np.asarray(fx, dtype=float))
    lo = region.l_b - beta * np.abs(region.l_b - fx)
    hi = region.u_b + beta * np.abs(region.u_b - fx)
    return lo, hi


def discounted_bin_params(fx: np.ndarray, region: AcceptRegion, bounds: OutputBounds,
                          n: int, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Incomplete-beta arguments for the discounted (finite-sample) certificate.

    Requires the discounted region to stay inside the hard output bounds;
    violations name the offending coordinate.
    """
    fx = np.atleast_1d(np.asarray(fx, dtype=float))
    bounds = bounds.broadcast(region.t)
    lo, hi = bounds.lower, bounds.upper
    l_b, u_b = region.l_b, region.u_b
    beta = float(beta)
    disc_lo, disc_hi = discounted_region(region, fx, beta)
    ftol = 1e-12
    for i in range(region.t):
        if disc_lo[i] < lo[i] - ftol or disc_hi[i] > hi[i] + ftol:
            raise DomainError(
                f"output {i}: beta={beta} pushes the discounted region "
                f"[{disc_lo[i]}, {disc_hi[i]}] outside bounds [{lo[i]}, {hi[i]}]")
    with np.errstate(divide="ignore", invalid="ignore"):
        upper_ratio = np.abs(u_b - fx) / (hi - u_b)
        lower_ratio = np.abs(l_b - fx) / (l_b - lo)
        use_upper = upper_ratio <= lower_ratio
    rho = np.empty(region.t)
    for i in range(region.t):
        if use_upper[i]:
            den = hi[i] - u_b[i]
            num = beta * abs(u_b[i] - fx[i])
        else:
            den = l_b[i] - lo[i]
            num = beta * abs(l_b[i] - fx[i])
        if den <= 0.0:
            raise UndefinedBoundError(
                f"output {i}: degenerate geometry, bound denominator {den} <= 0")
        rho[i] = num / den
    return _bin_params_from_rho(rho, int(n))


def _min_beta_bound(p, a: np.ndarray, b: np.ndarray) -> float:
    p = np.broadcast_to(np.asarray(p, dtype=float), a.shape)
    return float(min(reg_inc_beta(float(pi), int(ai), int(bi))
                     for pi, ai, bi in zip(p, a, b)))


def bounded_lower_bound(fx, req: CertRequest, p) -> float:
    """Lower bound on the smoothed acceptance probability under the tau drift
    assumption: min_i I_{p_i}(a_i, b_i)."""
    a, b = bounded_bin_params(fx, req.region, req.bounds, req.noise.n, req.tau)
    return _min_beta_bound(p, a, b)


def discounted_lower_bound(fx, req: CertRequest, p) -> float:
    """Finite-sample lower bound on acceptance within the discounted region."""
    a, b = discounted_bin_params(fx, req.region, req.bounds, req.noise.n, req.beta)
    return _min_beta_bound(p, a, b)


def _invert_targets(q: float, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    phat = np.empty(a.shape)
    for i, (ai, bi) in enumerate(zip(a, b)):
        # a = 0 means that side of the region covers the whole output range,
        # so any base acceptance probability achieves the target.
        phat[i] = 0.0 if ai == 0 else reg_inc_beta_inv(q, int(ai), int(bi))
    return phat


def smoothed_radius_via_inversion(fx, req: CertRequest, pa, q: float) -> Certificate:
    """Radius for the averaging regressor: invert the acceptance bound at q to
    the required base probability phat_i, then take the quantile-difference
    radius min_i sigma * (quantile(pa_i) - quantile(phat_i)).

    q is the wanted smoothed validity probability and must exceed 1/2.
    """
    q = float(q)
    if not 0.5 < q <= 1.0:
        raise DomainError("inversion is stated for probabilities in (1/2, 1]")
    fx = np.atleast_1d(np.asarray(fx, dtype=float))
    pa = np.atleast_1d(np.asarray(pa, dtype=float))
    if req.mode == MODE_SMOOTHED_DISCOUNTED:
        a, b = discounted_bin_params(fx, req.region, req.bounds, req.noise.n, req.beta)
        cert_lo, cert_hi = discounted_region(req.region, fx, req.beta)
    else:
        a, b = bounded_bin_params(fx, req.region, req.bounds, req.noise.n, req.tau)
        cert_lo, cert_hi = req.region.l_b, req.region.u_b
    phat = _invert_targets(q, a, b)
    radii = per_output_radii(pa, phat, req.noise.sigma)
    return _finish(
        req.mode, radii, pa, req.noise.sigma, req.noise.n, req.conf.alpha,
        req.noise.seed, req.target_p,
        phat=phat,
        lower_bound_prob=_min_beta_bound(pa, a, b),
        region_l_b=req.region.l_b,
        region_u_b=req.region.u_b,
        certified_l_b=cert_lo,
        certified_u_b=cert_hi,
    )


def certify_point(model, req: CertRequest) -> Certificate:
    """Full pipeline: smooth-evaluate, lower-bound acceptance, dispatch by mode."""
    handle = open_model(model)
    owned = handle is not model
    try:
        smoothed = smooth_eval(handle, req.x, req.noise, req.region)
        pa = estimate_pa(smoothed, req.conf)
        if req.mode == MODE_BASE:
            cert = base_radius(pa, req.target_p, req.noise.sigma,
                               n=req.noise.n, alpha=req.conf.alpha, seed=req.noise.seed)
            return replace(cert,
                           accept_counts=smoothed.accept_counts,
                           region_l_b=req.region.l_b, region_u_b=req.region.u_b,
                           certified_l_b=req.region.l_b, certified_u_b=req.region.u_b)
        fx = evaluate(handle, req.x)
        cert = smoothed_radius_via_inversion(fx, req, pa, q=req.target_p)
        return replace(cert, accept_counts=smoothed.accept_counts)
    finally:
        if owned:
            handle.close()
