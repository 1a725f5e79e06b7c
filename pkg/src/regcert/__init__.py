"""Probabilistic certified robustness for black-box regression models.

The package certifies, for a regression model f: R^d -> R^t accessed only
through evaluations, the largest l2 input perturbation for which outputs stay
within a user tolerance with a requested probability, using Gaussian
randomized smoothing.  Certificates come in three modes (base regressor,
drift-bounded averaging, discounted finite-sample averaging) and are backed
by exact Clopper-Pearson acceptance bounds plus an empirical validation
harness.
"""

from .certify import (MODE_BASE, MODE_SMOOTHED_ASYMPTOTIC,
                      MODE_SMOOTHED_DISCOUNTED, CertRequest, Certificate,
                      asymptotic_accept_prob, base_radius, bounded_lower_bound,
                      certify_point, discounted_lower_bound, discounted_region,
                      smoothed_radius_via_inversion)
from .errors import (ConfigError, DomainError, RegcertError, TransportError,
                     UnboundedQuantileError, UndefinedBoundError)
from .estimation import (BinomialObservation, ConfidenceSpec,
                         clopper_pearson_lower, estimate_pa)
from .models import (ModelSpec, OutputBounds, SubprocessModel, batch_evaluate,
                     clip_wrap, evaluate, open_model)
from .region import AcceptRegion
from .sampling import (NoiseConfig, SmoothedEval, counter_normals,
                       counter_uniforms, derive_seed, draw_noise, smooth_eval)
from .specfun import (GaussianRect, RectProbability, binomial_tail,
                      gaussian_rect_prob, reg_inc_beta, reg_inc_beta_inv,
                      std_normal_cdf, std_normal_quantile)
from .validate import (ErrorCurves, PointValidation, ValidationReport,
                       ValidationSpec, certified_error_curve,
                       empirical_accept_prob, sample_boundary_delta,
                       validate_point)

__version__ = "0.1.0"
