"""Density estimation for positive mixing processes observed through multiplicative noise.

Observations ``Y_j = X_j U_j`` with a known error law for ``U`` are
deconvolved through the Mellin transform on the line ``Re(s) = 1``.
"""

__version__ = "0.1.0"

from .errors import (
    AccuracyError,
    ConfigurationError,
    DeconvError,
    DomainError,
    SingularDivisorError,
    VerificationError,
)
from .estimator import (
    DensityEstimate,
    EstimatorConfig,
    QuadratureParams,
    VarianceBounds,
    confidence_interval,
    default_bandwidth,
    empirical_mellin,
    estimate_density,
    estimate_density_via_weights,
    log_kde,
    variance_bounds,
    weight_function,
)
from .kernel import Kernel, kernel_eval, kernel_ft, make_kernel, verify_ft_integrability, verify_moments
from .mellin import (
    ErrorDensity,
    MellinGrid,
    complex_gamma,
    decay_constants,
    mellin_error,
    mellin_invert,
    mellin_numeric,
    verify_ordinary_smooth,
)
from .processes import (
    CirParams,
    MDependentParams,
    NoiseSpec,
    contaminate,
    gamma_invariant_params,
    simulate_cir,
    simulate_m_dependent,
    simulate_noise,
)
from .series import ObservationSeries, read_series, write_series
