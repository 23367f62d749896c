"""Fixed-time exact differentiators of arbitrary order.

Construction and simulation of sliding-mode differentiators whose injection
terms blend two power laws, giving finite-time convergence with a settling
time bounded independently of the initial error.  Includes a smooth
Lyapunov-function certificate (sampled, numerical), backward gain
synthesis, and the two-parameter gain scaling that trades convergence time
against the supported Lipschitz bound.
"""

from .dynamics import (
    DivergenceError,
    Trajectory,
    differentiator_rhs,
    error_rhs,
    integrate,
    integrate_batch,
    measure_convergence_time,
)
from .gains import (
    GainLadder,
    ScalingParams,
    SynthesisError,
    design_for_targets,
    scale_gains,
    synthesize_gains,
    validate_ladder,
)
from .injection import (
    DegreeConfig,
    HomogeneousApprox,
    InternalGains,
    WeightVectors,
    compute_weights,
    homog_approx,
    homog_limit_eval,
    phi_eval,
    signed_pow,
    varphi_eval,
    varphi_inverse,
)
from .lyapunov import (
    CertificationError,
    DecayCertificate,
    LyapunovParams,
    W_star,
    Z_i,
    check_p,
    default_p,
    estimate_eta,
    fixed_time_bound,
    lyapunov_V,
    s_i,
    sigma_i,
)
from .signals import NoiseSpec, SignalSpec, eval_signal, sample_noise

__all__ = [
    "DegreeConfig",
    "WeightVectors",
    "InternalGains",
    "HomogeneousApprox",
    "compute_weights",
    "signed_pow",
    "varphi_eval",
    "phi_eval",
    "varphi_inverse",
    "homog_approx",
    "homog_limit_eval",
    "GainLadder",
    "ScalingParams",
    "SynthesisError",
    "scale_gains",
    "design_for_targets",
    "synthesize_gains",
    "validate_ladder",
    "LyapunovParams",
    "DecayCertificate",
    "CertificationError",
    "default_p",
    "check_p",
    "Z_i",
    "lyapunov_V",
    "sigma_i",
    "s_i",
    "W_star",
    "estimate_eta",
    "fixed_time_bound",
    "SignalSpec",
    "NoiseSpec",
    "eval_signal",
    "sample_noise",
    "Trajectory",
    "DivergenceError",
    "differentiator_rhs",
    "error_rhs",
    "integrate",
    "integrate_batch",
    "measure_convergence_time",
]

__version__ = "0.1.0"
