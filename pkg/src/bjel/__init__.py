"""Bayesian jackknife pseudo-empirical likelihood for U-statistics
under unequal-probability survey designs."""

from .errors import (
    BJELError,
    DegeneratePosterior,
    DegenerateVariance,
    InfeasibleTheta,
    InvalidInput,
    NonConvergence,
    NonPositiveWeight,
    SampleTooSmall,
    SingularCalibration,
    SingularSystem,
)
from .ustat import Kernel, PseudoValues, builtin_kernels, get_kernel, jackknife_pseudovalues, u_statistic
from .elcore import ELSolution, WeightedSample, profile_log_el, solve_lambda_1d, solve_lambda_multi
from .design import (
    DesignEffect,
    DesignSpec,
    SampleDraw,
    calibrate_weights,
    design_effect,
    draw_sample,
    normalize_weights,
    regression_coeff,
    scale_factor_w,
)
from .posterior import (
    IntervalResult,
    PosteriorGrid,
    build_posterior,
    credible_interval,
    jel_interval,
    monahan_boos_H,
    posterior_quantile,
)

__version__ = "0.1.0"
