"""Representations of X and the integrand sigma, with conditional moments."""

from .families import (
    EVALUATORS,
    ChaosSpec,
    CustomIntegrand,
    FirstChaos,
    GbmExponential,
    SecondChaos,
    SignFlip,
    as_custom,
    flip_sign,
    gbm_evaluator,
    power_tail_evaluator,
    resolve_evaluator,
    scale_spec,
    spec_from_dict,
)
from .functions import PiecewiseExponential, function_from_dict
from .ops import (
    SigmaSample,
    conditional_mass,
    conditional_mass_columns,
    ito_tail,
    sigma_path,
    total_mass,
    validate_spec,
    x_sample,
)

__all__ = [
    "EVALUATORS", "ChaosSpec", "CustomIntegrand", "FirstChaos", "GbmExponential",
    "PiecewiseExponential", "SecondChaos", "SigmaSample", "SignFlip", "as_custom",
    "conditional_mass", "conditional_mass_columns", "flip_sign", "function_from_dict",
    "gbm_evaluator", "ito_tail", "power_tail_evaluator", "resolve_evaluator", "scale_spec",
    "sigma_path", "spec_from_dict", "total_mass", "validate_spec", "x_sample",
]
