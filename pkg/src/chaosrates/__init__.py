"""Interest-rate term structures generated by a square-integrable Wiener functional.

The integrand sigma of X = int sigma dW defines the pricing kernel
pi_t = E_t[int_t^inf sigma^2], the short rate sigma^2 / pi, discount bonds
as ratios of conditional tail masses, and the money-market account.
"""

__version__ = "0.1.0"

from .chaos import (  # noqa: E402
    ChaosSpec,
    CustomIntegrand,
    FirstChaos,
    GbmExponential,
    PiecewiseExponential,
    SecondChaos,
    spec_from_dict,
)
from .kernel import KernelPath, kernel_path  # noqa: E402
from .paths import TimeGrid, make_grid, sample_paths  # noqa: E402
from .term_structure import (  # noqa: E402
    DiscountCurve,
    bond_price,
    calibrate_first_chaos,
    forward_rate,
    initial_curve,
)

__all__ = [
    "ChaosSpec", "CustomIntegrand", "DiscountCurve", "FirstChaos", "GbmExponential",
    "KernelPath", "PiecewiseExponential", "SecondChaos", "TimeGrid", "bond_price",
    "calibrate_first_chaos", "forward_rate", "initial_curve", "kernel_path", "make_grid",
    "sample_paths", "spec_from_dict",
]
