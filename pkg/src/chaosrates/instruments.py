"""Single-cashflow assets, discount-bond calls, the floating-rate note and a GBM asset."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .chaos import ChaosSpec, conditional_mass_columns
from .errors import InvalidArgumentError
from .paths import PathBatch, PathEnsemble, as_batch, resimulate
from .stats import RunningStats, mean_and_se
from .term_structure import bond_price_columns


@dataclass(frozen=True)
class CashflowSpec:
    """A single payment ``payoff(batch)`` made at ``pay_time``.

    ``payoff`` maps a :class:`PathBatch` to one non-negative value per row and
    may only look at the path up to ``pay_time``. ``amount`` is set for
    deterministic payments so they can be priced without simulation.
    """

    pay_time: float
    payoff: Callable[[PathBatch], np.ndarray] = field(compare=False)
    name: str = "cashflow"
    amount: float | None = None

    @classmethod
    def constant(cls, pay_time: float, amount: float = 1.0) -> "CashflowSpec":
        if amount < 0:
            raise InvalidArgumentError("payoff must be non-negative")
        return cls(pay_time, lambda b: np.full(len(b), float(amount)),
                   name=f"zcb_{pay_time:g}", amount=float(amount))

    @classmethod
    def bond_call(cls, spec: ChaosSpec, t: float, T: float, K: float) -> "CashflowSpec":
        """(P(t, T) - K)^+ paid at ``t``."""
        if not 0 < K < 1:
            raise InvalidArgumentError("strike must lie in (0, 1)")
        if not 0 < t < T:
            raise InvalidArgumentError("option needs 0 < t < T")

        def payoff(batch):
            k = batch.grid.index(t)
            return np.maximum(bond_price_columns(spec, batch, k, T) - K, 0.0)

        return cls(t, payoff, name=f"call_{t:g}_{T:g}_{K:g}")


@dataclass(frozen=True)
class PriceEstimate:
    value: float
    std_error: float
    n_paths: int

    def __post_init__(self):
        if np.any(np.asarray(self.std_error) < 0):
            raise InvalidArgumentError("std_error must be non-negative")


def _deflated_payoff(spec: ChaosSpec, batch: PathBatch, cf: CashflowSpec) -> np.ndarray:
    kT = batch.grid.index(cf.pay_time)
    h = np.asarray(cf.payoff(batch), dtype=float)
    if np.any(h < 0):
        raise InvalidArgumentError(f"{cf.name}: payoff must be non-negative")
    return h * conditional_mass_columns(spec, batch, [kT])[:, 0]


def price_single_cashflow(spec: ChaosSpec, ensemble, valuation_t: float, cf: CashflowSpec,
                          n_inner: int = 1000, threads: int = 1) -> PriceEstimate:
    """Price (1/pi_t) E_t[pi_T H_T] of a single cashflow.

    At ``valuation_t = 0`` the result is one estimate with its standard error.
    At ``0 < valuation_t < pay_time`` the value and standard error are arrays
    with one conditional price per path, estimated from ``n_inner``
    continuations (exact for deterministic payments). At or after the
    payment date the price is 0.
    """
    if isinstance(ensemble, PathEnsemble):
        grid, n = ensemble.grid, ensemble.n_paths
    else:
        batch, _ = as_batch(ensemble)
        grid, n = batch.grid, len(batch)
    k = grid.index(valuation_t)
    grid.index(cf.pay_time)
    if valuation_t >= cf.pay_time:
        if valuation_t == 0:
            return PriceEstimate(0.0, 0.0, n)
        return PriceEstimate(np.zeros(n), np.zeros(n), n)
    if k == 0:
        stats = RunningStats()
        pi0 = None
        if isinstance(ensemble, PathEnsemble):
            blocks = ensemble.map_batches(
                lambda b: (_deflated_payoff(spec, b, cf), conditional_mass_columns(spec, b, [0])[0, 0]),
                threads=threads)
        else:
            blocks = [(_deflated_payoff(spec, batch, cf), conditional_mass_columns(spec, batch, [0])[0, 0])]
        for vals, p0 in blocks:
            stats.update(vals)
            pi0 = p0
        return PriceEstimate(float(stats.mean / pi0), float(stats.std_error / pi0), stats.n)
    batch = ensemble.batch(0, n) if isinstance(ensemble, PathEnsemble) else batch
    if cf.amount is not None:
        return PriceEstimate(cf.amount * bond_price_columns(spec, batch, k, cf.pay_time),
                             np.zeros(n), n)
    value, se = np.empty(n), np.empty(n)
    pi_t = conditional_mass_columns(spec, batch, [k])[:, 0]
    for row in range(n):
        W = resimulate(batch, row, k, n_inner)
        inner = PathBatch(grid, np.diff(W, axis=1), W,
                          np.full(n_inner, batch.indices[row]), batch.seed)
        m, s = mean_and_se(_deflated_payoff(spec, inner, cf))
        value[row], se[row] = m / pi_t[row], s / pi_t[row]
    return PriceEstimate(value, se, n)


def price_bond_option(spec: ChaosSpec, ensemble, t: float, T: float, K: float,
                      threads: int = 1) -> PriceEstimate:
    """Time-0 price of a call on the T-bond, struck at K and exercised at t."""
    return price_single_cashflow(spec, ensemble, 0.0, CashflowSpec.bond_call(spec, t, T, K),
                                 threads=threads)


def frn_deflated_path(spec: ChaosSpec, path) -> np.ndarray:
    """pi_t + int_0^t sigma^2 on [0, horizon], since pi r = sigma^2."""
    batch, single = as_batch(path)
    grid = batch.grid
    n = grid.n_steps + 1
    times = grid.full_times[:n]
    W = batch.values[:, :n]
    s = spec.sigma(times, W)
    cum = spec.cumulative_sigma_sq(times, W, s * s)
    out = conditional_mass_columns(spec, batch, np.arange(n)) + cum
    return out[0] if single else out


@dataclass(frozen=True)
class GbmAsset:
    S0: float
    r: float
    lam: float
    sigma: float
    dividend: float = 0.0

    def __post_init__(self):
        if not (self.S0 > 0 and self.r > 0):
            raise InvalidArgumentError("S0 and r must be positive")
        if self.dividend < 0:
            raise InvalidArgumentError("dividend yield must be non-negative")


def gbm_deflated_asset(params: GbmAsset, path) -> np.ndarray:
    """pi_t S_t + delta int_0^t pi_u S_u du on [0, horizon].

    pi_t S_t = S0 exp(-delta t + (sigma - lam) W_t - (sigma - lam)^2 t / 2) does
    not depend on r. The dividend integral uses the left-endpoint rule.
    """
    if isinstance(params, dict):
        params = GbmAsset(**params)
    batch, single = as_batch(path)
    grid = batch.grid
    n = grid.n_steps + 1
    t = grid.full_times[:n]
    W = batch.values[:, :n]
    v = params.sigma - params.lam
    deflated = params.S0 * np.exp(-params.dividend * t + v * W - 0.5 * v * v * t)
    divs = np.zeros_like(deflated)
    if params.dividend:
        np.cumsum(params.dividend * deflated[:, :-1] * grid.dt, axis=1, out=divs[:, 1:])
    out = deflated + divs
    return out[0] if single else out
