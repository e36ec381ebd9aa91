"""Discount bonds, forward rates, the initial curve and first-chaos calibration.

Bond prices follow the positive-interest ratio

    P(t, T) = E_t[int_T^inf sigma^2] / E_t[int_t^inf sigma^2]   for t < T,

and are zero once ``t >= T`` (the bond has paid out and gone ex-dividend).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chaos import ChaosSpec, FirstChaos, PiecewiseExponential
from .chaos.nested import nested_tail_moments
from .errors import (
    DegenerateSpecError,
    InvalidArgumentError,
    InvalidCurveError,
    ShortRateMismatchError,
)
from .kernel import kernel_arrays
from .paths import PathBatch, TimeGrid, as_batch, zero_path
from .stats import ratio_and_se


@dataclass(frozen=True)
class DiscountCurve:
    maturities: np.ndarray
    discounts: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.maturities, dtype=float)
        p = np.asarray(self.discounts, dtype=float)
        if m.ndim != 1 or m.shape != p.shape:
            raise InvalidCurveError("maturities and discounts must be 1-d and equal length")
        if m.size < 2:
            raise InvalidCurveError("a curve needs at least two points")
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(p))):
            raise InvalidCurveError("curve values must be finite")
        if m[0] != 0.0 or p[0] != 1.0:
            raise InvalidCurveError("curve must start with P(0,0) = 1")
        if np.any(np.diff(m) <= 0):
            raise InvalidCurveError("maturities must be strictly increasing")
        if np.any(p <= 0) or np.any(p > 1):
            raise InvalidCurveError("discounts must lie in (0, 1]")
        if np.any(np.diff(p) > 0):
            raise InvalidCurveError("discounts must be non-increasing in maturity")
        object.__setattr__(self, "maturities", m)
        object.__setattr__(self, "discounts", p)


def read_curve_csv(path) -> DiscountCurve:
    """Read a ``maturity,discount`` file."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["maturity", "discount"]:
        raise InvalidCurveError("curve file must have header 'maturity,discount'")
    try:
        data = np.array([[float(a), float(b)] for a, b in (r for r in rows[1:] if r)])
    except ValueError as exc:
        raise InvalidCurveError(f"bad curve row: {exc}") from None
    if data.size == 0:
        raise InvalidCurveError("curve file has no rows")
    return DiscountCurve(data[:, 0], data[:, 1])


def write_curve_csv(curve: DiscountCurve, path, fmt: str = "%.12g") -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["maturity", "discount"])
        for m, p in zip(curve.maturities, curve.discounts):
            w.writerow([fmt % m, fmt % p])


def _grid_index(grid: TimeGrid, T: float) -> int:
    return grid.index(T)


def bond_price_columns(spec: ChaosSpec, batch: PathBatch, k: int, T: float, with_se: bool = False):
    """P(t_k, T) for each row of ``batch``."""
    grid = batch.grid
    t = grid.full_times[k]
    m = len(batch)
    if t >= T:
        zero = np.zeros(m)
        return (zero, zero) if with_se else zero
    if spec.closed_form:
        times = grid.full_times[: k + 1]
        p = spec.bond(times, batch.values[:, : k + 1], T)[:, k]
        return (p, np.zeros(m)) if with_se else p
    samples = nested_tail_moments(spec, batch, k, _grid_index(grid, T))
    est, se = np.empty(m), np.empty(m)
    for i in range(m):
        est[i], se[i] = ratio_and_se(samples[i, :, 1], samples[i, :, 0])
    return (est, se) if with_se else est


def bond_price(spec: ChaosSpec, path, t: float, T: float):
    """Price at grid time ``t`` of the unit discount bond paying at ``T``."""
    batch, single = as_batch(path)
    p = bond_price_columns(spec, batch, batch.grid.index(t), T)
    return float(p[0]) if single else p


def forward_rate_columns(spec: ChaosSpec, batch: PathBatch, k: int, T: float, with_se: bool = False):
    grid = batch.grid
    t = grid.full_times[k]
    if not T > t:
        raise InvalidArgumentError("forward rate needs t < T")
    m = len(batch)
    if spec.closed_form:
        times = grid.full_times[: k + 1]
        f = spec.forward(times, batch.values[:, : k + 1], T)[:, k]
        return (f, np.zeros(m)) if with_se else f
    samples = nested_tail_moments(spec, batch, k, _grid_index(grid, T))
    est, se = np.empty(m), np.empty(m)
    for i in range(m):
        est[i], se[i] = ratio_and_se(samples[i, :, 2], samples[i, :, 1])
    return (est, se) if with_se else est


def forward_rate(spec: ChaosSpec, path, t: float, T: float):
    """Instantaneous forward f(t, T) = E_t[sigma_T^2] / E_t[int_T^inf sigma^2]."""
    batch, single = as_batch(path)
    f = forward_rate_columns(spec, batch, batch.grid.index(t), T)
    return float(f[0]) if single else f


@dataclass(frozen=True)
class ShortRateCheck:
    forward: np.ndarray
    short_rate: np.ndarray
    abs_error: np.ndarray
    tolerance: np.ndarray
    slope: np.ndarray


def short_rate_limit_check(spec: ChaosSpec, path, t: float) -> ShortRateCheck:
    """Compare f(t, t + dt) with the kernel short rate sigma_t^2 / pi_t.

    The allowed gap is ``2 * C * dt`` where ``C = |f(t, t+2dt) - f(t, t+dt)| / dt``
    estimates the slope of the forward curve, plus 3 standard errors for the
    nested estimator. Raises :class:`ShortRateMismatchError` on failure.
    """
    batch, single = as_batch(path)
    grid = batch.grid
    k = grid.index(t)
    if k >= grid.n_steps:
        raise InvalidArgumentError("t must lie before the horizon")
    dt = grid.dt
    f1, se1 = forward_rate_columns(spec, batch, k, grid.full_times[k + 1], with_se=True)
    f2, se2 = forward_rate_columns(spec, batch, k, grid.full_times[k + 2], with_se=True)
    kp = kernel_arrays(spec, batch, n_cols=k + 1)
    r = kp.short_rate[:, k]
    slope = np.abs(f2 - f1) / dt
    tol = 2 * slope * dt + 3 * (se1 + se2) + 1e-12 * (1 + np.abs(r))
    err = np.abs(f1 - r)
    if np.any(err > tol):
        i = int(np.argmax(err - tol))
        raise ShortRateMismatchError(
            f"f(t, t+dt)={f1[i]:.6g} differs from r_t={r[i]:.6g} by {err[i]:.3g} > {tol[i]:.3g}")
    out = ShortRateCheck(f1, r, err, tol, slope)
    if single:
        return ShortRateCheck(*(float(getattr(out, f)[0]) for f in
                                ("forward", "short_rate", "abs_error", "tolerance", "slope")))
    return out


def initial_curve(spec: ChaosSpec, maturities, grid: TimeGrid | None = None,
                  seed: int = 0) -> DiscountCurve:
    """P(0, T) = int_T^inf E[sigma^2] / int_0^inf E[sigma^2] at each maturity.

    A leading maturity 0 is added when missing. The custom family is
    estimated by simulation on ``grid``, and its maturities must be grid times.
    """
    mats = np.asarray(maturities, dtype=float)
    if mats.ndim != 1 or mats.size == 0:
        raise InvalidArgumentError("maturities must be a non-empty list")
    if np.any(mats < 0) or np.any(np.diff(mats) <= 0):
        raise InvalidArgumentError("maturities must be non-negative and strictly increasing")
    if mats[0] != 0.0:
        mats = np.concatenate([[0.0], mats])
    if spec.closed_form:
        disc = spec.unconditional_tail(mats) / spec.total_mass()
    else:
        if grid is None:
            raise InvalidArgumentError("custom family needs a grid for its initial curve")
        base = zero_path(grid).as_batch()
        base = PathBatch(grid, base.increments, base.values, base.indices, seed)
        idx = [grid.index(T) for T in mats]
        dt = grid.dt
        from .chaos.nested import inner_samples, trapezoid_tail

        samples = inner_samples(spec, base, 0, lambda times, W, sig2: np.column_stack(
            [trapezoid_tail(sig2, dt, j) for j in idx]))[0]
        means = samples.mean(axis=0)
        disc = means / means[0]
    disc = np.asarray(disc, dtype=float)
    disc[0] = 1.0
    return DiscountCurve(mats, disc)


def initial_forward(spec: ChaosSpec, maturities) -> np.ndarray:
    """f(0, T) = E[sigma_T^2] / int_T^inf E[sigma^2] for closed-form families."""
    mats = np.asarray(maturities, dtype=float)
    if not spec.closed_form:
        raise InvalidArgumentError("initial forwards need a closed-form family")
    return spec.mean_sigma_sq(mats) / spec.unconditional_tail(mats)


def calibrate_first_chaos(curve: DiscountCurve) -> FirstChaos:
    """Fit a deterministic integrand that reprices ``curve`` at its knots.

    sigma^2 is constant between knots (so P is linear there) and decays
    exponentially past the last knot at the rate that carries the remaining
    mass P(0, T_n) with a continuous forward rate. Total mass is 1.
    """
    if not isinstance(curve, DiscountCurve):
        curve = DiscountCurve(*curve)
    T, P = curve.maturities, curve.discounts
    dens = -np.diff(P) / np.diff(T)
    if dens[-1] <= 0:
        raise DegenerateSpecError("last curve segment is flat: implied sigma vanishes at the tail")
    flat = np.flatnonzero(dens <= 0)
    if flat.size:
        warnings.warn(f"flat curve segments at {T[flat].tolist()} give zero-rate intervals",
                      stacklevel=2)
    tail_rate = dens[-1] / P[-1]
    fn = PiecewiseExponential.piecewise_constant(
        T, np.sqrt(dens), tail_level=np.sqrt(dens[-1]), tail_rate=0.5 * tail_rate)
    spec = FirstChaos(fn)
    spec.validate()
    return spec
