"""Pricing kernel, short rate, money-market account and natural numeraire along paths."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chaos import ChaosSpec, conditional_mass_columns
from .errors import NonPositiveKernelError, UnsupportedFamilyError
from .paths import PathBatch, as_batch

KERNEL_FLOOR = 1e-300


@dataclass(frozen=True)
class KernelPath:
    """Per-path trajectories on [0, horizon]. Arrays are (n,) for one path, (m, n) for a batch."""

    times: np.ndarray
    pi: np.ndarray
    sigma_sq: np.ndarray
    short_rate: np.ndarray
    bank: np.ndarray
    rho: np.ndarray
    numeraire: np.ndarray

    def row(self, i: int) -> "KernelPath":
        return KernelPath(self.times, self.pi[i], self.sigma_sq[i], self.short_rate[i],
                          self.bank[i], self.rho[i], self.numeraire[i])


def kernel_arrays(spec: ChaosSpec, batch: PathBatch, n_cols: int | None = None,
                  strict: bool = True) -> KernelPath:
    """Kernel quantities on the first ``n_cols`` extended-grid columns.

    With ``strict=False`` a kernel at or below the floor is left in place
    (rates become inf) so validation can report it as a failed verdict.
    """
    grid = batch.grid
    n_cols = grid.n_steps + 1 if n_cols is None else n_cols
    times = grid.full_times[:n_cols]
    W = batch.values[:, :n_cols]
    s = spec.sigma(times, W)
    sig2 = s * s
    pi = conditional_mass_columns(spec, batch, np.arange(n_cols))
    bad = ~(pi > KERNEL_FLOOR) | ~np.isfinite(pi)
    if strict and np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise NonPositiveKernelError(
            f"pricing kernel {pi[i, j]:.3g} at t={times[j]:g} is at or below the floor; "
            "the tail horizon is too short or the model is degenerate")
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        r = sig2 / pi
        log_b = spec.log_bank(times, W, r)
        bank = np.exp(log_b)
        rho = pi * bank
        numeraire = 1.0 / pi
    if strict and not np.all(np.isfinite(bank)):
        raise NonPositiveKernelError("money-market account overflowed on the grid")
    return KernelPath(times, pi, sig2, r, bank, rho, numeraire)


def kernel_path(spec: ChaosSpec, path, strict: bool = True) -> KernelPath:
    """pi, sigma^2, r = sigma^2/pi, B = exp(int r), rho = pi B and xi = 1/pi on [0, horizon]."""
    batch, single = as_batch(path)
    kp = kernel_arrays(spec, batch, strict=strict)
    return kp.row(0) if single else kp


def market_price_of_risk(spec: ChaosSpec, path) -> np.ndarray:
    """lambda_t = -theta_t / pi_t, where theta is the diffusion coefficient of pi."""
    if not spec.closed_form:
        raise UnsupportedFamilyError("market price of risk needs a closed-form family")
    batch, single = as_batch(path)
    n = batch.grid.n_steps + 1
    times = batch.grid.full_times[:n]
    W = batch.values[:, :n]
    lam = -spec.theta(times, W) / spec.pi(times, W)
    return lam[0] if single else lam
