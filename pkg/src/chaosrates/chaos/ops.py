"""Path-level operations on a chaos spec: sigma, conditional mass, X samples."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DivergentMassError, InvalidArgumentError
from ..paths import PathBatch, TimeGrid, as_batch, zero_path
from .families import ChaosSpec
from .nested import nested_mass


@dataclass(frozen=True)
class SigmaSample:
    """sigma^2 and its running integral at every extended-grid time."""

    times: np.ndarray
    sigma_sq: np.ndarray
    cumulative: np.ndarray


def _squeeze(x, single):
    return x[0] if single else x


def validate_spec(spec: ChaosSpec, grid: TimeGrid | None = None, seed: int = 0):
    """Check integrability and non-degeneracy; returns the total mass.

    For the custom family the mass can only be estimated: with a ``grid``
    it is estimated by simulation and must be finite and positive, without
    one the model is accepted provisionally and ``None`` is returned.
    """
    mass = spec.validate()
    if spec.closed_form:
        if not (np.isfinite(mass) and mass > 0):
            raise DivergentMassError(f"total mass {mass} is not finite and positive")
        return float(mass)
    if grid is None:
        return None
    mass = total_mass(spec, grid, seed)
    if not (np.isfinite(mass) and mass > 0):
        raise DivergentMassError(f"estimated total mass {mass} is not finite and positive")
    return mass


def total_mass(spec: ChaosSpec, grid: TimeGrid | None = None, seed: int = 0) -> float:
    """E[int_0^inf sigma^2]; estimated on ``grid`` for the custom family."""
    if spec.closed_form:
        return float(spec.total_mass())
    if grid is None:
        raise InvalidArgumentError("custom family needs a grid to estimate its mass")
    batch = zero_path(grid).as_batch()
    batch = PathBatch(grid, batch.increments, batch.values, batch.indices, seed)
    return float(nested_mass(spec, batch, 0)[0][0])


def sigma_path(spec: ChaosSpec, path) -> SigmaSample:
    """sigma(t_i)^2 and int_0^{t_i} sigma^2 on [0, T_tail]."""
    batch, single = as_batch(path)
    times = batch.grid.full_times
    s = spec.sigma(times, batch.values)
    sig2 = s * s
    cum = spec.cumulative_sigma_sq(times, batch.values, sig2)
    return SigmaSample(times, _squeeze(sig2, single), _squeeze(cum, single))


def conditional_mass_columns(spec: ChaosSpec, batch: PathBatch, cols, with_se: bool = False):
    """pi at the given extended-grid column indices, shape (rows, len(cols))."""
    cols = np.atleast_1d(np.asarray(cols, dtype=int))
    times = batch.grid.full_times
    if spec.closed_form:
        last = int(cols.max()) + 1
        pi = spec.pi(times[:last], batch.values[:, :last])[:, cols]
        return (pi, np.zeros_like(pi)) if with_se else pi
    est = np.empty((len(batch), cols.size))
    se = np.empty_like(est)
    for j, k in enumerate(cols):
        est[:, j], se[:, j] = nested_mass(spec, batch, int(k))
    return (est, se) if with_se else est


def conditional_mass(spec: ChaosSpec, path, t: float):
    """pi_t = E_t[int_t^inf sigma^2], the pricing kernel at grid time ``t``."""
    batch, single = as_batch(path)
    k = batch.grid.index(t)
    out = conditional_mass_columns(spec, batch, [k])[:, 0]
    return float(out[0]) if single else out


def x_sample(spec: ChaosSpec, path):
    """Ito sum sum_j sigma(t_j) dW_j over [0, T_tail], with X_0 = 0."""
    batch, single = as_batch(path)
    times = batch.grid.full_times
    integrand = spec.ito_integrand(times, batch.values)
    x = (integrand * batch.increments).sum(axis=1)
    return float(x[0]) if single else x


def ito_tail(spec: ChaosSpec, batch: PathBatch, k: int) -> np.ndarray:
    """sum_{j >= k} sigma(t_j) dW_j, i.e. X - X_t at grid index k."""
    times = batch.grid.full_times
    integrand = spec.ito_integrand(times, batch.values)
    return (integrand[:, k:] * batch.increments[:, k:]).sum(axis=1)
