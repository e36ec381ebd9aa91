"""Nested Monte Carlo for conditional expectations under the custom family."""

from __future__ import annotations

import numpy as np

from ..paths import PathBatch, resimulate_chunks


def trapezoid_tail(sigma_sq: np.ndarray, dt: float, start: int) -> np.ndarray:
    """Trapezoid-rule int_{t_start}^{T_tail} sigma^2 along each row."""
    seg = sigma_sq[:, start:]
    if seg.shape[1] < 2:
        return np.zeros(seg.shape[0])
    return dt * (seg.sum(axis=1) - 0.5 * (seg[:, 0] + seg[:, -1]))


def inner_samples(spec, batch: PathBatch, k: int, functional) -> np.ndarray:
    """Per-row inner samples of ``functional`` after branching at grid index ``k``.

    ``functional(times, W_inner, sigma_sq)`` returns an (n_inner, q) array.
    The result has shape (rows, n_inner, q).
    """
    times = batch.grid.full_times
    out = []
    for row in range(len(batch)):
        parts = []
        for W in resimulate_chunks(batch, row, k, spec.n_inner):
            s = spec.sigma(times, W)
            parts.append(np.asarray(functional(times, W, s * s)).reshape(W.shape[0], -1))
        out.append(np.vstack(parts))
    return np.stack(out)


def nested_tail_moments(spec, batch: PathBatch, k: int, T_index: int) -> np.ndarray:
    """Inner samples of [int_t^Tt sigma^2, int_T^Tt sigma^2, sigma_T^2] from index ``k``."""
    dt = batch.grid.dt

    def functional(times, W, sig2):
        return np.column_stack([trapezoid_tail(sig2, dt, k), trapezoid_tail(sig2, dt, T_index),
                                sig2[:, T_index]])

    return inner_samples(spec, batch, k, functional)


def nested_mass(spec, batch: PathBatch, k: int):
    """Per-row nested estimate of E_t[int_t^Tt sigma^2] and its standard error."""
    dt = batch.grid.dt
    samples = inner_samples(spec, batch, k, lambda times, W, sig2: trapezoid_tail(sig2, dt, k)[:, None])
    samples = samples[:, :, 0]
    n = samples.shape[1]
    se = samples.std(axis=1, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(samples.shape[0])
    return samples.mean(axis=1), se
