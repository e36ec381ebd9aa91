"""Streaming ensemble statistics with an order-fixed merge."""

from __future__ import annotations

import numpy as np


class RunningStats:
    """Mean and standard error accumulated batch by batch.

    Batches are merged with Chan's pairwise update, so the result depends only
    on the sequence of batches fed in, not on how they were produced.
    """

    def __init__(self):
        self.n = 0
        self._mean = None
        self._m2 = None

    def update(self, values):
        values = np.asarray(values, dtype=float)
        m = values.shape[0]
        if m == 0:
            return self
        # constant columns (deterministic models) keep an exact mean and zero spread
        const = values.min(axis=0) == values.max(axis=0)
        mean_b = np.where(const, values[0], values.mean(axis=0))
        m2_b = np.where(const, 0.0, ((values - mean_b) ** 2).sum(axis=0))
        if self.n == 0:
            self.n, self._mean, self._m2 = m, mean_b, m2_b
            return self
        n = self.n + m
        delta = mean_b - self._mean
        self._mean = self._mean + delta * (m / n)
        self._m2 = self._m2 + m2_b + delta**2 * (self.n * m / n)
        self.n = n
        return self

    @property
    def mean(self):
        return self._mean

    @property
    def variance(self):
        if self.n < 2:
            return np.zeros_like(self._mean)
        return self._m2 / (self.n - 1)

    @property
    def std_error(self):
        return np.sqrt(self.variance / self.n)


def mean_and_se(values, axis=0):
    """Sample mean and its standard error along ``axis``."""
    values = np.asarray(values, dtype=float)
    n = values.shape[axis]
    mean = values.mean(axis=axis)
    if n < 2:
        return mean, np.zeros_like(mean)
    return mean, values.std(axis=axis, ddof=1) / np.sqrt(n)


def ratio_and_se(num, den):
    """Ratio of sample means with a delta-method standard error."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    n = num.shape[0]
    mn, md = num.mean(axis=0), den.mean(axis=0)
    ratio = mn / md
    if n < 2:
        return ratio, np.zeros_like(ratio)
    resid = num - ratio * den
    se = resid.std(axis=0, ddof=1) / (np.sqrt(n) * np.abs(md))
    return ratio, se
