"""Deterministic functions of time built from exponential pieces.

A :class:`PiecewiseExponential` is ``levels[j] * exp(-rates[j] * (s - knots[j]))``
on ``[knots[j], knots[j+1])``, with the last piece running to infinity. Plain
exponentials and piecewise-constant curves with an exponential tail are both
special cases, and integrals of products of two such functions are analytic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgumentError


def _exp_integral(rate, length):
    """int_0^length exp(-rate*s) ds, stable near rate=0; length may be inf."""
    rate = np.asarray(rate, dtype=float)
    length = np.asarray(length, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        x = rate * length
        out = np.where(np.abs(x) < 1e-12, length * (1 - 0.5 * x),
                       -np.expm1(-x) / np.where(rate == 0, 1.0, rate))
        inf = np.isinf(length)
        out = np.where(inf & (rate > 0), 1.0 / np.where(rate > 0, rate, 1.0), out)
        out = np.where(inf & (rate <= 0), np.inf, out)
    return out


@dataclass(frozen=True)
class PiecewiseExponential:
    knots: tuple
    levels: tuple
    rates: tuple

    def __post_init__(self):
        knots = tuple(float(k) for k in self.knots)
        levels = tuple(float(v) for v in self.levels)
        rates = tuple(float(b) for b in self.rates)
        if not knots or knots[0] != 0.0:
            raise InvalidArgumentError("knots must start at 0")
        if len(levels) != len(knots) or len(rates) != len(knots):
            raise InvalidArgumentError("need one level and one rate per knot")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise InvalidArgumentError("knots must be strictly increasing")
        if not all(np.isfinite(levels + rates + knots)):
            raise InvalidArgumentError("parameters must be finite")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "rates", rates)

    @classmethod
    def exponential(cls, a: float, b: float) -> "PiecewiseExponential":
        """``a * exp(-b s)`` on [0, inf)."""
        return cls((0.0,), (a,), (b,))

    @classmethod
    def constant(cls, a: float) -> "PiecewiseExponential":
        return cls((0.0,), (a,), (0.0,))

    @classmethod
    def piecewise_constant(cls, knots, values, tail_level=None, tail_rate=None):
        """``values[j]`` on ``[knots[j], knots[j+1])`` then ``tail_level * exp(-tail_rate (s - knots[-1]))``.

        With no tail the function is zero beyond the last knot.
        """
        knots = [float(k) for k in knots]
        values = [float(v) for v in values]
        if len(values) != len(knots) - 1:
            raise InvalidArgumentError("need len(knots) - 1 interval values")
        if tail_level is None:
            tail_level, tail_rate = 0.0, 0.0
        elif tail_rate is None:
            raise InvalidArgumentError("tail_rate is required with tail_level")
        return cls(tuple(knots), tuple(values) + (tail_level,), (0.0,) * len(values) + (tail_rate,))

    # -- evaluation -------------------------------------------------------

    def _piece(self, s):
        return np.clip(np.searchsorted(self.knots, s, side="right") - 1, 0, len(self.knots) - 1)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        j = self._piece(s)
        k = np.asarray(self.knots)[j]
        return np.asarray(self.levels)[j] * np.exp(-np.asarray(self.rates)[j] * (s - k))

    def scaled(self, c: float) -> "PiecewiseExponential":
        return PiecewiseExponential(self.knots, tuple(c * v for v in self.levels), self.rates)

    @property
    def tail_level(self) -> float:
        return self.levels[-1]

    @property
    def tail_rate(self) -> float:
        return self.rates[-1]

    @property
    def last_knot(self) -> float:
        return self.knots[-1]

    def vanishes_eventually(self) -> bool:
        return self.levels[-1] == 0.0

    def square_integrable(self) -> bool:
        return self.levels[-1] == 0.0 or self.rates[-1] > 0.0

    # -- integrals ----------------------------------------------------------

    def _product_pieces(self, other: "PiecewiseExponential"):
        """Merged knots with the product re-anchored at each merged piece start."""
        knots = np.union1d(self.knots, other.knots)
        f, g = self(knots), other(knots)
        jf, jg = self._piece(knots), other._piece(knots)
        rates = np.asarray(self.rates)[jf] + np.asarray(other.rates)[jg]
        return knots, f * g, rates

    def tail_product(self, other: "PiecewiseExponential", t):
        """``int_t^inf self(s) * other(s) ds`` for each entry of ``t``."""
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        knots, coef, rates = self._product_pieces(other)
        lengths = np.append(np.diff(knots), np.inf)
        with np.errstate(invalid="ignore"):
            full = np.where(coef == 0.0, 0.0, coef * _exp_integral(rates, lengths))
        # suffix[j] = integral over pieces strictly after j
        suffix = np.append(np.cumsum(full[::-1])[::-1][1:], 0.0)
        j = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, knots.size - 1)
        start = np.maximum(t, knots[j])
        end = np.append(knots[1:], np.inf)[j]
        with np.errstate(over="ignore", invalid="ignore"):
            part = coef[j] * np.exp(-rates[j] * (start - knots[j])) * _exp_integral(rates[j], end - start)
        part = np.where((coef[j] == 0.0) | (np.isinf(start) & (rates[j] > 0)), 0.0, part)
        return part + suffix[j]

    def product_integral(self, other: "PiecewiseExponential", a, b):
        """``int_a^b self * other`` for finite arrays ``0 <= a <= b``."""
        a = np.maximum(np.asarray(a, dtype=float), 0.0)
        b = np.maximum(np.asarray(b, dtype=float), a)
        knots, coef, rates = self._product_pieces(other)
        lengths = np.diff(knots)
        full = coef[:-1] * _exp_integral(rates[:-1], lengths)
        prefix = np.concatenate([[0.0], np.cumsum(full)])

        def head(t, j):
            # int_{knots[j]}^{t} within piece j
            return coef[j] * _exp_integral(rates[j], t - knots[j])

        ja = np.clip(np.searchsorted(knots, a, side="right") - 1, 0, knots.size - 1)
        jb = np.clip(np.searchsorted(knots, b, side="right") - 1, 0, knots.size - 1)
        same = coef[ja] * np.exp(-rates[ja] * (a - knots[ja])) * _exp_integral(rates[ja], b - a)
        across = (prefix[jb] + head(b, jb)) - (prefix[ja] + head(a, ja))
        return np.where(ja == jb, same, across)

    def tail_sq(self, t):
        return self.tail_product(self, t)

    def integral_sq(self, a, b):
        return self.product_integral(self, a, b)

    def total_sq(self) -> float:
        return float(self.tail_sq(0.0))

    def to_dict(self) -> dict:
        return {"type": "piecewise_exponential", "knots": list(self.knots),
                "levels": list(self.levels), "rates": list(self.rates)}


def function_from_dict(block) -> PiecewiseExponential:
    """Build a deterministic function from a config block."""
    if isinstance(block, (int, float)):
        return PiecewiseExponential.constant(float(block))
    if not isinstance(block, dict) or "type" not in block:
        raise InvalidArgumentError("function block needs a 'type'")
    kind = block["type"]
    allowed = {
        "exponential": {"type", "a", "b"},
        "constant": {"type", "a"},
        "piecewise": {"type", "knots", "values", "tail_level", "tail_rate"},
        "piecewise_exponential": {"type", "knots", "levels", "rates"},
    }
    if kind not in allowed:
        raise InvalidArgumentError(f"unknown function type {kind!r}")
    extra = set(block) - allowed[kind]
    if extra:
        raise InvalidArgumentError(f"unknown keys in {kind} function: {sorted(extra)}")
    try:
        if kind == "exponential":
            return PiecewiseExponential.exponential(block["a"], block["b"])
        if kind == "constant":
            return PiecewiseExponential.constant(block["a"])
        if kind == "piecewise":
            return PiecewiseExponential.piecewise_constant(
                block["knots"], block["values"], block.get("tail_level"), block.get("tail_rate"))
        return PiecewiseExponential(tuple(block["knots"]), tuple(block["levels"]), tuple(block["rates"]))
    except KeyError as exc:
        raise InvalidArgumentError(f"{kind} function is missing key {exc.args[0]!r}") from None
