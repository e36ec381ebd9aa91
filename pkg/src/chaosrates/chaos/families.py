"""Model families for the terminal random variable X = int_0^inf sigma_s dW_s.

Closed-form families expose the conditional moments needed downstream:

* ``pi(times, W)``: E_t[int_t^inf sigma^2] at every column of ``W``
* ``tail_mass(times, W, T)``: E_t[int_T^inf sigma^2] for T >= t
* ``second_moment(times, W, T)``: E_t[sigma_T^2]
* ``mean_sigma_sq(s)`` / ``unconditional_tail(T)``: path-free moments
* ``theta(times, W)``: diffusion coefficient of pi

``W`` is always an (m, n) array of path values aligned with ``times``.
"""

from __future__ import annotations

import importlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import DegenerateSpecError, DivergentMassError, InvalidArgumentError
from .functions import PiecewiseExponential, function_from_dict

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)
_MAX_SEGMENT = 0.5


def _full(values, shape):
    return np.broadcast_to(values, shape).copy()


class ChaosSpec:
    """Base class for the four model families."""

    family = "abstract"
    closed_form = True

    def sigma(self, times, W):
        raise NotImplementedError

    def ito_integrand(self, times, W):
        """Integrand used on each grid interval of the Ito sum (left point)."""
        return self.sigma(times, W)[:, :-1]

    def cumulative_sigma_sq(self, times, W, sigma_sq):
        """int_0^t sigma^2 ds by the left-endpoint rule."""
        out = np.zeros_like(sigma_sq)
        np.cumsum(sigma_sq[:, :-1] * np.diff(times), axis=1, out=out[:, 1:])
        return out

    def log_bank(self, times, W, short_rate):
        """log B_t by the left-endpoint rule on r."""
        out = np.zeros_like(short_rate)
        np.cumsum(short_rate[:, :-1] * np.diff(times), axis=1, out=out[:, 1:])
        return out

    def scaled(self, c: float) -> "ChaosSpec":
        raise NotImplementedError

    def validate(self) -> float:
        raise NotImplementedError

    def total_mass(self) -> float:
        return float(self.unconditional_tail(0.0))

    def bond(self, times, W, T):
        return self.tail_mass(times, W, T) / self.pi(times, W)

    def forward(self, times, W, T):
        return self.second_moment(times, W, T) / self.tail_mass(times, W, T)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class FirstChaos(ChaosSpec):
    """Deterministic integrand: X is Gaussian and every rate is deterministic."""

    sigma_fn: PiecewiseExponential
    family = "first_chaos"

    def validate(self) -> float:
        f = self.sigma_fn
        if f.vanishes_eventually():
            raise DegenerateSpecError("sigma vanishes beyond the last knot")
        if not f.square_integrable():
            raise DivergentMassError("sigma tail must decay (tail rate > 0)")
        return self.total_mass()

    def sigma(self, times, W):
        return _full(self.sigma_fn(times), W.shape)

    def ito_integrand(self, times, W):
        # rms of sigma over each interval, so the Ito sum has the exact variance
        mid = 0.5 * (times[:-1] + times[1:])
        var = self.sigma_fn.integral_sq(times[:-1], times[1:]) / np.diff(times)
        sign = np.where(self.sigma_fn(mid) < 0, -1.0, 1.0)
        return _full(sign * np.sqrt(np.maximum(var, 0.0)), (W.shape[0], times.size - 1))

    def cumulative_sigma_sq(self, times, W, sigma_sq):
        total = self.sigma_fn.tail_sq(0.0)
        return _full(total - self.sigma_fn.tail_sq(times), W.shape)

    def log_bank(self, times, W, short_rate):
        # deterministic pi: int_0^t r = log(pi_0 / pi_t) exactly
        tail = self.sigma_fn.tail_sq(times)
        # the ratio form keeps B bit-identical when sigma is rescaled by a power of 2
        return _full(np.log(tail[0] / tail), W.shape)

    def pi(self, times, W):
        return _full(self.sigma_fn.tail_sq(times), W.shape)

    def tail_mass(self, times, W, T):
        return _full(self.sigma_fn.tail_sq(np.broadcast_to(T, times.shape)), W.shape)

    def second_moment(self, times, W, T):
        return _full(self.sigma_fn(np.broadcast_to(T, times.shape)) ** 2, W.shape)

    def mean_sigma_sq(self, s):
        return self.sigma_fn(s) ** 2

    def unconditional_tail(self, T):
        return self.sigma_fn.tail_sq(T)

    def theta(self, times, W):
        return np.zeros(W.shape)

    def scaled(self, c):
        return FirstChaos(self.sigma_fn.scaled(c))

    def to_dict(self):
        return {"family": self.family, "sigma": self.sigma_fn.to_dict()}


@dataclass(frozen=True)
class GbmExponential(ChaosSpec):
    """sigma_t = scale * sqrt(r) * exp(-rt/2 - lam W_t/2 - lam^2 t/4).

    The kernel is the Black-Scholes state price density
    pi_t = scale^2 exp(-rt - lam W_t - lam^2 t/2) with constant short rate r.
    """

    r: float
    lam: float
    scale: float = 1.0
    family = "gbm"

    def validate(self) -> float:
        if not (np.isfinite(self.r) and np.isfinite(self.lam) and np.isfinite(self.scale)):
            raise InvalidArgumentError("gbm parameters must be finite")
        if self.scale == 0:
            raise DegenerateSpecError("gbm scale must be non-zero")
        if self.r <= 0:
            raise DivergentMassError("gbm needs r > 0 for a finite total mass")
        return self.total_mass()

    def _exponent(self, times, W):
        return -self.r * times - self.lam * W - 0.5 * self.lam**2 * times

    def sigma(self, times, W):
        return self.scale * np.sqrt(self.r) * np.exp(0.5 * self._exponent(times, W))

    def pi(self, times, W):
        return self.scale**2 * np.exp(self._exponent(times, W))

    def tail_mass(self, times, W, T):
        return self.scale**2 * np.exp(-self.r * T - self.lam * W - 0.5 * self.lam**2 * times)

    def second_moment(self, times, W, T):
        return self.r * self.tail_mass(times, W, T)

    def bond(self, times, W, T):
        return _full(np.exp(-self.r * (T - times)), W.shape)

    def forward(self, times, W, T):
        return np.full(W.shape, float(self.r))

    def mean_sigma_sq(self, s):
        return self.scale**2 * self.r * np.exp(-self.r * np.asarray(s, dtype=float))

    def unconditional_tail(self, T):
        return self.scale**2 * np.exp(-self.r * np.asarray(T, dtype=float))

    def theta(self, times, W):
        return -self.lam * self.pi(times, W)

    def scaled(self, c):
        return GbmExponential(self.r, self.lam, self.scale * c)

    def to_dict(self):
        return {"family": self.family, "r": self.r, "lambda": self.lam, "scale": self.scale}


@dataclass(frozen=True)
class SecondChaos(ChaosSpec):
    """sigma_s = psi(s) + h(s) Y_s with Y_s = int_0^s g(u) dW_u.

    This is the separable kernel phi(u, s) = g(u) h(s). On the grid, Y is
    built from Brownian increments weighted by the rms of g over each step,
    so Y has the exact variance int_0^t g^2 at grid times.
    """

    psi: PiecewiseExponential
    g: PiecewiseExponential
    h: PiecewiseExponential
    family = "second_chaos"

    def validate(self) -> float:
        psi, g, h = self.psi, self.g, self.h
        if not psi.square_integrable():
            raise DivergentMassError("psi tail must decay")
        if not h.square_integrable():
            raise DivergentMassError("h tail must decay")
        if not h.vanishes_eventually() and not g.vanishes_eventually() and g.tail_rate + h.tail_rate <= 0:
            raise DivergentMassError("g*h tail must decay")
        g_alive = any(v != 0.0 for v in g.levels)
        if psi.vanishes_eventually() and (h.vanishes_eventually() or not g_alive):
            raise DegenerateSpecError("sigma vanishes after a finite time")
        mass = self.total_mass()
        if not np.isfinite(mass):
            raise DivergentMassError("total mass is infinite")
        return mass

    # deterministic building blocks
    def _A(self, t):
        return self.psi.tail_sq(t)

    def _B(self, t):
        return self.psi.tail_product(self.h, t)

    def _C(self, t):
        return self.h.tail_sq(t)

    def _G(self, a, b):
        return self.g.integral_sq(a, b)

    def _D(self, t):
        """int_t^inf g(u)^2 C(u) du: Gauss-Legendre up to the last knot, analytic after."""
        t = np.asarray(t, dtype=float)
        g, h = self.g, self.h
        K = max(g.last_knot, h.last_knot)

        def tail_after(u):
            if g.vanishes_eventually() or h.vanishes_eventually():
                return np.zeros_like(u)
            gh = g(u) * h(u)
            return gh * gh / (2 * h.tail_rate * 2 * (g.tail_rate + h.tail_rate))

        flat = t.ravel()
        out = np.empty_like(flat)
        late = flat >= K
        out[late] = tail_after(flat[late])
        if np.any(~late):
            early = np.unique(flat[~late])
            knots = np.union1d(g.knots, h.knots)
            breaks = np.union1d(np.union1d(early, knots[knots < K]), [K])
            breaks = breaks[breaks >= early[0]]
            # split long segments so the fixed-order rule stays accurate
            pieces = [breaks[:1]]
            for a, b in zip(breaks[:-1], breaks[1:]):
                n = max(1, int(np.ceil((b - a) / _MAX_SEGMENT)))
                seg_pts = a + (b - a) * np.arange(1, n + 1) / n
                seg_pts[-1] = b
                pieces.append(seg_pts)
            fine = np.concatenate(pieces)
            a, b = fine[:-1], fine[1:]
            half = 0.5 * (b - a)
            u = (0.5 * (a + b))[:, None] + half[:, None] * _GL_NODES[None, :]
            gu = g(u)
            seg = half * ((gu * gu * self._C(u)) @ _GL_WEIGHTS)
            at_fine = np.append(np.cumsum(seg[::-1])[::-1], 0.0) + tail_after(np.array([K]))[0]
            idx = np.searchsorted(fine, flat[~late])
            out[~late] = at_fine[idx]
        return out.reshape(t.shape)

    def state(self, times, W):
        """Y_t on the grid."""
        dt = np.diff(times)
        g = self.g
        rms = np.sqrt(g.integral_sq(times[:-1], times[1:]) / dt)
        sign = np.where(g(0.5 * (times[:-1] + times[1:])) < 0, -1.0, 1.0)
        Y = np.zeros(W.shape)
        np.cumsum(sign * rms * np.diff(W, axis=1), axis=1, out=Y[:, 1:])
        return Y

    def sigma(self, times, W):
        Y = self.state(times, W)
        return self.psi(times) + self.h(times) * Y

    def pi(self, times, W):
        Y = self.state(times, W)
        return self._A(times) + 2 * Y * self._B(times) + Y * Y * self._C(times) + self._D(times)

    def tail_mass(self, times, W, T):
        Y = self.state(times, W)
        TT = np.broadcast_to(np.asarray(T, dtype=float), times.shape)
        A, B, C, D = self._A(TT), self._B(TT), self._C(TT), self._D(TT)
        return A + 2 * Y * B + Y * Y * C + self._G(times, np.maximum(TT, times)) * C + D

    def second_moment(self, times, W, T):
        Y = self.state(times, W)
        TT = np.broadcast_to(np.asarray(T, dtype=float), times.shape)
        hT = self.h(TT)
        mean = self.psi(TT) + hT * Y
        return mean * mean + hT * hT * self._G(times, np.maximum(TT, times))

    def mean_sigma_sq(self, s):
        s = np.asarray(s, dtype=float)
        hs = self.h(s)
        return self.psi(s) ** 2 + hs * hs * self._G(np.zeros_like(s), s)

    def unconditional_tail(self, T):
        T = np.asarray(T, dtype=float)
        return self._A(T) + self._G(np.zeros_like(T), T) * self._C(T) + self._D(T)

    def theta(self, times, W):
        Y = self.state(times, W)
        return 2 * self.g(times) * (self._B(times) + Y * self._C(times))

    def scaled(self, c):
        return SecondChaos(self.psi.scaled(c), self.g, self.h.scaled(c))

    def to_dict(self):
        return {"family": self.family, "psi": self.psi.to_dict(), "g": self.g.to_dict(),
                "h": self.h.to_dict()}


Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class CustomIntegrand(ChaosSpec):
    """User-supplied adapted integrand, handled by nested Monte Carlo.

    ``evaluator(times, W)`` maps an (m, n) array of path values to sigma at
    each column; column j may only use columns <= j. Nothing is added beyond
    the tail horizon; ``tail_bound`` is the user's certified bound on the
    mass that truncation drops.
    """

    evaluator: Evaluator
    n_inner: int
    tail_bound: float = 0.0
    amplitude: float = 1.0
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)
    family = "custom"
    closed_form = False

    def validate(self):
        if not callable(self.evaluator):
            raise InvalidArgumentError("custom evaluator must be callable")
        if int(self.n_inner) != self.n_inner or self.n_inner < 1:
            raise InvalidArgumentError("custom family needs n_inner >= 1")
        if not (self.tail_bound >= 0 and np.isfinite(self.tail_bound)):
            raise InvalidArgumentError("tail_bound must be finite and >= 0")
        return None

    def sigma(self, times, W):
        out = np.asarray(self.evaluator(times, W), dtype=float)
        if out.shape != W.shape:
            raise InvalidArgumentError(f"evaluator returned shape {out.shape}, expected {W.shape}")
        return out if self.amplitude == 1.0 else self.amplitude * out

    def scaled(self, c):
        return CustomIntegrand(self.evaluator, self.n_inner, self.tail_bound * c * c,
                               self.amplitude * c, self.name, self.params)

    def to_dict(self):
        return {"family": self.family, "evaluator": self.name, "params": dict(self.params),
                "n_inner": self.n_inner, "tail_bound": self.tail_bound}


class SignFlip(ChaosSpec):
    """Wrap a spec and multiply sigma by -1 on [start, stop).

    Only the sign of sigma changes, so every kernel quantity is unchanged;
    the Ito sum for X is not.
    """

    def __init__(self, base: ChaosSpec, start: float = 0.0, stop: float = np.inf):
        self.base = base
        self.start = float(start)
        self.stop = float(stop)
        self.family = base.family
        self.closed_form = base.closed_form

    def _unit(self, times):
        return np.where((times >= self.start) & (times < self.stop), -1.0, 1.0)

    def sigma(self, times, W):
        return self._unit(times) * self.base.sigma(times, W)

    def ito_integrand(self, times, W):
        return self._unit(times[:-1]) * self.base.ito_integrand(times, W)

    def cumulative_sigma_sq(self, times, W, sigma_sq):
        return self.base.cumulative_sigma_sq(times, W, sigma_sq)

    def log_bank(self, times, W, short_rate):
        return self.base.log_bank(times, W, short_rate)

    def scaled(self, c):
        return SignFlip(self.base.scaled(c), self.start, self.stop)

    def validate(self):
        return self.base.validate()

    def total_mass(self):
        return self.base.total_mass()

    def bond(self, times, W, T):
        return self.base.bond(times, W, T)

    def forward(self, times, W, T):
        return self.base.forward(times, W, T)

    def __getattr__(self, name):
        # closed-form moments depend on sigma^2 only
        if name == "base":
            raise AttributeError(name)
        return getattr(self.base, name)

    def to_dict(self):
        return {**self.base.to_dict(), "sign_flip": [self.start, self.stop]}


def flip_sign(spec: ChaosSpec, start: float = 0.0, stop: float = np.inf) -> SignFlip:
    return SignFlip(spec, start, stop)


def scale_spec(spec: ChaosSpec, c: float) -> ChaosSpec:
    """Multiply sigma by ``c``; the kernel scales by ``c**2`` and prices are unchanged."""
    if not c > 0:
        raise InvalidArgumentError("scale factor must be positive")
    return spec.scaled(c)


# -- evaluators for the custom family -------------------------------------

def gbm_evaluator(r: float, lam: float) -> Evaluator:
    spec = GbmExponential(r, lam)
    return spec.sigma


def power_tail_evaluator(a: float = 1.0) -> Evaluator:
    """Deterministic sigma_s = a / (1 + s): a heavy tail with mass a^2 / (1 + t) beyond t."""
    def evaluator(times, W):
        return np.broadcast_to(a / (1.0 + times), W.shape).copy()
    return evaluator


def exponential_evaluator(a: float = 1.0, b: float = 0.5) -> Evaluator:
    def evaluator(times, W):
        return np.broadcast_to(a * np.exp(-b * times), W.shape).copy()
    return evaluator


EVALUATORS = {
    "gbm": gbm_evaluator,
    "power_tail": power_tail_evaluator,
    "exponential": exponential_evaluator,
}


def resolve_evaluator(name: str, params: dict) -> Evaluator:
    """Look up a built-in evaluator factory or import ``module:attr``."""
    if name in EVALUATORS:
        return EVALUATORS[name](**params)
    if ":" not in name:
        raise InvalidArgumentError(f"unknown evaluator {name!r}")
    module, attr = name.split(":", 1)
    obj = getattr(importlib.import_module(module), attr)
    return obj(**params) if params else obj


def as_custom(spec: ChaosSpec, n_inner: int, tail_bound: float = 0.0) -> CustomIntegrand:
    """The same sigma functional, but evaluated by nested simulation."""
    return CustomIntegrand(spec.sigma, n_inner, tail_bound, name=f"nested:{spec.family}")


_FAMILY_KEYS = {
    "first_chaos": {"family", "sigma"},
    "second_chaos": {"family", "psi", "g", "h"},
    "gbm": {"family", "r", "lambda", "scale"},
    "custom": {"family", "evaluator", "params", "n_inner", "tail_bound"},
}


def spec_from_dict(block: dict) -> ChaosSpec:
    """Parse a spec block with a ``family`` discriminator; unknown keys are rejected."""
    if not isinstance(block, dict) or "family" not in block:
        raise InvalidArgumentError("spec block needs a 'family' key")
    fam = block["family"]
    if fam not in _FAMILY_KEYS:
        raise InvalidArgumentError(f"unknown family {fam!r}")
    extra = set(block) - _FAMILY_KEYS[fam]
    if extra:
        raise InvalidArgumentError(f"unknown keys in {fam} spec: {sorted(extra)}")
    try:
        if fam == "first_chaos":
            return FirstChaos(function_from_dict(block["sigma"]))
        if fam == "second_chaos":
            return SecondChaos(function_from_dict(block["psi"]), function_from_dict(block["g"]),
                               function_from_dict(block["h"]))
        if fam == "gbm":
            return GbmExponential(float(block["r"]), float(block["lambda"]), float(block.get("scale", 1.0)))
        params = dict(block.get("params") or {})
        name = block["evaluator"]
        return CustomIntegrand(resolve_evaluator(name, params), int(block["n_inner"]),
                               float(block.get("tail_bound", 0.0)), name=name, params=params)
    except KeyError as exc:
        raise InvalidArgumentError(f"{fam} spec is missing key {exc.args[0]!r}") from None
