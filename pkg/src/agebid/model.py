"""Model primitives: environment parameters, age-value curves, competition
models and bid policies for repeated second-price auctions.

The item value depends only on the age tau (time since the last won auction)
through a non-decreasing bounded curve k(tau).  Competition is iid with a
known continuous CDF q; the auction is second price, so the winner pays the
price to beat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, UndefinedConditionalError, ValidationError

__all__ = [
    "EnvParams",
    "ValueCurve",
    "CompetitionModel",
    "BidPolicy",
    "GreedyPolicy",
    "ShadingPolicy",
    "ConstantPolicy",
    "GridPolicy",
    "k_eval",
    "k_deriv",
    "win_prob",
    "expected_payment",
    "one_shot_profit",
    "utility",
    "conditional_price",
    "sample_competition",
]


@dataclass(frozen=True)
class EnvParams:
    """Auction stream parameters: arrival intensity and discount rate.

    Auctions arrive as a Poisson process of intensity ``mu`` per unit time;
    the stream ends at an exponential time of rate ``gamma`` (equivalently,
    payoffs are discounted at rate gamma).  ``gamma == 0`` is permitted only
    for time-average evaluation.
    """

    mu: float
    gamma: float = 0.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValidationError(f"mu must be > 0, got {self.mu}")
        if self.gamma < 0:
            raise ValidationError(f"gamma must be >= 0, got {self.gamma}")

    def require_discounted(self):
        if not self.gamma > 0:
            raise ValidationError("operation requires gamma > 0")


# ---------------------------------------------------------------------------
# Value curves
# ---------------------------------------------------------------------------

class ValueCurve:
    """Age-value function k(tau): non-decreasing, bounded by ``k_sup``.

    Supported kinds: ``exp_saturating`` k = 1-exp(-tau), ``hyperbolic``
    k = 1-1/(1+tau), ``constant``, ``two_step`` (a piecewise-linear staircase
    with two rises), and ``piecewise_linear`` from an explicit knot list.
    Derivatives at kinks use the right-hand slope.
    """

    def __init__(self, kind, k_sup, scalar_value, scalar_deriv,
                 array_value, array_deriv, params=None):
        self.kind = kind
        self.k_sup = float(k_sup)
        self._value = scalar_value
        self._deriv = scalar_deriv
        self._value_arr = array_value
        self._deriv_arr = array_deriv
        self.params = dict(params or {})

    # -- constructors --

    @classmethod
    def exp_saturating(cls):
        return cls(
            "exp_saturating", 1.0,
            lambda t: 1.0 - math.exp(-t),
            lambda t: math.exp(-t),
            lambda t: 1.0 - np.exp(-t),
            lambda t: np.exp(-t),
        )

    @classmethod
    def hyperbolic(cls):
        return cls(
            "hyperbolic", 1.0,
            lambda t: t / (1.0 + t),
            lambda t: 1.0 / (1.0 + t) ** 2,
            lambda t: t / (1.0 + t),
            lambda t: 1.0 / (1.0 + t) ** 2,
        )

    @classmethod
    def constant(cls, value):
        if value < 0:
            raise ValidationError("constant curve value must be >= 0")
        v = float(value)
        return cls(
            "constant", v,
            lambda t: v,
            lambda t: 0.0,
            lambda t: np.full_like(t, v, dtype=float),
            lambda t: np.zeros_like(t, dtype=float),
            params={"value": v},
        )

    @classmethod
    def two_step(cls):
        # min(5t, 0.2) + max(0, min(0.8, 10t - 9.2)): rises to 0.2 by t=0.04,
        # flat until t=0.92, then rises to 1.0 by t=1.0.
        def val(t):
            return min(5.0 * t, 0.2) + max(0.0, min(0.8, 10.0 * t - 9.2))

        def der(t):
            if t < 0.04:
                return 5.0
            if t < 0.92:
                return 0.0
            if t < 1.0:
                return 10.0
            return 0.0

        def val_arr(t):
            return np.minimum(5.0 * t, 0.2) + np.clip(10.0 * t - 9.2, 0.0, 0.8)

        def der_arr(t):
            return np.where(t < 0.04, 5.0, 0.0) + np.where((t >= 0.92) & (t < 1.0), 10.0, 0.0)

        return cls("two_step", 1.0, val, der, val_arr, der_arr)

    @classmethod
    def piecewise_linear(cls, knots):
        knots = [(float(a), float(b)) for a, b in knots]
        if len(knots) < 2:
            raise ValidationError("piecewise_linear curve needs at least 2 knots")
        taus = np.array([a for a, _ in knots])
        ks = np.array([b for _, b in knots])
        if np.any(np.diff(taus) <= 0):
            raise ValidationError("curve knot ages must be strictly increasing")
        if taus[0] < 0:
            raise ValidationError("curve knot ages must be >= 0")
        if np.any(np.diff(ks) < 0):
            raise ValidationError("curve values must be non-decreasing")
        if ks[0] < 0:
            raise ValidationError("curve values must be >= 0")
        slopes = np.diff(ks) / np.diff(taus)

        def val(t):
            return float(np.interp(t, taus, ks))

        def der(t):
            # right-hand slope; 0 beyond the last knot
            i = int(np.searchsorted(taus, t, side="right")) - 1
            if i < 0:
                return 0.0 if taus[0] > 0 else float(slopes[0])
            if i >= len(slopes):
                return 0.0
            return float(slopes[i])

        def val_arr(t):
            return np.interp(t, taus, ks)

        def der_arr(t):
            i = np.searchsorted(taus, t, side="right") - 1
            out = np.zeros_like(t, dtype=float)
            ok = (i >= 0) & (i < len(slopes))
            out[ok] = slopes[i[ok]]
            return out

        return cls("piecewise_linear", ks[-1], val, der, val_arr, der_arr,
                   params={"knots": knots})

    @classmethod
    def from_descriptor(cls, desc):
        """Build a curve from a ``{"kind": ..., "params": {...}}`` mapping."""
        kind = desc.get("kind")
        params = desc.get("params", {})
        extra = set(desc) - {"kind", "params"}
        if extra:
            raise ValidationError(f"unknown curve fields: {sorted(extra)}")
        if kind == "exp_saturating":
            return cls.exp_saturating()
        if kind == "hyperbolic":
            return cls.hyperbolic()
        if kind == "constant":
            return cls.constant(params["value"])
        if kind == "two_step":
            return cls.two_step()
        if kind == "piecewise_linear":
            return cls.piecewise_linear(params["knots"])
        raise ValidationError(f"unknown curve kind: {kind!r}")

    def descriptor(self):
        return {"kind": self.kind, "params": dict(self.params)}

    # -- evaluation --

    def value(self, tau):
        """k(tau) for a scalar age or an array of ages."""
        if isinstance(tau, np.ndarray):
            if np.any(tau < 0):
                raise DomainError("age must be >= 0")
            return self._value_arr(tau)
        if tau < 0:
            raise DomainError(f"age must be >= 0, got {tau}")
        return self._value(tau)

    def deriv(self, tau):
        """Right-hand derivative of k at tau."""
        if isinstance(tau, np.ndarray):
            if np.any(tau < 0):
                raise DomainError("age must be >= 0")
            return self._deriv_arr(tau)
        if tau < 0:
            raise DomainError(f"age must be >= 0, got {tau}")
        return self._deriv(tau)

    def __repr__(self):
        return f"ValueCurve({self.kind!r}, k_sup={self.k_sup})"


# ---------------------------------------------------------------------------
# Competition
# ---------------------------------------------------------------------------

class CompetitionModel:
    """Competition CDF q and the second-price auction arithmetic built on it.

    q(b) is the probability of winning with bid b.  The expected payment is
    p(b) = q(b) b - int_0^b q, the one-shot profit of a truthful bid is
    pi(v) = int_0^v q, and the conditional price is E(C | C <= b).
    Piecewise-linear CDFs are the generic representation; all integrals are
    exact (trapezoid on quadratic segments), so nothing here carries
    quadrature error.  Jump discontinuities cannot be expressed: knots are
    strictly increasing in b, which keeps q continuous as required by the
    policy solver.
    """

    def __init__(self, kind, knots_b=None, knots_q=None):
        self.kind = kind
        if kind == "uniform01":
            self.support_max = 1.0
            self._b = None
            return
        if kind != "piecewise_linear_cdf":
            raise ValidationError(f"unknown competition kind: {kind!r}")
        b = np.asarray(knots_b, dtype=float)
        q = np.asarray(knots_q, dtype=float)
        if b.ndim != 1 or b.shape != q.shape or len(b) < 2:
            raise ValidationError("piecewise CDF needs matching knot arrays, len >= 2")
        if np.any(np.diff(b) <= 0):
            raise ValidationError("CDF knot bids must be strictly increasing (no jumps)")
        if b[0] < 0:
            raise ValidationError("CDF knots must have b >= 0")
        if np.any(np.diff(q) < 0):
            raise ValidationError("CDF values must be non-decreasing")
        if abs(q[0]) > 0:
            raise ValidationError("CDF must start at q = 0")
        if abs(q[-1] - 1.0) > 1e-12:
            raise ValidationError("CDF must reach q = 1 at the last knot")
        q = q.copy()
        q[-1] = 1.0
        self._b = b
        self._q = q
        # cumulative exact integral of q at the knots (q linear on segments)
        seg = np.diff(b) * 0.5 * (q[:-1] + q[1:])
        self._cumint = np.concatenate([[0.0], np.cumsum(seg)])
        self.support_max = float(b[np.argmax(q >= 1.0)])

    @classmethod
    def uniform01(cls):
        return cls("uniform01")

    @classmethod
    def piecewise_linear_cdf(cls, knots):
        knots = list(knots)
        return cls("piecewise_linear_cdf",
                   [a for a, _ in knots], [b for _, b in knots])

    @classmethod
    def from_descriptor(cls, desc):
        kind = desc.get("kind")
        params = desc.get("params", {})
        extra = set(desc) - {"kind", "params"}
        if extra:
            raise ValidationError(f"unknown competition fields: {sorted(extra)}")
        if kind == "uniform01":
            return cls.uniform01()
        if kind == "piecewise_linear_cdf":
            return cls.piecewise_linear_cdf(params["knots"])
        raise ValidationError(f"unknown competition kind: {kind!r}")

    def descriptor(self):
        if self.kind == "uniform01":
            return {"kind": "uniform01", "params": {}}
        return {"kind": "piecewise_linear_cdf",
                "params": {"knots": [[float(a), float(b)]
                                     for a, b in zip(self._b, self._q)]}}

    # -- CDF and integrals --

    def win_prob(self, b):
        """q(b), the probability that bid b beats the competition."""
        if b < 0:
            raise DomainError(f"bid must be >= 0, got {b}")
        if self.kind == "uniform01":
            return b if b < 1.0 else 1.0
        return float(np.interp(b, self._b, self._q))

    def cdf_integral(self, b):
        """int_0^b q(t) dt, exact."""
        if b < 0:
            raise DomainError(f"bid must be >= 0, got {b}")
        if self.kind == "uniform01":
            return 0.5 * b * b if b < 1.0 else b - 0.5
        bs, qs = self._b, self._q
        if b <= bs[0]:
            return 0.0
        i = int(np.searchsorted(bs, b, side="right")) - 1
        if i >= len(bs) - 1:
            return float(self._cumint[-1] + (b - bs[-1]))
        db = b - bs[i]
        qb = qs[i] + (qs[i + 1] - qs[i]) * db / (bs[i + 1] - bs[i])
        return float(self._cumint[i] + 0.5 * (qs[i] + qb) * db)

    def expected_payment(self, b):
        """p(b) = q(b) b - int_0^b q: mean second price paid by bid b."""
        return self.win_prob(b) * b - self.cdf_integral(b)

    def one_shot_profit(self, v):
        """pi(v) = int_0^v q: expected profit of a truthful one-shot bid."""
        if v < 0:
            raise DomainError(f"value must be >= 0, got {v}")
        return self.cdf_integral(v)

    def utility(self, v, b):
        """U(v, b) = q(b) v - p(b): expected profit bidding b with value v."""
        return self.win_prob(b) * v - self.expected_payment(b)

    def conditional_price(self, b):
        """E(C | C <= b) = b - (int_0^b q)/q(b); needs q(b) > 0."""
        if b < 0:
            raise DomainError(f"bid must be >= 0, got {b}")
        qb = self.win_prob(b)
        if qb <= 0.0:
            raise UndefinedConditionalError(
                f"conditional price undefined: q({b}) = 0")
        return b - self.cdf_integral(b) / qb

    def initial_slope(self):
        """Right-hand slope of q at 0 (density at the bottom of the support)."""
        if self.kind == "uniform01":
            return 1.0
        if self._b[0] > 0:
            return 0.0
        return float((self._q[1] - self._q[0]) / (self._b[1] - self._b[0]))

    # vectorized variants used by the quadrature and simulation engines

    def win_prob_array(self, b):
        if self.kind == "uniform01":
            return np.clip(b, 0.0, 1.0)
        return np.interp(b, self._b, self._q)

    def cdf_integral_array(self, b):
        if self.kind == "uniform01":
            return np.where(b < 1.0, 0.5 * np.square(np.clip(b, 0.0, None)), b - 0.5)
        bs, qs = self._b, self._q
        i = np.clip(np.searchsorted(bs, b, side="right") - 1, 0, len(bs) - 2)
        db = np.clip(b - bs[i], 0.0, None)
        qb = qs[i] + (qs[i + 1] - qs[i]) * db / (bs[i + 1] - bs[i])
        out = self._cumint[i] + 0.5 * (qs[i] + qb) * db
        out = np.where(b <= bs[0], 0.0, out)
        return np.where(b > bs[-1], self._cumint[-1] + (b - bs[-1]), out)

    def utility_array(self, v, b):
        qb = self.win_prob_array(b)
        payment = qb * b - self.cdf_integral_array(b)
        return qb * v - payment

    # -- sampling --

    def sample(self, rng, size=None):
        """Draw competition prices by inverse-CDF from ``rng`` uniforms."""
        u = rng.random(size)
        return self.inverse_cdf(u)

    def inverse_cdf(self, u):
        if self.kind == "uniform01":
            return u
        return np.interp(u, self._q, self._b)

    def __repr__(self):
        return f"CompetitionModel({self.kind!r}, support_max={self.support_max})"


# ---------------------------------------------------------------------------
# Bid policies
# ---------------------------------------------------------------------------

class BidPolicy:
    """A bid as a function of age.  Subclasses implement ``bid``."""

    kind = "abstract"

    def bid(self, tau):
        raise NotImplementedError

    def label(self):
        return self.kind


@dataclass(frozen=True)
class GreedyPolicy(BidPolicy):
    """Truthful one-shot bidding: b(tau) = k(tau)."""

    curve: ValueCurve
    kind = "greedy"

    def bid(self, tau):
        return self.curve.value(tau)


@dataclass(frozen=True)
class ShadingPolicy(BidPolicy):
    """Linear shading of the value: b(tau) = alpha * k(tau), alpha in [0, 1]."""

    curve: ValueCurve
    alpha: float
    kind = "shading"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"shading factor must be in [0, 1], got {self.alpha}")

    def bid(self, tau):
        return self.alpha * self.curve.value(tau)

    def label(self):
        return f"shading({self.alpha:g})"


@dataclass(frozen=True)
class ConstantPolicy(BidPolicy):
    """Bid a constant amount at every age."""

    value: float
    kind = "constant"

    def __post_init__(self):
        if self.value < 0:
            raise ValidationError("constant bid must be >= 0")

    def bid(self, tau):
        if isinstance(tau, np.ndarray):
            return np.full_like(tau, self.value, dtype=float)
        return self.value

    def label(self):
        return f"constant({self.value:g})"


class GridPolicy(BidPolicy):
    """Bid given on an age grid, linearly interpolated, constant beyond the
    last knot (and before the first)."""

    kind = "grid"

    def __init__(self, taus, bids):
        taus = np.asarray(taus, dtype=float)
        bids = np.asarray(bids, dtype=float)
        if taus.ndim != 1 or taus.shape != bids.shape or len(taus) < 2:
            raise ValidationError("grid policy needs matching 1-d knot arrays, len >= 2")
        if np.any(np.diff(taus) <= 0):
            raise ValidationError("grid policy ages must be strictly increasing")
        if np.any(bids < 0):
            raise ValidationError("grid policy bids must be >= 0")
        self.taus = taus
        self.bids = bids

    def bid(self, tau):
        out = np.interp(tau, self.taus, self.bids)
        if isinstance(tau, np.ndarray):
            return out
        return float(out)


# ---------------------------------------------------------------------------
# Operation-style wrappers
# ---------------------------------------------------------------------------

def k_eval(curve: ValueCurve, tau):
    """Item value at age tau."""
    return curve.value(tau)


def k_deriv(curve: ValueCurve, tau):
    """Right-hand derivative of the value curve at age tau."""
    return curve.deriv(tau)


def win_prob(comp: CompetitionModel, b):
    return comp.win_prob(b)


def expected_payment(comp: CompetitionModel, b):
    return comp.expected_payment(b)


def one_shot_profit(comp: CompetitionModel, v):
    return comp.one_shot_profit(v)


def utility(comp: CompetitionModel, v, b):
    return comp.utility(v, b)


def conditional_price(comp: CompetitionModel, b):
    return comp.conditional_price(b)


def sample_competition(comp: CompetitionModel, rng, size=None):
    """Draw from the competition distribution; deterministic given the rng state."""
    return comp.sample(rng, size)
