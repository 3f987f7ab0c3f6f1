"""Adaptive explicit Runge-Kutta integrator for scalar first-order ODEs.

Dormand-Prince 5(4) embedded pair with PI step-size control, a quartic
dense-output interpolant, and escape guards.  The guards classify diverging
trajectories for the shooting solver: integration stops at the first
crossing of ``guard_hi`` or ``guard_lo``, located on the interpolant so the
termination point is accurate to interpolation error, not step size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import IntegrationError, ValidationError

__all__ = ["IvpSpec", "Trajectory", "integrate"]

# Dormand-Prince 5(4) tableau.  Stage 7 reuses the step endpoint (FSAL).
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
# b - b_hat: weights of the embedded error estimate
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)
# Quartic continuous extension b_i(theta) = sum_j P[i][j] theta^(j+1); satisfies
# the order-4 interpolation conditions plus u(0)=y0, u(1)=y1, u'(0)=k1, u'(1)=k7,
# so the dense output is C^1 across steps.
_P = (
    (1.0, -197 / 72, 817 / 288, -1163 / 1152),
    (0.0, 0.0, 0.0, 0.0),
    (0.0, 12080 / 3339, -18160 / 3339, 7580 / 3339),
    (0.0, -5 / 24, 145 / 48, -415 / 192),
    (0.0, -243 / 106, 5589 / 1696, -8991 / 6784),
    (0.0, 55 / 21, -33 / 7, 187 / 84),
    (0.0, -1.0, 1.0, 0.0),
)

_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_SAFETY = 0.9
# PI controller exponents for a 5th-order error estimator
_PI_ALPHA = 0.7 / 5.0
_PI_BETA = 0.4 / 5.0


@dataclass
class IvpSpec:
    """Initial value problem y' = rhs(t, y), y(0) = y0 on [0, t_end]."""

    rhs: Callable[[float, float], float]
    y0: float
    t_end: float
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    guard_hi: float = math.inf
    guard_lo: float = -math.inf
    grid_step: Optional[float] = None
    max_step: float = math.inf
    first_step: Optional[float] = None

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValidationError("t_end must be > 0")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValidationError("tolerances must be > 0")
        if not self.guard_lo < self.y0 < self.guard_hi:
            raise ValidationError("y0 must lie strictly between the guards")
        if self.grid_step is not None and not self.grid_step > 0:
            raise ValidationError("grid_step must be > 0")


@dataclass
class Trajectory:
    """Integration output: y sampled on a grid, plus how the run ended.

    ``termination`` is ``completed`` when t_end was reached, or
    ``escaped_up`` / ``escaped_down`` when a guard was crossed; in that
    case the final grid entry is the located crossing and ``t_stop`` its
    time.
    """

    times: np.ndarray
    values: np.ndarray
    termination: str
    t_stop: float

    @property
    def escaped(self):
        return self.termination != "completed"


def _interp_theta(y, h, k, theta):
    """Dense-output value at fraction theta of the step."""
    acc = 0.0
    for i in range(7):
        p = _P[i]
        acc += k[i] * (theta * (p[0] + theta * (p[1] + theta * (p[2] + theta * p[3]))))
    return y + h * acc


def _locate_crossing(y, h, k, theta_hi, level, upward):
    """Bisect on the interpolant for the first crossing of ``level`` in
    (0, theta_hi], given that the crossed side is at theta_hi."""
    lo, hi = 0.0, theta_hi
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        v = _interp_theta(y, h, k, mid)
        crossed = v >= level if upward else v <= level
        if crossed:
            hi = mid
        else:
            lo = mid
    return hi, _interp_theta(y, h, k, hi)


def integrate(spec: IvpSpec) -> Trajectory:
    """Integrate the IVP with local error control and guard detection.

    Local error per step is kept below ``abs_tol + rel_tol * |y|``.  Output
    is recorded on a uniform grid of spacing ``grid_step`` via the quartic
    interpolant (or at the accepted step endpoints when ``grid_step`` is
    None).  Raises :class:`IntegrationError` on step underflow, carrying the
    time reached.
    """
    f = spec.rhs
    T = spec.t_end
    t, y = 0.0, float(spec.y0)
    k1 = f(t, y)

    times = [0.0]
    values = [y]
    gs = spec.grid_step
    next_out = gs if gs is not None else None

    min_step = 1e-12 * T
    h = spec.first_step if spec.first_step is not None else min(T * 1e-4, spec.max_step)
    h = max(h, min_step)
    err_prev = 1.0
    rejected = False
    k = [0.0] * 7

    while t < T:
        h = min(h, T - t, spec.max_step)
        k[0] = k1
        for i in range(1, 7):
            ai = _A[i]
            acc = 0.0
            for j in range(i):
                acc += ai[j] * k[j]
            k[i] = f(t + _C[i] * h, y + h * acc)
        y1 = y + h * (_B[0] * k[0] + _B[2] * k[2] + _B[3] * k[3]
                      + _B[4] * k[4] + _B[5] * k[5])
        err = h * (_E[0] * k[0] + _E[2] * k[2] + _E[3] * k[3]
                   + _E[4] * k[4] + _E[5] * k[5] + _E[6] * k[6])
        scale = spec.abs_tol + spec.rel_tol * max(abs(y), abs(y1))
        enorm = abs(err) / scale

        if not enorm <= 1.0:  # rejects NaN as well
            rejected = True
            shrink = _SAFETY * enorm ** -0.2 if math.isfinite(enorm) else _MIN_FACTOR
            h *= max(_MIN_FACTOR, shrink)
            if h < min_step:
                raise IntegrationError(
                    f"step size underflow at t={t:.6g}", t_stop=t)
            continue

        # accepted: sample the dense grid inside (t, t + h]
        crossing = None  # (theta, time, value, upward)
        if gs is not None:
            while next_out <= t + h + 1e-14 * T:
                theta = (next_out - t) / h
                theta = min(theta, 1.0)
                yv = _interp_theta(y, h, k, theta)
                if yv >= spec.guard_hi or yv <= spec.guard_lo:
                    up = yv >= spec.guard_hi
                    level = spec.guard_hi if up else spec.guard_lo
                    th, yc = _locate_crossing(y, h, k, theta, level, up)
                    crossing = (t + th * h, yc, up)
                    break
                times.append(next_out)
                values.append(yv)
                next_out += gs
        if crossing is None and (y1 >= spec.guard_hi or y1 <= spec.guard_lo):
            up = y1 >= spec.guard_hi
            level = spec.guard_hi if up else spec.guard_lo
            th, yc = _locate_crossing(y, h, k, 1.0, level, up)
            crossing = (t + th * h, yc, up)

        if crossing is not None:
            t_cross, y_cross, up = crossing
            if t_cross > times[-1] + 1e-14 * T:
                times.append(t_cross)
                values.append(y_cross)
            else:
                values[-1] = y_cross
            return Trajectory(np.asarray(times), np.asarray(values),
                              "escaped_up" if up else "escaped_down", t_cross)

        t += h
        y = y1
        k1 = k[6]
        if gs is None:
            times.append(t)
            values.append(y)

        if rejected:
            fac = min(1.0, _SAFETY * enorm ** -0.2) if enorm > 0 else 1.0
            rejected = False
        else:
            e = max(enorm, 1e-10)
            fac = _SAFETY * e ** -_PI_ALPHA * err_prev ** _PI_BETA
            fac = min(_MAX_FACTOR, max(_MIN_FACTOR, fac))
        err_prev = max(enorm, 1e-10)
        h = max(h * fac, min_step)

    if gs is not None and T > times[-1] + 1e-14 * T:
        times.append(T)
        values.append(y)
    return Trajectory(np.asarray(times), np.asarray(values), "completed", T)
