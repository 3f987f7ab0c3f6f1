"""Optimal-policy solver: shooting on the value ODE plus bisection.

The optimal value function solves dY/dt = Phi(t, Y, v) with Y(0) = v, where
Phi(t, y, v) = gamma y - mu pi(k(t) + v - y), for exactly one initial value
v = V0*: every other start diverges, upward when v is too high and downward
when it is too low.  Bisection on v therefore converges at rate 2^-n; the
final trajectory yields the value grid V*(tau) and the optimal bid
b*(tau) = max(0, k(tau) + V0* - V*(tau)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import BracketError, DomainError, SolverError
from .model import BidPolicy, CompetitionModel, EnvParams, ValueCurve
from .ode import IvpSpec, Trajectory, integrate

__all__ = [
    "SolverConfig",
    "ShootResult",
    "SolveResult",
    "OptimalPolicy",
    "BidOdeCheck",
    "phi",
    "shoot",
    "bisect_v0",
    "optimal_bid",
    "bid_ode_crosscheck",
    "sensitivity",
]

_PHI_TIE_TOL = 1e-14


@dataclass
class SolverConfig:
    """Bisection and integration controls.

    ``a0``/``b0`` default to the guaranteed bracket [0, mu k_sup / gamma]
    (the value of winning every auction for free).  ``T_horizon`` defaults
    to the time by which a trajectory started ``width_tol`` away from the
    stable value must have left the guard band.  ``policy_tol`` sets the
    acceptable contamination of the value grid from the residual bracket
    width; ages where the error amplification exceeds it are cut off.
    """

    a0: Optional[float] = None
    b0: Optional[float] = None
    n_iter: int = 60
    width_tol: float = 0.0
    policy_tol: float = 1e-4
    grid_step: Optional[float] = None
    T_horizon: Optional[float] = None
    eps_k: float = 1e-6
    rel_tol: float = 1e-11
    abs_tol: float = 1e-14

    def resolved_bracket(self, env, curve):
        a0 = 0.0 if self.a0 is None else float(self.a0)
        b0 = env.mu * curve.k_sup / env.gamma if self.b0 is None else float(self.b0)
        if not b0 > a0:
            raise BracketError(f"need b0 > a0, got [{a0}, {b0}]")
        return a0, b0

    def resolved_grid_step(self, env):
        if self.grid_step is not None:
            return float(self.grid_step)
        return min(0.01, 1.0 / (10.0 * env.mu))

    def resolved_horizon(self, env, guard_hi, b0):
        if self.T_horizon is not None:
            return float(self.T_horizon)
        floor = max(self.width_tol, 1e-14 * max(1.0, b0), 1e-300)
        return (1.0 / env.gamma) * math.log(max(guard_hi, 1.0) / floor)


@dataclass
class ShootResult:
    """One shooting run: the trajectory of Z^v and its divergence side."""

    trajectory: Trajectory
    classification: str  # "above" (v > V0*) or "below"
    v: float


@dataclass
class SolveResult:
    """Bisection output: V0* bracket plus the trustworthy value/bid grids."""

    v0_star: float
    bracket_history: list
    width_history: list
    tau_grid: np.ndarray
    V_star: np.ndarray
    b_star: np.ndarray
    tau_max: float
    final_width: float
    env: EnvParams
    comp: CompetitionModel
    curve: ValueCurve
    grid_step: float

    def policy(self) -> "OptimalPolicy":
        return OptimalPolicy(self)


def phi(t, v, lam, env: EnvParams, comp: CompetitionModel, curve: ValueCurve):
    """Shooting dynamics: gamma v - mu pi(k(t) + lambda - v), with the
    one-shot profit clamped to truthful bids >= 0."""
    u = curve.value(t) + lam - v
    if u <= 0.0:
        return env.gamma * v
    return env.gamma * v - env.mu * comp.one_shot_profit(u)


def _make_rhs(env, comp, curve, lam):
    gamma, mu = env.gamma, env.mu
    kf = curve._value
    pi = comp.one_shot_profit

    def rhs(t, y):
        u = kf(t) + lam - y
        if u <= 0.0:
            return gamma * y
        return gamma * y - mu * pi(u)

    return rhs


def _guards(env, curve):
    hi = 2.0 * env.mu * curve.k_sup / env.gamma
    lo = -curve.k_sup
    return lo, hi


def _classify(traj, v, env, comp, curve):
    if traj.termination == "escaped_up":
        return "above"
    if traj.termination == "escaped_down":
        return "below"
    slope = phi(traj.t_stop, float(traj.values[-1]), v, env, comp, curve)
    # exact balance is classified below so the midpoint never overshoots
    return "above" if slope > _PHI_TIE_TOL else "below"


def shoot(v: float, env: EnvParams, comp: CompetitionModel, curve: ValueCurve,
          cfg: SolverConfig = None, grid_step=None) -> ShootResult:
    """Integrate the shooting ODE from Y(0) = v and classify the divergence."""
    if v < 0:
        raise DomainError("initial value must be >= 0")
    cfg = cfg or SolverConfig()
    env.require_discounted()
    lo, hi = _guards(env, curve)
    _, b0 = cfg.resolved_bracket(env, curve)
    horizon = cfg.resolved_horizon(env, hi, b0)
    if v >= hi:
        traj = Trajectory(np.array([0.0]), np.array([v]), "escaped_up", 0.0)
        return ShootResult(traj, "above", v)
    if v <= lo:
        traj = Trajectory(np.array([0.0]), np.array([v]), "escaped_down", 0.0)
        return ShootResult(traj, "below", v)
    spec = IvpSpec(rhs=_make_rhs(env, comp, curve, v), y0=v, t_end=horizon,
                   rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol,
                   guard_hi=hi, guard_lo=lo, grid_step=grid_step)
    traj = integrate(spec)
    return ShootResult(traj, _classify(traj, v, env, comp, curve), v)


def bisect_v0(env: EnvParams, comp: CompetitionModel, curve: ValueCurve,
              cfg: SolverConfig = None) -> SolveResult:
    """Locate V0* by bisection and rebuild the value and bid grids.

    The bracket is tracked dyadically (a0 + width * m / 2^n), so recorded
    widths halve exactly.  After the last iteration the midpoint trajectory
    is re-integrated on a dense grid; the grid is truncated at the age where
    the residual bracket width, amplified by the trajectory sensitivity
    dZ/dv, would exceed ``policy_tol``.
    """
    cfg = cfg or SolverConfig()
    env.require_discounted()
    a0, b0 = cfg.resolved_bracket(env, curve)
    width0 = b0 - a0
    lo, hi = _guards(env, curve)

    res_a = shoot(a0, env, comp, curve, cfg)
    if res_a.classification != "below":
        raise BracketError(f"shoot(a0={a0}) classified {res_a.classification}; "
                           "need a starting point below the stable value")
    res_b = shoot(b0, env, comp, curve, cfg)
    if res_b.classification != "above":
        raise BracketError(f"shoot(b0={b0}) classified {res_b.classification}; "
                           "need a starting point above the stable value")

    m, n = 0, 0
    bracket_history = [(a0, b0)]
    width_history = [width0]
    while n < cfg.n_iter:
        if cfg.width_tol > 0 and width0 / 2 ** n <= cfg.width_tol:
            break
        c = a0 + (width0 * (2 * m + 1)) / 2 ** (n + 1)
        res_c = shoot(c, env, comp, curve, cfg)
        m = 2 * m if res_c.classification == "above" else 2 * m + 1
        n += 1
        a = a0 + (width0 * m) / 2 ** n
        b = a0 + (width0 * (m + 1)) / 2 ** n
        bracket_history.append((a, b))
        width_history.append(width0 / 2 ** n)

    final_width = width0 / 2 ** n
    v0 = a0 + (width0 * (2 * m + 1)) / 2 ** (n + 1)

    # final dense pass at the bracket midpoint
    gs = cfg.resolved_grid_step(env)
    w_eff = max(0.5 * final_width, cfg.abs_tol + cfg.rel_tol * abs(v0), 1e-18)
    horizon = cfg.resolved_horizon(env, hi, b0)
    if cfg.policy_tol > w_eff:
        t_target = (1.0 / env.gamma) * math.log(cfg.policy_tol / w_eff)
    else:
        t_target = horizon
    t_final = max(min(horizon, t_target), 20.0 * gs)
    spec = IvpSpec(rhs=_make_rhs(env, comp, curve, v0), y0=v0, t_end=t_final,
                   rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol,
                   guard_hi=hi, guard_lo=lo, grid_step=gs)
    traj = integrate(spec)
    ts = traj.times
    vs = traj.values
    ks = curve.value(ts)
    bs = np.maximum(0.0, ks + v0 - vs)

    # Error amplification D(tau) = dZ/dv along the trajectory (stable form
    # 1 + gamma int e^{R(tau)-R(s)} ds with R the accumulated hazard).
    hz = env.gamma + env.mu * comp.win_prob_array(bs)
    R = np.concatenate([[0.0], np.cumsum(0.5 * (hz[1:] + hz[:-1]) * np.diff(ts))])
    S = np.concatenate([[0.0], np.cumsum(
        0.5 * (np.exp(-R[1:]) + np.exp(-R[:-1])) * np.diff(ts))])
    amplification = 1.0 + env.gamma * np.exp(np.minimum(R, 700.0)) * S

    # Trust cutoff.  The residual initial error delta (bracket width plus
    # accumulated integration noise) pollutes the grid by delta * D(tau),
    # a smooth bias.  The grid is kept while (a) that bias stays below
    # policy_tol, (b) its slope delta * D * hz stays below the local bid
    # slope plus the 1e-9 grid tolerance (so the bid grid keeps the shape of
    # the policy, not of the bias), and (c) the trajectory has not left the
    # band [v0, v0 + k_sup] that contains the stable solution.
    delta_eff = max(0.5 * final_width,
                    30.0 * (cfg.abs_tol + cfg.rel_tol * abs(v0)))
    value_budget = max(cfg.policy_tol, 4.0 * delta_eff)
    pollution = delta_eff * amplification
    b_slope = (curve.deriv(ts) - env.gamma * (v0 + ks)
               + env.mu * comp.cdf_integral_array(bs) + env.gamma * bs)
    slope_budget = (np.maximum(b_slope, 0.0)
                    + max(5e-10, 5e-6 * value_budget) / gs)
    trusted = (pollution <= value_budget) & (pollution * hz <= slope_budget)
    margin = max(0.05 * curve.k_sup, 10.0 * cfg.policy_tol)
    departed = np.nonzero((vs < v0 - margin)
                          | (vs > v0 + curve.k_sup + margin))[0]
    if len(departed) > 0:
        trusted[departed[0]:] = False
    if not trusted[0]:
        raise SolverError("no trustworthy grid: residual bracket width or "
                          f"integration noise too large (width {final_width:.3e})")
    i_max = int(np.argmax(~trusted)) - 1 if not trusted.all() else len(ts) - 1
    tau_max = float(ts[i_max])

    return SolveResult(
        v0_star=v0,
        bracket_history=bracket_history,
        width_history=width_history,
        tau_grid=ts[:i_max + 1].copy(),
        V_star=vs[:i_max + 1].copy(),
        b_star=bs[:i_max + 1].copy(),
        tau_max=tau_max,
        final_width=final_width,
        env=env, comp=comp, curve=curve, grid_step=gs)


def optimal_bid(result: SolveResult, tau):
    """Optimal bid at any age: the solved grid, extended beyond tau_max by
    b(tau_max) + k(tau) - k(tau_max) (the value grid is flat out there)."""
    scalar = not isinstance(tau, np.ndarray)
    t = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(t < 0):
        raise DomainError("age must be >= 0")
    out = np.interp(t, result.tau_grid, result.b_star)
    beyond = t > result.tau_max
    if np.any(beyond):
        b_end = result.b_star[-1]
        k_end = result.curve.value(result.tau_max)
        out[beyond] = np.maximum(
            0.0, b_end + result.curve.value(t[beyond]) - k_end)
    return float(out[0]) if scalar else out


class OptimalPolicy(BidPolicy):
    """Bid policy backed by a solver result grid."""

    kind = "optimal"

    def __init__(self, result: SolveResult):
        self.result = result

    def bid(self, tau):
        return optimal_bid(self.result, tau)


@dataclass
class BidOdeCheck:
    """Cross-check of the bid grid against the bid differential equation."""

    trajectory: Trajectory
    tau_start: float
    sup_gap: float


def bid_ode_crosscheck(result: SolveResult, env: EnvParams,
                       comp: CompetitionModel, curve: ValueCurve,
                       start_tol: float = 1e-3) -> BidOdeCheck:
    """Integrate db/dt = k'(t) - gamma (V0* + k(t)) + mu pi(b) + gamma b from
    the first age where the solved bid is materially positive, and report the
    sup distance to the solved bid grid."""
    idx = np.nonzero(result.b_star > start_tol)[0]
    if len(idx) == 0:
        raise SolverError("bid grid never exceeds start_tol; nothing to check")
    i0 = int(idx[0])
    tau_start = float(result.tau_grid[i0])
    b_start = float(result.b_star[i0])
    # Integrating forward amplifies the start error by e^{int gamma + mu q};
    # stop 2.5 hazard e-foldings before the end of the trustworthy grid so
    # the comparison is not dominated by that terminal blow-up.
    hz = env.gamma + env.mu * comp.win_prob_array(result.b_star)
    R = np.concatenate([[0.0], np.cumsum(
        0.5 * (hz[1:] + hz[:-1]) * np.diff(result.tau_grid))])
    j_end = int(np.searchsorted(R, R[-1] - 2.5))
    tau_end = float(result.tau_grid[max(j_end, i0 + 2)])
    t_end = tau_end - tau_start
    if t_end <= result.grid_step:
        raise SolverError("trustworthy range too short for the bid ODE check")
    gamma, mu, v0 = env.gamma, env.mu, result.v0_star
    kf, kd = curve._value, curve._deriv
    pi = comp.one_shot_profit

    def rhs(s, b):
        t = tau_start + s
        pb = pi(b) if b > 0 else 0.0
        return kd(t) - gamma * (v0 + kf(t)) + mu * pb + gamma * b

    spec = IvpSpec(rhs=rhs, y0=b_start, t_end=t_end,
                   rel_tol=1e-10, abs_tol=1e-13,
                   guard_hi=3.0 * (curve.k_sup + 1.0),
                   guard_lo=-curve.k_sup - 1.0,
                   grid_step=result.grid_step)
    traj = integrate(spec)
    ts = traj.times + tau_start
    ref = np.interp(ts, result.tau_grid, result.b_star)
    sup_gap = float(np.abs(traj.values - ref).max())
    return BidOdeCheck(trajectory=traj, tau_start=tau_start, sup_gap=sup_gap)


def sensitivity(v: float, t: float, env: EnvParams, comp: CompetitionModel,
                curve: ValueCurve, cfg: SolverConfig = None) -> float:
    """Derivative of the shooting trajectory endpoint with respect to its
    initial value, from the closed form along the stored trajectory:

        dZ^v(t)/dv = 1 + gamma int_0^t e^{R(t) - R(s)} ds,
        R(s) = gamma s + mu int_0^s q(k + v - Z) du,

    which always dominates e^{gamma t}."""
    if t < 0:
        raise DomainError("t must be >= 0")
    if t == 0:
        return 1.0
    cfg = cfg or SolverConfig()
    env.require_discounted()
    lo, hi = _guards(env, curve)
    gs = min(0.005, 1.0 / (10.0 * env.mu))
    n_panels = max(2, int(math.ceil(t / gs)))
    gs = t / n_panels
    spec = IvpSpec(rhs=_make_rhs(env, comp, curve, v), y0=v, t_end=t,
                   rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol,
                   guard_hi=hi, guard_lo=lo, grid_step=gs)
    traj = integrate(spec)
    if traj.escaped:
        raise DomainError(
            f"trajectory escaped at t={traj.t_stop:.6g} before {t}")
    ts, zs = traj.times, traj.values
    u = curve.value(ts) + v - zs
    hz = env.gamma + env.mu * comp.win_prob_array(np.maximum(u, 0.0))
    R = np.concatenate([[0.0], np.cumsum(0.5 * (hz[1:] + hz[:-1]) * np.diff(ts))])
    S = np.concatenate([[0.0], np.cumsum(
        0.5 * (np.exp(-R[1:]) + np.exp(-R[:-1])) * np.diff(ts))])
    return float(1.0 + env.gamma * math.exp(R[-1]) * S[-1])
