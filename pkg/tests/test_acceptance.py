"""Acceptance suite.

Each criterion runs at its stated tolerance and prints one PASS line (tests
only reach their print after every assertion).  Three cells of the published
comparison table cannot be reproduced by any implementation consistent with
the model's own closed forms; they are marked as strict expected failures and
the companion test pins down the actual values by three independent routes
(see notes in the repository history for the full analysis).
"""

import math

import numpy as np
import pytest

from agebid import (EnvParams, GreedyPolicy, ShadingPolicy, SimConfig,
                    SolverConfig, ValueCurve, asymptotic_regret,
                    bid_ode_crosscheck, bisect_v0, estimate_value,
                    policy_value_quadrature, sensitivity,
                    shading_closed_form, time_average,
                    upper_incomplete_gamma)
from agebid.ode import IvpSpec, integrate
from agebid.sim import PolicyCase, compare_policies
from agebid.solver import _guards, _make_rhs

SEED = 20240901
GAMMA = 0.01

TABLE_MUS = {"exp_saturating": [0.1, 1.0, 5.0, 10.0, 100.0],
             "hyperbolic": [0.1, 1.0, 5.0, 10.0, 50.0]}

# published values per (curve, mu, policy)
TABLE_EXPECTED = {
    ("exp_saturating", 0.1): (0.045, 0.043),
    ("exp_saturating", 1.0): (0.22, 0.20),
    ("exp_saturating", 5.0): (0.43, 0.34),
    ("exp_saturating", 10.0): (0.52, 0.38),
    ("exp_saturating", 100.0): (0.72, 0.46),
    ("hyperbolic", 0.1): (0.035, 0.035),
    ("hyperbolic", 1.0): (0.16, 0.14),
    ("hyperbolic", 5.0): (0.32, 0.26),
    ("hyperbolic", 10.0): (0.40, 0.31),
    ("hyperbolic", 50.0): (0.69, 0.44),
}

# cells inconsistent with the model's closed forms (see module docstring)
DEFECTIVE_CELLS = {
    ("exp_saturating", 100.0, "optimal"),
    ("hyperbolic", 50.0, "optimal"),
    ("hyperbolic", 50.0, "greedy"),
}


def make_curve(kind):
    return {"exp_saturating": ValueCurve.exp_saturating,
            "hyperbolic": ValueCurve.hyperbolic,
            "two_step": ValueCurve.two_step}[kind]()


@pytest.fixture(scope="session")
def solves(uniform01):
    out = {}
    for kind, mus in TABLE_MUS.items():
        for mu in mus:
            curve = make_curve(kind)
            out[kind, mu] = bisect_v0(EnvParams(mu, GAMMA), uniform01, curve,
                                      SolverConfig())
    for mu in (5.0, 10.0):
        out["two_step", mu] = bisect_v0(EnvParams(mu, GAMMA), uniform01,
                                        make_curve("two_step"), SolverConfig())
    return out


@pytest.fixture(scope="session")
def table_rows(uniform01, solves):
    cases = []
    for kind, mus in TABLE_MUS.items():
        curve = make_curve(kind)
        for mu in mus:
            cases.append(PolicyCase(kind, mu, "optimal",
                                    solves[kind, mu].policy(), curve))
            cases.append(PolicyCase(kind, mu, "greedy", GreedyPolicy(curve), curve))
    cfg = SimConfig(seed=SEED, n_reps=200, mode="time_average")
    rows = compare_policies(cases, uniform01, cfg)
    return {(r.k_kind, r.mu, r.policy): r for r in rows}


def _cell_params():
    params = []
    for kind, mus in TABLE_MUS.items():
        for mu in mus:
            opt, greedy = TABLE_EXPECTED[kind, mu]
            for policy, expected in (("optimal", opt), ("greedy", greedy)):
                marks = ()
                if (kind, mu, policy) in DEFECTIVE_CELLS:
                    marks = pytest.mark.xfail(
                        strict=True,
                        reason="published cell contradicts the model's own "
                               "closed forms; see the triangulation test")
                params.append(pytest.param(kind, mu, policy, expected,
                                           marks=marks,
                                           id=f"{kind}-mu{mu:g}-{policy}"))
    return params


@pytest.mark.parametrize("kind,mu,policy,expected", _cell_params())
def test_c01_table_reproduction(kind, mu, policy, expected, table_rows):
    row = table_rows[kind, mu, policy]
    half = 0.5 * (row.ci_high - row.ci_low)
    tol = max(0.02, half)
    assert row.value_per_time == pytest.approx(expected, abs=tol), \
        f"{kind} mu={mu} {policy}: simulated {row.value_per_time:.4f} " \
        f"vs published {expected} (tol {tol:.3f})"


def test_c01_summary_line(table_rows):
    good = sum(1 for key in table_rows if
               (key[0], key[1], key[2]) not in DEFECTIVE_CELLS)
    print(f"\nACCEPTANCE 1 (table reproduction): PASS on {good}/20 cells; "
          f"{len(DEFECTIVE_CELLS)} published cells are internally "
          "inconsistent and expected to fail (triangulated below)")


def test_c01_defective_cells_triangulated(uniform01, solves, table_rows):
    """The three defective cells, pinned by independent routes.

    The right-hand table's mu=50 column actually matches the exponential
    curve at mu=50 (columns transposed at publication), and the exponential
    mu=100 optimal row lies below the best-shading lower bound.
    """
    kexp = make_curve("exp_saturating")
    khyp = make_curve("hyperbolic")
    env50 = EnvParams(50.0, 0.0)

    # greedy, hyperbolic, mu=50: quadrature and simulation agree near 0.403
    ta = time_average(GreedyPolicy(khyp), env50, uniform01, khyp)
    row = table_rows["hyperbolic", 50.0, "greedy"]
    assert ta == pytest.approx(0.4033, abs=1e-3)
    assert abs(row.value_per_time - ta) <= 3 * 0.5 * (row.ci_high - row.ci_low)
    # ... while the published 0.44 matches the exponential curve at mu=50
    ta_exp = time_average(GreedyPolicy(kexp), env50, uniform01, kexp)
    assert ta_exp == pytest.approx(0.44, abs=0.006)

    # optimal, hyperbolic, mu=50: solver and the best shading policy agree
    gv0 = GAMMA * solves["hyperbolic", 50.0].v0_star
    assert gv0 == pytest.approx(0.582, abs=2e-3)
    best_shading = max(time_average(ShadingPolicy(khyp, a), env50, uniform01, khyp)
                       for a in np.linspace(0.2, 0.45, 11))
    assert best_shading == pytest.approx(gv0, abs=5e-3)
    assert table_rows["hyperbolic", 50.0, "optimal"].value_per_time == \
        pytest.approx(gv0, abs=0.01)

    # optimal, exponential, mu=100: the best shading policy alone already
    # earns ~0.75 per unit time, above the published 0.72 + 0.02
    env100 = EnvParams(100.0, 0.0)
    lower_bound = time_average(ShadingPolicy(kexp, 0.175), env100, uniform01, kexp)
    assert lower_bound > 0.74
    assert table_rows["exp_saturating", 100.0, "optimal"].value_per_time == \
        pytest.approx(GAMMA * solves["exp_saturating", 100.0].v0_star, abs=0.01)
    print("\nACCEPTANCE 1 (defective cells): PASS — true values triangulated "
          f"(hyp/50 greedy {ta:.4f}, hyp/50 optimal {gv0:.4f}, "
          f"exp/100 optimal >= {lower_bound:.4f})")


def test_c02_shading_closed_form_grid(uniform01, khyp):
    checked = 0
    worst = 0.0
    for mu in (2.0, 5.0, 10.0, 50.0):
        for alpha in (0.6, 0.7, 0.8, 0.9, 1.0):
            if mu * alpha <= 1.05:
                continue
            closed = shading_closed_form(alpha, mu)
            quad = time_average(ShadingPolicy(khyp, alpha),
                                EnvParams(mu, 0.0), uniform01, khyp)
            rel = abs(closed - quad) / abs(closed)
            worst = max(worst, rel)
            assert rel < 1e-4, f"alpha={alpha} mu={mu}: rel err {rel:.2e}"
            checked += 1
    assert checked == 20
    print(f"\nACCEPTANCE 2 (shading closed form): PASS on {checked} grid "
          f"points, worst rel err {worst:.2e}")


def test_c03_constant_curve_anchor(uniform01):
    for K, mu, gamma in [(1.0, 1.0, 0.1), (0.5, 5.0, 0.01)]:
        curve = ValueCurve.constant(K)
        res = bisect_v0(EnvParams(mu, gamma), uniform01, curve, SolverConfig())
        target = mu * uniform01.one_shot_profit(K) / gamma
        assert abs(res.v0_star - target) <= res.final_width + 1e-6, \
            f"K={K} mu={mu} gamma={gamma}: {res.v0_star} vs {target}"
    print("\nACCEPTANCE 3 (constant-curve anchor): PASS for both (K, mu, gamma)")


def test_c04_bisection_contract(uniform01, kexp):
    res = bisect_v0(EnvParams(1.0, 0.05), uniform01, kexp,
                    SolverConfig(a0=0.0, b0=20.0, n_iter=40))
    assert len(res.width_history) == 41
    for n, w in enumerate(res.width_history):
        assert w == 20.0 / 2 ** n, f"iteration {n}: width {w}"
        a, b = res.bracket_history[n]
        assert b - a <= 20.0 / 2 ** n * (1 + 1e-12)
    print("\nACCEPTANCE 4 (bisection contract): PASS — widths halve exactly "
          "through n=40")


def _z_endpoint(v, t, env, comp, curve):
    lo, hi = _guards(env, curve)
    spec = IvpSpec(rhs=_make_rhs(env, comp, curve, v), y0=v, t_end=t,
                   rel_tol=1e-12, abs_tol=1e-15, guard_hi=hi, guard_lo=lo)
    traj = integrate(spec)
    assert not traj.escaped
    return traj.values[-1]


def test_c05_derivative_bound(uniform01):
    configs = [("exp_saturating", 0.5, 0.01), ("hyperbolic", 0.5, 0.1),
               ("exp_saturating", 1.0, 0.05)]
    worst_rel = 0.0
    for kind, mu, gamma in configs:
        curve = make_curve(kind)
        env = EnvParams(mu, gamma)
        v = bisect_v0(env, uniform01, curve, SolverConfig()).v0_star
        h = 1e-6
        for t in [0.5, 2.0, 5.0, 10.0]:
            fd = (_z_endpoint(v + h, t, env, uniform01, curve)
                  - _z_endpoint(v - h, t, env, uniform01, curve)) / (2 * h)
            assert fd >= math.exp(gamma * t) * (1 - 1e-6), \
                f"{kind} mu={mu} gamma={gamma} t={t}: fd {fd}"
            closed = sensitivity(v, t, env, uniform01, curve)
            rel = abs(closed - fd) / fd
            worst_rel = max(worst_rel, rel)
            assert rel < 1e-3
    # the dense-intensity spot check at t=5 with the stated step
    env = EnvParams(5.0, GAMMA)
    khyp = make_curve("hyperbolic")
    v = bisect_v0(env, uniform01, khyp, SolverConfig()).v0_star
    h, t = 1e-5, 5.0
    fd = (_z_endpoint(v + h, t, env, uniform01, khyp)
          - _z_endpoint(v - h, t, env, uniform01, khyp)) / (2 * h)
    closed = sensitivity(v, t, env, uniform01, khyp)
    assert abs(closed - fd) / fd < 1e-3
    assert fd >= math.exp(env.gamma * t) * (1 - 1e-6)
    print(f"\nACCEPTANCE 5 (derivative bound): PASS — bound holds on [0,10] "
          f"x 3 configs; closed form vs finite differences worst rel "
          f"{max(worst_rel, abs(closed - fd) / fd):.2e}")


def test_c06_monotonicity(solves):
    for kind in ("exp_saturating", "hyperbolic"):
        for mu in (5.0, 10.0):
            d = np.diff(solves[kind, mu].b_star)
            assert np.all(d >= -1e-9), f"{kind} mu={mu}: min diff {d.min()}"
    for mu in (5.0, 10.0):
        d = np.diff(solves["two_step", mu].b_star)
        assert d.min() < -1e-6, f"two_step mu={mu} unexpectedly monotone"
    print("\nACCEPTANCE 6 (bid monotonicity): PASS — concave curves "
          "non-decreasing, two-step curve dips")


def test_c07_bellman_residual(uniform01, solves):
    worst = 0.0
    for kind in ("exp_saturating", "hyperbolic"):
        res = solves[kind, 5.0]
        curve = res.curve
        ts, vs, bs = res.tau_grid, res.V_star, res.b_star
        gs = res.grid_step
        dv = (vs[2:] - vs[:-2]) / (2 * gs)
        mid = slice(1, len(ts) - 1)
        u_arg = curve.value(ts[mid]) + res.v0_star - vs[mid]
        u = uniform01.utility_array(u_arg, bs[mid])
        residual = dv - (-res.env.mu * u + res.env.gamma * vs[mid])
        sup = np.abs(residual).max()
        worst = max(worst, sup)
        tol = 10.0 * (gs ** 2 + SolverConfig().policy_tol)
        assert sup < tol, f"{kind}: residual {sup:.2e} vs tol {tol:.2e}"
    print(f"\nACCEPTANCE 7 (Bellman residual): PASS — sup residual {worst:.2e}")


def test_c08_oracle_triangle(uniform01, kexp):
    env = EnvParams(5.0, GAMMA)
    policies = [("greedy", GreedyPolicy(kexp))] + \
        [(f"shading({a})", ShadingPolicy(kexp, a)) for a in (0.9, 0.7, 0.5)]
    for name, pol in policies:
        quad = policy_value_quadrature(pol, env, uniform01, kexp).v0
        est = estimate_value(pol, env, uniform01, kexp,
                             SimConfig(seed=SEED + 7, n_reps=10_000,
                                       mode="discounted"))
        assert abs(est.mean - quad) <= 3 * est.std_err, \
            f"{name}: MC {est.mean:.3f} vs quadrature {quad:.3f} " \
            f"(3 sigma = {3 * est.std_err:.3f})"
    # gamma -> 0: discounted rates converge monotonically to the time average
    pol = ShadingPolicy(kexp, 0.7)
    ta = time_average(pol, EnvParams(5.0, 0.0), uniform01, kexp)
    gaps = []
    for gamma in (0.1, 0.01, 0.001):
        rate = gamma * policy_value_quadrature(
            pol, EnvParams(5.0, gamma), uniform01, kexp).v0
        gaps.append(ta - rate)
    assert all(g > 0 for g in gaps)
    assert gaps[0] > gaps[1] > gaps[2]
    print("\nACCEPTANCE 8 (oracle triangle): PASS — quadrature, Monte Carlo "
          "and the time-average limit agree")


def _best_shading_rate(curve, mu, uniform01, lo=0.05):
    env = EnvParams(mu, 0.0)

    def rate(a):
        return time_average(ShadingPolicy(curve, a), env, uniform01, curve)

    gr = (math.sqrt(5) - 1) / 2
    a, b = lo, 1.0
    c, d = b - gr * (b - a), a + gr * (b - a)
    fc, fd = rate(c), rate(d)
    for _ in range(25):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - gr * (b - a)
            fc = rate(c)
        else:
            a, c, fc = c, d, fd
            d = a + gr * (b - a)
            fd = rate(d)
    x = 0.5 * (a + b)
    return x, rate(x)


def test_c09_shading_near_optimality(uniform01, solves):
    for kind in ("exp_saturating", "hyperbolic"):
        for mu in (5.0, 10.0):
            curve = solves[kind, mu].curve
            _, best = _best_shading_rate(curve, mu, uniform01)
            anchor = GAMMA * solves[kind, mu].v0_star
            assert best >= 0.99 * anchor, \
                f"{kind} mu={mu}: best shading {best:.4f} < 0.99 x {anchor:.4f}"
    ratios = []
    for mu in (5.0, 10.0):
        curve = solves["two_step", mu].curve
        _, best = _best_shading_rate(curve, mu, uniform01)
        anchor = GAMMA * solves["two_step", mu].v0_star
        ratios.append(best / anchor)
        assert best < 0.99 * anchor, \
            f"two_step mu={mu}: shading unexpectedly near-optimal"
    print(f"\nACCEPTANCE 9 (shading near-optimality): PASS — concave >= 99%, "
          f"two-step ratios {ratios[0]:.3f}, {ratios[1]:.3f}")


def test_c10_special_functions():
    for x in np.geomspace(0.1, 30.0, 40):
        assert upper_incomplete_gamma(1.0, x) == pytest.approx(
            math.exp(-x), rel=1e-12)
    worst = 0.0
    for s in np.linspace(0.5, 20.0, 40):
        for x in np.geomspace(0.5, 40.0, 40):
            lhs = upper_incomplete_gamma(s + 1.0, x)
            rhs = s * upper_incomplete_gamma(s, x) + x ** s * math.exp(-x)
            rel = abs(lhs - rhs) / abs(lhs)
            worst = max(worst, rel)
            assert rel < 1e-12
    print(f"\nACCEPTANCE 10 (special functions): PASS — recurrence worst rel "
          f"{worst:.1e} over 1600 points")


def test_c11_asymptotic_regret(uniform01, table_rows):
    assert asymptotic_regret(uniform01) == pytest.approx(0.5, abs=1e-6)
    for kind, mus in TABLE_MUS.items():
        gaps = []
        for mu in mus:
            opt = table_rows[kind, mu, "optimal"].value_per_time
            greedy = table_rows[kind, mu, "greedy"].value_per_time
            gaps.append(1.0 - greedy / opt)
        assert all(b > a for a, b in zip(gaps, gaps[1:])), f"{kind}: {gaps}"
        assert all(0.0 < g < 0.5 for g in gaps), f"{kind}: {gaps}"
    print("\nACCEPTANCE 11 (asymptotic regret): PASS — p'(0) = 0.5; relative "
          "gaps increase with intensity and stay below 0.5")
