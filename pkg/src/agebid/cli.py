"""Command-line entry points.

Subcommands read a JSON experiment config and write CSV/JSON artifacts
(plus rendered PNG figures unless ``--no-figures``) into the output
directory:

* ``solve``        -> policy.csv, solve.json, policy.png
* ``table1``       -> table1.csv, table1.png
* ``shading``      -> shading.csv, shading.png
* ``asymptotics``  -> asymptotics.json, asymptotics.png
"""

from __future__ import annotations

import argparse
import sys

from . import report
from .analytic import shading_closed_form, time_average, asymptotic_regret
from .config import ExperimentConfig
from .errors import (AgebidError, DivergenceError, DomainError,
                     ValidationError)
from .model import EnvParams, GreedyPolicy, ShadingPolicy
from .sim import PolicyCase, SimConfig, compare_policies, estimate_value
from .solver import bisect_v0

__all__ = ["main"]


def _parser():
    p = argparse.ArgumentParser(
        prog="agebid",
        description="Bidding policies for repeated second-price auctions "
                    "with age-dependent value.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in [
            ("solve", "compute the optimal policy grid"),
            ("table1", "simulate greedy vs optimal across intensities"),
            ("shading", "sweep shading factors against the optimum"),
            ("asymptotics", "greedy regret trend and its limit")]:
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="JSON experiment config")
        sp.add_argument("--out", default=None, help="output directory override")
        sp.add_argument("--seed", type=int, default=None, help="simulation seed override")
        sp.add_argument("--reps", type=int, default=None, help="episode count override")
        sp.add_argument("--no-figures", action="store_true",
                        help="skip PNG rendering")
    return p


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config)
    return cfg.with_overrides(seed=args.seed, n_reps=args.reps,
                              output_dir=args.out)


def _cmd_solve(cfg: ExperimentConfig, figures: bool):
    result = bisect_v0(cfg.env, cfg.competition, cfg.curve, cfg.solver)
    out = cfg.output_dir
    report.write_csv(out / "policy.csv", ["tau", "V_star", "b_star"],
                     zip(result.tau_grid, result.V_star, result.b_star))
    payload = {
        "v0_star": result.v0_star,
        "gamma_v0": cfg.env.gamma * result.v0_star,
        "tau_max": result.tau_max,
        "final_width": result.final_width,
        "n_iter": len(result.width_history) - 1,
        "bracket_history": [list(ab) for ab in result.bracket_history],
        "grid_step": result.grid_step,
        "tau_grid": result.tau_grid.tolist(),
        "V_star": result.V_star.tolist(),
        "b_star": result.b_star.tolist(),
        "env": {"mu": cfg.env.mu, "gamma": cfg.env.gamma},
        "curve": cfg.curve.descriptor(),
        "competition": cfg.competition.descriptor(),
        "config_hash": cfg.config_hash,
        "seed": cfg.sim.seed,
    }
    report.write_json(out / "solve.json", payload)
    for name in ("policy.csv", "solve.json"):
        report.write_meta(out / name, cfg.config_hash, cfg.sim.seed, "solve")
    if figures:
        report.fig_policy(result, out / "policy.png")
    print(f"v0_star={result.v0_star:.6g} (gamma*v0={payload['gamma_v0']:.4g}), "
          f"tau_max={result.tau_max:.3g} -> {out}/policy.csv")
    return 0


def _cmd_table1(cfg: ExperimentConfig, figures: bool):
    cases = []
    for curve in cfg.curves:
        for mu in cfg.mus_for(curve.kind):
            env = EnvParams(mu=mu, gamma=cfg.env.gamma)
            result = bisect_v0(env, cfg.competition, curve, cfg.solver)
            cases.append(PolicyCase(curve.kind, mu, "optimal",
                                    result.policy(), curve))
            cases.append(PolicyCase(curve.kind, mu, "greedy",
                                    GreedyPolicy(curve), curve))
    rows = compare_policies(cases, cfg.competition, cfg.sim)
    out = cfg.output_dir
    report.write_csv(
        out / "table1.csv",
        ["k_kind", "mu", "policy", "value_per_time", "ci_low", "ci_high",
         "n_reps", "seed"],
        [[r.k_kind, r.mu, r.policy, f"{r.value_per_time:.6g}",
          f"{r.ci_low:.6g}", f"{r.ci_high:.6g}", r.n_reps, r.seed]
         for r in rows])
    report.write_meta(out / "table1.csv", cfg.config_hash, cfg.sim.seed, "table1")
    if figures:
        report.fig_table1(rows, out / "table1.png")
    print(f"{len(rows)} rows -> {out}/table1.csv")
    return 0


def _cmd_shading(cfg: ExperimentConfig, figures: bool):
    curve = cfg.curve
    records = []
    for mu in cfg.mus_for(curve.kind):
        env = EnvParams(mu=mu, gamma=cfg.env.gamma)
        result = bisect_v0(env, cfg.competition, curve, cfg.solver)
        optimal_rate = cfg.env.gamma * result.v0_star
        env0 = EnvParams(mu=mu, gamma=0.0)
        for alpha in cfg.alpha_grid:
            policy = ShadingPolicy(curve, alpha)
            try:
                quad = time_average(policy, env0, cfg.competition, curve)
            except DivergenceError:
                quad = 0.0  # never wins: no payoff per unit time
            closed = ""
            if (curve.kind == "hyperbolic"
                    and cfg.competition.kind == "uniform01"
                    and mu * alpha > 1.0):
                closed = shading_closed_form(alpha, mu)
            est = estimate_value(policy, env0, cfg.competition, curve,
                                 SimConfig(seed=cfg.sim.seed, n_reps=cfg.sim.n_reps,
                                           mode="time_average", T=cfg.sim.T,
                                           warmup=cfg.sim.warmup))
            records.append({
                "alpha": alpha, "mu": mu, "closed_form": closed,
                "quadrature": quad, "simulated": est.mean,
                "sim_ci_low": est.ci95[0], "sim_ci_high": est.ci95[1],
                "ratio_to_optimal": quad / optimal_rate,
            })
    out = cfg.output_dir
    cols = ["alpha", "mu", "closed_form", "quadrature", "simulated",
            "sim_ci_low", "sim_ci_high", "ratio_to_optimal"]
    report.write_csv(out / "shading.csv", cols,
                     [[rec[c] for c in cols] for rec in records])
    report.write_meta(out / "shading.csv", cfg.config_hash, cfg.sim.seed, "shading")
    if figures:
        report.fig_shading(records, out / "shading.png")
    print(f"{len(records)} rows -> {out}/shading.csv")
    return 0


def _cmd_asymptotics(cfg: ExperimentConfig, figures: bool):
    p_dot_0 = asymptotic_regret(cfg.competition)
    curve = cfg.curve
    gaps = []
    for mu in cfg.mus_for(curve.kind):
        env = EnvParams(mu=mu, gamma=cfg.env.gamma)
        result = bisect_v0(env, cfg.competition, curve, cfg.solver)
        optimal_rate = cfg.env.gamma * result.v0_star
        greedy_rate = time_average(GreedyPolicy(curve),
                                   EnvParams(mu=mu, gamma=0.0),
                                   cfg.competition, curve)
        gaps.append({"mu": mu, "optimal_rate": optimal_rate,
                     "greedy_rate": greedy_rate,
                     "relative_gap": 1.0 - greedy_rate / optimal_rate})
    payload = {"p_dot_0": p_dot_0, "curve": curve.kind, "gaps": gaps,
               "config_hash": cfg.config_hash, "seed": cfg.sim.seed}
    out = cfg.output_dir
    report.write_json(out / "asymptotics.json", payload)
    report.write_meta(out / "asymptotics.json", cfg.config_hash, cfg.sim.seed,
                      "asymptotics")
    if figures:
        report.fig_asymptotics(payload, out / "asymptotics.png")
    print(f"p_dot_0={p_dot_0:.6g} -> {out}/asymptotics.json")
    return 0


_COMMANDS = {
    "solve": _cmd_solve,
    "table1": _cmd_table1,
    "shading": _cmd_shading,
    "asymptotics": _cmd_asymptotics,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _load(args)
        return _COMMANDS[args.command](cfg, figures=not args.no_figures)
    except (ValidationError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AgebidError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
