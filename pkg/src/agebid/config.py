"""Experiment configuration: JSON in, validated model objects out."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from .errors import ValidationError
from .model import (BidPolicy, CompetitionModel, ConstantPolicy, EnvParams,
                    GreedyPolicy, GridPolicy, ShadingPolicy, ValueCurve)
from .sim import SimConfig
from .solver import SolverConfig

__all__ = ["ExperimentConfig", "build_policy"]

_DEFAULT_MU_GRID = {
    "exp_saturating": [0.1, 1.0, 5.0, 10.0, 100.0],
    "hyperbolic": [0.1, 1.0, 5.0, 10.0, 50.0],
}
_DEFAULT_ALPHA_GRID = [round(0.1 * i, 2) for i in range(1, 11)]


def _check_fields(mapping, allowed, where):
    unknown = set(mapping) - set(allowed)
    if unknown:
        raise ValidationError(f"unknown field(s) in {where}: {sorted(unknown)}")


def build_policy(desc, curve: ValueCurve) -> BidPolicy:
    """Build a bid policy from a ``{"kind": ..., "params": {...}}`` mapping."""
    _check_fields(desc, {"kind", "params"}, "policy")
    kind = desc.get("kind")
    params = desc.get("params", {})
    if kind == "greedy":
        _check_fields(params, set(), "policy.params")
        return GreedyPolicy(curve)
    if kind == "shading":
        _check_fields(params, {"alpha"}, "policy.params")
        return ShadingPolicy(curve, float(params["alpha"]))
    if kind == "constant":
        _check_fields(params, {"value"}, "policy.params")
        return ConstantPolicy(float(params["value"]))
    if kind == "grid":
        _check_fields(params, {"taus", "bids"}, "policy.params")
        return GridPolicy(params["taus"], params["bids"])
    raise ValidationError(f"unknown policy kind: {kind!r}")


@dataclass
class ExperimentConfig:
    """Validated experiment description loaded from a JSON config file."""

    env: EnvParams
    curve: ValueCurve
    curves: list
    competition: CompetitionModel
    solver: SolverConfig
    sim: SimConfig
    mu_grid: dict
    alpha_grid: list
    output_dir: Path
    config_hash: str

    _TOP_FIELDS = {"env", "curve", "curves", "competition", "solver", "sim",
                   "mu_grid", "alpha_grid", "output_dir"}

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_mapping(raw)

    @classmethod
    def from_mapping(cls, raw) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ValidationError("config root must be a JSON object")
        _check_fields(raw, cls._TOP_FIELDS, "config")

        env_raw = raw.get("env", {})
        _check_fields(env_raw, {"mu", "gamma"}, "env")
        try:
            env = EnvParams(mu=float(env_raw.get("mu", 1.0)),
                            gamma=float(env_raw.get("gamma", 0.01)))
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"env: {exc}") from exc

        curve = ValueCurve.from_descriptor(raw.get("curve", {"kind": "exp_saturating"}))
        curves_raw = raw.get("curves")
        if curves_raw is None:
            curves = [ValueCurve.exp_saturating(), ValueCurve.hyperbolic()]
        else:
            curves = [ValueCurve.from_descriptor(d) for d in curves_raw]

        competition = CompetitionModel.from_descriptor(
            raw.get("competition", {"kind": "uniform01"}))

        solver_raw = raw.get("solver", {})
        _check_fields(solver_raw, {"a0", "b0", "n_iter", "width_tol",
                                   "policy_tol", "grid_step", "T_horizon",
                                   "eps_k", "rel_tol", "abs_tol"}, "solver")
        try:
            solver = SolverConfig(**solver_raw)
        except TypeError as exc:
            raise ValidationError(f"solver: {exc}") from exc

        sim_raw = dict(raw.get("sim", {}))
        _check_fields(sim_raw, {"seed", "n_reps", "mode", "T", "warmup"}, "sim")
        sim_raw.setdefault("seed", 20240901)
        sim_raw.setdefault("n_reps", 200)
        sim = SimConfig(**sim_raw)

        mu_raw = raw.get("mu_grid")
        if mu_raw is None:
            mu_grid = {c.kind: list(_DEFAULT_MU_GRID.get(c.kind, [0.1, 1.0, 5.0, 10.0]))
                       for c in curves}
            mu_grid.setdefault(curve.kind,
                               _DEFAULT_MU_GRID.get(curve.kind, [0.1, 1.0, 5.0, 10.0]))
        elif isinstance(mu_raw, dict):
            mu_grid = {k: [float(x) for x in v] for k, v in mu_raw.items()}
        else:
            mus = [float(x) for x in mu_raw]
            mu_grid = {c.kind: list(mus) for c in curves}
            mu_grid.setdefault(curve.kind, list(mus))
        for kind, mus in mu_grid.items():
            if any(m <= 0 for m in mus):
                raise ValidationError(f"mu_grid[{kind}]: intensities must be > 0")

        alpha_grid = [float(a) for a in raw.get("alpha_grid", _DEFAULT_ALPHA_GRID)]
        if any(not 0.0 <= a <= 1.0 for a in alpha_grid):
            raise ValidationError("alpha_grid entries must be in [0, 1]")

        output_dir = Path(raw.get("output_dir", "out"))
        digest = hashlib.sha256(
            json.dumps(raw, sort_keys=True).encode()).hexdigest()[:16]
        return cls(env=env, curve=curve, curves=curves, competition=competition,
                   solver=solver, sim=sim, mu_grid=mu_grid,
                   alpha_grid=alpha_grid, output_dir=output_dir,
                   config_hash=digest)

    def with_overrides(self, seed=None, n_reps=None, output_dir=None):
        sim = self.sim
        if seed is not None or n_reps is not None:
            sim = SimConfig(seed=seed if seed is not None else sim.seed,
                            n_reps=n_reps if n_reps is not None else sim.n_reps,
                            mode=sim.mode, T=sim.T, warmup=sim.warmup)
        out = Path(output_dir) if output_dir is not None else self.output_dir
        return ExperimentConfig(
            env=self.env, curve=self.curve, curves=self.curves,
            competition=self.competition, solver=self.solver, sim=sim,
            mu_grid=self.mu_grid, alpha_grid=self.alpha_grid,
            output_dir=out, config_hash=self.config_hash)

    def mus_for(self, curve_kind):
        if curve_kind in self.mu_grid:
            return self.mu_grid[curve_kind]
        return _DEFAULT_MU_GRID.get(curve_kind, [0.1, 1.0, 5.0, 10.0])
