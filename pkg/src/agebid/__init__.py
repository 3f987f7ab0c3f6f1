"""Bidding policies for repeated second-price auctions whose item value
depends on the time since the last won auction."""

from .errors import (AgebidError, BracketError, DegenerateError,
                     DivergenceError, DomainError, IntegrationError,
                     ModeError, SolverError, UndefinedConditionalError,
                     ValidationError)
from .model import (BidPolicy, CompetitionModel, ConstantPolicy, EnvParams,
                    GreedyPolicy, GridPolicy, ShadingPolicy, ValueCurve,
                    conditional_price, expected_payment, k_deriv, k_eval,
                    one_shot_profit, sample_competition, utility, win_prob)
from .ode import IvpSpec, Trajectory, integrate
from .analytic import (PolicyEvaluation, accumulated_hazard,
                       asymptotic_regret, policy_value_quadrature,
                       shading_closed_form, time_average,
                       upper_incomplete_gamma)
from .solver import (BidOdeCheck, OptimalPolicy, ShootResult, SolveResult,
                     SolverConfig, bid_ode_crosscheck, bisect_v0, optimal_bid,
                     phi, sensitivity, shoot)
from .sim import (EpisodeStats, PolicyCase, SimConfig, TableRow,
                  ValueEstimate, compare_policies, estimate_value,
                  run_episode)
from .config import ExperimentConfig, build_policy

__version__ = "0.1.0"
