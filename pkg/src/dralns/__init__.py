"""Adaptive large neighborhood search with a learned per-iteration controller.

The package bundles a problem-agnostic ALNS engine, a stochastic
orienteering environment, deterministic routing environments (TSP, CVRP,
mTSP), an MDP wrapper for policy control, a from-scratch PPO trainer and a
CLI harness for generating instances, solving, training, tuning and
benchmarking.
"""

from .core import (AlnsParams, AlnsResult, Objective, OperatorError,
                   OperatorWeights, Outcome, SearchState, Sense,
                   compute_t_start, linear_temperature, roulette_select,
                   run_vanilla_alns, sa_accept, score_outcome, update_weight)
from .env import (ActionTuple, AlnsEnv, EnvConfig, Observation, StepResult,
                  build_observation, severity_to_fraction, temp_level_to_T)
from .opswtw import (EvalResult, NeighborGraph, OpswtwInstance, OpswtwSearch,
                     evaluate_mc, generate_instance, simulate_tour, travel_time)
from .policy import (Adam, FingerprintError, PolicyAgent, PolicyParams,
                     PpoConfig, RolloutBuffer, gae, init_policy,
                     load_checkpoint, ppo_update, save_checkpoint, train)
from .routing import (RoutingInstance, RoutingSearch, generate_routing,
                      repair_greedy, total_distance)

__version__ = "0.1.0"
