"""Random-search parameter tuner for the vanilla search.

Samples configurations uniformly from fixed ranges (the last operator
score is pinned to 0), scores each by the mean best objective over a
tuning instance set at a 100-iteration budget, and returns the best one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .core import AlnsParams, Sense
from .env import EnvConfig
from .runner import run_rng, solve_one

TUNE_ITERATIONS = 100
LEADERBOARD_HEADER = ("rank", "score", "omega1", "omega2", "omega3", "omega4",
                      "theta", "dod", "t_start")


@dataclass
class TuneSpec:
    """Sampling ranges; omega4 stays at 0."""

    omega_max: float = 50.0
    theta_range: tuple[float, float] = (0.5, 1.0)
    dod_range: tuple[float, float] = (0.10, 1.00)
    t_start_range: tuple[float, float] = (0.0, 5.0)
    budget: int = 25
    iterations: int = TUNE_ITERATIONS

    def sample(self, rng: np.random.Generator) -> AlnsParams:
        omega = (rng.uniform(0.0, self.omega_max), rng.uniform(0.0, self.omega_max),
                 rng.uniform(0.0, self.omega_max), 0.0)
        theta = rng.uniform(*self.theta_range)
        dod = max(rng.uniform(*self.dod_range), 1e-9)
        t_start = max(rng.uniform(*self.t_start_range), 1e-9)
        return AlnsParams(omega=omega, theta=theta, dod=dod, t_start=t_start,
                          iterations=self.iterations)


def sample_candidates(spec: TuneSpec, rng: np.random.Generator) -> list[AlnsParams]:
    return [spec.sample(rng) for _ in range(spec.budget)]


def score_candidate(problem: str, instances: Sequence[tuple[str, Any]],
                    params: AlnsParams, env_config: EnvConfig,
                    master_seed: int, candidate_index: int) -> float:
    """Mean best objective of one configuration over the tuning set."""
    values = []
    for idx, (_, instance) in enumerate(instances):
        rng = run_rng(master_seed, idx, candidate_index)
        output = solve_one(problem, instance, "vanilla", params, env_config, rng)
        values.append(output.objective)
    return float(np.mean(values))


def tune_random_search(problem: str, instances: Sequence[tuple[str, Any]],
                       candidates: Sequence[AlnsParams], env_config: EnvConfig,
                       sense: Sense, master_seed: int):
    """Score every candidate; returns (best params, leaderboard rows).

    Leaderboard rows are (score, params) sorted best first.
    """
    if not candidates:
        raise ValueError("need at least one candidate configuration")
    scored = []
    for ci, params in enumerate(candidates):
        score = score_candidate(problem, instances, params, env_config,
                                master_seed, ci)
        scored.append((score, ci, params))
    reverse = sense is Sense.MAXIMIZE
    scored.sort(key=lambda item: (-item[0] if reverse else item[0], item[1]))
    best = scored[0][2]
    leaderboard = [(score, params) for score, _, params in scored]
    return best, leaderboard


def leaderboard_rows(leaderboard) -> list[tuple]:
    rows = []
    for rank, (score, params) in enumerate(leaderboard, start=1):
        rows.append((rank, score, *params.omega, params.theta, params.dod,
                     params.t_start if params.t_start is not None else ""))
    return rows
