"""MDP wrapper around one ALNS search.

Each step decodes a 4-part discrete action (destroy operator, repair
operator, destroy severity, acceptance temperature), executes one search
iteration and returns a 7-feature observation plus a sparse {0, 5} reward
for strict best improvements.  The observation and reward never look
inside the problem, so the same environment drives every problem family.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple, Sequence

import numpy as np

from .core import (Objective, OperatorError, SearchProblem, SearchState,
                   compute_t_start, linear_temperature, removal_count)

OBS_DIM = 7
SEVERITY_LEVELS = 10
TEMP_LEVELS = 50
IMPROVEMENT_REWARD = 5.0
STAGNATION_FEATURE = 5  # index of the raw stagnation count in the observation


class Observation(NamedTuple):
    best_improved: float
    current_accepted: float
    current_improved: float
    is_current_best: float
    cost_difference_best: float
    stagnation_count: float
    search_budget: float

    def as_array(self) -> np.ndarray:
        return np.asarray(self, dtype=np.float64)


class ActionTuple(NamedTuple):
    destroy_idx: int
    repair_idx: int
    severity: int      # 1..10 -> 10%..100% destroy severity
    temp_level: int    # 1..50 -> T = 0.1..5.0

    def validate(self, n_destroy: int, n_repair: int) -> None:
        if not 0 <= self.destroy_idx < n_destroy:
            raise ValueError(f"destroy_idx {self.destroy_idx} out of range")
        if not 0 <= self.repair_idx < n_repair:
            raise ValueError(f"repair_idx {self.repair_idx} out of range")
        if not 1 <= self.severity <= SEVERITY_LEVELS:
            raise ValueError(f"severity {self.severity} out of range")
        if not 1 <= self.temp_level <= TEMP_LEVELS:
            raise ValueError(f"temp_level {self.temp_level} out of range")


@dataclass
class EnvConfig:
    """Episode shape plus the ablation toggles.

    With a control toggle off the corresponding action component is
    ignored: severity falls back to the fixed degree of destruction and
    the temperature to the linear cooling schedule (``fallback_t_start``
    of ``None`` resolves by rule of thumb at reset).
    """

    episode_length: int = 100
    repair_eval_samples: int = 5
    accept_eval_samples: int = 100
    control_severity: bool = True
    control_temperature: bool = True
    fallback_dod: float = 0.3
    fallback_t_start: float | None = None

    def __post_init__(self) -> None:
        if self.episode_length < 1:
            raise ValueError("episode_length must be at least 1")
        if self.repair_eval_samples < 1 or self.accept_eval_samples < 1:
            raise ValueError("sample counts must be at least 1")
        if not 0.0 < self.fallback_dod <= 1.0:
            raise ValueError("fallback_dod must lie in (0, 1]")


class StepResult(NamedTuple):
    observation: Observation
    reward: float
    done: bool
    info: dict[str, Any]


def severity_to_fraction(severity: int) -> float:
    """Severity level 1..10 as a destroy fraction 0.1..1.0."""
    if not 1 <= severity <= SEVERITY_LEVELS:
        raise ValueError(f"severity must lie in [1, {SEVERITY_LEVELS}]")
    return severity / 10.0


def temp_level_to_T(temp_level: int) -> float:
    """Temperature level 1..50 as an SA temperature 0.1..5.0."""
    if not 1 <= temp_level <= TEMP_LEVELS:
        raise ValueError(f"temp_level must lie in [1, {TEMP_LEVELS}]")
    return temp_level / 10.0


def build_observation(state: SearchState, budget: int) -> Observation:
    """Seven problem-agnostic features of the search state.

    The relative cost difference is -1 whenever the current objective
    value is non-positive (normalizing by |best| would be meaningless for
    an empty starting solution).
    """
    cur = state.current_obj.value
    best = state.best_obj.value
    if cur > 0.0 and best != 0.0:
        cost_difference = abs(best - cur) / abs(best)
    else:
        cost_difference = -1.0
    return Observation(
        best_improved=float(state.best_improved),
        current_accepted=float(state.current_accepted),
        current_improved=float(state.current_improved),
        is_current_best=float(state.is_current_best),
        cost_difference_best=cost_difference,
        stagnation_count=float(state.stagnation_count),
        search_budget=state.iteration / budget,
    )


def uniform_random_action(n_destroy: int, n_repair: int,
                          rng: np.random.Generator) -> ActionTuple:
    """Uniform draw over the full action space (untrained-policy baseline)."""
    return ActionTuple(destroy_idx=int(rng.integers(n_destroy)),
                       repair_idx=int(rng.integers(n_repair)),
                       severity=int(rng.integers(1, SEVERITY_LEVELS + 1)),
                       temp_level=int(rng.integers(1, TEMP_LEVELS + 1)))


class AlnsEnv:
    """One ALNS search per episode, driven by external actions.

    ``reset`` samples an instance from the pool, builds a fresh search
    session (clearing any per-search history) and the initial solution.
    ``step`` runs exactly one destroy/repair/evaluate/accept iteration.
    """

    def __init__(self, instances: Sequence[Any],
                 make_search: Callable[[Any], SearchProblem],
                 config: EnvConfig, rng: np.random.Generator):
        if len(instances) == 0:
            raise ValueError("instance pool must not be empty")
        self._instances = list(instances)
        self._make_search = make_search
        self.config = config
        self._rng = rng
        self.search: SearchProblem | None = None
        self.state: SearchState | None = None
        self._t_start: float = 1.0
        self._done = True

    @property
    def n_destroy(self) -> int:
        search = self.search or self._make_search(self._instances[0])
        return len(search.destroy_names)

    @property
    def n_repair(self) -> int:
        search = self.search or self._make_search(self._instances[0])
        return len(search.repair_names)

    @property
    def done(self) -> bool:
        return self._done

    def reset(self) -> Observation:
        instance = self._instances[int(self._rng.integers(len(self._instances)))]
        self.search = self._make_search(instance)
        initial = self.search.initial_solution(self._rng)
        obj = Objective(self.search.evaluate(initial, self._rng), self.search.sense)
        self.state = SearchState(current=initial, best=initial, current_obj=obj,
                                 best_obj=obj, budget=self.config.episode_length)
        if not self.config.control_temperature:
            self._t_start = (self.config.fallback_t_start
                             if self.config.fallback_t_start is not None
                             else compute_t_start(obj))
        self._done = False
        return build_observation(self.state, self.config.episode_length)

    def step(self, action: ActionTuple) -> StepResult:
        if self.state is None or self._done:
            raise RuntimeError("step() called on an unreset or finished episode")
        search, state, cfg = self.search, self.state, self.config
        action = ActionTuple(*action)
        action.validate(len(search.destroy_names), len(search.repair_names))

        fraction = (severity_to_fraction(action.severity) if cfg.control_severity
                    else cfg.fallback_dod)
        n_remove = removal_count(fraction, search.removable_count(state.current))
        temperature = (temp_level_to_T(action.temp_level) if cfg.control_temperature
                       else linear_temperature(self._t_start, state.iteration,
                                               cfg.episode_length))

        reward = 0.0
        cand_value = None
        try:
            partial = search.destroy(action.destroy_idx, state.current, n_remove, self._rng)
            candidate = search.repair(action.repair_idx, partial, self._rng)
        except OperatorError:
            outcome = state.register_noop()
        else:
            cand_obj = Objective(search.evaluate(candidate, self._rng), search.sense)
            cand_value = cand_obj.value
            if cand_obj.is_better(state.best_obj):
                reward = IMPROVEMENT_REWARD
            outcome = state.apply_candidate(candidate, cand_obj, temperature, self._rng)

        self._done = state.iteration >= cfg.episode_length
        observation = build_observation(state, cfg.episode_length)
        info = {
            "outcome": outcome,
            "accepted": state.current_accepted,
            "candidate_obj": cand_value,
            "current_obj": state.current_obj.value,
            "best_obj": state.best_obj.value,
            "destroy_idx": action.destroy_idx,
            "repair_idx": action.repair_idx,
            "n_removed": n_remove,
            "temperature": temperature,
        }
        return StepResult(observation=observation, reward=reward,
                          done=self._done, info=info)

    @property
    def best_solution(self) -> Any:
        if self.state is None:
            raise RuntimeError("environment has not been reset")
        return self.state.best

    @property
    def best_objective(self) -> Objective:
        if self.state is None:
            raise RuntimeError("environment has not been reset")
        return self.state.best_obj
