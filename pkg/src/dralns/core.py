"""Problem-agnostic ALNS engine.

Operator registry, roulette-wheel selection, adaptive weights, simulated
annealing acceptance with linear cooling, and the classical (vanilla)
search loop.  Everything problem specific is reached through the
:class:`SearchProblem` protocol, so the same loop drives the stochastic
orienteering and the deterministic routing problems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Any, NamedTuple, Protocol, Sequence, runtime_checkable

import numpy as np

WEIGHT_FLOOR = 1e-6   # operators never lose all selection probability
TEMP_FLOOR = 1e-9     # keeps exp(-delta/T) well defined at the end of cooling


class OperatorError(Exception):
    """Raised by a destroy/repair operator that cannot act on a solution.

    The search loop treats it as a no-op iteration scored as rejected,
    so the trace length and the weight bookkeeping stay fixed.
    """


class Sense(Enum):
    MAXIMIZE = "maximize"
    MINIMIZE = "minimize"


@dataclass(frozen=True, slots=True)
class Objective:
    """Scalar objective value plus optimization sense."""

    value: float
    sense: Sense

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise ValueError(f"objective value must be finite, got {self.value}")

    def is_better(self, other: "Objective") -> bool:
        """Strictly better than ``other`` under this objective's sense."""
        if self.sense is not other.sense:
            raise ValueError("cannot compare objectives with different senses")
        if self.sense is Sense.MAXIMIZE:
            return self.value > other.value
        return self.value < other.value

    def worsening(self, baseline: "Objective") -> float:
        """How much worse this objective is than ``baseline`` (<= 0 if not worse)."""
        if self.sense is not baseline.sense:
            raise ValueError("cannot compare objectives with different senses")
        if self.sense is Sense.MAXIMIZE:
            return baseline.value - self.value
        return self.value - baseline.value


class Outcome(IntEnum):
    """Per-iteration result, ordered to index the omega score vector."""

    NEW_BEST = 0
    IMPROVED_CURRENT = 1
    ACCEPTED = 2
    REJECTED = 3


@dataclass
class AlnsParams:
    """Vanilla ALNS configuration.

    ``omega`` are the operator scores for (new best, improved current,
    accepted, rejected); ``theta`` the weight-update decay; ``dod`` the
    degree of destruction; ``t_start`` the initial SA temperature
    (``None`` = rule of thumb from the initial objective).
    """

    omega: tuple[float, float, float, float] = (5.0, 3.0, 1.0, 0.0)
    theta: float = 0.8
    dod: float = 0.3
    t_start: float | None = None
    iterations: int = 1000

    def __post_init__(self) -> None:
        self.omega = tuple(float(w) for w in self.omega)
        if len(self.omega) != 4 or any(w < 0 for w in self.omega):
            raise ValueError("omega must be 4 non-negative scores")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if not 0.0 < self.dod <= 1.0:
            raise ValueError("dod must lie in (0, 1]")
        if self.t_start is not None and self.t_start <= 0:
            raise ValueError("t_start must be positive (or None for rule of thumb)")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")


@dataclass
class OperatorWeights:
    """Adaptive selection weights, one per destroy and repair operator."""

    destroy: np.ndarray
    repair: np.ndarray

    @classmethod
    def uniform(cls, n_destroy: int, n_repair: int) -> "OperatorWeights":
        if n_destroy < 1 or n_repair < 1:
            raise ValueError("need at least one destroy and one repair operator")
        return cls(np.ones(n_destroy), np.ones(n_repair))

    def probabilities(self, which: str) -> np.ndarray:
        w = self.destroy if which == "destroy" else self.repair
        return w / w.sum()


def roulette_select(weights: Sequence[float] | np.ndarray, rng: np.random.Generator) -> int:
    """Pick an index with probability proportional to its weight.

    Consumes exactly one uniform draw.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0:
        raise ValueError("roulette_select needs a non-empty weight vector")
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise ValueError("roulette_select weights must all be positive and finite")
    cum = np.cumsum(w)
    x = rng.random() * cum[-1]
    return int(np.searchsorted(cum, x, side="right"))


def update_weight(rho: float, theta: float, psi: float) -> float:
    """Exponentially smoothed operator weight: theta*rho + (1-theta)*psi.

    Floored at ``WEIGHT_FLOOR`` so a run of zero scores never removes an
    operator from the roulette wheel.
    """
    if rho <= 0:
        raise ValueError("weight must be positive before an update")
    return max(theta * rho + (1.0 - theta) * psi, WEIGHT_FLOOR)


def score_outcome(outcome: Outcome, omega: Sequence[float]) -> float:
    """Score awarded to the operators that produced ``outcome``."""
    return float(omega[outcome])


def sa_accept(new_obj: Objective, cur_obj: Objective, temperature: float,
              rng: np.random.Generator) -> bool:
    """Simulated annealing acceptance.

    Non-worsening candidates are always accepted; a worsening of ``delta``
    is accepted with probability exp(-delta/T).  Consumes one uniform draw
    only when the candidate is strictly worse.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    delta = new_obj.worsening(cur_obj)
    if delta <= 0:
        return True
    return rng.random() < math.exp(-delta / temperature)


def linear_temperature(t_start: float, iteration: int, budget: int) -> float:
    """Linear cooling from ``t_start`` down to (a clamped) zero."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    if not 0 <= iteration <= budget:
        raise ValueError("iteration must lie in [0, budget]")
    return max(t_start * (1.0 - iteration / budget), TEMP_FLOOR)


def compute_t_start(initial_obj: Objective, w: float = 0.05, p: float = 0.5) -> float:
    """Rule-of-thumb starting temperature.

    Chosen so a candidate ``w`` (5%) worse than the initial objective is
    accepted with probability ``p`` (0.5) at the first iteration.  An
    initial objective of exactly zero (e.g. a search started from an empty
    route) falls back to 1.0.
    """
    if w <= 0:
        raise ValueError("w must be positive")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    c0 = abs(initial_obj.value)
    if c0 == 0.0:
        return 1.0
    return w * c0 / math.log(1.0 / p)


def removal_count(fraction: float, removable: int) -> int:
    """Number of elements a destroy operator should remove.

    At least one element whenever anything is removable, zero otherwise.
    """
    if removable <= 0:
        return 0
    return min(removable, max(1, round(fraction * removable)))


@runtime_checkable
class SearchProblem(Protocol):
    """What the engine needs from a problem: operators plus evaluation.

    Implementations must never mutate a solution they are handed; destroy
    and repair return fresh solution objects.  ``evaluate`` may consume
    randomness (Monte-Carlo objectives) and may record history (e.g. a
    neighbor graph) as a side effect.
    """

    sense: Sense
    destroy_names: Sequence[str]
    repair_names: Sequence[str]

    def initial_solution(self, rng: np.random.Generator) -> Any: ...

    def removable_count(self, solution: Any) -> int: ...

    def destroy(self, op_index: int, solution: Any, n_remove: int,
                rng: np.random.Generator) -> Any: ...

    def repair(self, op_index: int, solution: Any, rng: np.random.Generator) -> Any: ...

    def evaluate(self, solution: Any, rng: np.random.Generator) -> float: ...


@dataclass
class SearchState:
    """Current/best solutions plus the counters the observation is built from."""

    current: Any
    best: Any
    current_obj: Objective
    best_obj: Objective
    budget: int
    iteration: int = 0
    stagnation_count: int = 0
    last_outcome: Outcome | None = None

    @property
    def best_improved(self) -> bool:
        return self.last_outcome is Outcome.NEW_BEST

    @property
    def current_improved(self) -> bool:
        return self.last_outcome in (Outcome.NEW_BEST, Outcome.IMPROVED_CURRENT)

    @property
    def current_accepted(self) -> bool:
        return self.last_outcome in (Outcome.NEW_BEST, Outcome.IMPROVED_CURRENT,
                                     Outcome.ACCEPTED)

    @property
    def is_current_best(self) -> bool:
        return self.current_obj.value == self.best_obj.value

    def apply_candidate(self, candidate: Any, cand_obj: Objective,
                        temperature: float, rng: np.random.Generator) -> Outcome:
        """Classify a candidate, update current/best and the counters.

        Ties are never a new best: improving means strictly improving.
        """
        if cand_obj.is_better(self.best_obj):
            outcome = Outcome.NEW_BEST
            self.best = candidate
            self.best_obj = cand_obj
            self.current = candidate
            self.current_obj = cand_obj
        elif cand_obj.is_better(self.current_obj):
            outcome = Outcome.IMPROVED_CURRENT
            self.current = candidate
            self.current_obj = cand_obj
        elif sa_accept(cand_obj, self.current_obj, temperature, rng):
            outcome = Outcome.ACCEPTED
            self.current = candidate
            self.current_obj = cand_obj
        else:
            outcome = Outcome.REJECTED
        self._finish_iteration(outcome)
        return outcome

    def register_noop(self) -> Outcome:
        """Book-keeping for an iteration whose operator failed (no candidate)."""
        self._finish_iteration(Outcome.REJECTED)
        return Outcome.REJECTED

    def _finish_iteration(self, outcome: Outcome) -> None:
        self.iteration += 1
        self.stagnation_count = 0 if outcome is Outcome.NEW_BEST else self.stagnation_count + 1
        self.last_outcome = outcome


class TraceRow(NamedTuple):
    iteration: int
    current_obj: float
    best_obj: float
    destroy_idx: int
    repair_idx: int
    accepted: bool
    temperature: float


TRACE_HEADER = ("iteration", "current_obj", "best_obj", "destroy_idx",
                "repair_idx", "accepted", "temperature")


@dataclass
class AlnsResult:
    best: Any
    best_objective: Objective
    initial_objective: Objective
    t_start: float
    trace: list[TraceRow] = field(default_factory=list)
    weights: OperatorWeights | None = None


def run_vanilla_alns(problem: SearchProblem, params: AlnsParams,
                     rng: np.random.Generator, *, collect_trace: bool = True) -> AlnsResult:
    """Classical ALNS: roulette operator choice, adaptive weights, SA with
    linear cooling.

    Each iteration destroys a ``dod`` fraction of the current solution,
    repairs it, evaluates, applies SA acceptance, and updates the weights of
    both chosen operators with the outcome score.  Fully deterministic given
    (problem, params, rng seed).
    """
    initial = problem.initial_solution(rng)
    initial_obj = Objective(problem.evaluate(initial, rng), problem.sense)
    t_start = params.t_start if params.t_start is not None else compute_t_start(initial_obj)
    weights = OperatorWeights.uniform(len(problem.destroy_names), len(problem.repair_names))
    state = SearchState(current=initial, best=initial, current_obj=initial_obj,
                        best_obj=initial_obj, budget=params.iterations)
    trace: list[TraceRow] = []

    for it in range(params.iterations):
        temperature = linear_temperature(t_start, it, params.iterations)
        d_idx = roulette_select(weights.destroy, rng)
        r_idx = roulette_select(weights.repair, rng)
        n_remove = removal_count(params.dod, problem.removable_count(state.current))
        try:
            partial = problem.destroy(d_idx, state.current, n_remove, rng)
            candidate = problem.repair(r_idx, partial, rng)
        except OperatorError:
            outcome = state.register_noop()
        else:
            cand_obj = Objective(problem.evaluate(candidate, rng), problem.sense)
            outcome = state.apply_candidate(candidate, cand_obj, temperature, rng)
        psi = score_outcome(outcome, params.omega)
        weights.destroy[d_idx] = update_weight(weights.destroy[d_idx], params.theta, psi)
        weights.repair[r_idx] = update_weight(weights.repair[r_idx], params.theta, psi)
        if collect_trace:
            trace.append(TraceRow(it, state.current_obj.value, state.best_obj.value,
                                  d_idx, r_idx, outcome is not Outcome.REJECTED,
                                  temperature))

    return AlnsResult(best=state.best, best_objective=state.best_obj,
                      initial_objective=initial_obj, t_start=t_start,
                      trace=trace, weights=weights)
