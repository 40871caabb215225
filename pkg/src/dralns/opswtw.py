"""Orienteering with stochastic travel times and time windows.

Instance model, noisy travel-time simulation, Monte-Carlo objective
evaluation, and the operator set used by the search: random / related /
history-based removal and distance / prize / ratio insertion.

Travel time on a leg is the Euclidean distance scaled by a discrete
uniform noise draw eta in {1..100} over beta (default 100).  Serving a
customer outside its time window costs -1 (and forfeits the prize);
a realized tour longer than the budget costs -n once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import OperatorError, Sense

ETA_MIN = 1
ETA_MAX = 100
DEFAULT_BETA = 100
RATIO_EPS = 1e-9

Tour = tuple[int, ...]


@dataclass(frozen=True, eq=False)
class OpswtwInstance:
    """One problem instance; node 0 is the depot.

    ``coords`` is (n, 2); ``prizes``, ``tw_open`` and ``tw_close`` have one
    entry per node with prize 0 and window [0, max_tour] at the depot.
    """

    coords: np.ndarray
    prizes: np.ndarray
    tw_open: np.ndarray
    tw_close: np.ndarray
    max_tour: float
    beta: int = DEFAULT_BETA

    def __post_init__(self) -> None:
        coords = np.asarray(self.coords, dtype=np.float64)
        prizes = np.asarray(self.prizes, dtype=np.float64)
        tw_open = np.asarray(self.tw_open, dtype=np.float64)
        tw_close = np.asarray(self.tw_close, dtype=np.float64)
        n = len(coords)
        if coords.ndim != 2 or coords.shape[1] != 2 or n < 2:
            raise ValueError("coords must be (n, 2) with n >= 2")
        if not (len(prizes) == len(tw_open) == len(tw_close) == n):
            raise ValueError("prizes and time windows must have one entry per node")
        if np.any(tw_open > tw_close):
            raise ValueError("every time window needs tw_open <= tw_close")
        if prizes[0] != 0.0:
            raise ValueError("the depot carries no prize")
        if np.any(prizes < 0):
            raise ValueError("prizes must be non-negative")
        if tw_open[0] != 0.0 or tw_close[0] < self.max_tour:
            raise ValueError("the depot window must span [0, max_tour]")
        if self.max_tour <= 0 or self.beta <= 0:
            raise ValueError("max_tour and beta must be positive")
        for name, arr in (("coords", coords), ("prizes", prizes),
                          ("tw_open", tw_open), ("tw_close", tw_close)):
            object.__setattr__(self, name, arr)
        diff = coords[:, None, :] - coords[None, :, :]
        object.__setattr__(self, "dist", np.sqrt((diff ** 2).sum(axis=2)))

    @property
    def n(self) -> int:
        return len(self.coords)

    @property
    def customers(self) -> range:
        return range(1, self.n)


@dataclass(frozen=True, slots=True)
class EvalResult:
    """One stochastic realization of a tour."""

    collected_prize: float
    tw_penalty: float
    budget_penalty: float
    total: float
    realized_duration: float


def validate_tour(instance: OpswtwInstance, tour: Sequence[int]) -> None:
    seen = set()
    for c in tour:
        if not 1 <= c < instance.n:
            raise ValueError(f"tour contains invalid customer index {c}")
        if c in seen:
            raise ValueError(f"tour visits customer {c} twice")
        seen.add(c)


def travel_time(distance: float, eta: int, beta: int = DEFAULT_BETA) -> float:
    """Realized travel time: Euclidean distance scaled by eta/beta."""
    return distance * eta / beta


def _simulate_batch(instance: OpswtwInstance, tour: Tour, k: int,
                    rng: np.random.Generator) -> tuple[np.ndarray, ...]:
    """k independent realizations of ``tour``, vectorized over realizations.

    Draws one eta per leg per realization in a single call, which leaves the
    random stream in the same state as k sequential single realizations.
    """
    if not tour:
        z = np.zeros(k)
        return z, z.copy(), z.copy(), z.copy(), z.copy()
    seq = np.asarray(tour, dtype=np.intp)
    path = np.concatenate(([0], seq, [0]))
    leg_dist = instance.dist[path[:-1], path[1:]] / instance.beta
    etas = rng.integers(ETA_MIN, ETA_MAX + 1, size=(k, len(leg_dist)))
    times = etas * leg_dist

    t = np.zeros(k)
    prize = np.zeros(k)
    violations = np.zeros(k)
    opens = instance.tw_open[seq]
    closes = instance.tw_close[seq]
    values = instance.prizes[seq]
    for j in range(len(seq)):
        service = np.maximum(t + times[:, j], opens[j])
        on_time = service <= closes[j]
        prize += np.where(on_time, values[j], 0.0)
        violations += ~on_time
        t = service
    duration = t + times[:, -1]

    tw_penalty = -violations
    budget_penalty = np.where(duration > instance.max_tour, -float(instance.n), 0.0)
    total = prize + tw_penalty + budget_penalty
    return total, prize, tw_penalty, budget_penalty, duration


def simulate_tour(instance: OpswtwInstance, tour: Sequence[int],
                  rng: np.random.Generator) -> EvalResult:
    """Walk the tour once with fresh noise on every leg.

    Early arrival waits for the window to open; a service start after the
    window close forfeits the prize and costs -1; a realized duration above
    the budget costs -n once.  The empty tour scores exactly 0.
    """
    tour = tuple(tour)
    validate_tour(instance, tour)
    total, prize, tw_pen, budget_pen, duration = _simulate_batch(instance, tour, 1, rng)
    return EvalResult(collected_prize=float(prize[0]), tw_penalty=float(tw_pen[0]),
                      budget_penalty=float(budget_pen[0]), total=float(total[0]),
                      realized_duration=float(duration[0]))


def evaluate_mc(instance: OpswtwInstance, tour: Sequence[int], k: int,
                rng: np.random.Generator) -> float:
    """Mean total over k independent realizations."""
    if k < 1:
        raise ValueError("k must be at least 1")
    tour = tuple(tour)
    validate_tour(instance, tour)
    total, *_ = _simulate_batch(instance, tour, k, rng)
    return float(total.mean())


def _nearest_neighbor_length(dist: np.ndarray) -> float:
    """Euclidean length of the greedy depot-anchored tour over all nodes."""
    n = len(dist)
    unvisited = list(range(1, n))
    length = 0.0
    cur = 0
    while unvisited:
        d = dist[cur, unvisited]
        j = int(np.argmin(d))
        length += float(d[j])
        cur = unvisited.pop(j)
    length += float(dist[cur, 0])
    return length


def generate_instance(n: int, seed: int) -> OpswtwInstance:
    """Random instance on the unit square, deterministic in (n, seed).

    The time budget is a uniform [1.5, 3.0] multiple of the expected
    realized duration of a nearest-neighbor tour (mean noise 50.5/beta);
    windows open uniformly in [0, 0.8*L] and stay open for a uniform
    [0.1*L, 0.4*L] span.
    """
    if n < 2:
        raise ValueError("an instance needs a depot and at least one customer")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    coords = rng.uniform(0.0, 1.0, size=(n, 2))
    prizes = np.zeros(n)
    prizes[1:] = np.round(rng.uniform(0.1, 1.0, size=n - 1), 2)
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    mean_noise = (ETA_MIN + ETA_MAX) / 2.0 / DEFAULT_BETA
    expected_nn = _nearest_neighbor_length(dist) * mean_noise
    max_tour = float(rng.uniform(1.5, 3.0) * expected_nn)
    tw_open = np.zeros(n)
    tw_close = np.zeros(n)
    tw_open[1:] = rng.uniform(0.0, 0.8 * max_tour, size=n - 1)
    tw_close[1:] = tw_open[1:] + rng.uniform(0.1 * max_tour, 0.4 * max_tour, size=n - 1)
    tw_close[0] = max_tour
    return OpswtwInstance(coords=coords, prizes=prizes, tw_open=tw_open,
                          tw_close=tw_close, max_tour=max_tour)


# ---------------------------------------------------------------------------
# destroy operators
# ---------------------------------------------------------------------------

def destroy_random(tour: Tour, n_remove: int, rng: np.random.Generator) -> Tour:
    """Remove up to ``n_remove`` uniformly chosen customers."""
    k = min(n_remove, len(tour))
    if k <= 0:
        return tuple(tour)
    drop = set(rng.choice(len(tour), size=k, replace=False).tolist())
    return tuple(c for i, c in enumerate(tour) if i not in drop)


def destroy_related(tour: Tour, n_remove: int, instance: OpswtwInstance,
                    rng: np.random.Generator) -> Tour:
    """Remove a random customer, then its nearest neighbors one by one."""
    k = min(n_remove, len(tour))
    if k <= 0:
        return tuple(tour)
    remaining = list(tour)
    first = int(rng.integers(len(remaining)))
    removed = {remaining.pop(first)}
    seed_customer = next(iter(removed))
    dist_to_set = instance.dist[seed_customer, remaining] if remaining else np.empty(0)
    while len(removed) < k and remaining:
        j = int(np.argmin(dist_to_set))
        customer = remaining.pop(j)
        removed.add(customer)
        dist_to_set = np.delete(dist_to_set, j)
        if remaining:
            dist_to_set = np.minimum(dist_to_set, instance.dist[customer, remaining])
    return tuple(c for c in tour if c not in removed)


def destroy_history(tour: Tour, n_remove: int, graph: "NeighborGraph",
                    rng: np.random.Generator) -> Tour:
    """Remove the customers whose incident edges look worst in the graph.

    A customer's score is the sum of the neighbor-graph weights on its
    predecessor and successor edges in the current tour; unknown edges
    contribute the mean of the known weights (0 if none).  Ties break
    uniformly at random.
    """
    k = min(n_remove, len(tour))
    if k <= 0:
        return tuple(tour)
    path = (0,) + tuple(tour) + (0,)
    fill = graph.known_mean()
    w = graph.weights
    scores = np.empty(len(tour))
    for i, c in enumerate(tour):
        w_in = w[path[i], c]
        w_out = w[c, path[i + 2]]
        scores[i] = (fill if np.isnan(w_in) else w_in) + (fill if np.isnan(w_out) else w_out)
    if graph.sense is Sense.MINIMIZE:
        scores = -scores
    order = rng.permutation(len(tour))
    worst_first = order[np.argsort(scores[order], kind="stable")]
    removed = {tour[i] for i in worst_first[:k]}
    return tuple(c for c in tour if c not in removed)


@dataclass
class NeighborGraph:
    """Best objective seen on each directed edge, NaN while unobserved."""

    weights: np.ndarray
    sense: Sense = Sense.MAXIMIZE

    @classmethod
    def empty(cls, n: int, sense: Sense = Sense.MAXIMIZE) -> "NeighborGraph":
        return cls(np.full((n, n), np.nan), sense)

    def known_mean(self) -> float:
        known = self.weights[~np.isnan(self.weights)]
        return float(known.mean()) if known.size else 0.0

    def update(self, tour: Sequence[int], total_objective: float) -> None:
        if not tour:
            return
        path = np.concatenate(([0], np.asarray(tour, dtype=np.intp), [0]))
        i, j = path[:-1], path[1:]
        cur = self.weights[i, j]
        if self.sense is Sense.MAXIMIZE:
            take = np.isnan(cur) | (total_objective > cur)
        else:
            take = np.isnan(cur) | (total_objective < cur)
        self.weights[i[take], j[take]] = total_objective


def update_neighbor_graph(graph: NeighborGraph, tour: Sequence[int],
                          total_objective: float) -> NeighborGraph:
    """Record a solution's objective on every edge it traverses (keep best)."""
    graph.update(tour, total_objective)
    return graph


# ---------------------------------------------------------------------------
# repair operators
# ---------------------------------------------------------------------------

def _weighted_pick(weights: np.ndarray, rng: np.random.Generator) -> int:
    """Index proportional to weight; uniform when all weights vanish."""
    total = weights.sum()
    if total <= 0:
        return int(rng.integers(len(weights)))
    cum = np.cumsum(weights)
    return int(np.searchsorted(cum, rng.random() * total, side="right"))


def _best_insertion_position(instance: OpswtwInstance, tour: list[int],
                             customer: int) -> int:
    prev = np.asarray([0] + tour, dtype=np.intp)
    nxt = np.asarray(tour + [0], dtype=np.intp)
    added = (instance.dist[prev, customer] + instance.dist[customer, nxt]
             - instance.dist[prev, nxt])
    return int(np.argmin(added))


def _insertion_repair(tour: Tour, instance: OpswtwInstance, rng: np.random.Generator,
                      samples: int, mode: str) -> Tour:
    """Insert candidates at their cheapest-distance position while the
    sampled mean objective does not decrease; stop at the first rejection."""
    current = list(tour)
    visited = set(current)
    candidates = [c for c in instance.customers if c not in visited]
    if not candidates:
        return tuple(current)
    base_mean = evaluate_mc(instance, tuple(current), samples, rng)
    while candidates:
        if mode == "distance":
            pick = int(rng.integers(len(candidates)))
        elif mode == "prize":
            pick = _weighted_pick(instance.prizes[candidates], rng)
        else:  # reward-to-distance ratio
            nodes = np.asarray([0] + current, dtype=np.intp)
            nearest = instance.dist[np.ix_(candidates, nodes)].min(axis=1)
            pick = _weighted_pick(instance.prizes[candidates] / (nearest + RATIO_EPS), rng)
        customer = candidates[pick]
        pos = _best_insertion_position(instance, current, customer)
        trial = current[:pos] + [customer] + current[pos:]
        new_mean = evaluate_mc(instance, tuple(trial), samples, rng)
        if new_mean >= base_mean:
            current = trial
            base_mean = new_mean
            candidates.pop(pick)
        else:
            break
    return tuple(current)


def repair_distance(tour: Tour, instance: OpswtwInstance, rng: np.random.Generator,
                    samples: int = 5) -> Tour:
    """Uniformly random candidates, cheapest-distance insertion."""
    return _insertion_repair(tour, instance, rng, samples, "distance")


def repair_prize(tour: Tour, instance: OpswtwInstance, rng: np.random.Generator,
                 samples: int = 5) -> Tour:
    """Prize-proportional candidates, cheapest-distance insertion."""
    return _insertion_repair(tour, instance, rng, samples, "prize")


def repair_ratio(tour: Tour, instance: OpswtwInstance, rng: np.random.Generator,
                 samples: int = 5) -> Tour:
    """Prize-over-distance-proportional candidates, cheapest-distance insertion."""
    return _insertion_repair(tour, instance, rng, samples, "ratio")


class OpswtwSearch:
    """Per-search session: operator registry plus the neighbor-graph history.

    Candidate evaluation is the ``accept_samples``-realization Monte-Carlo
    mean; insertions inside repair use the cheaper ``repair_samples`` mean.
    Build a fresh session per search so history never leaks across runs.
    """

    sense = Sense.MAXIMIZE
    destroy_names = ("random", "related", "history")
    repair_names = ("distance", "prize", "ratio")

    def __init__(self, instance: OpswtwInstance, repair_samples: int = 5,
                 accept_samples: int = 100):
        if repair_samples < 1 or accept_samples < 1:
            raise ValueError("sample counts must be at least 1")
        self.instance = instance
        self.repair_samples = repair_samples
        self.accept_samples = accept_samples
        self.graph = NeighborGraph.empty(instance.n)

    def initial_solution(self, rng: np.random.Generator) -> Tour:
        return ()

    def removable_count(self, tour: Tour) -> int:
        return len(tour)

    def destroy(self, op_index: int, tour: Tour, n_remove: int,
                rng: np.random.Generator) -> Tour:
        if op_index == 0:
            return destroy_random(tour, n_remove, rng)
        if op_index == 1:
            return destroy_related(tour, n_remove, self.instance, rng)
        if op_index == 2:
            return destroy_history(tour, n_remove, self.graph, rng)
        raise OperatorError(f"unknown destroy operator index {op_index}")

    def repair(self, op_index: int, tour: Tour, rng: np.random.Generator) -> Tour:
        repairs = (repair_distance, repair_prize, repair_ratio)
        if not 0 <= op_index < len(repairs):
            raise OperatorError(f"unknown repair operator index {op_index}")
        return repairs[op_index](tour, self.instance, rng, samples=self.repair_samples)

    def evaluate(self, tour: Tour, rng: np.random.Generator) -> float:
        value = evaluate_mc(self.instance, tour, self.accept_samples, rng)
        self.graph.update(tour, value)
        return value
