"""Deterministic routing problems: TSP, CVRP and mTSP.

Node 0 is the depot (the tour anchor for TSP); customers are nodes 1..C.
A solution is a list of routes, each an ordered list of customer indices,
implicitly closed through the depot.  Destroy operators return partial
solutions; greedy insertion restores completeness and is total.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import OperatorError, Sense

TSP = "tsp"
CVRP = "cvrp"
MTSP = "mtsp"
VARIANTS = (TSP, CVRP, MTSP)

Routes = list[list[int]]


@dataclass(frozen=True, eq=False)
class RoutingInstance:
    """Coordinates plus, per variant, demands/capacity (CVRP) or a fleet
    size (mTSP).  ``coords`` row 0 is the depot."""

    variant: str
    coords: np.ndarray
    demands: np.ndarray | None = None
    capacity: int | None = None
    salesmen: int | None = None

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown routing variant {self.variant!r}")
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 2 or len(coords) < 2:
            raise ValueError("coords must be (nodes, 2) with at least 2 nodes")
        object.__setattr__(self, "coords", coords)
        if self.variant == CVRP:
            if self.demands is None or self.capacity is None:
                raise ValueError("CVRP needs demands and capacity")
            demands = np.asarray(self.demands, dtype=np.int64)
            if len(demands) != len(coords) or demands[0] != 0:
                raise ValueError("demands must cover all nodes with 0 at the depot")
            if np.any(demands[1:] <= 0) or np.any(demands[1:] > self.capacity):
                raise ValueError("customer demands must lie in (0, capacity]")
            object.__setattr__(self, "demands", demands)
        if self.variant == MTSP:
            if self.salesmen is None or self.salesmen < 2:
                raise ValueError("mTSP needs at least 2 salesmen")
        diff = coords[:, None, :] - coords[None, :, :]
        object.__setattr__(self, "dist", np.sqrt((diff ** 2).sum(axis=2)))

    @property
    def n_customers(self) -> int:
        return len(self.coords) - 1


def empty_solution(instance: RoutingInstance) -> Routes:
    if instance.variant == TSP:
        return [[]]
    if instance.variant == MTSP:
        return [[] for _ in range(instance.salesmen)]
    return []


def route_distance(instance: RoutingInstance, route: list[int]) -> float:
    if not route:
        return 0.0
    path = np.asarray([0] + route + [0], dtype=np.intp)
    return float(instance.dist[path[:-1], path[1:]].sum())


def total_distance(instance: RoutingInstance, solution: Routes) -> float:
    """Sum of route lengths, each closed through the depot."""
    return sum(route_distance(instance, route) for route in solution)


def validate_solution(instance: RoutingInstance, solution: Routes, *,
                      partial: bool = False) -> None:
    """Check structure, customer coverage and (CVRP) capacity."""
    seen: set[int] = set()
    for route in solution:
        for c in route:
            if not 1 <= c <= instance.n_customers:
                raise ValueError(f"invalid customer index {c}")
            if c in seen:
                raise ValueError(f"customer {c} appears twice")
            seen.add(c)
        if instance.variant == CVRP and route:
            load = int(instance.demands[route].sum())
            if load > instance.capacity:
                raise ValueError(f"route load {load} exceeds capacity {instance.capacity}")
    if instance.variant == TSP and len(solution) != 1:
        raise ValueError("a TSP solution is a single route")
    if instance.variant == MTSP and len(solution) != instance.salesmen:
        raise ValueError("an mTSP solution has exactly one route per salesman")
    if not partial and len(seen) != instance.n_customers:
        raise ValueError("solution does not cover every customer exactly once")


def _cvrp_capacity(n_customers: int) -> int:
    if n_customers <= 20:
        return 30
    if n_customers <= 50:
        return 40
    return 50


def generate_routing(variant: str, n: int, seed: int, salesmen: int = 2) -> RoutingInstance:
    """Uniform random instance, deterministic in (variant, n, seed).

    ``n`` counts nodes for TSP and customers for CVRP/mTSP.  CVRP demands
    are uniform integers in {1..9} with the capacity scaled by size
    (30/40/50 for up to 20/50/larger customer counts).
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown routing variant {variant!r}")
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    n_nodes = n if variant == TSP else n + 1
    coords = rng.uniform(0.0, 1.0, size=(n_nodes, 2))
    if variant == CVRP:
        demands = np.zeros(n_nodes, dtype=np.int64)
        demands[1:] = rng.integers(1, 10, size=n_nodes - 1)
        return RoutingInstance(variant=CVRP, coords=coords, demands=demands,
                               capacity=_cvrp_capacity(n))
    if variant == MTSP:
        return RoutingInstance(variant=MTSP, coords=coords, salesmen=salesmen)
    return RoutingInstance(variant=TSP, coords=coords)


# ---------------------------------------------------------------------------
# destroy operators
# ---------------------------------------------------------------------------

def _drop_customers(instance: RoutingInstance, solution: Routes,
                    removed: set[int]) -> Routes:
    routes = [[c for c in route if c not in removed] for route in solution]
    if instance.variant == CVRP:
        routes = [r for r in routes if r]
    return routes


def destroy_random_r(solution: Routes, n_remove: int, instance: RoutingInstance,
                     rng: np.random.Generator) -> Routes:
    """Remove up to ``n_remove`` uniformly chosen customers."""
    visited = [c for route in solution for c in route]
    k = min(n_remove, len(visited))
    if k <= 0:
        return [list(r) for r in solution]
    removed = set(rng.choice(np.asarray(visited), size=k, replace=False).tolist())
    return _drop_customers(instance, solution, removed)


def _route_savings(instance: RoutingInstance, route: list[int]) -> np.ndarray:
    if not route:
        return np.empty(0)
    cur = np.asarray(route, dtype=np.intp)
    prev = np.asarray([0] + route[:-1], dtype=np.intp)
    nxt = np.asarray(route[1:] + [0], dtype=np.intp)
    return (instance.dist[prev, cur] + instance.dist[cur, nxt]
            - instance.dist[prev, nxt])


def destroy_worst(solution: Routes, n_remove: int, instance: RoutingInstance,
                  rng: np.random.Generator) -> Routes:
    """Repeatedly remove the customer whose removal shortens the solution
    the most, re-evaluating savings after each removal (ties uniform)."""
    routes = [list(r) for r in solution]
    visited = sum(len(r) for r in routes)
    k = min(n_remove, visited)
    # only the route touched by a removal needs its savings recomputed
    savings = [_route_savings(instance, r) for r in routes]
    for _ in range(k):
        gains = np.concatenate(savings)
        order = rng.permutation(len(gains))
        flat = int(order[np.argmax(gains[order])])
        ri = 0
        while flat >= len(savings[ri]):
            flat -= len(savings[ri])
            ri += 1
        routes[ri].pop(flat)
        savings[ri] = _route_savings(instance, routes[ri])
    if instance.variant == CVRP:
        routes = [r for r in routes if r]
    return routes


def destroy_related_r(solution: Routes, n_remove: int, instance: RoutingInstance,
                      rng: np.random.Generator) -> Routes:
    """Remove a random customer, then its nearest neighbors one by one."""
    visited = [c for route in solution for c in route]
    k = min(n_remove, len(visited))
    if k <= 0:
        return [list(r) for r in solution]
    remaining = list(visited)
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
    return _drop_customers(instance, solution, removed)


# ---------------------------------------------------------------------------
# repair
# ---------------------------------------------------------------------------

class _InsertionSlots:
    """Per-route insertion-slot arrays, concatenated on demand.

    Route r with k customers contributes k+1 slots (between consecutive
    nodes including the depot ends).  An insertion rebuilds only the
    affected route's arrays, so evaluating a candidate costs a few
    vectorized lookups regardless of how many routes exist.
    """

    def __init__(self, instance: RoutingInstance, routes: Routes):
        self.dist = instance.dist
        self.routes = routes
        self.prev: list[np.ndarray] = []
        self.nxt: list[np.ndarray] = []
        self.base: list[np.ndarray] = []
        for r in routes:
            self._set_route(len(self.prev), r, append=True)

    def _set_route(self, ri: int, route: list[int], append: bool = False) -> None:
        prev = np.asarray([0] + route, dtype=np.intp)
        nxt = np.asarray(route + [0], dtype=np.intp)
        base = self.dist[prev, nxt]
        if append:
            self.prev.append(prev)
            self.nxt.append(nxt)
            self.base.append(base)
        else:
            self.prev[ri], self.nxt[ri], self.base[ri] = prev, nxt, base

    def added_costs(self, customer: int) -> np.ndarray:
        flat_prev = self.prev[0] if len(self.prev) == 1 else np.concatenate(self.prev)
        flat_nxt = self.nxt[0] if len(self.nxt) == 1 else np.concatenate(self.nxt)
        flat_base = self.base[0] if len(self.base) == 1 else np.concatenate(self.base)
        col = self.dist[customer]
        return col[flat_prev] + col[flat_nxt] - flat_base

    def slot_route_ids(self) -> np.ndarray:
        sizes = [len(p) for p in self.prev]
        return np.repeat(np.arange(len(sizes)), sizes)

    def locate(self, slot: int) -> tuple[int, int]:
        for ri, prev in enumerate(self.prev):
            if slot < len(prev):
                return ri, slot
            slot -= len(prev)
        raise IndexError("slot out of range")

    def insert(self, ri: int, pos: int, customer: int) -> None:
        self.routes[ri].insert(pos, customer)
        self._set_route(ri, self.routes[ri])

    def open_route(self, customer: int) -> None:
        self.routes.append([customer])
        self._set_route(len(self.routes) - 1, self.routes[-1], append=True)


def repair_greedy(solution: Routes, instance: RoutingInstance,
                  rng: np.random.Generator) -> Routes:
    """Insert the missing customers, in uniformly random order, each at the
    feasible position adding the least distance.

    CVRP opens a new route only when no existing route has capacity left,
    which makes the repair total.
    """
    routes = [list(r) for r in solution]
    present = {c for route in routes for c in route}
    missing = [c for c in range(1, instance.n_customers + 1) if c not in present]
    if not missing:
        return routes
    order = rng.permutation(len(missing))
    cvrp = instance.variant == CVRP
    loads = np.asarray([instance.demands[r].sum() for r in routes],
                       dtype=np.int64) if cvrp else None
    slots = _InsertionSlots(instance, routes)
    for oi in order:
        customer = missing[int(oi)]
        if cvrp:
            route_ok = loads + instance.demands[customer] <= instance.capacity
            if not route_ok.any():
                slots.open_route(customer)
                loads = np.append(loads, instance.demands[customer])
                continue
            costs = slots.added_costs(customer)
            if not route_ok.all():
                costs = np.where(route_ok[slots.slot_route_ids()], costs, np.inf)
        else:
            costs = slots.added_costs(customer)
        ri, pos = slots.locate(int(np.argmin(costs)))
        slots.insert(ri, pos, customer)
        if cvrp:
            loads[ri] += instance.demands[customer]
    return slots.routes


class RoutingSearch:
    """Per-search session over one routing instance.

    Three destroy operators (random, worst, related) and one repair
    (greedy insertion); the objective is exact total distance.
    """

    sense = Sense.MINIMIZE
    destroy_names = ("random", "worst", "related")
    repair_names = ("greedy",)

    def __init__(self, instance: RoutingInstance):
        self.instance = instance

    def initial_solution(self, rng: np.random.Generator) -> Routes:
        return repair_greedy(empty_solution(self.instance), self.instance, rng)

    def removable_count(self, solution: Routes) -> int:
        return sum(len(route) for route in solution)

    def destroy(self, op_index: int, solution: Routes, n_remove: int,
                rng: np.random.Generator) -> Routes:
        ops = (destroy_random_r, destroy_worst, destroy_related_r)
        if not 0 <= op_index < len(ops):
            raise OperatorError(f"unknown destroy operator index {op_index}")
        return ops[op_index](solution, n_remove, self.instance, rng)

    def repair(self, op_index: int, solution: Routes,
               rng: np.random.Generator) -> Routes:
        if op_index != 0:
            raise OperatorError(f"unknown repair operator index {op_index}")
        return repair_greedy(solution, self.instance, rng)

    def evaluate(self, solution: Routes, rng: np.random.Generator) -> float:
        return total_distance(self.instance, solution)
