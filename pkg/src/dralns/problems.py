"""Registry wiring problem names to generators and search sessions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

from .core import Sense
from .env import EnvConfig
from .opswtw import OpswtwSearch, generate_instance
from .routing import CVRP, MTSP, TSP, RoutingSearch, generate_routing

OPSWTW = "opswtw"
PROBLEM_NAMES = (OPSWTW, TSP, CVRP, MTSP)


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    sense: Sense
    n_destroy: int
    n_repair: int
    generate: Callable[..., Any]


def _generate_for(variant: str):
    def gen(n: int, seed: int, salesmen: int = 2):
        return generate_routing(variant, n, seed, salesmen=salesmen)
    return gen


PROBLEMS: dict[str, ProblemSpec] = {
    OPSWTW: ProblemSpec(OPSWTW, Sense.MAXIMIZE, 3, 3, generate_instance),
    TSP: ProblemSpec(TSP, Sense.MINIMIZE, 3, 1, _generate_for(TSP)),
    CVRP: ProblemSpec(CVRP, Sense.MINIMIZE, 3, 1, _generate_for(CVRP)),
    MTSP: ProblemSpec(MTSP, Sense.MINIMIZE, 3, 1, _generate_for(MTSP)),
}


def get_problem(name: str) -> ProblemSpec:
    try:
        return PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {PROBLEM_NAMES}") from None


def make_search_factory(problem: str, env_config: EnvConfig) -> Callable[[Any], Any]:
    """A fresh per-search session builder for ``problem``."""
    get_problem(problem)
    if problem == OPSWTW:
        def factory(instance):
            return OpswtwSearch(instance,
                                repair_samples=env_config.repair_eval_samples,
                                accept_samples=env_config.accept_eval_samples)
    else:
        def factory(instance):
            return RoutingSearch(instance)
    return factory


def fingerprint(problem: str) -> dict[str, Any]:
    spec = get_problem(problem)
    return {"problem": spec.name, "n_destroy": spec.n_destroy,
            "n_repair": spec.n_repair}
