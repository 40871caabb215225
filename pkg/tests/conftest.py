"""Shared fixtures and independent oracles used across the test suite."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from dralns.routing import RoutingInstance, total_distance


def make_rng(seed: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


@pytest.fixture
def rng() -> np.random.Generator:
    return make_rng(12345)


class FakeRng:
    """Random-stream stub with scripted integer draws and uniforms.

    ``integers(...)`` pops scripted values (broadcast to the requested
    size); ``random(...)`` pops scripted uniforms.  Used to force noise
    realizations and operator picks in hand-traced scenarios.
    """

    def __init__(self, integers=(), uniforms=()):
        self._integers = list(integers)
        self._uniforms = list(uniforms)

    def integers(self, low, high=None, size=None):
        value = self._integers.pop(0)
        if size is None:
            return int(value)
        return np.full(size, value, dtype=np.int64)

    def random(self, size=None):
        value = self._uniforms.pop(0)
        if size is None:
            return float(value)
        return np.full(size, value)


def brute_force_tsp(instance: RoutingInstance) -> float:
    """Exhaustive optimum of a small TSP by enumerating permutations."""
    n_customers = instance.n_customers
    assert n_customers <= 8, "exhaustive oracle is for tiny instances only"
    best = np.inf
    for perm in itertools.permutations(range(1, n_customers + 1)):
        best = min(best, total_distance(instance, [list(perm)]))
    return best
