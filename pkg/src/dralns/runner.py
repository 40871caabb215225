"""Experiment orchestration: solving instance sets, rescoring, aggregation.

Every run draws its randomness from a named seed stream derived from
(master seed, instance index, run index), so result CSVs are reproducible
byte for byte.  Wall-clock timings go to a separate file because they can
never be part of the determinism contract.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Any, Callable, NamedTuple, Sequence

import numpy as np

from .core import AlnsParams, Objective, TraceRow, run_vanilla_alns
from .env import AlnsEnv, EnvConfig, uniform_random_action
from .opswtw import evaluate_mc
from .policy import PolicyAgent, PolicyParams
from .problems import OPSWTW, make_search_factory

RESULT_HEADER = ("instance", "method", "objective", "iterations", "seed")
TIMING_HEADER = ("instance", "method", "seed", "wall_time_s")
DRALNS_TRACE_HEADER = ("iteration", "current_obj", "best_obj", "destroy_idx",
                       "repair_idx", "accepted", "temperature", "severity",
                       "temp_level")


class ResultRow(NamedTuple):
    instance: str
    method: str
    objective: float
    iterations: int
    seed: int


def run_rng(master_seed: int, instance_index: int, run_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence([master_seed, instance_index, run_index])
    return np.random.Generator(np.random.PCG64(ss))


def rescore_rng(evaluation_seed: int, instance_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence([evaluation_seed, instance_index])
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class RunOutput:
    best: Any
    objective: float
    trace: list


def run_policy_alns(search, agent: PolicyAgent | None, budget: int,
                    env_config: EnvConfig, rng: np.random.Generator, *,
                    collect_trace: bool = False) -> RunOutput:
    """One policy-controlled search of ``budget`` iterations.

    ``agent`` of None plays uniformly random actions (the untrained
    baseline).  The deployment episode length equals the search budget.
    """
    cfg = EnvConfig(episode_length=budget,
                    repair_eval_samples=env_config.repair_eval_samples,
                    accept_eval_samples=env_config.accept_eval_samples,
                    control_severity=env_config.control_severity,
                    control_temperature=env_config.control_temperature,
                    fallback_dod=env_config.fallback_dod,
                    fallback_t_start=env_config.fallback_t_start)
    env = AlnsEnv([search.instance], lambda _inst: search, cfg, rng)
    obs = env.reset()
    trace = []
    for it in range(budget):
        if agent is None:
            action = uniform_random_action(len(search.destroy_names),
                                           len(search.repair_names), rng)
        else:
            action = agent.act(obs.as_array(), rng)
        result = env.step(action)
        obs = result.observation
        if collect_trace:
            trace.append((it, result.info["current_obj"], result.info["best_obj"],
                          action.destroy_idx, action.repair_idx,
                          result.info["accepted"], result.info["temperature"],
                          action.severity, action.temp_level))
    return RunOutput(best=env.best_solution, objective=env.best_objective.value,
                     trace=trace)


def solve_one(problem: str, instance, method: str, params: AlnsParams,
              env_config: EnvConfig, rng: np.random.Generator,
              agent: PolicyAgent | None = None, *,
              collect_trace: bool = False) -> RunOutput:
    """One search run on one instance with the given method."""
    search = make_search_factory(problem, env_config)(instance)
    if method == "vanilla":
        result = run_vanilla_alns(search, params, rng, collect_trace=collect_trace)
        return RunOutput(best=result.best, objective=result.best_objective.value,
                         trace=list(result.trace))
    if method in ("dralns", "random-policy"):
        return run_policy_alns(search, agent if method == "dralns" else None,
                               params.iterations, env_config, rng,
                               collect_trace=collect_trace)
    raise ValueError(f"unknown method {method!r}")


def final_objective(problem: str, instance, instance_index: int, output: RunOutput,
                    env_config: EnvConfig, evaluation_seed: int) -> float:
    """Search objectives are comparable as-is for deterministic problems;
    stochastic orienteering is rescored with the fixed evaluation seed."""
    if problem != OPSWTW:
        return output.objective
    rng = rescore_rng(evaluation_seed, instance_index)
    return evaluate_mc(instance, output.best, env_config.accept_eval_samples, rng)


def solve_instances(problem: str, instances: Sequence[tuple[str, Any]], method: str,
                    params: AlnsParams, env_config: EnvConfig, master_seed: int,
                    runs_per_instance: int = 1, agent: PolicyAgent | None = None,
                    evaluation_seed: int = 1234, *, method_label: str | None = None,
                    collect_traces: bool = False,
                    progress: Callable[[str], None] | None = None):
    """All (instance, run) combinations for one method.

    Returns (result rows, timing rows, {(instance, seed): trace rows}).
    """
    label = method_label or method
    rows: list[ResultRow] = []
    timings: list[tuple] = []
    traces: dict[tuple[str, int], list] = {}
    for idx, (name, instance) in enumerate(instances):
        for run in range(runs_per_instance):
            rng = run_rng(master_seed, idx, run)
            started = time.perf_counter()
            output = solve_one(problem, instance, method, params, env_config, rng,
                               agent, collect_trace=collect_traces)
            elapsed = time.perf_counter() - started
            objective = final_objective(problem, instance, idx, output,
                                        env_config, evaluation_seed)
            rows.append(ResultRow(name, label, objective, params.iterations,
                                  run))
            timings.append((name, label, run, elapsed))
            if collect_traces:
                traces[(name, run)] = output.trace
        if progress:
            progress(f"  [{label}] {idx + 1}/{len(instances)} instances")
    return rows, timings, traces


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

BENCH_HEADER = ("method", "avg_objective", "nr_best", "instances")


def aggregate_results(rows: Sequence[ResultRow], sense) -> list[tuple]:
    """Per-method average best objective and number of per-instance bests.

    Multiple runs per (instance, method) collapse to the best run first;
    ties on an instance credit every tied method.
    """
    from .core import Sense

    best_per: dict[tuple[str, str], float] = {}
    for row in rows:
        key = (row.instance, row.method)
        value = row.objective
        if key not in best_per:
            best_per[key] = value
        elif sense is Sense.MAXIMIZE:
            best_per[key] = max(best_per[key], value)
        else:
            best_per[key] = min(best_per[key], value)

    methods = sorted({m for _, m in best_per})
    instances = sorted({i for i, _ in best_per})
    table = []
    nr_best = {m: 0 for m in methods}
    for inst in instances:
        values = {m: best_per[(inst, m)] for m in methods if (inst, m) in best_per}
        if not values:
            continue
        target = max(values.values()) if sense is Sense.MAXIMIZE else min(values.values())
        for m, v in values.items():
            if v == target:
                nr_best[m] += 1
    for m in methods:
        own = [v for (i, mm), v in best_per.items() if mm == m]
        table.append((m, float(np.mean(own)), nr_best[m], len(own)))
    return table


def rows_from_csv(header: list[str], raw_rows: list[list[str]]) -> list[ResultRow]:
    index = {name: i for i, name in enumerate(header)}
    missing = [c for c in RESULT_HEADER if c not in index]
    if missing:
        raise ValueError(f"results CSV is missing columns {missing}")
    out = []
    for raw in raw_rows:
        out.append(ResultRow(raw[index["instance"]], raw[index["method"]],
                             float(raw[index["objective"]]),
                             int(raw[index["iterations"]]), int(raw[index["seed"]])))
    return out


def sort_result_rows(rows: Sequence[ResultRow]) -> list[ResultRow]:
    return sorted(rows, key=lambda r: (r.instance, r.method, r.seed))


def trace_rows_for_csv(trace: Sequence) -> list[tuple]:
    out = []
    for row in trace:
        if isinstance(row, TraceRow):
            out.append(tuple(row))
        else:
            out.append(tuple(row))
    return out
