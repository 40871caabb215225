"""Command line interface.

Subcommands: ``generate`` (instance files), ``solve`` (vanilla or
policy-controlled search over an instance set), ``train`` (PPO),
``tune`` (random-search parameter tuning) and ``bench`` (aggregation and
ablations).  Exit codes: 0 success, 2 usage error, 3 configuration or
checkpoint-fingerprint error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import io
from .config import (ABLATION_VARIANTS, ConfigError, InstanceSpec, RunConfig,
                     ablation_env, load_config)
from .core import TRACE_HEADER, Sense
from .env import SEVERITY_LEVELS, TEMP_LEVELS
from .policy import (Adam, FingerprintError, PolicyAgent, PpoConfig,
                     init_policy, load_checkpoint, save_checkpoint, train)
from .problems import (OPSWTW, PROBLEM_NAMES, fingerprint, get_problem,
                       make_search_factory)
from .runner import (BENCH_HEADER, DRALNS_TRACE_HEADER, RESULT_HEADER,
                     TIMING_HEADER, aggregate_results, rows_from_csv,
                     solve_instances, sort_result_rows)
from .tune import (LEADERBOARD_HEADER, TuneSpec, leaderboard_rows,
                   sample_candidates, tune_random_search)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3

TRAIN_TRACE_HEADER = ("episode", "total_steps", "episode_reward",
                      "reward_per_step", "rolling_mean", "rolling_std")


def generate_instances(problem: str, size: int, count: int, seed: int,
                       salesmen: int = 2) -> list[tuple[str, Any]]:
    spec = get_problem(problem)
    out = []
    for i in range(count):
        instance_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        if problem == OPSWTW:
            instance = spec.generate(size, instance_seed)
        else:
            instance = spec.generate(size, instance_seed, salesmen=salesmen)
        out.append((Path(io.instance_filename(problem, size, seed, i)).stem, instance))
    return out


def resolve_instances(problem: str, spec: InstanceSpec) -> list[tuple[str, Any]]:
    if spec.path is not None:
        return io.load_instance_dir(spec.path)
    if spec.count < 1:
        raise ConfigError("instances.generate.count must be at least 1")
    return generate_instances(problem, spec.size, spec.count, spec.seed,
                              salesmen=spec.salesmen)


def _load_agent(cfg: RunConfig, allow_transfer: bool) -> PolicyAgent:
    if cfg.solve.checkpoint is None:
        raise ConfigError("solve.method dralns needs solve.checkpoint")
    params, _, _ = load_checkpoint(cfg.solve.checkpoint,
                                   expected_fingerprint=fingerprint(cfg.problem),
                                   allow_transfer=allow_transfer)
    return PolicyAgent(params, cfg.alns.iterations,
                       deterministic=cfg.solve.deterministic)


def _progress(message: str) -> None:
    print(message, file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_generate(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    instances = generate_instances(args.problem, args.size, args.count, args.seed,
                                   salesmen=args.salesmen)
    for name, instance in instances:
        io.save_instance(out_dir / f"{name}.json", instance)
    print(f"wrote {len(instances)} {args.problem} instances to {out_dir}")
    return EXIT_OK


def cmd_solve(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    instances = resolve_instances(cfg.problem, cfg.instances)
    agent = None
    if cfg.solve.method == "dralns":
        agent = _load_agent(cfg, args.allow_transfer)
    rows, timings, traces = solve_instances(
        cfg.problem, instances, cfg.solve.method, cfg.alns, cfg.env,
        master_seed=args.seed, runs_per_instance=cfg.solve.runs_per_instance,
        agent=agent, evaluation_seed=cfg.solve.evaluation_seed,
        collect_traces=args.trace, progress=_progress if args.verbose else None)
    io.write_csv(out_dir / "results.csv", RESULT_HEADER, sort_result_rows(rows))
    io.write_csv(out_dir / "timings.csv", TIMING_HEADER, timings)
    if args.trace:
        header = TRACE_HEADER if cfg.solve.method == "vanilla" else DRALNS_TRACE_HEADER
        for (name, run), trace in traces.items():
            io.write_csv(out_dir / f"trace-{name}-r{run}.csv", header,
                         [tuple(r) for r in trace])
    table = aggregate_results(rows, get_problem(cfg.problem).sense)
    for method, avg, _, n in table:
        print(f"{method}: mean objective {avg:.4f} over {n} instances")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    instances = [inst for _, inst in resolve_instances(cfg.problem, cfg.instances)]
    make_search = make_search_factory(cfg.problem, cfg.env)
    checkpoint_path = out_dir / cfg.train.checkpoint
    fp = fingerprint(cfg.problem)

    params = optimizer = None
    start_step = 0
    if args.resume:
        params, meta, opt_state = load_checkpoint(args.resume,
                                                  expected_fingerprint=fp,
                                                  allow_transfer=args.allow_transfer)
        start_step = int(meta.get("step", 0))
        if opt_state is not None:
            optimizer = Adam(params, opt_state["learning_rate"])
            optimizer.load_state(opt_state)
        print(f"resuming from {args.resume} at step {start_step}")

    def save(p, opt, step):
        save_checkpoint(out_dir / f"checkpoint-{step}.npz", p, fp, step, opt)

    params, trace = train(instances, make_search, cfg.env, cfg.ppo, seed=args.seed,
                          params=params, optimizer=optimizer, start_step=start_step,
                          checkpoint_every=cfg.train.checkpoint_interval,
                          checkpoint_fn=save if cfg.train.checkpoint_interval else None,
                          log_every=10 if args.verbose else 0)
    final_step = int(trace.updates[-1]["total_steps"]) if trace.updates else start_step
    save_checkpoint(checkpoint_path, params, fp, final_step,
                    trace.final_optimizer or optimizer)
    io.write_csv(out_dir / "training_trace.csv", TRAIN_TRACE_HEADER,
                 [(e["episode"], e["total_steps"], e["episode_reward"],
                   e["reward_per_step"], e["rolling_mean"], e["rolling_std"])
                  for e in trace.episodes])
    print(f"trained to step {final_step}; checkpoint at {checkpoint_path}")
    return EXIT_OK


def cmd_tune(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.tune.instances is None:
        raise ConfigError("tune needs a tune.instances section")
    if cfg.tune.instances.key() == cfg.instances.key():
        print("warning: tuning instances overlap the evaluation instances",
              file=sys.stderr)
    instances = resolve_instances(cfg.problem, cfg.tune.instances)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(args.seed)))
    spec = TuneSpec(budget=cfg.tune.budget, iterations=cfg.alns.iterations)
    candidates = sample_candidates(spec, rng)
    sense = get_problem(cfg.problem).sense
    best, leaderboard = tune_random_search(cfg.problem, instances, candidates,
                                           cfg.env, sense, master_seed=args.seed)
    io.write_csv(out_dir / "leaderboard.csv", LEADERBOARD_HEADER,
                 leaderboard_rows(leaderboard))
    best_path = out_dir / "best_params.yaml"
    best_path.write_text(
        "alns:\n"
        f"  omega: [{', '.join(repr(w) for w in best.omega)}]\n"
        f"  theta: {best.theta!r}\n"
        f"  dod: {best.dod!r}\n"
        f"  t_start: {best.t_start!r}\n"
        f"  iterations: {best.iterations}\n")
    print(f"best score {leaderboard[0][0]:.4f}; wrote {best_path}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    sense = get_problem(cfg.problem).sense
    rows = []
    for path in cfg.bench.inputs:
        header, raw = io.read_csv(path)
        rows.extend(rows_from_csv(header, raw))

    if cfg.bench.ablation is not None:
        checkpoint = cfg.bench.ablation.get("checkpoint")
        if checkpoint is None:
            raise ConfigError("bench.ablation needs a checkpoint")
        params, _, _ = load_checkpoint(checkpoint,
                                       expected_fingerprint=fingerprint(cfg.problem),
                                       allow_transfer=args.allow_transfer)
        agent = PolicyAgent(params, cfg.alns.iterations)
        instances = resolve_instances(cfg.problem, cfg.instances)
        variants = cfg.bench.ablation.get("variants", list(ABLATION_VARIANTS))
        for variant in variants:
            env_cfg = ablation_env(cfg.env, variant, cfg.alns.dod, cfg.alns.t_start)
            new_rows, _, _ = solve_instances(
                cfg.problem, instances, "dralns", cfg.alns, env_cfg,
                master_seed=args.seed, runs_per_instance=cfg.solve.runs_per_instance,
                agent=agent, evaluation_seed=cfg.solve.evaluation_seed,
                method_label=f"dralns-{variant}",
                progress=_progress if args.verbose else None)
            rows.extend(new_rows)

    if not rows:
        raise ConfigError("bench needs result rows (bench.inputs and/or ablation)")
    io.write_csv(out_dir / "all_rows.csv", RESULT_HEADER, sort_result_rows(rows))
    table = aggregate_results(rows, sense)
    io.write_csv(out_dir / "bench.csv", BENCH_HEADER, table)
    for method, avg, nr_best, n in table:
        print(f"{method:>24}  avg={avg:.4f}  nr_best={nr_best}/{n}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dralns",
        description="Adaptive large neighborhood search with a learned controller")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write instance files")
    gen.add_argument("--problem", required=True, choices=PROBLEM_NAMES)
    gen.add_argument("--size", type=int, required=True)
    gen.add_argument("--count", type=int, required=True)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--salesmen", type=int, default=2)
    gen.add_argument("--out", required=True)
    gen.set_defaults(handler=cmd_generate)

    def common(p):
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=".")
        p.add_argument("--allow-transfer", action="store_true")
        p.add_argument("--trace", action="store_true")
        p.add_argument("--verbose", action="store_true")

    solve = sub.add_parser("solve", help="run a search over an instance set")
    common(solve)
    solve.set_defaults(handler=cmd_solve)

    tr = sub.add_parser("train", help="train the search controller")
    common(tr)
    tr.add_argument("--resume", default=None)
    tr.set_defaults(handler=cmd_train)

    tu = sub.add_parser("tune", help="random-search parameter tuning")
    common(tu)
    tu.set_defaults(handler=cmd_tune)

    be = sub.add_parser("bench", help="aggregate results / run ablations")
    common(be)
    be.set_defaults(handler=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, FingerprintError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
