"""Configuration, instance files, CLI, tuner and bench aggregation."""

import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from dralns import io
from dralns.cli import main
from dralns.config import (ABLATION_VARIANTS, ConfigError, ablation_env,
                           load_config, parse_config)
from dralns.core import AlnsParams, Sense
from dralns.env import EnvConfig
from dralns.opswtw import generate_instance
from dralns.policy import init_policy, save_checkpoint
from dralns.routing import generate_routing
from dralns.runner import ResultRow, aggregate_results, rows_from_csv
from dralns.tune import TuneSpec, sample_candidates, tune_random_search

from conftest import make_rng


def write_config(path: Path, **overrides) -> Path:
    data = {
        "problem": "tsp",
        "instances": {"generate": {"count": 2, "size": 8, "seed": 5}},
        "alns": {"iterations": 40},
    }
    data.update(overrides)
    path.write_text(yaml.safe_dump(data))
    return path


class TestConfig:
    def test_full_roundtrip(self, tmp_path):
        cfg_path = write_config(
            tmp_path / "run.yaml",
            alns={"omega": [6, 2, 1, 0], "theta": 0.9, "dod": 0.25,
                  "t_start": 1.5, "iterations": 123},
            env={"episode_length": 77, "control_severity": False},
            ppo={"learning_rate": 1e-3, "total_steps": 500},
            solve={"method": "vanilla", "runs_per_instance": 2},
        )
        cfg = load_config(cfg_path)
        assert cfg.problem == "tsp"
        assert cfg.alns.omega == (6.0, 2.0, 1.0, 0.0)
        assert cfg.alns.iterations == 123
        assert cfg.env.episode_length == 77
        assert not cfg.env.control_severity
        assert cfg.ppo.learning_rate == 1e-3
        assert cfg.solve.runs_per_instance == 2

    def test_unknown_problem_rejected(self):
        with pytest.raises(ConfigError):
            parse_config({"problem": "knapsack", "instances": {"path": "x"}})

    def test_missing_instances_rejected(self):
        with pytest.raises(ConfigError):
            parse_config({"problem": "tsp"})

    def test_bad_alns_values_rejected(self):
        with pytest.raises(ConfigError):
            parse_config({"problem": "tsp", "instances": {"path": "x"},
                          "alns": {"theta": 2.0}})

    def test_bad_solve_method_rejected(self):
        with pytest.raises(ConfigError):
            parse_config({"problem": "tsp", "instances": {"path": "x"},
                          "solve": {"method": "magic"}})

    def test_ablation_variants(self):
        base = EnvConfig(episode_length=50)
        os_only = ablation_env(base, "os", dod=0.4, t_start=1.1)
        assert not os_only.control_severity and not os_only.control_temperature
        assert os_only.fallback_dod == 0.4 and os_only.fallback_t_start == 1.1
        os_d = ablation_env(base, "os_d", dod=0.4, t_start=None)
        assert os_d.control_severity and not os_d.control_temperature
        os_acc = ablation_env(base, "os_acc", dod=0.4, t_start=None)
        assert not os_acc.control_severity and os_acc.control_temperature
        full = ablation_env(base, "os_d_acc", dod=0.4, t_start=None)
        assert full.control_severity and full.control_temperature
        with pytest.raises(ConfigError):
            ablation_env(base, "nothing", dod=0.4, t_start=None)


class TestInstanceIo:
    def test_opswtw_roundtrip(self, tmp_path):
        inst = generate_instance(12, seed=3)
        path = tmp_path / "a.json"
        io.save_instance(path, inst)
        loaded = io.load_instance(path)
        assert np.array_equal(inst.coords, loaded.coords)
        assert np.array_equal(inst.prizes, loaded.prizes)
        assert inst.max_tour == loaded.max_tour
        assert inst.beta == loaded.beta

    def test_routing_roundtrip(self, tmp_path):
        for variant, n in (("tsp", 10), ("cvrp", 10), ("mtsp", 10)):
            inst = generate_routing(variant, n, seed=3)
            path = tmp_path / f"{variant}.json"
            io.save_instance(path, inst)
            loaded = io.load_instance(path)
            assert loaded.variant == variant
            assert np.array_equal(inst.coords, loaded.coords)
            if variant == "cvrp":
                assert np.array_equal(inst.demands, loaded.demands)
                assert inst.capacity == loaded.capacity
            if variant == "mtsp":
                assert inst.salesmen == loaded.salesmen

    def test_unknown_format_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"format": "mystery"}))
        with pytest.raises(ValueError):
            io.load_instance(path)

    def test_directory_loading_sorted(self, tmp_path):
        for i in (2, 0, 1):
            io.save_instance(tmp_path / f"inst-{i}.json", generate_instance(5, seed=i))
        names = [name for name, _ in io.load_instance_dir(tmp_path)]
        assert names == ["inst-0", "inst-1", "inst-2"]

    def test_empty_directory_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            io.load_instance_dir(tmp_path)

    def test_csv_float_reprs_roundtrip(self, tmp_path):
        path = tmp_path / "x.csv"
        io.write_csv(path, ("a", "b"), [(0.1 + 0.2, True), (1.0, False)])
        header, rows = io.read_csv(path)
        assert header == ["a", "b"]
        assert float(rows[0][0]) == 0.1 + 0.2
        assert rows[0][1] == "true"


class TestCliGenerate:
    def test_writes_count_files_idempotently(self, tmp_path):
        out = tmp_path / "instances"
        args = ["generate", "--problem", "opswtw", "--size", "10",
                "--count", "5", "--seed", "3", "--out", str(out)]
        assert main(args) == 0
        files = sorted(out.glob("*.json"))
        assert len(files) == 5
        first = {f.name: f.read_bytes() for f in files}
        assert main(args) == 0
        for f in sorted(out.glob("*.json")):
            assert f.read_bytes() == first[f.name]

    def test_zero_count_succeeds_with_no_files(self, tmp_path):
        out = tmp_path / "none"
        assert main(["generate", "--problem", "tsp", "--size", "5",
                     "--count", "0", "--seed", "1", "--out", str(out)]) == 0
        assert list(out.glob("*.json")) == []

    def test_invalid_problem_is_usage_error(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["generate", "--problem", "sudoku", "--size", "5",
                  "--count", "1", "--seed", "1", "--out", str(tmp_path)])
        assert exc.value.code == 2


class TestCliSolve:
    def test_vanilla_rows_and_determinism(self, tmp_path):
        cfg = write_config(tmp_path / "run.yaml",
                           solve={"method": "vanilla", "runs_per_instance": 3})
        out = tmp_path / "out"
        assert main(["solve", "--config", str(cfg), "--seed", "1",
                     "--out", str(out)]) == 0
        results = (out / "results.csv").read_bytes()
        header, rows = io.read_csv(out / "results.csv")
        assert len(rows) == 2 * 3
        assert main(["solve", "--config", str(cfg), "--seed", "1",
                     "--out", str(out)]) == 0
        assert (out / "results.csv").read_bytes() == results
        assert (out / "timings.csv").exists()

    def test_trace_emission(self, tmp_path):
        cfg = write_config(tmp_path / "run.yaml")
        out = tmp_path / "out"
        assert main(["solve", "--config", str(cfg), "--seed", "1",
                     "--out", str(out), "--trace"]) == 0
        traces = sorted(out.glob("trace-*.csv"))
        assert len(traces) == 2
        header, rows = io.read_csv(traces[0])
        assert header[:3] == ["iteration", "current_obj", "best_obj"]
        assert len(rows) == 40

    def test_dralns_requires_matching_checkpoint(self, tmp_path):
        params = init_policy((3, 3, 10, 50), 0)  # wrong: tsp wants (3, 1, ...)
        ckpt = tmp_path / "model.npz"
        save_checkpoint(ckpt, params, {"problem": "opswtw", "n_destroy": 3,
                                       "n_repair": 3})
        cfg = write_config(tmp_path / "run.yaml",
                           solve={"method": "dralns", "checkpoint": str(ckpt)})
        out = tmp_path / "out"
        assert main(["solve", "--config", str(cfg), "--seed", "1",
                     "--out", str(out)]) == 3
        assert main(["solve", "--config", str(cfg), "--seed", "1",
                     "--out", str(out), "--allow-transfer"]) == 3

    def test_dralns_with_valid_checkpoint_runs(self, tmp_path):
        params = init_policy((3, 1, 10, 50), 0)
        ckpt = tmp_path / "model.npz"
        save_checkpoint(ckpt, params, {"problem": "tsp", "n_destroy": 3,
                                       "n_repair": 1})
        cfg = write_config(tmp_path / "run.yaml",
                           solve={"method": "dralns", "checkpoint": str(ckpt)})
        out = tmp_path / "out"
        assert main(["solve", "--config", str(cfg), "--seed", "1",
                     "--out", str(out), "--trace"]) == 0
        header, rows = io.read_csv(out / "results.csv")
        assert {r[1] for r in rows} == {"dralns"}
        trace_header, _ = io.read_csv(sorted(out.glob("trace-*.csv"))[0])
        assert trace_header[-2:] == ["severity", "temp_level"]

    def test_missing_config_is_config_error(self, tmp_path):
        assert main(["solve", "--config", str(tmp_path / "nope.yaml"),
                     "--out", str(tmp_path)]) == 3


class TestCliTrainAndResume:
    def test_train_writes_artifacts_and_resume_continues(self, tmp_path):
        cfg = write_config(
            tmp_path / "run.yaml",
            env={"episode_length": 10},
            ppo={"total_steps": 100, "horizon": 10, "parallel_envs": 2,
                 "update_epochs": 2, "minibatch_count": 2},
            train={"checkpoint": "model.npz"},
        )
        out = tmp_path / "out"
        assert main(["train", "--config", str(cfg), "--seed", "2",
                     "--out", str(out)]) == 0
        assert (out / "model.npz").exists()
        header, rows = io.read_csv(out / "training_trace.csv")
        assert header[0] == "episode"
        assert len(rows) == 10  # 100 steps / (2 envs x 10-step episodes)

        cfg2 = write_config(
            tmp_path / "run2.yaml",
            env={"episode_length": 10},
            ppo={"total_steps": 200, "horizon": 10, "parallel_envs": 2,
                 "update_epochs": 2, "minibatch_count": 2},
            train={"checkpoint": "model2.npz"},
        )
        from dralns.policy import load_checkpoint
        _, meta0, opt0 = load_checkpoint(out / "model.npz")
        assert meta0["step"] == 100
        assert opt0 is not None and opt0["step_count"] > 0  # resumable Adam state

        out2 = tmp_path / "out2"
        assert main(["train", "--config", str(cfg2), "--seed", "2",
                     "--out", str(out2), "--resume", str(out / "model.npz")]) == 0
        _, meta, _ = load_checkpoint(out2 / "model2.npz")
        assert meta["step"] == 200


class TestTuner:
    def test_budget_one_returns_single_sample(self, tmp_path):
        instances = [("i0", generate_routing("tsp", 8, seed=9))]
        rng = make_rng(1)
        candidates = sample_candidates(TuneSpec(budget=1, iterations=30), rng)
        assert len(candidates) == 1
        best, board = tune_random_search("tsp", instances, candidates,
                                         EnvConfig(), Sense.MINIMIZE, 0)
        assert best is candidates[0]
        assert len(board) == 1

    def test_ranges_respected(self):
        rng = make_rng(2)
        for params in sample_candidates(TuneSpec(budget=50, iterations=10), rng):
            assert all(0.0 <= w <= 50.0 for w in params.omega[:3])
            assert params.omega[3] == 0.0
            assert 0.5 <= params.theta <= 1.0
            assert 0.10 - 1e-12 <= params.dod <= 1.0
            assert 0.0 < params.t_start <= 5.0

    def test_argbest_dominates_injected_default(self):
        instances = [(f"i{k}", generate_routing("tsp", 10, seed=40 + k))
                     for k in range(3)]
        rng = make_rng(3)
        default = AlnsParams(iterations=60)
        candidates = [default] + sample_candidates(
            TuneSpec(budget=4, iterations=60), rng)
        best, board = tune_random_search("tsp", instances, candidates,
                                         EnvConfig(), Sense.MINIMIZE, 7)
        default_score = next(score for score, p in board if p is default)
        assert board[0][0] <= default_score
        assert best is board[0][1]

    def test_cli_tune_warns_on_overlap(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "run.yaml",
            alns={"iterations": 20},
            tune={"budget": 2,
                  "instances": {"generate": {"count": 2, "size": 8, "seed": 5}}},
        )
        out = tmp_path / "out"
        assert main(["tune", "--config", str(cfg), "--seed", "1",
                     "--out", str(out)]) == 0
        assert "overlap" in capsys.readouterr().err
        assert (out / "leaderboard.csv").exists()
        assert (out / "best_params.yaml").exists()
        header, rows = io.read_csv(out / "leaderboard.csv")
        assert len(rows) == 2


class TestBench:
    def test_aggregation_dominance_and_ties(self):
        rows = [
            ResultRow("i0", "a", 1.0, 10, 0), ResultRow("i0", "b", 2.0, 10, 0),
            ResultRow("i1", "a", 1.0, 10, 0), ResultRow("i1", "b", 2.0, 10, 0),
        ]
        table = aggregate_results(rows, Sense.MINIMIZE)
        by_method = {row[0]: row for row in table}
        assert by_method["a"][2] == 2 and by_method["b"][2] == 0
        tied = [ResultRow("i0", "a", 3.0, 10, 0), ResultRow("i0", "b", 3.0, 10, 0)]
        table = aggregate_results(tied, Sense.MINIMIZE)
        assert all(row[2] == 1 for row in table)

    def test_multiple_runs_collapse_to_best(self):
        rows = [ResultRow("i0", "a", 5.0, 10, 0), ResultRow("i0", "a", 3.0, 10, 1),
                ResultRow("i0", "b", 4.0, 10, 0)]
        table = aggregate_results(rows, Sense.MINIMIZE)
        by_method = {row[0]: row for row in table}
        assert by_method["a"][1] == 3.0 and by_method["a"][2] == 1
        assert by_method["b"][2] == 0
        # maximization flips both the collapse and the winner
        table = aggregate_results(rows, Sense.MAXIMIZE)
        by_method = {row[0]: row for row in table}
        assert by_method["a"][1] == 5.0 and by_method["a"][2] == 1

    def test_cli_bench_aggregates_inputs(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        cfg_a = write_config(tmp_path / "a.yaml", alns={"iterations": 30})
        assert main(["solve", "--config", str(cfg_a), "--seed", "1",
                     "--out", str(out_a)]) == 0
        cfg_b = write_config(tmp_path / "b.yaml", alns={"iterations": 30, "dod": 0.6})
        assert main(["solve", "--config", str(cfg_b), "--seed", "2",
                     "--out", str(out_b)]) == 0
        # relabel method in b so two methods meet in the bench
        header, rows = io.read_csv(out_b / "results.csv")
        rows = [[r[0], "vanilla-wide", *r[2:]] for r in rows]
        io.write_csv(out_b / "results.csv", header, rows)
        bench_cfg = write_config(
            tmp_path / "bench.yaml",
            bench={"inputs": [str(out_a / "results.csv"),
                              str(out_b / "results.csv")]})
        out = tmp_path / "bench_out"
        assert main(["bench", "--config", str(bench_cfg), "--seed", "0",
                     "--out", str(out)]) == 0
        header, rows = io.read_csv(out / "bench.csv")
        assert header == list(("method", "avg_objective", "nr_best", "instances"))
        assert {r[0] for r in rows} == {"vanilla", "vanilla-wide"}
        total_best = sum(int(r[2]) for r in rows)
        assert total_best >= 2  # every instance credits at least one method

    def test_bench_aggregates_match_independent_recompute(self):
        # independent oracle: plain-dict recomputation of Avg and Nr. Best
        rng = make_rng(12)
        rows = [ResultRow(f"i{rng.integers(6)}", f"m{rng.integers(3)}",
                          float(np.round(rng.uniform(1, 5), 2)), 10,
                          int(rng.integers(2))) for _ in range(80)]
        table = aggregate_results(rows, Sense.MINIMIZE)
        best = {}
        for r in rows:
            key = (r.instance, r.method)
            best[key] = min(best.get(key, np.inf), r.objective)
        methods = sorted({m for _, m in best})
        expect_avg = {m: np.mean([v for (i, mm), v in best.items() if mm == m])
                      for m in methods}
        expect_best = {m: 0 for m in methods}
        for inst in {i for i, _ in best}:
            per = {m: best[(inst, m)] for m in methods if (inst, m) in best}
            target = min(per.values())
            for m, v in per.items():
                if v == target:
                    expect_best[m] += 1
        for method, avg, nr_best, _ in table:
            assert avg == pytest.approx(expect_avg[method], abs=1e-12)
            assert nr_best == expect_best[method]

    def test_cli_solve_opswtw_rescoring_deterministic(self, tmp_path):
        import yaml
        cfg = tmp_path / "ops.yaml"
        cfg.write_text(yaml.safe_dump({
            "problem": "opswtw",
            "instances": {"generate": {"count": 2, "size": 8, "seed": 13}},
            "alns": {"iterations": 30},
            "solve": {"method": "vanilla", "evaluation_seed": 777},
        }))
        out = tmp_path / "out"
        assert main(["solve", "--config", str(cfg), "--seed", "6",
                     "--out", str(out)]) == 0
        first = (out / "results.csv").read_bytes()
        assert main(["solve", "--config", str(cfg), "--seed", "6",
                     "--out", str(out)]) == 0
        assert (out / "results.csv").read_bytes() == first
        # changing only the evaluation seed changes the rescored objectives
        cfg.write_text(cfg.read_text().replace("777", "778"))
        out2 = tmp_path / "out2"
        assert main(["solve", "--config", str(cfg), "--seed", "6",
                     "--out", str(out2)]) == 0
        assert (out2 / "results.csv").read_bytes() != first

    def test_cli_bench_without_rows_is_config_error(self, tmp_path):
        cfg = write_config(tmp_path / "bench.yaml", bench={"inputs": []})
        assert main(["bench", "--config", str(cfg), "--seed", "0",
                     "--out", str(tmp_path / "o")]) == 3

    def test_rows_from_csv_validates_columns(self, tmp_path):
        with pytest.raises(ValueError):
            rows_from_csv(["instance", "method"], [["a", "b"]])
