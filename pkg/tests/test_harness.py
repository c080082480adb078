import json
import os

import numpy as np
import pytest

from auxtrain.cli import load_config_file, main
from auxtrain.harness import (
    RunConfig,
    compare_models,
    emit_report,
    format_comparison,
    make_config,
    report_from_json,
    run_experiment,
    seed_failed,
)


def tiny_config(**overrides):
    base = dict(
        model="sapm",
        task="fnn",
        problem="sin1d",
        depth=3,
        width=4,
        iterations=20,
        seeds=2,
        train_size=20,
        test_size=30,
        workers=1,
    )
    base.update(overrides)
    return make_config(**base)


class TestFailureRule:
    def test_exact_threshold(self):
        assert seed_failed(1.0, 0.1)  # not strictly below 10%
        assert not seed_failed(1.0, 0.0999999)
        assert seed_failed(1.0, float("nan"))
        assert seed_failed(0.0, 0.0)

    def test_synthetic_traces(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            initial = float(rng.uniform(0.1, 10.0))
            final = float(rng.uniform(0.0, initial))
            assert seed_failed(initial, final) == (final >= 0.1 * initial)


class TestConfig:
    def test_problem_defaults(self):
        cfg = make_config("sapm", "pinn", "t3d")
        assert (cfg.interior_size, cfg.boundary_size) == (4000, 1600)
        assert cfg.activation == "sin"
        cfg = make_config("ls", "fnn", "ball10")
        assert cfg.train_size == 10000

    def test_invalid_model(self):
        with pytest.raises(ValueError):
            make_config("sgd", "fnn", "sin1d")

    def test_invalid_problem_task_pair(self):
        with pytest.raises(ValueError):
            make_config("sapm", "fnn", "t1d")

    def test_pinn_requires_sin(self):
        with pytest.raises(ValueError):
            RunConfig(task="pinn", problem="t1d", activation="relu").validate()

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError):
            make_config("sapm", "fnn", "sin1d", learning_rate=1.0)


class TestRunExperiment:
    def test_degenerate_zero_iterations(self):
        report = run_experiment(tiny_config(iterations=0, seeds=1))
        row = report.seeds[0]
        assert row.final_loss == row.initial_loss
        assert row.failed

    def test_best_seed_is_argmin_with_low_tie(self):
        report = run_experiment(tiny_config(seeds=3, iterations=30))
        finals = [s.final_loss for s in report.seeds]
        assert report.best_seed == report.seeds[int(np.argmin(finals))].seed

    def test_failure_count_consistent(self):
        report = run_experiment(tiny_config(seeds=3))
        assert report.failure_count == sum(s.failed for s in report.seeds)

    def test_pinn_task_runs(self):
        cfg = make_config(
            "sapm",
            "pinn",
            "t1d",
            depth=3,
            width=4,
            iterations=5,
            seeds=1,
            interior_size=20,
            boundary_size=8,
            test_size=15,
            workers=1,
        )
        report = run_experiment(cfg)
        assert np.isfinite(report.seeds[0].test_error)
        assert np.isnan(report.seeds[0].train_error)

    def test_parallel_matches_serial(self):
        serial = run_experiment(tiny_config(seeds=2, workers=1))
        parallel = run_experiment(tiny_config(seeds=2, workers=2))
        for a, b in zip(serial.seeds, parallel.seeds):
            np.testing.assert_array_equal(a.trace, b.trace)
            assert a.final_loss == b.final_loss


class TestEmitReport:
    def test_file_count_ten_seeds(self, tmp_path):
        out = tmp_path / "run"
        cfg = tiny_config(seeds=10, iterations=3, out_dir=str(out))
        run_experiment(cfg)
        files = sorted(os.listdir(out))
        assert len(files) == 12
        assert "report.json" in files and "summary.csv" in files
        assert sum(f.startswith("trace_seed") for f in files) == 10

    def test_empty_report_header_only(self, tmp_path):
        from auxtrain.harness import RunReport

        report = RunReport(
            config={}, seeds=[], best_seed=0, failure_count=0,
            timestamp="now", elapsed_seconds=0.0,
        )
        emit_report(report, tmp_path)
        lines = (tmp_path / "summary.csv").read_text().splitlines()
        assert len(lines) == 1 and lines[0].startswith("seed,")

    def test_round_trip(self, tmp_path):
        out = tmp_path / "run"
        report = run_experiment(tiny_config(seeds=2, out_dir=str(out)))
        back = report_from_json(out / "report.json")
        original = report.to_dict()
        assert back.to_dict() == original

    def test_trace_csv_format(self, tmp_path):
        out = tmp_path / "run"
        run_experiment(tiny_config(seeds=1, iterations=4, out_dir=str(out)))
        lines = (out / "trace_seed1.csv").read_text().splitlines()
        assert lines[0] == "iter,actual_loss,mse_loss,bound_ratio"
        assert len(lines) == 6  # header + initial state + 4 iterations
        first = lines[1].split(",")
        assert first[0] == "0" and "e" in first[1]

    def test_checkpoints_written_when_requested(self, tmp_path):
        out = tmp_path / "run"
        cfg = tiny_config(seeds=2, iterations=3, out_dir=str(out), save_checkpoints=True)
        run_experiment(cfg)
        assert (out / "params_seed1.csv").exists()
        assert (out / "params_seed2.csv").exists()


class TestDeterminism:
    def test_repeated_runs_byte_identical(self, tmp_path):
        out = tmp_path / "run"
        cfg = tiny_config(seeds=2, out_dir=str(out))
        run_experiment(cfg)
        snapshot = {name: (out / name).read_bytes() for name in os.listdir(out)}
        run_experiment(cfg)
        assert sorted(snapshot) == sorted(os.listdir(out))
        for name, first in snapshot.items():
            second = (out / name).read_bytes()
            if name == "report.json":
                a = json.loads(first)
                b = json.loads(second)
                for doc in (a, b):
                    doc.pop("timestamp")
                    doc.pop("elapsed_seconds")
                assert a == b
            else:
                assert first == second, name


class TestCompareModels:
    def test_single_config(self):
        rows = compare_models([tiny_config(seeds=1)])
        assert len(rows) == 1 and rows[0]["model"] == "sapm"

    def test_identical_configs_identical_rows(self):
        rows = compare_models([tiny_config(seeds=1), tiny_config(seeds=1)])
        assert rows[0] == rows[1]

    def test_model_ordering_preserved(self):
        configs = [tiny_config(model=m, seeds=1, iterations=10) for m in ("ls", "pm", "sapm")]
        rows = compare_models(configs)
        assert [r["model"] for r in rows] == ["ls", "pm", "sapm"]
        table = format_comparison(rows)
        assert table.splitlines()[1].split()[0] == "ls"

    def test_mismatched_configs_rejected(self):
        with pytest.raises(ValueError):
            compare_models([tiny_config(), tiny_config(depth=4)])


class TestCli:
    def test_fit_fnn_roundtrip(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = main(
            [
                "fit-fnn",
                "--model", "sapm",
                "--problem", "sin1d",
                "--depth", "3",
                "--width", "4",
                "--iters", "10",
                "--seeds", "1",
                "--train-size", "20",
                "--test-size", "20",
                "--workers", "1",
                "--out", str(out),
            ]
        )
        assert code == 0
        assert (out / "report.json").exists()
        assert "best seed" in capsys.readouterr().out

    def test_solve_transport_runs(self, tmp_path):
        out = tmp_path / "run"
        code = main(
            [
                "solve-transport",
                "--model", "pm",
                "--problem", "t1d",
                "--depth", "3",
                "--width", "4",
                "--iters", "3",
                "--seeds", "1",
                "--n1", "15",
                "--n2", "6",
                "--test-size", "10",
                "--workers", "1",
                "--out", str(out),
            ]
        )
        assert code == 0
        report = report_from_json(out / "report.json")
        assert report.config["task"] == "pinn"

    def test_config_file_and_flag_precedence(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text(
            "depth = 3\nwidth = 4\niterations = 5\nseeds = 1\n"
            "train_size = 20\ntest_size = 20\nworkers = 1\n# comment\n"
        )
        out = tmp_path / "run"
        code = main(
            [
                "fit-fnn",
                "--config", str(cfg_file),
                "--iters", "7",  # flag overrides the file
                "--out", str(out),
            ]
        )
        assert code == 0
        report = report_from_json(out / "report.json")
        assert report.config["iterations"] == 7
        assert report.config["depth"] == 3

    def test_config_file_parser(self, tmp_path):
        path = tmp_path / "x.cfg"
        path.write_text("a = 1\nb = 2.5\nc = true\nd = hello\n")
        assert load_config_file(path) == {"a": 1, "b": 2.5, "c": True, "d": "hello"}

    def test_bad_flag_value_exits_nonzero(self):
        with pytest.raises(SystemExit) as err:
            main(["fit-fnn", "--model", "nonsense"])
        assert err.value.code == 2

    def test_bad_config_returns_two(self, tmp_path):
        missing = tmp_path / "nope.cfg"
        assert main(["fit-fnn", "--config", str(missing)]) == 2

    def test_compare_subcommand(self, tmp_path, capsys):
        code = main(
            [
                "compare",
                "--task", "fnn",
                "--problem", "sin1d",
                "--models", "pm,sapm",
                "--depth", "3",
                "--width", "4",
                "--iters", "10",
                "--seeds", "1",
                "--train-size", "20",
                "--test-size", "20",
                "--workers", "1",
                "--out", str(tmp_path / "cmp"),
            ]
        )
        assert code == 0
        assert (tmp_path / "cmp" / "comparison.csv").exists()
        assert (tmp_path / "cmp" / "sapm" / "report.json").exists()
        out = capsys.readouterr().out
        assert "sapm" in out and "pm" in out
