import csv
import itertools

import numpy as np
import pytest

from pzobo import estimators as est
from pzobo.harness import (CSV_HEADER, MetricsRecord, RunConfig, UsageError, build_problem,
                           main, parse_cli, read_csv, run_experiment, write_csv)


def _ticker():
    counter = itertools.count()
    return lambda: 0.001 * next(counter)


class TestRunExperiment:
    def test_single_oracle_step_by_hand(self):
        cfg = RunConfig(problem="quadratic", algo="oracle", K=1, beta=0.1, seed=0)
        prob = build_problem("quadratic", 0)
        stats = {}
        records = run_experiment(cfg, clock=_ticker(), stats=stats)
        assert len(records) == 1 and records[0].k == 0
        x0 = prob.initial_x(0)
        _, _, g = prob.oracle(x0)
        np.testing.assert_allclose(stats["x_final"], x0 - 0.1 * g, rtol=1e-14)
        assert records[0].hypergrad_norm == pytest.approx(np.linalg.norm(g))
        assert records[0].outer_loss == pytest.approx(prob.phi(x0))

    def test_records_monotone(self):
        records = run_experiment(RunConfig(problem="quadratic", algo="pzobo", K=20, N=10))
        assert [r.k for r in records] == list(range(20))
        assert all(b.wall_time_s >= a.wall_time_s for a, b in zip(records, records[1:]))
        assert all(r.oracle_err is None for r in records)

    def test_inner_call_accounting(self):
        for algo in ("pzobo", "hozog"):
            stats = {}
            run_experiment(RunConfig(problem="quadratic", algo=algo, K=7, N=11, Q=3), stats=stats)
            assert stats["inner_calls"] == 7 * (3 + 1) * 11

    def test_identical_csv_bytes(self, tmp_path):
        cfg = RunConfig(problem="quadratic", algo="pzobo-s", K=15, N=10, Q=2, seed=3,
                        problem_params=dict(m=16, n=8), S=4, D_f=3, track_oracle=True)
        for name in ("a.csv", "b.csv"):
            write_csv(run_experiment(cfg, clock=_ticker()), tmp_path / name)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_oracle_tracking(self):
        records = run_experiment(RunConfig(problem="quadratic", algo="itd", K=3, N=400,
                                           track_oracle=True))
        assert all(r.oracle_err < 1e-8 for r in records)

    def test_finite_difference_tracking_without_oracle(self):
        cfg = RunConfig(problem="ho-logistic", algo="itd", K=2, N=30, track_oracle=True,
                        problem_params=dict(n_train=30, n_val=10, features=2, classes=2))
        records = run_experiment(cfg)
        assert all(r.oracle_err is not None and np.isfinite(r.oracle_err) for r in records)

    def test_invalid_combinations_rejected_before_running(self):
        with pytest.raises(ValueError):
            run_experiment(RunConfig(problem="ho-logistic", algo="oracle", K=1,
                                     problem_params=dict(n_train=10, n_val=5, features=2,
                                                         classes=2)))
        with pytest.raises(ValueError):
            run_experiment(RunConfig(problem="quadratic", algo="pzobo", K=0))
        with pytest.raises(ValueError):
            run_experiment(RunConfig(problem="quadratic", algo="pzobo-s", K=1, S=5))

    def test_failure_terminates_and_is_recorded(self):
        stats = {}
        cfg = RunConfig(problem="quadratic", algo="pzobo", K=10, N=200, alpha=5.0)
        records = run_experiment(cfg, stats=stats)
        assert records == []
        assert "iteration 0" in stats["failure"]

    def test_warm_start_reuses_inner_solution(self):
        cold = run_experiment(RunConfig(problem="quadratic", algo="pzobo", K=5, N=2, beta=1e-3))
        warm = run_experiment(RunConfig(problem="quadratic", algo="pzobo", K=5, N=2, beta=1e-3,
                                        warm_start=True))
        assert cold[0].inner_residual == warm[0].inner_residual
        assert warm[-1].inner_residual < cold[-1].inner_residual


class TestCSV:
    def _record(self, **kw):
        base = dict(k=0, wall_time_s=0.1, outer_loss=1 / 3, hypergrad_norm=2 ** 0.5,
                    oracle_err=None, inner_residual=1e-300)
        base.update(kw)
        return MetricsRecord(**base)

    def test_empty(self, tmp_path):
        write_csv([], tmp_path / "e.csv")
        assert (tmp_path / "e.csv").read_text() == ",".join(CSV_HEADER) + "\n"

    def test_one_record_two_lines(self, tmp_path):
        write_csv([self._record()], tmp_path / "o.csv")
        lines = (tmp_path / "o.csv").read_text().splitlines()
        assert len(lines) == 2
        assert lines[1].split(",")[4] == ""
        assert lines[1].split(",")[2] == "0.33333333333333331"

    def test_round_trip(self, tmp_path):
        records = run_experiment(RunConfig(problem="quadratic", algo="pzobo", K=5,
                                           track_oracle=True))
        records.append(self._record(k=5))
        write_csv(records, tmp_path / "r.csv")
        assert read_csv(tmp_path / "r.csv") == records

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(OSError, match="nope"):
            write_csv([], tmp_path / "nope" / "x.csv")


class TestParseCli:
    def test_minimal_valid(self):
        cfg = parse_cli("--problem quadratic --algo oracle --outer-steps 1 --beta 0.1 --seed 0 "
                        "--out o.csv".split())
        assert (cfg.problem, cfg.algo, cfg.K, cfg.beta, cfg.seed, cfg.out) == (
            "quadratic", "oracle", 1, 0.1, 0, "o.csv")
        assert cfg.command == "run"

    def test_published_settings_for_hr_linear(self):
        cfg = parse_cli("run --problem hr-linear --algo pzobo --inner-steps 20 --alpha 0.001 "
                        "--q 1 --mu 0.01 --outer-opt adam --beta 0.05 --outer-steps 500 "
                        "--problem-param gamma=0.1 --out hr.csv".split())
        assert (cfg.N, cfg.alpha, cfg.Q, cfg.mu, cfg.outer_opt, cfg.beta, cfg.K) == (
            20, 0.001, 1, 0.01, "adam", 0.05, 500)
        assert cfg.problem_params == {"gamma": 0.1}

    @pytest.mark.parametrize("argv, flag", [
        ("--problem quadratic --algo pzobo --q 0 --out o.csv", "--q"),
        ("--problem quadratic --algo pzobo --mu -1 --out o.csv", "--mu"),
        ("--problem quadratic --algo pzobo --outer-steps 0 --out o.csv", "--outer-steps"),
        ("--problem quadratic --algo pzobo --batch-size 0 --out o.csv", "--batch-size"),
        ("--problem quadratic --algo maml --out o.csv", "--algo"),
        ("--problem mnist --algo pzobo --out o.csv", "--problem"),
        ("--algo pzobo --out o.csv", "--problem"),
        ("--problem quadratic --algo pzobo", "--out"),
        ("--problem quadratic --algo pzobo --out o.csv --problem-param zeta=1", "--problem-param"),
    ])
    def test_usage_errors_name_flag(self, argv, flag):
        with pytest.raises(UsageError, match=flag):
            parse_cli(argv.split())

    def test_unknown_flag_rejected(self):
        with pytest.raises(UsageError, match="--fast"):
            parse_cli("--problem quadratic --algo pzobo --out o.csv --fast".split())

    def test_subcommands(self):
        sweep = parse_cli("sweep-n --problem hr-linear --algo pzobo --n-values 5,10 "
                          "--out s.csv".split())
        assert sweep.command == "sweep-n" and sweep.n_values == (5, 10)
        bv = parse_cli("bias-variance --problem quadratic --algo pzobo --trials 50 "
                       "--out b.csv".split())
        assert bv.command == "bias-variance" and bv.trials == 50

    def test_help_lists_defaults(self, capsys):
        with pytest.raises(SystemExit):
            parse_cli(["run", "--help"])
        text = capsys.readouterr().out
        assert "default: 20" in text and "--inner-steps" in text


class TestMain:
    def test_run_success(self, tmp_path):
        out = tmp_path / "run.csv"
        code = main(["--problem", "quadratic", "--algo", "pzobo", "--outer-steps", "3",
                     "--freeze-clock", "--out", str(out)])
        assert code == 0
        rows = list(csv.DictReader(open(out)))
        assert len(rows) == 3 and all(r["wall_time_s"] == "0" for r in rows)

    def test_frozen_clock_runs_are_byte_identical(self, tmp_path):
        args = ["--problem", "quadratic", "--algo", "pzobo-s", "--outer-steps", "5",
                "--problem-param", "m=10", "--problem-param", "n=4", "--batch-size", "3",
                "--outer-batch-size", "2", "--freeze-clock", "--seed", "9"]
        main(args + ["--out", str(tmp_path / "a.csv")])
        main(args + ["--out", str(tmp_path / "b.csv")])
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_usage_error_exit_code(self, tmp_path, capsys):
        assert main(["--problem", "quadratic", "--algo", "pzobo", "--q", "0",
                     "--out", str(tmp_path / "x.csv")]) == 1
        assert "--q" in capsys.readouterr().err

    def test_unsupported_combination_exit_code(self, tmp_path):
        assert main(["--problem", "ho-logistic", "--algo", "oracle",
                     "--out", str(tmp_path / "x.csv")]) == 1

    def test_numerical_failure_exit_code(self, tmp_path):
        assert main(["--problem", "quadratic", "--algo", "pzobo", "--alpha", "5",
                     "--inner-steps", "200", "--out", str(tmp_path / "x.csv")]) == 2

    def test_sweep_writes_one_file_per_n(self, tmp_path):
        code = main(["sweep-n", "--problem", "quadratic", "--algo", "pzobo", "--outer-steps",
                     "2", "--n-values", "3,6", "--out", str(tmp_path / "s.csv")])
        assert code == 0
        assert (tmp_path / "s_N3.csv").exists() and (tmp_path / "s_N6.csv").exists()

    def test_bias_variance_report(self, tmp_path):
        out = tmp_path / "bv.csv"
        assert main(["bias-variance", "--problem", "quadratic", "--algo", "pzobo", "--q", "4",
                     "--trials", "20", "--out", str(out)]) == 0
        row = next(csv.DictReader(open(out)))
        assert row["estimator"] == "pzobo" and row["Q"] == "4" and row["ref_source"] == "oracle"


def test_every_estimator_reachable_from_harness():
    for algo in est.ESTIMATORS:
        params = dict(m=8, n=4) if algo == "pzobo-s" else {}
        kw = dict(S=2, D_f=2) if algo == "pzobo-s" else {}
        records = run_experiment(RunConfig(problem="quadratic", algo=algo, K=2,
                                           problem_params=params, **kw))
        assert len(records) == 2
