"""Benchmark runner and command-line interface.

    pzobo [run] --problem quadratic --algo pzobo --outer-steps 200 --out run.csv
    pzobo sweep-n --problem hr-linear --algo pzobo --n-values 5,10,20 --out sweep.csv
    pzobo bias-variance --problem quadratic --algo pzobo --q 10 --trials 1000 --out bv.csv

Exit codes: 0 success, 1 usage error, 2 numerical failure.
"""

import argparse
import csv
import logging
import math
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import estimators as est
from .errors import BilevelError
from .outer import OuterState, adam_step, gd_step
from .problems import (LogisticHOProblem, generate_ho_dataset, generate_hr_dataset,
                       make_hr_problem, quadratic_make)
from .verification import estimate_bias_variance, fd_hypergradient, write_report_csv

log = logging.getLogger("pzobo")

PROBLEMS = ("quadratic", "hr-linear", "hr-2layer", "ho-logistic")
OUTER_OPTS = ("gd", "adam")
CSV_HEADER = ("k", "wall_time_s", "outer_loss", "hypergrad_norm", "oracle_err", "inner_residual")
# (CG, FP): CG must reach 1e-10; FP runs a fixed 100 iterations as a truncated solve
AID_TOL = (1e-10, None)

PROBLEM_DEFAULTS = {
    "quadratic": dict(p=10, d=10, conditioning=10.0, m=1, n=1, lam_r=0.1),
    "hr-linear": dict(n1=100, n2=100, m=50, d=30, noise_sd=0.1, gamma=0.1),
    "hr-2layer": dict(n1=100, n2=100, m=50, d=30, noise_sd=0.1, gamma=0.1, hidden=32),
    "ho-logistic": dict(n_train=500, n_val=200, features=20, classes=4),
}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    problem: str
    algo: str
    out: str | None = None
    N: int = 20
    K: int = 100
    Q: int = 1
    mu: float = 0.01
    alpha: float | None = None
    beta: float = 0.05
    outer_opt: str = "gd"
    seed: int = 0
    S: int | None = None
    D_f: int | None = None
    warm_start: bool = False
    track_oracle: bool = False
    freeze_clock: bool = False
    problem_params: dict = field(default_factory=dict)
    # subcommand extras
    command: str = "run"
    n_values: tuple = (5, 10, 20)
    trials: int = 1000


@dataclass
class MetricsRecord:
    k: int
    wall_time_s: float
    outer_loss: float
    hypergrad_norm: float
    oracle_err: float | None
    inner_residual: float


def build_problem(name, seed, params=None):
    if name not in PROBLEMS:
        raise ValueError(f"unknown problem {name!r}")
    opts = dict(PROBLEM_DEFAULTS[name])
    opts.update(params or {})
    data_seed = int(opts.pop("data_seed", seed))
    if name == "quadratic":
        return quadratic_make(data_seed, int(opts["p"]), int(opts["d"]), float(opts["conditioning"]),
                              m=int(opts["m"]), n=int(opts["n"]), lam_r=float(opts["lam_r"]))
    if name.startswith("hr-"):
        kind = "linear" if name == "hr-linear" else "two-layer"
        data = generate_hr_dataset(data_seed, int(opts["n1"]), int(opts["n2"]), int(opts["m"]),
                                   int(opts["d"]), float(opts["noise_sd"]), kind,
                                   gamma=float(opts["gamma"]), hidden=int(opts.get("hidden", 32)))
        return make_hr_problem(data)
    data = generate_ho_dataset(data_seed, int(opts["n_train"]), int(opts["n_val"]),
                               int(opts["features"]), int(opts["classes"]))
    return LogisticHOProblem(data)


def _check_combination(config, problem):
    if config.algo not in est.ESTIMATORS:
        raise ValueError(f"unknown estimator {config.algo!r}")
    if config.algo in est.SECOND_ORDER and not problem.has_second_order:
        raise ValueError(f"{config.algo} needs second-order oracles that {problem.name} lacks")
    if config.algo == "oracle" and not problem.has_oracle:
        raise ValueError(f"{problem.name} has no closed-form oracle")
    if config.K < 1:
        raise ValueError("K (--outer-steps) must be >= 1")
    if config.outer_opt not in OUTER_OPTS:
        raise ValueError(f"unknown outer optimizer {config.outer_opt!r}")


def estimator_config(config, problem):
    return est.EstimatorConfig(
        N=config.N, Q=config.Q, mu=config.mu,
        alpha=config.alpha if config.alpha is not None else problem.default_alpha(),
        warm_start=config.warm_start,
        S=config.S if config.S is not None else problem.m,
        D_f=config.D_f if config.D_f is not None else problem.n,
    )


def run_experiment(config, problem=None, clock=time.perf_counter, stats=None):
    """Run K outer iterations and return one MetricsRecord per iteration.

    ``stats`` (a dict, optional) receives ``inner_calls``, ``x_final`` and,
    if the estimator failed, ``failure``.
    """
    problem = problem if problem is not None else build_problem(
        config.problem, config.seed, config.problem_params)
    _check_combination(config, problem)
    ecfg = estimator_config(config, problem)
    ecfg.validate(problem, stochastic=config.algo in est.STOCHASTIC,
                  min_N=0 if config.algo == "itd" else 1)
    if config.track_oracle and not problem.has_oracle:
        log.warning("oracle tracking on %s uses finite differences with M=%d inner steps "
                    "(2p=%d inner runs per iteration)", problem.name, 10 * ecfg.N, 2 * problem.p)

    stats = {} if stats is None else stats
    stats.update(inner_calls=0, failure=None)
    state = OuterState.init(problem.initial_x(config.seed))
    y_start = None
    elapsed = 0.0
    records = []
    for k in range(config.K):
        x = state.x
        t0 = clock()
        try:
            e = est.estimate(config.algo, problem, x, ecfg, seed=config.seed, k=k, y0=y_start,
                             aid_tol=AID_TOL[config.algo == "aid-fp"])
        except BilevelError as exc:
            log.error("iteration %d: %s", k, exc)
            stats["failure"] = f"iteration {k}: {exc}"
            break
        if config.outer_opt == "gd":
            state = gd_step(state, e.grad, config.beta)
        else:
            state = adam_step(state, e.grad, config.beta)
        elapsed += clock() - t0
        if config.warm_start:
            y_start = e.y
        stats["inner_calls"] += e.inner_calls

        oracle_err = None
        if config.track_oracle:
            if problem.has_oracle:
                ref = est.oracle_hypergradient(problem, x).grad
            else:
                ref = fd_hypergradient(problem, x, 10 * ecfg.N, alpha=ecfg.alpha)
            oracle_err = float(np.linalg.norm(e.grad - ref))
        records.append(MetricsRecord(
            k=k, wall_time_s=elapsed, outer_loss=float(problem.outer_value(x, e.y)),
            hypergrad_norm=float(np.linalg.norm(e.grad)), oracle_err=oracle_err,
            inner_residual=float(e.inner_residual)))
    stats["x_final"] = state.x
    return records


def _fmt(value):
    return "" if value is None else format(value, ".17g")


def write_csv(records, path):
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for r in records:
                writer.writerow([r.k, _fmt(r.wall_time_s), _fmt(r.outer_loss),
                                 _fmt(r.hypergrad_norm), _fmt(r.oracle_err),
                                 _fmt(r.inner_residual)])
    except OSError as exc:
        raise OSError(f"could not write metrics to {path}: {exc}") from exc


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [MetricsRecord(
            k=int(row["k"]), wall_time_s=float(row["wall_time_s"]),
            outer_loss=float(row["outer_loss"]), hypergrad_norm=float(row["hypergrad_norm"]),
            oracle_err=float(row["oracle_err"]) if row["oracle_err"] else None,
            inner_residual=float(row["inner_residual"])) for row in reader]


# -- command line -------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _at_least(lo, kind=int):
    def parse(text):
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid {kind.__name__} value: {text!r}")
        if not value >= lo:
            raise argparse.ArgumentTypeError(f"must be >= {lo}, got {text}")
        return value
    return parse


def _positive_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid float value: {text!r}")
    if not (value > 0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError(f"must be a finite value > 0, got {text}")
    return value


def _key_value(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def _int_list(text):
    try:
        values = tuple(int(v) for v in text.split(",") if v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("N values must be >= 1")
    return values


def _common_flags():
    p = _Parser(add_help=False)
    p.add_argument("--problem", required=True, choices=PROBLEMS)
    p.add_argument("--algo", required=True, choices=est.ESTIMATORS)
    p.add_argument("--inner-steps", type=_at_least(0), default=20, metavar="N",
                   help="inner GD/SGD steps N (default: 20)")
    p.add_argument("--outer-steps", type=_at_least(1), default=100, metavar="K",
                   help="outer iterations K (default: 100)")
    p.add_argument("--q", type=_at_least(1), default=1, metavar="Q",
                   help="Gaussian directions per estimate (default: 1)")
    p.add_argument("--mu", type=_positive_float, default=0.01,
                   help="smoothing parameter (default: 0.01)")
    p.add_argument("--alpha", type=_positive_float, default=None,
                   help="inner step size (default: 1/L for quadratic, 0.5 for "
                        "ho-logistic, 0.001 otherwise)")
    p.add_argument("--beta", type=_positive_float, default=0.05,
                   help="outer step size, or Adam learning rate (default: 0.05)")
    p.add_argument("--outer-opt", choices=OUTER_OPTS, default="gd",
                   help="outer optimizer (default: gd)")
    p.add_argument("--seed", type=_at_least(0), default=0, help="master seed (default: 0)")
    p.add_argument("--batch-size", type=_at_least(1), default=None, metavar="S",
                   help="inner minibatch size for pzobo-s (default: full batch)")
    p.add_argument("--outer-batch-size", type=_at_least(1), default=None, metavar="D_F",
                   help="outer minibatch size for pzobo-s (default: full batch)")
    p.add_argument("--warm-start", action="store_true",
                   help="start each inner run from the previous y^N (default: cold start)")
    p.add_argument("--track-oracle", action="store_true",
                   help="record ||estimate - grad Phi|| each iteration")
    p.add_argument("--freeze-clock", action="store_true",
                   help="write 0 for wall_time_s so output bytes depend only on config")
    p.add_argument("--problem-param", type=_key_value, action="append", default=[],
                   metavar="KEY=VALUE",
                   help="override a problem-generation parameter, e.g. conditioning=20")
    p.add_argument("--out", required=True, help="output CSV path")
    return p


def build_parser():
    common = _common_flags()
    top = _Parser(prog="pzobo", description="Bilevel hypergradient benchmark runner")
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("run", parents=[common], help="run one configuration")
    sweep = sub.add_parser("sweep-n", parents=[common], help="rerun across inner-step counts")
    sweep.add_argument("--n-values", type=_int_list, default=(5, 10, 20),
                       help="comma-separated N values (default: 5,10,20)")
    bv = sub.add_parser("bias-variance", parents=[common],
                        help="Monte-Carlo bias/variance report at the initial point")
    bv.add_argument("--trials", type=_at_least(2), default=1000,
                    help="independent estimates (default: 1000)")
    return top


def _coerce(value):
    for kind in (int, float):
        try:
            return kind(value)
        except ValueError:
            pass
    return value


def parse_cli(argv):
    """Parse command-line flags into a RunConfig; subcommand defaults to ``run``."""
    argv = list(argv)
    if not argv or argv[0] not in ("run", "sweep-n", "bias-variance", "-h", "--help"):
        argv = ["run"] + argv
    ns = build_parser().parse_args(argv)
    params = {}
    for key, value in ns.problem_param:
        allowed = set(PROBLEM_DEFAULTS[ns.problem]) | {"data_seed"}
        if key not in allowed:
            raise UsageError(f"pzobo: error: argument --problem-param: unknown key {key!r} "
                             f"for {ns.problem} (expected one of {', '.join(sorted(allowed))})")
        params[key] = _coerce(value)
    return RunConfig(
        problem=ns.problem, algo=ns.algo, out=ns.out, N=ns.inner_steps, K=ns.outer_steps,
        Q=ns.q, mu=ns.mu, alpha=ns.alpha, beta=ns.beta, outer_opt=ns.outer_opt, seed=ns.seed,
        S=ns.batch_size, D_f=ns.outer_batch_size, warm_start=ns.warm_start,
        track_oracle=ns.track_oracle, freeze_clock=ns.freeze_clock, problem_params=params,
        command=ns.command, n_values=getattr(ns, "n_values", (5, 10, 20)),
        trials=getattr(ns, "trials", 1000))


def sweep_path(out, N):
    path = Path(out)
    return str(path.with_name(f"{path.stem}_N{N}{path.suffix}"))


def _frozen_clock():
    return 0.0


def _run_one(config):
    stats = {}
    clock = _frozen_clock if config.freeze_clock else time.perf_counter
    records = run_experiment(config, clock=clock, stats=stats)
    write_csv(records, config.out)
    log.info("wrote %d records to %s (inner gradient calls: %d)",
             len(records), config.out, stats["inner_calls"])
    return stats["failure"]


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    argv = sys.argv[1:] if argv is None else argv
    try:
        config = parse_cli(argv)
        problem = build_problem(config.problem, config.seed, config.problem_params)
        _check_combination(config, problem)
        estimator_config(config, problem).validate(
            problem, stochastic=config.algo in est.STOCHASTIC,
            min_N=0 if config.algo == "itd" else 1)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"pzobo: error: {exc}", file=sys.stderr)
        return 1

    try:
        if config.command == "run":
            failure = _run_one(config)
        elif config.command == "sweep-n":
            failure = None
            for N in config.n_values:
                failure = _run_one(replace(config, N=N, out=sweep_path(config.out, N))) or failure
        else:
            ecfg = estimator_config(config, problem)
            x0 = problem.initial_x(config.seed)
            report = estimate_bias_variance(problem, x0, config.algo, ecfg, config.trials,
                                            config.seed)
            write_report_csv([report], config.out)
            log.info("bias=%.6g variance=%.6g (reference: %s)", report.bias, report.variance,
                     report.ref_source)
            failure = None
    except BilevelError as exc:
        print(f"pzobo: numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"pzobo: error: {exc}", file=sys.stderr)
        return 1
    if failure:
        print(f"pzobo: numerical failure: {failure}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
