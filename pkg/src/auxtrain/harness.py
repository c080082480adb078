"""Multi-seed experiment orchestration, failure classification, and reports.

An experiment runs one model (``ls``, ``pm``, or ``sapm``) on one task
(``fnn`` regression or ``pinn`` transport) for a number of seeds.  Seed k
draws all of its randomness from the SplitMix64 child stream
``SplitMix64(master_seed).spawn(k)``, so every run is reproducible from the
configuration alone; datasets are deterministic Halton sets and identical
across seeds.  A seed *fails* when its final training loss is not below 10%
of its initial loss, and the *best* seed is the one with the smallest final
training loss (ties break toward the lower seed index).

Reports: ``report.json`` (configuration, per-seed rows, aggregates),
``summary.csv`` (one row per seed), and ``trace_seed<k>.csv`` (the recorded
per-iteration losses).  Timestamps are reported but excluded from
determinism comparisons.
"""

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone

import numpy as np

from . import fnn, pinn, sampling
from .errors import SolverDivergence
from .fnn_solvers import (
    FnnTrainConfig,
    TRACE_COLUMNS_FNN,
    ls_fnn_run,
    pm_fnn_run,
    sapm_fnn_run,
)
from .pinn_solvers import (
    PinnData,
    PinnTrainConfig,
    TRACE_COLUMNS_PINN,
    ls_pinn_run,
    pm_pinn_run,
    sapm_pinn_run,
)
from .rng import SplitMix64

MODELS = ("ls", "pm", "sapm")
TASKS = ("fnn", "pinn")


def _target_sin1d(x):
    return np.sin(x[0] ** 2)


def _target_ball10(x):
    return 1.0 / (2.0 * np.sqrt(10.0) + x.sum(axis=0))


#: FNN regression problems: key -> (domain, target, default train size).
FNN_PROBLEMS = {
    "sin1d": (sampling.interval(), _target_sin1d, 100),
    "ball10": (sampling.ball(10), _target_ball10, 10000),
}

_PINN_DEFAULT_SIZES = {"t1d": (1000, 400), "t3d": (4000, 1600)}
_DEFAULT_ITERATIONS = {"fnn": 50000, "pinn": 1000}


@dataclass
class RunConfig:
    """Everything needed to reproduce one experiment."""

    model: str = "sapm"
    task: str = "fnn"
    problem: str = "sin1d"
    depth: int = 6
    width: int = 10
    iterations: int = 1000
    seeds: int = 10
    master_seed: int = 0
    activation: str = "relu"
    train_size: int = 100
    test_size: int = 1000
    interior_size: int = 1000
    boundary_size: int = 400
    penalty: float = 1.0  # uniform weight of every penalty term
    mu: float = 1.0  # boundary weight of the transport loss
    step: float = 1.0
    armijo_shrink: float = 0.5
    armijo_slope: float = 1e-4
    armijo_max_backtracks: int = 20
    lr0: float = 1e-2
    lr_decay: float = 1e4
    workers: int = 0  # parallel seed slots; 0 means one per available core
    out_dir: str = ""
    save_checkpoints: bool = False

    def validate(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.task == "fnn" and self.problem not in FNN_PROBLEMS:
            raise ValueError(f"unknown fnn problem {self.problem!r}")
        if self.task == "pinn":
            if self.problem not in pinn.PROBLEMS:
                raise ValueError(f"unknown transport problem {self.problem!r}")
            if self.activation != "sin":
                raise ValueError("transport runs require the sin activation")
        for name in ("depth", "width", "iterations", "seeds", "train_size",
                     "test_size", "interior_size", "boundary_size"):
            if getattr(self, name) < (2 if name == "depth" else 1) and not (
                name == "iterations" and self.iterations == 0
            ):
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        return self


def make_config(model, task, problem, **overrides):
    """A validated config with per-problem default sizes and iterations."""
    cfg = RunConfig(model=model, task=task, problem=problem)
    if task == "pinn":
        cfg.activation = "sin"
        cfg.interior_size, cfg.boundary_size = _PINN_DEFAULT_SIZES.get(
            problem, (cfg.interior_size, cfg.boundary_size)
        )
    elif problem in FNN_PROBLEMS:
        cfg.train_size = FNN_PROBLEMS[problem][2]
    cfg.iterations = _DEFAULT_ITERATIONS[task]
    for key, value in overrides.items():
        if value is None:
            continue
        if not hasattr(cfg, key):
            raise ValueError(f"unknown configuration key {key!r}")
        setattr(cfg, key, type(getattr(cfg, key))(value))
    return cfg.validate()


@dataclass
class SeedResult:
    """Outcome of one seed; ``trace`` stays out of the JSON report."""

    seed: int
    initial_loss: float
    final_loss: float
    failed: bool
    final_mse: float
    train_error: float
    test_error: float
    max_bound_ratio: float
    diagnostic: str = ""
    trace: np.ndarray = field(default=None, repr=False, compare=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("trace")
        return d


@dataclass
class RunReport:
    config: dict
    seeds: list
    best_seed: int
    failure_count: int
    timestamp: str
    elapsed_seconds: float

    def to_dict(self):
        return {
            "config": self.config,
            "seeds": [s.to_dict() for s in self.seeds],
            "best_seed": self.best_seed,
            "failure_count": self.failure_count,
            "timestamp": self.timestamp,
            "elapsed_seconds": self.elapsed_seconds,
        }

    def best_row(self):
        for s in self.seeds:
            if s.seed == self.best_seed:
                return s
        return None


def seed_failed(initial_loss, final_loss):
    """The 10% rule: a seed fails unless final < 0.1 * initial."""
    return not (final_loss < 0.1 * initial_loss)


def _build_payload(config):
    if config.task == "fnn":
        domain, target, _ = FNN_PROBLEMS[config.problem]
        train = sampling.build_regression_dataset(target, domain, config.train_size)
        test = sampling.build_regression_dataset(
            target, domain, config.test_size, skip=config.train_size
        )
        return {"train": train, "test": test}
    problem = pinn.get_problem(config.problem)
    data = PinnData.from_problem(problem, config.interior_size, config.boundary_size)
    test_points = pinn.transport_test_points(
        problem, config.test_size, skip=config.interior_size
    )
    test_values = np.asarray(problem.solution(test_points), dtype=np.float64).reshape(1, -1)
    return {"data": data, "test_points": test_points, "test_values": test_values}


_FNN_RUNNERS = {"ls": ls_fnn_run, "pm": pm_fnn_run, "sapm": sapm_fnn_run}
_PINN_RUNNERS = {"ls": ls_pinn_run, "pm": pm_pinn_run, "sapm": sapm_pinn_run}


def _run_seed(config, payload, seed):
    """Train one seed; returns (SeedResult, final params or None)."""
    stream = SplitMix64(config.master_seed).spawn(seed)
    try:
        if config.task == "fnn":
            cfg = FnnTrainConfig(
                depth=config.depth,
                width=config.width,
                iterations=config.iterations,
                activation=config.activation,
                beta=config.penalty,
                step=config.step,
                armijo_shrink=config.armijo_shrink,
                armijo_slope=config.armijo_slope,
                armijo_max_backtracks=config.armijo_max_backtracks,
                lr0=config.lr0,
                lr_decay=config.lr_decay,
            )
            result = _FNN_RUNNERS[config.model](cfg, payload["train"], stream)
            train_err = fnn.l2_error(
                result.params, payload["train"].features, payload["train"].labels
            )
            test_err = fnn.l2_error(
                result.params, payload["test"].features, payload["test"].labels
            )
        else:
            cfg = PinnTrainConfig(
                depth=config.depth,
                width=config.width,
                iterations=config.iterations,
                penalty=config.penalty,
                mu=config.mu,
                step=config.step,
                armijo_shrink=config.armijo_shrink,
                armijo_slope=config.armijo_slope,
                armijo_max_backtracks=config.armijo_max_backtracks,
                lr0=config.lr0,
                lr_decay=config.lr_decay,
            )
            problem = pinn.get_problem(config.problem)
            result = _PINN_RUNNERS[config.model](cfg, problem, payload["data"], stream)
            train_err = float("nan")
            psi = fnn.forward(result.params, payload["test_points"]).output
            test_err = fnn.relative_l2(psi, payload["test_values"])
    except SolverDivergence as exc:
        nan = float("nan")
        return (
            SeedResult(seed, nan, nan, True, nan, nan, nan, nan, str(exc), None),
            None,
        )
    trace = result.trace
    initial, final = float(trace[0, 1]), float(trace[-1, 1])
    return (
        SeedResult(
            seed=seed,
            initial_loss=initial,
            final_loss=final,
            failed=seed_failed(initial, final),
            final_mse=float(trace[-1, 2]),
            train_error=train_err,
            test_error=test_err,
            max_bound_ratio=float(trace[:, -1].max()),
            trace=trace,
        ),
        result.params,
    )


def run_experiment(config):
    """Run every seed of one configuration and assemble the report.

    Seeds execute in parallel worker processes when ``config.workers`` is not
    1; results are always assembled in seed order, so the report does not
    depend on scheduling.  A diverged seed is recorded as failed with its
    diagnostic and the run continues.
    """
    config.validate()
    started = time.perf_counter()
    payload = _build_payload(config)
    seeds = list(range(1, config.seeds + 1))
    workers = config.workers if config.workers > 0 else (os.cpu_count() or 1)
    outcomes = []
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(seeds))) as pool:
            futures = [pool.submit(_run_seed, config, payload, k) for k in seeds]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = [_run_seed(config, payload, k) for k in seeds]
    results = [r for r, _ in outcomes]
    finals = [
        r.final_loss if np.isfinite(r.final_loss) else float("inf") for r in results
    ]
    best = seeds[int(np.argmin(finals))] if results else 0
    report = RunReport(
        config=asdict(config),
        seeds=results,
        best_seed=best,
        failure_count=sum(r.failed for r in results),
        timestamp=datetime.now(timezone.utc).isoformat(),
        elapsed_seconds=time.perf_counter() - started,
    )
    if config.out_dir:
        emit_report(report, config.out_dir)
        if config.save_checkpoints:
            for (result, params), k in zip(outcomes, seeds):
                if params is not None:
                    fnn.save_params(
                        params, os.path.join(config.out_dir, f"params_seed{k}.csv")
                    )
    return report


_SUMMARY_COLUMNS = (
    "seed",
    "initial_loss",
    "final_loss",
    "failed",
    "final_mse",
    "train_error",
    "test_error",
    "max_bound_ratio",
    "diagnostic",
)


def _trace_header(trace):
    return TRACE_COLUMNS_FNN if trace.shape[1] == 4 else TRACE_COLUMNS_PINN


def write_trace_csv(trace, path):
    with open(path, "w") as fh:
        fh.write(",".join(_trace_header(trace)) + "\n")
        for row in trace:
            fh.write(
                f"{int(row[0])}," + ",".join(f"{v:.6e}" for v in row[1:]) + "\n"
            )


def emit_report(report, out_dir):
    """Write report.json, summary.csv, and one trace CSV per recorded seed."""
    os.makedirs(out_dir, exist_ok=True)
    for s in report.seeds:
        if s.trace is not None:
            write_trace_csv(s.trace, os.path.join(out_dir, f"trace_seed{s.seed}.csv"))
    with open(os.path.join(out_dir, "summary.csv"), "w") as fh:
        fh.write(",".join(_SUMMARY_COLUMNS) + "\n")
        for s in report.seeds:
            fh.write(
                f"{s.seed},{s.initial_loss:.6e},{s.final_loss:.6e},{int(s.failed)},"
                f"{s.final_mse:.6e},{s.train_error:.6e},{s.test_error:.6e},"
                f"{s.max_bound_ratio:.6e},{s.diagnostic}\n"
            )
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")


def report_from_json(path):
    """Rebuild a report from report.json (traces live only in the CSVs)."""
    with open(path) as fh:
        raw = json.load(fh)
    return RunReport(
        config=raw["config"],
        seeds=[SeedResult(**row) for row in raw["seeds"]],
        best_seed=raw["best_seed"],
        failure_count=raw["failure_count"],
        timestamp=raw["timestamp"],
        elapsed_seconds=raw["elapsed_seconds"],
    )


def compare_models(configs, out_dir=""):
    """Run several configurations of one problem and tabulate best seeds.

    All configs must share the task, problem, and sizes; returns one row per
    config with the best seed's final training loss, plain loss, and errors.
    """
    if not configs:
        return []
    base = (configs[0].task, configs[0].problem, configs[0].depth, configs[0].width)
    for c in configs:
        if (c.task, c.problem, c.depth, c.width) != base:
            raise ValueError("compared configurations must share task, problem and sizes")
    rows = []
    for c in configs:
        if out_dir:
            c = replace(c, out_dir=os.path.join(out_dir, c.model))
        report = run_experiment(c)
        best = report.best_row()
        rows.append(
            {
                "model": c.model,
                "actual_loss": best.final_loss,
                "mse_loss": best.final_mse,
                "train_error": best.train_error,
                "test_error": best.test_error,
                "failures": report.failure_count,
                "best_seed": report.best_seed,
            }
        )
    return rows


def format_comparison(rows):
    header = ("model", "actual_loss", "mse_loss", "train_error", "test_error", "failures")
    lines = ["  ".join(f"{h:>12}" for h in header)]
    for r in rows:
        lines.append(
            "  ".join(
                [f"{r['model']:>12}"]
                + [
                    f"{r[k]:>12.4e}"
                    for k in ("actual_loss", "mse_loss", "train_error", "test_error")
                ]
                + [f"{r['failures']:>12d}"]
            )
        )
    return "\n".join(lines)
