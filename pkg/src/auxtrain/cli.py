"""Command-line interface.

Subcommands:

``fit-fnn``          train a regression network (problems sin1d, ball10)
``solve-transport``  train a transport-equation network (problems t1d, t3d)
``compare``          run several models on one problem and tabulate best seeds

Settings resolve in order: built-in per-problem defaults, then a ``--config``
file of ``key = value`` lines ('#' starts a comment; keys are the
configuration field names), then explicit command-line flags.  Exit status is
0 for a completed run (even when seeds fail the 10% loss rule) and 2 for
configuration or I/O errors.
"""

import argparse
import os
import sys

from .harness import (
    MODELS,
    compare_models,
    format_comparison,
    make_config,
    run_experiment,
)


def _add_common(parser):
    parser.add_argument("--model", choices=MODELS, default=None, help="training model")
    parser.add_argument("--depth", type=int, default=None, help="network depth L")
    parser.add_argument("--width", type=int, default=None, help="network width M")
    parser.add_argument("--iters", type=int, default=None, help="sweep iterations")
    parser.add_argument("--seeds", type=int, default=None, help="number of seeds")
    parser.add_argument("--master-seed", type=int, default=None, help="root RNG seed")
    parser.add_argument("--test-size", type=int, default=None, help="test point count")
    parser.add_argument("--penalty", type=float, default=None, help="uniform penalty weight")
    parser.add_argument("--step", type=float, default=None, help="line-search starting step")
    parser.add_argument("--lr0", type=float, default=None, help="gradient-descent base rate")
    parser.add_argument("--lr-decay", type=float, default=None, help="rate decay scale")
    parser.add_argument("--workers", type=int, default=None, help="parallel seed workers")
    parser.add_argument("--out", default=None, help="report output directory")
    parser.add_argument("--config", default=None, help="key = value settings file")
    parser.add_argument(
        "--save-checkpoints", action="store_true", default=None,
        help="save final parameters per seed"
    )


def build_parser():
    parser = argparse.ArgumentParser(prog="auxtrain", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit-fnn", help="train a regression network")
    _add_common(fit)
    fit.add_argument("--problem", choices=("sin1d", "ball10"), default=None)
    fit.add_argument("--activation", choices=("relu", "sin"), default=None)
    fit.add_argument("--train-size", type=int, default=None)

    pde = sub.add_parser("solve-transport", help="train a transport-equation network")
    _add_common(pde)
    pde.add_argument("--problem", choices=("t1d", "t3d"), default=None)
    pde.add_argument("--n1", type=int, default=None, help="interior collocation points")
    pde.add_argument("--n2", type=int, default=None, help="boundary points")
    pde.add_argument("--mu", type=float, default=None, help="boundary loss weight")

    cmp_ = sub.add_parser("compare", help="run several models and tabulate best seeds")
    _add_common(cmp_)
    cmp_.add_argument("--task", choices=("fnn", "pinn"), default="fnn")
    cmp_.add_argument("--problem", default=None)
    cmp_.add_argument("--models", default="ls,pm,sapm", help="comma-separated model list")
    cmp_.add_argument("--activation", choices=("relu", "sin"), default=None)
    cmp_.add_argument("--train-size", type=int, default=None)
    cmp_.add_argument("--n1", type=int, default=None)
    cmp_.add_argument("--n2", type=int, default=None)
    cmp_.add_argument("--mu", type=float, default=None)
    return parser


def load_config_file(path):
    """Parse flat ``key = value`` lines into typed overrides."""
    overrides = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {text!r}")
            key, value = (part.strip() for part in text.split("=", 1))
            overrides[key] = _parse_value(value)
    return overrides


def _parse_value(text):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


_FLAG_TO_FIELD = {
    "iters": "iterations",
    "n1": "interior_size",
    "n2": "boundary_size",
    "out": "out_dir",
}


def _gather_overrides(args, skip=()):
    overrides = {}
    if getattr(args, "config", None):
        overrides.update(load_config_file(args.config))
    overrides.pop("task", None)  # the task is fixed by the subcommand
    for key, value in vars(args).items():
        if key in ("command", "config", "models", "task") or key in skip or value is None:
            continue
        overrides[_FLAG_TO_FIELD.get(key, key)] = value
    return overrides


def _print_report(report):
    print("seed  initial_loss  final_loss    failed  test_error")
    for s in report.seeds:
        mark = "yes" if s.failed else "no"
        print(
            f"{s.seed:<5d} {s.initial_loss:<13.6e} {s.final_loss:<13.6e} "
            f"{mark:<7} {s.test_error:.6e}"
        )
    best = report.best_row()
    if best is not None:
        print(
            f"best seed {best.seed}: actual={best.final_loss:.6e} "
            f"mse={best.final_mse:.6e} test_error={best.test_error:.6e}"
        )
    print(f"failed seeds: {report.failure_count}/{len(report.seeds)}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("fit-fnn", "solve-transport"):
            task = "fnn" if args.command == "fit-fnn" else "pinn"
            overrides = _gather_overrides(args, skip=("problem", "model"))
            problem = args.problem or overrides.pop("problem", None) or (
                "sin1d" if task == "fnn" else "t1d"
            )
            config = make_config(
                model=args.model or overrides.pop("model", None) or "sapm",
                task=task,
                problem=problem,
                **overrides,
            )
            report = run_experiment(config)
            _print_report(report)
            if config.out_dir:
                print(f"report written to {os.path.join(config.out_dir, 'report.json')}")
        else:
            overrides = _gather_overrides(args, skip=("problem", "model"))
            overrides.pop("model", None)
            problem = args.problem or overrides.pop("problem", None) or (
                "sin1d" if args.task == "fnn" else "t1d"
            )
            models = [m.strip() for m in args.models.split(",") if m.strip()]
            configs = [
                make_config(model=m, task=args.task, problem=problem, **overrides)
                for m in models
            ]
            rows = compare_models(configs, out_dir=args.out or "")
            print(format_comparison(rows))
            if args.out:
                path = os.path.join(args.out, "comparison.csv")
                with open(path, "w") as fh:
                    fh.write("model,actual_loss,mse_loss,train_error,test_error,failures\n")
                    for r in rows:
                        fh.write(
                            f"{r['model']},{r['actual_loss']:.6e},{r['mse_loss']:.6e},"
                            f"{r['train_error']:.6e},{r['test_error']:.6e},{r['failures']}\n"
                        )
                print(f"comparison written to {path}")
        return 0
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
