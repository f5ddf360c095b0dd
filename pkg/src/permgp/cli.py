"""Command-line entry point: ``permgp <subcommand> ...``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .gp import FitOptions, NumericalError, TrainingSet, fit_mle, load_model, predict, save_model
from .kernels import KernelParams, ParamBox, UnsupportedDistanceError, kernel_nugget
from .partial import (
    EnumerationLimitError,
    PartialRanking,
    as_partial,
    d_avg,
    kernel_partial,
    parse_partial_ranking,
)
from .permutation import Distance, distance, parse_permutation

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _emit(text: str, path: str | None):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _config_from_args(args) -> ex.ExperimentConfig:
    text = Path(args.config).read_text() if args.config else None
    overrides = {
        "distance": args.distance,
        "master_seed": args.seed,
        "parallelism": args.jobs,
        "replicates": args.replicates,
        "n_values": args.n_values,
    }
    return ex.load_config(text, overrides)


def _cmd_experiment(args) -> int:
    cfg = _config_from_args(args)
    experiment = args.command
    results = ex.run_replicates(cfg)
    _emit(ex.write_csv(ex.REPLICATE_COLUMNS, ex.replicate_rows(results, cfg, experiment)), args.out)
    if args.summary and experiment != "density":
        rows = ex.summarize(results, cfg, experiment)
        _emit(ex.write_csv(ex.SUMMARY_COLUMNS, ex.summary_rows(rows)), args.summary)
    return EXIT_OK


def _cmd_verify(args) -> int:
    points = ex.generate_scheme(ex.ObservationScheme(args.k, args.n, args.seed))
    status = EXIT_OK
    lines = ["distance,min_ratio,condition1,max_consecutive,constant,condition2"]
    for name in args.distance or [d.value for d in Distance]:
        rep = ex.verify_conditions(points, name, beta=args.beta, k=args.k)
        lines.append(f"{Distance.parse(name).value},{rep.min_ratio!r},{rep.condition1},"
                     f"{rep.max_consecutive},{rep.constant},{rep.condition2}")
        if not rep.ok:
            status = 1
    _emit("\n".join(lines) + "\n", args.out)
    return status


def _parse_item(text: str, n: int | None):
    if ">" in text or ";" in text:
        return parse_partial_ranking(text, n)
    return parse_permutation(text)


def _cmd_kernel_eval(args) -> int:
    theta = KernelParams(*[float(v) for v in args.theta.split(",")])
    a, b = _parse_item(args.a, args.n), _parse_item(args.b, args.n)
    if isinstance(a, PartialRanking) or isinstance(b, PartialRanking):
        a, b = as_partial(a, args.n), as_partial(b, args.n)
        dist = d_avg(args.distance, a, b)
        value = kernel_partial(args.distance, theta, a, b, with_nugget=True)
        print(f"distance={float(dist)!r} exact={dist} kernel={value!r}")
    else:
        dist = distance(args.distance, a, b)
        print(f"distance={dist} kernel={kernel_nugget(args.distance, theta, a, b)!r}")
    return EXIT_OK


def _read_data(path: str):
    points, values = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected '<permutation> <value>'")
        points.append(parse_permutation(parts[0]))
        values.append(float(parts[1]))
    return points, values


def _cmd_fit(args) -> int:
    points, values = _read_data(args.data)
    lo = tuple(float(v) for v in args.box_lower.split(","))
    hi = tuple(float(v) for v in args.box_upper.split(","))
    t = TrainingSet(points, values, args.distance)
    fit = fit_mle(t, ParamBox(lo, hi), FitOptions(n_starts=args.starts, seed=args.seed))
    _emit(save_model(fit) + "\n", args.out)
    return EXIT_OK


def _cmd_predict(args) -> int:
    fit = load_model(Path(args.model).read_text())
    targets = [parse_permutation(s) for s in args.points]
    for s, v in zip(targets, np.atleast_1d(predict(fit, targets))):
        print(f"{s}\t{float(v)!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="permgp", description="Kriging on permutations.")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, help_ in [("consistency", "estimate P(||theta_hat - theta*|| > eps) per n"),
                        ("density", "emit every replicate estimate"),
                        ("prediction", "estimate P(|Y_hat - Y_hat*| > threshold) per n")]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="INI file with an [experiment] section")
        p.add_argument("--distance")
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int)
        p.add_argument("--replicates", type=int)
        p.add_argument("--n-values", dest="n_values", help="comma-separated, ascending")
        p.add_argument("--out", help="replicate CSV (default stdout)")
        p.add_argument("--summary", help="summary CSV path")
        p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("verify-scheme", help="check the increasing-domain conditions")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--n", type=int, default=150)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--distance", action="append")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("kernel-eval", help="distance and kernel between two (partial) rankings")
    p.add_argument("--distance", default="kendall")
    p.add_argument("--theta", default="1,1,0", help="theta1,theta2,theta3")
    p.add_argument("--n", type=int, help="universe size for partial rankings")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=_cmd_kernel_eval)

    p = sub.add_parser("fit", help="fit a model from '<permutation> <value>' lines")
    p.add_argument("data")
    p.add_argument("--distance", default="kendall")
    p.add_argument("--box-lower", default="0.02,0.3,0.1")
    p.add_argument("--box-upper", default="2,2,1")
    p.add_argument("--starts", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("predict", help="predict with a saved model")
    p.add_argument("model")
    p.add_argument("points", nargs="+")
    p.set_defaults(func=_cmd_predict)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ex.ReplicateFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ex.ConfigError, UnsupportedDistanceError, EnumerationLimitError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
