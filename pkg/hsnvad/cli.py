"""Command-line entry point.

Exit codes: 0 success, 1 usage or validation failure, 2 runtime failure
(including a failed gradient check).
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import sys
import typing
from pathlib import Path

import yaml

from .__about__ import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, build_config, dump_config, load_config, parse_override
from .dataset import load_dataset
from .errors import ConfigError, RejectedInputError
from .evaluate import (
    compare_loss,
    dump_report,
    dump_scores,
    evaluate,
    kfold,
    selection_summary,
)
from .gradcheck import EPSILON, TOLERANCE, run_suite
from .synth import load_synth_spec, synthesize_dataset
from .tensor import OPERATORS, fault_injection
from .train import train

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> typing.NoReturn:
        self.print_usage(sys.stderr)
        raise UsageError(message)


@contextlib.contextmanager
def _log_file(path: Path) -> typing.Iterator[None]:
    """Capture everything down to per-step debug lines in ``path``."""
    handler = logging.FileHandler(path, mode="w")
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler.setLevel(logging.DEBUG)
    root = logging.getLogger()
    package = logging.getLogger("hsnvad")
    level = package.level
    root.addHandler(handler)
    package.setLevel(logging.DEBUG)
    try:
        yield
    finally:
        package.setLevel(level)
        root.removeHandler(handler)
        handler.close()


def _run_config(
    args: argparse.Namespace, paths: tuple[str, ...] = ("data", "out")
) -> RunConfig:
    layers: list[dict[str, typing.Any]] = []
    if args.config is not None:
        layers.append(load_config(args.config))
    layers.append(dict(parse_override(text) for text in args.set))
    flags = {
        key: getattr(args, key)
        for key in ("loss", "schedule", "steps", "seed", "lr", *paths)
        if getattr(args, key, None) is not None
    }
    for key in paths:
        if key in flags:
            flags[key] = str(flags[key])
    layers.append(flags)
    return build_config(*layers)


def _require(run: RunConfig, key: str) -> Path:
    value = getattr(run, key)
    if value is None:
        raise ConfigError(f"no {key} path given (use --{key} or the config file)")
    return typing.cast(Path, value)


def cmd_gen_data(args: argparse.Namespace) -> int:
    spec = load_synth_spec(args.spec)
    print(synthesize_dataset(spec, args.out))
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    run = _run_config(args)
    dataset = load_dataset(_require(run, "data"))
    out = _require(run, "out")
    out.mkdir(parents=True, exist_ok=True)
    with _log_file(out / "train.log"):
        logger.info(
            "hsnvad %s effective configuration:\n%s", __version__, dump_config(run)
        )
        result = train(run.hyper, run.train, dataset.split("train"))
        path = save_checkpoint(result.model, run.train, out / "checkpoint")
    print(path)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    model, config = load_checkpoint(args.ckpt)
    dataset = load_dataset(args.data)
    report = evaluate(model, dataset.evaluation_split())
    extra: dict[str, typing.Any] = {}
    if args.kfold is not None:
        folds, mean = kfold(model.hyper, config, dataset, args.kfold, args.workers)
        report = report._replace(folds=folds, mean_auc=mean)
    if args.selection:
        summary = selection_summary(model, dataset.evaluation_split())
        extra["selection"] = summary._asdict()
    dump_report(report, args.report, extra)
    if args.dump_scores is not None:
        dump_scores(report, args.dump_scores)
    print(f"AUC {report.auc:.6f}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    with contextlib.ExitStack() as stack:
        if args.inject_fault is not None:
            stack.enter_context(fault_injection(args.inject_fault))
        results = run_suite(epsilon=args.epsilon, tolerance=args.tolerance)
    width = max(len(result.name) for result in results)
    print(f"{'check':<{width}}  {'max rel err':>11}  status")
    for result in results:
        status = "ok" if result.passed else "FAIL"
        print(f"{result.name:<{width}}  {result.error:>11.3e}  {status}")
    failed = [result.name for result in results if not result.passed]
    if failed:
        logger.error("%d of %d gradient checks failed", len(failed), len(results))
        return 2
    return 0


def cmd_compare_loss(args: argparse.Namespace) -> int:
    run = _run_config(args, paths=("data",))
    dataset = load_dataset(_require(run, "data"))
    report_path: Path = args.out
    report_path.parent.mkdir(parents=True, exist_ok=True)
    with _log_file(report_path.with_name(report_path.name + ".log")):
        logger.info(
            "hsnvad %s effective configuration:\n%s", __version__, dump_config(run)
        )
        comparison = compare_loss(run.hyper, run.train, dataset)
    document = {
        "self-rectifying": comparison.self_rectifying,
        "classical-ranking": comparison.classical_ranking,
        "delta": comparison.delta,
    }
    report_path.write_text(yaml.safe_dump(document, sort_keys=False))
    print(f"AUC delta {comparison.delta:+.6f}")
    return 0


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="YAML config file")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )
    parser.add_argument("--loss", choices=("self-rectifying", "classical-ranking"))
    parser.add_argument("--schedule", choices=("staged", "joint"))
    parser.add_argument("--steps", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--data", type=Path, help="dataset directory or manifest")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="hsnvad",
        description="weakly supervised video anomaly detection on feature files",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-data", help="synthesize a feature dataset")
    gen.add_argument("--spec", type=Path, required=True)
    gen.add_argument("--out", type=Path, required=True)
    gen.set_defaults(handler=cmd_gen_data)

    fit = commands.add_parser("train", help="train and write a checkpoint")
    _add_run_options(fit)
    fit.add_argument("--out", type=Path, help="output directory")
    fit.set_defaults(handler=cmd_train)

    score = commands.add_parser("eval", help="evaluate a checkpoint")
    score.add_argument("--ckpt", type=Path, required=True)
    score.add_argument("--data", type=Path, required=True)
    score.add_argument("--report", type=Path, required=True)
    score.add_argument("--kfold", type=int, metavar="K")
    score.add_argument("--workers", type=int, default=1)
    score.add_argument("--dump-scores", type=Path, metavar="DIR")
    score.add_argument(
        "--selection",
        action="store_true",
        help="report mean selection factors over anomalous segments",
    )
    score.set_defaults(handler=cmd_eval)

    check = commands.add_parser("gradcheck", help="finite-difference gradient suite")
    check.add_argument(
        "--inject-fault",
        choices=OPERATORS,
        metavar="OP",
        help="corrupt the adjoint of one primitive",
    )
    check.add_argument("--epsilon", type=float, default=EPSILON)
    check.add_argument("--tolerance", type=float, default=TOLERANCE)
    check.set_defaults(handler=cmd_gradcheck)

    compare = commands.add_parser(
        "compare-loss", help="train twin models, one per loss, and compare AUCs"
    )
    _add_run_options(compare)
    compare.add_argument("--out", type=Path, required=True, help="report file")
    compare.set_defaults(handler=cmd_compare_loss)
    return parser


def main(argv: typing.Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"hsnvad: error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:
        return int(e.code or 0)

    level = logging.DEBUG if args.verbose else logging.INFO
    # the console keeps its level while a log file lowers the package logger
    console = logging.StreamHandler()
    console.setLevel(level)
    logging.basicConfig(level=level, format=LOG_FORMAT, handlers=[console])
    # basicConfig is a no-op once the root logger has handlers
    logging.getLogger("hsnvad").setLevel(level)
    handler: typing.Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except RejectedInputError as e:
        logger.error("%s", e)
        return 1
    except Exception as e:
        logger.error("%s: %s", type(e).__name__, e)
        return 2
