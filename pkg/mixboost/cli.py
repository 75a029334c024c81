import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from mixboost.bench import (
    ExperimentReport,
    plot_data,
    run_experiment,
    single_run,
    weights_demo,
)
from mixboost.config import load_config
from mixboost.exceptions import Error, InterfaceError
from mixboost.verify import DEFAULT_CANDIDATES, run_verification


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _emit(text, out=None):
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(out).write_text(text)
        logger.info("wrote %s", out)


def _verify(args):
    report = run_verification(
        seed=args.seed,
        instances_per_property=args.instances,
        max_support=args.max_support,
        candidates=args.candidates,
        workers=args.workers,
    )
    _emit(report.to_json(), args.out)
    return EXIT_OK if report.passed else EXIT_FAILED


def _run(args):
    config = load_config(args.config)
    run = single_run(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mixture = json.dumps(run.mixture.to_dict(), sort_keys=True, indent=2)
    _emit(mixture, out / "mixture.json")
    _emit(json.dumps(run.to_dict(), sort_keys=True, indent=2), out / "run.json")
    return EXIT_OK


def _bench(args):
    config = load_config(args.config)
    if args.workers is not None:
        config = replace(config, workers=args.workers)
    report = run_experiment(config)
    fmt = args.format or config.format
    text = report.to_csv() if fmt == "csv" else report.to_json()
    out = None
    if args.out is not None:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        out = Path(args.out) / f"report.{fmt}"
    _emit(text, out)
    return EXIT_OK


def _weights_demo(args):
    _emit(weights_demo(load_config(args.config)), args.out)
    return EXIT_OK


def _plot_data(args):
    path = Path(args.report)
    try:
        text = path.read_text()
    except OSError as e:
        raise InterfaceError(f"Can't read the report {path}: {e}") from e
    if path.suffix == ".csv":
        report = ExperimentReport.from_csv(text)
    else:
        report = ExperimentReport.from_json(text)
    _emit(plot_data(report), args.out)
    return EXIT_OK


def _parser():
    parser = argparse.ArgumentParser(
        prog="mixboost", description="Boosted mixtures of generative models."
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="log progress at debug level"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    verify = commands.add_parser(
        "verify", help="check the boosting theory on random instances"
    )
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--instances", type=int, default=100)
    verify.add_argument("--max-support", type=int, default=8)
    verify.add_argument("--candidates", type=int, default=DEFAULT_CANDIDATES)
    verify.add_argument("--workers", type=int, default=1)
    verify.add_argument("--out", help="write the report here instead of stdout")
    verify.set_defaults(handler=_verify)

    run = commands.add_parser("run", help="one boosting run")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default=".", help="output directory")
    run.set_defaults(handler=_run)

    bench = commands.add_parser("bench", help="run a benchmark experiment")
    bench.add_argument("--config", required=True)
    bench.add_argument("--out", help="directory for the report")
    bench.add_argument("--format", choices=("csv", "json"))
    bench.add_argument("--workers", type=int)
    bench.set_defaults(handler=_bench)

    demo = commands.add_parser("weights-demo", help="weights of one reweighting")
    demo.add_argument("--config", required=True)
    demo.add_argument("--out")
    demo.set_defaults(handler=_weights_demo)

    plot = commands.add_parser("plot-data", help="per-round series of a report")
    plot.add_argument("--report", required=True)
    plot.add_argument("--out")
    plot.set_defaults(handler=_plot_data)
    return parser


def main(argv=None):
    """Entry point of the ``mixboost`` command. Returns 0 on success, 1 when
    verification finds a violation or a run fails, and 2 for bad usage or a bad
    configuration.
    """
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except InterfaceError as e:
        print(f"mixboost: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Error as e:
        print(f"mixboost: {e}", file=sys.stderr)
        return EXIT_FAILED
