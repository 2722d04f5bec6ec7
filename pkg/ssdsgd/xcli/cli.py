from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from ..classes import Profiler
from ..decorators import exit_codes
from ..errors import ConfigError, SsdSgdError
from ..functions import parse_int_range
from ..numkernel import ModelKind
from ..optim import LocalOptimizer, Strategy
from ..psruntime import TransportKind
from .config import output_dir, parse_config
from .experiment import comparison_table, run_experiment, run_timing_study, sweep_k, sweep_warmup

logger = logging.getLogger(__name__)

EXIT_CONFIG, EXIT_RUNTIME = 2, 3
CLI_ONLY = {"config", "sweep_k", "sweep_warmup", "timing_study", "name", "verbose", "cpu_profile"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssdsgd", description="Train with SSGD, ASGD or SSD-SGD on a simulated parameter-server cluster.")
    parser.add_argument("--config", help="INI file; flags override its values")

    training = parser.add_argument_group("training")
    training.add_argument("--strategy", choices=[member.value for member in Strategy])
    training.add_argument("--k", type=int, help="delay steps between pulls")
    training.add_argument("--warmup", dest="wp", type=int, help="synchronous warm-up iterations; (1 + warmup) must be a multiple of k")
    training.add_argument("--optimizer-local", dest="local_optimizer", choices=[member.value for member in LocalOptimizer])
    training.add_argument("--lr", type=float)
    training.add_argument("--loc-lr", dest="loc_lr", type=float, help="local learning rate (default 4 * lr)")
    training.add_argument("--alpha", type=float)
    training.add_argument("--beta", type=float)
    training.add_argument("--momentum", type=float)
    training.add_argument("--wd", type=float)
    training.add_argument("--batch-size", dest="batch_size", type=int)
    training.add_argument("--iterations", type=int)
    training.add_argument("--eval-interval", dest="eval_interval", type=int)
    training.add_argument("--model", dest="kind", choices=[member.value for member in ModelKind])
    training.add_argument("--seed", type=int)

    cluster = parser.add_argument_group("cluster")
    cluster.add_argument("--workers", type=int)
    cluster.add_argument("--servers", type=int)
    cluster.add_argument("--devices", type=int, help="devices per worker; the batch is split across them")
    cluster.add_argument("--transport", choices=[member.value for member in TransportKind])
    cluster.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=None,
                         help="replay on a logical clock (default) or run one thread per worker")

    run = parser.add_argument_group("run")
    run.add_argument("--profile", help="timing profile (JSON) for simulated times and the timing study")
    run.add_argument("--out", help="output directory")
    run.add_argument("--name", default="run", help="prefix of the files written")
    run.add_argument("--sweep-k", dest="sweep_k", help="k values, e.g. 1..5 or 1,2,4")
    run.add_argument("--sweep-warmup", dest="sweep_warmup", help="warm-up lengths, e.g. 100,200,300,500")
    run.add_argument("--timing-study", dest="timing_study", metavar="K_RANGE", help="tabulate analytic and simulated iteration times of --profile")
    run.add_argument("--cpu-profile", dest="cpu_profile", metavar="PATH", help="write a pyinstrument call-tree report")
    run.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _int_range(text: str, field: str) -> list[int]:
    try:
        return parse_int_range(text)
    except ValueError as ex:
        raise ConfigError(str(ex), field=field) from None


@exit_codes({ConfigError: EXIT_CONFIG, SsdSgdError: EXIT_RUNTIME})
def run(args: argparse.Namespace) -> int:
    if args.timing_study is not None:
        if args.profile is None:
            raise ConfigError("a timing study needs a profile", field="profile")
        out = None if args.out is None else output_dir(args.out).new_file(f"{args.name}-timing", "csv")
        rows = run_timing_study(args.profile, _int_range(args.timing_study, "timing_study"), out=out)
        print("k  case        analytic      simulated     speedup")
        for row in rows:
            print(f"{row.k:<2} {row.case:<11} {row.analytic:<13.6g} {row.simulated:<13.6g} {row.speedup:.4f}")
        return 0

    overrides = {key: value for key, value in vars(args).items() if key not in CLI_ONLY}
    config = parse_config(args.config, overrides)
    config.name = args.name

    if args.sweep_k is not None:
        print(comparison_table(sweep_k(config, _int_range(args.sweep_k, "sweep_k"))))
    elif args.sweep_warmup is not None:
        print(comparison_table(sweep_warmup(config, _int_range(args.sweep_warmup, "sweep_warmup"))))
    else:
        print(run_experiment(config).line())
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)

    if args.cpu_profile is None:
        return run(args)

    with Profiler().session(args.cpu_profile):
        return run(args)


if __name__ == "__main__":
    sys.exit(main())
