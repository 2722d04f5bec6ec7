from __future__ import annotations

import csv
import logging
import os
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Optional, Sequence, Union

from maybe import Maybe
from pathmagic import File, PathLike

from ..classes import Timer
from ..errors import InternalError
from ..optim import Strategy
from ..pipesim import TimingProfile, classify, simulate_pipeline, ssd_avg_iter_time, ssgd_iter_time
from ..psruntime import MetricRecord, run_training
from .config import ExperimentConfig

logger = logging.getLogger(__name__)


def _format(value: Union[int, float, None]) -> str:
    if value is None:
        return ""
    return repr(float(value)) if isinstance(value, float) else str(value)


def write_metrics(records: Iterable[MetricRecord], path: PathLike) -> File:
    file = File.from_pathlike(path)
    with open(file, "w", newline="") as stream:
        writer = csv.writer(stream)
        writer.writerow(MetricRecord.field_names())
        for record in records:
            writer.writerow([_format(getattr(record, name)) for name in MetricRecord.field_names()])
    return file


def read_metrics(path: PathLike) -> list[MetricRecord]:
    converters = {item.name: (int if item.type in ("int", int) else float) for item in fields(MetricRecord)}
    with open(File.from_pathlike(path), newline="") as stream:
        reader = csv.DictReader(stream)
        if reader.fieldnames != MetricRecord.field_names():
            raise InternalError(f"unexpected metrics header {reader.fieldnames}")
        return [
            MetricRecord(**{name: (None if text == "" else converters[name](text)) for name, text in row.items()})
            for row in reader
        ]


@dataclass(frozen=True)
class ExperimentSummary:
    name: str
    strategy: str
    local_optimizer: str
    k: int
    wp: int
    iterations: int
    final_loss: float
    final_accuracy: float
    wall_time: float
    samples_per_second: float
    pushes: int
    pulls: int
    csv_path: str

    @property
    def per_iteration(self) -> float:
        return self.wall_time / self.iterations

    def line(self) -> str:
        return (f"{self.name}: strategy={self.strategy} k={self.k} wp={self.wp} loss={self.final_loss:.6f} accuracy={self.final_accuracy:.4f} "
                f"per-iteration={self.per_iteration * 1e3:.3f}ms samples/s={self.samples_per_second:.1f} pushes={self.pushes} pulls={self.pulls}")


def run_experiment(config: ExperimentConfig) -> ExperimentSummary:
    """Train once, write one MetricRecord per evaluation to '<out>/<name>.csv' and return the summary."""
    file = config.output_dir().new_file(config.name, "csv")
    training = config.training

    logger.info("Running %s (%s, k=%d, wp=%d, %d workers).", config.name, training.options.strategy.value, training.hp.k, training.hp.wp, training.hp.workers)
    with Timer() as timer:
        records = list(run_training(training))

    write_metrics(records, file)
    final = records[-1]
    hp = training.hp
    summary = ExperimentSummary(
        name=config.name, strategy=training.options.strategy.value, local_optimizer=training.options.local_optimizer.value, k=hp.k, wp=hp.wp,
        iterations=training.iterations, final_loss=final.train_loss, final_accuracy=final.eval_accuracy, wall_time=timer.period,
        samples_per_second=training.iterations * hp.workers * hp.batch_size / timer.period if timer.period else float("inf"),
        pushes=final.pushes, pulls=final.pulls, csv_path=os.fspath(file),
    )
    logger.info(summary.line())
    return summary


def sweep_k(config: ExperimentConfig, ks: Sequence[int]) -> list[ExperimentSummary]:
    summaries = [run_experiment(config.with_changes(name=f"{config.name}-k{k}", k=k)) for k in ks]
    write_comparison(summaries, config.output_dir().new_file(f"{config.name}-sweep-k", "csv"))
    return summaries


def sweep_warmup(config: ExperimentConfig, warmups: Sequence[int]) -> list[ExperimentSummary]:
    summaries = [run_experiment(config.with_changes(name=f"{config.name}-wp{wp}", wp=wp)) for wp in warmups]
    write_comparison(summaries, config.output_dir().new_file(f"{config.name}-sweep-warmup", "csv"))
    return summaries


COMPARISON_COLUMNS = ("name", "strategy", "local_optimizer", "k", "wp", "final_loss", "final_accuracy", "samples_per_second", "pushes", "pulls")


def comparison_table(summaries: Sequence[ExperimentSummary]) -> str:
    rows = [list(COMPARISON_COLUMNS)] + [
        [_cell(getattr(summary, column)) for column in COMPARISON_COLUMNS] for summary in summaries
    ]
    widths = [max(len(row[index]) for row in rows) for index in range(len(COMPARISON_COLUMNS))]
    return "\n".join("  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip() for row in rows)


def _cell(value: Union[str, int, float]) -> str:
    return f"{value:.6g}" if isinstance(value, float) else str(value)


def write_comparison(summaries: Sequence[ExperimentSummary], path: PathLike) -> File:
    file = File.from_pathlike(path)
    with open(file, "w", newline="") as stream:
        writer = csv.DictWriter(stream, fieldnames=COMPARISON_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        for summary in summaries:
            writer.writerow(asdict(summary))
    logger.info("Comparison:\n%s", comparison_table(summaries))
    return file


def _default_iterations(k: int) -> int:
    return max(10 * k, 40)


@dataclass(frozen=True)
class TimingRow:
    k: int
    case: str
    analytic: float
    simulated: float
    ssgd: float
    speedup: float

    @property
    def relative_error(self) -> float:
        return abs(self.analytic - self.simulated) / self.simulated if self.simulated else 0.0


def run_timing_study(profile: Union[TimingProfile, PathLike], ks: Sequence[int], n_iters: Optional[int] = None,
                     out: Optional[PathLike] = None) -> list[TimingRow]:
    """
    For each k: the analytic and simulated average iteration times under ssd-sgd, and the simulated speedup over ssgd.
    The case column is checked against the simulation, so it reads unmodelled where no closed form applies.
    """
    profile = profile if isinstance(profile, TimingProfile) else TimingProfile.load(profile)
    ssgd = simulate_pipeline(profile, Strategy.SSGD, k=1, n_iters=Maybe(n_iters).else_(_default_iterations(1))).average

    rows = []
    for k in ks:
        analytic, _ = ssd_avg_iter_time(profile, k)
        simulated = simulate_pipeline(profile, Strategy.SSD_SGD, k=k, n_iters=Maybe(n_iters).else_(_default_iterations(k))).average
        case = classify(profile, k, simulated=simulated)
        rows.append(TimingRow(k=k, case=case.value, analytic=analytic, simulated=simulated, ssgd=ssgd, speedup=ssgd / simulated if simulated else 1.0))
        logger.info("k=%d case=%s analytic=%.6g simulated=%.6g speedup=%.4f", k, case.value, analytic, simulated, rows[-1].speedup)

    if abs(ssgd - ssgd_iter_time(profile)) > 1e-9 * max(1.0, ssgd):
        logger.info("Simulated synchronous iteration %.6g differs from the bubble-free closed form %.6g.", ssgd, ssgd_iter_time(profile))

    if out is not None:
        with open(File.from_pathlike(out), "w", newline="") as stream:
            writer = csv.writer(stream)
            writer.writerow(["k", "case", "analytic", "simulated", "ssgd", "speedup"])
            writer.writerows([[row.k, row.case, repr(row.analytic), repr(row.simulated), repr(row.ssgd), repr(row.speedup)] for row in rows])

    return rows

