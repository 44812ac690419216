"""
End-to-end Monte Carlo harness: P_MD / P_FA estimation, the minimal hash
length search and the figure sweeps.
"""

import csv
import logging
import math
from collections import defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from scipy.stats import norm

from .calibrate import OperatingPoint, calibrate_operating_point
from .detect import acknowledges, log_likelihood_ratios, simulate_statistics
from .errors import (
    ConfigError,
    EmptyGridError,
    HashBeamError,
    MalformedResultsFile,
    UnmetTargetError,
)
from .model import DEFAULT_MESSAGE_BITS, SystemConfig
from .parallel import map_ordered
from .redis_publisher import RedisPublisher
from .rng import Purpose, RandomStreams
from .settings import HashBeamSettings
from .sim_types import NOISELESS, Decision, SnrLevel, TrialRecord, format_snr, parse_snr

logger = logging.getLogger(__name__)

MIN_EVALUATION_TRIALS = 100
SWEEP_NOISE_VAR = 1.0
FIGURE_K_VALUES = (10, 25, 50, 100, 150, 200)

CSV_COLUMNS = (
    "K",
    "M",
    "snr_db",
    "required_L",
    "p_md",
    "p_md_lo",
    "p_md_hi",
    "p_fa",
    "p_fa_lo",
    "p_fa_hi",
    "trials",
    "alpha",
    "seed",
)


def wilson_ci(successes: int, n: int, alpha: float = 0.05) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion; (0, 1) when n == 0."""
    if n == 0:
        return 0.0, 1.0

    z = float(norm.isf(alpha / 2))
    p = successes / n
    z_sq = z * z

    denominator = 1 + z_sq / n
    center = (p + z_sq / (2 * n)) / denominator
    margin = z * math.sqrt((p * (1 - p) + z_sq / (4 * n)) / n) / denominator

    # clamp so the interval always contains p despite rounding
    return max(0.0, min(p, center - margin)), min(1.0, max(p, center + margin))


@dataclass(frozen=True)
class TrialResult:
    trial_index: int
    theta: np.ndarray
    llr: np.ndarray
    ack: np.ndarray
    truth: np.ndarray

    def records(self) -> list[TrialRecord]:
        return [
            TrialRecord(
                trial=self.trial_index,
                owner=user,
                truth=bool(self.truth[user]),
                theta=complex(self.theta[user]),
                llr=float(self.llr[user]),
                decision=Decision.ACK if self.ack[user] else Decision.NO_ACK,
            )
            for user in range(self.theta.size)
        ]


class MetricsEstimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    p_md: float = Field(ge=0.0, le=1.0)
    p_fa: float = Field(ge=0.0, le=1.0)
    md_ci: tuple[float, float]
    fa_ci: tuple[float, float]
    n_h1: int
    n_h0: int
    num_trials: int
    config: SystemConfig
    operating_point: OperatingPoint

    @property
    def md_halfwidth(self) -> float:
        return (self.md_ci[1] - self.md_ci[0]) / 2

    @property
    def fa_halfwidth(self) -> float:
        return (self.fa_ci[1] - self.fa_ci[0]) / 2

    def meets(self, target_pmd: float, target_pfa: float, max_halfwidth: float) -> bool:
        return (
            self.p_md <= target_pmd
            and self.p_fa <= target_pfa
            and self.md_halfwidth <= max_halfwidth
            and self.fa_halfwidth <= max_halfwidth
        )


class SweepRecord(BaseModel):
    """One row of the sweep CSV."""

    model_config = ConfigDict(frozen=True)

    K: int = Field(ge=1)
    M: int = Field(ge=1)
    snr_db: SnrLevel
    required_L: int = Field(ge=1)
    p_md: float
    p_md_lo: float
    p_md_hi: float
    p_fa: float
    p_fa_lo: float
    p_fa_hi: float
    trials: int
    alpha: float
    seed: int


class SweepPoint(BaseModel):
    """Minimal hash length for one (K, M, SNR) with the metrics bracketing it."""

    model_config = ConfigDict(frozen=True)

    num_decoded: int = Field(ge=1)
    num_antennas: int = Field(ge=1)
    snr_db: SnrLevel
    required_L: int = Field(ge=1)
    metrics: MetricsEstimate
    below: MetricsEstimate | None = None
    seed: int

    def record(self) -> SweepRecord:
        m = self.metrics
        return SweepRecord(
            K=self.num_decoded,
            M=self.num_antennas,
            snr_db=self.snr_db,
            required_L=self.required_L,
            p_md=m.p_md,
            p_md_lo=m.md_ci[0],
            p_md_hi=m.md_ci[1],
            p_fa=m.p_fa,
            p_fa_lo=m.fa_ci[0],
            p_fa_hi=m.fa_ci[1],
            trials=m.num_trials,
            alpha=m.operating_point.alpha,
            seed=self.seed,
        )


class GridPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    K: int = Field(ge=1)
    M: int = Field(ge=1)
    snr_db: SnrLevel

    def sort_key(self) -> tuple:
        return (self.K, self.M, *snr_sort_key(self.snr_db))


class SweepFailure(BaseModel):
    point: GridPoint
    error: str


@dataclass
class SweepTable:
    points: list[SweepPoint]
    failures: list[SweepFailure]

    def records(self) -> list[SweepRecord]:
        return [p.record() for p in self.points]


def snr_sort_key(snr_db: SnrLevel) -> tuple[int, float]:
    return (1, 0.0) if snr_db == NOISELESS else (0, float(snr_db))


def evaluation_streams(config: SystemConfig) -> RandomStreams:
    return RandomStreams(
        config.master_seed,
        Purpose.EVALUATE,
        config.num_decoded,
        config.num_undecoded,
        config.num_antennas,
    )


def run_trial(config: SystemConfig, operating_point: OperatingPoint, trial_index: int) -> TrialResult:
    effective = operating_point.apply(config)
    stats = simulate_statistics(effective, *evaluation_streams(effective).trial_generators(trial_index))
    llr = log_likelihood_ratios(stats.theta, operating_point.discriminant)
    return TrialResult(
        trial_index=trial_index,
        theta=stats.theta,
        llr=llr,
        ack=acknowledges(stats.theta, operating_point.discriminant),
        truth=stats.truth,
    )


def estimate_metrics(
    config: SystemConfig,
    operating_point: OperatingPoint,
    num_trials: int,
    threads: int = 1,
    progress: bool = False,
) -> MetricsEstimate:
    if num_trials < MIN_EVALUATION_TRIALS:
        raise ConfigError(f"num_trials must be >= {MIN_EVALUATION_TRIALS}, got {num_trials}")

    def counts(index: int) -> tuple[int, int]:
        result = run_trial(config, operating_point, index)
        misses = int(np.count_nonzero(result.truth & ~result.ack))
        false_alarms = int(np.count_nonzero(~result.truth & result.ack))
        return misses, false_alarms

    tallies = map_ordered(counts, range(num_trials), threads=threads, desc="trials", progress=progress)
    misses = sum(t[0] for t in tallies)
    false_alarms = sum(t[1] for t in tallies)
    n_h1 = num_trials * config.num_decoded
    n_h0 = num_trials * config.num_undecoded

    return MetricsEstimate(
        p_md=misses / n_h1,
        p_fa=false_alarms / n_h0 if n_h0 else 0.0,
        md_ci=wilson_ci(misses, n_h1),
        fa_ci=wilson_ci(false_alarms, n_h0),
        n_h1=n_h1,
        n_h0=n_h0,
        num_trials=num_trials,
        config=config,
        operating_point=operating_point,
    )


def sweep_config(
    num_decoded: int,
    num_antennas: int,
    hash_len: int,
    snr_db: SnrLevel,
    master_seed: int,
    num_undecoded: int | None = None,
    message_bits: int = DEFAULT_MESSAGE_BITS,
) -> SystemConfig:
    return SystemConfig(
        num_antennas=num_antennas,
        hash_len=hash_len,
        num_decoded=num_decoded,
        num_undecoded=num_decoded if num_undecoded is None else num_undecoded,
        message_bits=message_bits,
        noise_var=0.0 if snr_db == NOISELESS else SWEEP_NOISE_VAR,
        hash_mag=1.0,
        master_seed=master_seed,
    )


def find_min_hash_length(
    num_decoded: int,
    num_antennas: int,
    snr_db: SnrLevel,
    targets: tuple[float, float] | None = None,
    trials: int | None = None,
    settings: HashBeamSettings | None = None,
    master_seed: int | None = None,
    threads: int = 1,
    num_undecoded: int | None = None,
    message_bits: int = DEFAULT_MESSAGE_BITS,
) -> SweepPoint:
    """
    Smallest L >= ceil(K/M) whose held-out P_MD and P_FA meet the targets.

    Doubles L from the floor until the targets are met, then bisects the last
    bracket. Every candidate L is calibrated from scratch.
    """
    if num_decoded < 1 or num_antennas < 1:
        raise ConfigError("K and M must be >= 1")
    settings = settings or HashBeamSettings()
    if targets is not None:
        settings = settings.model_copy(update={"target_pmd": targets[0], "target_pfa": targets[1]})
    trials = trials or settings.evaluation_trials
    seed = settings.seed if master_seed is None else master_seed

    def config_for(hash_len: int) -> SystemConfig:
        try:
            return sweep_config(
                num_decoded, num_antennas, hash_len, snr_db, seed, num_undecoded, message_bits
            )
        except ValidationError as e:
            raise ConfigError(f"K={num_decoded}, M={num_antennas}: {_one_line(e)}") from e

    floor = config_for(1).hash_len_floor
    cap = settings.bracket_factor * floor
    evaluated: dict[int, MetricsEstimate] = {}

    def evaluate(hash_len: int) -> MetricsEstimate:
        if hash_len not in evaluated:
            config = config_for(hash_len)
            point = calibrate_operating_point(
                config, snr_db, settings, target_pfa=settings.design_pfa, threads=threads
            )
            evaluated[hash_len] = estimate_metrics(config, point, trials, threads=threads)
            m = evaluated[hash_len]
            logger.debug(
                "K=%d M=%d snr=%s L=%d: P_MD=%.4f P_FA=%.4f",
                num_decoded,
                num_antennas,
                snr_db,
                hash_len,
                m.p_md,
                m.p_fa,
            )
        return evaluated[hash_len]

    def meets(hash_len: int) -> bool:
        return evaluate(hash_len).meets(
            settings.target_pmd, settings.target_pfa, settings.max_ci_halfwidth
        )

    failing = floor - 1
    hash_len = floor
    while not meets(hash_len):
        failing = hash_len
        if hash_len >= cap:
            raise UnmetTargetError(
                f"no L <= {cap} meets P_MD <= {settings.target_pmd} and P_FA <= {settings.target_pfa} "
                f"for K={num_decoded}, M={num_antennas}, SNR={format_snr(snr_db)}"
            )
        hash_len = min(2 * hash_len, cap)

    passing = hash_len
    while passing - failing > 1:
        mid = (passing + failing) // 2
        if meets(mid):
            passing = mid
        else:
            failing = mid

    return SweepPoint(
        num_decoded=num_decoded,
        num_antennas=num_antennas,
        snr_db=snr_db,
        required_L=passing,
        metrics=evaluated[passing],
        below=evaluated.get(passing - 1),
        seed=seed,
    )


PRESETS: dict[str, list[GridPoint]] = {
    # M = 10 antennas at three noise levels
    "fig3": [
        GridPoint(K=K, M=10, snr_db=snr)
        for snr in (5.0, 10.0, NOISELESS)
        for K in FIGURE_K_VALUES
    ],
    # 10 dB at three antenna counts
    "fig4": [
        GridPoint(K=K, M=M, snr_db=10.0)
        for M in (10, 20, 50)
        for K in FIGURE_K_VALUES
    ],
}


def preset_grid(name: str) -> list[GridPoint]:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset '{name}'; choose one of {', '.join(PRESETS)}")
    return list(PRESETS[name])


def load_grid(path: str | Path) -> list[GridPoint]:
    """Read a grid CSV with columns K, M, snr_db."""
    rows = _read_csv(path, ("K", "M", "snr_db"))
    grid = []
    for line, row in rows:
        try:
            grid.append(GridPoint(K=int(row["K"]), M=int(row["M"]), snr_db=parse_snr(row["snr_db"])))
        except (ValueError, ValidationError) as e:
            raise MalformedResultsFile(f"{path}:{line}: {_one_line(e)}") from e
    return grid


def sweep(
    grid: Sequence[GridPoint],
    settings: HashBeamSettings | None = None,
    trials: int | None = None,
    master_seed: int | None = None,
    threads: int = 1,
    publisher: RedisPublisher | None = None,
    progress: bool = False,
    num_undecoded: int | None = None,
    message_bits: int = DEFAULT_MESSAGE_BITS,
) -> SweepTable:
    """
    Evaluate every grid point; points run in parallel, errors are collected.

    The table is sorted on (K, M, snr) so it does not depend on scheduling.
    """
    if not grid:
        raise EmptyGridError()
    settings = settings or HashBeamSettings()
    seed = settings.seed if master_seed is None else master_seed

    # a single point gets the whole pool; otherwise parallelism is across points
    point_threads = threads if len(grid) == 1 else 1

    def run_point(point: GridPoint) -> SweepPoint | SweepFailure:
        try:
            result = find_min_hash_length(
                point.K,
                point.M,
                point.snr_db,
                trials=trials,
                settings=settings,
                master_seed=seed,
                threads=point_threads,
                num_undecoded=num_undecoded,
                message_bits=message_bits,
            )
        except HashBeamError as e:
            logger.warning("Warning: sweep point %s failed: %s", point, e)
            return SweepFailure(point=point, error=str(e))
        if publisher is not None and publisher.is_enabled():
            publisher.publish_event("sweep_point", result.record().model_dump(mode="json"), seed)
        return result

    ordered = sorted(grid, key=GridPoint.sort_key)
    outcomes = map_ordered(run_point, ordered, threads=threads, desc="sweep", progress=progress)
    table = SweepTable(
        points=[o for o in outcomes if isinstance(o, SweepPoint)],
        failures=[o for o in outcomes if isinstance(o, SweepFailure)],
    )
    if publisher is not None and publisher.is_enabled():
        publisher.publish_event(
            "sweep_complete",
            {"points": len(table.points), "failures": len(table.failures)},
            seed,
        )
    return table


def _as_records(table: SweepTable | Iterable[SweepPoint | SweepRecord]) -> list[SweepRecord]:
    if isinstance(table, SweepTable):
        return table.records()
    return [r.record() if isinstance(r, SweepPoint) else r for r in table]


def _format_value(value: object) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def persist_results(table: SweepTable | Iterable[SweepPoint | SweepRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for record in _as_records(table):
            row = record.model_dump()
            row["snr_db"] = format_snr(record.snr_db)
            writer.writerow([_format_value(row[c]) if c != "snr_db" else row[c] for c in CSV_COLUMNS])
    return path


def _one_line(error: Exception) -> str:
    if isinstance(error, ValidationError):
        first = error.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        return f"{where}: {first['msg']}" if where else first["msg"]
    return str(error)


def _read_csv(path: str | Path, required: Sequence[str]) -> list[tuple[int, dict[str, str]]]:
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            header = reader.fieldnames or []
            for column in required:
                if column not in header:
                    raise MalformedResultsFile(f"{path}:1: missing column '{column}'")
            rows = []
            for row in reader:
                if None in row or any(v is None for v in row.values()):
                    raise MalformedResultsFile(
                        f"{path}:{reader.line_num}: expected {len(header)} fields"
                    )
                rows.append((reader.line_num, row))
            return rows
    except OSError as e:
        raise MalformedResultsFile(f"{path}: cannot read file: {e.strerror}") from e


def load_results(path: str | Path) -> list[SweepRecord]:
    records = []
    for line, row in _read_csv(path, CSV_COLUMNS):
        try:
            data: dict[str, object] = dict(row)
            data["snr_db"] = parse_snr(row["snr_db"])
            records.append(SweepRecord.model_validate(data))
        except (ValueError, ValidationError) as e:
            raise MalformedResultsFile(f"{path}:{line}: {_one_line(e)}") from e
    return records


def _curve_name(num_antennas: int, snr_db: SnrLevel) -> str:
    label = NOISELESS if snr_db == NOISELESS else f"{float(snr_db):g}dB"
    return f"curve_M{num_antennas}_{label}.csv"


def export_curves(
    table: SweepTable | Iterable[SweepPoint | SweepRecord], directory: str | Path
) -> list[Path]:
    """One `K,required_L` CSV per (M, SNR) curve."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    curves: dict[tuple[int, SnrLevel], list[SweepRecord]] = defaultdict(list)
    for record in _as_records(table):
        curves[(record.M, record.snr_db)].append(record)

    written = []
    for (num_antennas, snr_db), records in sorted(
        curves.items(), key=lambda item: (item[0][0], snr_sort_key(item[0][1]))
    ):
        path = directory / _curve_name(num_antennas, snr_db)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(("K", "required_L"))
            for record in sorted(records, key=lambda r: r.K):
                writer.writerow((record.K, record.required_L))
        written.append(path)
    return written


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r_squared: float


def scaling_fit(points: Iterable[SweepPoint | SweepRecord | tuple[int, int]]) -> ScalingFit:
    """Least-squares line through (K, required_L) for one curve."""
    pairs = []
    for p in points:
        if isinstance(p, SweepPoint):
            pairs.append((p.num_decoded, p.required_L))
        elif isinstance(p, SweepRecord):
            pairs.append((p.K, p.required_L))
        else:
            pairs.append((p[0], p[1]))
    if len(pairs) < 2:
        raise ConfigError("a scaling fit needs at least two points")

    K, L = np.asarray(pairs, dtype=np.float64).T
    slope, intercept = np.polyfit(K, L, 1)
    residual = L - (slope * K + intercept)
    total = L - L.mean()
    ss_tot = float(total @ total)
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - float(residual @ residual) / ss_tot
    return ScalingFit(slope=float(slope), intercept=float(intercept), r_squared=r_squared)
