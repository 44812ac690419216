"""
Command-line front end.

    hashbeam calibrate --set snr_db=10 -o out/
    hashbeam trial --operating-point out/operating_point.json
    hashbeam metrics --operating-point out/operating_point.json --trials 4000
    hashbeam sweep --preset fig3 --seed 7 -o out/

Exit codes: 0 on success, 1 on usage errors, 2 when the simulation itself fails.
"""

import csv
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Annotated, Any, Literal, Optional

import click
import typer
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from rich.console import Console
from rich.table import Table

from .calibrate import OperatingPoint, calibrate_operating_point
from .errors import ConfigError, HashBeamError
from .experiment import (
    GridPoint,
    SweepTable,
    estimate_metrics,
    export_curves,
    load_grid,
    persist_results,
    preset_grid,
    run_trial,
    sweep,
    sweep_config,
)
from .logging_utils import setup_logging
from .model import SystemConfig
from .redis_publisher import RedisPublisher
from .settings import HashBeamSettings
from .sim_types import NOISELESS, SnrLevel, format_snr, parse_snr

logger = logging.getLogger(__name__)

U64_MAX = 2**64 - 1

# used when no --config file is given; num_undecoded follows num_decoded
DEFAULT_CONFIG: dict[str, Any] = {
    "num_antennas": 10,
    "hash_len": 10,
    "num_decoded": 10,
    "noise_var": 1.0,
}

OPERATING_POINT_FILE = "operating_point.json"
METRICS_FILE = "metrics.csv"
SWEEP_FILE = "sweep.csv"

# --set keys that tune the operating point rather than the scenario
SNR_KEY = "snr_db"
POINT_KEYS = ("llr_threshold", "alpha")
# population keys a sweep applies to every grid point
SWEEP_KEYS = ("num_undecoded", "message_bits")

app = typer.Typer(
    name="hashbeam",
    help="HashBeam downlink feedback simulator.",
    add_completion=False,
    pretty_exceptions_enable=False,
)


class CliInvocation(BaseModel):
    """One parsed command line, before any simulation runs."""

    model_config = ConfigDict(frozen=True)

    subcommand: Literal["calibrate", "trial", "metrics", "sweep"]
    config_path: Optional[Path] = None
    overrides: dict[str, str] = Field(default_factory=dict)
    output_path: Path = Path(".")
    seed: Optional[int] = Field(default=None, ge=0, le=U64_MAX)

    def allowed_keys(self) -> set[str]:
        if self.subcommand == "sweep":
            return set(SWEEP_KEYS)
        keys = set(SystemConfig.model_fields)
        if self.subcommand == "calibrate":
            keys.add(SNR_KEY)
        elif self.subcommand in ("trial", "metrics"):
            keys.update((SNR_KEY, *POINT_KEYS))
        return keys

    def scenario_overrides(self) -> dict[str, str]:
        return {k: v for k, v in self.overrides.items() if k in SystemConfig.model_fields}

    def snr_db(self) -> SnrLevel | None:
        if SNR_KEY not in self.overrides:
            return None
        try:
            return parse_snr(self.overrides[SNR_KEY])
        except ValueError as e:
            raise typer.BadParameter(f"{SNR_KEY}: {e}", param_hint="--set") from e

    def point_overrides(self) -> dict[str, float]:
        changes = {}
        for key in POINT_KEYS:
            if key in self.overrides:
                try:
                    changes[key] = float(self.overrides[key])
                except ValueError as e:
                    raise typer.BadParameter(
                        f"{key} must be a number, got {self.overrides[key]!r}", param_hint="--set"
                    ) from e
        return changes

    def population_overrides(self) -> dict[str, int]:
        changes = {}
        for key in SWEEP_KEYS:
            if key in self.overrides:
                try:
                    changes[key] = int(self.overrides[key])
                except ValueError as e:
                    raise typer.BadParameter(
                        f"{key} must be an integer, got {self.overrides[key]!r}", param_hint="--set"
                    ) from e
        return changes

    def effective_config(self) -> SystemConfig:
        data = _read_json(self.config_path, "config") if self.config_path else dict(DEFAULT_CONFIG)
        if not isinstance(data, dict):
            raise ConfigError(f"{self.config_path}: expected a JSON object")
        data.update(self.scenario_overrides())
        if self.seed is not None:
            data["master_seed"] = self.seed
        try:
            return SystemConfig.model_validate(data)
        except ValidationError as e:
            message = _first_error(e)
            if self.scenario_overrides():
                raise typer.BadParameter(message, param_hint="--set") from e
            raise ConfigError(f"{self.config_path}: {message}") from e


def _first_error(error: ValidationError) -> str:
    first = error.errors()[0]
    where = ".".join(str(p) for p in first["loc"])
    return f"{where}: {first['msg']}" if where else first["msg"]


def _read_json(path: Path, what: str) -> Any:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read {what} file {path}: {e.strerror}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}: invalid JSON ({e.msg})") from e


def parse_overrides(items: Sequence[str] | None, allowed: set[str]) -> dict[str, str]:
    overrides: dict[str, str] = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise typer.BadParameter(f"expected key=value, got {item!r}", param_hint="--set")
        if key not in allowed:
            raise typer.BadParameter(
                f"unknown key {key!r}; valid keys: {', '.join(sorted(allowed))}",
                param_hint="--set",
            )
        overrides[key] = value.strip()
    return overrides


def _invocation(
    subcommand: str,
    config: Optional[Path],
    overrides: Optional[list[str]],
    output: Path,
    seed: Optional[int],
) -> CliInvocation:
    invocation = CliInvocation(
        subcommand=subcommand, config_path=config, output_path=output, seed=seed
    )
    return invocation.model_copy(
        update={"overrides": parse_overrides(overrides, invocation.allowed_keys())}
    )


def _settings(seed: Optional[int]) -> HashBeamSettings:
    try:
        settings = HashBeamSettings()
    except ValidationError as e:
        raise ConfigError(f"environment: {_first_error(e)}") from e
    if seed is not None:
        settings = settings.model_copy(update={"seed": seed})
    return settings


def _operating_point(
    invocation: CliInvocation,
    config: SystemConfig,
    settings: HashBeamSettings,
    path: Optional[Path],
    threads: int,
) -> OperatingPoint:
    if path is not None:
        try:
            point = OperatingPoint.model_validate(_read_json(path, "operating point"))
        except ValidationError as e:
            raise ConfigError(f"{path}: {_first_error(e)}") from e
    else:
        logger.info("No --operating-point given, calibrating one for this configuration")
        point = calibrate_operating_point(config, invocation.snr_db(), settings, threads=threads)

    changes = invocation.point_overrides()
    try:
        return point.with_overrides(**changes) if changes else point
    except ValidationError as e:
        raise typer.BadParameter(_first_error(e), param_hint="--set") from e


def _output_dir(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot use output directory {path}: {e.strerror}") from e


def _aligned_config(config: SystemConfig, point: OperatingPoint) -> SystemConfig:
    # a noiseless operating point forces sigma^2 = 0 on the scenario
    if point.snr_db == NOISELESS:
        return config.with_updates(noise_var=0.0)
    return config


ConfigOption = Annotated[
    Optional[Path],
    typer.Option("--config", help="JSON file with SystemConfig fields."),
]
SetOption = Annotated[
    Optional[list[str]],
    typer.Option("--set", help="Override a config key (key=value); repeatable."),
]
SeedOption = Annotated[
    Optional[int],
    typer.Option("--seed", envvar="HASHBEAM_SEED", min=0, max=U64_MAX, help="Master seed (u64)."),
]
TrialsOption = Annotated[
    Optional[int],
    typer.Option("--trials", min=100, help="Evaluation trials (default HASHBEAM_EVALUATION_TRIALS)."),
]
ThreadsOption = Annotated[
    Optional[int],
    typer.Option("--threads", min=1, help="Worker thread cap (default HASHBEAM_THREADS)."),
]
OutputOption = Annotated[
    Path,
    typer.Option("-o", "--output", help="Output directory."),
]
OperatingPointOption = Annotated[
    Optional[Path],
    typer.Option("--operating-point", help="Operating-point JSON written by `calibrate`."),
]
VerboseOption = Annotated[bool, typer.Option("--verbose", "-v", help="Debug logging.")]


def _key_value_table(title: str, rows: Sequence[tuple[str, Any]]) -> Table:
    table = Table(title=title, show_header=False)
    table.add_column("key", style="bold")
    table.add_column("value")
    for key, value in rows:
        table.add_row(key, str(value))
    return table


@app.command()
def calibrate(
    config: ConfigOption = None,
    overrides: SetOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    output: OutputOption = Path("."),
    verbose: VerboseOption = False,
) -> int:
    """Calibrate alpha and the ACK discriminant; writes operating_point.json."""
    setup_logging(verbose)
    invocation = _invocation("calibrate", config, overrides, output, seed)
    system = invocation.effective_config()
    settings = _settings(seed)
    _output_dir(output)

    point = calibrate_operating_point(
        system, invocation.snr_db(), settings, threads=threads or settings.threads
    )
    path = output / OPERATING_POINT_FILE
    path.write_text(point.model_dump_json(indent=2) + "\n", encoding="utf-8")

    d = point.discriminant
    Console().print(
        _key_value_table(
            "Operating point",
            [
                ("K / K_u / M / L", f"{point.num_decoded} / {point.num_undecoded} / {point.num_antennas} / {point.hash_len}"),
                ("snr_db", format_snr(point.snr_db) if point.snr_db is not None else "-"),
                ("alpha", f"{point.alpha:.6g}"),
                ("mu0 / var0", f"{d.mu0:.4g} / {d.var0:.4g}"),
                ("mu1 / var1", f"{d.mu1:.4g} / {d.var1:.4g}"),
                ("llr_threshold", f"{d.llr_threshold:.6g}"),
                ("samples H1 / H0", f"{point.num_h1} / {point.num_h0}"),
                ("written", path),
            ],
        )
    )
    return 0


@app.command()
def trial(
    config: ConfigOption = None,
    overrides: SetOption = None,
    seed: SeedOption = None,
    operating_point: OperatingPointOption = None,
    index: Annotated[int, typer.Option("--index", min=0, help="Trial index.")] = 0,
    threads: ThreadsOption = None,
    verbose: VerboseOption = False,
) -> int:
    """Run one scenario and print every user's theta and decision."""
    setup_logging(verbose)
    invocation = _invocation("trial", config, overrides, Path("."), seed)
    system = invocation.effective_config()
    settings = _settings(seed)
    point = _operating_point(
        invocation, system, settings, operating_point, threads or settings.threads
    )

    result = run_trial(_aligned_config(system, point), point, index)
    table = Table(title=f"Trial {index}")
    for column in ("user", "decoded", "theta", "llr", "decision"):
        table.add_column(column, justify="right")
    for record in result.records():
        table.add_row(
            str(record["owner"]),
            "yes" if record["truth"] else "no",
            f"{record['theta']:.4f}",
            f"{record['llr']:.4g}",
            record["decision"].value,
        )
    Console().print(table)
    return 0


@app.command()
def metrics(
    config: ConfigOption = None,
    overrides: SetOption = None,
    seed: SeedOption = None,
    operating_point: OperatingPointOption = None,
    trials: TrialsOption = None,
    threads: ThreadsOption = None,
    output: OutputOption = Path("."),
    verbose: VerboseOption = False,
) -> int:
    """Estimate P_MD and P_FA with Wilson intervals; writes metrics.csv."""
    setup_logging(verbose)
    invocation = _invocation("metrics", config, overrides, output, seed)
    system = invocation.effective_config()
    settings = _settings(seed)
    _output_dir(output)
    workers = threads or settings.threads
    point = _operating_point(invocation, system, settings, operating_point, workers)

    estimate = estimate_metrics(
        _aligned_config(system, point),
        point,
        trials or settings.evaluation_trials,
        threads=workers,
        progress=True,
    )
    cfg = estimate.config
    row = {
        "K": cfg.num_decoded,
        "K_u": cfg.num_undecoded,
        "M": cfg.num_antennas,
        "L": cfg.hash_len,
        "noise_var": repr(cfg.noise_var),
        "alpha": repr(point.alpha),
        "llr_threshold": repr(point.discriminant.llr_threshold),
        "p_md": repr(estimate.p_md),
        "p_md_lo": repr(estimate.md_ci[0]),
        "p_md_hi": repr(estimate.md_ci[1]),
        "p_fa": repr(estimate.p_fa),
        "p_fa_lo": repr(estimate.fa_ci[0]),
        "p_fa_hi": repr(estimate.fa_ci[1]),
        "n_h1": estimate.n_h1,
        "n_h0": estimate.n_h0,
        "trials": estimate.num_trials,
        "seed": cfg.master_seed,
    }
    path = output / METRICS_FILE
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(row), lineterminator="\n")
        writer.writeheader()
        writer.writerow(row)

    Console().print(
        _key_value_table(
            "Metrics",
            [
                ("P_MD", f"{estimate.p_md:.4f}  [{estimate.md_ci[0]:.4f}, {estimate.md_ci[1]:.4f}]"),
                ("P_FA", f"{estimate.p_fa:.4f}  [{estimate.fa_ci[0]:.4f}, {estimate.fa_ci[1]:.4f}]"),
                ("samples H1 / H0", f"{estimate.n_h1} / {estimate.n_h0}"),
                ("written", path),
            ],
        )
    )
    return 0


def _sweep_table(table: SweepTable) -> Table:
    out = Table(title="Required hash length")
    for column in ("K", "M", "snr_db", "L", "P_MD", "P_FA", "alpha"):
        out.add_column(column, justify="right")
    for record in table.records():
        out.add_row(
            str(record.K),
            str(record.M),
            format_snr(record.snr_db),
            str(record.required_L),
            f"{record.p_md:.4f}",
            f"{record.p_fa:.4f}",
            f"{record.alpha:.4g}",
        )
    for failure in table.failures:
        p = failure.point
        out.add_row(str(p.K), str(p.M), format_snr(p.snr_db), "[red]failed[/red]", "-", "-", "-")
    return out


@app.command("sweep")
def sweep_command(
    preset: Annotated[
        Optional[str], typer.Option("--preset", help="Figure grid: fig3 or fig4.")
    ] = None,
    grid: Annotated[
        Optional[Path], typer.Option("--grid", help="CSV grid with columns K,M,snr_db.")
    ] = None,
    overrides: Annotated[
        Optional[list[str]],
        typer.Option("--set", help="num_undecoded or message_bits for every point (key=value)."),
    ] = None,
    seed: SeedOption = None,
    trials: TrialsOption = None,
    threads: ThreadsOption = None,
    output: OutputOption = Path("."),
    verbose: VerboseOption = False,
) -> int:
    """Find the minimal hash length per grid point; writes sweep.csv and curve CSVs."""
    setup_logging(verbose)
    if (preset is None) == (grid is None):
        raise click.UsageError("give exactly one of --preset or --grid")
    invocation = _invocation("sweep", None, overrides, output, seed)
    population = invocation.population_overrides()
    settings = _settings(seed)

    points: list[GridPoint] = preset_grid(preset) if preset is not None else load_grid(grid)
    for point in points:
        try:
            sweep_config(point.K, point.M, 1, point.snr_db, settings.seed, **population)
        except ValidationError as e:
            raise typer.BadParameter(_first_error(e), param_hint="--set") from e
    _output_dir(output)

    table = sweep(
        points,
        settings,
        trials=trials,
        threads=threads or settings.threads,
        publisher=RedisPublisher(settings),
        progress=True,
        **population,
    )
    path = persist_results(table, output / SWEEP_FILE)
    curves = export_curves(table, output)

    Console().print(_sweep_table(table))
    logger.info("Wrote %s and %d curve files", path, len(curves))
    for failure in table.failures:
        logger.warning("Warning: %s failed: %s", failure.point, failure.error)
    return 0


def main(args: Sequence[str] | None = None) -> int:
    command = typer.main.get_command(app)
    err = Console(stderr=True)
    try:
        result = command.main(
            args=list(sys.argv[1:] if args is None else args),
            prog_name="hashbeam",
            standalone_mode=False,
        )
    except click.UsageError as e:
        err.print(f"Usage error: {e.format_message()}", markup=False, soft_wrap=True)
        return 1
    except click.ClickException as e:
        err.print(f"Error: {e.format_message()}", markup=False, soft_wrap=True)
        return 1
    except click.Abort:
        return 1
    except HashBeamError as e:
        err.print(f"Error: {e}", markup=False, soft_wrap=True)
        return 2
    except OSError as e:
        err.print(f"Error: {e}", markup=False, soft_wrap=True)
        return 2
    return result if isinstance(result, int) else 0


def run() -> None:
    sys.exit(main())
