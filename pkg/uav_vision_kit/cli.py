"""Command-line interface for the UAV vision kit.

Exit codes: 0 ok, 1 property failure, 2 usage, 3 I/O, 4 domain error.
"""

import functools
import logging
import os
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

import click
import numpy as np
from dotenv import load_dotenv

from .bench import BenchInvariantError, gen_sequence, run_benchmark
from .checks import run_checks
from .config import (
    ConfigError,
    dump_tracker_config,
    load_sequence_spec,
    load_tracker_config,
    merge_overrides,
    save_sequence_spec,
)
from .conv import CodecError, DepthwiseKernel, PointwiseKernel
from .frame_io import MalformedHeader, TruncatedData, read_sequence, write_sequence
from .frames import extract_patch
from .models import Frame, PatchCenter, SequenceSpec, TrackerConfig, WalkSpec
from .opcount import (
    NetSpec,
    NetSpecError,
    PowerParams,
    budget_report,
    load_netspec,
    net_ops,
    reference_netspec,
)
from .outputs import atomic_write_text, render_csv, write_csv
from .pipeline import SearchStage, SeparableStage, make_spin_stage, measure_scaling
from .predictor import track_sequence
from .reports import (
    BUDGET_HEADER,
    GROUND_TRUTH_HEADER,
    METRICS_HEADER,
    OPCOUNT_HEADER,
    RUNSTATS_HEADER,
    TRACK_HEADER,
    budget_row,
    ground_truth_rows,
    metrics_row,
    opcount_rows,
    runstats_rows,
    track_rows,
)

load_dotenv()

SEED_ENV = "UVK_SEED"

logger = logging.getLogger(__name__)


class PropertyFailure(click.ClickException):
    exit_code = 1


class InputError(click.ClickException):
    exit_code = 3


class DomainError(click.ClickException):
    exit_code = 4


def reports_errors(fn: Callable[..., None]) -> Callable[..., None]:
    """Translate library exceptions into the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args: Any, **kwargs: Any) -> None:
        try:
            fn(*args, **kwargs)
        except click.ClickException:
            raise
        except ConfigError as e:
            raise click.UsageError(str(e)) from e
        except BenchInvariantError as e:
            raise PropertyFailure(str(e)) from e
        except (OSError, MalformedHeader, TruncatedData, CodecError, NetSpecError) as e:
            raise InputError(str(e)) from e
        except (ValueError, ArithmeticError) as e:
            raise DomainError(str(e)) from e

    return wrapper


def _parse_point(
    ctx: click.Context,
    param: click.Parameter,
    value: str | None,
) -> PatchCenter | None:
    if value is None:
        return None
    try:
        x, y = (int(part) for part in value.split(","))
    except ValueError:
        raise click.BadParameter(f"expected X,Y integers, got {value!r}") from None
    return PatchCenter(x=x, y=y)


def _parse_int_list(ctx: click.Context, param: click.Parameter, value: str) -> list[int]:
    try:
        items = [int(part) for part in value.split(",") if part.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {value!r}") from None
    if not items or min(items) < 1:
        raise click.BadParameter("worker counts must be positive")
    return items


def tracker_options(fn: Callable[..., None]) -> Callable[..., None]:
    """--config plus one override flag per tracker parameter."""
    options = [
        click.option(
            "--config",
            "config_file",
            type=click.Path(path_type=Path),
            help="Tracker config file (key=value)",
        ),
        click.option("--alpha", type=float, help="Column smoothing coefficient"),
        click.option("--beta", type=float, help="Row smoothing coefficient"),
        click.option("--threshold", type=float, help="Correlation score to accept a match"),
        click.option("--stride", type=int, help="Candidate spacing in pixels"),
        click.option("--max-radius", type=int, help="Last layer searched"),
        click.option("--half", type=int, help="Template half-size"),
        click.option("--dead-zone", type=float, help="Displacement treated as stationary"),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _tracker_config(config_file: Path | None, **overrides: Any) -> TrackerConfig:
    base = load_tracker_config(config_file) if config_file else TrackerConfig()
    return merge_overrides(base, overrides)


def _netspec(spec_file: Path | None, bytes_per_weight: int) -> NetSpec:
    if spec_file is None:
        return reference_netspec().model_copy(update={"bytes_per_weight": bytes_per_weight})
    return load_netspec(spec_file, bytes_per_weight=bytes_per_weight)


def _emit(header: Sequence[str], rows: Sequence[Sequence[object]], out: Path | None) -> None:
    if out is None:
        click.echo(render_csv(header, rows), nl=False)
    else:
        write_csv(out, header, rows)
        click.echo(f"Wrote {len(rows)} rows → {out}", err=True)


out_option = click.option(
    "--out",
    type=click.Path(path_type=Path),
    help="CSV output (stdout if omitted)",
)

netspec_options = [
    click.option(
        "--spec",
        "spec_file",
        type=click.Path(path_type=Path),
        help="NetSpec file (default: 10-layer 3x3, 64-channel reference)",
    ),
    click.option(
        "--bytes-per-weight",
        type=click.IntRange(min=1),
        default=4,
        show_default=True,
        help="Storage per weight",
    ),
]


def with_netspec(fn: Callable[..., None]) -> Callable[..., None]:
    for option in reversed(netspec_options):
        fn = option(fn)
    return fn


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Log debug output")
@click.version_option(package_name="uav-vision-kit")
def cli(verbose: bool) -> None:
    """Direction prediction, separable convolution and onboard budget tools for UAVs."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@cli.command()
@click.option(
    "--frames",
    "frames_dir",
    type=click.Path(path_type=Path),
    required=True,
    help="Directory of PGM frames",
)
@click.option(
    "--init",
    required=True,
    callback=_parse_point,
    help="Object center in the first frame (X,Y)",
)
@out_option
@click.option(
    "--save-config",
    type=click.Path(path_type=Path),
    help="Also write the effective tracker config (key=value)",
)
@tracker_options
@reports_errors
def track(
    frames_dir: Path,
    init: PatchCenter,
    save_config: Path | None,
    out: Path | None,
    config_file: Path | None,
    **overrides: Any,
) -> None:
    """Predict the motion direction of an object across a frame sequence."""
    config = _tracker_config(config_file, **overrides)
    if save_config is not None:
        atomic_write_text(save_config, dump_tracker_config(config))
    frames = read_sequence(frames_dir)
    if len(frames) < 2:
        raise InputError(f"{frames_dir} holds {len(frames)} PGM frames, need at least 2")

    records, _ = track_sequence(frames, init, config)
    lost = sum(not r.found for r in records)
    if lost:
        click.echo(f"No match above threshold in {lost} of {len(records)} frames", err=True)
    _emit(TRACK_HEADER, track_rows(records), out)


@cli.command()
@click.option(
    "--spec",
    "spec_file",
    type=click.Path(path_type=Path),
    required=True,
    help="Sequence spec (JSON)",
)
@click.option(
    "--repetitions",
    type=click.IntRange(min=3),
    default=3,
    show_default=True,
    help="Timed passes per tracker; the median is reported",
)
@out_option
@tracker_options
@reports_errors
def bench(
    spec_file: Path,
    repetitions: int,
    out: Path | None,
    config_file: Path | None,
    **overrides: Any,
) -> None:
    """Compare the direction predictor with the exhaustive sliding-window search."""
    config = _tracker_config(config_file, **overrides)
    spec = load_sequence_spec(spec_file)
    report = run_benchmark(spec, config, repetitions=repetitions)
    _emit(METRICS_HEADER, [metrics_row(report, config, spec)], out)


@cli.command("conv-check")
@click.option(
    "--seed",
    type=int,
    default=0,
    show_default=True,
    help=f"Random seed ({SEED_ENV} takes precedence)",
)
@click.option(
    "--trials",
    type=click.IntRange(min=1),
    default=100,
    show_default=True,
    help="Random instances per property",
)
@reports_errors
def conv_check(seed: int, trials: int) -> None:
    """Check the convolution core against brute-force and analytic oracles."""
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError:
            raise click.UsageError(f"{SEED_ENV} must be an integer, got {env_seed!r}") from None

    results = run_checks(seed, trials)
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        line = f"{status} {result.name} ({result.trials - result.failures}/{result.trials})"
        if result.detail:
            line += f": {result.detail}"
        click.echo(line)

    failed = [r.name for r in results if not r.passed]
    if failed:
        raise PropertyFailure(f"{len(failed)} properties failed (seed {seed}): {', '.join(failed)}")


@cli.command()
@with_netspec
@out_option
@reports_errors
def opcount(spec_file: Path | None, bytes_per_weight: int, out: Path | None) -> None:
    """Per-layer operation and parameter counts, standard versus separable."""
    net = _netspec(spec_file, bytes_per_weight)
    _emit(OPCOUNT_HEADER, opcount_rows(net), out)


@cli.command()
@with_netspec
@click.option("--fo", type=float, required=True, help="Inferences per second")
@click.option("--eo", type=float, required=True, help="Energy per operation (J)")
@click.option("--ops", type=float, help="Operations per inference (default: counted from spec)")
@click.option("--battery", type=float, required=True, help="Power available for compute (W)")
@click.option("--ram", type=int, required=True, help="Available RAM (bytes)")
@out_option
@reports_errors
def budget(
    spec_file: Path | None,
    bytes_per_weight: int,
    fo: float,
    eo: float,
    ops: float | None,
    battery: float,
    ram: int,
    out: Path | None,
) -> None:
    """Power draw and memory footprint against the onboard budget."""
    net = _netspec(spec_file, bytes_per_weight)
    n_ops = float(net_ops(net)) if ops is None else ops
    report = budget_report(PowerParams(f_o=fo, n_ops=n_ops, e_o=eo), battery, net, ram)
    _emit(BUDGET_HEADER, [budget_row(report)], out)
    for note in report.notes:
        click.echo(f"note: {note}", err=True)


def _pipeline_workload(
    stage: str,
    count: int,
    stage_ms: float,
    seed: int,
) -> tuple[Callable[[Frame], Any], list[Frame]]:
    """Stage callable and frames for a pipeline throughput run."""
    if stage == "spin":
        blank = np.zeros((8, 8))
        return make_spin_stage(stage_ms), [Frame(pixels=blank, seq=i) for i in range(count)]

    if stage == "search":
        spec = SequenceSpec(walk=WalkSpec(frames=count), seed=seed)
        frames, truth = gen_sequence(spec)
        template = extract_patch(frames[0], truth.centers[0], TrackerConfig().half)
        return SearchStage(template), frames

    rng = np.random.default_rng(seed)
    frames = [Frame(pixels=rng.random((64, 64)), seq=i) for i in range(count)]
    dk = DepthwiseKernel(data=rng.standard_normal((3, 3, 1)))
    pk = PointwiseKernel(data=rng.standard_normal((1, 8)))
    return SeparableStage(dk, pk), frames


@cli.command("pipeline-bench")
@click.option(
    "--workers",
    default="1,2,4",
    callback=_parse_int_list,
    show_default=True,
    help="Comma-separated worker counts",
)
@click.option(
    "--frames",
    "frame_count",
    type=click.IntRange(min=1),
    default=200,
    show_default=True,
    help="Frames per run",
)
@click.option(
    "--stage",
    type=click.Choice(["spin", "search", "separable"]),
    default="spin",
    show_default=True,
    help="Per-frame work",
)
@click.option(
    "--stage-ms",
    type=click.FloatRange(min=0),
    default=10.0,
    show_default=True,
    help="Busy time per frame for the spin stage",
)
@click.option(
    "--backend",
    type=click.Choice(["thread", "process"]),
    default="process",
    show_default=True,
    help="Workers as threads or processes",
)
@click.option(
    "--capacity",
    type=click.IntRange(min=1),
    default=8,
    show_default=True,
    help="Job queue capacity",
)
@out_option
@reports_errors
def pipeline_bench(
    workers: list[int],
    frame_count: int,
    stage: str,
    stage_ms: float,
    backend: str,
    capacity: int,
    out: Path | None,
) -> None:
    """Throughput of the ordered multi-worker pipeline for each worker count."""
    stage_fn, frames = _pipeline_workload(stage, frame_count, stage_ms, seed=0)
    stats = measure_scaling(workers, frames, stage_fn, backend=backend, queue_capacity=capacity)
    _emit(RUNSTATS_HEADER, runstats_rows(stats), out)


@cli.command("gen-data")
@click.option(
    "--spec",
    "spec_file",
    type=click.Path(path_type=Path),
    required=True,
    help="Sequence spec (JSON)",
)
@click.option(
    "--out",
    type=click.Path(path_type=Path),
    required=True,
    help="Output directory",
)
@click.option(
    "--dead-zone",
    type=float,
    default=0.5,
    show_default=True,
    help="Displacement treated as stationary in the ground truth",
)
@reports_errors
def gen_data(spec_file: Path, out: Path, dead_zone: float) -> None:
    """Write a synthetic PGM sequence and its ground truth."""
    spec = load_sequence_spec(spec_file)
    frames, truth = gen_sequence(spec, dead_zone=dead_zone)
    writer = write_sequence(frames, out)
    writer.write_ground_truth(GROUND_TRUTH_HEADER, ground_truth_rows(truth))
    save_sequence_spec(spec, out / writer.SPEC_NAME)
    click.echo(
        f"Wrote {len(writer.list_frames())} frames, {writer.GROUND_TRUTH_NAME} "
        f"and {writer.SPEC_NAME} → {out}"
    )


if __name__ == "__main__":
    cli()
