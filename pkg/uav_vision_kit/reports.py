"""CSV layouts for every report the toolkit writes."""

from collections.abc import Sequence
from fractions import Fraction

from .models import GroundTruth, MetricsReport, SequenceSpec, TrackerConfig, TrackRecord
from .opcount import (
    BudgetReport,
    NetSpec,
    layer_ops,
    net_ops,
    net_params,
    ops_separable,
    ops_standard,
    params_separable,
    params_standard,
    size_ratio,
)
from .pipeline import RunStats

Row = list[object]

TRACK_HEADER = [
    "seq",
    "direction",
    "p",
    "q",
    "score",
    "layer_reached",
    "candidates_examined",
]

GROUND_TRUTH_HEADER = ["seq", "true_x", "true_y", "true_direction"]

METRICS_HEADER = [
    "tpr",
    "fpr",
    "fps_predictor",
    "fps_baseline",
    "speedup",
    "candidates_predictor",
    "candidates_baseline",
    "candidate_ratio",
    "frames",
    "not_found",
    *(f"config_{key}" for key in TrackerConfig.model_fields),
    "seed",
    "width",
    "height",
    "noise_sigma",
]

OPCOUNT_HEADER = [
    "layer",
    "mode",
    "lk",
    "m",
    "n",
    "lf",
    "ops_standard",
    "ops_separable",
    "ops",
    "reduction_ratio",
    "reduction_exact",
    "params_standard",
    "params_separable",
    "bytes_standard",
    "bytes_separable",
    "size_ratio",
]

BUDGET_HEADER = [
    "p_w",
    "battery_w",
    "battery_fraction",
    "model_bytes",
    "ram_bytes",
    "ram_fraction",
    "notes",
]

RUNSTATS_HEADER = ["workers", "jobs", "wall_seconds", "fps", "hwm_inflight", "scaling"]


def fmt(value: object) -> str:
    """Render a cell; None is empty and floats keep full precision."""
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def track_rows(records: Sequence[TrackRecord]) -> list[Row]:
    return [
        [
            r.seq,
            r.direction.value,
            fmt(r.p),
            fmt(r.q),
            fmt(r.score),
            r.layer_reached,
            r.candidates_examined,
        ]
        for r in records
    ]


def ground_truth_rows(truth: GroundTruth) -> list[Row]:
    return [
        [seq, c.x, c.y, d.value]
        for seq, (c, d) in enumerate(zip(truth.centers, truth.directions))
    ]


def metrics_row(report: MetricsReport, config: TrackerConfig, spec: SequenceSpec) -> Row:
    """One row of metrics followed by the tracker config and sequence parameters."""
    return [
        fmt(report.tpr),
        fmt(report.fpr),
        fmt(report.fps_predictor),
        fmt(report.fps_baseline),
        fmt(report.speedup),
        report.candidates_predictor,
        report.candidates_baseline,
        fmt(report.candidate_ratio),
        report.frames,
        report.not_found,
        *(fmt(value) for value in config.model_dump().values()),
        spec.seed,
        spec.width,
        spec.height,
        fmt(spec.noise_sigma),
    ]


def opcount_rows(net: NetSpec) -> list[Row]:
    """Per-layer counts in both modes, then a total row."""
    bpw = net.bytes_per_weight
    rows: list[Row] = []
    for index, s in enumerate(net.layers, start=1):
        std, sep = ops_standard(s), ops_separable(s).total
        p_std, p_sep = params_standard(s), params_separable(s)
        ratio = Fraction(sep, std)
        rows.append(
            [
                index,
                s.mode,
                s.lk,
                s.m,
                s.n,
                s.lf,
                std,
                sep,
                layer_ops(s),
                fmt(float(ratio)),
                str(ratio),
                p_std,
                p_sep,
                p_std * bpw,
                p_sep * bpw,
                fmt(p_std / p_sep),
            ]
        )

    if net.layers:
        std, sep = net_ops(net, "standard"), net_ops(net, "separable")
        p_std, p_sep = net_params(net, "standard"), net_params(net, "separable")
        ratio = Fraction(sep, std)
        rows.append(
            [
                "total",
                "",
                "",
                "",
                "",
                "",
                std,
                sep,
                net_ops(net),
                fmt(float(ratio)),
                str(ratio),
                p_std,
                p_sep,
                p_std * bpw,
                p_sep * bpw,
                fmt(size_ratio(net)),
            ]
        )
    return rows


def budget_row(report: BudgetReport) -> Row:
    return [
        fmt(report.p_w),
        fmt(report.battery_w),
        fmt(report.battery_fraction),
        report.model_bytes,
        report.ram_bytes,
        fmt(report.ram_fraction),
        " | ".join(report.notes),
    ]


def runstats_rows(stats: Sequence[RunStats]) -> list[Row]:
    """One row per run; scaling is throughput relative to the first run."""
    if not stats:
        return []
    base = stats[0].fps
    return [
        [
            s.workers,
            s.jobs,
            fmt(s.wall_seconds),
            fmt(s.fps),
            s.hwm_inflight,
            fmt(s.fps / base if base > 0 else None),
        ]
        for s in stats
    ]
