"""Synthetic sequences, the exhaustive sliding-window baseline and tracker metrics."""

import logging
import time
from collections.abc import Callable, Sequence
from typing import TypeVar

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.signal import fftconvolve

from .frames import centered, extract_patch
from .models import (
    Direction,
    Frame,
    GroundTruth,
    MetricsReport,
    ObjectSpec,
    Patch,
    PatchCenter,
    SequenceSpec,
    TrackerConfig,
    TrackRecord,
    WalkSpec,
)
from .predictor import quantize_direction, track_sequence

logger = logging.getLogger(__name__)

MIN_REPETITIONS = 3

# Window energy at or below this fraction of the frame energy counts as featureless.
BOX_ENERGY_EPS = 1e-12

T = TypeVar("T")

_AXIS_STEPS = ((1, 0), (-1, 0), (0, 1), (0, -1))


class PathExitsFrame(ValueError):
    """Raised when the object would leave the frame along its path."""

    def __init__(self, index: int, center: PatchCenter):
        self.index = index
        self.center = center
        super().__init__(
            f"object leaves the frame at frame {index}, center ({center.x}, {center.y})"
        )


class TemplateTooLarge(ValueError):
    """Raised when a template does not fit in the frame at all."""


class LengthMismatch(ValueError):
    """Raised when predictions and ground truth differ in length."""


class BenchInvariantError(AssertionError):
    """Raised when a benchmark run violates a candidate-count guarantee."""


class ExhaustiveResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    center: PatchCenter
    score: float
    candidates: int


def render_object(obj: ObjectSpec) -> np.ndarray:
    """Signed luminance offsets of the object, shape (size, size)."""
    half = obj.size // 2
    coords = np.arange(-half, half + 1)
    if obj.kind == "blob":
        xx, yy = np.meshgrid(coords, coords)
        return obj.contrast * np.exp(-(xx**2 + yy**2) / (2.0 * obj.sigma**2))

    cells = (np.arange(obj.size) // obj.cell) % 2
    parity = cells[:, None] ^ cells[None, :]
    return np.where(parity == 0, obj.contrast, -obj.contrast)


def random_walk_path(
    walk: WalkSpec,
    start: PatchCenter,
    width: int,
    height: int,
    rng: np.random.Generator,
) -> list[tuple[int, int]]:
    """Axis-aligned segments and pauses; a step that would cross the margin turns back."""
    if walk.max_segment < walk.min_segment:
        raise ValueError("max_segment must be >= min_segment")
    lo_x, hi_x = walk.margin, width - 1 - walk.margin
    lo_y, hi_y = walk.margin, height - 1 - walk.margin
    if not (lo_x <= start.x <= hi_x and lo_y <= start.y <= hi_y):
        raise PathExitsFrame(0, start)

    x, y = start.x, start.y
    path: list[tuple[int, int]] = []
    steps = walk.frames - 1

    while len(path) < steps:
        length = int(rng.integers(walk.min_segment, walk.max_segment + 1))
        if rng.random() < walk.pause_probability:
            step = (0, 0)
        else:
            ux, uy = _AXIS_STEPS[int(rng.integers(len(_AXIS_STEPS)))]
            step = (ux * walk.speed, uy * walk.speed)

        for _ in range(min(length, steps - len(path))):
            dx, dy = step
            if not (lo_x <= x + dx <= hi_x and lo_y <= y + dy <= hi_y):
                dx, dy = -dx, -dy
                step = (dx, dy)
            x, y = x + dx, y + dy
            path.append((dx, dy))

    return path


def resolve_path(spec: SequenceSpec) -> list[tuple[int, int]]:
    """Explicit path, or the seeded random walk when the spec describes one."""
    if spec.walk is None:
        return list(spec.path)
    if spec.path:
        raise ValueError("a sequence spec takes either an explicit path or a walk, not both")
    rng = np.random.default_rng([spec.seed, 0])
    return random_walk_path(spec.walk, spec.start_center, spec.width, spec.height, rng)


def gen_sequence(spec: SequenceSpec, dead_zone: float = 0.5) -> tuple[list[Frame], GroundTruth]:
    """Render the object along its path; frame 0 sits at the start center.

    Noise is drawn from a generator seeded by spec.seed, added, then clamped to [0, 1].
    """
    obj = render_object(spec.object)
    half = spec.object.size // 2
    path = resolve_path(spec)

    center = spec.start_center
    centers = [center]
    for dx, dy in path:
        center = PatchCenter(x=center.x + dx, y=center.y + dy)
        centers.append(center)

    for index, c in enumerate(centers):
        if not (half <= c.x < spec.width - half and half <= c.y < spec.height - half):
            raise PathExitsFrame(index, c)

    noise_rng = np.random.default_rng([spec.seed, 1])
    frames: list[Frame] = []
    for index, c in enumerate(centers):
        image = np.full((spec.height, spec.width), spec.background, dtype=np.float64)
        image[c.y - half : c.y + half + 1, c.x - half : c.x + half + 1] += obj
        if spec.noise_sigma > 0:
            image += noise_rng.normal(0.0, spec.noise_sigma, size=image.shape)
        frames.append(Frame(pixels=np.clip(image, 0.0, 1.0), seq=index))

    directions = [Direction.STATIONARY]
    directions.extend(quantize_direction(dx, dy, dead_zone) for dx, dy in path)
    return frames, GroundTruth(centers=centers, directions=directions)


def _box_sums(values: np.ndarray, side: int) -> np.ndarray:
    """Sum over every side x side window, shape (H-side+1, W-side+1)."""
    table = np.zeros((values.shape[0] + 1, values.shape[1] + 1), dtype=np.float64)
    np.cumsum(np.cumsum(values, axis=0), axis=1, out=table[1:, 1:])
    return (
        table[side:, side:] - table[:-side, side:] - table[side:, :-side] + table[:-side, :-side]
    )


def exhaustive_search(template: Patch, frame: Frame) -> ExhaustiveResult:
    """NCC argmax over every valid center of the frame; ties go to the first in row-major order."""
    half = template.half
    side = template.side
    if side > frame.width or side > frame.height:
        raise TemplateTooLarge(
            f"{side}x{side} template does not fit in {frame.width}x{frame.height} frame"
        )

    rows, cols = frame.height - 2 * half, frame.width - 2 * half
    scores = np.zeros((rows, cols), dtype=np.float64)

    t_dev, t_energy = centered(template.pixels)
    if t_energy > 0.0:
        # NCC is offset invariant; removing the global mean keeps the box sums well conditioned
        image = frame.pixels - frame.pixels.mean()
        n = side * side
        numer = fftconvolve(image, t_dev.reshape(side, side)[::-1, ::-1], mode="valid")
        sums = _box_sums(image, side)
        squares = image * image
        energy = np.maximum(_box_sums(squares, side) - sums * sums / n, 0.0)
        floor = BOX_ENERGY_EPS * float(squares.sum())
        np.divide(numer, np.sqrt(energy * t_energy), out=scores, where=energy > floor)
        np.clip(scores, -1.0, 1.0, out=scores)

    best = int(np.argmax(scores))
    row, col = divmod(best, cols)
    return ExhaustiveResult(
        center=PatchCenter(x=col + half, y=row + half),
        score=float(scores[row, col]),
        candidates=rows * cols,
    )


def eval_directions(
    predicted: Sequence[Direction],
    truth: GroundTruth,
) -> tuple[float | None, float | None]:
    """Per-frame TPR over motion frames and FPR over stationary frames.

    A ratio with an empty denominator is None.
    """
    if len(predicted) != len(truth.directions):
        raise LengthMismatch(
            f"{len(predicted)} predictions for {len(truth.directions)} ground-truth frames"
        )

    motion = hits = stationary = false_alarms = 0
    for guess, actual in zip(predicted, truth.directions):
        if actual == Direction.STATIONARY:
            stationary += 1
            false_alarms += guess != Direction.STATIONARY
        else:
            motion += 1
            hits += guess == actual

    tpr = hits / motion if motion else None
    fpr = false_alarms / stationary if stationary else None
    return tpr, fpr


def check_candidate_bounds(
    records: Sequence[TrackRecord],
    baseline_candidates: int,
    stride: int,
) -> None:
    """Assert the per-frame layer budget and the reduction against the full scan."""
    for record in records:
        r = record.layer_reached
        if record.candidates_examined > 1 + 4 * r * (r + 1):
            raise BenchInvariantError(
                f"frame {record.seq}: {record.candidates_examined} candidates exceed "
                f"the budget for layer {r}"
            )
        if (
            record.found
            and (2 * r * stride + 1) ** 2 < baseline_candidates
            and record.candidates_examined >= baseline_candidates
        ):
            raise BenchInvariantError(
                f"frame {record.seq}: search examined {record.candidates_examined} candidates, "
                f"no fewer than the {baseline_candidates} of a full scan"
            )


def oracle_mismatches(
    records: Sequence[TrackRecord],
    baseline: Sequence[ExhaustiveResult],
    threshold: float,
) -> list[int]:
    """Seqs where the full scan clears the threshold but the search found another center."""
    mismatched = []
    for record, oracle in zip(records, baseline, strict=True):
        if oracle.score > threshold and (record.p, record.q) != (oracle.center.x, oracle.center.y):
            mismatched.append(record.seq)
    return mismatched


def _timed(fn: Callable[[], T], repetitions: int) -> tuple[T, float]:
    """Last result of fn and the median wall time over the repetitions."""
    durations: list[float] = []
    for _ in range(repetitions):
        started = time.perf_counter()
        result = fn()
        durations.append(time.perf_counter() - started)
    return result, float(np.median(durations))


def run_benchmark(
    spec: SequenceSpec,
    config: TrackerConfig,
    repetitions: int = MIN_REPETITIONS,
) -> MetricsReport:
    """Track a generated sequence with the predictor and the full scan; report median FPS."""
    if repetitions < MIN_REPETITIONS:
        raise ValueError(f"need at least {MIN_REPETITIONS} repetitions, got {repetitions}")

    frames, truth = gen_sequence(spec, dead_zone=config.dead_zone)
    if len(frames) < 2:
        raise ValueError("a benchmark sequence needs at least two frames")

    start = truth.centers[0]
    template = extract_patch(frames[0], start, config.half)
    tracked = frames[1:]

    (records, _), predictor_seconds = _timed(
        lambda: track_sequence(frames, start, config), repetitions
    )
    baseline, baseline_seconds = _timed(
        lambda: [exhaustive_search(template, frame) for frame in tracked], repetitions
    )
    logger.debug(
        "predictor %.4fs, baseline %.4fs per pass over %d frames",
        predictor_seconds,
        baseline_seconds,
        len(tracked),
    )

    per_frame_baseline = baseline[0].candidates
    check_candidate_bounds(records, per_frame_baseline, config.stride)

    tail = GroundTruth(centers=truth.centers[1:], directions=truth.directions[1:])
    tpr, fpr = eval_directions([r.direction for r in records], tail)

    fps_predictor = len(tracked) / predictor_seconds if predictor_seconds > 0 else float("inf")
    fps_baseline = len(tracked) / baseline_seconds if baseline_seconds > 0 else float("inf")
    return MetricsReport(
        tpr=tpr,
        fpr=fpr,
        fps_predictor=fps_predictor,
        fps_baseline=fps_baseline,
        speedup=fps_predictor / fps_baseline,
        candidates_predictor=sum(r.candidates_examined for r in records),
        candidates_baseline=sum(b.candidates for b in baseline),
        frames=len(tracked),
        not_found=sum(not r.found for r in records),
    )
