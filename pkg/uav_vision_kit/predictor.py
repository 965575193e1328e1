"""Layered greedy search for the moving object and direction quantization."""

import logging
import math
from collections import deque
from collections.abc import Sequence

import numpy as np

from .frames import extract_patch, patch_fits, score_candidates
from .models import (
    Direction,
    Frame,
    Layer,
    Patch,
    PatchCenter,
    SearchOutcome,
    TrackerConfig,
    TrackerState,
    TrackRecord,
)

logger = logging.getLogger(__name__)


class EmptyLayer(ValueError):
    """Raised when max_correlation is given no candidates."""


def ring_offsets(distance: int) -> list[tuple[int, int]]:
    """Offsets at Chebyshev distance exactly `distance`, row-major order.

    Top row left to right, then each middle row's left and right ends, then
    the bottom row.
    """
    if distance == 0:
        return [(0, 0)]

    offsets = [(dx, -distance) for dx in range(-distance, distance + 1)]
    for dy in range(-distance + 1, distance):
        offsets.append((-distance, dy))
        offsets.append((distance, dy))
    offsets.extend((dx, distance) for dx in range(-distance, distance + 1))
    return offsets


def layer_centers(x: int, y: int, r: int, stride: int, frame: Frame, half: int) -> Layer:
    """Centers on the ring of radius r around (x, y), spaced stride apart, whose patch fits.

    Every center sits at Chebyshev distance r*stride from the seed; an unclipped
    layer holds 8r centers.
    """
    if r < 0:
        raise ValueError(f"layer radius must be >= 0, got {r}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")

    centers = tuple(
        PatchCenter(x=x + dx * stride, y=y + dy * stride)
        for dx, dy in ring_offsets(r)
        if patch_fits(frame, x + dx * stride, y + dy * stride, half)
    )
    return Layer(seed=PatchCenter(x=x, y=y), radius=r, centers=centers)


def max_correlation(
    candidates: Layer,
    template: Patch,
    frame: Frame,
) -> tuple[PatchCenter, float]:
    """Best-scoring candidate; ties go to the first in enumeration order."""
    if not candidates.centers:
        raise EmptyLayer(f"layer {candidates.radius} around {candidates.seed} is empty")

    scores = score_candidates(frame, candidates.centers, template)
    best = int(np.argmax(scores))
    return candidates.centers[best], float(scores[best])


def seed_of(state: TrackerState) -> tuple[int, int]:
    """Integer seed from the smoothed center (round half up)."""
    return math.floor(state.x0 + 0.5), math.floor(state.y0 + 0.5)


def bfs_search(state: TrackerState, frame: Frame) -> SearchOutcome:
    """Greedy layered search around the smoothed center.

    Each popped layer is re-centered on its best candidate: if that score
    clears the threshold the candidate is returned, otherwise the next layer
    (radius r+1) around it is queued. Stops when r exceeds max_radius or a
    layer comes back empty.
    """
    config = state.config
    x, y = seed_of(state)

    r = 0
    reached = 0
    examined = 0
    best_score: float | None = None
    queue: deque[Layer] = deque([layer_centers(x, y, r, config.stride, frame, config.half)])

    while queue:
        layer = queue.popleft()
        if not layer.centers:
            break

        center, score = max_correlation(layer, state.template, frame)
        examined += len(layer)
        reached = r
        best_score = score if best_score is None else max(best_score, score)

        if score > config.threshold:
            return SearchOutcome(
                found=True,
                center=center,
                score=score,
                layer_reached=r,
                candidates_examined=examined,
            )

        r += 1
        if r > config.max_radius:
            break
        queue.append(layer_centers(center.x, center.y, r, config.stride, frame, config.half))

    logger.debug(
        "search from (%d, %d) gave up at layer %d after %d candidates", x, y, reached, examined
    )
    return SearchOutcome(
        found=False,
        score=best_score,
        layer_reached=reached,
        candidates_examined=examined,
    )


def update_center(state: TrackerState, p: int, q: int) -> TrackerState:
    """Exponentially smooth the background center toward (p, q)."""
    return state.model_copy(
        update={
            "x0": state.alpha * p + (1.0 - state.alpha) * state.x0,
            "y0": state.beta * q + (1.0 - state.beta) * state.y0,
        }
    )


def quantize_direction(dx: float, dy: float, dead_zone: float) -> Direction:
    """Dominant-axis direction of a displacement (image coordinates, +y down)."""
    if max(abs(dx), abs(dy)) <= dead_zone:
        return Direction.STATIONARY
    if abs(dx) >= abs(dy):
        return Direction.RIGHT if dx > 0 else Direction.LEFT
    return Direction.BOTTOM if dy > 0 else Direction.TOP


def track_step(
    state: TrackerState,
    frame: Frame,
) -> tuple[Direction, TrackerState, SearchOutcome]:
    """Search one frame, smooth the center and report the direction of motion."""
    outcome = bfs_search(state, frame)
    if not outcome.found or outcome.center is None:
        return Direction.STATIONARY, state, outcome

    p, q = outcome.center.x, outcome.center.y
    # displacement is taken against the center before smoothing
    dx, dy = p - state.x0, q - state.y0
    new_state = update_center(state, p, q)
    return quantize_direction(dx, dy, state.config.dead_zone), new_state, outcome


def init_tracker(frame: Frame, center: PatchCenter, config: TrackerConfig) -> TrackerState:
    """Cut the reference template at center; raises OutOfBounds if it does not fit."""
    template = extract_patch(frame, center, config.half)
    return TrackerState(x0=float(center.x), y0=float(center.y), template=template, config=config)


def track_sequence(
    frames: Sequence[Frame],
    center: PatchCenter,
    config: TrackerConfig,
) -> tuple[list[TrackRecord], TrackerState]:
    """Track frames[1:] starting from a template cut out of frames[0]."""
    if not frames:
        raise ValueError("cannot track an empty sequence")

    state = init_tracker(frames[0], center, config)
    records: list[TrackRecord] = []

    for frame in frames[1:]:
        direction, state, outcome = track_step(state, frame)
        records.append(
            TrackRecord(
                seq=frame.seq,
                direction=direction,
                p=outcome.center.x if outcome.center else None,
                q=outcome.center.y if outcome.center else None,
                score=outcome.score,
                layer_reached=outcome.layer_reached,
                candidates_examined=outcome.candidates_examined,
                found=outcome.found,
            )
        )

    return records, state
