"""Data models for frames, tracking state and benchmark results."""

from enum import Enum
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


def frozen_array(value: object, ndim: int) -> np.ndarray:
    """Copy value into a read-only float64 array of the given rank."""
    arr = np.array(value, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("array contains non-finite values")
    arr.setflags(write=False)
    return arr


class Direction(str, Enum):
    TOP = "Top"
    BOTTOM = "Bottom"
    LEFT = "Left"
    RIGHT = "Right"
    STATIONARY = "Stationary"


class Frame(BaseModel):
    """A grayscale image with luminance in [0, 1], stored row-major as (height, width)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    pixels: np.ndarray
    seq: int = Field(default=0, ge=0)

    @field_validator("pixels", mode="before")
    @classmethod
    def _check_pixels(cls, value: object) -> np.ndarray:
        arr = frozen_array(value, ndim=2)
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("frame must be at least 1x1")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("luminance must lie in [0, 1]")
        return arr

    @classmethod
    def from_flat(cls, width: int, height: int, values: list[float], seq: int = 0) -> "Frame":
        """Build a frame from a row-major list of width*height luminance values."""
        if len(values) != width * height:
            raise ValueError(f"expected {width * height} values, got {len(values)}")
        return cls(pixels=np.asarray(values, dtype=np.float64).reshape(height, width), seq=seq)

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])


class PatchCenter(BaseModel):
    """Integer pixel position; y grows downward."""

    model_config = ConfigDict(frozen=True)

    x: int
    y: int


class Patch(BaseModel):
    """A (2h+1) x (2h+1) window cut around a center."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    center: PatchCenter
    half: int = Field(ge=1)
    pixels: np.ndarray

    @field_validator("pixels", mode="before")
    @classmethod
    def _check_pixels(cls, value: object) -> np.ndarray:
        return frozen_array(value, ndim=2)

    @model_validator(mode="after")
    def _check_size(self) -> "Patch":
        side = 2 * self.half + 1
        if self.pixels.shape != (side, side):
            raise ValueError(f"patch with half={self.half} must be {side}x{side}")
        return self

    @property
    def side(self) -> int:
        return 2 * self.half + 1


class TrackerConfig(BaseModel):
    """Direction predictor parameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    alpha: float = Field(default=0.8, ge=0.0, le=1.0)
    beta: float = Field(default=0.8, ge=0.0, le=1.0)
    threshold: float = Field(default=0.8, gt=-1.0, le=1.0)
    stride: int = Field(default=1, ge=1)
    max_radius: int = Field(default=16, ge=0)
    half: int = Field(default=15, ge=1)
    dead_zone: float = Field(default=0.5, ge=0.0)


class TrackerState(BaseModel):
    """Smoothed background center plus the fixed reference template."""

    model_config = ConfigDict(frozen=True)

    x0: float
    y0: float
    template: Patch
    config: TrackerConfig = Field(default_factory=TrackerConfig)

    @model_validator(mode="after")
    def _check_template(self) -> "TrackerState":
        if self.template.half != self.config.half:
            raise ValueError(
                f"template half {self.template.half} does not match config half {self.config.half}"
            )
        return self

    @property
    def alpha(self) -> float:
        return self.config.alpha

    @property
    def beta(self) -> float:
        return self.config.beta

    @property
    def threshold(self) -> float:
        return self.config.threshold


class Layer(BaseModel):
    """Candidate centers on one Chebyshev ring around a seed."""

    model_config = ConfigDict(frozen=True)

    seed: PatchCenter
    radius: int = Field(ge=0)
    centers: tuple[PatchCenter, ...] = ()

    def __len__(self) -> int:
        return len(self.centers)


class SearchOutcome(BaseModel):
    """Result of one layered search; score is the best examined score when not found."""

    model_config = ConfigDict(frozen=True)

    found: bool
    center: PatchCenter | None = None
    score: float | None = None
    layer_reached: int = 0
    candidates_examined: int = 0

    @model_validator(mode="after")
    def _check_found(self) -> "SearchOutcome":
        if self.found and (self.center is None or self.score is None):
            raise ValueError("a found outcome needs a center and a score")
        return self


class TrackRecord(BaseModel):
    """One output row of the tracker."""

    model_config = ConfigDict(frozen=True)

    seq: int
    direction: Direction
    p: int | None = None
    q: int | None = None
    score: float | None = None
    layer_reached: int = 0
    candidates_examined: int = 0
    found: bool = True


class ObjectSpec(BaseModel):
    """Appearance of the synthetic object."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["blob", "checkerboard"] = "checkerboard"
    size: int = Field(default=15, ge=1)
    sigma: float = Field(default=1.5, gt=0.0)
    cell: int = Field(default=3, ge=1)
    contrast: float = Field(default=0.4, gt=0.0, le=0.5)

    @field_validator("size")
    @classmethod
    def _odd_size(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError("object size must be odd")
        return value


class WalkSpec(BaseModel):
    """Seeded random walk of axis-aligned segments with pauses."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    frames: int = Field(default=200, ge=1)
    speed: int = Field(default=1, ge=1)
    pause_probability: float = Field(default=0.25, ge=0.0, le=1.0)
    min_segment: int = Field(default=5, ge=1)
    max_segment: int = Field(default=20, ge=1)
    margin: int = Field(default=20, ge=0)


class SequenceSpec(BaseModel):
    """Synthetic sequence description; frame count is len(path) + 1."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    width: int = Field(default=320, ge=1)
    height: int = Field(default=240, ge=1)
    object: ObjectSpec = Field(default_factory=ObjectSpec)
    start: tuple[int, int] | None = None
    path: list[tuple[int, int]] = Field(default_factory=list)
    walk: WalkSpec | None = None
    background: float = Field(default=0.5, ge=0.0, le=1.0)
    noise_sigma: float = Field(default=0.0, ge=0.0)
    seed: int = 0

    @property
    def start_center(self) -> PatchCenter:
        if self.start is not None:
            return PatchCenter(x=self.start[0], y=self.start[1])
        return PatchCenter(x=self.width // 2, y=self.height // 2)


class GroundTruth(BaseModel):
    """Per-frame true centers and quantized true directions."""

    model_config = ConfigDict(frozen=True)

    centers: list[PatchCenter]
    directions: list[Direction]

    @model_validator(mode="after")
    def _check_lengths(self) -> "GroundTruth":
        if len(self.centers) != len(self.directions):
            raise ValueError("centers and directions must have the same length")
        return self

    def __len__(self) -> int:
        return len(self.centers)


class MetricsReport(BaseModel):
    """Predictor versus exhaustive baseline over one sequence."""

    model_config = ConfigDict(frozen=True)

    tpr: float | None = Field(default=None, ge=0.0, le=1.0)
    fpr: float | None = Field(default=None, ge=0.0, le=1.0)
    fps_predictor: float
    fps_baseline: float
    speedup: float = Field(gt=0.0)
    candidates_predictor: int
    candidates_baseline: int
    frames: int
    not_found: int = 0

    @property
    def candidate_ratio(self) -> float:
        if self.candidates_baseline == 0:
            return 0.0
        return self.candidates_predictor / self.candidates_baseline
