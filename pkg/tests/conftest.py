"""Pytest fixtures for uav-vision-kit tests."""

from collections.abc import Callable
from pathlib import Path

import numpy as np
import pytest

from uav_vision_kit.frames import extract_patch
from uav_vision_kit.models import (
    Frame,
    ObjectSpec,
    Patch,
    PatchCenter,
    SequenceSpec,
    TrackerConfig,
    WalkSpec,
)

CONFIGS_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def configs_dir() -> Path:
    """Directory of the shipped sample inputs."""
    return CONFIGS_DIR


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded random generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def noise_frame(rng: np.random.Generator) -> Frame:
    """A 50x40 frame of uniform noise."""
    return Frame(pixels=rng.random((40, 50)))


@pytest.fixture
def uniform_frame() -> Frame:
    """A featureless 40x40 frame."""
    return Frame(pixels=np.full((40, 40), 0.5))


@pytest.fixture
def small_config() -> TrackerConfig:
    """Tracker config with a 7x7 template."""
    return TrackerConfig(half=3, max_radius=3)


@pytest.fixture
def noise_template(noise_frame: Frame) -> Patch:
    """A 7x7 patch cut out of the noise frame."""
    return extract_patch(noise_frame, PatchCenter(x=25, y=20), 3)


@pytest.fixture
def blob() -> ObjectSpec:
    """Gaussian blob whose correlation falls off smoothly with distance."""
    return ObjectSpec(kind="blob", sigma=1.5, contrast=0.4)


@pytest.fixture
def checkerboard() -> ObjectSpec:
    """Checkerboard with 3-pixel cells."""
    return ObjectSpec(kind="checkerboard", cell=3, contrast=0.4)


@pytest.fixture
def make_spec() -> Callable[..., SequenceSpec]:
    """Factory for small synthetic sequence specs."""

    def _make(**overrides: object) -> SequenceSpec:
        fields: dict[str, object] = {"width": 160, "height": 120, "seed": 3}
        fields.update(overrides)
        return SequenceSpec.model_validate(fields)

    return _make


@pytest.fixture
def walk_spec(checkerboard: ObjectSpec) -> SequenceSpec:
    """Clean 60-frame random walk of the checkerboard."""
    return SequenceSpec(
        width=160,
        height=120,
        object=checkerboard,
        walk=WalkSpec(frames=60, margin=30),
        seed=11,
    )
