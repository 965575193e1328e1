"""Patch extraction and zero-mean normalized cross-correlation."""

from collections.abc import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .models import Frame, Patch, PatchCenter

# A window is featureless when its centered energy is at most this fraction of its raw energy.
REL_ENERGY_EPS = 1e-20


class OutOfBounds(ValueError):
    """Raised when a patch window leaves the frame."""

    def __init__(self, center: PatchCenter, half: int, width: int, height: int):
        self.center = center
        self.half = half
        super().__init__(
            f"patch of half-size {half} at ({center.x}, {center.y}) "
            f"exceeds {width}x{height} frame"
        )


class DimensionMismatch(ValueError):
    """Raised when two patches differ in size."""


def patch_fits(frame: Frame, x: int, y: int, half: int) -> bool:
    """Check whether the (2h+1)-window around (x, y) lies inside the frame."""
    return half <= x < frame.width - half and half <= y < frame.height - half


def extract_patch(frame: Frame, center: PatchCenter, half: int) -> Patch:
    """Copy the window around center out of the frame."""
    if not patch_fits(frame, center.x, center.y, half):
        raise OutOfBounds(center, half, frame.width, frame.height)

    window = frame.pixels[
        center.y - half : center.y + half + 1,
        center.x - half : center.x + half + 1,
    ]
    return Patch(center=center, half=half, pixels=window)


def centered(values: np.ndarray) -> tuple[np.ndarray, float]:
    """Return zero-mean values and their energy (sum of squares).

    The energy is exactly 0 for a featureless window.
    """
    flat = np.asarray(values, dtype=np.float64).ravel()
    dev = flat - flat.mean()
    energy = float(np.dot(dev, dev))
    if energy <= REL_ENERGY_EPS * float(np.dot(flat, flat)):
        return dev, 0.0
    return dev, energy


def correlation(a: Patch, b: Patch) -> float:
    """Zero-mean NCC of two equally sized patches; 0 if either is featureless."""
    if a.pixels.shape != b.pixels.shape:
        raise DimensionMismatch(f"cannot correlate {a.pixels.shape} with {b.pixels.shape}")

    da, ea = centered(a.pixels)
    db, eb = centered(b.pixels)
    if ea == 0.0 or eb == 0.0:
        return 0.0

    score = float(np.dot(da, db)) / float(np.sqrt(ea * eb))
    return float(np.clip(score, -1.0, 1.0))


def score_candidates(
    frame: Frame,
    centers: Sequence[PatchCenter],
    template: Patch,
) -> np.ndarray:
    """NCC of the template against the window at every center, in one batch.

    All centers must already fit in the frame.
    """
    half = template.half
    if not centers:
        return np.zeros(0, dtype=np.float64)

    xs = np.fromiter((c.x for c in centers), dtype=np.intp, count=len(centers))
    ys = np.fromiter((c.y for c in centers), dtype=np.intp, count=len(centers))
    if (
        xs.min() < half
        or ys.min() < half
        or xs.max() >= frame.width - half
        or ys.max() >= frame.height - half
    ):
        bad = next(c for c in centers if not patch_fits(frame, c.x, c.y, half))
        raise OutOfBounds(bad, half, frame.width, frame.height)

    side = template.side
    view = sliding_window_view(frame.pixels, (side, side))
    windows = view[ys - half, xs - half].reshape(len(centers), -1)
    raw = np.einsum("ij,ij->i", windows, windows)
    windows = windows - windows.mean(axis=1, keepdims=True)
    energy = np.einsum("ij,ij->i", windows, windows)
    energy[energy <= REL_ENERGY_EPS * raw] = 0.0

    t_dev, t_energy = centered(template.pixels)
    if t_energy == 0.0:
        return np.zeros(len(centers), dtype=np.float64)

    numer = windows @ t_dev
    denom = np.sqrt(energy * t_energy)
    scores = np.zeros(len(centers), dtype=np.float64)
    np.divide(numer, denom, out=scores, where=energy > 0.0)
    return np.clip(scores, -1.0, 1.0)
