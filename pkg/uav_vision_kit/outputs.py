"""Atomic file writers for CSV reports and frame-sequence directories."""

import csv
import io
import os
import tempfile
from collections.abc import Iterable, Sequence
from pathlib import Path


def atomic_write_bytes(path: Path, data: bytes) -> None:
    """Write data to path through a temp file in the same directory and rename it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise


def atomic_write_text(path: Path, content: str) -> None:
    """Text variant of atomic_write_bytes (UTF-8)."""
    atomic_write_bytes(path, content.encode("utf-8"))


def render_csv(header: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    """Render a header and rows as CSV text."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> None:
    """Atomically write a CSV file."""
    atomic_write_text(path, render_csv(header, rows))


class SequenceWriter:
    """Persist a frame sequence as numbered PGM files plus a ground-truth CSV."""

    GROUND_TRUTH_NAME = "ground_truth.csv"
    SPEC_NAME = "sequence.json"

    def __init__(self, output_dir: Path):
        """
        Initialize the writer.

        Args:
            output_dir: Directory receiving frame_000001.pgm, ... and ground_truth.csv
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def frame_filename(index: int) -> str:
        """Zero-padded file name for the frame at position index (0-based)."""
        return f"frame_{index + 1:06d}.pgm"

    def write_frame(self, index: int, data: bytes) -> Path:
        """Write one encoded frame."""
        path = self.output_dir / self.frame_filename(index)
        atomic_write_bytes(path, data)
        return path

    def write_ground_truth(self, header: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
        """Write the ground-truth table."""
        path = self.output_dir / self.GROUND_TRUTH_NAME
        write_csv(path, header, rows)
        return path

    def list_frames(self) -> list[str]:
        """List frame files already present, in sequence order."""
        return sorted(f.name for f in self.output_dir.iterdir() if f.suffix == ".pgm")

    def remove_stale(self, keep: int) -> list[str]:
        """Delete .pgm files other than the first keep frames, so readers see only this sequence."""
        wanted = {self.frame_filename(index) for index in range(keep)}
        stale = [name for name in self.list_frames() if name not in wanted]
        for name in stale:
            (self.output_dir / name).unlink()
        return stale
