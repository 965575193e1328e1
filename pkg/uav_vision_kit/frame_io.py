"""Binary PGM (P5) codec and frame-sequence directories."""

import logging
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from .models import Frame
from .outputs import SequenceWriter, atomic_write_bytes

logger = logging.getLogger(__name__)

PGM_MAGIC = b"P5"
PGM_MAXVAL = 255


class MalformedHeader(ValueError):
    """Raised when a PGM header cannot be parsed."""


class TruncatedData(ValueError):
    """Raised when a PGM file holds fewer pixel bytes than its header promises."""


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read count whitespace-separated header tokens, skipping '#' comments.

    Returns the tokens and the offset of the single whitespace byte that ends
    the header.
    """
    tokens: list[bytes] = []
    pos = 0
    size = len(data)

    while len(tokens) < count:
        while pos < size and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= size:
            raise MalformedHeader("unexpected end of header")
        if data[pos : pos + 1] == b"#":
            end = data.find(b"\n", pos)
            if end < 0:
                raise MalformedHeader("unterminated comment in header")
            pos = end + 1
            continue
        start = pos
        while pos < size and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])

    if pos >= size:
        raise MalformedHeader("missing whitespace after maxval")
    return tokens, pos


def decode_pgm(data: bytes, seq: int = 0) -> Frame:
    """Decode binary PGM bytes into a frame with luminance byte/255."""
    tokens, pos = _header_tokens(data, 4)
    magic, width_tok, height_tok, maxval_tok = tokens

    if magic != PGM_MAGIC:
        raise MalformedHeader(f"unsupported magic {magic!r}, expected P5")
    try:
        width, height, maxval = int(width_tok), int(height_tok), int(maxval_tok)
    except ValueError as e:
        raise MalformedHeader(f"non-numeric header field: {e}") from e
    if width < 1 or height < 1:
        raise MalformedHeader(f"invalid dimensions {width}x{height}")
    if maxval != PGM_MAXVAL:
        raise MalformedHeader(f"unsupported maxval {maxval}, expected {PGM_MAXVAL}")

    body = data[pos + 1 :]
    expected = width * height
    if len(body) < expected:
        raise TruncatedData(f"expected {expected} pixel bytes, found {len(body)}")

    raw = np.frombuffer(body[:expected], dtype=np.uint8).reshape(height, width)
    return Frame(pixels=raw.astype(np.float64) / PGM_MAXVAL, seq=seq)


def encode_pgm(frame: Frame) -> bytes:
    """Encode a frame as binary PGM with a canonical header."""
    header = f"P5\n{frame.width} {frame.height}\n{PGM_MAXVAL}\n".encode("ascii")
    raw = np.rint(frame.pixels * PGM_MAXVAL).astype(np.uint8)
    return header + raw.tobytes()


def read_frame_pgm(path: Path, seq: int = 0) -> Frame:
    """Read a frame from a P5 file."""
    return decode_pgm(Path(path).read_bytes(), seq=seq)


def write_frame_pgm(frame: Frame, path: Path) -> None:
    """Write a frame to a P5 file atomically."""
    atomic_write_bytes(Path(path), encode_pgm(frame))


def list_sequence(directory: Path) -> list[Path]:
    """PGM files in directory, ordered lexicographically."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"frame directory not found: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix == ".pgm" and p.is_file())


def read_sequence(directory: Path) -> list[Frame]:
    """Read every frame of a sequence directory; seq follows file order."""
    paths = list_sequence(directory)
    logger.debug("reading %d frames from %s", len(paths), directory)
    return [read_frame_pgm(path, seq=index) for index, path in enumerate(paths)]


def write_sequence(frames: Sequence[Frame], directory: Path) -> SequenceWriter:
    """Write frames as frame_000001.pgm, frame_000002.pgm, ..."""
    writer = SequenceWriter(Path(directory))
    for index, frame in enumerate(frames):
        writer.write_frame(index, encode_pgm(frame))
    stale = writer.remove_stale(len(frames))
    if stale:
        logger.info("removed %d stale frames from %s", len(stale), directory)
    return writer
