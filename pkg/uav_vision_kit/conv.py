"""Standard, depthwise, pointwise and separable convolution with exact MAC counts.

Feature maps are (h, w, c) arrays, so the flat index is (y*w + x)*c + m.
Kernels are (lk, lk, m, n), (lk, lk, m) and (m, n). All convolutions keep the
spatial size by zero-padding (lk-1)/2 on each border, and every tap of the
window is counted as a multiply-accumulate, padding included.
"""

import struct
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from .models import frozen_array
from .outputs import atomic_write_bytes

UVK_MAGIC = b"UVK1"


class ChannelMismatch(ValueError):
    """Raised when channel counts of operands disagree."""


class EvenKernel(ValueError):
    """Raised for kernels without a center tap."""


class CodecError(ValueError):
    """Raised when a UVK1 blob cannot be decoded."""


class _ArrayModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    data: np.ndarray


class Tensor3(_ArrayModel):
    """Feature map of shape (h, w, c)."""

    @field_validator("data", mode="before")
    @classmethod
    def _check(cls, value: object) -> np.ndarray:
        arr = frozen_array(value, ndim=3)
        if min(arr.shape) < 1:
            raise ValueError(f"tensor dimensions must be >= 1, got {arr.shape}")
        return arr

    @property
    def h(self) -> int:
        return int(self.data.shape[0])

    @property
    def w(self) -> int:
        return int(self.data.shape[1])

    @property
    def c(self) -> int:
        return int(self.data.shape[2])


def _square_spatial(arr: np.ndarray) -> np.ndarray:
    if arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise ValueError(f"kernel must be square with lk >= 1, got {arr.shape[:2]}")
    return arr


class Kernel4(_ArrayModel):
    """Standard kernel K of shape (lk, lk, m, n)."""

    @field_validator("data", mode="before")
    @classmethod
    def _check(cls, value: object) -> np.ndarray:
        return _square_spatial(frozen_array(value, ndim=4))

    @property
    def lk(self) -> int:
        return int(self.data.shape[0])

    @property
    def m(self) -> int:
        return int(self.data.shape[2])

    @property
    def n(self) -> int:
        return int(self.data.shape[3])


class DepthwiseKernel(_ArrayModel):
    """Per-channel spatial kernel of shape (lk, lk, m)."""

    @field_validator("data", mode="before")
    @classmethod
    def _check(cls, value: object) -> np.ndarray:
        return _square_spatial(frozen_array(value, ndim=3))

    @property
    def lk(self) -> int:
        return int(self.data.shape[0])

    @property
    def m(self) -> int:
        return int(self.data.shape[2])


class PointwiseKernel(_ArrayModel):
    """1x1 channel-mixing weights of shape (m, n)."""

    @field_validator("data", mode="before")
    @classmethod
    def _check(cls, value: object) -> np.ndarray:
        return frozen_array(value, ndim=2)

    @property
    def m(self) -> int:
        return int(self.data.shape[0])

    @property
    def n(self) -> int:
        return int(self.data.shape[1])


class ConvOutput(BaseModel):
    """Convolution result with its multiply-accumulate count."""

    model_config = ConfigDict(frozen=True)

    tensor: Tensor3
    macs: int


def _check_channels(expected: int, actual: int, what: str) -> None:
    if expected != actual:
        raise ChannelMismatch(f"{what}: input has {actual} channels, kernel expects {expected}")


def _padded(x: np.ndarray, lk: int) -> np.ndarray:
    if lk % 2 == 0:
        raise EvenKernel(f"kernel size {lk} is even")
    pad = (lk - 1) // 2
    return np.pad(x, ((pad, pad), (pad, pad), (0, 0)))


def conv2d_standard(inp: Tensor3, kernel: Kernel4) -> ConvOutput:
    """O[p,q,n] = sum over i,j,m of K[i,j,m,n] * I[p+i-pad, q+j-pad, m]."""
    _check_channels(kernel.m, inp.c, "standard convolution")
    padded = _padded(inp.data, kernel.lk)
    h, w = inp.h, inp.w

    out = np.zeros((h, w, kernel.n), dtype=np.float64)
    macs = 0
    for i in range(kernel.lk):
        for j in range(kernel.lk):
            window = padded[i : i + h, j : j + w, :]
            out += window @ kernel.data[i, j]
            macs += window.size * kernel.n

    return ConvOutput(tensor=Tensor3(data=out), macs=macs)


def depthwise_conv(inp: Tensor3, dk: DepthwiseKernel) -> ConvOutput:
    """One spatial filter per input channel; channel count is preserved."""
    _check_channels(dk.m, inp.c, "depthwise convolution")
    padded = _padded(inp.data, dk.lk)
    h, w = inp.h, inp.w

    out = np.zeros((h, w, dk.m), dtype=np.float64)
    macs = 0
    for i in range(dk.lk):
        for j in range(dk.lk):
            window = padded[i : i + h, j : j + w, :]
            out += window * dk.data[i, j]
            macs += window.size

    return ConvOutput(tensor=Tensor3(data=out), macs=macs)


def pointwise_conv(inp: Tensor3, pk: PointwiseKernel) -> ConvOutput:
    """Per-pixel linear combination of channels (1x1 convolution)."""
    _check_channels(pk.m, inp.c, "pointwise convolution")
    out = inp.data @ pk.data
    return ConvOutput(tensor=Tensor3(data=out), macs=inp.data.size * pk.n)


def separable_conv(inp: Tensor3, dk: DepthwiseKernel, pk: PointwiseKernel) -> ConvOutput:
    """Depthwise filtering followed by pointwise combination."""
    _check_channels(dk.m, pk.m, "separable kernels")
    spatial = depthwise_conv(inp, dk)
    mixed = pointwise_conv(spatial.tensor, pk)
    return ConvOutput(tensor=mixed.tensor, macs=spatial.macs + mixed.macs)


def compose_separable_kernel(dk: DepthwiseKernel, pk: PointwiseKernel) -> Kernel4:
    """Rank-1 standard kernel K[i,j,m,n] = dk[i,j,m] * pk[m,n]."""
    _check_channels(dk.m, pk.m, "separable kernels")
    return Kernel4(data=dk.data[:, :, :, np.newaxis] * pk.data[np.newaxis, np.newaxis, :, :])


def encode_array(arr: np.ndarray) -> bytes:
    """UVK1 blob: magic, rank and dims as u32 LE, then float64 LE values in C order."""
    arr = np.asarray(arr, dtype=np.float64)
    header = UVK_MAGIC + struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape)
    return header + arr.astype("<f8").tobytes(order="C")


def decode_array(blob: bytes) -> np.ndarray:
    """Inverse of encode_array."""
    if blob[:4] != UVK_MAGIC:
        raise CodecError(f"bad magic {blob[:4]!r}, expected {UVK_MAGIC!r}")
    if len(blob) < 8:
        raise CodecError("missing rank")

    (rank,) = struct.unpack_from("<I", blob, 4)
    offset = 8 + 4 * rank
    if len(blob) < offset:
        raise CodecError(f"header truncated for rank {rank}")
    dims = struct.unpack_from(f"<{rank}I", blob, 8)

    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    payload = blob[offset:]
    if len(payload) != 8 * count:
        raise CodecError(f"expected {8 * count} data bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(dims)


def save_array(model: _ArrayModel, path: Path) -> None:
    """Write a tensor or kernel in UVK1 format."""
    atomic_write_bytes(Path(path), encode_array(model.data))


def load_tensor(path: Path) -> Tensor3:
    return Tensor3(data=decode_array(Path(path).read_bytes()))


def load_kernel4(path: Path) -> Kernel4:
    return Kernel4(data=decode_array(Path(path).read_bytes()))


def load_depthwise(path: Path) -> DepthwiseKernel:
    return DepthwiseKernel(data=decode_array(Path(path).read_bytes()))


def load_pointwise(path: Path) -> PointwiseKernel:
    return PointwiseKernel(data=decode_array(Path(path).read_bytes()))
