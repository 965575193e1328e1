"""Tests for the convolution core and the UVK1 codec."""

from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

from uav_vision_kit.checks import naive_conv2d
from uav_vision_kit.conv import (
    ChannelMismatch,
    CodecError,
    DepthwiseKernel,
    EvenKernel,
    Kernel4,
    PointwiseKernel,
    Tensor3,
    compose_separable_kernel,
    conv2d_standard,
    decode_array,
    depthwise_conv,
    encode_array,
    load_depthwise,
    load_kernel4,
    load_pointwise,
    load_tensor,
    pointwise_conv,
    save_array,
    separable_conv,
)


def random_tensor(rng: np.random.Generator, h: int = 5, w: int = 6, c: int = 3) -> Tensor3:
    return Tensor3(data=rng.standard_normal((h, w, c)))


class TestTypes:
    """Tests for tensor and kernel models."""

    def test_tensor_shape(self, rng: np.random.Generator) -> None:
        """Test h, w and c are read from the (h, w, c) layout."""
        t = random_tensor(rng, 2, 3, 4)

        assert (t.h, t.w, t.c) == (2, 3, 4)

    def test_tensor_needs_three_axes(self) -> None:
        """Test a 2-d array is not a feature map."""
        with pytest.raises(ValidationError):
            Tensor3(data=np.zeros((3, 3)))

    def test_kernel_must_be_square(self) -> None:
        """Test non-square spatial extents are rejected."""
        with pytest.raises(ValidationError, match="square"):
            Kernel4(data=np.zeros((3, 1, 2, 2)))

    def test_kernel_dims(self, rng: np.random.Generator) -> None:
        """Test lk, m and n of a standard kernel."""
        k = Kernel4(data=rng.standard_normal((3, 3, 2, 5)))

        assert (k.lk, k.m, k.n) == (3, 2, 5)


class TestConv2dStandard:
    """Tests for conv2d_standard function."""

    @pytest.mark.parametrize("lk", [1, 3, 5])
    def test_matches_nested_loops(self, rng: np.random.Generator, lk: int) -> None:
        """Test the vectorized result equals the nested-loop definition."""
        inp = random_tensor(rng)
        kernel = Kernel4(data=rng.standard_normal((lk, lk, 3, 4)))

        result = conv2d_standard(inp, kernel)

        np.testing.assert_allclose(
            result.tensor.data, naive_conv2d(inp.data, kernel.data), atol=1e-9
        )

    def test_mac_count(self, rng: np.random.Generator) -> None:
        """Test every tap counts, padding included."""
        inp = random_tensor(rng, 5, 6, 3)
        kernel = Kernel4(data=rng.standard_normal((3, 3, 3, 4)))

        assert conv2d_standard(inp, kernel).macs == 3 * 3 * 3 * 4 * 5 * 6

    def test_identity_kernel(self, rng: np.random.Generator) -> None:
        """Test a 1x1 identity kernel reproduces the input."""
        inp = random_tensor(rng)
        kernel = Kernel4(data=np.eye(3)[np.newaxis, np.newaxis])

        np.testing.assert_array_equal(conv2d_standard(inp, kernel).tensor.data, inp.data)

    def test_ones_kernel_counts_neighbours(self) -> None:
        """Test a 3x3 ones kernel on ones counts in-frame neighbours."""
        inp = Tensor3(data=np.ones((3, 3, 1)))
        kernel = Kernel4(data=np.ones((3, 3, 1, 1)))

        out = conv2d_standard(inp, kernel).tensor.data[:, :, 0]

        np.testing.assert_array_equal(out, [[4, 6, 4], [6, 9, 6], [4, 6, 4]])

    def test_channel_mismatch(self, rng: np.random.Generator) -> None:
        """Test input and kernel channels must agree."""
        kernel = Kernel4(data=np.zeros((3, 3, 2, 1)))

        with pytest.raises(ChannelMismatch):
            conv2d_standard(random_tensor(rng, c=3), kernel)

    def test_even_kernel(self, rng: np.random.Generator) -> None:
        """Test a kernel without a center tap is refused."""
        kernel = Kernel4(data=np.zeros((2, 2, 3, 1)))

        with pytest.raises(EvenKernel):
            conv2d_standard(random_tensor(rng), kernel)


class TestSeparable:
    """Tests for depthwise, pointwise and separable convolution."""

    def test_depthwise_keeps_channels(self, rng: np.random.Generator) -> None:
        """Test each channel is filtered on its own."""
        inp = random_tensor(rng, 4, 4, 2)
        dk = DepthwiseKernel(data=rng.standard_normal((3, 3, 2)))

        out = depthwise_conv(inp, dk)

        assert out.tensor.c == 2
        assert out.macs == 3 * 3 * 2 * 4 * 4
        single = Kernel4(data=dk.data[:, :, 1][:, :, np.newaxis, np.newaxis])
        channel = Tensor3(data=inp.data[:, :, 1:2])
        np.testing.assert_allclose(
            out.tensor.data[:, :, 1:2], conv2d_standard(channel, single).tensor.data, atol=1e-12
        )

    def test_pointwise_is_channel_mix(self, rng: np.random.Generator) -> None:
        """Test pointwise convolution multiplies each pixel by the weights."""
        inp = random_tensor(rng, 2, 2, 3)
        pk = PointwiseKernel(data=rng.standard_normal((3, 5)))

        out = pointwise_conv(inp, pk)

        np.testing.assert_allclose(out.tensor.data[1, 0], inp.data[1, 0] @ pk.data)
        assert out.macs == 2 * 2 * 3 * 5

    def test_equals_composed_kernel(self, rng: np.random.Generator) -> None:
        """Test separable output equals standard convolution with the composed kernel."""
        inp = random_tensor(rng, 7, 5, 4)
        dk = DepthwiseKernel(data=rng.standard_normal((5, 5, 4)))
        pk = PointwiseKernel(data=rng.standard_normal((4, 6)))

        separable = separable_conv(inp, dk, pk)
        composed = conv2d_standard(inp, compose_separable_kernel(dk, pk))

        np.testing.assert_allclose(separable.tensor.data, composed.tensor.data, atol=1e-9)

    def test_separable_macs(self, rng: np.random.Generator) -> None:
        """Test the count is the depthwise plus the pointwise MACs."""
        inp = random_tensor(rng, 4, 3, 2)
        dk = DepthwiseKernel(data=rng.standard_normal((3, 3, 2)))
        pk = PointwiseKernel(data=rng.standard_normal((2, 7)))

        assert separable_conv(inp, dk, pk).macs == 4 * 3 * 2 * (9 + 7)

    def test_kernel_channel_mismatch(self, rng: np.random.Generator) -> None:
        """Test depthwise and pointwise kernels must share m."""
        dk = DepthwiseKernel(data=np.zeros((3, 3, 2)))
        pk = PointwiseKernel(data=np.zeros((3, 1)))

        with pytest.raises(ChannelMismatch):
            compose_separable_kernel(dk, pk)
        with pytest.raises(ChannelMismatch):
            separable_conv(random_tensor(rng, c=2), dk, pk)


class TestCodec:
    """Tests for the UVK1 array format."""

    def test_header_layout(self) -> None:
        """Test magic, rank and dims precede little-endian doubles."""
        blob = encode_array(np.array([[1.0, 2.0]]))

        assert blob[:4] == b"UVK1"
        assert blob[4:16] == bytes([2, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0])
        assert len(blob) == 16 + 16

    def test_decode(self) -> None:
        """Test a blob decodes to the encoded values and shape."""
        arr = np.arange(24, dtype=np.float64).reshape(2, 3, 4)

        np.testing.assert_array_equal(decode_array(encode_array(arr)), arr)

    def test_bad_magic(self) -> None:
        """Test foreign blobs are rejected."""
        with pytest.raises(CodecError, match="magic"):
            decode_array(b"NOPE\x01\x00\x00\x00")

    def test_truncated_payload(self) -> None:
        """Test a short payload is rejected."""
        blob = encode_array(np.zeros((2, 2)))

        with pytest.raises(CodecError, match="expected 32"):
            decode_array(blob[:-1])

    def test_truncated_header(self) -> None:
        """Test dims missing from the header are rejected."""
        with pytest.raises(CodecError):
            decode_array(b"UVK1\x03\x00\x00\x00\x01\x00\x00\x00")

    def test_files(self, tmp_path: Path, rng: np.random.Generator) -> None:
        """Test each loader reads back what save_array wrote."""
        tensor = random_tensor(rng)
        kernel = Kernel4(data=rng.standard_normal((3, 3, 3, 2)))
        dk = DepthwiseKernel(data=rng.standard_normal((3, 3, 3)))
        pk = PointwiseKernel(data=rng.standard_normal((3, 2)))

        for name, model in [("t", tensor), ("k", kernel), ("d", dk), ("p", pk)]:
            save_array(model, tmp_path / f"{name}.uvk")

        np.testing.assert_array_equal(load_tensor(tmp_path / "t.uvk").data, tensor.data)
        np.testing.assert_array_equal(load_kernel4(tmp_path / "k.uvk").data, kernel.data)
        np.testing.assert_array_equal(load_depthwise(tmp_path / "d.uvk").data, dk.data)
        np.testing.assert_array_equal(load_pointwise(tmp_path / "p.uvk").data, pk.data)

    def test_loader_checks_rank(self, tmp_path: Path) -> None:
        """Test loading a matrix as a feature map fails validation."""
        path = tmp_path / "m.uvk"
        save_array(PointwiseKernel(data=np.zeros((2, 2))), path)

        with pytest.raises(ValidationError):
            load_tensor(path)
