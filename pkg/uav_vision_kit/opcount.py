"""Analytic operation and parameter counts, model size, and the power/RAM budget.

One operation is one multiply-accumulate. Bias terms are not counted.
"""

import math
from decimal import Decimal
from fractions import Fraction
from pathlib import Path
from typing import Literal, NamedTuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

INT64_MAX = 2**63 - 1

Mode = Literal["standard", "separable"]

# Reference inputs of the commonly quoted onboard example: 10 Hz, 1e9 ops, 600 pJ.
REFERENCE_POWER_INPUTS = (10.0, 1e9, 600e-12)
REFERENCE_QUOTED_WATTS = 3.0


class OpCountOverflow(ArithmeticError):
    """Raised when a count leaves the signed 64-bit range."""


class NetSpecError(ValueError):
    """Raised when a NetSpec file cannot be parsed."""


class ConvSpec(BaseModel):
    """One convolution layer: kernel lk, channels m -> n, spatial size lf x lf."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    lk: int = Field(ge=1)
    m: int = Field(ge=1)
    n: int = Field(ge=1)
    lf: int = Field(ge=1)
    mode: Mode = "standard"

    @field_validator("lk")
    @classmethod
    def _odd_kernel(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {value}")
        return value


class NetSpec(BaseModel):
    """Ordered stack of layers."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    layers: list[ConvSpec] = Field(default_factory=list)
    bytes_per_weight: int = Field(default=4, ge=1)

    @model_validator(mode="after")
    def _check_chain(self) -> "NetSpec":
        for index, (prev, nxt) in enumerate(zip(self.layers, self.layers[1:]), start=1):
            if prev.n != nxt.m:
                raise ValueError(
                    f"layer {index} outputs {prev.n} channels but layer {index + 1} expects {nxt.m}"
                )
        return self


class PowerParams(BaseModel):
    """Inference rate (1/s), operations per inference and energy per operation (J)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    f_o: float = Field(ge=0.0, allow_inf_nan=False)
    n_ops: float = Field(ge=0.0, allow_inf_nan=False)
    e_o: float = Field(ge=0.0, allow_inf_nan=False)


class BudgetReport(BaseModel):
    """Power and memory fractions; fractions above 1 mean over budget."""

    model_config = ConfigDict(frozen=True)

    p_w: float
    battery_w: float
    battery_fraction: float = Field(ge=0.0)
    model_bytes: int
    ram_bytes: int
    ram_fraction: float = Field(ge=0.0)
    notes: list[str] = Field(default_factory=list)


class SeparableOps(NamedTuple):
    depthwise: int
    pointwise: int
    total: int


def _checked(value: int, what: str) -> int:
    if value > INT64_MAX:
        raise OpCountOverflow(f"{what} count {value} exceeds the 64-bit range")
    return value


def ops_standard(s: ConvSpec) -> int:
    """lk^2 * M * N * lf^2."""
    return _checked(s.lk * s.lk * s.m * s.n * s.lf * s.lf, "standard ops")


def ops_separable(s: ConvSpec) -> SeparableOps:
    """Depthwise lk^2 * M * lf^2 plus pointwise M * lf^2 * N."""
    depthwise = _checked(s.lk * s.lk * s.m * s.lf * s.lf, "depthwise ops")
    pointwise = _checked(s.m * s.lf * s.lf * s.n, "pointwise ops")
    return SeparableOps(depthwise, pointwise, _checked(depthwise + pointwise, "separable ops"))


def reduction_ratio(s: ConvSpec) -> Fraction:
    """Separable over standard ops as an exact rational (equals 1/N + 1/lk^2)."""
    return Fraction(ops_separable(s).total, ops_standard(s))


def params_standard(s: ConvSpec) -> int:
    return _checked(s.lk * s.lk * s.m * s.n, "standard params")


def params_separable(s: ConvSpec) -> int:
    return _checked(s.lk * s.lk * s.m + s.m * s.n, "separable params")


def layer_ops(s: ConvSpec) -> int:
    """Ops of a layer in its own mode."""
    return ops_standard(s) if s.mode == "standard" else ops_separable(s).total


def layer_params(s: ConvSpec) -> int:
    """Params of a layer in its own mode."""
    return params_standard(s) if s.mode == "standard" else params_separable(s)


def _in_mode(net: NetSpec, mode: Mode | None) -> list[ConvSpec]:
    if mode is None:
        return list(net.layers)
    return [s.model_copy(update={"mode": mode}) for s in net.layers]


def net_ops(net: NetSpec, mode: Mode | None = None) -> int:
    """Total ops of a net; mode forces every layer into one mode."""
    layers = _in_mode(net, mode)
    return _checked(sum(layer_ops(s) for s in layers), "net ops")


def net_params(net: NetSpec, mode: Mode | None = None) -> int:
    layers = _in_mode(net, mode)
    return _checked(sum(layer_params(s) for s in layers), "net params")


def model_bytes(net: NetSpec, mode: Mode | None = None) -> int:
    """Weights times bytes per weight."""
    return _checked(net_params(net, mode) * net.bytes_per_weight, "model bytes")


def size_ratio(net: NetSpec) -> float:
    """Standard over separable model size for the same layer shapes."""
    separable = net_params(net, "separable")
    if separable == 0:
        return math.nan
    return net_params(net, "standard") / separable


def power(p: PowerParams) -> float:
    """P_w = f_o * n_ops * e_o.

    Multiplied as decimals of each input's shortest repr, so 10 x 1e9 x 600e-12 is exactly 6.
    """
    product = Decimal(repr(p.f_o)) * Decimal(repr(p.n_ops)) * Decimal(repr(p.e_o))
    return float(product)


def budget_notes(p: PowerParams) -> list[str]:
    """Fixed explanatory notes attached to every budget report."""
    notes = ["power is the literal product f_o * n_ops * e_o"]
    if (p.f_o, p.n_ops, p.e_o) == REFERENCE_POWER_INPUTS:
        notes.append(
            f"reference inputs 10 Hz x 1e9 ops x 600 pJ are often quoted as about "
            f"{REFERENCE_QUOTED_WATTS:g} W; the product is {power(p):g} W "
            "and is reported unchanged"
        )
    return notes


def budget_report(
    p: PowerParams,
    battery_w: float,
    model: NetSpec,
    ram_bytes: int,
) -> BudgetReport:
    """Compare compute power with the battery and model size with RAM."""
    if battery_w <= 0:
        raise ValueError(f"battery power must be positive, got {battery_w}")
    if ram_bytes <= 0:
        raise ValueError(f"RAM size must be positive, got {ram_bytes}")

    p_w = power(p)
    size = model_bytes(model)
    return BudgetReport(
        p_w=p_w,
        battery_w=battery_w,
        battery_fraction=p_w / battery_w,
        model_bytes=size,
        ram_bytes=ram_bytes,
        ram_fraction=size / ram_bytes,
        notes=budget_notes(p),
    )


def parse_netspec(text: str, bytes_per_weight: int = 4) -> NetSpec:
    """Parse `mode lk m n lf` lines; '#' starts a comment."""
    layers: list[ConvSpec] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 5:
            raise NetSpecError(f"line {lineno}: expected 'mode lk m n lf', got {raw.strip()!r}")
        mode, *numbers = fields
        try:
            lk, m, n, lf = (int(v) for v in numbers)
            layers.append(ConvSpec(lk=lk, m=m, n=n, lf=lf, mode=mode))
        except ValueError as e:
            raise NetSpecError(f"line {lineno}: {e}") from e

    try:
        return NetSpec(layers=layers, bytes_per_weight=bytes_per_weight)
    except ValueError as e:
        raise NetSpecError(str(e)) from e


def load_netspec(path: Path, bytes_per_weight: int = 4) -> NetSpec:
    return parse_netspec(Path(path).read_text(), bytes_per_weight=bytes_per_weight)


def reference_netspec(
    depth: int = 10,
    channels: int = 64,
    lk: int = 3,
    lf: int = 32,
    mode: Mode = "standard",
) -> NetSpec:
    """Uniform stack used for the model-size comparison."""
    layer = ConvSpec(lk=lk, m=channels, n=channels, lf=lf, mode=mode)
    return NetSpec(layers=[layer] * depth)
