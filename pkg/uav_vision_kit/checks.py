"""Randomized self-checks of the convolution core against independent oracles."""

import itertools
import logging
from collections.abc import Callable
from fractions import Fraction

import numpy as np
from pydantic import BaseModel, ConfigDict

from .conv import (
    DepthwiseKernel,
    Kernel4,
    PointwiseKernel,
    Tensor3,
    compose_separable_kernel,
    conv2d_standard,
    depthwise_conv,
    pointwise_conv,
    separable_conv,
)
from .opcount import ConvSpec, ops_separable, ops_standard, reduction_ratio

logger = logging.getLogger(__name__)

TOLERANCE = 1e-9

SWEEP_LK = (1, 3, 5, 7)
SWEEP_M = (1, 3, 16)
SWEEP_N = (1, 8, 32, 64)
SWEEP_LF = (1, 8, 16)


class CheckResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    passed: bool
    trials: int
    failures: int = 0
    detail: str = ""


class Instance(BaseModel):
    """Random input and kernels of one trial."""

    model_config = ConfigDict(frozen=True)

    inp: Tensor3
    dk: DepthwiseKernel
    pk: PointwiseKernel
    kernel: Kernel4


def random_instance(rng: np.random.Generator, max_side: int = 8) -> Instance:
    """h, w <= max_side, m <= 4, n <= 5, odd lk <= 5."""
    h = int(rng.integers(1, max_side + 1))
    w = int(rng.integers(1, max_side + 1))
    m = int(rng.integers(1, 5))
    n = int(rng.integers(1, 6))
    lk = int(rng.choice([1, 3, 5]))
    return Instance(
        inp=Tensor3(data=rng.standard_normal((h, w, m))),
        dk=DepthwiseKernel(data=rng.standard_normal((lk, lk, m))),
        pk=PointwiseKernel(data=rng.standard_normal((m, n))),
        kernel=Kernel4(data=rng.standard_normal((lk, lk, m, n))),
    )


def naive_conv2d(inp: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Nested-loop zero-padded convolution, independent of the vectorized one."""
    h, w, m = inp.shape
    lk, n = kernel.shape[0], kernel.shape[3]
    pad = (lk - 1) // 2
    out = np.zeros((h, w, n))
    for p, q, o in itertools.product(range(h), range(w), range(n)):
        acc = 0.0
        for i, j in itertools.product(range(lk), range(lk)):
            y, x = p + i - pad, q + j - pad
            if 0 <= y < h and 0 <= x < w:
                for c in range(m):
                    acc += kernel[i, j, c, o] * inp[y, x, c]
        out[p, q, o] = acc
    return out


def _max_abs(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def check_brute_force(inst: Instance) -> str | None:
    result = conv2d_standard(inst.inp, inst.kernel)
    error = _max_abs(result.tensor.data, naive_conv2d(inst.inp.data, inst.kernel.data))
    if error > TOLERANCE:
        return f"max abs error {error:.3g} against nested loops"
    k = inst.kernel
    expected = k.lk * k.lk * k.m * k.n * inst.inp.h * inst.inp.w
    if result.macs != expected:
        return f"counted {result.macs} MACs, expected {expected}"
    return None


def check_factorization(inst: Instance) -> str | None:
    separable = separable_conv(inst.inp, inst.dk, inst.pk)
    composed = conv2d_standard(inst.inp, compose_separable_kernel(inst.dk, inst.pk))
    error = _max_abs(separable.tensor.data, composed.tensor.data)
    if error > TOLERANCE:
        return f"separable and composed standard differ by {error:.3g}"
    return None


def check_mac_counts(inst: Instance) -> str | None:
    hw = inst.inp.h * inst.inp.w
    lk, m, n = inst.dk.lk, inst.dk.m, inst.pk.n
    counted = {
        "depthwise": depthwise_conv(inst.inp, inst.dk).macs,
        "pointwise": pointwise_conv(inst.inp, inst.pk).macs,
        "separable": separable_conv(inst.inp, inst.dk, inst.pk).macs,
    }
    expected = {
        "depthwise": lk * lk * m * hw,
        "pointwise": m * n * hw,
        "separable": lk * lk * m * hw + m * n * hw,
    }
    for kind, macs in counted.items():
        if macs != expected[kind]:
            return f"{kind} counted {macs} MACs, expected {expected[kind]}"
    return None


def check_opcount_agreement(inst: Instance) -> str | None:
    """Instrumented MACs equal the analytic counts on a square input."""
    side = min(inst.inp.h, inst.inp.w)
    square = Tensor3(data=inst.inp.data[:side, :side, :])
    spec = ConvSpec(lk=inst.dk.lk, m=inst.dk.m, n=inst.pk.n, lf=side)

    standard = conv2d_standard(square, compose_separable_kernel(inst.dk, inst.pk)).macs
    if standard != ops_standard(spec):
        return f"standard counted {standard}, analytic {ops_standard(spec)}"
    separable = separable_conv(square, inst.dk, inst.pk).macs
    if separable != ops_separable(spec).total:
        return f"separable counted {separable}, analytic {ops_separable(spec).total}"
    return None


def check_linearity(inst: Instance, rng: np.random.Generator) -> str | None:
    other = Tensor3(data=rng.standard_normal(inst.inp.data.shape))
    a, b = rng.standard_normal(2)
    mixed = Tensor3(data=a * inst.inp.data + b * other.data)

    lhs = conv2d_standard(mixed, inst.kernel).tensor.data
    rhs = (
        a * conv2d_standard(inst.inp, inst.kernel).tensor.data
        + b * conv2d_standard(other, inst.kernel).tensor.data
    )
    error = _max_abs(lhs, rhs)
    if error > TOLERANCE:
        return f"superposition off by {error:.3g}"
    return None


def check_reduction_sweep() -> CheckResult:
    """Separable over standard ops equals 1/n + 1/lk^2 exactly over the shape sweep."""
    failures = []
    shapes = list(itertools.product(SWEEP_LK, SWEEP_M, SWEEP_N, SWEEP_LF))
    for lk, m, n, lf in shapes:
        spec = ConvSpec(lk=lk, m=m, n=n, lf=lf)
        if reduction_ratio(spec) != Fraction(1, n) + Fraction(1, lk * lk):
            failures.append(f"lk={lk} m={m} n={n} lf={lf}")
    return CheckResult(
        name="reduction-ratio",
        passed=not failures,
        trials=len(shapes),
        failures=len(failures),
        detail="; ".join(failures[:3]),
    )


def _run_suite(
    name: str,
    instances: list[Instance],
    check: Callable[[Instance], str | None],
) -> CheckResult:
    problems = [(i, msg) for i, inst in enumerate(instances) if (msg := check(inst)) is not None]
    detail = "; ".join(f"trial {i}: {msg}" for i, msg in problems[:3])
    logger.debug("%s: %d/%d failed", name, len(problems), len(instances))
    return CheckResult(
        name=name,
        passed=not problems,
        trials=len(instances),
        failures=len(problems),
        detail=detail,
    )


def run_checks(seed: int, trials: int) -> list[CheckResult]:
    """Every convolution property on `trials` random instances drawn from `seed`."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")

    rng = np.random.default_rng(seed)
    instances = [random_instance(rng) for _ in range(trials)]
    linearity_rng = np.random.default_rng([seed, 1])

    return [
        _run_suite("brute-force", instances, check_brute_force),
        _run_suite("factorization", instances, check_factorization),
        _run_suite("mac-exactness", instances, check_mac_counts),
        _run_suite("opcount-agreement", instances, check_opcount_agreement),
        _run_suite("linearity", instances, lambda inst: check_linearity(inst, linearity_rng)),
        check_reduction_sweep(),
    ]
