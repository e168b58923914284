"""Software BF16 / FP16 conversions and the FP32 fused multiply-add.

Values are carried around as numpy arrays.  A 16-bit "pattern" is a
``uint16`` array holding the raw encoding; the ``quantize_*`` helpers
return the float32 values those patterns decode to, which is what the
kernels actually compute with.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BF16_QNAN = 0x7FC0
FP16_QNAN = 0x7E00
FP16_MAX = 65504.0


@dataclass(frozen=True)
class RoundingConfig:
    """Conversion options.  Only round-to-nearest-even exists."""

    mode: str = "nearest-even"
    flush_subnormals_to_zero: bool = False

    def __post_init__(self):
        if self.mode != "nearest-even":
            raise ValueError(f"unsupported rounding mode {self.mode!r}")


DEFAULT_ROUNDING = RoundingConfig()


def _f32_bits(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float32)
    return np.ascontiguousarray(a).reshape(a.shape).view(np.uint32)


def round_f32_to_bf16(x, cfg: RoundingConfig = DEFAULT_ROUNDING) -> np.ndarray:
    """Round FP32 values to BF16 bit patterns (RNE, overflow to +-inf)."""
    bits = _f32_bits(x).astype(np.uint64)
    sign = (bits >> 16) & 0x8000
    lsb = (bits >> 16) & 1
    out = ((bits + 0x7FFF + lsb) >> 16).astype(np.uint16)

    nan = np.isnan(np.asarray(x, dtype=np.float32))
    if nan.any():
        out = np.where(nan, np.uint16(BF16_QNAN) | sign.astype(np.uint16), out)
    if cfg.flush_subnormals_to_zero:
        sub = ((out & 0x7F80) == 0) & ((out & 0x7F) != 0)
        out = np.where(sub, sign.astype(np.uint16), out)
    return out.astype(np.uint16)


def bf16_to_f32(p) -> np.ndarray:
    """Exact widening of BF16 patterns to float32."""
    p = np.asarray(p, dtype=np.uint16)
    return (p.astype(np.uint32) << 16).view(np.float32)


def round_f32_to_fp16(x, cfg: RoundingConfig = DEFAULT_ROUNDING) -> np.ndarray:
    """Round FP32 values to IEEE binary16 bit patterns."""
    x = np.asarray(x, dtype=np.float32)
    # numpy's float32 -> float16 cast is RNE with gradual underflow
    with np.errstate(over="ignore"):
        out = x.astype(np.float16).view(np.uint16)
    sign = ((_f32_bits(x) >> 16) & 0x8000).astype(np.uint16)
    nan = np.isnan(x)
    if nan.any():
        out = np.where(nan, np.uint16(FP16_QNAN) | sign, out)
    if cfg.flush_subnormals_to_zero:
        sub = ((out & 0x7C00) == 0) & ((out & 0x3FF) != 0)
        out = np.where(sub, sign, out)
    return np.asarray(out, dtype=np.uint16)


def fp16_to_f32(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.uint16)
    return p.view(np.float16).astype(np.float32)


def quantize_bf16(x, cfg: RoundingConfig = DEFAULT_ROUNDING) -> np.ndarray:
    """float32 values of ``x`` rounded to the nearest BF16."""
    return bf16_to_f32(round_f32_to_bf16(x, cfg))


def quantize_fp16(x, cfg: RoundingConfig = DEFAULT_ROUNDING) -> np.ndarray:
    return fp16_to_f32(round_f32_to_fp16(x, cfg))


QUANTIZERS = {"bf16": quantize_bf16, "fp16": quantize_fp16}


def fma_f32(a, b, c) -> np.ndarray:
    """Return ``a*b + c`` rounded once to float32.

    The product of two float32 values is exact in float64.  The sum is
    formed in float64 with round-to-odd (TwoSum error plus a sticky bit),
    after which a single cast to float32 is correctly rounded.
    """
    p = np.asarray(a, dtype=np.float64) * np.asarray(b, dtype=np.float64)
    c64 = np.asarray(c, dtype=np.float64)
    s = p + c64
    bb = s - p
    err = (p - (s - bb)) + (c64 - bb)
    bits = np.array(s, dtype=np.float64).view(np.uint64)
    fix = (err != 0) & ((bits & 1) == 0)
    if np.any(fix):
        away = (err > 0) == (s > 0)
        bits = np.where(fix, np.where(away, bits + 1, bits - 1), bits)
        s = bits.view(np.float64)
    with np.errstate(over="ignore"):
        return np.asarray(s, dtype=np.float64).astype(np.float32)


def fma_f32_short(a, b, c) -> np.ndarray:
    """``fma_f32`` for operands whose product has at most 24 significant bits.

    With such products the float64 sum followed by one cast to float32 is
    already correctly rounded, so the sticky-bit fix-up is skipped.
    """
    p = np.asarray(a, dtype=np.float64) * np.asarray(b, dtype=np.float64)
    with np.errstate(over="ignore"):
        return (p + np.asarray(c, dtype=np.float64)).astype(np.float32)
