"""Decomposition of FP32 data into k BF16 components.

Component 0 is the BF16 rounding of the value; component i is the BF16
rounding of what is left after subtracting components 0..i-1, with each
subtraction carried out in FP32.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .precision import bf16_to_f32, quantize_bf16, round_f32_to_bf16

MAX_SPLITS = 3
BF16_MAX = np.float32(bf16_to_f32(np.uint16(0x7F7F)))
# Smallest unbiased exponent for which a 3-way split is exact.
SAFE_MIN_EXPONENT = -110
SAFE_MAX_EXPONENT = 127


class UnsupportedValueError(ValueError):
    """Raised for NaN or infinite inputs, which have no split."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


def _check_k(k):
    if k not in (1, 2, 3):
        raise ValueError(f"split count must be 1, 2 or 3, got {k}")


def split_values(a, k: int = 3) -> np.ndarray:
    """Vectorised split: returns float32 array of shape ``(k,) + a.shape``.

    Every entry of the result is exactly representable in BF16.  No
    finiteness check is made here.  Component 0 saturates at the largest
    finite BF16 instead of overflowing, so the residual stays finite.
    """
    _check_k(k)
    resid = np.asarray(a, dtype=np.float32)
    comps = np.empty((k,) + resid.shape, dtype=np.float32)
    for i in range(k):
        comps[i] = quantize_bf16(resid)
        if i == 0:
            # finite values just below FLT_MAX would round to inf
            over = np.isinf(comps[0]) & np.isfinite(resid)
            if over.any():
                comps[0] = np.where(over, np.copysign(BF16_MAX, resid), comps[0])
        if i + 1 < k:
            resid = (resid - comps[i]).astype(np.float32)
    return comps


@dataclass(frozen=True)
class SplitScalar:
    components: tuple  # BF16 bit patterns, most significant first

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def values(self) -> np.ndarray:
        return bf16_to_f32(np.array(self.components, dtype=np.uint16))

    def recombine(self) -> float:
        return recombine(self)


def split_scalar(a, k: int = 3) -> SplitScalar:
    a32 = np.float32(a)
    if not np.isfinite(a32):
        raise UnsupportedValueError(f"cannot split non-finite value {a!r}")
    comps = split_values(a32, k)
    return SplitScalar(tuple(int(b) for b in round_f32_to_bf16(comps)))


def recombine(s) -> float | np.ndarray:
    """FP64 sum of the widened components.

    Accepts a :class:`SplitScalar`, a :class:`SplitMatrix`, or a raw
    component array with the split axis first.  The sum is exact since the
    components carry at most 24 significant bits between them.
    """
    if isinstance(s, SplitScalar):
        vals = s.values.astype(np.float64)
        return float(_ordered_sum(vals))
    if isinstance(s, SplitMatrix):
        vals = s.components
    else:
        vals = np.asarray(s, dtype=np.float32)
    return _ordered_sum(vals.astype(np.float64))


def _ordered_sum(vals):
    # smallest component first
    total = vals[-1].copy() if vals.ndim > 1 else vals[-1]
    for v in vals[-2::-1]:
        total = total + v
    return total


@dataclass(frozen=True)
class SplitMatrix:
    """A dense FP32 array split into k BF16 arrays of the same shape.

    Works for vectors as well as matrices; ``components`` holds the BF16
    values widened to float32 with the split index on axis 0.
    """

    components: np.ndarray
    source_kind: str = "fp32"

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def shape(self):
        return self.components.shape[1:]

    @property
    def rows(self) -> int:
        return self.shape[0]

    @property
    def cols(self) -> int:
        return self.shape[1] if len(self.shape) > 1 else 1

    @property
    def bits(self) -> np.ndarray:
        return round_f32_to_bf16(self.components)

    def component(self, i: int) -> np.ndarray:
        return self.components[i]

    def scalar(self, idx) -> SplitScalar:
        if not isinstance(idx, tuple):
            idx = (idx,)
        return SplitScalar(tuple(int(b) for b in self.bits[(slice(None),) + idx]))

    def transpose(self) -> "SplitMatrix":
        return SplitMatrix(np.swapaxes(self.components, 1, 2), self.source_kind)

    def truncate(self, k: int) -> "SplitMatrix":
        """Leading ``k`` components; equal to splitting the source with ``k``."""
        _check_k(k)
        if k > self.k:
            raise ValueError(f"cannot widen a {self.k}-way split to {k}")
        return SplitMatrix(self.components[:k], self.source_kind)


SplitVector = SplitMatrix


def split_matrix(m, k: int = 3) -> SplitMatrix:
    m32 = np.asarray(m, dtype=np.float32)
    bad = ~np.isfinite(m32)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise UnsupportedValueError(f"non-finite entry at {idx}", index=idx)
    return SplitMatrix(split_values(m32, k))


split_vector = split_matrix


def exponent_of(a) -> np.ndarray:
    """Unbiased binary exponent of FP32 values (-127 for zeros/subnormals)."""
    bits = np.asarray(a, dtype=np.float32).view(np.uint32)
    return ((bits >> 23) & 0xFF).astype(np.int64) - 127


def exponent_range_violations(a) -> int:
    """Count nonzero entries outside the exponent range where splits are exact."""
    a = np.asarray(a, dtype=np.float32)
    e = exponent_of(a)
    return int(np.count_nonzero((a != 0) & ((e < SAFE_MIN_EXPONENT) | (e > SAFE_MAX_EXPONENT))))
