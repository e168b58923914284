"""Dot products and GEMM over split operands.

Every partial product Z^(i,j) is an FP32 accumulation of BF16 x BF16
products, one rounding per element, in strictly increasing element
order.  Partial products sharing ``i + j`` form a bin; bins are added
smallest-first.  FP32 and FP64 reference kernels sit alongside.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .precision import fma_f32, fma_f32_short
from .split import SplitMatrix


class SchemeMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class ProductScheme:
    """Which partial products to form and how to add them up.

    ``pairs`` lists (i, j) meaning component i of the left operand times
    component j of the right operand.  ``final_sum_precision`` is the
    precision of the bin combination that follows the FP32 partials.
    """

    name: str
    x_splits: int
    y_splits: int
    pairs: tuple
    final_sum_precision: str = "fp32"

    def __post_init__(self):
        if self.final_sum_precision not in ("fp32", "fp64"):
            raise ValueError(f"bad final_sum_precision {self.final_sum_precision!r}")
        for i, j in self.pairs:
            if i >= self.x_splits or j >= self.y_splits:
                raise ValueError(f"pair {(i, j)} out of range for {self.name}")

    @property
    def n_products(self) -> int:
        return len(self.pairs)

    def bins(self) -> dict:
        """level -> member pairs, ordered by increasing left index."""
        out = {}
        for i, j in sorted(self.pairs):
            out.setdefault(i + j, []).append((i, j))
        return dict(sorted(out.items()))

    def with_fp64_combine(self) -> "ProductScheme":
        return replace(self, name=self.name + "d", final_sum_precision="fp64")

    def with_pair(self, pair, name=None) -> "ProductScheme":
        return replace(self, name=name or f"{self.name}+{pair}", pairs=tuple(self.pairs) + (tuple(pair),))


def _all_pairs(kx, ky, max_level):
    return tuple((i, j) for i in range(kx) for j in range(ky) if i + j <= max_level)


B1X1 = ProductScheme("b1x1", 1, 1, ((0, 0),))
B2X3 = ProductScheme("b2x3", 2, 2, _all_pairs(2, 2, 1))
B3X6 = ProductScheme("b3x6", 3, 3, _all_pairs(3, 3, 2))
B3X9 = ProductScheme("b3x9", 3, 3, _all_pairs(3, 3, 4))
# experimental: only sensible when the left operand's second component is ~0
B2X3X5 = ProductScheme("b2x3x5", 2, 3, ((0, 0), (0, 1), (1, 0), (1, 1), (0, 2)))

SCHEMES = {s.name: s for s in (B1X1, B2X3, B3X6, B3X9, B2X3X5)}


def get_scheme(name: str) -> ProductScheme:
    """Look up a scheme by name; a trailing ``d`` selects FP64 bin combination."""
    key = name.lower()
    if key in SCHEMES:
        return SCHEMES[key]
    if key.endswith("d") and key[:-1] in SCHEMES:
        return SCHEMES[key[:-1]].with_fp64_combine()
    raise KeyError(f"unknown product scheme {name!r}")


@dataclass
class PartialProducts:
    Z: dict = field(default_factory=dict)
    bins: dict = field(default_factory=dict)


def _check_scheme(x: SplitMatrix, y: SplitMatrix, scheme: ProductScheme):
    if x.k != scheme.x_splits or y.k != scheme.y_splits:
        raise SchemeMismatchError(
            f"scheme {scheme.name} needs {scheme.x_splits}x{scheme.y_splits} splits, "
            f"got {x.k}x{y.k}"
        )


def combine_bins(Z: dict, scheme: ProductScheme):
    """Add partial products bin by bin, then the bins smallest-first.

    Within a bin, members are added right-to-left so that e.g. level 2 is
    Z02 + (Z11 + Z20).
    """
    dt = np.float32 if scheme.final_sum_precision == "fp32" else np.float64
    bins = {}
    for level, members in scheme.bins().items():
        acc = np.asarray(Z[members[-1]], dtype=dt)
        for pair in reversed(members[:-1]):
            acc = (np.asarray(Z[pair], dtype=dt) + acc).astype(dt)
        bins[level] = acc
    levels = sorted(bins)
    total = bins[levels[-1]]
    for level in reversed(levels[:-1]):
        total = (bins[level] + total).astype(dt)
    return total, bins


# -- dot products ---------------------------------------------------------


def _batched_fma_dot(X, Y, fma=fma_f32) -> np.ndarray:
    """Sequential FP32 FMA accumulation along the last axis, batched."""
    X = np.asarray(X, dtype=np.float32)
    Y = np.asarray(Y, dtype=np.float32)
    if X.shape != Y.shape:
        raise ValueError(f"length mismatch: {X.shape} vs {Y.shape}")
    Z = np.zeros(X.shape[:-1], dtype=np.float32)
    for l in range(X.shape[-1]):
        Z = fma(X[..., l], Y[..., l], Z)
    return Z


def partial_dot(x, y) -> np.float32:
    """One partial inner product of two BF16-valued vectors, FP32 accumulate."""
    x = np.asarray(x, dtype=np.float32)
    y = np.asarray(y, dtype=np.float32)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    return np.float32(_batched_fma_dot(x, y))


def dot_f32_reference(x, y) -> np.float32:
    """Plain FP32 dot product with one rounding per fused multiply-add."""
    return partial_dot(x, y)


def dot_f32_reference_batch(X, Y) -> np.ndarray:
    return _batched_fma_dot(X, Y)


def dot_split_batch(x: SplitMatrix, y: SplitMatrix, scheme: ProductScheme):
    """Many independent split dot products at once.

    ``x`` and ``y`` hold component arrays of shape ``(k, batch, n)``.
    Returns ``(values, PartialProducts)`` with arrays of shape ``(batch,)``.
    """
    _check_scheme(x, y, scheme)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    Z = {}
    for i, j in scheme.pairs:
        Z[(i, j)] = _batched_fma_dot(x.components[i], y.components[j])
    total, bins = combine_bins(Z, scheme)
    return total, PartialProducts(Z, bins)


def dot_split(x: SplitMatrix, y: SplitMatrix, scheme: ProductScheme):
    """Split dot product of two vectors; returns ``(value, PartialProducts)``."""
    if len(x.shape) != 1:
        raise ValueError("dot_split expects split vectors; use dot_split_batch")
    total, parts = dot_split_batch(x, y, scheme)
    return total[()], PartialProducts(
        {k: v[()] for k, v in parts.Z.items()}, {k: v[()] for k, v in parts.bins.items()}
    )


# -- GEMM ------------------------------------------------------------------


def _check_gemm_dims(a_shape, b_shape):
    if len(a_shape) != 2 or len(b_shape) != 2 or a_shape[1] != b_shape[0]:
        raise ValueError(f"dimension mismatch: {a_shape} x {b_shape}")


def gemm_partials(A: SplitMatrix, B: SplitMatrix, pairs) -> dict:
    """FP32 partial products Z^(i,j) = A_i @ B_j for each requested pair.

    Accumulation runs over the inner index in order; each step rounds once
    to FP32, so entry (r, c) matches the corresponding dot product bit for
    bit.
    """
    _check_gemm_dims(A.shape, B.shape)
    pairs = list(pairs)
    m, n = A.shape
    p = B.shape[1]
    if not pairs:
        return {}
    X = A.components.astype(np.float64)[[i for i, _ in pairs]]
    Y = B.components.astype(np.float64)[[j for _, j in pairs]]
    Z = np.zeros((len(pairs), m, p), dtype=np.float32)
    for l in range(n):
        Z = fma_f32_short(X[:, :, l, None], Y[:, None, l, :], Z)
    return {pair: Z[t] for t, pair in enumerate(pairs)}


def gemm_split(A: SplitMatrix, B: SplitMatrix, scheme: ProductScheme, return_partials=False):
    _check_scheme(A, B, scheme)
    Z = gemm_partials(A, B, scheme.pairs)
    total, bins = combine_bins(Z, scheme)
    if return_partials:
        return total, PartialProducts(Z, bins)
    return total


def gemm_f32_reference(A, B) -> np.ndarray:
    """FP32 GEMM, each entry accumulated with single-rounding FMAs in order."""
    A = np.asarray(A, dtype=np.float32)
    B = np.asarray(B, dtype=np.float32)
    _check_gemm_dims(A.shape, B.shape)
    C = np.zeros((A.shape[0], B.shape[1]), dtype=np.float32)
    for l in range(A.shape[1]):
        C = fma_f32(A[:, l, None], B[None, l, :], C)
    return C


def gemm_f64_reference(A, B) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    _check_gemm_dims(A.shape, B.shape)
    return A @ B
