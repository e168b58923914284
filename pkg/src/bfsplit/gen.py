"""Seeded input generators for the accuracy and solver experiments.

All randomness comes from numpy's PCG64 generator.  A spec plus a seed
determines the output bit for bit; experiments derive per-trial streams
from ``(seed, trial_index)``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

KINDS = ("uniform", "wide", "gaussian", "conditioned", "diagdom", "adversarial")

# Exponent bounds keeping every pairwise product below FLT_MAX and above
# FLT_MIN, used by the GEMM/LU experiments' wide-range arm.
PRODUCT_SAFE_EXPONENTS = (-62, 62)


@dataclass(frozen=True)
class GenSpec:
    """Description of an input distribution.

    kind
        ``uniform``      FP64 uniforms on [lo, hi] rounded to FP32
        ``wide``         random sign, exponent uniform on [exp_min, exp_max],
                         random 23-bit mantissa
        ``gaussian``     like ``wide`` but exponent ~ round(N(mean, sigma))
        ``conditioned``  Q1 diag(s) Q2^T, geometric s with s_max/s_min = cond
        ``diagdom``      uniform off-diagonals, diagonal = 1 + max(row, column)
                         absolute sum
        ``adversarial``  tiny values whose 3-way split drops mantissa bits 0-15
    """

    kind: str = "uniform"
    seed: int = 0
    lo: float = -1.0
    hi: float = 1.0
    exp_min: int = -126
    exp_max: int = 127
    mean: float = 0.0
    sigma: float = 8.0
    cond: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.kind == "uniform" and not self.lo <= self.hi:
            raise ValueError("uniform range needs lo <= hi")
        if self.kind == "wide" and not -126 <= self.exp_min <= self.exp_max <= 127:
            raise ValueError(f"exponent bounds [{self.exp_min}, {self.exp_max}] outside FP32 normals")
        if self.kind == "gaussian" and self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.kind == "conditioned" and (self.cond is None or self.cond < 1):
            raise ValueError("conditioned matrices need cond >= 1")

    def with_seed(self, seed) -> "GenSpec":
        return replace(self, seed=seed)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream for one trial of an experiment."""
    return np.random.default_rng([seed, trial])


def box_muller(rng: np.random.Generator, size) -> np.ndarray:
    """Standard normal deviates from pairs of uniforms (cosine branch)."""
    u1 = 1.0 - rng.random(size)  # (0, 1]
    u2 = rng.random(size)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def _assemble(rng, exponents) -> np.ndarray:
    shape = np.shape(exponents)
    sign = rng.integers(0, 2, size=shape, dtype=np.uint32) << 31
    mant = rng.integers(0, 1 << 23, size=shape, dtype=np.uint32)
    field = (np.asarray(exponents, dtype=np.int64) + 127).astype(np.uint32) << 23
    return (sign | field | mant).view(np.float32)


def _elements(spec: GenSpec, shape, rng) -> np.ndarray:
    if spec.kind == "uniform":
        return rng.uniform(spec.lo, spec.hi, size=shape).astype(np.float32)
    if spec.kind == "wide":
        e = rng.integers(spec.exp_min, spec.exp_max, size=shape, endpoint=True)
        return _assemble(rng, e)
    if spec.kind == "gaussian":
        e = np.rint(spec.mean + spec.sigma * box_muller(rng, shape))
        return _assemble(rng, np.clip(e, -126, 127))
    if spec.kind == "adversarial":
        return adversarial_values(rng, shape)
    raise ValueError(f"{spec.kind} generator needs a square shape")


def adversarial_values(rng: np.random.Generator, shape) -> np.ndarray:
    """Values with exponent field 1, mantissa bit 16 set, bits 17-22 clear.

    Bit 15 is kept clear and bits 13-14 set, so BF16 rounding truncates and
    the discarded low half of the mantissa (more than 2^-9 relative)
    underflows out of the remaining components.
    """
    low = rng.integers(0, 1 << 13, size=shape, dtype=np.uint32) | (3 << 13)
    sign = rng.integers(0, 2, size=shape, dtype=np.uint32) << 31
    bits = sign | np.uint32(1 << 23) | np.uint32(1 << 16) | low
    return bits.view(np.float32)


def conditioned_matrix(n: int, cond: float, rng: np.random.Generator) -> np.ndarray:
    """FP64 matrix with 2-norm 1 and geometric singular values down to 1/cond."""
    q1, r1 = np.linalg.qr(rng.standard_normal((n, n)))
    q2, r2 = np.linalg.qr(rng.standard_normal((n, n)))
    # sign fix gives Haar-distributed factors
    q1 = q1 * np.sign(np.diag(r1))
    q2 = q2 * np.sign(np.diag(r2))
    if n == 1:
        s = np.ones(1)
    else:
        s = cond ** (-np.arange(n) / (n - 1))
    return (q1 * s) @ q2.T


def diag_dominant_matrix(n: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.uniform(-1.0, 1.0, size=(n, n))
    np.fill_diagonal(a, 0.0)
    off = np.maximum(np.abs(a).sum(axis=1), np.abs(a).sum(axis=0))
    np.fill_diagonal(a, off + 1.0)
    return a


def gen_matrix(spec: GenSpec, shape, rng: np.random.Generator | None = None) -> np.ndarray:
    """FP32 matrix drawn from ``spec``; ``shape`` is an int for square kinds."""
    rng = spec.rng() if rng is None else rng
    if spec.kind in ("conditioned", "diagdom"):
        n = shape if np.isscalar(shape) else shape[0]
        if not np.isscalar(shape) and (len(shape) != 2 or shape[0] != shape[1]):
            raise ValueError(f"{spec.kind} matrices are square, got {shape}")
        if n < 1:
            raise ValueError("matrix order must be positive")
        if spec.kind == "conditioned":
            return conditioned_matrix(n, spec.cond, rng).astype(np.float32)
        return diag_dominant_matrix(n, rng).astype(np.float32)
    shape = (shape, shape) if np.isscalar(shape) else tuple(shape)
    if any(d < 0 for d in shape):
        raise ValueError(f"invalid shape {shape}")
    return _elements(spec, shape, rng)


def gen_vector(spec: GenSpec, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
    if n < 0:
        raise ValueError("vector length must be nonnegative")
    if spec.kind in ("conditioned", "diagdom"):
        # right-hand sides for matrix kinds: uniform on [-1, 1]
        spec = GenSpec("uniform", spec.seed)
    rng = spec.rng() if rng is None else rng
    return _elements(spec, (n,), rng)


_DIST_ALIASES = {"uniform": "uniform", "wide": "wide", "gaussian": "gaussian",
                 "diagdom": "diagdom", "adversarial": "adversarial"}


def parse_dist(text: str, seed: int = 0) -> GenSpec:
    """Parse the command-line distribution grammar.

    ``uniform`` | ``uniform:<lo>:<hi>`` | ``wide`` | ``wide:<emin>:<emax>`` |
    ``gaussian`` | ``gaussian:<mean>:<sigma>`` | ``cond:<k>`` | ``diagdom`` |
    ``adversarial``
    """
    head, *args = text.strip().split(":")
    try:
        if head == "cond":
            (k,) = args
            return GenSpec("conditioned", seed, cond=float(k))
        if head not in _DIST_ALIASES:
            raise ValueError
        kw = {}
        if args:
            a, b = args
            if head == "uniform":
                kw = {"lo": float(a), "hi": float(b)}
            elif head == "wide":
                kw = {"exp_min": int(a), "exp_max": int(b)}
            elif head == "gaussian":
                kw = {"mean": float(a), "sigma": float(b)}
            else:
                raise ValueError
        return GenSpec(_DIST_ALIASES[head], seed, **kw)
    except ValueError as exc:
        if str(exc).startswith(("unknown", "uniform", "exponent", "sigma", "conditioned")):
            raise
        raise ValueError(f"cannot parse distribution {text!r}") from None


def dist_label(spec: GenSpec) -> str:
    if spec.kind == "conditioned":
        return f"cond:{spec.cond:g}"
    if spec.kind == "uniform":
        return f"uniform:{spec.lo:g}:{spec.hi:g}"
    if spec.kind == "wide":
        return f"wide:{spec.exp_min}:{spec.exp_max}"
    if spec.kind == "gaussian":
        return f"gaussian:{spec.mean:g}:{spec.sigma:g}"
    return spec.kind
