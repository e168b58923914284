"""Error models, oracle comparisons and bound checks.

Oracle arithmetic is FP64 throughout.  For BF16-valued inputs with n up to
2^24 the level-0 oracle sums are exact in FP64, which the tests rely on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EPS_F = 2.0**-24
EPS_B = 2.0**-8


def gamma(k, eps=EPS_F) -> float:
    """Rounding-error growth factor k*eps / (1 - k*eps)."""
    ke = k * eps
    if ke >= 1:
        return math.inf
    return ke / (1.0 - ke)


@dataclass(frozen=True)
class ErrorModel:
    eps_f: float = EPS_F
    eps_b: float = EPS_B

    def gamma_f(self, k) -> float:
        return gamma(k, self.eps_f)

    def gamma_b(self, k) -> float:
        return gamma(k, self.eps_b)


@dataclass(frozen=True)
class ErrorStats:
    mean_rel: float
    max_rel: float
    sample_count: int
    ratio_vs_reference: float = float("nan")

    @classmethod
    def from_samples(cls, errors, reference=None) -> "ErrorStats":
        errors = np.asarray(errors, dtype=np.float64)
        if errors.size == 0:
            raise ValueError("no samples")
        mean = float(errors.mean())
        ratio = float("nan")
        if reference is not None:
            ref = float(np.mean(reference))
            ratio = mean / ref if ref != 0 else float("inf")
        return cls(mean, float(errors.max()), int(errors.size), ratio)


def rel_frobenius_error(computed, oracle) -> float:
    computed = np.asarray(computed, dtype=np.float64)
    oracle = np.asarray(oracle, dtype=np.float64)
    if computed.shape != oracle.shape:
        raise ValueError(f"shape mismatch: {computed.shape} vs {oracle.shape}")
    denom = np.linalg.norm(oracle)
    if denom == 0:
        raise ZeroDivisionError("oracle has zero norm")
    return float(np.linalg.norm(computed - oracle) / denom)


@dataclass(frozen=True)
class RatioResult:
    ratio: float
    used: int
    excluded: int


def elementwise_error_ratio(a_err, b_err) -> RatioResult:
    """Mean over elements of a_err / b_err, skipping zero denominators.

    Where both errors are zero the element carries no information and is
    excluded too; the count of skipped elements is reported.
    """
    a = np.abs(np.asarray(a_err, dtype=np.float64))
    b = np.abs(np.asarray(b_err, dtype=np.float64))
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    ok = b != 0
    if not ok.any():
        raise ZeroDivisionError("all denominators are zero")
    return RatioResult(float(np.mean(a[ok] / b[ok])), int(ok.sum()), int((~ok).sum()))


# -- bound checks ------------------------------------------------------------


@dataclass(frozen=True)
class BoundCheck:
    kind: str
    passed: bool
    error: float
    bound: float

    @property
    def slack(self) -> float:
        return self.bound - self.error


def oracle_dot(x, y):
    """(z, z_tilde): exact-ish FP64 x.y and |x|.|y|.

    The products of FP32 inputs are exact in FP64; sums use math.fsum so
    the oracle is correctly rounded.
    """
    p = np.asarray(x, dtype=np.float64) * np.asarray(y, dtype=np.float64)
    return math.fsum(p), math.fsum(np.abs(p))


def exact_case_condition(x, y) -> bool:
    """The stated sufficient condition for an exact level-0 accumulation.

    ceil(log2(1.01 max|x y|)) - 23 <= ceil(log2(0.99 min|x y|)) - 15.
    It ignores growth of the running sum with n; see
    :func:`exact_accumulation_guaranteed` for a condition that does not.
    """
    p = np.abs(np.asarray(x, dtype=np.float64) * np.asarray(y, dtype=np.float64))
    if p.size == 0 or np.any(p == 0):
        return False
    hi = math.ceil(math.log2(1.01 * p.max()))
    lo = math.ceil(math.log2(0.99 * p.min()))
    return hi - 23 <= lo - 15


def exact_accumulation_guaranteed(x0, y0) -> bool:
    """True when every partial sum of the level-0 products fits in FP32.

    ``x0``, ``y0`` are the leading BF16 components.  Every product has at
    most 16 significant bits; if the absolute sum of products has its top
    bit within 24 bits of the lowest product bit, no FMA step can round.
    """
    p = np.abs(np.asarray(x0, dtype=np.float64) * np.asarray(y0, dtype=np.float64))
    p = p[p != 0]
    if p.size == 0:
        return True
    lsb = min(math.frexp(v)[1] - 16 for v in p)  # weight of lowest possible bit
    top = math.frexp(math.fsum(p))[1]
    return top - lsb <= 24


BOUND_KINDS = ("fp32_dot", "bf16_z2", "bf16_z2_exact_case")


def check_bound(kind: str, x, y, computed) -> BoundCheck:
    """Evaluate one of the dot-product error bounds against an FP64 oracle.

    fp32_dot            |Z - z| <= gamma_n z~
    bf16_z2             |Z2 - z| <= 1.01 (gamma_{n+2} + eps_b^3) z~
    bf16_z2_exact_case  |Z2 - z| <= 1.01 gamma_3 z~
    """
    n = int(np.size(x))
    if kind == "fp32_dot":
        factor = gamma(n)
    elif kind == "bf16_z2":
        factor = 1.01 * (gamma(n + 2) + EPS_B**3)
    elif kind == "bf16_z2_exact_case":
        factor = 1.01 * gamma(3)
    else:
        raise ValueError(f"unknown bound kind {kind!r}")
    z, zt = oracle_dot(x, y)
    err = abs(float(computed) - z)
    bound = factor * zt
    return BoundCheck(kind, err <= bound, err, bound)


def check_bound_batch(kind: str, X, Y, computed):
    """Vectorised :func:`check_bound` over rows; returns (passed, slack) arrays."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    n = X.shape[-1]
    factor = {
        "fp32_dot": gamma(n),
        "bf16_z2": 1.01 * (gamma(n + 2) + EPS_B**3),
        "bf16_z2_exact_case": 1.01 * gamma(3),
    }.get(kind)
    if factor is None:
        raise ValueError(f"unknown bound kind {kind!r}")
    P = X * Y
    z = np.array([math.fsum(row) for row in P]) if n else np.zeros(P.shape[0])
    zt = np.array([math.fsum(row) for row in np.abs(P)]) if n else np.zeros(P.shape[0])
    err = np.abs(np.asarray(computed, dtype=np.float64) - z)
    bound = factor * zt
    return err <= bound, bound - err
