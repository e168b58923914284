"""LU factorization in emulated precisions, iterative refinement and GMRES.

The factorization is a right-looking blocked LU with partial pivoting.
The trailing update (the cubic term) runs in the declared working
precision; panels use FP32 FMAs except in the 16-bit modes:

``fp64``
    everything in float64 (the oracle)
``fp32``
    FP32 GEMM with single-rounding FMAs
``bf16`` / ``fp16``
    every stored result rounded to the 16-bit format, including the input
    and the panel, so all factor entries are representable
``b3x6``, ``b2x3``, ... (any product scheme name)
    the trailing GEMM is a split BF16 GEMM under that scheme

Solves and residuals for refinement and GMRES are always FP64.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .kernels import gemm_f32_reference, gemm_split, get_scheme
from .precision import QUANTIZERS, fma_f32
from .split import split_matrix

PANEL_WIDTH = 32
EPS64 = 2.0**-53
DEFAULT_MAX_ITERS = 100


class SingularMatrixError(ArithmeticError):
    def __init__(self, column):
        super().__init__(f"exact zero pivot in column {column}")
        self.column = column


class SolverBreakdown(RuntimeError):
    pass


def _resolve(precision: str):
    """Return (storage dtype, quantizer or None, scheme or None)."""
    if precision == "fp64":
        return np.float64, None, None
    if precision == "fp32":
        return np.float32, None, None
    if precision in QUANTIZERS:
        return np.float32, QUANTIZERS[precision], None
    try:
        return np.float32, None, get_scheme(precision)
    except KeyError:
        raise ValueError(f"unknown working precision {precision!r}") from None


@dataclass
class LuFactors:
    """Packed unit-lower L and upper U with ``A[perm] = L @ U``."""

    lu: np.ndarray
    perm: np.ndarray
    precision: str

    @property
    def n(self) -> int:
        return self.lu.shape[0]

    @property
    def L(self) -> np.ndarray:
        return np.tril(self.lu, -1) + np.eye(self.n, dtype=self.lu.dtype)

    @property
    def U(self) -> np.ndarray:
        return np.triu(self.lu)


def _rank1(A, rows, cols, l, u, dtype, q):
    """A[rows, cols] -= outer(l, u) with one rounding (plus storage rounding)."""
    if dtype == np.float64:
        A[rows, cols] -= np.outer(l, u)
        return
    upd = fma_f32(-l[:, None], u[None, :], A[rows, cols])
    A[rows, cols] = q(upd) if q is not None else upd


def getrf(A, precision: str = "fp32", panel_width: int = PANEL_WIDTH) -> LuFactors:
    """LU factorization with partial pivoting in the given working precision."""
    dtype, q, scheme = _resolve(precision)
    A = np.array(A, dtype=dtype)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"getrf needs a square matrix, got shape {A.shape}")
    if q is not None:
        A = q(A)
    n = A.shape[0]
    perm = np.arange(n)

    for k0 in range(0, n, panel_width):
        k1 = min(k0 + panel_width, n)
        for j in range(k0, k1):
            p = j + int(np.argmax(np.abs(A[j:, j])))
            if A[p, j] == 0:
                raise SingularMatrixError(j)
            if p != j:
                A[[j, p]] = A[[p, j]]
                perm[[j, p]] = perm[[p, j]]
            if j + 1 < n:
                l = (A[j + 1:, j] / A[j, j]).astype(dtype)
                A[j + 1:, j] = q(l) if q is not None else l
                if j + 1 < k1:
                    _rank1(A, slice(j + 1, None), slice(j + 1, k1), A[j + 1:, j], A[j, j + 1:k1], dtype, q)
        if k1 == n:
            break
        # U12 <- L11^{-1} A12
        for j in range(k0, k1 - 1):
            _rank1(A, slice(j + 1, k1), slice(k1, None), A[j + 1:k1, j], A[j, k1:], dtype, q)
        L21 = A[k1:, k0:k1]
        U12 = A[k0:k1, k1:]
        if dtype == np.float64:
            A[k1:, k1:] -= L21 @ U12
        elif q is not None:
            for l in range(k1 - k0):
                _rank1(A, slice(k1, None), slice(k1, None), L21[:, l], U12[l, :], dtype, q)
        else:
            if scheme is None:
                upd = gemm_f32_reference(L21, U12)
            else:
                upd = gemm_split(
                    split_matrix(L21, scheme.x_splits), split_matrix(U12, scheme.y_splits), scheme
                )
            A[k1:, k1:] = (A[k1:, k1:] - upd).astype(np.float32)
    return LuFactors(A, perm, precision)


def getrs(f: LuFactors, b, solve_precision: str = "fp64") -> np.ndarray:
    """Solve ``A x = b`` with the factors, by substitution in the given precision."""
    dt = {"fp64": np.float64, "fp32": np.float32}[solve_precision]
    b = np.asarray(b)
    if b.shape[0] != f.n:
        raise ValueError(f"right-hand side has {b.shape[0]} rows, factors are {f.n}x{f.n}")
    lu = f.lu.astype(dt)
    y = scipy.linalg.solve_triangular(lu, b[f.perm].astype(dt), lower=True, unit_diagonal=True,
                                      check_finite=False)
    return scipy.linalg.solve_triangular(lu, y, lower=False, check_finite=False)


def lu_residual(A, f: LuFactors) -> float:
    """||PA - LU||_F / ||A||_F evaluated in FP64."""
    A = np.asarray(A, dtype=np.float64)
    L = f.L.astype(np.float64)
    U = f.U.astype(np.float64)
    return float(np.linalg.norm(A[f.perm] - L @ U) / np.linalg.norm(A))


def cond_estimate(A) -> float:
    """1-norm condition estimate from FP64 LU factors (LAPACK gecon)."""
    A = np.asarray(A, dtype=np.float64)
    lu, _ = scipy.linalg.lu_factor(A, check_finite=False)
    rcond, info = scipy.linalg.lapack.dgecon(lu, np.linalg.norm(A, 1), norm="1")
    if info != 0 or rcond == 0:
        return np.inf
    return 1.0 / rcond


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residual_history: list = field(default_factory=list)
    tolerance_used: float = 0.0
    reason: str = ""
    true_residual: float | None = None

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1]


def _tolerance(A, cond, tol_factor):
    c = cond if cond is not None else cond_estimate(A)
    return c * EPS64 * tol_factor


def _relres(A64, x, b64, bnorm):
    return float(np.linalg.norm(b64 - A64 @ x) / bnorm)


def iterative_refinement(A, b, low_prec: str = "bf16", tol_factor: float = 1.0,
                         max_iters: int = DEFAULT_MAX_ITERS, cond: float | None = None,
                         factors: LuFactors | None = None):
    """LU iterative refinement: factor once in ``low_prec``, correct in FP64.

    Iteration k solves with the low-precision factors against the current
    FP64 residual and updates x.  The first iteration starts from x = 0, so
    its solve is the plain low-precision solution.  Stops once
    ||b - Ax||_2 / ||b||_2 <= cond * 2^-53 * tol_factor.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    A64 = np.asarray(A, dtype=np.float64)
    b64 = np.asarray(b, dtype=np.float64)
    f = factors if factors is not None else getrf(A, low_prec)
    tol = _tolerance(A64, cond, tol_factor)
    x = np.zeros_like(b64)
    bnorm = np.linalg.norm(b64)
    if bnorm == 0:
        return x, SolveReport(True, 0, [0.0], tol, "zero right-hand side")
    hist = [1.0]
    r = b64.copy()
    for it in range(1, max_iters + 1):
        x = x + getrs(f, r)
        r = b64 - A64 @ x
        res = float(np.linalg.norm(r) / bnorm)
        hist.append(res)
        if res <= tol:
            return x, SolveReport(True, it, hist, tol, "tolerance met")
        if not np.isfinite(res):
            return x, SolveReport(False, it, hist, tol, "diverged")
    return x, SolveReport(False, max_iters, hist, tol, "max iterations")


def gmres_preconditioned(A, b, precond: LuFactors | None = None, tol_factor: float = 1.0,
                         max_iters: int = DEFAULT_MAX_ITERS, restart: int | None = None,
                         cond: float | None = None, x0=None):
    """Left-preconditioned restarted GMRES in FP64.

    The preconditioner is applied as an FP64 solve with ``precond``'s
    factors; ``None`` means no preconditioning.  Starts from ``x0`` (zero by
    default).  Convergence is judged on the preconditioned relative
    residual ||M^-1 (b - Ax)|| / ||M^-1 b|| carried by the Givens recurrence,
    against the refinement tolerance.  ``iterations`` counts Arnoldi steps
    over all restart cycles.  The report's ``true_residual`` is the
    explicitly computed ||b - Ax||_2 / ||b||_2 of the returned iterate.
    """
    A64 = np.asarray(A, dtype=np.float64)
    b64 = np.asarray(b, dtype=np.float64)
    n = A64.shape[0]
    if A64.shape != (n, n) or b64.shape[0] != n:
        raise ValueError("dimension mismatch")
    restart = n if restart is None else restart
    if restart < 1:
        raise ValueError("restart must be >= 1")
    tol = _tolerance(A64, cond, tol_factor)
    M = (lambda v: v) if precond is None else (lambda v: getrs(precond, v))

    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    bnorm = np.linalg.norm(b64)
    if bnorm == 0:
        return np.zeros(n), SolveReport(True, 0, [0.0], tol, "zero right-hand side", 0.0)
    mbnorm = np.linalg.norm(M(b64))
    if mbnorm == 0 or not np.isfinite(mbnorm):
        raise SolverBreakdown("preconditioner maps b to zero or non-finite values")

    def done(conv, reason):
        return x, SolveReport(conv, total, hist, tol, reason, _relres(A64, x, b64, bnorm))

    total = 0
    hist = []
    while True:
        r = M(b64 - A64 @ x)
        beta = np.linalg.norm(r)
        if not np.isfinite(beta):
            return done(False, "breakdown")
        if not hist:
            hist.append(beta / mbnorm)
        if beta / mbnorm <= tol:
            return done(True, "tolerance met")
        if total >= max_iters:
            return done(False, "max iterations")
        m = min(restart, max_iters - total)
        V = np.zeros((n, m + 1))
        R = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[:, 0] = r / beta
        for j in range(m):
            w = M(A64 @ V[:, j])
            h = np.zeros(j + 2)
            for i in range(j + 1):
                h[i] = V[:, i] @ w
                w = w - h[i] * V[:, i]
            h[j + 1] = np.linalg.norm(w)
            breakdown = h[j + 1] <= 1e-14 * np.linalg.norm(h)
            if not breakdown:
                V[:, j + 1] = w / h[j + 1]
            # previous Givens rotations, then a new one to zero h[j+1]
            for i in range(j):
                h[i], h[i + 1] = cs[i] * h[i] + sn[i] * h[i + 1], -sn[i] * h[i] + cs[i] * h[i + 1]
            rho = np.hypot(h[j], h[j + 1])
            if rho == 0:
                return done(False, "breakdown")
            cs[j], sn[j] = h[j] / rho, h[j + 1] / rho
            h[j], h[j + 1] = rho, 0.0
            R[: j + 1, j] = h[: j + 1]
            g[j], g[j + 1] = cs[j] * g[j], -sn[j] * g[j]
            total += 1
            res = abs(g[j + 1]) / mbnorm
            hist.append(res)
            if res <= tol or breakdown or j == m - 1:
                y = scipy.linalg.solve_triangular(R[: j + 1, : j + 1], g[: j + 1], check_finite=False)
                x = x + V[:, : j + 1] @ y
                if res <= tol:
                    return done(True, "tolerance met")
                if breakdown:
                    return done(False, "breakdown")
                break
