"""How close do split-BF16 GEMMs get to an FP64 reference?

Three BF16 pieces per operand with six products lands slightly better
than plain FP32 on data in [-1, 1]; two pieces with three products is
far worse.  On data spanning a huge exponent range the gap closes.
"""
import numpy as np

from bfsplit.gen import GenSpec, gen_matrix
from bfsplit.kernels import combine_bins, gemm_f32_reference, gemm_f64_reference, gemm_partials, get_scheme
from bfsplit.metrics import rel_frobenius_error
from bfsplit.split import split_matrix

n = 96
schemes = [get_scheme(s) for s in ("b1x1", "b2x3", "b3x6", "b3x6d", "b3x9")]
pairs = sorted({p for s in schemes for p in s.pairs})

for spec in (GenSpec("uniform", seed=1), GenSpec("wide", seed=1, exp_min=-62, exp_max=62)):
    A = gen_matrix(spec, (n, n))
    B = gen_matrix(spec.with_seed(2), (n, n))
    D = gemm_f64_reference(A, B)
    # form every partial product once, then combine per scheme
    Z = gemm_partials(split_matrix(A), split_matrix(B), pairs)
    print(f"{spec.kind} data, {n}x{n}")
    print(f"  {'sgemm':6s} {rel_frobenius_error(gemm_f32_reference(A, B), D):.3e}")
    for s in schemes:
        C, _ = combine_bins(Z, s)
        print(f"  {s.name:6s} {rel_frobenius_error(C, D):.3e}   ({s.n_products} products)")
