"""Software BF16 arithmetic with multi-component FP32 splits.

Submodules: ``precision`` (16-bit conversions, FP32 FMA), ``split``,
``kernels`` (split dot/GEMM), ``linalg`` (LU, refinement, GMRES),
``gen`` (input generators), ``metrics`` and ``experiments``.
"""
from .precision import (
    RoundingConfig,
    bf16_to_f32,
    fma_f32,
    fp16_to_f32,
    quantize_bf16,
    quantize_fp16,
    round_f32_to_bf16,
    round_f32_to_fp16,
)
from .split import (
    SplitMatrix,
    SplitScalar,
    UnsupportedValueError,
    recombine,
    split_matrix,
    split_scalar,
    split_vector,
)
from .kernels import (
    SCHEMES,
    PartialProducts,
    ProductScheme,
    SchemeMismatchError,
    dot_f32_reference,
    dot_split,
    gemm_f32_reference,
    gemm_f64_reference,
    gemm_split,
    get_scheme,
    partial_dot,
)
from .linalg import (
    LuFactors,
    SingularMatrixError,
    SolveReport,
    getrf,
    getrs,
    gmres_preconditioned,
    iterative_refinement,
)
from .gen import GenSpec, gen_matrix, gen_vector, parse_dist
from .metrics import ErrorModel, ErrorStats, check_bound, elementwise_error_ratio, rel_frobenius_error

__version__ = "0.1.0"
