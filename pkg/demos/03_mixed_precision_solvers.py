"""Factor in 16 bits, finish in 64: refinement versus GMRES."""
import numpy as np

from bfsplit import getrf, getrs, gmres_preconditioned, iterative_refinement
from bfsplit.gen import GenSpec, gen_matrix, gen_vector

rng = np.random.default_rng(7)
n = 50

print("iterative refinement on matrices with a set condition number")
for cond in (10.0, 1e3):
    A = gen_matrix(GenSpec("conditioned", cond=cond), n, rng)
    b = gen_vector(GenSpec("uniform"), n, rng)
    for prec in ("fp32", "fp16", "bf16"):
        _, rep = iterative_refinement(A, b, prec, cond=cond)
        print(f"  cond {cond:>6g} {prec}: converged={rep.converged!s:5s} iterations={rep.iterations}")

print()
print("GMRES with the low-precision LU as preconditioner, diagonally dominant")
A = gen_matrix(GenSpec("diagdom"), n, rng)
b = gen_vector(GenSpec("uniform"), n, rng)
for prec in ("fp32", "fp16", "bf16"):
    f = getrf(A, prec)
    _, rep = gmres_preconditioned(A, b, f, x0=getrs(f, b))
    print(f"  {prec}: iterations={rep.iterations} true residual={rep.true_residual:.1e}")
_, rep = gmres_preconditioned(A, b)
print(f"  none: iterations={rep.iterations}")
