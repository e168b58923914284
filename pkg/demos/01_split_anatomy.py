"""Take a few FP32 numbers apart into BF16 pieces and put them back."""
import numpy as np

from bfsplit import recombine, split_scalar
from bfsplit.split import split_values

# An ordinary number: three BF16 pieces, each about 2^-8 of the one before.
a = np.float32(np.pi)
s = split_scalar(a)
print("pi as FP32      :", repr(float(a)))
print("BF16 patterns   :", [hex(c) for c in s.components])
print("component values:", s.values.tolist())
print("recombined      :", repr(s.recombine()), "exact:", s.recombine() == float(a))

# Fewer pieces means fewer bits kept.
for k in (1, 2, 3):
    r = split_scalar(a, k).recombine()
    print(f"k={k}: relative error {abs(r - float(a)) / float(a):.3e}")

# Near the bottom of the exponent range the later pieces underflow to zero
# and the low half of the mantissa is simply gone.
tiny = np.array([0x00817FFF], dtype=np.uint32).view(np.float32)[0]
t = split_scalar(tiny)
print()
print("tiny value      :", float(tiny))
print("components      :", [hex(c) for c in t.components])
print("relative error  :", abs(t.recombine() - float(tiny)) / float(tiny), "(2^-9 =", 2.0**-9, ")")

# On average the second piece is about 1/768 of the first.
rng = np.random.default_rng(0)
x = rng.uniform(1, 2, 200_000).astype(np.float32)
b0, b1, _ = np.abs(split_values(x).astype(np.float64))
print()
print("mean |b1/b0| * 768 =", round(float(np.mean(b1 / b0) * 768), 3))
print("all reconstruct exactly:", bool(np.array_equal(recombine(split_values(x)), x.astype(np.float64))))
