"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``.  The lines are written
straight to the terminal so they show up even when output is captured.
"""
import time
from fractions import Fraction

import numpy as np
import pytest

from bfsplit import experiments as ex
from bfsplit.gen import adversarial_values
from bfsplit.precision import bf16_to_f32, fp16_to_f32, round_f32_to_bf16, round_f32_to_fp16
from bfsplit.split import recombine, split_scalar, split_values


@pytest.fixture
def verdict(capsys):
    def report(num, title, checks):
        """``checks`` is a list of (label, ok) pairs."""
        ok = all(c for _, c in checks)
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {num}: {title}")
            for label, c in checks:
                if not c:
                    print(f"         failed: {label}")
        assert ok, "; ".join(label for label, c in checks if not c)

    return report


def _safe_values(rng, n):
    e = rng.integers(-110, 127, n, endpoint=True)
    sign = rng.integers(0, 2, n, dtype=np.uint32) << 31
    mant = rng.integers(0, 1 << 23, n, dtype=np.uint32)
    return (sign | ((e + 127).astype(np.uint32) << 23) | mant).view(np.float32)


def _by(rows, *keys):
    return {tuple(r[k] for k in keys[:-1]): r[keys[-1]] for r in rows}


def test_criterion_01_conversions(verdict):
    t0 = time.perf_counter()
    p = np.arange(1 << 16, dtype=np.uint32).astype(np.uint16)
    vb, vh = bf16_to_f32(p), fp16_to_f32(p)
    fb, fh = np.isfinite(vb), np.isfinite(vh)
    rt_b = np.array_equal(round_f32_to_bf16(vb)[fb], p[fb])
    rt_h = np.array_equal(round_f32_to_fp16(vh)[fh], p[fh])
    elapsed = time.perf_counter() - t0

    # ties: halfway between consecutive BF16 values; oracle picks the even neighbour
    hi = np.arange(0, 0x7F7F, dtype=np.uint32)
    ties = ((hi << 16) | 0x8000).view(np.float32)
    want = np.where(hi % 2 == 0, hi, hi + 1)
    tie_ok = np.array_equal(round_f32_to_bf16(ties).astype(np.uint32), want)
    h = np.arange(0, 0x7BFF, dtype=np.uint32)
    lo_v = fp16_to_f32(h.astype(np.uint16)).astype(np.float64)
    hi_v = fp16_to_f32((h + 1).astype(np.uint16)).astype(np.float64)
    mid = ((lo_v + hi_v) / 2).astype(np.float32)  # exact: FP16 midpoints fit in FP32
    want_h = np.where(h % 2 == 0, h, h + 1)
    tie_h = np.array_equal(round_f32_to_fp16(mid).astype(np.uint32), want_h)
    verdict(1, f"exhaustive 16-bit roundtrip and RNE ties ({elapsed * 1e3:.0f} ms)", [
        ("BF16 roundtrip", rt_b), ("FP16 roundtrip", rt_h), ("BF16 ties to even", tie_ok),
        ("FP16 ties to even", tie_h), ("runtime < 1 s", elapsed < 1.0),
    ])


def test_criterion_02_split_reconstruction(verdict):
    a = _safe_values(np.random.default_rng(2024), 1_000_000)
    failures = int(np.count_nonzero(recombine(split_values(a)) != a.astype(np.float64)))
    # exponent field 1, bit 16 set, bits 0-14 set, round bit 15 clear
    v = np.array([0x00817FFF], dtype=np.uint32).view(np.float32)[0]
    s = split_scalar(v)
    rel = abs(s.recombine() - float(v)) / float(v)
    lost = (int(np.float32(s.recombine()).view(np.uint32)) & 0xFFFF) == 0
    adv = adversarial_values(np.random.default_rng(1), 10_000)
    rel_adv = np.abs(recombine(split_values(adv)) - adv) / np.abs(adv)
    verdict(2, f"split reconstruction: {failures} failures / 1e6; tiny-value rel error {rel:.3e}", [
        ("exact reconstruction", failures == 0),
        ("tiny value loses bits 0-15", lost and s.components[1:] == (0, 0)),
        ("tiny value error in (2^-9, 2^-7)", 2.0**-9 < rel < 2.0**-7),
        ("adversarial generator errors in (2^-9, 2^-7)",
         bool(np.all((rel_adv > 2.0**-9) & (rel_adv < 2.0**-7)))),
    ])


def test_criterion_03_decay(verdict):
    rng = np.random.default_rng(3)
    e = rng.integers(-100, 100, 1_000_000, endpoint=True)
    a = ((e + 127).astype(np.uint32) << 23 | rng.integers(0, 1 << 23, e.size, dtype=np.uint32)).view(np.float32)
    b0, b1 = np.abs(split_values(a, 2).astype(np.float64))
    m = float(np.mean(b1 / b0))
    verdict(3, f"mean |b1/b0| = 1/{1 / m:.1f}", [("within 15% of 1/768", abs(m * 768 - 1) <= 0.15)])


def test_criterion_04_bound_audit(verdict):
    t0 = time.perf_counter()
    rows = ex.run_bound_audit(ex.ExperimentConfig("bound-audit"), raise_on_violation=False)
    elapsed = time.perf_counter() - t0
    random_rows = [r for r in rows if r["dist"] != "exact"]
    n_dots = sum(r["trials"] for r in random_rows if r["bound_kind"] == "bf16_z2")
    viol = {k: sum(r["violations"] for r in rows if r["bound_kind"] == k)
            for k in ("fp32_dot", "bf16_z2", "bf16_z2_exact_case", "z00_exact")}
    verdict(4, f"bound audit: {n_dots} dot products, violations {viol}, {elapsed:.0f} s", [
        (">= 1e4 dot products", n_dots >= 10_000),
        ("max n = 4096", max(r["n"] for r in random_rows) == 4096),
        ("all three distributions", {r["dist"] for r in random_rows} == {"uniform", "wide", "gaussian"}),
        ("no violations", not any(viol.values())),
        ("exact-case rows present", any(r["bound_kind"] == "bf16_z2_exact_case" for r in rows)),
        ("runtime < 2 min", elapsed < 120),
    ])


def _gemm(dist):
    rows = ex.run_gemm_accuracy(ex.ExperimentConfig("gemm-accuracy", dists=(dist,), trials=100))
    return _by(rows, "size", "scheme", "mean_rel_err")


def test_criterion_05_gemm_small_range(verdict):
    m = _gemm("uniform")
    checks = []
    for n in (64, 128, 256):
        e = [m[(n, s)] for s in ("b2x3", "sgemm", "b3x6", "b3x6d")]
        checks.append((f"n={n}: b2x3 > sgemm > b3x6 > b3x6d  ({', '.join(f'{x:.2e}' for x in e)})",
                       e[0] > e[1] > e[2] > e[3]))
    verdict(5, "GEMM accuracy ordering, uniform[-1,1]", checks)


def test_criterion_06_gemm_wide_range(verdict):
    m = _gemm("wide")
    checks = []
    for n in (64, 128, 256):
        f, b = m[(n, "sgemm")], m[(n, "b3x6")]
        checks.append((f"n={n}: sgemm {f:.3e} <= b3x6 {b:.3e} <= 2 sgemm", f <= b <= 2 * f))
    verdict(6, "GEMM accuracy, wide exponent range", checks)


def test_criterion_07_lu_ratio(verdict):
    rows = ex.run_getrf_accuracy(ex.ExperimentConfig("getrf-accuracy", trials=25))
    checks = [(f"{r['range']} n={r['size']}: ratio {r['error_ratio']:.2f} >= 1", r["error_ratio"] >= 1.0)
              for r in rows]
    assert len(checks) == 6
    verdict(7, "LU elementwise error ratio FP32 / split", checks)


def test_criterion_08_refinement(verdict):
    t0 = time.perf_counter()
    rows = ex.run_refine(ex.ExperimentConfig("refine", trials=100))
    elapsed = time.perf_counter() - t0
    pct = _by(rows, "precision", "cond", "pct_converged")
    its = _by(rows, "precision", "cond", "mean_iters")
    checks = []
    for c in ("10", "100", "1000", "10000"):
        p32, p16, pb = pct[("fp32", c)], pct[("fp16", c)], pct[("bf16", c)]
        checks += [
            (f"cond {c}: FP32 100% (got {p32:g})", p32 == 100),
            (f"cond {c}: FP16 in [75, 100] (got {p16:g})", 75 <= p16 <= 100),
            (f"cond {c}: BF16 in [10, 65] (got {pb:g})", 10 <= pb <= 65),
            (f"cond {c}: BF16 < FP16 ({pb:g} vs {p16:g})", pb < p16),
        ]
        i32, i16, ib = its[("fp32", c)], its[("fp16", c)], its[("bf16", c)]
        checks.append((f"cond {c}: iterations FP32 < FP16 < BF16 ({i32:.3g}, {i16:.3g}, {ib:.3g})",
                       i32 < i16 < ib))
    checks.append((f"runtime < 5 min ({elapsed:.0f} s)", elapsed < 300))
    verdict(8, "iterative refinement convergence table", checks)


def test_criterion_09_gmres(verdict):
    rows = ex.run_gmres(ex.ExperimentConfig("gmres", trials=100))
    target = {("fp32", 10): 2.0, ("bf16", 10): 6.59, ("fp16", 10): 4.24,
             ("fp32", 50): 2.0, ("bf16", 50): 7.0, ("fp16", 50): 5.0,
             ("fp32", 100): 2.0, ("bf16", 100): 7.0, ("fp16", 100): 5.0}
    checks = []
    for r in rows:
        key = (r["precision"], r["n"])
        checks.append((f"{key}: 100% converged (got {r['pct_converged']:g})", r["pct_converged"] == 100))
        checks.append((f"{key}: mean iterations {r['mean_iters']:.2f} within 2 of {target[key]}",
                       abs(r["mean_iters"] - target[key]) <= 2))
    verdict(9, "preconditioned GMRES table", checks)


def test_criterion_10_speedup(verdict):
    rows = ex.run_speedup(ex.ExperimentConfig("speedup", densities=(8, 16, 32), schemes=("b3x6",)))
    got = {r["density"]: (Fraction(r["projected_speedup_exact"]), r["projected_speedup"]) for r in rows}
    checks = [(f"{d}/6", got[d][0] == Fraction(d, 6) and got[d][1] == d / 6) for d in (8, 16, 32)]
    checks.append(("rounded 1.33 / 2.67 / 5.33",
                   [round(got[d][1], 2) for d in (8, 16, 32)] == [1.33, 2.67, 5.33]))
    verdict(10, "speed-up projection", checks)


DETERMINISM_CONFIGS = [
    dict(experiment="gemm-accuracy", sizes=(16,), trials=3, dists=("uniform", "wide", "gaussian")),
    dict(experiment="getrf-accuracy", sizes=(40,), trials=2),
    dict(experiment="refine", sizes=(20,), trials=3),
    dict(experiment="gmres", sizes=(20,), trials=3),
    dict(experiment="speedup"),
    dict(experiment="bound-audit", sizes=(0, 5, 64), trials=8),
]


def test_criterion_11_determinism(verdict):
    checks = []
    for kw in DETERMINISM_CONFIGS:
        texts = [ex.to_csv(kw["experiment"], ex.run(ex.ExperimentConfig(seed=77, **kw))) for _ in range(2)]
        checks.append((f"{kw['experiment']} byte-identical", texts[0] == texts[1] and len(texts[0]) > 0))
    verdict(11, "determinism under fixed config and seed", checks)
