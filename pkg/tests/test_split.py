import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bfsplit.gen import GenSpec, gen_matrix
from bfsplit.precision import bf16_to_f32, round_f32_to_bf16
from bfsplit.split import (
    BF16_MAX,
    SplitMatrix,
    UnsupportedValueError,
    exponent_of,
    exponent_range_violations,
    recombine,
    split_matrix,
    split_scalar,
    split_values,
)


def f32(bits):
    return np.array([bits], dtype=np.uint32).view(np.float32)[0]


def _bits(rng, e):
    sign = rng.integers(0, 2, e.shape, dtype=np.uint32) << 31
    mant = rng.integers(0, 1 << 23, e.shape, dtype=np.uint32)
    return (sign | ((e + 127).astype(np.uint32) << 23) | mant).view(np.float32)


safe_f32 = st.floats(width=32, allow_nan=False, allow_infinity=False).filter(
    lambda v: v == 0 or -110 <= int(exponent_of(np.float32(v))) <= 127
)


class TestScalar:
    def test_representable(self):
        s = split_scalar(1.5)
        assert s.k == 3
        assert s.values.tolist() == [1.5, 0.0, 0.0]
        assert s.recombine() == 1.5

    def test_residual_representable(self):
        s = split_scalar(np.float32(1 + 2.0**-20))
        assert s.values.tolist() == [1.0, 2.0**-20, 0.0]

    def test_k_variants(self):
        a = np.float32(np.pi)
        assert split_scalar(a, 1).k == 1
        assert split_scalar(a, 2).values[0] == split_scalar(a, 3).values[0]
        with pytest.raises(ValueError):
            split_scalar(a, 4)

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_non_finite(self, bad):
        with pytest.raises(UnsupportedValueError):
            split_scalar(bad)

    def test_tiny_value_loses_low_bits(self):
        # round bit clear: component 0 truncates and the residual underflows
        a = f32(0x00817FFF)
        s = split_scalar(a)
        assert s.components[1:] == (0, 0)
        rel = abs(s.recombine() - float(a)) / float(a)
        assert 2.0**-9 < rel < 2.0**-7
        back = np.float32(s.recombine()).view(np.uint32)
        assert back == 0x00810000  # bits 0-15 gone

    def test_tiny_value_literal(self):
        # the round bit is set in this one, so RNE lands close by
        a = f32(0x0081FFFF)
        s = split_scalar(a)
        assert s.components[0] == 0x0082
        assert abs(s.recombine() - float(a)) / float(a) < 2.0**-22

    def test_near_overflow_saturates(self):
        a = f32(0x7F7FFFFF)  # FLT_MAX
        s = split_scalar(a)
        assert s.values[0] == BF16_MAX
        assert s.recombine() == float(a)
        assert split_scalar(-a).recombine() == -float(a)


class TestProperties:
    @given(safe_f32)
    def test_exact_reconstruction(self, v):
        a = np.float32(v)
        assert recombine(split_scalar(a)) == float(a)

    @given(safe_f32)
    def test_components_are_bf16(self, v):
        c = split_values(np.float32(v))
        assert np.array_equal(bf16_to_f32(round_f32_to_bf16(c)), c)

    @given(safe_f32)
    def test_decay(self, v):
        if abs(v) > BF16_MAX:
            return  # component 0 saturates there; covered by test_near_overflow_saturates
        c = np.abs(split_values(np.float32(v)).astype(np.float64))
        for i in range(2):
            if c[i] != 0:
                assert c[i + 1] <= 2.0**-8 * c[i]

    def test_exact_reconstruction_bulk(self):
        rng = np.random.default_rng(11)
        for lo, hi in ((-110, 127), (-110, -100), (120, 127)):
            a = _bits(rng, rng.integers(lo, hi, 200_000, endpoint=True))
            assert np.array_equal(recombine(split_values(a)), a.astype(np.float64))

    def test_mean_decay(self):
        rng = np.random.default_rng(5)
        a = _bits(rng, rng.integers(-100, 100, 1_000_000, endpoint=True))
        b0, b1, b2 = np.abs(split_values(a).astype(np.float64))
        nz = b0 != 0
        r1 = np.mean(b1[nz] / b0[nz]) * 768
        r2 = np.mean(b2[nz] / b0[nz]) * 768**2
        assert abs(r1 - 1) < 0.15
        assert abs(r2 - 1) < 0.25


class TestMatrix:
    def test_identity(self):
        s = split_matrix(np.eye(4, dtype=np.float32))
        assert np.array_equal(s.component(0), np.eye(4))
        assert not s.component(1).any() and not s.component(2).any()
        assert (s.rows, s.cols, s.k) == (4, 4, 3)

    def test_representable(self):
        m = np.array([[1.0, -0.5], [3.0, 256.0]], dtype=np.float32)
        s = split_matrix(m)
        assert not s.components[1:].any()

    def test_uniform_roundtrip(self):
        m = gen_matrix(GenSpec("uniform", seed=2), (64, 64))
        assert np.array_equal(recombine(split_matrix(m)), m.astype(np.float64))

    def test_elements_are_scalar_splits(self):
        m = gen_matrix(GenSpec("uniform", seed=3), (5, 6))
        s = split_matrix(m)
        for idx in [(0, 0), (4, 5), (2, 3)]:
            assert s.scalar(idx) == split_scalar(m[idx])

    def test_error_carries_coordinates(self):
        m = np.ones((3, 3), dtype=np.float32)
        m[2, 1] = np.nan
        with pytest.raises(UnsupportedValueError) as exc:
            split_matrix(m)
        assert exc.value.index == (2, 1)

    def test_transpose_and_truncate(self):
        m = gen_matrix(GenSpec("uniform", seed=4), (3, 5))
        s = split_matrix(m)
        assert np.array_equal(s.transpose().components, split_matrix(m.T).components)
        assert np.array_equal(s.truncate(2).components, split_matrix(m, 2).components)
        with pytest.raises(ValueError):
            split_matrix(m, 2).truncate(3)

    def test_accepts_raw_component_array(self):
        m = gen_matrix(GenSpec("uniform", seed=5), (2, 2))
        s = split_matrix(m)
        assert np.array_equal(recombine(s.components), recombine(s))
        assert isinstance(s, SplitMatrix)


def test_exponent_range_violations():
    a = np.array([1.0, 0.0, 2.0**-120, 2.0**-110, 2.0**-111], dtype=np.float32)
    assert exponent_range_violations(a) == 2
