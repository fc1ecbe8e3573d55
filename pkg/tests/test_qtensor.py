import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hybridattn.qtensor import (QuantizationError, QuantizedMatrix, QuantSpec, accumulator_bits,
                                dequantize, int_gemm, load_real_text, parse_qmat, qmat_bytes,
                                quantize, read_qmat, write_qmat)
from oracles import naive_gemm, random_codes


def test_zero_matrix_gets_unit_scale():
    q = quantize(np.zeros((2, 2)))
    assert q.scale == 1.0
    assert not q.codes.any()


def test_full_scale_maps_to_max_code():
    q = quantize([1.0, -1.0])
    assert q.codes.tolist() == [[7, -7]]
    assert q.scale == pytest.approx(1 / 7)


def test_round_trip_error_within_half_step():
    m = np.random.default_rng(42).uniform(-1, 1, (64, 64))
    q = quantize(m)
    assert np.all(np.abs(dequantize(q) - m) <= q.scale / 2 + 1e-15)


def test_non_finite_reports_index():
    m = np.ones((3, 3))
    m[1, 2] = np.nan
    with pytest.raises(QuantizationError, match=r"\(1, 2\)"):
        quantize(m)


@pytest.mark.parametrize("bits", [1, 17])
def test_bit_width_bounds(bits):
    with pytest.raises(QuantizationError):
        QuantSpec(bits=bits)


def test_codes_outside_range_rejected():
    with pytest.raises(QuantizationError):
        QuantizedMatrix(np.array([[8]]), 1.0, 4)
    # would wrap to a legal int16 value if cast before checking
    with pytest.raises(QuantizationError):
        QuantizedMatrix(np.array([[65536 + 3]]), 1.0, 4)


def test_dequantize_examples():
    assert dequantize(QuantizedMatrix(np.zeros((1, 2), int), 0.5)).tolist() == [[0.0, 0.0]]
    assert dequantize(QuantizedMatrix(np.array([[7]]), 1 / 7))[0, 0] == pytest.approx(1.0)


def test_fixed_scale_round_trip():
    rng = np.random.default_rng(5)
    q = QuantizedMatrix(random_codes(rng, (16, 16)), 0.03)
    again = quantize(dequantize(q), QuantSpec(bits=4, scale=q.scale))
    assert again == q


def test_int_gemm_identity_and_scalar():
    rng = np.random.default_rng(0)
    b = QuantizedMatrix(random_codes(rng, (4, 4)), 0.5)
    eye = QuantizedMatrix(np.eye(4, dtype=int), 1.0)
    assert np.array_equal(int_gemm(eye, b).values, b.codes)
    r = int_gemm(QuantizedMatrix([[7]], 1.0), QuantizedMatrix([[7]], 1.0))
    assert r.values.tolist() == [[49]]


def test_int_gemm_matches_naive_loop():
    rng = np.random.default_rng(7)
    a, b = random_codes(rng, (64, 64)), random_codes(rng, (64, 64))
    got = int_gemm(QuantizedMatrix(a, 1.0), QuantizedMatrix(b, 1.0)).values
    assert got.tolist() == naive_gemm(a, b)


def test_int_gemm_dim_mismatch():
    with pytest.raises(QuantizationError):
        int_gemm(QuantizedMatrix(np.zeros((2, 3), int), 1.0), QuantizedMatrix(np.zeros((2, 3), int), 1.0))


def test_accumulator_width():
    # 4-bit codes, K=64: |sum| <= 64*49 = 3136 < 2**14
    assert accumulator_bits(4, 64) == 14
    assert 64 * 49 < 2 ** (accumulator_bits(4, 64) - 1) * 2


@given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 8)),
              elements=st.floats(-1e3, 1e3)), st.integers(2, 8))
def test_quantize_properties(m, bits):
    q = quantize(m, QuantSpec(bits=bits))
    lim = 2 ** (bits - 1) - 1
    assert np.abs(q.codes).max() <= lim
    assert q.scale > 0
    assert np.all(np.abs(dequantize(q) - m) <= q.scale / 2 * (1 + 1e-9) + 1e-300)
    # sign symmetry
    assert quantize(-m, QuantSpec(bits=bits)) == QuantizedMatrix(-q.codes, q.scale, bits)


@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_int_gemm_exact_and_bilinear(m, k, n, seed):
    rng = np.random.default_rng(seed)
    a, a2, b = (random_codes(rng, s) for s in ((m, k), (m, k), (k, n)))
    Q = lambda c: QuantizedMatrix(c, 1.0, 8)  # noqa: E731
    sum_ab = int_gemm(Q(a), Q(b)).values + int_gemm(Q(a2), Q(b)).values
    assert np.array_equal(int_gemm(Q(a + a2), Q(b)).values, sum_ab)


# -- QMAT -------------------------------------------------------------------

def test_qmat_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    q = QuantizedMatrix(random_codes(rng, (5, 9)), 0.0123)
    write_qmat(tmp_path / "m.qmat", q)
    assert read_qmat(tmp_path / "m.qmat") == q
    assert len(qmat_bytes(q)) == 16 + 45 + 8


def test_qmat_errors_carry_offsets(tmp_path):
    q = QuantizedMatrix(np.ones((2, 2), int), 1.0)
    raw = qmat_bytes(q)
    with pytest.raises(QuantizationError, match="byte 0"):
        parse_qmat(b"XMAT" + raw[4:])
    with pytest.raises(QuantizationError, match="truncated"):
        parse_qmat(raw[:-3])
    with pytest.raises(QuantizationError, match="byte 10"):
        parse_qmat(b"\0" * 10 + b"BAD!" + raw[4:], 10)
    (tmp_path / "t.qmat").write_bytes(raw + b"\0")
    with pytest.raises(QuantizationError, match=f"byte {len(raw)}"):
        read_qmat(tmp_path / "t.qmat")
    bad_scale = raw[:-8] + b"\0" * 8
    with pytest.raises(QuantizationError, match="scale"):
        parse_qmat(bad_scale)


def test_text_loader(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("# comment\n1 2.5\n-3 4e-1\n")
    assert load_real_text(p).tolist() == [[1.0, 2.5], [-3.0, 0.4]]
    p.write_text("1 2\n3 x\n")
    with pytest.raises(QuantizationError, match=":2:"):
        load_real_text(p)


def test_immutable_codes():
    q = quantize(np.eye(3))
    with pytest.raises(ValueError):
        q.codes[0, 0] = 1
    assert math.isclose(q.scale, 1 / 7)
