import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hybridattn.digitaldie import (DEFAULT_LUT, DigitalDieError, MauSpec, RecomputeTask, accumulate,
                                   accumulate_coordinate, lut_exp, mau_recompute,
                                   mau_recompute_batch, slice_lengths, softmax_args, softmax_row,
                                   softmax_rows)
from hybridattn.photonic import AdcSpec, analog_partials, classify_convert
from oracles import hybrid_oracle, random_codes


def test_mau_examples():
    assert mau_recompute(RecomputeTask(0, 0, 0), np.zeros(64, int), np.zeros(64, int)) == (0, 8)
    # the analog 8.0 OverRes case: 2*4 recomputed exactly
    val, cyc = mau_recompute((1, 2, 3), [2], [4], flagged={RecomputeTask(1, 2, 3)})
    assert (val, cyc) == (8, 1)


def test_mau_rejects_unflagged():
    with pytest.raises(DigitalDieError):
        mau_recompute((0, 0, 1), [1], [1], flagged={(0, 0, 0)})


def test_mau_cycles_rule():
    mau = MauSpec()
    assert [mau.cycles(n) for n in (1, 8, 9, 64)] == [1, 1, 2, 8]
    with pytest.raises(DigitalDieError):
        MauSpec(macs_per_cycle=0)


def test_mau_batch_matches_gemm_at_flagged():
    rng = np.random.default_rng(13)
    a, b = random_codes(rng, (70, 130)), random_codes(rng, (130, 50))
    exact, analog = analog_partials(a, b, 64)
    _, over = classify_convert(analog, AdcSpec())
    s, r, c = np.nonzero(over)
    got = mau_recompute_batch(a, b, s, r, c, 64)
    assert np.array_equal(got, exact[s, r, c])
    # digital cycle accounting: sum of ceil(len/8) over flagged slices
    lens = slice_lengths(130, 64)
    assert lens.tolist() == [64, 64, 2]
    assert sum(MauSpec().cycles(lens[k]) for k in s) == int(np.sum(np.ceil(lens[s] / 8)))


def test_accumulate_coordinate_examples():
    assert accumulate_coordinate({0: 0.0, 1: 0.0}, 2) == 0
    assert accumulate_coordinate({0: 5.0, 1: 20.0}, 2) == 25
    with pytest.raises(DigitalDieError):
        accumulate_coordinate({0: 1.0}, 2)


def test_accumulate_equals_hybrid_oracle():
    rng = np.random.default_rng(8)
    a, b = random_codes(rng, (90, 200)), random_codes(rng, (200, 70))
    exact, analog = analog_partials(a, b, 64)
    codes, over = classify_convert(analog, AdcSpec())
    s, r, c = np.nonzero(over)
    got = accumulate(codes, over, 1.0, s, r, c, exact[s, r, c])
    assert np.array_equal(got, hybrid_oracle(a, b))


def test_accumulate_conservation_checks():
    codes = np.zeros((1, 2, 2), int)
    over = np.zeros((1, 2, 2), bool)
    over[0, 1, 1] = True
    with pytest.raises(DigitalDieError):
        accumulate(codes, over, 1.0, [], [], [], [])
    with pytest.raises(DigitalDieError):
        accumulate(codes, over, 1.0, [0], [0], [0], [9])


# -- LUT / softmax --------------------------------------------------------------

def test_lut_geometry(tmp_path):
    assert DEFAULT_LUT.nbytes == 512
    assert DEFAULT_LUT.hi_table.min() >= 0 and DEFAULT_LUT.hi_table.max() <= 1
    assert DEFAULT_LUT.lo_table.min() >= 0 and DEFAULT_LUT.lo_table.max() <= 1
    p = tmp_path / "lut.hex"
    DEFAULT_LUT.dump_hex(p)
    lines = p.read_text().split()
    assert len(lines) == 512 and lines[0] == "ff" and all(len(x) == 2 for x in lines)
    assert int(lines[1], 16) == round(255 * math.exp(-1))


def test_lut_examples():
    assert abs(lut_exp(0.0) - 1.0) <= 1 / 255
    assert lut_exp(-128.0) == 0.0
    assert lut_exp(-500.0) == 0.0
    with pytest.raises(DigitalDieError):
        lut_exp(0.5)


def test_lut_decomposition_exhaustive():
    raw = np.arange(-(2 ** 15) + 1, 1)
    m = -raw
    want = DEFAULT_LUT.hi_table[m >> 8] * DEFAULT_LUT.lo_table[m & 255]
    assert np.array_equal(DEFAULT_LUT.exp_raw(raw), want)


def test_lut_error_bound_sampled():
    x = np.random.default_rng(99).uniform(-16, 0, 10_000)
    assert np.abs(lut_exp(x) - np.exp(x)).max() <= 2 ** -6


def test_softmax_examples():
    assert softmax_row([5, 5, 5, 5]).tolist() == [0.25] * 4
    assert softmax_row([3.3]).tolist() == [1.0]
    with pytest.raises(DigitalDieError):
        softmax_row([])


def test_softmax_deviation_bounded_by_lut_error():
    rng = np.random.default_rng(17)
    s = rng.normal(0, 3, (200, 32))
    got = softmax_rows(s, 1.0, 1)
    e = np.exp(s - s.max(axis=1, keepdims=True))
    ref = e / e.sum(axis=1, keepdims=True)
    # numerator error <= 2^-6 plus argument rounding; denominator >= 1 - 2^-6
    eps = 2 ** -6 + 2 ** -9
    assert np.abs(got - ref).max() <= 2 * eps / (1 - eps)


rows = arrays(np.float64, st.integers(1, 40), elements=st.floats(-50, 50))


@given(rows, st.floats(0.01, 4), st.integers(1, 128))
def test_softmax_properties(s, scale, d_k):
    p = softmax_row(s, scale, d_k)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) <= 1e-12
    perm = np.random.default_rng(0).permutation(s.size)
    assert np.array_equal(softmax_args(s[perm], scale, d_k), softmax_args(s, scale, d_k)[perm])
    # the denominator is summed in a different order, so allow ulp-level slack
    assert np.allclose(softmax_row(s[perm], scale, d_k), p[perm], rtol=1e-14, atol=0)


@given(rows, st.integers(-20, 20))
def test_softmax_shift_invariance_at_arg_level(s, c):
    s = np.round(s * 4) / 4  # exact binary fractions keep the shift exact
    assert np.array_equal(softmax_args(s, 1.0, 1), softmax_args(s + c, 1.0, 1))
