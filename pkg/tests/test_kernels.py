"""The numba and numpy backends must agree bit for bit."""

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from hybridattn.kernels import kernel_set, n_slices
from oracles import random_codes

NB, NP = kernel_set("numba"), kernel_set("numpy")

shapes = st.tuples(st.integers(1, 70), st.integers(1, 140), st.integers(1, 70))


@given(shapes, st.integers(1, 64), st.integers(0, 2**32 - 1))
def test_partials_agree(shape, ks, seed):
    m, k, n = shape
    rng = np.random.default_rng(seed)
    a, b = random_codes(rng, (m, k)), random_codes(rng, (k, n))
    p1, p2 = NB["slice_partials"](a, b, ks), NP["slice_partials"](a, b, ks)
    assert p1.shape == (n_slices(k, ks), m, n)
    assert np.array_equal(p1, p2)
    assert np.array_equal(p1.sum(axis=0), a @ b)
    assert np.array_equal(NB["int_gemm"](a, b), NP["int_gemm"](a, b))


@given(st.lists(st.floats(-300, 300), min_size=1, max_size=200),
       st.sampled_from([0.5, 1.0, 3.0]), st.integers(1, 127))
def test_converters_agree(xs, lsb, max_code):
    x = np.array(xs).reshape(1, 1, -1)
    for name in ("classify_convert", "saturating_convert"):
        c1, f1 = NB[name](x, lsb, max_code)
        c2, f2 = NP[name](x, lsb, max_code)
        assert np.array_equal(c1, c2) and np.array_equal(f1, f2)


def test_mau_and_accumulate_agree(kernels):
    rng = np.random.default_rng(9)
    a, b = random_codes(rng, (40, 150)), random_codes(rng, (150, 30))
    p = kernels["slice_partials"](a, b, 64)
    codes, over = kernels["classify_convert"](p.astype(float), 1.0, 7)
    s, r, c = np.nonzero(over)
    ex = kernels["mau_batch"](a, b, s, r, c, 64)
    assert np.array_equal(ex, p[s, r, c])
    acc = kernels["accumulate"](codes, over, 1.0, s, r, c, ex.astype(float))
    ref = NP["accumulate"](codes, over, 1.0, s, r, c, ex.astype(float))
    assert np.array_equal(acc, ref)


def test_within_counts(kernels):
    v = np.array([0, 1, -2, 7, -8, 127, 200])
    assert kernels["within_counts"](v, np.array([1.0, 7.0, 127.0])).tolist() == [2, 4, 6]
