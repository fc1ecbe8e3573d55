"""Hot numeric kernels, each in a numba and a pure-numpy flavour.

Every public kernel name is bound to the flavour picked by
``HYBRIDATTN_BACKEND`` (see ``_backend``). The ``*_nb`` / ``*_np`` variants
stay importable so tests can check them against each other.

Conventions shared by all kernels:

* integer operands are 2-D ``int64`` arrays (callers upcast once);
* per-slice arrays are laid out ``(slice, row, col)``;
* slice ``s`` covers reduction indices ``[s*k_slice, min((s+1)*k_slice, K))``.
"""

import numpy as np

from ._backend import BACKEND, njit


def n_slices(k, k_slice):
    return max(1, -(-k // k_slice))


# ---------------------------------------------------------------------------
# exact integer GEMM
# ---------------------------------------------------------------------------

@njit
def int_gemm_nb(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n), dtype=np.int64)
    for i in range(m):
        for p in range(k):
            aip = a[i, p]
            if aip == 0:
                continue
            for j in range(n):
                out[i, j] += aip * b[p, j]
    return out


def int_gemm_np(a, b):
    # numpy integer matmul does not go through BLAS, so it is exact in int64
    return a.astype(np.int64) @ b.astype(np.int64)


# ---------------------------------------------------------------------------
# per-K-slice partial sums (what each DDot photocurrent represents)
# ---------------------------------------------------------------------------

@njit
def slice_partials_nb(a, b, k_slice):
    m, k = a.shape
    n = b.shape[1]
    ns = max(1, (k + k_slice - 1) // k_slice)
    out = np.zeros((ns, m, n), dtype=np.int64)
    for s in range(ns):
        lo = s * k_slice
        hi = min(lo + k_slice, k)
        for i in range(m):
            for p in range(lo, hi):
                aip = a[i, p]
                if aip == 0:
                    continue
                for j in range(n):
                    out[s, i, j] += aip * b[p, j]
    return out


def slice_partials_np(a, b, k_slice):
    m, k = a.shape
    n = b.shape[1]
    ns = n_slices(k, k_slice)
    a64 = np.zeros((m, ns * k_slice), dtype=np.int64)
    a64[:, :k] = a
    b64 = np.zeros((ns * k_slice, n), dtype=np.int64)
    b64[:k] = b
    a3 = a64.reshape(m, ns, k_slice).transpose(1, 0, 2)
    b3 = b64.reshape(ns, k_slice, n)
    return np.matmul(a3, b3)


# ---------------------------------------------------------------------------
# comparator + low-resolution ADC
# ---------------------------------------------------------------------------

@njit
def classify_convert_nb(analog, lsb, max_code):
    full_scale = max_code * lsb
    codes = np.zeros(analog.shape, dtype=np.int64)
    over = np.zeros(analog.shape, dtype=np.bool_)
    flat = analog.ravel()
    cflat = codes.ravel()
    oflat = over.ravel()
    for t in range(flat.size):
        x = flat[t]
        if abs(x) > full_scale:
            oflat[t] = True
        else:
            c = np.floor(abs(x) / lsb + 0.5)
            if x < 0:
                c = -c
            cflat[t] = np.int64(c)
    return codes, over


def classify_convert_np(analog, lsb, max_code):
    full_scale = max_code * lsb
    over = np.abs(analog) > full_scale
    mag = np.floor(np.abs(analog) / lsb + 0.5)
    codes = np.where(over, 0, np.copysign(mag, analog)).astype(np.int64)
    return codes, over


@njit
def saturating_convert_nb(analog, lsb, max_code):
    codes = np.zeros(analog.shape, dtype=np.int64)
    sat = np.zeros(analog.shape, dtype=np.bool_)
    flat = analog.ravel()
    cflat = codes.ravel()
    sflat = sat.ravel()
    for t in range(flat.size):
        x = flat[t]
        c = np.floor(abs(x) / lsb + 0.5)
        if c > max_code:
            c = max_code
            sflat[t] = True
        if x < 0:
            c = -c
        cflat[t] = np.int64(c)
    return codes, sat


def saturating_convert_np(analog, lsb, max_code):
    mag = np.floor(np.abs(analog) / lsb + 0.5)
    sat = mag > max_code
    codes = np.copysign(np.minimum(mag, max_code), analog).astype(np.int64)
    return codes, sat


# ---------------------------------------------------------------------------
# digital MAU: exact partials at flagged (slice, row, col) coordinates
# ---------------------------------------------------------------------------

@njit
def mau_batch_nb(a, b, slices, rows, cols, k_slice):
    k = a.shape[1]
    out = np.zeros(rows.size, dtype=np.int64)
    for t in range(rows.size):
        lo = slices[t] * k_slice
        hi = min(lo + k_slice, k)
        acc = 0
        i = rows[t]
        j = cols[t]
        for p in range(lo, hi):
            acc += a[i, p] * b[p, j]
        out[t] = acc
    return out


def mau_batch_np(a, b, slices, rows, cols, k_slice):
    out = np.zeros(rows.size, dtype=np.int64)
    k = a.shape[1]
    # group by slice so each group is one gathered row-wise dot product
    for s in np.unique(slices):
        sel = slices == s
        lo = int(s) * k_slice
        hi = min(lo + k_slice, k)
        av = a[rows[sel], lo:hi].astype(np.int64)
        bv = b[lo:hi, cols[sel]].astype(np.int64).T
        out[sel] = np.einsum("tk,tk->t", av, bv)
    return out


# ---------------------------------------------------------------------------
# accumulator: slice-ordered sum of LowRes (code*lsb) and OverRes (exact)
# ---------------------------------------------------------------------------

@njit
def accumulate_nb(codes, over, lsb, slices, rows, cols, exact):
    ns, m, n = codes.shape
    dense = np.zeros((ns, m, n), dtype=np.float64)
    for t in range(rows.size):
        dense[slices[t], rows[t], cols[t]] = exact[t]
    out = np.zeros((m, n), dtype=np.float64)
    for s in range(ns):
        for i in range(m):
            for j in range(n):
                if over[s, i, j]:
                    out[i, j] += dense[s, i, j]
                else:
                    out[i, j] += codes[s, i, j] * lsb
    return out


def accumulate_np(codes, over, lsb, slices, rows, cols, exact):
    ns, m, n = codes.shape
    dense = np.zeros((ns, m, n), dtype=np.float64)
    dense[slices, rows, cols] = exact
    out = np.zeros((m, n), dtype=np.float64)
    for s in range(ns):
        out += np.where(over[s], dense[s], codes[s] * lsb)
    return out


# ---------------------------------------------------------------------------
# resolution histogram: how many |partial| fit under each threshold
# ---------------------------------------------------------------------------

@njit
def within_counts_nb(values, thresholds):
    counts = np.zeros(thresholds.size, dtype=np.int64)
    flat = values.ravel()
    for t in range(flat.size):
        v = abs(flat[t])
        for b in range(thresholds.size):
            if v <= thresholds[b]:
                counts[b] += 1
    return counts


def within_counts_np(values, thresholds):
    mags = np.sort(np.abs(values).ravel())
    return np.searchsorted(mags, thresholds, side="right").astype(np.int64)


_IMPLS = {
    "numba": (int_gemm_nb, slice_partials_nb, classify_convert_nb,
              saturating_convert_nb, mau_batch_nb, accumulate_nb, within_counts_nb),
    "numpy": (int_gemm_np, slice_partials_np, classify_convert_np,
              saturating_convert_np, mau_batch_np, accumulate_np, within_counts_np),
}

(int_gemm, slice_partials, classify_convert, saturating_convert,
 mau_batch, accumulate, within_counts) = _IMPLS[BACKEND]


def kernel_set(name):
    """Return the kernel tuple for ``name`` ('numba' or 'numpy')."""
    return dict(zip(
        ("int_gemm", "slice_partials", "classify_convert", "saturating_convert",
         "mau_batch", "accumulate", "within_counts"),
        _IMPLS[name]))
