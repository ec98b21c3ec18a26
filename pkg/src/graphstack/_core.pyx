# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: CSR mat-mat product and boosting split scan.

Both kernels use strictly sequential per-row / per-prefix accumulation so
results are reproducible bit-for-bit across runs and thread counts.  The
NumPy fallback in ``_ref`` implements the same contracts.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def csr_matmat(const cnp.int64_t[::1] indptr,
               const cnp.int64_t[::1] indices,
               const cnp.float64_t[::1] data,
               const cnp.float64_t[:, ::1] dense):
    """Return C = A @ dense for a CSR matrix A.

    Row accumulation runs in ascending stored-index order, one add at a
    time, so the reduction order is fixed.
    """
    cdef Py_ssize_t n_rows = indptr.shape[0] - 1
    cdef Py_ssize_t n_cols = dense.shape[1]
    out_arr = np.zeros((n_rows, n_cols), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] out = out_arr
    cdef Py_ssize_t i, k, j, c
    cdef cnp.float64_t a
    with nogil:
        for i in range(n_rows):
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                a = data[k]
                for c in range(n_cols):
                    out[i, c] = out[i, c] + a * dense[j, c]
    return out_arr


def split_scan(const cnp.float64_t[::1] values,
               const cnp.float64_t[::1] grad,
               const cnp.float64_t[::1] hess,
               Py_ssize_t min_leaf,
               cnp.float64_t reg_lambda):
    """Best split position for one feature, values sorted ascending.

    Returns ``(gain, pos)`` where the split sends rows ``[0, pos)`` left.
    ``pos == 0`` means no valid split.  Gain is the Newton objective
    improvement over the unsplit node; candidates are scanned left to
    right with prefix sums accumulated sequentially, ties keep the
    earliest position.
    """
    cdef Py_ssize_t n = values.shape[0]
    cdef cnp.float64_t g_total = 0.0, h_total = 0.0
    cdef cnp.float64_t gl = 0.0, hl = 0.0, gr, hr
    cdef cnp.float64_t parent, gain, best_gain = 0.0
    cdef Py_ssize_t pos, best_pos = 0
    cdef bint found = False
    with nogil:
        for pos in range(n):
            g_total = g_total + grad[pos]
            h_total = h_total + hess[pos]
        parent = g_total * g_total / (h_total + reg_lambda)
        for pos in range(1, n):
            gl = gl + grad[pos - 1]
            hl = hl + hess[pos - 1]
            if pos < min_leaf or n - pos < min_leaf:
                continue
            if values[pos] == values[pos - 1]:
                continue
            gr = g_total - gl
            hr = h_total - hl
            gain = gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda) - parent
            if not found or gain > best_gain:
                best_gain = gain
                best_pos = pos
                found = True
    if not found:
        return 0.0, 0
    return best_gain, best_pos
