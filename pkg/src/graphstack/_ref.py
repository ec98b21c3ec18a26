"""NumPy fallback for the compiled kernels in ``_core``.

``split_scan`` mirrors the compiled version bit-for-bit: ``np.cumsum`` is
a left fold, matching the sequential prefix accumulation in C, and the
gain expression applies the same elementwise operations.  ``csr_matmat``
is deterministic run-to-run but ``np.add.reduceat`` may group additions
differently from a plain left fold, so the two backends agree only to
rounding (~1e-15 relative); tests compare them at 1e-12.
"""

import numpy as np


def csr_matmat(indptr, indices, data, dense):
    """Return C = A @ dense for a CSR matrix A."""
    n_rows = indptr.shape[0] - 1
    out = np.zeros((n_rows, dense.shape[1]), dtype=np.float64)
    if indices.shape[0] == 0:
        return out
    prod = data[:, None] * dense[indices]
    starts = indptr[:-1]
    nonempty = np.flatnonzero(np.diff(indptr) > 0)
    if nonempty.size:
        out[nonempty] = np.add.reduceat(prod, starts[nonempty], axis=0)
    return out


def split_scan(values, grad, hess, min_leaf, reg_lambda):
    """Best split position for one feature; see ``_core.split_scan``."""
    n = values.shape[0]
    if n < 2:
        return 0.0, 0
    gl = np.cumsum(grad)
    hl = np.cumsum(hess)
    g_total = gl[-1]
    h_total = hl[-1]
    parent = g_total * g_total / (h_total + reg_lambda)
    gl = gl[:-1]
    hl = hl[:-1]
    gr = g_total - gl
    hr = h_total - hl
    gains = gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda) - parent
    pos = np.arange(1, n)
    valid = (values[1:] != values[:-1]) & (pos >= min_leaf) & (n - pos >= min_leaf)
    if not valid.any():
        return 0.0, 0
    gains = np.where(valid, gains, -np.inf)
    best = int(np.argmax(gains))
    return float(gains[best]), best + 1
