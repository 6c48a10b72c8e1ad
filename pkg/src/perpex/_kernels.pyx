# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Semantics are mirrored exactly by ``_pykernels``."""

cimport numpy as cnp

cnp.import_array()


def path_fill(const double[::1] m, double r, double q, double[::1] out):
    """``out[i] = r = m[i] * r + q`` over the chunk; returns the last value."""
    cdef Py_ssize_t i, n = m.shape[0]
    with nogil:
        for i in range(n):
            r = m[i] * r + q
            out[i] = r
    return r


def series_fill(const double[::1] m, Py_ssize_t pos, double acc, double prod,
                long terms, double q, double tol, long max_terms,
                double[::1] out, cnp.uint8_t[::1] truncated, Py_ssize_t out_pos):
    """Backward-series sums ``q * sum_k prod_{i<=k} m_i`` consumed from a flat stream.

    Resumable: returns ``(pos, out_pos, acc, prod, terms)`` when either the
    stream chunk or the output buffer is exhausted.
    """
    cdef Py_ssize_t n_m = m.shape[0], n_out = out.shape[0]
    with nogil:
        while out_pos < n_out:
            if prod <= tol or terms >= max_terms:
                out[out_pos] = acc
                truncated[out_pos] = prod > tol
                out_pos += 1
                acc = q
                prod = 1.0
                terms = 0
                continue
            if pos >= n_m:
                break
            prod = prod * m[pos]
            pos += 1
            acc = acc + q * prod
            terms += 1
    return pos, out_pos, acc, prod, terms
