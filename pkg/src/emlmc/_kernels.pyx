# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; see ``emlmc.kernels`` for the dispatching wrappers."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def shared_pattern_spmm(const int[::1] indptr, const int[::1] indices,
                        const double[:, ::1] data, const double[:, ::1] X,
                        double[:, ::1] out):
    """out[i, j] = sum_k data[k, j] * X[indices[k], j] over row i's entries.

    Every column j carries its own matrix; all matrices share one CSR pattern.
    """
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t J = X.shape[1]
    cdef Py_ssize_t i, k, j, col
    cdef double *orow
    cdef const double *drow
    cdef const double *xrow
    for i in range(n):
        orow = &out[i, 0]
        for j in range(J):
            orow[j] = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            col = indices[k]
            drow = &data[k, 0]
            xrow = &X[col, 0]
            for j in range(J):
                orow[j] += drow[j] * xrow[j]
    return np.asarray(out)
