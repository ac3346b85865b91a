"""Pure numpy versions of the compiled kernels."""
import numpy as np
import scipy.sparse as sp


def shared_pattern_spmm(indptr, indices, data, X, out):
    n = len(indptr) - 1
    nnz = len(indices)
    rows = np.repeat(np.arange(n), np.diff(indptr))
    summer = sp.csr_matrix((np.ones(nnz), (rows, np.arange(nnz))), shape=(n, nnz))
    out[...] = summer @ (data * X[indices])
    return out
