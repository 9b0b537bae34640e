"""Dense/sparse kernels and spectral utilities.

Dense matrices are float64 ``numpy.ndarray``; sparse matrices are canonical
``scipy.sparse.csr_matrix`` (sorted column indices, no duplicate entries).
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

DTYPE = np.float64


class PowerEstimate(NamedTuple):
    value: float
    converged: bool
    iterations: int


def as_dense(a) -> np.ndarray:
    """Return ``a`` as a 2-D float64 array (copy-free when possible)."""
    if sp.issparse(a):
        return a.toarray().astype(DTYPE, copy=False)
    arr = np.asarray(a, dtype=DTYPE)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    return arr


def as_csr(a) -> sp.csr_matrix:
    """Canonical CSR copy of ``a``: sorted indices, duplicates summed, explicit zeros dropped."""
    m = sp.csr_matrix(a, dtype=DTYPE, copy=True)
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    return m


def spmm(a: sp.csr_matrix, b: np.ndarray) -> np.ndarray:
    """Sparse-dense product ``a @ b``."""
    if not sp.issparse(a):
        raise TypeError("spmm expects a sparse left operand")
    b = np.asarray(b, dtype=DTYPE)
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    return np.asarray(a @ b, dtype=DTYPE)


def max_row_abs_sum(a) -> float:
    """Maximum absolute row sum (the induced infinity norm)."""
    if sp.issparse(a):
        if a.shape[0] == 0:
            return 0.0
        return float(np.max(np.asarray(abs(a).sum(axis=1)).ravel(), initial=0.0))
    a = as_dense(a)
    if a.size == 0:
        return 0.0
    return float(np.abs(a).sum(axis=1).max())


def frobenius_distance(a, b) -> float:
    a, b = as_dense(a), as_dense(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def power_iteration_abs(a, iters: int = 50, tol: float = 1e-8, seed: int = 0) -> PowerEstimate:
    """Estimate the Perron root of the entrywise absolute value of ``a``.

    Starts from the all-ones vector; if the estimate collapses to zero on the
    first step (e.g. the ones vector lies in the null space) the iteration is
    retried from a seeded positive random vector. Nilpotent inputs legitimately
    return 0.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"power iteration needs a square matrix, got {a.shape}")
    n = a.shape[0]
    if n == 0:
        return PowerEstimate(0.0, True, 0)
    absa = abs(as_csr(a)) if sp.issparse(a) else np.abs(as_dense(a))

    def run(v: np.ndarray) -> PowerEstimate:
        v = v / np.linalg.norm(v)
        est = np.inf
        for k in range(1, iters + 1):
            av = absa @ v
            nrm = float(np.linalg.norm(av))
            if nrm == 0.0:
                return PowerEstimate(0.0, True, k)
            new = float(v @ av) if symmetric else nrm
            if abs(new - est) < tol:
                return PowerEstimate(new, True, k)
            est = new
            v = av / nrm
        return PowerEstimate(est, False, iters)

    if sp.issparse(absa):
        symmetric = (absa != absa.T).nnz == 0
    else:
        symmetric = bool(np.array_equal(absa, absa.T))
    res = run(np.ones(n, dtype=DTYPE))
    if res.value == 0.0 and res.iterations == 1:
        rng = np.random.default_rng(seed)
        res = run(rng.uniform(0.5, 1.5, size=n))
    return res
