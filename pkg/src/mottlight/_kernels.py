"""Fused sparse kernels for the time stepper.

Every dressed operator used in propagation has the form
``alpha * K + conj(alpha) * K^T + diag`` with K the bare forward-hop matrix
(real, entries ±1).  Applying that to a block of state columns is the hot
loop; a numba kernel fuses the three terms into one pass.  A scipy fallback
keeps the package usable without numba and doubles as a reference in tests.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False


if HAVE_NUMBA:

    @numba.njit(parallel=True, fastmath=True, cache=True)
    def _apply_dressed_numba(indptr_k, indices_k, data_k,
                             indptr_t, indices_t, data_t,
                             diag, x, alpha, out):  # pragma: no cover - jitted
        n, r = x.shape
        alpha_c = np.conj(alpha)
        for i in numba.prange(n):
            for q in range(r):
                out[i, q] = diag[i] * x[i, q]
            for p in range(indptr_k[i], indptr_k[i + 1]):
                j = indices_k[p]
                v = alpha * data_k[p]
                for q in range(r):
                    out[i, q] += v * x[j, q]
            for p in range(indptr_t[i], indptr_t[i + 1]):
                j = indices_t[p]
                v = alpha_c * data_t[p]
                for q in range(r):
                    out[i, q] += v * x[j, q]


class DressedApplier:
    """Applies alpha*K + conj(alpha)*K^T + diag to column blocks."""

    def __init__(self, k_matrix: sp.csr_matrix, diag: np.ndarray, use_numba: bool = True):
        k = k_matrix.tocsr().astype(np.float64)
        k.sort_indices()
        kt = k.T.tocsr()
        kt.sort_indices()
        self._k = k
        self._kt = kt
        self.diag = np.asarray(diag, dtype=np.float64)
        self.dim = k.shape[0]
        self.use_numba = use_numba and HAVE_NUMBA

    def __call__(self, x: np.ndarray, alpha: complex, out: np.ndarray | None = None) -> np.ndarray:
        squeeze = x.ndim == 1
        if squeeze:
            x = x[:, None]
        x = np.ascontiguousarray(x, dtype=np.complex128)
        if self.use_numba:
            if out is None or out.shape != x.shape:
                out = np.empty_like(x)
            _apply_dressed_numba(self._k.indptr, self._k.indices, self._k.data,
                                 self._kt.indptr, self._kt.indices, self._kt.data,
                                 self.diag, x, complex(alpha), out)
        else:
            out = alpha * (self._k @ x) + np.conj(alpha) * (self._kt @ x)
            out += self.diag[:, None] * x
        return out[:, 0] if squeeze else out
