"""Exact diagonalization of the field-free chain and eigenstate characterization."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .hubbard import LatticeParams, ParameterError, SparseOperator

CACHE_FORMAT_VERSION = 1


class ContractViolation(ValueError):
    """An operator handed to a consumer breaks its stated contract."""


@dataclass
class EigenSystem:
    """Eigenpairs of the field-free Hamiltonian, energies ascending."""

    energies: np.ndarray
    vectors: np.ndarray           # column k is the k-th eigenvector
    params: LatticeParams | None = None

    @property
    def n_states(self) -> int:
        return len(self.energies)

    def residual(self, h: SparseOperator) -> float:
        r = h.matrix @ self.vectors - self.vectors * self.energies[None, :]
        return float(np.linalg.norm(r, axis=0).max())

    def orthonormality_defect(self) -> float:
        g = self.vectors.conj().T @ self.vectors
        return float(np.abs(g - np.eye(self.n_states)).max())


def diagonalize(h: SparseOperator, count: int | None = None,
                params: LatticeParams | None = None,
                hermiticity_tol: float = 1e-12) -> EigenSystem:
    """Dense diagonalization of a Hermitian operator, lowest `count` pairs.

    A real-symmetric matrix (vector potential switched off) is detected and
    diagonalized in real arithmetic.  Degenerate subspaces come back in an
    arbitrary orthonormal gauge.
    """
    defect = h.hermiticity_defect()
    if defect > hermiticity_tol:
        raise ContractViolation(f"operator is not Hermitian (defect {defect:.3e})")
    dense = h.matrix.toarray()
    if np.abs(dense.imag).max() == 0.0:
        dense = dense.real
    energies, vectors = sla.eigh(dense)
    if count is not None:
        energies = energies[:count]
        vectors = vectors[:, :count]
    return EigenSystem(energies=energies, vectors=np.ascontiguousarray(vectors), params=params)


def exciton_expectation(es: EigenSystem, counter: SparseOperator) -> np.ndarray:
    """<v_k| N_exc |v_k> for each retained eigenstate."""
    if counter.dim != es.vectors.shape[0]:
        raise ParameterError("operator dimension does not match eigenvectors")
    vals = np.einsum("ik,ik->k", es.vectors.conj(), counter.matrix @ es.vectors)
    return vals.real


def energy_histogram(es: EigenSystem, bin_width: float):
    """Histogram of eigenenergies; returns (bin centers, counts)."""
    if bin_width <= 0:
        raise ParameterError("bin_width must be positive")
    e = es.energies
    lo = e.min()
    n_bins = max(1, int(np.ceil((e.max() - lo) / bin_width + 1e-12)))
    edges = lo + bin_width * np.arange(n_bins + 1)
    counts, _ = np.histogram(e, bins=edges)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return centers, counts


def find_gap(es: EigenSystem, search_limit: float | None = None) -> tuple[float, int]:
    """Transition energy from the ground state across the largest spectral jump.

    Scans consecutive level spacings below `search_limit` (default: ground
    energy + 20 t0-equivalents estimated from the spectrum span), locates the
    widest jump, and returns (E_first_above - E_0, index of that state).
    """
    e = es.energies
    if search_limit is None:
        search_limit = e[0] + 0.4 * (e[-1] - e[0]) if len(e) > 1 else e[0]
    # keep one state beyond the limit so a jump straddling it stays visible
    upper = int(np.searchsorted(e, search_limit)) + 1
    upper = min(max(upper, 2), len(e))
    diffs = np.diff(e[:upper])
    k = int(np.argmax(diffs))
    return float(e[k + 1] - e[0]), k + 1


# -- persistence ---------------------------------------------------------

def cache_key(params: LatticeParams, n_up: int, n_down: int) -> str:
    payload = json.dumps({
        "L": params.L, "n_up": n_up, "n_down": n_down,
        "t0": params.t0, "a": params.a, "U": params.U, "V": params.V,
        "periodic": params.periodic,
    }, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def save_eigensystem(path, es: EigenSystem, n_up: int, n_down: int) -> None:
    meta = {
        "format_version": CACHE_FORMAT_VERSION,
        "n_up": n_up, "n_down": n_down,
        "params": None if es.params is None else {
            "L": es.params.L, "t0": es.params.t0, "a": es.params.a,
            "U": es.params.U, "V": es.params.V, "periodic": es.params.periodic,
        },
    }
    np.savez(path, meta=json.dumps(meta), energies=es.energies, vectors=es.vectors)


def load_eigensystem(path) -> EigenSystem:
    with np.load(path) as f:
        meta = json.loads(str(f["meta"]))
        if meta["format_version"] != CACHE_FORMAT_VERSION:
            raise ParameterError(f"unsupported cache version {meta['format_version']}")
        p = meta["params"]
        params = None if p is None else LatticeParams(
            L=p["L"], t0=p["t0"], a=p["a"], U=p["U"], V=p["V"], periodic=p["periodic"])
        return EigenSystem(energies=f["energies"], vectors=f["vectors"], params=params)
