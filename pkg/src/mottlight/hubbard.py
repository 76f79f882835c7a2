"""Electronic structure of a driven 1D extended-Hubbard chain.

Builds the fixed-(N_up, N_down) occupation basis as bitmask pairs, the
field-dressed Hamiltonian pieces (hopping with a Peierls phase, on-site and
nearest-neighbor repulsion), the charge-current operator, a nearest-neighbor
doublon-holon pair counter, and the classical driving pulse.

Conventions
-----------
Sites are numbered 0..L-1, bit j of a mask is the occupation of site j.
A basis state is ``c†_{p1,up} ... c†_{pk,up} c†_{q1,dn} ... |0>`` with site
indices ascending left to right and the down block to the right of the up
block.  With this ordering a same-spin hop picks up the parity of the
occupied sites strictly between the two involved sites, and cross-spin
crossings cancel for any particle-conserving bilinear.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb

import numpy as np
import scipy.sparse as sp

T0_DEFAULT = 0.0191      # nearest-neighbor hopping (hartree)
A_LATTICE_DEFAULT = 7.5589   # lattice spacing (bohr)


class ParameterError(ValueError):
    """Invalid physical or numerical parameters."""


@dataclass(frozen=True)
class LatticeParams:
    """Chain geometry and interaction strengths (atomic units)."""

    L: int = 8
    t0: float = T0_DEFAULT
    a: float = A_LATTICE_DEFAULT
    U: float = 12 * T0_DEFAULT
    V: float = 4 * T0_DEFAULT
    periodic: bool = True

    def __post_init__(self):
        if self.L < 2 or self.L % 2:
            raise ParameterError(f"L must be even and >= 2, got {self.L}")
        if self.t0 <= 0 or self.a <= 0:
            raise ParameterError("t0 and a must be positive")
        if self.U < 0 or self.V < 0:
            raise ParameterError("U and V must be non-negative")
        if self.periodic and self.L == 2:
            # the single bond of a 2-site ring would be counted twice
            raise ParameterError("periodic boundary is ill-defined for L=2; use open")

    def bonds(self) -> list[tuple[int, int]]:
        """Ordered bonds (j, j+1), including the wrap bond when periodic."""
        b = [(j, j + 1) for j in range(self.L - 1)]
        if self.periodic:
            b.append((self.L - 1, 0))
        return b


@dataclass(frozen=True)
class PulseSpec:
    """Gaussian-enveloped vector potential A(t) = (f0/omega) g(t) sin(omega (t-t_center)).

    Field defaults are the production drive: f0 = 0.0025 a.u. at carrier
    omega = t0/2, centered at five carrier periods with a one-period width.
    Grid fields default to the window [0, 10 T] sampled at T/2000, which is
    half the default photonic integrator step.
    """

    f0: float = 0.0025
    omega: float = T0_DEFAULT / 2
    t_center: float | None = None
    sigma: float | None = None
    t_start: float = 0.0
    t_end: float | None = None
    dt: float | None = None

    def __post_init__(self):
        if self.f0 < 0 or self.omega <= 0:
            raise ParameterError("need f0 >= 0 and omega > 0")
        T = 2 * np.pi / self.omega
        if self.t_center is None:
            object.__setattr__(self, "t_center", 5 * T)
        if self.sigma is None:
            object.__setattr__(self, "sigma", T)
        if self.t_end is None:
            object.__setattr__(self, "t_end", self.t_start + 10 * T)
        if self.dt is None:
            object.__setattr__(self, "dt", T / 2000)
        if self.sigma <= 0 or self.dt <= 0 or self.t_end <= self.t_start:
            raise ParameterError("need sigma > 0, dt > 0 and t_end > t_start")

    @property
    def period(self) -> float:
        return 2 * np.pi / self.omega

    def amplitude(self, t):
        """Vector potential at time(s) t; exactly zero at t = t_center."""
        t = np.asarray(t, dtype=float)
        tau = t - self.t_center
        return (self.f0 / self.omega) * np.exp(-(tau**2) / (2 * self.sigma**2)) * np.sin(self.omega * tau)

    def grid(self) -> np.ndarray:
        n = int(round((self.t_end - self.t_start) / self.dt))
        return self.t_start + self.dt * np.arange(n + 1)


def sample_pulse(spec: PulseSpec):
    """Sample A(t) on the grid and at the midpoints between grid times.

    Returns (times, a_grid, a_mid) where a_mid[k] = A(times[k] + dt/2); the
    midpoint values feed the midpoint-rule propagator and the photonic
    integrator downstream.
    """
    times = spec.grid()
    return times, spec.amplitude(times), spec.amplitude(times[:-1] + spec.dt / 2)


class ElectronicBasis:
    """Ordered fixed-(N_up, N_down) occupation basis over L sites.

    States are (up-mask, down-mask) pairs enumerated lexicographically:
    up-mask major, down-mask minor, each in increasing numeric order.
    """

    def __init__(self, L: int, n_up: int, n_down: int):
        if not (0 <= n_up <= L and 0 <= n_down <= L):
            raise ParameterError(f"invalid particle counts ({n_up}, {n_down}) for L={L}")
        self.L = L
        self.n_up = n_up
        self.n_down = n_down
        self.up_masks = _masks_with_popcount(L, n_up)
        self.down_masks = _masks_with_popcount(L, n_down)
        self._up_index = {int(m): i for i, m in enumerate(self.up_masks)}
        self._down_index = {int(m): i for i, m in enumerate(self.down_masks)}
        self.dim = len(self.up_masks) * len(self.down_masks)

    @classmethod
    def half_filled(cls, L: int) -> "ElectronicBasis":
        return cls(L, L // 2, L // 2)

    def state(self, idx: int) -> tuple[int, int]:
        n_dn = len(self.down_masks)
        return int(self.up_masks[idx // n_dn]), int(self.down_masks[idx % n_dn])

    def index(self, up: int, down: int) -> int:
        return self._up_index[up] * len(self.down_masks) + self._down_index[down]

    def occupations(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-site occupation bits, shape (dim, L) each for up and down."""
        sites = np.arange(self.L)
        up = (self.up_masks[:, None] >> sites) & 1
        dn = (self.down_masks[:, None] >> sites) & 1
        n_dn = len(self.down_masks)
        up_full = np.repeat(up, n_dn, axis=0)
        dn_full = np.tile(dn, (len(self.up_masks), 1))
        return up_full.astype(np.int8), dn_full.astype(np.int8)


def build_basis(L: int, n_up: int, n_down: int) -> ElectronicBasis:
    """Enumerate the fixed-count occupation basis; see ElectronicBasis."""
    return ElectronicBasis(L, n_up, n_down)


def _masks_with_popcount(L: int, n: int) -> np.ndarray:
    masks = [sum(1 << p for p in combo) for combo in itertools.combinations(range(L), n)]
    out = np.array(sorted(masks), dtype=np.int64)
    assert len(out) == comb(L, n)
    return out


def hop_sign(mask: int, i: int, j: int) -> int:
    """Fermionic sign of c†_i c_j on a same-spin mask (bit j set, bit i clear).

    Equals the parity of occupied sites strictly between i and j.
    """
    lo, hi = (i, j) if i < j else (j, i)
    between = ((1 << hi) - 1) & ~((1 << (lo + 1)) - 1)
    return -1 if bin(mask & between).count("1") % 2 else 1


def hop_sign_sequential(mask: int, i: int, j: int) -> int:
    """Same sign computed by applying c_j then c†_i with explicit crossings."""
    s = bin(mask & ((1 << j) - 1)).count("1")
    mask &= ~(1 << j)
    s += bin(mask & ((1 << i) - 1)).count("1")
    return -1 if s % 2 else 1


@dataclass
class SparseOperator:
    """Sparse complex operator on an ElectronicBasis.

    Thin wrapper over a CSR matrix carrying the Hermiticity promise of the
    builder that produced it.
    """

    matrix: sp.csr_matrix
    hermitian: bool = False

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def hermiticity_defect(self) -> float:
        d = self.matrix - self.matrix.getH()
        return 0.0 if d.nnz == 0 else float(np.abs(d.data).max())

    def to_triplets(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        coo = self.matrix.tocoo()
        return coo.row, coo.col, coo.data.real.copy(), coo.data.imag.copy()

    def save(self, path) -> None:
        row, col, re, im = self.to_triplets()
        np.savez(path, format_version=1, dim=self.dim, hermitian=self.hermitian,
                 row=row, col=col, re=re, im=im)

    @classmethod
    def load(cls, path) -> "SparseOperator":
        with np.load(path) as f:
            n = int(f["dim"])
            m = sp.coo_matrix((f["re"] + 1j * f["im"], (f["row"], f["col"])),
                              shape=(n, n)).tocsr()
            return cls(matrix=m, hermitian=bool(f["hermitian"]))


def forward_hop_matrix(basis: ElectronicBasis, params: LatticeParams) -> sp.csr_matrix:
    """Bare forward-hop structure K = sum_{j,mu} c†_{j,mu} c_{j+1,mu}.

    Real matrix with entries ±1; every field-dressed hopping/current
    operator is a phase-weighted combination of K and K†.
    """
    if basis.L != params.L:
        raise ParameterError("basis and lattice params disagree on L")
    rows, cols, vals = [], [], []
    n_dn = len(basis.down_masks)

    for iu, mu in enumerate(basis.up_masks):
        mu = int(mu)
        for (i, j) in params.bonds():
            if (mu >> j) & 1 and not (mu >> i) & 1:
                new = (mu & ~(1 << j)) | (1 << i)
                s = hop_sign(mu, i, j)
                iu2 = basis._up_index[new]
                # same up-hop applies for every down mask
                base_r = iu2 * n_dn
                base_c = iu * n_dn
                for idn in range(n_dn):
                    rows.append(base_r + idn)
                    cols.append(base_c + idn)
                    vals.append(s)

    for idn, md in enumerate(basis.down_masks):
        md = int(md)
        for (i, j) in params.bonds():
            if (md >> j) & 1 and not (md >> i) & 1:
                new = (md & ~(1 << j)) | (1 << i)
                s = hop_sign(md, i, j)
                idn2 = basis._down_index[new]
                for iu in range(len(basis.up_masks)):
                    rows.append(iu * n_dn + idn2)
                    cols.append(iu * n_dn + idn)
                    vals.append(s)

    k = sp.coo_matrix((np.array(vals, dtype=float), (rows, cols)),
                      shape=(basis.dim, basis.dim))
    return k.tocsr()


def build_hopping(basis: ElectronicBasis, params: LatticeParams, a_val: float = 0.0,
                  k_matrix: sp.csr_matrix | None = None) -> SparseOperator:
    """Peierls-dressed kinetic term -t0 sum (e^{iaA} c†_j c_{j+1} + h.c.)."""
    k = forward_hop_matrix(basis, params) if k_matrix is None else k_matrix
    phase = np.exp(1j * params.a * a_val)
    h = (-params.t0) * (phase * k + np.conj(phase) * k.T)
    return SparseOperator(matrix=h.tocsr(), hermitian=True)


def build_current(basis: ElectronicBasis, params: LatticeParams, a_val: float = 0.0,
                  k_matrix: sp.csr_matrix | None = None) -> SparseOperator:
    """Charge current along the chain, -i a t0 sum (e^{iaA} c†_j c_{j+1} - h.c.)."""
    k = forward_hop_matrix(basis, params) if k_matrix is None else k_matrix
    phase = np.exp(1j * params.a * a_val)
    j = (-1j * params.a * params.t0) * (phase * k - np.conj(phase) * k.T)
    return SparseOperator(matrix=j.tocsr(), hermitian=True)


def interaction_diagonal(basis: ElectronicBasis, params: LatticeParams) -> np.ndarray:
    """Diagonal of U sum n_up n_dn + V sum n_j n_{j+1} (wrap bond included)."""
    up, dn = basis.occupations()
    n = (up + dn).astype(float)
    diag = params.U * np.sum((up & dn).astype(float), axis=1)
    for (i, j) in params.bonds():
        diag += params.V * n[:, i] * n[:, j]
    return diag


def build_interaction(basis: ElectronicBasis, params: LatticeParams) -> SparseOperator:
    """On-site plus nearest-neighbor repulsion as a diagonal operator."""
    d = interaction_diagonal(basis, params).astype(complex)
    return SparseOperator(matrix=sp.diags(d, format="csr"), hermitian=True)


def build_hamiltonian(basis: ElectronicBasis, params: LatticeParams, a_val: float = 0.0,
                      k_matrix: sp.csr_matrix | None = None) -> SparseOperator:
    """Full chain Hamiltonian at vector-potential value a_val."""
    hop = build_hopping(basis, params, a_val, k_matrix=k_matrix)
    inter = build_interaction(basis, params)
    return SparseOperator(matrix=(hop.matrix + inter.matrix).tocsr(), hermitian=True)


def exciton_diagonal(basis: ElectronicBasis, params: LatticeParams) -> np.ndarray:
    """Diagonal counting nearest-neighbor doublon-holon pairs.

    d_j = n_{j,up} n_{j,dn}, h_j = (1-n_{j,up})(1-n_{j,dn}); the counter is
    sum_j (d_j h_{j+1} + h_j d_{j+1}) over the bond list.
    """
    up, dn = basis.occupations()
    d = (up & dn).astype(float)
    h = ((1 - up) & (1 - dn)).astype(float)
    count = np.zeros(basis.dim)
    for (i, j) in params.bonds():
        count += d[:, i] * h[:, j] + h[:, i] * d[:, j]
    return count


def build_exciton_counter(basis: ElectronicBasis, params: LatticeParams | None = None) -> SparseOperator:
    """Nearest-neighbor doublon-holon pair counter as a diagonal operator."""
    if params is None:
        params = LatticeParams(L=basis.L) if basis.L != 2 else LatticeParams(L=2, periodic=False)
    d = exciton_diagonal(basis, params).astype(complex)
    return SparseOperator(matrix=sp.diags(d, format="csr"), hermitian=True)


def parity_permutation(basis: ElectronicBasis) -> tuple[np.ndarray, np.ndarray]:
    """Site-inversion map j -> L-1-j as (permutation, sign) arrays.

    Reversing k occupied sites reorders the creation-operator product by a
    permutation of parity k(k-1)/2, independently for each spin block.
    """
    L = basis.L
    perm = np.empty(basis.dim, dtype=np.int64)
    sign = np.empty(basis.dim, dtype=np.int8)

    def reverse_mask(m: int) -> int:
        out = 0
        for p in range(L):
            if (m >> p) & 1:
                out |= 1 << (L - 1 - p)
        return out

    def block_sign(k: int) -> int:
        return -1 if (k * (k - 1) // 2) % 2 else 1

    s_up = block_sign(basis.n_up)
    s_dn = block_sign(basis.n_down)
    for idx in range(basis.dim):
        mu, md = basis.state(idx)
        perm[idx] = basis.index(reverse_mask(mu), reverse_mask(md))
        sign[idx] = s_up * s_dn
    return perm, sign
