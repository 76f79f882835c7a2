"""Time propagation through the driving pulse and current matrix elements.

The tracked eigenstates are advanced with a short-iterate Lanczos
approximation of the step propagator, the Hamiltonian being evaluated at the
midpoint vector potential of every substep.  The stored grid has two points
per integrator step so the photonic solver downstream finds its half-step
samples.  Matrix elements of the current operator between all pairs of
tracked trajectories are assembled at every grid time.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace

import numpy as np

from ._kernels import DressedApplier
from .hubbard import (
    ElectronicBasis,
    LatticeParams,
    ParameterError,
    PulseSpec,
    SparseOperator,
    forward_hop_matrix,
    interaction_diagonal,
)
from .spectral import EigenSystem

TABLES_FORMAT_VERSION = 1


class ConvergenceError(RuntimeError):
    """Norm drift or resource bounds exceeded; reduce dt or the state count."""


@dataclass(frozen=True)
class PropagationConfig:
    """Numerical knobs for the electronic propagation.

    ``dt`` is the step of the photonic integrator; the electronic propagation
    advances in substeps of dt/2 and the output grid has dt/2 spacing.  When
    ``m_el`` is None the retained-state count is every eigenstate below the
    ground energy plus ``energy_window`` (default 40 t0), subject to the
    memory guard.
    """

    dt: float | None = None
    krylov_dim: int = 6
    t_start: float | None = None
    t_end: float | None = None
    m_el: int | None = None
    energy_window: float | None = None
    norm_tol: float = 1e-8
    memory_limit_gb: float = 3.0
    check_interval: int = 200

    def __post_init__(self):
        if self.krylov_dim < 2:
            raise ParameterError("krylov_dim must be >= 2")
        if self.dt is not None and self.dt <= 0:
            raise ParameterError("dt must be positive")
        if self.m_el is not None and self.m_el < 1:
            raise ParameterError("m_el must be >= 1")


@dataclass
class CurrentTables:
    """Time-sampled current matrix elements between tracked trajectories.

    ``j_mn[k]`` is the M x M Hermitian matrix <psi_m(t_k)| j(A(t_k)) |psi_n(t_k)>
    on the half-step grid ``times``; ``j_expect`` is its (0, 0) element.  The
    two-time correlation ``C`` is only materialized on demand.
    """

    times: np.ndarray
    j_mn: np.ndarray
    j_expect: np.ndarray
    energies: np.ndarray
    C: np.ndarray | None = None
    params: LatticeParams | None = None
    pulse: PulseSpec | None = None
    config: PropagationConfig | None = None
    norm_drift: float = 0.0

    @property
    def m_el(self) -> int:
        return self.j_mn.shape[1]

    @property
    def n_times(self) -> int:
        return len(self.times)

    def hermiticity_defect(self) -> float:
        return float(np.abs(self.j_mn - np.conj(np.swapaxes(self.j_mn, 1, 2))).max())

    def ground_row(self) -> np.ndarray:
        """j_0n(t) as a contiguous (N_t, M) array."""
        return np.ascontiguousarray(self.j_mn[:, 0, :])

    def save(self, path) -> None:
        meta = {"format_version": TABLES_FORMAT_VERSION, "norm_drift": self.norm_drift}
        np.savez(path, meta=json.dumps(meta), times=self.times, j_mn=self.j_mn,
                 j_expect=self.j_expect, energies=self.energies)

    @classmethod
    def load(cls, path) -> "CurrentTables":
        with np.load(path) as f:
            meta = json.loads(str(f["meta"]))
            if meta["format_version"] != TABLES_FORMAT_VERSION:
                raise ParameterError(f"unsupported tables version {meta['format_version']}")
            return cls(times=f["times"], j_mn=f["j_mn"], j_expect=f["j_expect"],
                       energies=f["energies"], norm_drift=float(meta["norm_drift"]))


# -- Krylov stepping ------------------------------------------------------

_BREAKDOWN_TOL = 1e-13


def _lanczos_block_step(apply_h, x: np.ndarray, dt: float, m: int) -> np.ndarray:
    """exp(-i dt H) applied to every column of x via an m-dim Lanczos space.

    A vanishing recurrence norm (invariant subspace) zero-pads the basis; the
    small exponential then acts within the live block, which is the exact
    result rather than a failure.
    """
    n, r = x.shape
    v = np.empty((m, n, r), dtype=np.complex128)
    alphas = np.zeros((m, r))
    betas = np.zeros((max(m - 1, 1), r))

    v[0] = x
    w = apply_h(v[0])
    alphas[0] = np.einsum("ir,ir->r", v[0].conj(), w).real
    w = w - alphas[0] * v[0]
    for k in range(1, m):
        b = np.linalg.norm(w, axis=0)
        live = b > _BREAKDOWN_TOL
        betas[k - 1] = np.where(live, b, 0.0)
        v[k] = np.where(live, w / np.where(live, b, 1.0), 0.0)
        w = apply_h(v[k])
        w = w - betas[k - 1] * v[k - 1]
        alphas[k] = np.einsum("ir,ir->r", v[k].conj(), w).real
        w = w - alphas[k] * v[k]

    t_mat = np.zeros((r, m, m))
    idx = np.arange(m)
    t_mat[:, idx, idx] = alphas.T
    if m > 1:
        t_mat[:, idx[:-1], idx[1:]] = betas[: m - 1].T
        t_mat[:, idx[1:], idx[:-1]] = betas[: m - 1].T
    evals, evecs = np.linalg.eigh(t_mat)
    phases = np.exp(-1j * dt * evals)
    y = np.einsum("rkm,rm,rm->rk", evecs, phases, evecs[:, 0, :])

    out = v[0] * y[:, 0]
    for k in range(1, m):
        out += v[k] * y[:, k]
    return out


def krylov_step(psi: np.ndarray, h_mid: SparseOperator, dt: float, krylov_dim: int = 6) -> np.ndarray:
    """Propagate one normalized state by exp(-i dt H) in a small Lanczos space."""
    nrm = np.linalg.norm(psi)
    if abs(nrm - 1.0) > 1e-10:
        raise ParameterError(f"state must be normalized, |psi| = {nrm}")
    mat = h_mid.matrix

    def apply(x):
        return mat @ x

    return _lanczos_block_step(apply, psi[:, None].astype(np.complex128), dt, krylov_dim)[:, 0]


# -- propagation ----------------------------------------------------------

def resolve_state_count(es: EigenSystem, cfg: PropagationConfig, params: LatticeParams) -> int:
    if cfg.m_el is not None:
        if cfg.m_el > es.n_states:
            raise ParameterError(f"m_el={cfg.m_el} exceeds retained eigenpairs ({es.n_states})")
        return cfg.m_el
    window = 40.0 * params.t0 if cfg.energy_window is None else cfg.energy_window
    count = int(np.searchsorted(es.energies, es.energies[0] + window, side="right"))
    return max(count, 1)


def _grid(pulse: PulseSpec, cfg: PropagationConfig) -> tuple[np.ndarray, float, int]:
    t_start = pulse.t_start if cfg.t_start is None else cfg.t_start
    t_end = pulse.t_end if cfg.t_end is None else cfg.t_end
    dt = pulse.period / 1000 if cfg.dt is None else cfg.dt
    n_steps = max(1, int(np.ceil((t_end - t_start) / dt - 1e-9)))
    h = dt / 2
    times = t_start + h * np.arange(2 * n_steps + 1)
    return times, h, 2 * n_steps


def propagate_eigenstates(es: EigenSystem, pulse: PulseSpec, cfg: PropagationConfig,
                          *, progress=None, use_numba: bool = True) -> CurrentTables:
    """Drive the lowest tracked eigenstates through the pulse; tabulate currents.

    Returns CurrentTables on the half-step grid.  Raises ConvergenceError if
    any trajectory norm drifts beyond cfg.norm_tol (the step is too coarse)
    or if the table would exceed the configured memory bound.
    """
    if es.params is None:
        raise ParameterError("EigenSystem must carry its LatticeParams")
    params = es.params
    basis = ElectronicBasis.half_filled(params.L)
    if es.vectors.shape[0] != basis.dim:
        raise ParameterError("eigenvector dimension does not match the half-filled basis")

    m_el = resolve_state_count(es, cfg, params)
    times, h_e, n_sub = _grid(pulse, cfg)
    need_gb = (n_sub + 1) * m_el * m_el * 16 / 1e9
    if need_gb > cfg.memory_limit_gb:
        raise ConvergenceError(
            f"current tables need {need_gb:.2f} GB for m_el={m_el}, n_times={n_sub + 1}; "
            f"limit is {cfg.memory_limit_gb} GB - set m_el explicitly or raise the limit")

    k_mat = forward_hop_matrix(basis, params)
    diag = interaction_diagonal(basis, params)
    h_apply = DressedApplier(k_mat, diag, use_numba=use_numba)
    j_apply = DressedApplier(k_mat, np.zeros(basis.dim), use_numba=use_numba)

    def alpha_h(a_val: float) -> complex:
        return -params.t0 * np.exp(1j * params.a * a_val)

    def alpha_j(a_val: float) -> complex:
        return -1j * params.a * params.t0 * np.exp(1j * params.a * a_val)

    psi = np.ascontiguousarray(es.vectors[:, :m_el], dtype=np.complex128)
    j_mn = np.empty((n_sub + 1, m_el, m_el), dtype=np.complex128)

    def assemble(k: int, t: float):
        jpsi = j_apply(psi, alpha_j(pulse.amplitude(t)))
        j_mn[k] = psi.conj().T @ jpsi

    assemble(0, times[0])
    max_drift = 0.0
    m = cfg.krylov_dim
    for k in range(n_sub):
        a_mid = pulse.amplitude(times[k] + h_e / 2)
        al = alpha_h(a_mid)
        psi = _lanczos_block_step(lambda x: h_apply(x, al), psi, h_e, m)
        assemble(k + 1, times[k + 1])
        if (k + 1) % cfg.check_interval == 0 or k == n_sub - 1:
            drift = float(np.abs(np.linalg.norm(psi, axis=0) - 1.0).max())
            max_drift = max(max_drift, drift)
            if max_drift > cfg.norm_tol:
                raise ConvergenceError(
                    f"trajectory norm drift {max_drift:.3e} exceeds {cfg.norm_tol:.1e}; "
                    "reduce dt or increase krylov_dim")
        if progress is not None and (k + 1) % max(1, n_sub // 20) == 0:
            progress(k + 1, n_sub)

    return CurrentTables(times=times, j_mn=j_mn, j_expect=j_mn[:, 0, 0].copy(),
                         energies=es.energies[:m_el].copy(), params=params,
                         pulse=pulse, config=cfg, norm_drift=max_drift)


# -- two-time correlation --------------------------------------------------

def correlation_function(tables: CurrentTables, every: int = 1,
                         memory_limit_gb: float = 2.0) -> np.ndarray:
    """Connected two-time current correlation on the stored grid.

    C(t', t'') = sum_n j_0n(t') j_n0(t'') - j_00(t') j_00(t''), the identity
    resolution truncated at the tracked state count.  ``every`` subsamples the
    grid; the full matrix at production resolution is large, so callers on the
    squeezing path should prefer the factored quadrature in the photon module.
    """
    if tables.m_el == 1:
        warnings.warn("single tracked state: C vanishes identically and squeezing will vanish")
    times = tables.times[::every]
    n = len(times)
    if n * n * 16 / 1e9 > memory_limit_gb:
        raise ParameterError(
            f"two-time array would need {n * n * 16 / 1e9:.2f} GB; increase `every`")
    j0n = np.ascontiguousarray(tables.j_mn[::every, 0, :])
    jn0 = np.ascontiguousarray(tables.j_mn[::every, :, 0])
    j00 = tables.j_expect[::every]
    return j0n @ jn0.T - np.outer(j00, j00)


# -- linear response -------------------------------------------------------

def probe_pulse(params: LatticeParams, *, f0: float = 2.5e-5, carrier_factor: float = 10.0,
                duration: float = 4000.0, dt: float | None = None) -> PulseSpec:
    """Single-cycle perturbative probe: carrier ~ 10 t0, width one half-period."""
    omega_pr = carrier_factor * params.t0
    sigma = np.pi / omega_pr
    if dt is None:
        dt = (2 * np.pi / omega_pr) / 160
    return PulseSpec(f0=f0, omega=omega_pr, t_center=5 * sigma, sigma=sigma,
                     t_start=0.0, t_end=duration, dt=dt)


def fourier_plus(times: np.ndarray, signal: np.ndarray, pad_factor: int = 1):
    """Spectrum F(w) = integral e^{+i w t} x(t) dt on the uniform grid.

    Returns (omega, F) for non-negative frequencies via a real FFT.
    """
    h = times[1] - times[0]
    n = len(signal) * max(1, pad_factor)
    ft = np.conj(np.fft.rfft(signal, n=n)) * h
    omega = 2 * np.pi * np.fft.rfftfreq(n, d=h)
    ft = ft * np.exp(1j * omega * times[0])
    return omega, ft


def linear_response(es: EigenSystem, probe: PulseSpec, cfg: PropagationConfig,
                    *, window: str = "hann", spectral_floor: float = 1e-3,
                    pad_factor: int = 4, use_numba: bool = True):
    """Normalized |sigma(w)| from a weak probe run on the ground state.

    Propagates the ground state, records j_00(t), and forms the conductivity
    sigma(w) = j(w) / (i w A(w)) wherever the probe has spectral weight.  A
    Hann window tames the truncated ringdown before transforming (set
    window="none" to disable).  Warns when the response shows second-harmonic
    content above 1% of the fundamental (probe no longer perturbative).
    """
    run_cfg = replace(cfg, m_el=1)
    tables = propagate_eigenstates(es, probe, run_cfg, use_numba=use_numba)
    j00 = tables.j_expect.real
    times = tables.times

    if window == "hann":
        j_w = j00 * np.hanning(len(j00))
    elif window in (None, "none"):
        j_w = j00
    else:
        raise ParameterError(f"unknown window {window!r}")

    omega, f_j = fourier_plus(times, j_w, pad_factor)
    _, f_a = fourier_plus(times, probe.amplitude(times), pad_factor)

    floor = spectral_floor * np.abs(f_a).max()
    mask = (np.abs(f_a) > floor) & (omega > 0)
    om = omega[mask]
    resp = np.abs(f_j[mask] / (1j * om * f_a[mask]))
    peak = resp.max()
    if peak > 0:
        resp = resp / peak

    k_star = int(np.argmax(resp))
    w_star = om[k_star]
    k2 = int(np.argmin(np.abs(omega - 2 * w_star)))
    if omega[k2] > om[-1] * 0.5 and np.abs(f_j[k_star]) > 0:
        ratio = np.abs(f_j[k2]) / np.abs(f_j[mask][k_star])
        if ratio > 0.01:
            warnings.warn(f"second-harmonic content {ratio:.1%} of fundamental: "
                          "probe is beyond the linear regime, reduce f0")
    return om, resp


def peak_location(omega: np.ndarray, values: np.ndarray) -> float:
    """Peak abscissa refined by a parabola through the three points at the max."""
    k = int(np.argmax(values))
    if k == 0 or k == len(values) - 1:
        return float(omega[k])
    y0, y1, y2 = values[k - 1], values[k], values[k + 1]
    denom = y0 - 2 * y1 + y2
    if denom == 0:
        return float(omega[k])
    shift = 0.5 * (y0 - y2) / denom
    return float(omega[k] + shift * (omega[k + 1] - omega[k]))
