"""Experiment pipelines: characterize, linear response, emission scan, convergence.

A RunConfig bundles every knob with production defaults, so an empty config
reproduces the reference scan.  Pipelines persist plot-ready CSV files with a
JSON metadata sidecar and reuse cached eigen decompositions and current
tables keyed by the configuration hash.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import hashlib
import json
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__ as _version
from .dynamics import (
    CurrentTables,
    PropagationConfig,
    linear_response,
    peak_location,
    probe_pulse,
    propagate_eigenstates,
)
from .hubbard import (
    ElectronicBasis,
    LatticeParams,
    ParameterError,
    PulseSpec,
    build_exciton_counter,
    build_hamiltonian,
)
from .photon import ModeSpec, evolve_mode, msa_observables, msa_state, reduced_observables
from .spectral import (
    EigenSystem,
    diagonalize,
    energy_histogram,
    exciton_expectation,
    find_gap,
    load_eigensystem,
    save_eigensystem,
)

CACHE_ENV_VAR = "MOTTLIGHT_CACHE_DIR"


@dataclass(frozen=True)
class ModeGrid:
    """Photon-mode frequency grid in units of the drive frequency."""

    minimum: float = 0.25
    maximum: float = 20.0
    step: float = 0.25

    def __post_init__(self):
        if self.minimum <= 0 or self.maximum <= self.minimum or self.step <= 0:
            raise ParameterError("mode grid needs 0 < minimum < maximum and step > 0")

    def frequencies(self, drive_omega: float) -> np.ndarray:
        n = int(round((self.maximum - self.minimum) / self.step))
        return (self.minimum + self.step * np.arange(n + 1)) * drive_omega


@dataclass(frozen=True)
class RunConfig:
    """Full experiment configuration with production defaults."""

    lattice: LatticeParams = field(default_factory=LatticeParams)
    pulse: PulseSpec = field(default_factory=PulseSpec)
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    g0: float = 4e-8
    n_max: int = 50
    modes: ModeGrid = field(default_factory=ModeGrid)
    histogram_bin_t0: float = 0.25      # eigenenergy histogram bin, units of t0
    retain_states: int | None = None    # eigenpairs kept by characterize (None = all)
    workers: int | None = None          # None = serial
    use_cache: bool = True

    def to_dict(self) -> dict:
        def clean(dc):
            return {k: v for k, v in dataclasses.asdict(dc).items()}

        return {
            "lattice": clean(self.lattice),
            "pulse": clean(self.pulse),
            "propagation": clean(self.propagation),
            "photon": {"g0": self.g0, "n_max": self.n_max},
            "modes": clean(self.modes),
            "run": {
                "histogram_bin_t0": self.histogram_bin_t0,
                "retain_states": self.retain_states,
                "workers": self.workers,
                "use_cache": self.use_cache,
            },
        }

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, default=repr)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def config_from_dict(data: dict) -> RunConfig:
    sections = {k: dict(v) for k, v in data.items()}
    lattice = LatticeParams(**sections.get("lattice", {}))
    pulse = PulseSpec(**sections.get("pulse", {}))
    prop = PropagationConfig(**sections.get("propagation", {}))
    photon = sections.get("photon", {})
    modes = ModeGrid(**sections.get("modes", {}))
    run = sections.get("run", {})
    return RunConfig(lattice=lattice, pulse=pulse, propagation=prop,
                     g0=photon.get("g0", 4e-8), n_max=photon.get("n_max", 50),
                     modes=modes,
                     histogram_bin_t0=run.get("histogram_bin_t0", 0.25),
                     retain_states=run.get("retain_states"),
                     workers=run.get("workers"),
                     use_cache=run.get("use_cache", True))


_BOOL_KEYS = {"periodic", "use_cache"}
_INT_KEYS = {"L", "krylov_dim", "m_el", "n_max", "workers", "check_interval", "retain_states"}


def _coerce(key: str, raw: str):
    raw = raw.strip()
    if raw.lower() in ("none", ""):
        return None
    if key in _BOOL_KEYS:
        return raw.lower() in ("1", "true", "yes", "on")
    if key in _INT_KEYS:
        return int(raw)
    return float(raw)


def config_from_ini(path, overrides: list[str] | None = None) -> RunConfig:
    """Read a sectioned key=value file; `overrides` are section.key=value strings."""
    import configparser

    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ParameterError(f"cannot read config file {path}")
    data: dict = {}
    for section in parser.sections():
        data[section] = {k: _coerce(k, v) for k, v in parser.items(section)}
    for item in overrides or []:
        key, _, value = item.partition("=")
        section, _, name = key.strip().partition(".")
        if not (section and name and _):
            raise ParameterError(f"override must look like section.key=value, got {item!r}")
        data.setdefault(section, {})[name] = _coerce(name, value)
    return config_from_dict(data)


# -- caching ----------------------------------------------------------------

def _cache_dir(explicit=None) -> Path | None:
    if explicit is not None:
        return Path(explicit)
    env = os.environ.get(CACHE_ENV_VAR)
    return Path(env) if env else None


def _hash_payload(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=repr).encode()).hexdigest()[:16]


def get_eigensystem(cfg: RunConfig, lattice: LatticeParams | None = None,
                    cache_dir=None) -> EigenSystem:
    """Diagonalize (or load from cache) the field-free chain of `cfg`."""
    params = cfg.lattice if lattice is None else lattice
    basis = ElectronicBasis.half_filled(params.L)
    key = _hash_payload({"kind": "eigs", "lattice": dataclasses.asdict(params),
                         "n_up": basis.n_up, "n_down": basis.n_down,
                         "count": cfg.retain_states})
    cdir = _cache_dir(cache_dir)
    if cfg.use_cache and cdir is not None:
        path = cdir / f"eigs-{key}.npz"
        if path.exists():
            return load_eigensystem(path)
    h = build_hamiltonian(basis, params)
    es = diagonalize(h, count=cfg.retain_states, params=params)
    if cfg.use_cache and cdir is not None:
        cdir.mkdir(parents=True, exist_ok=True)
        save_eigensystem(cdir / f"eigs-{key}.npz", es, basis.n_up, basis.n_down)
    return es


def get_current_tables(cfg: RunConfig, es: EigenSystem, cache_dir=None,
                       progress=None) -> CurrentTables:
    """Propagate (or load from cache) the current tables for `cfg`."""
    params = es.params
    key = _hash_payload({"kind": "tables", "lattice": dataclasses.asdict(params),
                         "pulse": dataclasses.asdict(cfg.pulse),
                         "propagation": dataclasses.asdict(cfg.propagation)})
    cdir = _cache_dir(cache_dir)
    if cfg.use_cache and cdir is not None:
        path = cdir / f"tables-{key}.npz"
        if path.exists():
            t = CurrentTables.load(path)
            t.params, t.pulse, t.config = params, cfg.pulse, cfg.propagation
            return t
    tables = propagate_eigenstates(es, cfg.pulse, cfg.propagation, progress=progress)
    if cfg.use_cache and cdir is not None:
        cdir.mkdir(parents=True, exist_ok=True)
        tables.save(cdir / f"tables-{key}.npz")
    return tables


# -- mode scan ----------------------------------------------------------------

@dataclass
class ModeRow:
    omega: float
    omega_per_drive: float
    spectrum_full: float | None = None
    spectrum_msa: float | None = None
    squeezing_full_db: float | None = None
    squeezing_msa_db: float | None = None
    mean_n: float | None = None
    beta_sq: float | None = None
    b_corr: float | None = None
    phi: float | None = None
    error: str = ""


_SCAN_TABLES: CurrentTables | None = None


def _scan_one(args) -> ModeRow:
    idx, omega, drive_omega, g0, n_max, method = args
    tables = _SCAN_TABLES
    row = ModeRow(omega=omega, omega_per_drive=omega / drive_omega)
    mode = ModeSpec(omega=omega, g0=g0, n_max=n_max)
    try:
        if method in ("msa", "both"):
            beta, b_mag, phi = msa_state(tables, mode)
            obs = msa_observables(beta, b_mag, phi, mode)
            row.spectrum_msa = obs.spectrum_value
            row.squeezing_msa_db = obs.squeezing_db
            row.beta_sq = abs(beta) ** 2
            row.b_corr = b_mag
            row.phi = phi
        if method in ("full", "both"):
            state = evolve_mode(tables, mode)
            obs = reduced_observables(state)
            row.spectrum_full = obs.spectrum_value
            row.squeezing_full_db = obs.squeezing_db
            row.mean_n = obs.mean_n
    except Exception as exc:  # recorded per row; the scan continues
        row.error = f"{type(exc).__name__}: {exc}"
    return row


def scan_modes(tables: CurrentTables, omegas: np.ndarray, drive_omega: float,
               g0: float, n_max: int, method: str = "both",
               workers: int | None = None) -> list[ModeRow]:
    """Evaluate every photon mode against shared current tables.

    Each mode is computed independently by the same per-mode code path, so
    the result is identical for any worker count; rows return in omega order.
    """
    if method not in ("full", "msa", "both"):
        raise ParameterError(f"method must be full, msa or both, got {method!r}")
    global _SCAN_TABLES
    _SCAN_TABLES = tables
    jobs = [(i, float(w), drive_omega, g0, n_max, method) for i, w in enumerate(omegas)]
    try:
        if workers is not None and workers > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(_scan_one, jobs, chunksize=4))
        else:
            rows = [_scan_one(j) for j in jobs]
    finally:
        _SCAN_TABLES = None
    return rows


# -- result persistence -------------------------------------------------------

_CSV_COLUMNS = ["omega_per_drive", "omega_au", "spectrum_full", "spectrum_msa",
                "squeezing_full_db", "squeezing_msa_db", "mean_n", "beta_sq",
                "b_corr", "phi", "error"]


@dataclass
class ResultSet:
    """Per-mode observable rows plus run metadata."""

    rows: list[ModeRow]
    metadata: dict

    def failures(self) -> list[ModeRow]:
        return [r for r in self.rows if r.error]

    def column(self, name: str) -> np.ndarray:
        vals = [getattr(r, name) for r in self.rows]
        return np.array([np.nan if v is None else v for v in vals], dtype=float)

    def write(self, out_dir, stem: str = "hhg") -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{stem}.csv"
        with open(path, "w", newline="") as fh:
            fh.write("# per-mode emission spectrum and squeezing\n")
            fh.write("# " + ",".join(_CSV_COLUMNS) + "\n")
            writer = csv.writer(fh)
            writer.writerow(_CSV_COLUMNS)
            for r in self.rows:
                writer.writerow([
                    repr(r.omega_per_drive), repr(r.omega),
                    _fmt(r.spectrum_full), _fmt(r.spectrum_msa),
                    _fmt(r.squeezing_full_db), _fmt(r.squeezing_msa_db),
                    _fmt(r.mean_n), _fmt(r.beta_sq), _fmt(r.b_corr), _fmt(r.phi),
                    r.error,
                ])
        with open(out / f"{stem}.meta.json", "w") as fh:
            json.dump(self.metadata, fh, indent=2, sort_keys=True, default=repr)
        return path


def _fmt(v) -> str:
    return "" if v is None else repr(v)


def _write_csv(path: Path, header: list[str], rows, comment: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(x) if isinstance(x, float) else x for x in row])


# -- pipelines -----------------------------------------------------------------

def run_characterize(cfg: RunConfig, out_dir=None, cache_dir=None) -> dict:
    """Field-free spectrum characterization: energies, histogram, pair counts.

    Returns a summary with the spectral gap in absolute units and in units of
    the drive frequency.
    """
    t_wall = time.time()
    es = get_eigensystem(cfg, cache_dir=cache_dir)
    basis = ElectronicBasis.half_filled(cfg.lattice.L)
    counter = build_exciton_counter(basis, cfg.lattice)
    exc = exciton_expectation(es, counter)
    centers, counts = energy_histogram(es, cfg.histogram_bin_t0 * cfg.lattice.t0)
    gap, first_above = find_gap(es)

    below = exc[:first_above]
    summary = {
        "config_hash": cfg.config_hash(),
        "code_version": _version,
        "n_states": es.n_states,
        "ground_energy": float(es.energies[0]),
        "gap": gap,
        "gap_per_drive": gap / cfg.pulse.omega,
        "gap_per_t0": gap / cfg.lattice.t0,
        "first_above_gap_index": first_above,
        "max_exciton_below_gap": float(below.max()) if len(below) else 0.0,
        "wall_time_s": None,
    }
    if out_dir is not None:
        out = Path(out_dir)
        t0 = cfg.lattice.t0
        _write_csv(out / "energies.csv",
                   ["index", "energy_au", "energy_per_t0", "exciton_expectation"],
                   [(int(i), float(e), float(e / t0), float(x))
                    for i, (e, x) in enumerate(zip(es.energies, exc))],
                   "field-free eigenenergies and exciton-pair expectations")
        _write_csv(out / "histogram.csv",
                   ["center_au", "center_per_t0", "count"],
                   [(float(c), float(c / t0), int(n)) for c, n in zip(centers, counts)],
                   f"eigenenergy histogram, bin {cfg.histogram_bin_t0} t0")
        summary["wall_time_s"] = time.time() - t_wall
        with open(out / "characterize.meta.json", "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
    summary["wall_time_s"] = time.time() - t_wall
    summary["_eigensystem"] = es
    summary["_exciton"] = exc
    return summary


def run_linear_response(cfg: RunConfig, out_dir=None, cache_dir=None,
                        probe: PulseSpec | None = None, control: bool = True) -> dict:
    """Weak-probe response for the configured lattice and a V=0 control."""
    if probe is None:
        probe = probe_pulse(cfg.lattice)
    results = {}
    variants = [("response", cfg.lattice)]
    if control:
        variants.append(("response_v0", replace(cfg.lattice, V=0.0)))
    for name, lattice in variants:
        es = get_eigensystem(cfg, lattice=lattice, cache_dir=cache_dir)
        om, resp = linear_response(es, probe, cfg.propagation)
        results[name] = {
            "omega": om,
            "response": resp,
            "peak_omega": peak_location(om, resp),
        }
        if out_dir is not None:
            t0 = cfg.lattice.t0
            _write_csv(Path(out_dir) / f"{name}.csv",
                       ["omega_au", "omega_per_t0", "omega_per_drive", "response"],
                       [(float(w), float(w / t0), float(w / cfg.pulse.omega), float(v))
                        for w, v in zip(om, resp)],
                       f"normalized linear response, V = {lattice.V!r}")
    if out_dir is not None:
        meta = {name: {"peak_omega": r["peak_omega"]} for name, r in results.items()}
        meta["config_hash"] = cfg.config_hash()
        with open(Path(out_dir) / "linear_response.meta.json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
    return results


def run_hhg(cfg: RunConfig, method: str = "both", out_dir=None, cache_dir=None,
            progress=None) -> ResultSet:
    """Propagate once, then map every photon mode; emit spectrum and squeezing."""
    t_wall = time.time()
    es = get_eigensystem(cfg, cache_dir=cache_dir)
    tables = get_current_tables(cfg, es, cache_dir=cache_dir, progress=progress)
    omegas = cfg.modes.frequencies(cfg.pulse.omega)
    rows = scan_modes(tables, omegas, cfg.pulse.omega, cfg.g0, cfg.n_max,
                      method=method, workers=cfg.workers)
    gap, _ = find_gap(es)
    metadata = {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "code_version": _version,
        "method": method,
        "m_el": tables.m_el,
        "n_times": tables.n_times,
        "norm_drift": tables.norm_drift,
        "gap": gap,
        "gap_per_drive": gap / cfg.pulse.omega,
        "n_failures": 0,
        "wall_time_s": None,
    }
    result = ResultSet(rows=rows, metadata=metadata)
    metadata["n_failures"] = len(result.failures())
    metadata["wall_time_s"] = time.time() - t_wall
    if out_dir is not None:
        result.write(out_dir)
    return result


def _curve_change(base: np.ndarray, other: np.ndarray) -> float:
    """Max pointwise change relative to the base curve's global maximum."""
    ref = np.nanmax(np.abs(base))
    if ref == 0 or np.isnan(ref):
        return float(np.nanmax(np.abs(other - base)))
    return float(np.nanmax(np.abs(other - base)) / ref)


def run_convergence(cfg: RunConfig, knobs=("dt", "m_el", "n_max", "krylov_dim"),
                    threshold: float = 1e-3, out_dir=None, cache_dir=None) -> dict:
    """One-at-a-time sweeps of the numerical knobs around the configured values.

    Each knob is tightened (dt halved, m_el doubled, n_max + 10, krylov_dim
    + 2) and the full-method spectrum and squeezing curves compared against
    the base run, relative to each curve's maximum.  Report-only: the PASS
    flag states whether every change stayed below `threshold`.
    """
    es = get_eigensystem(cfg, cache_dir=cache_dir)
    omegas = cfg.modes.frequencies(cfg.pulse.omega)

    def curves(tables: CurrentTables, n_max: int):
        rows = scan_modes(tables, omegas, cfg.pulse.omega, cfg.g0, n_max,
                          method="both", workers=cfg.workers)
        rs = ResultSet(rows=rows, metadata={})
        if rs.failures():
            raise RuntimeError(f"mode failures during sweep: {rs.failures()[0].error}")
        return {
            "spectrum_full": rs.column("spectrum_full"),
            "squeezing_full_db": rs.column("squeezing_full_db"),
            "spectrum_msa": rs.column("spectrum_msa"),
            "squeezing_msa_db": rs.column("squeezing_msa_db"),
        }

    base_tables = get_current_tables(cfg, es, cache_dir=cache_dir)
    base = curves(base_tables, cfg.n_max)
    base_dt = base_tables.times[2] - base_tables.times[0]

    report: dict = {"threshold": threshold, "knobs": {}}
    for knob in knobs:
        if knob == "dt":
            prop = replace(cfg.propagation, dt=base_dt / 2)
            variant = curves(propagate_eigenstates(es, cfg.pulse, prop), cfg.n_max)
        elif knob == "m_el":
            m2 = min(2 * base_tables.m_el, es.n_states)
            prop = replace(cfg.propagation, m_el=m2,
                           memory_limit_gb=2 * cfg.propagation.memory_limit_gb)
            variant = curves(propagate_eigenstates(es, cfg.pulse, prop), cfg.n_max)
        elif knob == "n_max":
            variant = curves(base_tables, cfg.n_max + 10)
        elif knob == "krylov_dim":
            prop = replace(cfg.propagation, krylov_dim=cfg.propagation.krylov_dim + 2)
            variant = curves(propagate_eigenstates(es, cfg.pulse, prop), cfg.n_max)
        else:
            raise ParameterError(f"unknown convergence knob {knob!r}")
        changes = {name: _curve_change(base[name], variant[name]) for name in base}
        report["knobs"][knob] = {
            "max_rel_change": max(changes.values()),
            "per_curve": changes,
            "pass": max(changes.values()) < threshold,
        }
    report["pass"] = all(entry["pass"] for entry in report["knobs"].values())
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "convergence.json", "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
    return report
