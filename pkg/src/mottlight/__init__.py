"""Quantum-optical emission and squeezing from a driven extended-Hubbard chain."""

__version__ = "0.1.0"

from .hubbard import (
    ElectronicBasis,
    LatticeParams,
    ParameterError,
    PulseSpec,
    SparseOperator,
    build_basis,
    build_current,
    build_exciton_counter,
    build_hamiltonian,
    build_hopping,
    build_interaction,
    sample_pulse,
)
from .spectral import EigenSystem, diagonalize, energy_histogram, exciton_expectation
from .dynamics import (
    ConvergenceError,
    CurrentTables,
    PropagationConfig,
    correlation_function,
    krylov_step,
    linear_response,
    propagate_eigenstates,
)
from .photon import (
    ModeObservables,
    ModeSpec,
    MSAValidityError,
    PhotonicState,
    TruncationError,
    evolve_mode,
    msa_observables,
    msa_state,
    reduced_observables,
)
from .pipeline import RunConfig, ResultSet, run_characterize, run_convergence, run_hhg, run_linear_response
