"""Heralded Dicke-state preparation in a leaky two-mode cavity.

Closed forms, conditional non-Hermitian dynamics, quantum-jump Monte Carlo
and a brute-force tensor-space oracle for the symmetric reductions.
"""

from __future__ import annotations

from .analysis import (
    dicke_state,
    dicke_state_collective,
    fidelity,
    oracle_compare,
    click_time_gof,
)
from .analytic import (
    PreconditionError,
    RabiPair,
    amplitudes_general,
    amplitudes_resonant,
    cumulative_success,
    excited_population_bound,
    rabi_frequencies,
    success_probability_closed,
    success_probability_integral,
)
from .dynamics import (
    ORACLE_CONTROLS,
    IntegrationError,
    IntegratorControls,
    elimination_error,
    eliminated_hamiltonian,
    integrate_conditional,
    transformed_generator,
)
from .model import (
    BasisMismatchError,
    BasisSizeError,
    CouplingProfile,
    EffectiveHamiltonian,
    FullTensor,
    IndexedBasis,
    ReducedSymmetric,
    SingleExcitation,
    StateVector,
    SymmetricLadder,
    SystemParams,
    build_basis,
    build_hamiltonian,
    mode_coupling,
    optimal_detuning,
    practical_params,
)
from .trajectory import (
    apply_jump,
    estimate_ladder,
    estimate_protocol,
    estimate_success,
    run_ladder,
    run_protocol,
    sample_trial,
)

__version__ = "0.1.0"
