"""qmaxent: energy-weighted stochastic propagators for open quantum dynamics.

The package builds noisy unitary step averages as dense superoperator tensors,
biases them against energy gain with a tunable weighting strength, and turns
the biased tensors into normalized density-matrix maps whose stationary states,
entropy ledgers, and high-friction limits can be measured. A small reference
simulator (a repeatedly measured and reset cavity coupled to the system) gives
an independent relaxation-rate target.
"""

from .qm import (
    DensityMatrix,
    Spectrum,
    Wavefunction,
    as_density,
    fock_state,
    harmonic_hamiltonian,
    hermitian_eig,
    hermitize,
    momentum_operator,
    position_operator,
    von_neumann_entropy,
)
from .superop import (
    KrausSet,
    SuperOperator,
    apply,
    compose,
    identity_superop,
    inner_trace,
    kraus_decompose,
    outer_trace,
    sandwich,
    unitary_superop,
)
from .propagator import (
    FluxCumulants,
    NoiseModel,
    WeightedPropagator,
    build_noise_propagator,
    energy_weight,
    flux_cumulants,
    kinetic_free_energy,
    noise_unitaries,
    per_state_operator,
    propagate_states,
    step_global_norm,
    step_linear_norm,
    step_per_state,
    weighted_from_beta,
)
from .entropy import StepLedger, forward_joint, relative_entropy, reverse_joint, step_ledger
from .stationary import (
    BalanceReport,
    StationaryResult,
    detailed_balance_report,
    find_stationary,
    reference_equilibrium,
    temperature_scan,
)
from .andersen import ThermostatConfig, ensemble_relaxation, fit_relaxation, predicted_rate, run_trajectory
from .spin import FieldNoise, collapse_timecourse, gaussian_field_propagator, spin_transition_tensor
from .cl_limit import limit_check, master_rhs

__version__ = "0.1.0"

__all__ = [
    "BalanceReport",
    "DensityMatrix",
    "FieldNoise",
    "FluxCumulants",
    "KrausSet",
    "NoiseModel",
    "Spectrum",
    "StationaryResult",
    "StepLedger",
    "SuperOperator",
    "ThermostatConfig",
    "Wavefunction",
    "WeightedPropagator",
    "apply",
    "as_density",
    "build_noise_propagator",
    "collapse_timecourse",
    "compose",
    "detailed_balance_report",
    "energy_weight",
    "ensemble_relaxation",
    "fit_relaxation",
    "find_stationary",
    "flux_cumulants",
    "fock_state",
    "forward_joint",
    "gaussian_field_propagator",
    "harmonic_hamiltonian",
    "hermitian_eig",
    "hermitize",
    "identity_superop",
    "inner_trace",
    "kinetic_free_energy",
    "kraus_decompose",
    "limit_check",
    "master_rhs",
    "momentum_operator",
    "noise_unitaries",
    "outer_trace",
    "per_state_operator",
    "position_operator",
    "predicted_rate",
    "propagate_states",
    "reference_equilibrium",
    "relative_entropy",
    "reverse_joint",
    "run_trajectory",
    "sandwich",
    "spin_transition_tensor",
    "step_global_norm",
    "step_ledger",
    "step_linear_norm",
    "step_per_state",
    "temperature_scan",
    "unitary_superop",
    "von_neumann_entropy",
    "weighted_from_beta",
]
