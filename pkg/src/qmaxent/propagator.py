"""Energy-weighted stochastic density-matrix propagators.

A noise step averages unitaries U(r) = exp(-i (H dt - r K)/hbar) over a
Gaussian impulse r with variance sigma^2 = 2 D dt applied through the kick
operator K, evaluated by Gauss-Hermite quadrature. Weighting each unitary by
exp(-lam H/2) (.) exp(+lam H/2) biases transitions against energy gain; the
resulting transition tensor G is no longer trace preserving, and its column
sums are collected in the partition matrix Z = outer_trace(G)^T, so that
trace(G[rho]) = trace(Z rho).

Three normalization schemes turn G into a state-to-state step:

* ``step_global_norm``   rho -> G[rho] / trace(Z rho). Has the exact thermal
  fixed point exp(-lam H)/tr but weights the components of a mixture by their
  partition values, so marginals of a mixture are distorted (not causal).
* ``step_linear_norm``   rho -> G[Z^-1/2 rho Z^-1/2]. Linear and trace
  preserving.
* ``step_per_state``     eigendecomposes rho and normalizes each eigenstate's
  contribution by its own partition value <psi_k|Z|psi_k>. Equivalently, the
  fixed superoperator from ``per_state_operator`` applied to rho; any weighted
  array of states combining to rho propagates to the same output through that
  operator.

Sign conventions (validated numerically by the test suite): with
F(lam) = -sum_k p_k log <psi_k|Z(lam)|psi_k> and K1/K2 the per-state mean and
variance of the one-step energy change, dF/dlam = +sum_k p_k K1_k and
d2F/dlam2 = -sum_k p_k K2_k.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import superop
from .qm import (
    DensityMatrix,
    Spectrum,
    Wavefunction,
    as_density,
    hermitian_eig,
    hermitize,
    require_hermitian,
)
from .superop import SuperOperator

WEIGHT_EXP_LIMIT = 700.0  # largest |lam| * spectral_range / 2 before exp overflows
STATE_WEIGHT_FLOOR = 1e-14

# Empirical oscillator relaxation rate per step per unit diffusion constant,
# D in [5e-4, 2e-3], lam = 0.5, N = 10: r = RATE_PER_DIFFUSION * D.
RATE_PER_DIFFUSION = 1.42397


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian impulsive noise acting through a kick operator.

    sigma is the standard deviation of the impulse accumulated over one step
    of length dt; from a diffusion constant D use sigma^2 = 2 D dt.
    """

    hamiltonian: np.ndarray
    kick_operator: np.ndarray
    sigma: float
    dt: float = 1.0
    quadrature_order: int = 20
    hbar: float = 1.0

    def __post_init__(self):
        require_hermitian(self.hamiltonian, name="hamiltonian")
        require_hermitian(self.kick_operator, name="kick operator")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.dt <= 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.quadrature_order < 1:
            raise ValueError("quadrature_order must be >= 1")

    @staticmethod
    def from_diffusion(
        hamiltonian: np.ndarray,
        kick_operator: np.ndarray,
        diffusion: float,
        dt: float = 1.0,
        quadrature_order: int = 20,
        hbar: float = 1.0,
    ) -> "NoiseModel":
        if diffusion < 0:
            raise ValueError(f"diffusion must be >= 0, got {diffusion}")
        return NoiseModel(
            hamiltonian=hamiltonian,
            kick_operator=kick_operator,
            sigma=float(np.sqrt(2.0 * diffusion * dt)),
            dt=dt,
            quadrature_order=quadrature_order,
            hbar=hbar,
        )

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]


def noise_unitaries(model: NoiseModel, order: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature weights and the stack of step unitaries U(r_q).

    The Gaussian impulse density is sampled at the Gauss-Hermite nodes
    r_q = sqrt(2) sigma u_q; the weights are renormalized to sum to one so the
    discrete average is exactly trace preserving. sigma = 0 collapses to the
    single deterministic unitary.
    """
    n = model.quadrature_order if order is None else order
    if model.sigma == 0.0:
        nodes, weights = np.zeros(1), np.ones(1)
    else:
        u, w = np.polynomial.hermite.hermgauss(n)
        nodes = np.sqrt(2.0) * model.sigma * u
        weights = w / w.sum()
    us = np.empty((nodes.size, model.dim, model.dim), dtype=complex)
    for q, r in enumerate(nodes):
        gen = model.hamiltonian * model.dt - r * model.kick_operator
        spec = hermitian_eig(hermitize(gen), name="step generator")
        us[q] = spec.apply(lambda w_: np.exp(-1j * w_ / model.hbar))
    return weights, us


def build_noise_propagator(model: NoiseModel, order: int | None = None) -> SuperOperator:
    """Average the step unitaries into the unweighted transition tensor."""
    weights, us = noise_unitaries(model, order=order)
    return SuperOperator(superop.kraus_tensor(weights, us))


def _weight_factors(hamiltonian: np.ndarray, lam: float) -> tuple[np.ndarray, np.ndarray, Spectrum]:
    """exp(-lam(H - E0)/2) and its inverse; the shift is a pure numerical gauge."""
    spec = hermitian_eig(hamiltonian, name="hamiltonian")
    span = spec.eigenvalues.max() - spec.eigenvalues.min()
    if abs(lam) * span / 2.0 > WEIGHT_EXP_LIMIT:
        raise ValueError(
            f"|lam| * spectral range / 2 = {abs(lam) * span / 2.0:.1f} exceeds {WEIGHT_EXP_LIMIT}; "
            "energy weighting would overflow"
        )
    shifted = spec.eigenvalues - spec.eigenvalues.min()
    down = (spec.eigenvectors * np.exp(-lam * shifted / 2.0)) @ spec.eigenvectors.conj().T
    up = (spec.eigenvectors * np.exp(+lam * shifted / 2.0)) @ spec.eigenvectors.conj().T
    return hermitize(down), hermitize(up), spec


@dataclass(frozen=True)
class WeightedPropagator:
    """A noise propagator together with its energy weighting.

    Fields are fully derived from (noise_op, hamiltonian, lam) by
    ``energy_weight``; ``weighted_op`` is the biased tensor and
    ``partition_matrix`` its column-sum normalizer Z (Hermitian positive
    definite).
    """

    noise_op: SuperOperator
    hamiltonian: np.ndarray
    lam: float
    weighted_op: SuperOperator
    partition_matrix: np.ndarray
    partition_spectrum: Spectrum = field(repr=False)

    @property
    def dim(self) -> int:
        return self.noise_op.dim

    def state_partition(self, psi: np.ndarray) -> float:
        """<psi|Z|psi> for a normalized state vector."""
        return float(np.real(psi.conj() @ self.partition_matrix @ psi))


def energy_weight(noise_op: SuperOperator, hamiltonian: np.ndarray, lam: float) -> WeightedPropagator:
    """Bias a noise propagator by exp(-lam H/2)(.)exp(+lam H/2) on each side.

    In the energy eigenbasis this multiplies each tensor element by
    exp(-lam (dE_left + dE_right)/2) where dE is the energy gained along the
    corresponding index pair.
    """
    hamiltonian = np.asarray(hamiltonian, dtype=complex)
    if hamiltonian.shape[0] != noise_op.dim:
        raise ValueError(f"dimension mismatch: {hamiltonian.shape[0]} vs {noise_op.dim}")
    down, up, _ = _weight_factors(hamiltonian, lam)
    weighted = superop.sandwich(noise_op, left=(down, up), right=(up, down))
    z = hermitize(superop.outer_trace(weighted).T)
    zspec = hermitian_eig(z, name="partition matrix")
    if zspec.eigenvalues.min() <= 0.0:
        raise ValueError(
            f"partition matrix is not positive definite (min eigenvalue {zspec.eigenvalues.min():.3e})"
        )
    return WeightedPropagator(
        noise_op=noise_op,
        hamiltonian=hamiltonian,
        lam=float(lam),
        weighted_op=weighted,
        partition_matrix=z,
        partition_spectrum=zspec,
    )


def weighted_from_beta(
    noise_op: SuperOperator, hamiltonian: np.ndarray, beta: float, regime: str = "weak"
) -> WeightedPropagator:
    """Convenience mapping from an inverse temperature.

    regime="weak" uses lam = beta/2 (the small-bias regime where the
    stationary state matches a Boltzmann distribution at beta = 2 lam);
    regime="strong" uses lam = beta.
    """
    if regime == "weak":
        lam = beta / 2.0
    elif regime == "strong":
        lam = float(beta)
    else:
        raise ValueError(f"unknown regime {regime!r}, expected 'weak' or 'strong'")
    return energy_weight(noise_op, hamiltonian, lam)


def direct_partition_matrix(model: NoiseModel, lam: float, order: int | None = None) -> np.ndarray:
    """Partition matrix summed directly over the step unitaries.

    Independent of the tensor route: Z = sum_q w_q e^{lam H/2} U_q^dag
    e^{-lam H} U_q e^{lam H/2}, with the ground energy shifted out (the shifts
    cancel exactly).
    """
    weights, us = noise_unitaries(model, order=order)
    down, up, _ = _weight_factors(model.hamiltonian, lam)
    e_minus = down @ down  # exp(-lam (H - E0))
    z = np.zeros((model.dim, model.dim), dtype=complex)
    for w, u in zip(weights, us):
        z += w * (up @ u.conj().T @ e_minus @ u @ up)
    return hermitize(z)


def reverse_propagator(wp: WeightedPropagator) -> SuperOperator:
    """The time-reversed weighting: the same noise tensor biased by -lam."""
    down, up, _ = _weight_factors(wp.hamiltonian, -wp.lam)
    return superop.sandwich(wp.noise_op, left=(down, up), right=(up, down))


# ---------------------------------------------------------------------------
# Normalized steps.


def step_global_norm(wp: WeightedPropagator, rho: DensityMatrix) -> DensityMatrix:
    """G[rho] / trace(Z rho). Exact fixed point: exp(-lam H)/tr."""
    norm = float(np.real(np.trace(wp.partition_matrix @ rho.matrix)))
    return as_density(superop.apply(wp.weighted_op, rho) / norm)


def step_linear_norm(wp: WeightedPropagator, rho: DensityMatrix) -> DensityMatrix:
    """G[Z^-1/2 rho Z^-1/2]; linear in rho and trace preserving."""
    zmhalf = wp.partition_spectrum.apply(lambda w: 1.0 / np.sqrt(w))
    return as_density(superop.apply(wp.weighted_op, zmhalf @ rho.matrix @ zmhalf))


def _eigen_terms(wp: WeightedPropagator, rho: DensityMatrix):
    """(p_k, psi_k, z_k) over the occupied eigenstates of rho."""
    p, vecs = rho.eig()
    out = []
    for k in range(p.size):
        if p[k] <= STATE_WEIGHT_FLOOR:
            continue
        psi = vecs[:, k]
        out.append((float(p[k]), psi, wp.state_partition(psi)))
    return out


def step_per_state(wp: WeightedPropagator, rho: DensityMatrix) -> DensityMatrix:
    """Propagate each eigenstate of rho with its own partition normalization."""
    out = np.zeros((wp.dim, wp.dim), dtype=complex)
    for p, psi, z in _eigen_terms(wp, rho):
        out += (p / z) * superop.apply(wp.weighted_op, np.outer(psi, psi.conj()))
    return as_density(out)


def per_state_operator(wp: WeightedPropagator, rho: DensityMatrix) -> SuperOperator:
    """The fixed per-state-normalized superoperator specialized to rho.

    sum_k (I(.)P_k) G (P_k(.)I) / <psi_k|Z|psi_k> over rho's occupied
    eigenprojectors. Applying it to rho reproduces ``step_per_state(wp, rho)``
    up to normalization roundoff, and by linearity every weighted array of
    states combining to rho yields the same output.
    """
    out = np.zeros_like(wp.weighted_op.tensor)
    for _, psi, z in _eigen_terms(wp, rho):
        gk = superop.apply(wp.weighted_op, np.outer(psi, psi.conj()))
        out += np.einsum("xw,y,z->xyzw", gk, psi.conj(), psi) / z
    return SuperOperator(out)


def propagate_states(
    wp: WeightedPropagator,
    states: list[np.ndarray],
    weights: np.ndarray,
    operator: SuperOperator | None = None,
) -> DensityMatrix:
    """Push a weighted array of (possibly non-orthogonal) states through the step.

    The array must combine to a density matrix rho = sum_i w_i |s_i><s_i|.
    The per-state-normalized operator is built from rho's eigendecomposition
    (or passed in explicitly) and applied to each member.
    """
    weights = np.asarray(weights, dtype=float)
    rho_mat = np.zeros((states[0].size, states[0].size), dtype=complex)
    for w, s in zip(weights, states):
        rho_mat += w * np.outer(s, np.asarray(s).conj())
    if operator is None:
        operator = per_state_operator(wp, as_density(rho_mat))
    out = np.zeros_like(rho_mat)
    for w, s in zip(weights, states):
        s = np.asarray(s, dtype=complex)
        out += w * superop.apply(operator, np.outer(s, s.conj()))
    return as_density(out)


def state_conditioned_step(model: NoiseModel, beta: float, psi: Wavefunction) -> DensityMatrix:
    """Reweight the noise average by the state's own expected energy change.

    Each unitary branch is weighted by exp(-beta/2 <psi|U^dag H U - H|psi>)
    relative to its quadrature weight. Admissible only as a single-state rule:
    propagating two different arrays of the same mixture gives different
    results, which is what the mixing tests demonstrate.
    """
    weights, us = noise_unitaries(model)
    h = model.hamiltonian
    amp = psi.amplitudes
    e0 = np.real(amp.conj() @ h @ amp)
    shifts = np.array([np.real((u @ amp).conj() @ h @ (u @ amp)) - e0 for u in us])
    biased = weights * np.exp(-0.5 * beta * shifts)
    biased /= biased.sum()
    out = np.zeros((model.dim, model.dim), dtype=complex)
    for w, u in zip(biased, us):
        v = u @ amp
        out += w * np.outer(v, v.conj())
    return as_density(out)


# ---------------------------------------------------------------------------
# Free energy and energy-flux cumulants.


def kinetic_free_energy(wp: WeightedPropagator, rho: DensityMatrix) -> float:
    """F = -sum_k p_k log <psi_k|Z|psi_k> over rho's occupied eigenstates."""
    return float(-sum(p * np.log(z) for p, _, z in _eigen_terms(wp, rho)))


@dataclass(frozen=True)
class FluxCumulants:
    """Per-eigenstate mean (k1) and variance (k2) of the one-step energy change."""

    eigen_weights: np.ndarray
    k1: np.ndarray
    k2: np.ndarray

    @property
    def k1_total(self) -> float:
        return float(self.eigen_weights @ self.k1)

    @property
    def k2_total(self) -> float:
        return float(self.eigen_weights @ self.k2)


def flux_cumulants(wp: WeightedPropagator, rho: DensityMatrix) -> FluxCumulants:
    """First two energy-flux cumulants of one weighted step from each eigenstate.

    k1_j is the mean energy change tr(H G[P_j])/z_j - <psi_j|H|psi_j>; k2_j the
    corresponding variance. For rho diagonal in the energy basis these match
    the lam-derivatives of the kinetic free energy: dF/dlam = +sum p k1,
    d2F/dlam2 = -sum p k2.
    """
    h = wp.hamiltonian
    h2 = h @ h
    terms = _eigen_terms(wp, rho)
    ps = np.array([p for p, _, _ in terms])
    k1s = np.empty(ps.size)
    k2s = np.empty(ps.size)
    for idx, (_, psi, z) in enumerate(terms):
        proj = np.outer(psi, psi.conj())
        stepped = superop.apply(wp.weighted_op, proj) / z
        e_start = float(np.real(psi.conj() @ h @ psi))
        e2_start = float(np.real(psi.conj() @ h2 @ psi))
        k1 = float(np.real(np.trace(h @ stepped))) - e_start
        cross = superop.apply(wp.weighted_op, h @ proj) / z
        k2 = (
            float(np.real(np.trace(h2 @ stepped)))
            + e2_start
            - 2.0 * float(np.real(np.trace(h @ cross)))
            - k1 * k1
        )
        k1s[idx], k2s[idx] = k1, k2
    return FluxCumulants(eigen_weights=ps, k1=k1s, k2=k2s)
