"""Stationary states of the weighted propagators and their diagnostics.

The per-state-normalized step is nonlinear in rho (the normalization depends
on rho's eigenstates), so its fixed point is found by an outer loop of
eigenvalue analyses: freeze the per-state operator at the current rho, take
the eigenvector of its action matrix closest to eigenvalue one, and repeat
until the eigenbasis stops rotating and the eigenvalue stops drifting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import superop
from .propagator import (
    NoiseModel,
    WeightedPropagator,
    build_noise_propagator,
    energy_weight,
    per_state_operator,
    step_per_state,
)
from .qm import (
    DensityMatrix,
    coupled_hamiltonian,
    hermitian_eig,
    hermitize,
    partial_trace_second,
)


def _alignment_residual(rho_a: DensityMatrix, rho_b: DensityMatrix) -> float:
    """N - sum_k |<psi'_k|psi_k>| with eigenvectors paired by maximum overlap.

    Eigensolver ordering can swap between nearby spectra, so the pairing is a
    maximum-weight matching on the overlap magnitudes rather than index order.
    """
    _, va = rho_a.eig()
    _, vb = rho_b.eig()
    overlap = np.abs(vb.conj().T @ va)
    rows, cols = linear_sum_assignment(-overlap)
    return float(rho_a.dim - overlap[rows, cols].sum())


def _nearest_unit_eigenpair(op_matrix: np.ndarray) -> tuple[complex, np.ndarray]:
    vals, vecs = np.linalg.eig(op_matrix)
    idx = int(np.argmin(np.abs(vals - 1.0)))
    return vals[idx], vecs[:, idx]


def _as_state(candidate: np.ndarray) -> DensityMatrix:
    """Phase-fix, hermitize, and clamp an eigenvector reshaped to a matrix."""
    t = np.trace(candidate)
    if abs(t) > 1e-12:
        candidate = candidate / t
    else:
        candidate = candidate / candidate.flat[np.argmax(np.abs(candidate))]
    spec = hermitian_eig(hermitize(candidate), name="stationary candidate")
    w = np.clip(spec.eigenvalues, 0.0, None)
    total = w.sum()
    if total <= 0.0:
        raise ValueError("stationary candidate has no positive spectral weight")
    mat = (spec.eigenvectors * (w / total)) @ spec.eigenvectors.conj().T
    return DensityMatrix(hermitize(mat))


@dataclass(frozen=True)
class StationaryResult:
    state: DensityMatrix
    iterations: int
    converged: bool
    rotation: float          # final eigenvector-rotation residual
    eigenvalue_drift: float  # final |mu_t - mu_{t-1}| of the near-unit eigenvalue
    eigenvalue: complex      # near-unit eigenvalue at the last iteration


def find_stationary(
    wp: WeightedPropagator,
    rho0: DensityMatrix | None = None,
    tol: float = 1e-4,
    max_iter: int = 200,
    method: str = "eig",
) -> StationaryResult:
    """Fixed point of the per-state-normalized step.

    method="eig" runs the outer eigenvalue-analysis loop; method="iterate"
    simply applies the step repeatedly (slower near degeneracies but useful
    as a cross-check). Non-convergence is reported, not raised.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    rho = DensityMatrix.maximally_mixed(wp.dim) if rho0 is None else rho0
    rotation = np.inf
    drift = np.inf
    eigenvalue = complex("nan")
    prev_eigenvalue = None
    iterations = 0
    for iterations in range(1, max_iter + 1):
        if method == "eig":
            op = per_state_operator(wp, rho)
            eigenvalue, vec = _nearest_unit_eigenpair(op.action_matrix())
            rho_new = _as_state(vec.reshape(wp.dim, wp.dim))
            drift = np.inf if prev_eigenvalue is None else abs(eigenvalue - prev_eigenvalue)
            prev_eigenvalue = eigenvalue
        elif method == "iterate":
            rho_new = step_per_state(wp, rho)
            pops_old = np.sort(rho.eig()[0])
            pops_new = np.sort(rho_new.eig()[0])
            drift = float(np.max(np.abs(pops_new - pops_old)))
        else:
            raise ValueError(f"unknown method {method!r}, expected 'eig' or 'iterate'")
        rotation = _alignment_residual(rho_new, rho)
        rho = rho_new
        if rotation < tol and drift < tol:
            return StationaryResult(rho, iterations, True, rotation, drift, eigenvalue)
    return StationaryResult(rho, iterations, False, rotation, drift, eigenvalue)


@dataclass(frozen=True)
class ScanRow:
    lam: float
    diffusion: float
    log_p1_p0: float
    log_p2_p0: float
    offdiag_mag: float
    iterations: int
    converged: bool
    rotation: float
    populations: np.ndarray


def _energy_basis(hamiltonian: np.ndarray) -> np.ndarray:
    return hermitian_eig(np.asarray(hamiltonian, dtype=complex), name="hamiltonian").eigenvectors


def temperature_scan(
    model: NoiseModel,
    lams: np.ndarray,
    tol: float = 1e-4,
    max_iter: int = 200,
) -> list[ScanRow]:
    """One stationary solve per bias value, reporting energy-basis populations.

    The noise tensor is built once; consecutive solves are warm-started from
    the previous stationary state. A warm start that fails to settle is retried
    cold (from the maximally mixed state): at strong bias the carried-over
    state is nearly pure and its small-weight eigenvectors rotate freely,
    which stalls the rotation test. offdiag_mag is the summed magnitude of the
    off-diagonal elements in the energy basis. Non-convergence is recorded in
    the row and the scan continues.
    """
    g0 = build_noise_propagator(model)
    v = _energy_basis(model.hamiltonian)
    diffusion = model.sigma**2 / (2.0 * model.dt)
    rows = []
    rho_prev = None
    for lam in np.asarray(lams, dtype=float):
        wp = energy_weight(g0, model.hamiltonian, lam)
        result = find_stationary(wp, rho0=rho_prev, tol=tol, max_iter=max_iter)
        if not result.converged and rho_prev is not None:
            result = find_stationary(wp, rho0=None, tol=tol, max_iter=max_iter)
        rho_prev = result.state
        rho_e = v.conj().T @ result.state.matrix @ v
        pops = np.real(np.diag(rho_e))
        offdiag = float(np.sum(np.abs(rho_e)) - np.sum(np.abs(np.diag(rho_e))))
        with np.errstate(divide="ignore", invalid="ignore"):
            r1 = float(np.log(pops[1] / pops[0])) if pops.size > 1 else np.nan
            r2 = float(np.log(pops[2] / pops[0])) if pops.size > 2 else np.nan
        rows.append(
            ScanRow(
                lam=float(lam),
                diffusion=diffusion,
                log_p1_p0=r1,
                log_p2_p0=r2,
                offdiag_mag=offdiag,
                iterations=result.iterations,
                converged=result.converged,
                rotation=result.rotation,
                populations=pops,
            )
        )
    return rows


@dataclass(frozen=True)
class BalanceReport:
    energies: np.ndarray
    partition_values: np.ndarray   # W_m = <m|Z|m> in the energy basis
    partition_spread: float        # (max W - min W) / mean W
    residuals: np.ndarray          # relative pairwise asymmetry, zero diagonal
    max_residual: float


def detailed_balance_report(wp: WeightedPropagator) -> BalanceReport:
    """Pairwise balance diagnostics of the weighted hop rates.

    In the energy basis the candidate equilibrium weights exp(-2 lam E_n)/W_n
    satisfy balance iff t[m,n] = exp(-2 lam E_n) hop[m,n]
    exp(-lam(E_m - E_n))/W_n is symmetric, where hop[m,n] is the unweighted
    tensor element connecting populations n -> m. Residuals are reported
    relative to the symmetric part of each pair.
    """
    hspec = hermitian_eig(wp.hamiltonian, name="hamiltonian")
    v = hspec.eigenvectors
    energies = hspec.eigenvalues - hspec.eigenvalues.min()
    g0_e = superop.sandwich(wp.noise_op, left=(v.conj().T, v), right=(v, v.conj().T))
    hop = np.real(np.einsum("mnnm->mn", g0_e.tensor))
    w_m = np.array(
        [float(np.exp(-wp.lam * (energies - energies[m])) @ hop[:, m]) for m in range(energies.size)]
    )
    de = energies[:, None] - energies[None, :]
    t = np.exp(-2.0 * wp.lam * energies[None, :]) * hop * np.exp(-wp.lam * de) / w_m[None, :]
    sym = 0.5 * (t + t.T)
    asym = t - t.T
    safe = np.where(np.abs(sym) > 0, np.abs(sym), 1.0)
    residuals = np.abs(asym) / safe
    np.fill_diagonal(residuals, 0.0)
    spread = float((w_m.max() - w_m.min()) / w_m.mean())
    return BalanceReport(
        energies=energies,
        partition_values=w_m,
        partition_spread=spread,
        residuals=residuals,
        max_residual=float(residuals.max()),
    )


def reference_equilibrium(
    n_levels: int, hbar_omega: float, coupling: float, beta: float
) -> DensityMatrix:
    """System marginal of the thermal state of the coupled system-cavity pair."""
    joint = coupled_hamiltonian(n_levels, hbar_omega, coupling)
    thermal = DensityMatrix.thermal(joint, beta)
    return DensityMatrix(hermitize(partial_trace_second(thermal.matrix, n_levels)))
