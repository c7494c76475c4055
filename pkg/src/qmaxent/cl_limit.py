"""Small-step, high-temperature limit of the weighted step.

The linear-normalized step with Gaussian position kicks of per-step variance
sigma^2 dt and energy bias lam reproduces, to first order in dt, a master
equation with unitary motion, momentum damping at gamma = lam sigma^2 / 2m,
and position decoherence at 2 m gamma / beta hbar^2 with beta = lam. The
check builds the finite-difference generator (step(rho) - rho)/dt on a fixed
battery of states over a descending dt grid and reports the discrepancy and
its empirical convergence order. The top two basis rows and columns are
excluded from the norms: the position operators are truncated there and the
comparison is meaningful only in the interior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.stats import linregress

from .propagator import NoiseModel, build_noise_propagator, energy_weight, step_linear_norm
from .qm import (
    DensityMatrix,
    harmonic_hamiltonian,
    hermitize,
    lowering_operator,
    momentum_operator,
    position_operator,
)

EDGE_ROWS = 2


def master_terms(
    rho: np.ndarray,
    hamiltonian: np.ndarray,
    position: np.ndarray,
    momentum: np.ndarray,
    gamma: float,
    beta: float,
    mass: float = 1.0,
    hbar: float = 1.0,
) -> dict[str, np.ndarray]:
    """The three right-hand-side terms, separately."""
    unitary = (-1j / hbar) * (hamiltonian @ rho - rho @ hamiltonian)
    anti = momentum @ rho + rho @ momentum
    dissipation = (1j * gamma / hbar) * (anti @ position - position @ anti)
    x2 = position @ position
    decoherence = (2.0 * mass * gamma / (beta * hbar**2)) * (
        position @ rho @ position - 0.5 * (x2 @ rho + rho @ x2)
    )
    return {"unitary": unitary, "dissipation": dissipation, "decoherence": decoherence}


def master_rhs(
    rho: np.ndarray,
    hamiltonian: np.ndarray,
    position: np.ndarray,
    momentum: np.ndarray,
    gamma: float,
    beta: float,
    mass: float = 1.0,
    hbar: float = 1.0,
) -> np.ndarray:
    """d rho/dt of the high-temperature position-coupled master equation."""
    terms = master_terms(rho, hamiltonian, position, momentum, gamma, beta, mass, hbar)
    return terms["unitary"] + terms["dissipation"] + terms["decoherence"]


def interior_mask(n_levels: int, edge_rows: int = EDGE_ROWS) -> np.ndarray:
    mask = np.ones((n_levels, n_levels))
    if edge_rows > 0:
        mask[n_levels - edge_rows:, :] = 0.0
        mask[:, n_levels - edge_rows:] = 0.0
    return mask


def displaced_ground_state(n_levels: int, displacement: float = 1.0) -> DensityMatrix:
    """Coherent-like pure state exp(d (adag - a)) |0>."""
    a = lowering_operator(n_levels)
    shift = expm(displacement * (a.conj().T - a))
    amp = shift[:, 0]
    amp = amp / np.linalg.norm(amp)
    return DensityMatrix(np.outer(amp, amp.conj()))


def default_battery(n_levels: int, hbar_omega: float, seed: int = 1618) -> list[DensityMatrix]:
    """Fixed comparison states: thermal, displaced ground, seeded random PSD."""
    h = harmonic_hamiltonian(n_levels, hbar_omega)
    thermal = DensityMatrix.thermal(h, 0.1 / hbar_omega)
    displaced = displaced_ground_state(n_levels)
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((n_levels, n_levels)) + 1j * rng.standard_normal((n_levels, n_levels))
    psd = raw @ raw.conj().T
    random_state = DensityMatrix(hermitize(psd) / np.real(np.trace(psd)))
    return [thermal, displaced, random_state]


@dataclass(frozen=True)
class LimitRow:
    dt: float
    lam: float
    sigma: float              # per-step kick std, sigma * sqrt(dt)
    max_discrepancy: float
    order_estimate: float     # vs the previous (larger) dt; nan on the first row


@dataclass(frozen=True)
class LimitReport:
    rows: list[LimitRow]
    overall_order: float      # log-log slope across the grid
    monotonic: bool
    term_norms: dict[str, float]  # interior max-norms at the smallest dt


def limit_check(
    n_levels: int,
    hbar_omega: float,
    mass: float,
    lam: float,
    sigma: float,
    dt_grid: np.ndarray,
    hbar: float = 1.0,
    quadrature_order: int = 20,
    states: list[DensityMatrix] | None = None,
) -> LimitReport:
    """Finite-difference generator vs the master equation over a dt grid.

    sigma is the per-unit-time kick scale (per-step variance sigma^2 dt);
    gamma = lam sigma^2 / 2m and beta = lam close the identification.
    """
    dt_grid = np.asarray(dt_grid, dtype=float)
    if np.any(np.diff(dt_grid) >= 0):
        raise ValueError("dt grid must be strictly descending")
    omega = hbar_omega / hbar
    h = harmonic_hamiltonian(n_levels, hbar_omega)
    x = position_operator(n_levels, mass, omega, hbar)
    p = momentum_operator(n_levels, mass, omega, hbar)
    gamma = lam * sigma**2 / (2.0 * mass)
    beta = lam
    battery = default_battery(n_levels, hbar_omega) if states is None else states
    mask = interior_mask(n_levels)
    rows: list[LimitRow] = []
    prev: tuple[float, float] | None = None
    for dt in dt_grid:
        model = NoiseModel(
            hamiltonian=h,
            kick_operator=x,
            sigma=sigma * np.sqrt(dt),
            dt=float(dt),
            quadrature_order=quadrature_order,
            hbar=hbar,
        )
        wp = energy_weight(build_noise_propagator(model), h, lam)
        disc = 0.0
        for rho in battery:
            rate = (step_linear_norm(wp, rho).matrix - rho.matrix) / dt
            target = master_rhs(rho.matrix, h, x, p, gamma, beta, mass, hbar)
            disc = max(disc, float(np.max(np.abs(mask * (rate - target)))))
        order = np.nan if prev is None else float(
            np.log(prev[1] / disc) / np.log(prev[0] / dt)
        )
        rows.append(LimitRow(float(dt), lam, float(sigma * np.sqrt(dt)), disc, order))
        prev = (float(dt), disc)
    discs = np.array([r.max_discrepancy for r in rows])
    fit = linregress(np.log(dt_grid), np.log(discs))
    terms = master_terms(battery[0].matrix, h, x, p, gamma, beta, mass, hbar)
    term_norms = {k: float(np.max(np.abs(mask * v))) for k, v in terms.items()}
    return LimitReport(
        rows=rows,
        overall_order=float(fit.slope),
        monotonic=bool(np.all(np.diff(discs) < 0)),
        term_norms=term_norms,
    )
