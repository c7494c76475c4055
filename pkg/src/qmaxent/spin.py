"""Two-level closed forms: exact SU(2) kicks, the phase-averaged step, the
biased spin transition tensor, and collapse time-courses.

The random field enters as a pure kick U = exp(i r.sigma). With the azimuthal
angle of r uniform and r_z = alpha |R| fixed, the phase average has a closed
form (``averaged_step``); extracting its matrix elements and biasing the
population flips by exp(+-beta E) gives the 2x2x2x2 transition tensor. The
tensor route and the generic energy weighting of the unbiased tensor agree
exactly, which pins the energy axis convention: basis index 0 is the low
energy state, H = diag(-E/2, +E/2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import superop
from .entropy import StepLedger, step_ledger
from .propagator import energy_weight, step_per_state
from .qm import DensityMatrix
from .superop import SuperOperator

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
PAULI = np.stack([SIGMA_X, SIGMA_Y, SIGMA_Z])

BLOCH_TOL = 1e-12


def spin_hamiltonian(energy: float) -> np.ndarray:
    """H = diag(-E/2, +E/2); index 0 is the low energy state."""
    return np.diag([-energy / 2.0, +energy / 2.0]).astype(complex)


def x_superposition_state() -> DensityMatrix:
    return DensityMatrix(np.full((2, 2), 0.5, dtype=complex))


def isotropic_state() -> DensityMatrix:
    return DensityMatrix.maximally_mixed(2)


@dataclass(frozen=True)
class BlochState:
    """rho = a I + c . sigma with unit trace (a = 1/2) and |c| <= 1/2."""

    a: float
    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.shape != (3,):
            raise ValueError(f"c must be a 3-vector, got shape {c.shape}")
        if abs(self.a - 0.5) > BLOCH_TOL:
            raise ValueError(f"identity coefficient must be 1/2, got {self.a}")
        if np.linalg.norm(c) > 0.5 + BLOCH_TOL:
            raise ValueError(f"|c| = {np.linalg.norm(c)} exceeds 1/2")
        object.__setattr__(self, "c", c)

    def to_matrix(self) -> np.ndarray:
        return self.a * np.eye(2, dtype=complex) + np.einsum("i,iab->ab", self.c, PAULI)

    @staticmethod
    def from_matrix(rho: np.ndarray) -> "BlochState":
        rho = np.asarray(rho, dtype=complex)
        a = float(np.real(np.trace(rho))) / 2.0
        c = np.array([float(np.real(np.trace(p @ rho))) / 2.0 for p in PAULI])
        return BlochState(a=a, c=c)


@dataclass(frozen=True)
class FieldNoise:
    """Kick-field statistics: fixed (alpha, |R|) with uniform phase, or 3D Gaussian."""

    mode: str
    alpha: float = 0.0
    r_mag: float = 0.0
    diffusion: float = 0.0
    dt: float = 1.0

    def __post_init__(self):
        if self.mode not in ("fixed", "gaussian"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if abs(self.alpha) > 1.0:
            raise ValueError(f"|alpha| must be <= 1, got {self.alpha}")
        if self.r_mag < 0 or self.diffusion < 0 or self.dt <= 0:
            raise ValueError("r_mag and diffusion must be >= 0, dt > 0")

    @staticmethod
    def fixed(alpha: float, r_mag: float) -> "FieldNoise":
        return FieldNoise(mode="fixed", alpha=alpha, r_mag=r_mag)

    @staticmethod
    def gaussian(diffusion: float, dt: float = 1.0) -> "FieldNoise":
        return FieldNoise(mode="gaussian", diffusion=diffusion, dt=dt)


def su2_exp(r: np.ndarray) -> np.ndarray:
    """exp(i r.sigma) = cos|R| I + i sin|R|/|R| (r.sigma)."""
    r = np.asarray(r, dtype=float)
    mag = float(np.linalg.norm(r))
    if mag == 0.0:
        return np.eye(2, dtype=complex)
    return np.cos(mag) * np.eye(2, dtype=complex) + 1j * (np.sin(mag) / mag) * np.einsum(
        "i,iab->ab", r, PAULI
    )


def averaged_step(state: BlochState, noise: FieldNoise) -> np.ndarray:
    """Phase-averaged kick, term by term; unnormalized output.

    At alpha = 1 the kick is a pure z rotation and the map reduces to exact
    precession (diagonal untouched, coherences rotated by 2|R|).
    """
    if noise.mode != "fixed":
        raise ValueError("averaged_step requires fixed-(alpha, |R|) noise")
    alpha, rmag = noise.alpha, noise.r_mag
    cx, cy, cz = state.c
    rho = state.to_matrix()
    antisym = np.array([[0.0, cy + 1j * cx], [cy - 1j * cx, 0.0]])
    sym = np.array(
        [
            [2.0 * (alpha**2 - 1.0) * cz, -(alpha**2 + 1.0) * (cx - 1j * cy)],
            [-(alpha**2 + 1.0) * (cx + 1j * cy), -2.0 * (alpha**2 - 1.0) * cz],
        ]
    )
    return rho + alpha * np.sin(2.0 * rmag) * antisym + np.sin(rmag) ** 2 * sym


def flip_coefficients(noise: FieldNoise) -> tuple[float, complex]:
    """(a, b): population-flip weight and coherence-decay coefficient."""
    if noise.mode != "fixed":
        raise ValueError("flip_coefficients requires fixed-(alpha, |R|) noise")
    s2 = np.sin(noise.r_mag) ** 2
    a = (1.0 - noise.alpha**2) * s2
    b = (1.0 + noise.alpha**2) * s2 - 1j * noise.alpha * np.sin(2.0 * noise.r_mag)
    return float(a), complex(b)


def spin_transition_tensor(noise: FieldNoise, beta_e: float) -> SuperOperator:
    """Biased two-level tensor; beta_e multiplies flips by exp(-+ beta E).

    Entry layout (axes i', i, j, j'): flips between the two populations carry
    exp(+beta E) downhill and exp(-beta E) uphill; coherence channels carry
    1 - b and its conjugate; at beta_e = 0 this is exactly the phase-averaged
    step of ``averaged_step``.
    """
    a, b = flip_coefficients(noise)
    t = np.zeros((2, 2, 2, 2), dtype=complex)
    t[0, 0, 0, 0] = 1.0 - a
    t[0, 1, 1, 0] = a * np.exp(+beta_e)
    t[0, 0, 1, 1] = 1.0 - b
    t[1, 1, 0, 0] = 1.0 - np.conj(b)
    t[1, 0, 0, 1] = a * np.exp(-beta_e)
    t[1, 1, 1, 1] = 1.0 - a
    return SuperOperator(t)


def mean_energy_change(a: float, beta_e: float, energy: float) -> float:
    """<dH> for the 50/50 population state: -2aE sinh(beta E)/(1-a+a cosh(beta E))."""
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"a must be in [0, 1], got {a}")
    return float(-2.0 * a * energy * np.sinh(beta_e) / (1.0 - a + a * np.cosh(beta_e)))


def gaussian_field_propagator(noise: FieldNoise, order: int = 20) -> SuperOperator:
    """Unbiased tensor for the isotropic 3D Gaussian kick field.

    Per-axis variance sigma^2 = 2 D dt, integrated with a tensor-product
    Gauss-Hermite rule (order**3 kicks).
    """
    if noise.mode != "gaussian":
        raise ValueError("gaussian_field_propagator requires gaussian noise")
    sigma = np.sqrt(2.0 * noise.diffusion * noise.dt)
    if sigma == 0.0:
        return superop.identity_superop(2)
    u, w = np.polynomial.hermite.hermgauss(order)
    nodes = np.sqrt(2.0) * sigma * u
    w = w / w.sum()
    weights = np.einsum("a,b,c->abc", w, w, w).reshape(-1)
    grid = np.stack(np.meshgrid(nodes, nodes, nodes, indexing="ij"), axis=-1).reshape(-1, 3)
    mags = np.linalg.norm(grid, axis=1)
    units = grid / np.where(mags > 0, mags, 1.0)[:, None]  # sin(0) kills the mag=0 row anyway
    rdots = np.einsum("ki,iab->kab", units, PAULI)
    us = (
        np.cos(mags)[:, None, None] * np.eye(2, dtype=complex)[None]
        + 1j * np.sin(mags)[:, None, None] * rdots
    )
    return SuperOperator(superop.kraus_tensor(weights, us))


def collapse_timecourse(
    start: DensityMatrix,
    beta: float,
    diffusion: float,
    dt: float = 1.0,
    n_steps: int = 200,
    energy: float = 1.0,
    lam: float | None = None,
    order: int = 20,
) -> list[StepLedger]:
    """Per-step entropy ledgers of the per-state dynamics from a start state.

    The bias defaults to lam = beta; pass lam = beta/2 for the half-bias
    convention. Deterministic: the density matrix flows through the per-state
    step without sampling.
    """
    g0 = gaussian_field_propagator(FieldNoise.gaussian(diffusion, dt), order=order)
    wp = energy_weight(g0, spin_hamiltonian(energy), beta if lam is None else lam)
    rho = start
    ledgers = []
    for _ in range(n_steps):
        rho_next = step_per_state(wp, rho)
        ledgers.append(step_ledger(wp, rho, rho_next))
        rho = rho_next
    return ledgers
