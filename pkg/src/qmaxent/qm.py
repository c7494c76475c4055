"""Core quantum-mechanics helpers: state types, Hermitian spectra, operator builders.

Everything downstream (superoperators, propagators, entropy ledgers) funnels
through the validated types and the eigendecomposition-based matrix functions
defined here. Conventions: hbar = 1 and mass = omega = 1 by default, energies
in units of hbar*omega, entropies in nats.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Validation tolerances, shared across modules.
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = -1e-10
ENTROPY_FLOOR = 1e-14


def require_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL, name: str = "matrix") -> np.ndarray:
    """Return `a` unchanged if Hermitian within `tol`, else raise with the max asymmetry."""
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    asym = np.abs(a - a.conj().T).max()
    if asym > tol:
        raise ValueError(f"{name} is not Hermitian: max|A - A^dag| = {asym:.3e} > {tol:.1e}")
    return a


def hermitize(a: np.ndarray) -> np.ndarray:
    """Symmetrize away floating-point asymmetry: (A + A^dag)/2."""
    return 0.5 * (a + a.conj().T)


@dataclass(frozen=True)
class Spectrum:
    """Eigendecomposition of a Hermitian matrix.

    eigenvalues are real and ascending; eigenvectors[:, k] belongs to
    eigenvalues[k]. reconstruct() returns V diag(w) V^dag.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        w, v = np.asarray(self.eigenvalues), np.asarray(self.eigenvectors)
        if w.ndim != 1 or v.shape != (w.size, w.size):
            raise ValueError(f"inconsistent spectrum shapes {w.shape}, {v.shape}")
        if np.any(np.diff(w) < -1e-12 * max(1.0, np.abs(w).max())):
            raise ValueError("eigenvalues must be ascending")

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.conj().T

    def apply(self, f) -> np.ndarray:
        """V f(w) V^dag for a scalar function f applied to the eigenvalues."""
        return (self.eigenvectors * f(self.eigenvalues)) @ self.eigenvectors.conj().T


def hermitian_eig(a: np.ndarray, tol: float = HERMITIAN_TOL, name: str = "matrix") -> Spectrum:
    """Eigendecomposition restricted to Hermitian input (rejects anything else)."""
    a = require_hermitian(a, tol=tol, name=name)
    w, v = np.linalg.eigh(hermitize(a))
    return Spectrum(eigenvalues=w, eigenvectors=v)


def matrix_function(a: np.ndarray, f, floor: float | None = None, name: str = "matrix") -> np.ndarray:
    """Apply a scalar function to a Hermitian matrix through its spectrum.

    Args:
        a: Hermitian matrix.
        f: vectorized scalar function of the (real) eigenvalues; may return
           complex values (e.g. exp(-i t w)).
        floor: if given, every eigenvalue must exceed it; used for singular
           functions such as log or inverse powers.

    Returns:
        V f(w) V^dag as a dense complex matrix.
    """
    spec = hermitian_eig(a, name=name)
    if floor is not None:
        wmin = spec.eigenvalues.min()
        if wmin <= floor:
            raise ValueError(
                f"{name} has eigenvalue {wmin:.6e} at or below the floor {floor:.1e}; "
                "the requested matrix function is singular there"
            )
    return spec.apply(f)


@dataclass(frozen=True)
class Wavefunction:
    """Normalized pure state amplitudes in a fixed orthonormal basis."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex).ravel()
        object.__setattr__(self, "amplitudes", amp)
        nrm = np.linalg.norm(amp)
        if abs(nrm - 1.0) > 1e-12:
            raise ValueError(f"wavefunction norm {nrm!r} differs from 1 beyond 1e-12")

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite density matrix.

    Invariants are checked at construction: max|rho - rho^dag| <= 1e-12,
    |tr(rho) - 1| <= 1e-12, eigenvalues >= -1e-10.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        require_hermitian(m, name="density matrix")
        object.__setattr__(self, "matrix", m)
        tr = m.trace().real
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"density matrix trace {tr!r} differs from 1 beyond {TRACE_TOL:.0e}")
        wmin = np.linalg.eigvalsh(hermitize(m)).min()
        if wmin < PSD_TOL:
            raise ValueError(f"density matrix has eigenvalue {wmin:.3e} below {PSD_TOL:.0e}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues (ascending) and eigenvector columns of the state."""
        return np.linalg.eigh(hermitize(self.matrix))

    @staticmethod
    def pure(psi) -> "DensityMatrix":
        psi = psi.amplitudes if isinstance(psi, Wavefunction) else np.asarray(psi, dtype=complex).ravel()
        psi = psi / np.linalg.norm(psi)
        return DensityMatrix(np.outer(psi, psi.conj()))

    @staticmethod
    def maximally_mixed(dim: int) -> "DensityMatrix":
        return DensityMatrix(np.eye(dim, dtype=complex) / dim)

    @staticmethod
    def thermal(hamiltonian: np.ndarray, beta: float) -> "DensityMatrix":
        """exp(-beta H) / tr, stabilized by shifting out the ground energy."""
        spec = hermitian_eig(hamiltonian, name="hamiltonian")
        w = np.exp(-beta * (spec.eigenvalues - spec.eigenvalues.min()))
        rho = (spec.eigenvectors * (w / w.sum())) @ spec.eigenvectors.conj().T
        return DensityMatrix(hermitize(rho))


def as_density(matrix: np.ndarray) -> DensityMatrix:
    """Wrap a numerically computed state: symmetrize and renormalize the trace.

    Intended for propagator outputs whose invariants hold up to float error;
    anything violating positivity beyond the standard tolerance still raises.
    """
    m = hermitize(np.asarray(matrix, dtype=complex))
    return DensityMatrix(m / m.trace().real)


def von_neumann_entropy(rho) -> float:
    """-tr(rho log rho) in nats, with eigenvalues below 1e-14 dropped."""
    m = rho.matrix if isinstance(rho, DensityMatrix) else require_hermitian(np.asarray(rho), name="state")
    w = np.linalg.eigvalsh(hermitize(m))
    w = w[w > ENTROPY_FLOOR]
    return float(-(w * np.log(w)).sum())


def sample_pure_state(rho: DensityMatrix, rng: np.random.Generator) -> tuple[Wavefunction, float]:
    """Draw one eigenstate of `rho` with probability equal to its eigenvalue.

    Tiny negative eigenvalues are clamped to zero and the rest renormalized
    before sampling. Returns the drawn eigenvector and its (renormalized)
    probability.
    """
    w, v = rho.eig()
    p = np.clip(w, 0.0, None)
    total = p.sum()
    if total <= 0.0:
        raise ValueError("cannot sample a pure state: no positive eigenvalue mass")
    p = p / total
    k = int(rng.choice(p.size, p=p))
    return Wavefunction(v[:, k]), float(p[k])


# ---------------------------------------------------------------------------
# Oscillator operator builders (truncated Fock basis).


def fock_state(n_levels: int, level: int) -> np.ndarray:
    """Unit amplitude on one basis level, zeros elsewhere."""
    if not 0 <= level < n_levels:
        raise ValueError(f"level {level} outside [0, {n_levels})")
    psi = np.zeros(n_levels, dtype=complex)
    psi[level] = 1.0
    return psi


def lowering_operator(n_levels: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n_levels)), 1).astype(complex)


def harmonic_hamiltonian(n_levels: int, hbar_omega: float = 1.0) -> np.ndarray:
    """Diagonal oscillator Hamiltonian with levels hbar*omega*(n + 1/2)."""
    return np.diag(hbar_omega * (np.arange(n_levels) + 0.5)).astype(complex)


def position_operator(n_levels: int, mass: float = 1.0, omega: float = 1.0, hbar: float = 1.0) -> np.ndarray:
    """x = sqrt(hbar/2 m omega) (a + a^dag), so x[n, n+1] = sqrt((n+1) hbar / 2 m omega)."""
    a = lowering_operator(n_levels)
    return np.sqrt(hbar / (2.0 * mass * omega)) * (a + a.conj().T)


def momentum_operator(n_levels: int, mass: float = 1.0, omega: float = 1.0, hbar: float = 1.0) -> np.ndarray:
    """p = i sqrt(m hbar omega / 2) (a^dag - a)."""
    a = lowering_operator(n_levels)
    return 1j * np.sqrt(mass * hbar * omega / 2.0) * (a.conj().T - a)


def coupled_hamiltonian(
    n_levels: int,
    hbar_omega: float = 1.0,
    coupling: float = 0.0,
    mass: float = 1.0,
    hbar: float = 1.0,
) -> np.ndarray:
    """Two identical oscillators with a bilinear position-position coupling.

    H = hbar*omega (a^dag a + b^dag b + 1) + c x_a x_b on the product basis
    ordered row-major with the first (system) index major: index = n*N + m.
    """
    omega = hbar_omega / hbar
    eye = np.eye(n_levels, dtype=complex)
    h1 = harmonic_hamiltonian(n_levels, hbar_omega)
    x1 = position_operator(n_levels, mass=mass, omega=omega, hbar=hbar)
    return np.kron(h1, eye) + np.kron(eye, h1) + coupling * np.kron(x1, x1)


def partial_trace_second(matrix: np.ndarray, n_levels: int) -> np.ndarray:
    """Trace out the second (minor-index) factor of an (N*N) x (N*N) matrix."""
    m = np.asarray(matrix)
    d = n_levels
    if m.shape != (d * d, d * d):
        raise ValueError(f"expected shape {(d * d, d * d)}, got {m.shape}")
    return m.reshape(d, d, d, d).trace(axis1=1, axis2=3)


def thermal_populations(energies: np.ndarray, beta: float) -> np.ndarray:
    """Boltzmann weights over a finite level list, normalized to sum to 1."""
    w = np.exp(-beta * (np.asarray(energies, dtype=float) - np.min(energies)))
    return w / w.sum()
