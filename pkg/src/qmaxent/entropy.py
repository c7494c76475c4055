"""Entropy accounting for one weighted step.

The forward joint tensor packs the correlated pair (state before, state
after) of a per-state-normalized step into a single superoperator whose
Hermitian matrix view is a unit-trace positive semidefinite operator on the
doubled space: its inner trace recovers the propagated state and its outer
trace the transpose of the input. The reverse joint does the same for the
time-reversed step (the same noise tensor weighted by -lam) started from the
propagated state. The total entropy produced by the step is the quantum
relative entropy between the two views, which is nonnegative by the Klein
inequality; subtracting the change in von Neumann entropy of the state leaves
the part exported to the surroundings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import superop
from .propagator import (
    STATE_WEIGHT_FLOOR,
    WeightedPropagator,
    reverse_propagator,
    step_per_state,
)
from .qm import DensityMatrix, ENTROPY_FLOOR, hermitian_eig, hermitize, von_neumann_entropy
from .superop import SuperOperator

SUPPORT_FLOOR = 1e-12
CLAMP_WARN_MASS = 1e-8


def forward_joint(wp: WeightedPropagator, rho: DensityMatrix) -> SuperOperator:
    """Joint (before, after) tensor of the per-state step applied to rho.

    sum_k (p_k/z_k) (I(.)P_k) G (P_k(.)I). Inner trace gives the step output,
    outer trace gives rho^T.
    """
    out = np.zeros_like(wp.weighted_op.tensor)
    p, vecs = rho.eig()
    for k in range(p.size):
        if p[k] <= STATE_WEIGHT_FLOOR:
            continue
        psi = vecs[:, k]
        gk = superop.apply(wp.weighted_op, np.outer(psi, psi.conj()))
        out += (p[k] / wp.state_partition(psi)) * np.einsum("xw,y,z->xyzw", gk, psi.conj(), psi)
    return SuperOperator(out)


def reverse_joint(wp: WeightedPropagator, rho_next: DensityMatrix) -> SuperOperator:
    """Joint tensor of the reversed step started from the propagated state.

    sum_k (p'_k/n_k) (P'_k(.)I) G' (I(.)P'_k) with G' the -lam weighting and
    n_k = <psi'_k| inner_trace(G') |psi'_k> the reverse partition values.
    """
    rev = reverse_propagator(wp)
    p, vecs = rho_next.eig()
    out = np.zeros_like(rev.tensor)
    for k in range(p.size):
        if p[k] <= STATE_WEIGHT_FLOOR:
            continue
        psi = vecs[:, k]
        mk = np.einsum("a,ayzd,d->yz", psi.conj(), rev.tensor, psi)
        nk = float(np.real(np.trace(mk)))
        out += (p[k] / nk) * np.einsum("x,yz,w->xyzw", psi, mk, psi.conj())
    return SuperOperator(out)


def relative_entropy(
    p_view: np.ndarray, q_view: np.ndarray, floor: float = SUPPORT_FLOOR
) -> tuple[float, float]:
    """tr(P log P) - tr(P log Q) with Q's spectrum floored for log safety.

    Returns (value, clamped_mass) where clamped_mass is the P-probability
    sitting on Q-eigenvectors whose eigenvalue fell below the floor; a large
    value means the reverse step cannot reach part of the forward support and
    the relative entropy is effectively a lower bound.
    """
    pspec = hermitian_eig(hermitize(p_view), name="forward view")
    pw = np.clip(pspec.eigenvalues, 0.0, None)
    tr_plogp = float(np.sum(pw[pw > ENTROPY_FLOOR] * np.log(pw[pw > ENTROPY_FLOOR])))
    qspec = hermitian_eig(hermitize(q_view), name="reverse view")
    qw, qv = qspec.eigenvalues, qspec.eigenvectors
    mass = np.real(np.einsum("ik,ij,jk->k", qv.conj(), hermitize(p_view), qv))
    mass = np.clip(mass, 0.0, None)
    tr_plogq = float(mass @ np.log(np.clip(qw, floor, None)))
    clamped = float(mass[qw < floor].sum())
    return tr_plogp - tr_plogq, clamped


def total_entropy(forward: SuperOperator, reverse: SuperOperator) -> float:
    """Relative entropy between the forward and reverse joint matrix views."""
    value, _ = relative_entropy(forward.matrix_view(), reverse.matrix_view())
    return value


@dataclass(frozen=True)
class StepLedger:
    """Balance sheet for one per-state-normalized step."""

    mean_energy_change: float   # tr(H rho') - tr(H rho)
    info_entropy_change: float  # S(rho') - S(rho), von Neumann
    total_entropy: float        # relative entropy of forward vs reverse joint views
    heat: float                 # total_entropy - info_entropy_change
    clamped_mass: float         # forward mass outside the floored reverse support

    @property
    def support_clamped(self) -> bool:
        return self.clamped_mass > CLAMP_WARN_MASS


def step_ledger(
    wp: WeightedPropagator, rho: DensityMatrix, rho_next: DensityMatrix | None = None
) -> StepLedger:
    """Entropy and energy balance of one step from rho.

    rho_next defaults to the per-state step output; pass it explicitly to
    avoid recomputing when the trajectory is already being propagated.
    """
    if rho_next is None:
        rho_next = step_per_state(wp, rho)
    fwd = forward_joint(wp, rho)
    rev = reverse_joint(wp, rho_next)
    total, clamped = relative_entropy(fwd.matrix_view(), rev.matrix_view())
    ds_state = von_neumann_entropy(rho_next) - von_neumann_entropy(rho)
    dh = float(np.real(np.trace(wp.hamiltonian @ rho_next.matrix)) - np.real(np.trace(wp.hamiltonian @ rho.matrix)))
    return StepLedger(
        mean_energy_change=dh,
        info_entropy_change=ds_state,
        total_entropy=total,
        heat=total - ds_state,
        clamped_mass=clamped,
    )
