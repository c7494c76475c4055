"""Superoperators on density matrices as dense rank-4 tensors.

Index convention
----------------
A superoperator G acts as rho'[i', j'] = sum_{i,j} G[i', i, j, j'] rho[i, j],
i.e. the tensor axes are ordered (final-left, initial-left, initial-right,
final-right). An operator pair A(.)B, meaning rho -> A rho B, has the tensor
T[i', i, j, j'] = A[i', i] B[j, j'].

Physical (completely positive, super-Hermitian) tensors satisfy
G[i', i, j, j'] = conj(G[j', j, i, i']); grouping the index pairs (i'i) and
(j'j) then gives a Hermitian dim^2 x dim^2 matrix view whose eigendecomposition
is the canonical operator-sum form G = sum_k gamma_k C_k (.) C_k^dag with
orthonormal C_k.

Trace conventions: `outer_trace` contracts the final (primed) indices and
`inner_trace` the initial ones. The orientation is pinned by the identity
trace(apply(G, rho)) == trace(Z rho) with Z = outer_trace(G).T, which holds
exactly for every tensor in this module.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .qm import DensityMatrix, hermitize

SUPER_HERMITIAN_TOL = 1e-10


def is_super_hermitian(tensor: np.ndarray, tol: float = SUPER_HERMITIAN_TOL) -> bool:
    # scale-relative: biased propagators legitimately carry entries >> 1
    scale = max(1.0, float(np.abs(tensor).max()))
    return bool(np.abs(tensor - tensor.conj().transpose(3, 2, 1, 0)).max() <= tol * scale)


@dataclass(frozen=True)
class SuperOperator:
    """Dense rank-4 transition tensor with axes (i', i, j, j')."""

    tensor: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.tensor, dtype=complex)
        if t.ndim != 4 or len(set(t.shape)) != 1:
            raise ValueError(f"superoperator tensor must be (d,d,d,d), got {t.shape}")
        dev = np.abs(t - t.conj().transpose(3, 2, 1, 0)).max()
        scale = max(1.0, float(np.abs(t).max()))
        if dev > SUPER_HERMITIAN_TOL * scale:
            raise ValueError(
                f"tensor violates the pair-swap conjugation symmetry by {dev:.3e} "
                f"(> {SUPER_HERMITIAN_TOL:.0e} relative to scale {scale:.3e})"
            )
        object.__setattr__(self, "tensor", t)

    @property
    def dim(self) -> int:
        return self.tensor.shape[0]

    def matrix_view(self) -> np.ndarray:
        """Hermitian dim^2 x dim^2 view, rows (i'i) and columns (j'j)."""
        d = self.dim
        return self.tensor.transpose(0, 1, 3, 2).reshape(d * d, d * d)

    @staticmethod
    def from_matrix_view(view: np.ndarray) -> "SuperOperator":
        n2 = view.shape[0]
        d = int(round(np.sqrt(n2)))
        if d * d != n2 or view.shape != (n2, n2):
            raise ValueError(f"matrix view must be square with square side, got {view.shape}")
        return SuperOperator(np.asarray(view, dtype=complex).reshape(d, d, d, d).transpose(0, 1, 3, 2))

    def action_matrix(self) -> np.ndarray:
        """dim^2 x dim^2 matrix acting on row-major vec(rho): rows (i'j'), cols (ij)."""
        d = self.dim
        return self.tensor.transpose(0, 3, 1, 2).reshape(d * d, d * d)


def identity_superop(dim: int) -> SuperOperator:
    eye = np.eye(dim, dtype=complex)
    return SuperOperator(np.multiply.outer(eye, eye))


def unitary_superop(u: np.ndarray) -> SuperOperator:
    """U (.) U^dag for a single unitary."""
    u = np.asarray(u, dtype=complex)
    return SuperOperator(np.einsum("ab,dc->abcd", u, u.conj()))


def kraus_tensor(weights: np.ndarray, operators: np.ndarray) -> np.ndarray:
    """Raw tensor sum_k w_k C_k (.) C_k^dag from a stack of operators (k, d, d)."""
    w = np.asarray(weights, dtype=float)
    c = np.asarray(operators, dtype=complex)
    return np.einsum("k,kab,kdc->abcd", w, c, c.conj(), optimize=True)


def apply(g: SuperOperator, rho: np.ndarray | DensityMatrix) -> np.ndarray:
    """Evaluate G[rho] (no normalization, input need not be a state)."""
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    return np.einsum("aijb,ij->ab", g.tensor, m, optimize=True)


def inner_trace(g: SuperOperator) -> np.ndarray:
    """Contract the initial indices (i = j); result indexed by the final pair."""
    return np.einsum("aiib->ab", g.tensor)


def outer_trace(g: SuperOperator) -> np.ndarray:
    """Contract the final indices (i' = j'); result indexed by the initial pair."""
    return np.einsum("aija->ij", g.tensor)


def sandwich(g: SuperOperator, left: tuple, right: tuple) -> SuperOperator:
    """Two-sided operator-pair product (A(.)B) G (C(.)D).

    With G = sum_k gamma_k M_k(.)W_k this is sum_k gamma_k (A M_k C)(.)(B W_k D);
    pair products multiply left parts and right parts separately.
    """
    a, b = (np.asarray(x, dtype=complex) for x in left)
    c, d = (np.asarray(x, dtype=complex) for x in right)
    out = np.einsum("xa,by,zc,dw,abcd->xyzw", a, c, b, d, g.tensor, optimize=True)
    return SuperOperator(out)


def compose(g2: SuperOperator, g1: SuperOperator) -> SuperOperator:
    """Sequential action: apply(compose(g2, g1), rho) == apply(g2, apply(g1, rho))."""
    if g2.dim != g1.dim:
        raise ValueError(f"dimension mismatch: {g2.dim} vs {g1.dim}")
    out = np.einsum("xabw,aijb->xijw", g2.tensor, g1.tensor, optimize=True)
    return SuperOperator(out)


@dataclass(frozen=True)
class KrausSet:
    """Canonical operator-sum form: weights (descending) and orthonormal operators.

    Orthonormality means tr(C_l^dag C_k) = delta_lk. Small negative weights
    within -1e-10 are tolerated so that numerically rough tensors can still be
    decomposed and reassembled.
    """

    weights: np.ndarray
    operators: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        c = np.asarray(self.operators, dtype=complex)
        if c.ndim != 3 or c.shape[0] != w.size or c.shape[1] != c.shape[2]:
            raise ValueError(f"inconsistent Kraus shapes {w.shape}, {c.shape}")
        if w.size and np.any(np.diff(w) > 1e-12):
            raise ValueError("weights must be sorted descending")
        if w.size and w.min() < -1e-10:
            raise ValueError(f"weight {w.min():.3e} below the -1e-10 tolerance")
        flat = c.reshape(c.shape[0], -1)
        gram = flat @ flat.conj().T
        dev = np.abs(gram - np.eye(c.shape[0])).max()
        if dev > 1e-10:
            raise ValueError(f"Kraus operators not orthonormal: max Gram deviation {dev:.3e}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "operators", c)

    def reassemble(self) -> SuperOperator:
        return SuperOperator(kraus_tensor(self.weights, self.operators))


def kraus_decompose(g: SuperOperator) -> KrausSet:
    """Diagonalize the matrix view into the canonical operator-sum form."""
    view = hermitize(g.matrix_view())
    w, v = np.linalg.eigh(view)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    d = g.dim
    ops = np.ascontiguousarray(v.T).reshape(w.size, d, d)
    return KrausSet(weights=w, operators=ops)


def project_onto_density(g: SuperOperator, rho: DensityMatrix, weight_floor: float = 1e-14) -> SuperOperator:
    """Specialize G to the eigenspace of rho.

    Returns sum_k p_k (I(.)P_k) G (P_k(.)I) over rho's eigenprojectors, so the
    inner trace of the result applied to nothing recovers sum_k p_k G[P_k].
    """
    if rho.dim != g.dim:
        raise ValueError(f"dimension mismatch: {rho.dim} vs {g.dim}")
    p, vecs = rho.eig()
    out = np.zeros_like(g.tensor)
    for k in range(p.size):
        if p[k] <= weight_floor:
            continue
        psi = vecs[:, k]
        gk = apply(g, np.outer(psi, psi.conj()))
        out += p[k] * np.einsum("xw,y,z->xyzw", gk, psi.conj(), psi)
    return SuperOperator(out)


# ---------------------------------------------------------------------------
# Serialization: a flat JSON form (dimension header + row-major re/im pairs),
# written atomically so cache readers never observe a partial file.


def superop_to_dict(g: SuperOperator) -> dict:
    flat = g.tensor.ravel()
    data = np.empty(2 * flat.size)
    data[0::2], data[1::2] = flat.real, flat.imag
    return {"dim": g.dim, "data": data.tolist()}


def superop_from_dict(payload: dict) -> SuperOperator:
    d = int(payload["dim"])
    data = np.asarray(payload["data"], dtype=float)
    if data.size != 2 * d**4:
        raise ValueError(f"payload length {data.size} does not match dim {d}")
    return SuperOperator((data[0::2] + 1j * data[1::2]).reshape(d, d, d, d))


def save_superop(g: SuperOperator, path: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(superop_to_dict(g), fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_superop(path: str) -> SuperOperator:
    with open(path) as fh:
        return superop_from_dict(json.load(fh))
