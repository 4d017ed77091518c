"""Symplectic linear algebra on R^2n with J = [[0, Q], [-Q, 0]]."""
from dataclasses import dataclass

import numpy as np

from .errors import RankAmbiguity

INTERSECTION_TOL = 1e-8


@dataclass(frozen=True)
class ComplexStructure:
    J: np.ndarray


@dataclass
class LagrangianFrame:
    columns: np.ndarray  # (2n, n)
    defect: float

    @property
    def n(self) -> int:
        return self.columns.shape[1]


@dataclass(frozen=True)
class SignatureResult:
    n_plus: int
    n_minus: int
    n_zero: int

    @property
    def sign(self) -> int:
        return self.n_plus - self.n_minus


def structure_matrix(Q: np.ndarray) -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    n = Q.size
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = np.diag(Q)
    J[n:, :n] = -np.diag(Q)
    return J


def complex_structure(system) -> ComplexStructure:
    return ComplexStructure(structure_matrix(system.Q))


def _J(J):
    return J.J if isinstance(J, ComplexStructure) else J


def omega(J, a: np.ndarray, b: np.ndarray):
    return a @ (_J(J) @ b)


def weighted_omega(J, c: float, z: float, a: np.ndarray, b: np.ndarray) -> float:
    base = omega(J, a, b)
    cz = c * z
    if abs(cz) <= 700.0:
        return np.exp(cz) * base
    if base == 0:
        return 0.0 * base
    # log-magnitude route; inf/0 only when the true value is out of range
    return np.sign(base) * np.exp(cz + np.log(np.abs(base)))


def lagrangian_defect(J, cols: np.ndarray) -> float:
    G = cols.T @ _J(J) @ cols
    return float(np.max(np.abs(G))) if G.size else 0.0


def make_frame(cols: np.ndarray, J) -> LagrangianFrame:
    cols = np.asarray(cols, dtype=float)
    return LagrangianFrame(cols, lagrangian_defect(J, cols))


def _cols(V) -> np.ndarray:
    return V.columns if isinstance(V, LagrangianFrame) else np.asarray(V)


def pairing_matrix(J, c: float, z: float, V, W) -> np.ndarray:
    Vc, Wc = _cols(V), _cols(W)
    M = Vc.T @ _J(J) @ Wc
    return np.exp(c * z) * M if c * z != 0 else M


def detection(J, c: float, z: float, V, W) -> float:
    """det of the pairing matrix divided by the product of column norms."""
    Vc, Wc = _cols(V), _cols(W)
    M = Vc.T @ _J(J) @ Wc
    norms = np.prod(np.linalg.norm(Vc, axis=0)) * np.prod(np.linalg.norm(Wc, axis=0))
    return float(np.linalg.det(M) / norms)


def intersection_basis(V, W, tol: float = INTERSECTION_TOL) -> list:
    Vc, Wc = _cols(V), _cols(W)
    Vq, _ = np.linalg.qr(Vc)
    Wq, _ = np.linalg.qr(Wc)
    K = np.hstack([Vq, -Wq])
    _, s, vt = np.linalg.svd(K)
    null = np.flatnonzero(s < tol)
    near = np.flatnonzero((s >= tol) & (s < 10 * tol))
    if near.size:
        dims = (int(null.size), int(null.size + near.size))
        raise RankAmbiguity(f"singular values cluster at tol={tol}: {s}", candidates=dims)
    n = Vc.shape[1]
    basis = []
    for k in null:
        x = Vq @ vt[k, :n]
        basis.append(x)
    if not basis:
        return []
    B, _ = np.linalg.qr(np.column_stack(basis))
    return [B[:, i] for i in range(B.shape[1])]


def signature(gram: np.ndarray, tol: float = 1e-12) -> SignatureResult:
    gram = np.atleast_2d(np.asarray(gram, dtype=float))
    if gram.size == 0:
        return SignatureResult(0, 0, 0)
    w = np.linalg.eigvalsh(0.5 * (gram + gram.T))
    return SignatureResult(int(np.sum(w > tol)), int(np.sum(w < -tol)),
                           int(np.sum(np.abs(w) <= tol)))
