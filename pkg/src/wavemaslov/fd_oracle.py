"""Brute-force spectrum of the linearized operator by finite differences.

Two discretizations on a uniform grid with Dirichlet ends:

* ``"L"``:  u'' + c u' + QS f'(u_wave) u
* ``"Lc"``: the exponentially weighted form w = S^{-1/2} e^{cz/2} u, which reads
  w'' + (Q S^{1/2} f'(u_wave) S^{1/2} - c^2/4) w and is symmetric apart from the
  skew coupling produced by Q.

Unknowns are ordered node-major, so the matrix is block tridiagonal.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import serialization
from .errors import GridTooCoarse, SolverFailure

DENSE_LIMIT = 2000
VARIANTS = ("L", "Lc")


@dataclass
class DiscretizedOperator:
    grid: np.ndarray
    h: float
    matrix: sp.csr_matrix
    variant: str
    n: int
    c: float
    S: np.ndarray
    potential: np.ndarray   # (M, n, n) local coefficient blocks
    bc: str = "dirichlet"

    @property
    def M(self) -> int:
        return self.grid.size


def _potential(system, profile, z: np.ndarray, variant: str) -> np.ndarray:
    n = system.n
    U = profile(z)[:, :n].T
    D = np.moveaxis(system.df(U), -1, 0)  # (M, n, n)
    if variant == "L":
        return (system.Q * system.S)[None, :, None] * D
    r = np.sqrt(system.S)
    return system.Q[None, :, None] * r[None, :, None] * D * r[None, None, :] \
        - 0.25 * profile.c ** 2 * np.eye(n)[None]


def assemble(system, profile, variant: str = "L", M: int = 1600,
             L: float | None = None) -> DiscretizedOperator:
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    if M < 400:
        raise GridTooCoarse(f"M={M} < 400", M=M)
    L = profile.L if L is None else float(L)
    n = system.n
    h = 2 * L / (M + 1)
    z = -L + h * np.arange(1, M + 1)
    one = np.ones(M)
    D2 = sp.diags([one[1:], -2 * one, one[1:]], [-1, 0, 1]) / h ** 2
    A = sp.kron(D2, sp.identity(n))
    if variant == "L":
        D1 = sp.diags([-one[1:], one[1:]], [-1, 1]) / (2 * h)
        A = A + profile.c * sp.kron(D1, sp.identity(n))
    V = _potential(system, profile, z, variant)
    A = (A + sp.block_diag(list(V))).tocsr()
    return DiscretizedOperator(z, h, A, variant, n, profile.c, np.asarray(system.S), V)


def spectral_box(op: DiscretizedOperator):
    """(upper bound on Re, bound on |Im|) from the numerical range of the weighted form."""
    V = op.potential
    if op.variant == "L":
        # same bound as the weighted form, rebuilt from the unweighted blocks
        r = np.sqrt(op.S)
        V = V * (r[None, None, :] / r[None, :, None]) - 0.25 * op.c ** 2 * np.eye(op.n)[None]
    sym = 0.5 * (V + np.transpose(V, (0, 2, 1)))
    skew = 0.5 * (V - np.transpose(V, (0, 2, 1)))
    rho = float(np.max(np.linalg.eigvalsh(sym)))
    im = float(np.max(np.linalg.norm(skew, ord=2, axis=(1, 2))))
    return rho, im


def oracle_eigs(op: DiscretizedOperator, margin: float = 5e-3, vectors: bool = False):
    """Eigenvalues with Re >= -margin, sorted by real part descending.

    Dense below ``DENSE_LIMIT`` unknowns; otherwise shift-invert Arnoldi on a disk
    that covers the part of the numerical range right of -margin, enlarging the
    number of requested eigenvalues until one falls outside the disk.
    """
    N = op.matrix.shape[0]
    try:
        if N <= DENSE_LIMIT:
            if vectors:
                w, v = np.linalg.eig(op.matrix.toarray())
            else:
                w, v = np.linalg.eigvals(op.matrix.toarray()), None
        else:
            w, v = _shift_invert(op, margin, vectors)
    except (np.linalg.LinAlgError, spla.ArpackError, spla.ArpackNoConvergence) as exc:
        raise SolverFailure(f"eigensolver failed: {exc}") from exc
    keep = w.real >= -margin
    order = np.argsort(-w.real[keep], kind="stable")
    w = w[keep][order]
    if vectors:
        return w, v[:, keep][:, order]
    return w


def _shift_invert(op, margin, vectors):
    rho, im = spectral_box(op)
    rho = rho + 0.1 * abs(rho) + 1e-3
    im = 1.1 * im + 1e-3
    sigma = 0.5 * (rho - margin)
    radius = float(np.hypot(0.5 * (rho + margin), im))
    N = op.matrix.shape[0]
    k = 8
    while True:
        k = min(k, N - 2)
        w, v = spla.eigs(op.matrix.tocsc(), k=k, sigma=sigma, which="LM",
                         return_eigenvectors=True, tol=1e-13)
        if np.max(np.abs(w - sigma)) > radius or k == N - 2:
            return w, (v if vectors else None)
        k *= 2


def to_variant(op: DiscretizedOperator, U: np.ndarray) -> np.ndarray:
    """Map (M, n) samples of an unweighted perturbation into the variant's unknowns.

    Going the other way multiplies roundoff in the decaying tail by e^{-cz/2},
    so comparisons are made in the variant's own coordinates.
    """
    if op.variant == "Lc":
        return U / np.sqrt(op.S)[None, :] * np.exp(0.5 * op.c * op.grid)[:, None]
    return U


def translation_mode_error(op: DiscretizedOperator, profile, vec: np.ndarray) -> float:
    """Relative L2 distance between an eigenvector and the wave derivative (up to scale)."""
    X = vec.reshape(op.M, op.n)
    X = (X * np.exp(-1j * np.angle(X.flat[np.argmax(np.abs(X))]))).real
    d = to_variant(op, profile(op.grid, 1)[:, : op.n])
    X = X.ravel() / np.linalg.norm(X)
    d = d.ravel() / np.linalg.norm(d)
    X = X * np.sign(X @ d)
    return float(np.linalg.norm(X - d))


def to_dict(op: DiscretizedOperator, eigs) -> dict:
    return {"variant": op.variant, "M": op.M, "L": float(-op.grid[0] + op.h), "h": op.h,
            "eigs": [[complex(e).real, complex(e).imag] for e in eigs]}


def to_json(op: DiscretizedOperator, eigs) -> str:
    return serialization.dumps(to_dict(op, eigs))


def richardson(values, ratio: float = 2.0, order: float = 2.0):
    """Richardson extrapolants of successive values on grids refined by ``ratio``, and
    the observed convergence order from the last three values."""
    v = np.asarray(values, dtype=float)
    f = ratio ** order
    ext = (f * v[1:] - v[:-1]) / (f - 1)
    observed = np.nan
    if v.size >= 3:
        observed = float(np.log(abs((v[-3] - v[-2]) / (v[-2] - v[-1]))) / np.log(ratio))
    return ext, observed
