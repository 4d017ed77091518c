"""Coefficient matrices of the eigenvalue system Y' = A(lambda, z) Y and their limits."""
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSplitting, ImaginaryEigenvalue
from .system_model import SkewGradientSystem, require_turing
from .symplectic_core import LagrangianFrame, make_frame, structure_matrix

SPLIT_TOL = 1e-10


def _blocks(system: SkewGradientSystem, c: float, lam, df_u: np.ndarray) -> np.ndarray:
    n = system.n
    dtype = complex if np.iscomplexobj(lam) else float
    A = np.zeros((2 * n, 2 * n), dtype=dtype)
    A[:n, n:] = np.diag(system.S)
    A[n:, :n] = lam * np.diag(1.0 / system.S) - system.Q[:, None] * df_u
    A[n:, n:] = -c * np.eye(n)
    return A


def coefficient_matrix(system: SkewGradientSystem, profile, lam, z: float,
                       return_flag: bool = False):
    """A(lam, z) = [[0, S], [lam S^-1 - Q f'(u(z)), -c I]].

    Outside the profile grid the rest state is used; ``return_flag`` exposes that.
    """
    outside = not (profile.grid[0] <= z <= profile.grid[-1])
    u = np.zeros(system.n) if outside else profile.u(z)
    A = _blocks(system, profile.c, lam, system.df(u))
    return (A, outside) if return_flag else A


def lambda_derivative(system: SkewGradientSystem) -> np.ndarray:
    n = system.n
    A = np.zeros((2 * n, 2 * n))
    A[n:, :n] = np.diag(1.0 / system.S)
    return A


def asymptotic_matrix(system: SkewGradientSystem, c: float, lam) -> np.ndarray:
    return _blocks(system, c, lam, system.df(np.zeros(system.n)))


@dataclass
class AsymptoticSystem:
    lam: float
    A_inf: np.ndarray
    mu: np.ndarray
    eta: np.ndarray  # columns
    U_frame: LagrangianFrame
    S_frame: LagrangianFrame


def _fix_sign(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    return v * np.sign(v[k]) if v[k] != 0 else v


def rest_modes(system: SkewGradientSystem):
    """Eigenpairs (nu_i, r_i) of QS f'(0), real and distinct, sorted increasing."""
    nu, r = np.linalg.eig(system.QS_df0())
    if np.any(np.abs(nu.imag) > 0):
        return None
    nu = nu.real
    order = np.argsort(nu)
    nu, r = nu[order], r[:, order].real
    if np.min(np.diff(nu), initial=np.inf) < 1e-12:
        return None
    r = np.column_stack([_fix_sign(r[:, i] / np.linalg.norm(r[:, i])) for i in range(len(nu))])
    return nu, r


def closed_form_mu(c: float, lam, nu: np.ndarray):
    """(stable, unstable) exponents per rest mode, mu_s + mu_u = -c."""
    root = np.sqrt(c * c + 4.0 * (lam - nu + 0j))
    return (-c - root) / 2.0, (-c + root) / 2.0


def asymptotic_system(system: SkewGradientSystem, c: float, lam: float) -> AsymptoticSystem:
    require_turing(system)
    n = system.n
    A = asymptotic_matrix(system, c, float(lam))
    modes = rest_modes(system)
    if modes is not None:
        nu, r = modes
        ms, mu_u = closed_form_mu(c, lam, nu)
        if np.any(np.abs(ms.imag) > 0):
            raise ImaginaryEigenvalue(f"lambda={lam} lies in the essential spectrum")
        mu = np.concatenate([ms.real, mu_u.real])
        cols = [np.concatenate([r[:, i % n], m * r[:, i % n] / system.S]) for i, m in enumerate(mu)]
        order = np.argsort(mu, kind="stable")
        mu = mu[order]
        eta = np.column_stack([cols[i] for i in order])
    else:
        w, v = np.linalg.eig(A)
        if np.any(np.abs(w.imag) > 1e-12):
            raise ImaginaryEigenvalue(f"complex asymptotic exponents at lambda={lam}: {w}")
        order = np.argsort(w.real)
        mu, eta = w.real[order], v.real[:, order]
    eta = np.column_stack([_fix_sign(eta[:, i] / np.linalg.norm(eta[:, i])) for i in range(2 * n)])
    if abs(mu[n - 1]) < SPLIT_TOL or abs(mu[n] + c) < SPLIT_TOL or mu[n - 1] >= 0:
        raise DegenerateSplitting(f"no spectral gap at lambda={lam}: mu={mu}")
    J = structure_matrix(system.Q)
    U = make_frame(np.linalg.qr(eta[:, n:])[0], J)
    S = make_frame(np.linalg.qr(eta[:, :n])[0], J)
    return AsymptoticSystem(float(lam), A, mu, eta, U, S)


def essential_margin(system: SkewGradientSystem, c: float, lam: complex) -> float:
    """min |Re mu| over the exponents at the rest state; zero on the essential spectrum."""
    mu = np.linalg.eigvals(asymptotic_matrix(system, c, complex(lam)))
    return float(np.min(np.abs(mu.real)))


def analytic_seeds(system: SkewGradientSystem, c: float, lam):
    """Exponents and eigenvectors (r_i, mu S^-1 r_i), analytic in lam.

    Returns (mu_stable, eta_stable, mu_unstable, eta_unstable) with eta as columns.
    """
    modes = rest_modes(system)
    if modes is None:
        raise DegenerateSplitting("analytic seeding needs real distinct rest eigenvalues")
    nu, r = modes
    ms, mu_u = closed_form_mu(c, lam, nu)
    Sinv = (1.0 / system.S)[:, None]
    es = np.vstack([r, Sinv * r * ms[None, :]])
    eu = np.vstack([r, Sinv * r * mu_u[None, :]])
    return ms, es, mu_u, eu
