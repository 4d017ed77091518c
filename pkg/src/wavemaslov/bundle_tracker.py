"""Frames of the unstable and stable bundles along z at fixed lambda.

The eigenvalue system is integrated on a fixed mesh with the fourth-order
Magnus method.  Each step map is the exponential of a matrix in the
conformally symplectic algebra (A^T J + J A = -c J), so the weighted form
e^{cz} w and the Lagrangian property are preserved up to roundoff.  Frames are
re-orthonormalized by Gram-Schmidt after every step with a positive
triangular factor; the log of its diagonal is accumulated so that raw
solutions can be reconstructed as frame @ G.
"""
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DefectBlowup
from .linearization import analytic_seeds, asymptotic_matrix, lambda_derivative
from .symplectic_core import structure_matrix
from .system_model import require_turing

GAUSS = np.sqrt(3.0) / 6.0


# ---------------------------------------------------------------- kernels

@njit(cache=True)
def _expm(M):
    d = M.shape[0]
    nrm = 0.0
    for i in range(d):
        row = 0.0
        for j in range(d):
            row += abs(M[i, j])
        nrm = max(nrm, row)
    s = 0
    while nrm > 0.5:
        nrm *= 0.5
        s += 1
    X = M / (2.0 ** s)
    eye = np.eye(d).astype(M.dtype)
    P = eye.copy()
    for k in range(14, 0, -1):
        P = eye + (X @ P) / k
    for _ in range(s):
        P = P @ P
    return P


@njit(cache=True)
def _cdot(X, i, v):
    acc = 0.0 * v[0]
    for t in range(v.shape[0]):
        acc += np.conj(X[t, i]) * v[t]
    return acc


@njit(cache=True)
def _gram_schmidt(Y, X, R):
    d, n = Y.shape
    for j in range(n):
        v = Y[:, j].copy()
        for i in range(n):
            R[i, j] = 0.0
        for _ in range(2):
            for i in range(j):
                r = _cdot(X, i, v)
                R[i, j] += r
                for t in range(d):
                    v[t] -= r * X[t, i]
        nrm = 0.0
        for t in range(d):
            nrm += abs(v[t]) ** 2
        nrm = np.sqrt(nrm)
        R[j, j] = nrm
        for t in range(d):
            X[t, j] = v[t] / nrm


@njit(cache=True)
def _anchor_first(Y, a):
    """Replace the first column by +-a (sign kept continuous with Y)."""
    s = 0.0
    nrm = 0.0
    for i in range(Y.shape[0]):
        s += (np.conj(a[i]) * Y[i, 0]).real
        nrm += abs(Y[i, 0]) ** 2
    sign = 1.0 if s >= 0 else -1.0
    nrm = np.sqrt(nrm)
    for i in range(Y.shape[0]):
        Y[i, 0] = sign * nrm * a[i]


@njit(cache=True)
def _propagate(om0, h, alam, lam, X0, forward, anchor):
    m = om0.shape[0]
    d, n = X0.shape
    frames = np.zeros((m + 1, d, n), dtype=X0.dtype)
    Rs = np.zeros((m, n, n), dtype=X0.dtype)
    logs = np.zeros(m + 1)
    anchored = anchor.shape[0] > 0
    if forward:
        frames[0] = X0
        for k in range(m):
            E = _expm(om0[k] + (lam * h[k]) * alam)
            Y = E @ frames[k]
            if anchored:
                _anchor_first(Y, anchor[k + 1])
            _gram_schmidt(Y, frames[k + 1], Rs[k])
            acc = 0.0
            for i in range(n):
                acc += np.log(Rs[k, i, i].real)
            logs[k + 1] = logs[k] + acc
    else:
        frames[m] = X0
        for k in range(m - 1, -1, -1):
            E = _expm(-(om0[k] + (lam * h[k]) * alam))
            Y = E @ frames[k + 1]
            if anchored:
                _anchor_first(Y, anchor[k])
            _gram_schmidt(Y, frames[k], Rs[k])
            acc = 0.0
            for i in range(n):
                acc += np.log(Rs[k, i, i].real)
            logs[k] = logs[k + 1] + acc
    return frames, Rs, logs


# ---------------------------------------------------------------- mesh

@dataclass
class IntegrationMesh:
    z: np.ndarray        # nodes, z[0] = -L, z[-1] = L
    om0: np.ndarray      # lambda-independent Magnus exponents per step
    h: np.ndarray
    alam: np.ndarray
    lam_bound: float
    c: float


def _step_sizes(profile, lam_bound: float, h0: float, hmax: float, kappa: float):
    system = profile.system
    n = system.n
    c = profile.c
    # spread of growth rates at the largest lambda bounds the step (stiff modes)
    mu = np.linalg.eigvals(asymptotic_matrix(system, c, lam_bound + 0j)).real
    spread = float(mu.max() - mu.min())
    hs = min(hmax, kappa / spread)
    # activity of the coefficients: |d/dz df(u(z))| on the profile grid
    zg = profile.grid
    mid = 0.5 * (zg[1:] + zg[:-1])
    zz = np.sort(np.concatenate([zg, mid]))
    U = profile(zz)[:, :n].T
    dU = profile(zz, 1)[:, :n].T
    delta = 1e-6
    dfd = (system.df(U + delta * dU) - system.df(U - delta * dU)) / (2 * delta)
    act = np.sqrt(np.sum(dfd.reshape(n * n, -1) ** 2, axis=0))
    local = np.minimum(hs, h0 / np.maximum(act, 1e-300) ** 0.25)
    return zz, local, hs


def build_mesh(profile, lam_bound: float = 1.0, h0: float = 0.02, hmax: float = 0.5,
               kappa: float = 3.0) -> IntegrationMesh:
    """Nodes on [-L, L] adapted to the profile and to the stiffest lambda in use."""
    system = profile.system
    n = system.n
    zz, local, hs = _step_sizes(profile, max(lam_bound, 0.0), h0, hmax, kappa)
    L = profile.L
    nodes = [-L]
    z = -L
    while z < L:
        k = np.searchsorted(zz, z)
        lo, hi = max(k - 1, 0), min(k + 1, zz.size)
        h = float(np.min(local[lo:hi + 1]))
        # do not step across a region needing finer steps
        j = np.searchsorted(zz, z + h)
        h = min(h, float(np.min(local[lo:max(j, hi) + 1])))
        z = min(z + h, L)
        if L - z < 0.25 * h:
            z = L
        nodes.append(z)
    zn = np.array(nodes)
    h = np.diff(zn)
    g1 = zn[:-1] + h * (0.5 - GAUSS)
    g2 = zn[:-1] + h * (0.5 + GAUSS)
    A1 = _coefficients(profile, g1)
    A2 = _coefficients(profile, g2)
    comm = np.einsum("kij,kjl->kil", A2, A1) - np.einsum("kij,kjl->kil", A1, A2)
    om0 = 0.5 * h[:, None, None] * (A1 + A2) + (np.sqrt(3.0) / 12.0) * (h ** 2)[:, None, None] * comm
    return IntegrationMesh(zn, om0, h, lambda_derivative(system), float(lam_bound), profile.c)


def _coefficients(profile, z: np.ndarray) -> np.ndarray:
    """A(0, z) at many points, shape (m, 2n, 2n)."""
    system = profile.system
    n = system.n
    U = profile(z)[:, :n].T
    A = np.zeros((z.size, 2 * n, 2 * n))
    A[:, :n, n:] = np.diag(system.S)
    A[:, n:, :n] = -np.moveaxis(system.Q[:, None, None] * system.df(U), -1, 0)
    A[:, n:, n:] = -profile.c * np.eye(n)
    return A


# ---------------------------------------------------------------- trajectories

@dataclass
class BundleTrajectory:
    lam: complex
    side: str                 # "unstable" or "stable"
    grid: np.ndarray
    frames: np.ndarray        # (m+1, 2n, n)
    R: np.ndarray             # (m, n, n) triangular factors per step
    logs: np.ndarray          # accumulated log det of the triangular factors
    seed_logdet: complex      # log det of the seed coefficient matrix
    mu: np.ndarray            # seed exponents
    orientation_flips: int = 0
    anchored: bool = False
    _J: np.ndarray = field(default=None, repr=False)

    @property
    def renorm_log(self):
        return list(zip(self.grid.tolist(), self.logs.tolist()))

    def logdet(self, k: int) -> complex:
        """log det of the coefficient matrix G with raw solutions = frame @ G."""
        return self.seed_logdet + self.logs[k]

    def defects(self) -> np.ndarray:
        F = self.frames
        G = np.einsum("kia,ij,kjb->kab", F, self._J, F)
        return np.max(np.abs(G), axis=(1, 2))

    def index(self, z: float) -> int:
        k = int(np.argmin(np.abs(self.grid - z)))
        return k

    def coefficients(self, a0: np.ndarray, start: int | None = None):
        """Coefficients b_k (frame basis) of the solution frame[start] @ a0, all nodes.

        Returned with per-node log scales: solution(k) = exp(scale[k]) frame[k] @ b[k].
        """
        m = self.grid.size
        if start is None:
            start = 0 if self.side == "unstable" else m - 1
        b = np.zeros((m, a0.size), dtype=np.result_type(a0, self.R))
        scale = np.zeros(m)
        b[start] = a0
        for k in range(start, m - 1):  # forward: b_{k+1} = R_k b_k or inv
            nxt = self.R[k] @ b[k] if self.side == "unstable" else np.linalg.solve(self.R[k], b[k])
            s = np.linalg.norm(nxt)
            b[k + 1] = nxt / s
            scale[k + 1] = scale[k] + np.log(s)
        for k in range(start, 0, -1):
            prv = np.linalg.solve(self.R[k - 1], b[k]) if self.side == "unstable" else self.R[k - 1] @ b[k]
            s = np.linalg.norm(prv)
            b[k - 1] = prv / s
            scale[k - 1] = scale[k] + np.log(s)
        return b, scale


def _track(system, mesh: IntegrationMesh, lam, side: str, check_defect: bool,
           anchor: np.ndarray | None = None):
    require_turing(system)
    n = system.n
    c = mesh.c
    ms, es, mu_u, eu = analytic_seeds(system, c, lam)
    complex_run = np.iscomplexobj(lam) and complex(lam).imag != 0
    L = mesh.z[-1]
    if side == "unstable":
        mu, eta, zseed = mu_u, eu, -L
    else:
        mu, eta, zseed = ms, es, L
    if not complex_run:
        mu, eta = mu.real, eta.real
        dtype = float
    else:
        dtype = complex
    eta = eta.astype(dtype)
    if anchor is not None:
        # the anchor direction leads the seed so the first column stays on it
        a0 = anchor[0].astype(dtype)
        coef = np.linalg.lstsq(eta, a0, rcond=None)[0]
        eta = np.column_stack([a0] + [eta[:, j] for j in np.argsort(-np.abs(coef))[1:]])
    else:
        anchor = np.zeros((0, eta.shape[0]), dtype=dtype)
    X0 = np.zeros_like(eta)
    R0 = np.zeros((n, n), dtype=dtype)
    _gram_schmidt(eta, X0, R0)
    seed_logdet = np.sum(np.log(np.diag(R0).real)) + np.sum(mu) * zseed
    lam_c = complex(lam) if complex_run else float(np.real(lam))
    alam = mesh.alam.astype(dtype)
    om0 = mesh.om0.astype(dtype)
    frames, Rs, logs = _propagate(om0, mesh.h, alam, lam_c, X0, side == "unstable",
                                  anchor.astype(dtype))
    traj = BundleTrajectory(lam_c, side, mesh.z, frames, Rs, logs, seed_logdet, mu,
                            _J=structure_matrix(system.Q))
    traj.anchored = anchor.shape[0] > 0
    if check_defect and not complex_run:
        worst = float(np.max(traj.defects()))
        if worst > 1e-6:
            raise DefectBlowup(f"Lagrangian defect {worst:.3e} at lambda={lam}", defect=worst)
    return traj


def translation_anchor(profile, z: np.ndarray) -> np.ndarray:
    """Unit wave derivative at z; spans the translation mode of E^u(0, z)."""
    d = profile(z, 1)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def track_unstable(system, profile, lam, mesh: IntegrationMesh | None = None,
                   check_defect: bool = True, anchored: bool = False) -> BundleTrajectory:
    """Unstable frames from z = -L forward.

    With ``anchored`` (lambda = 0 only) the first column is pinned to the wave
    derivative, which keeps the plane accurate past the pulse where plain
    forward integration loses the decaying translation mode.
    """
    mesh = mesh or build_mesh(profile, max(float(np.real(lam)), 1.0))
    anchor = None
    if anchored:
        if lam != 0:
            raise ValueError("anchoring to the wave derivative is only valid at lambda = 0")
        anchor = translation_anchor(profile, mesh.z)
    return _track(system, mesh, lam, "unstable", check_defect, anchor)


def track_stable(system, profile, lam, mesh: IntegrationMesh | None = None,
                 check_defect: bool = True) -> BundleTrajectory:
    mesh = mesh or build_mesh(profile, max(float(np.real(lam)), 1.0))
    return _track(system, mesh, lam, "stable", check_defect)


# ---------------------------------------------------------------- off-node frames

def _magnus_exponent(profile, lam, za: float, zb: float) -> np.ndarray:
    h = zb - za
    g = np.array([za + h * (0.5 - GAUSS), za + h * (0.5 + GAUSS)])
    A = _coefficients(profile, g).astype(np.result_type(lam, float))
    A = A + lam * lambda_derivative(profile.system)[None]
    comm = A[1] @ A[0] - A[0] @ A[1]
    return 0.5 * h * (A[0] + A[1]) + (np.sqrt(3.0) / 12.0) * h * h * comm


def _orthonormal(Y: np.ndarray) -> np.ndarray:
    Qm, R = np.linalg.qr(Y)
    return Qm * np.sign(np.diag(R).real)[None, :]


def frame_at(traj: BundleTrajectory, profile, z: float) -> np.ndarray:
    """Orthonormal frame at an arbitrary z by one partial Magnus step from the nearest
    node on the side the bundle is propagated from."""
    grid = traj.grid
    z = float(np.clip(z, grid[0], grid[-1]))
    k = int(np.clip(np.searchsorted(grid, z) - 1, 0, grid.size - 2))
    if traj.side == "unstable":
        if z == grid[k]:
            Y = traj.frames[k].copy()
        else:
            Y = _expm(_magnus_exponent(profile, traj.lam, grid[k], z)) @ traj.frames[k]
    else:
        if z == grid[k + 1]:
            Y = traj.frames[k + 1].copy()
        else:
            Y = _expm(-_magnus_exponent(profile, traj.lam, z, grid[k + 1])) @ traj.frames[k + 1]
    if traj.anchored:
        a = translation_anchor(profile, np.array([z]))[0]
        s = 1.0 if np.real(np.vdot(a, Y[:, 0])) >= 0 else -1.0
        Y[:, 0] = s * np.linalg.norm(Y[:, 0]) * a
    return _orthonormal(Y)


# ---------------------------------------------------------------- matching point

def matching_point(profile, plain: BundleTrajectory, anchored: BundleTrajectory,
                   stable: BundleTrajectory, floor: float = 1e-3):
    """Node where both bundles at lambda = 0 are most trustworthy.

    The unstable error is the gap between the plain and the anchored planes; the
    stable error is the distance of the wave derivative from the stable plane.
    Only nodes inside the pulse (|wave'| above ``floor`` times its maximum) qualify.
    Returns (index, error).
    """
    z = plain.grid
    a = translation_anchor(profile, z)
    fu, fa, fs = plain.frames, anchored.frames, stable.frames
    proj = np.einsum("kij,kjl->kil", fa, np.einsum("kji,kjl->kil", fa, fu))
    err_u = np.linalg.norm(fu - proj, ord=2, axis=(1, 2))
    inner = np.einsum("kji,kj->ki", fs, a)
    err_s = np.linalg.norm(a - np.einsum("kij,kj->ki", fs, inner), axis=1)
    speed = np.linalg.norm(profile(z, 1), axis=1)
    err = np.where(speed >= floor * speed.max(), np.maximum(err_u, err_s), np.inf)
    k = int(np.argmin(err))
    return k, float(err[k])


# ---------------------------------------------------------------- shared tracks

class BundleCache:
    """Unstable and stable tracks on one mesh, memoized by lambda."""

    def __init__(self, system, profile, lam_bound: float, mesh: IntegrationMesh | None = None,
                 check_defect: bool = True):
        self.system = system
        self.profile = profile
        self.mesh = mesh or build_mesh(profile, max(lam_bound, 1.0))
        self.check_defect = check_defect
        self._tracks: dict = {}
        self._match = None

    @property
    def grid(self) -> np.ndarray:
        return self.mesh.z

    def _key(self, lam):
        lam = complex(lam)
        return lam if lam.imag != 0 else lam.real

    def unstable(self, lam) -> BundleTrajectory:
        key = ("u", self._key(lam))
        if key not in self._tracks:
            self._tracks[key] = _track(self.system, self.mesh, key[1], "unstable", self.check_defect)
        return self._tracks[key]

    def stable(self, lam) -> BundleTrajectory:
        key = ("s", self._key(lam))
        if key not in self._tracks:
            self._tracks[key] = _track(self.system, self.mesh, key[1], "stable", self.check_defect)
        return self._tracks[key]

    def anchored(self) -> BundleTrajectory:
        key = ("a", 0.0)
        if key not in self._tracks:
            anchor = translation_anchor(self.profile, self.mesh.z)
            self._tracks[key] = _track(self.system, self.mesh, 0.0, "unstable", self.check_defect,
                                       anchor)
        return self._tracks[key]

    def matching(self):
        """(index, error) of the matching node, computed once from the lambda = 0 tracks."""
        if self._match is None:
            self._match = matching_point(self.profile, self.unstable(0.0), self.anchored(),
                                         self.stable(0.0))
        return self._match

    def forget(self, keep_zero: bool = True):
        """Drop memoized tracks (optionally keeping lambda = 0) to bound memory."""
        self._tracks = {k: v for k, v in self._tracks.items() if keep_zero and k[1] == 0.0}


def pairing_series(unstable: BundleTrajectory, stable: BundleTrajectory, a: np.ndarray,
                   b: np.ndarray, c: float):
    """e^{cz} omega(Y_u, Y_s) at every node for the solutions seeded with coefficients a, b.

    Returned as (log magnitude, sign) since the raw solutions leave floating range.
    """
    bu, su = unstable.coefficients(a)
    bs, ss = stable.coefficients(b)
    w = np.einsum("ki,kai,ab,kbj,kj->k", bu, unstable.frames, unstable._J, stable.frames, bs)
    w = np.real_if_close(w)
    return c * unstable.grid + su + ss + np.log(np.abs(w)), np.sign(w)
