"""Traveling pulse of the first-order system (u, v)' = (Sv, -cv - Qf(u)).

The pulse is found by collocation (scipy's ``solve_bvp``) with the speed as a
free parameter, projection boundary conditions at both ends and an integral
phase condition against a reference profile.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_bvp
from scipy.interpolate import BPoly, CubicSpline

from . import serialization
from .errors import NonConvergence, TailTooFat
from .system_model import FHNParameters, SkewGradientSystem, require_turing, system_from_dict


@dataclass
class InitialGuess:
    grid: np.ndarray
    values: np.ndarray  # (m, 2n)
    c_guess: float


@dataclass
class WaveConfig:
    tol: float = 1e-8
    tail_tol: float = 1e-8
    max_nodes: int = 300000
    auto_extend: bool = True
    max_extensions: int = 4
    start_spacing: float = 0.25


@dataclass
class WaveProfile:
    system: SkewGradientSystem
    c: float
    grid: np.ndarray
    values: np.ndarray  # (m, 2n)
    residual: float
    tail_norms: tuple
    tol: float = 1e-8
    _spline: object = field(default=None, init=False, repr=False, compare=False)

    @property
    def L(self) -> float:
        return float(self.grid[-1])

    def rhs(self, y: np.ndarray) -> np.ndarray:
        """Vector field F(y) for y of shape (2n, ...)."""
        return tw_rhs(self.system, self.c, y)

    def rhs_jacobian(self, y: np.ndarray) -> np.ndarray:
        return tw_jacobian(self.system, self.c, y)

    @property
    def spline(self) -> BPoly:
        if self._spline is None:
            y = self.values.T
            dy = self.rhs(y)
            d2y = np.einsum("ijm,jm->im", self.rhs_jacobian(y), dy)
            data = np.stack([self.values, dy.T, d2y.T], axis=1)
            self._spline = BPoly.from_derivatives(self.grid, data)
        return self._spline

    def __call__(self, z, nu: int = 0) -> np.ndarray:
        """Profile (or its nu-th derivative) at z; shape (..., 2n)."""
        z = np.asarray(z, dtype=float)
        inside = np.clip(z, self.grid[0], self.grid[-1])
        out = self.spline(inside, nu)
        outside = z != inside
        if np.any(outside):
            out = np.where(outside[..., None], 0.0, out)
        return out

    def u(self, z) -> np.ndarray:
        return self(z)[..., : self.system.n]

    def to_dict(self) -> dict:
        return {
            "system": self.system.describe(),
            "c": self.c,
            "grid": self.grid,
            "values": self.values,
            "residual": self.residual,
            "tail_norms": list(self.tail_norms),
        }

    def to_json(self) -> str:
        return serialization.dumps(self.to_dict(), indent=0)

    @classmethod
    def from_dict(cls, d: dict) -> "WaveProfile":
        return cls(system_from_dict(d["system"]), float(d["c"]),
                   np.array(d["grid"], dtype=float), np.array(d["values"], dtype=float),
                   float(d["residual"]), tuple(float(t) for t in d["tail_norms"]))

    @classmethod
    def from_json(cls, text: str) -> "WaveProfile":
        return cls.from_dict(serialization.loads(text))


def tw_rhs(system: SkewGradientSystem, c: float, y: np.ndarray) -> np.ndarray:
    n = system.n
    U, V = y[:n], y[n:2 * n]
    S = system.S.reshape((n,) + (1,) * (y.ndim - 1))
    Q = system.Q.reshape(S.shape)
    return np.concatenate([S * V, -c * V - Q * system.f(U)])


def tw_jacobian(system: SkewGradientSystem, c: float, y: np.ndarray) -> np.ndarray:
    n = system.n
    extra = y.shape[1:]
    Jac = np.zeros((2 * n, 2 * n) + extra)
    for i in range(n):
        Jac[i, n + i] = system.S[i]
        Jac[n + i, n + i] = -c
    Jac[n:, :n] = -system.Q.reshape((n, 1) + (1,) * len(extra)) * system.df(y[:n])
    return Jac


def rest_matrix(system: SkewGradientSystem, c: float) -> np.ndarray:
    return tw_jacobian(system, c, np.zeros(2 * system.n))


def _eigen_split(A: np.ndarray):
    w, vr = np.linalg.eig(A)
    order = np.argsort(w.real, kind="stable")
    return w[order], vr[:, order]


def _real_rows(vecs: np.ndarray, k: int) -> np.ndarray:
    """k real orthonormal rows spanning the (conjugation-closed) span of vecs."""
    stacked = np.vstack([vecs.real.T, vecs.imag.T])
    _, _, vt = np.linalg.svd(stacked)
    return vt[:k]


def projection_rows(system: SkewGradientSystem, c: float):
    """Rows annihilating the unstable (left end) and stable (right end) spaces."""
    n = system.n
    A = rest_matrix(system, c)
    w, vl = _eigen_split(A.T)
    left = _real_rows(vl[:, :n], n)   # left eigvecs of stable eigenvalues
    right = _real_rows(vl[:, n:], n)  # left eigvecs of unstable eigenvalues
    return left, right


def decay_rates(system: SkewGradientSystem, c: float):
    """(slowest growth rate at -inf, slowest decay rate at +inf), both positive."""
    w = np.sort(np.linalg.eigvals(rest_matrix(system, c)).real)
    n = system.n
    return float(w[n]), float(-w[n - 1])


# ---------------------------------------------------------------- guesses

def _branches(v: float, a: float) -> np.ndarray:
    r = np.roots([-1.0, 1.0 + a, -a, -v])
    return np.sort(r.real[np.abs(r.imag) < 1e-9])


def singular_guess(params: FHNParameters, L: float | None = None,
                   front_offset: float = 40.0, spacing: float = 0.05) -> InitialGuess:
    """Fast-slow guess: front, excited plateau, back and slow recovery tail."""
    params.validate()
    a, eps, gam = params.a, params.eps, params.gamma
    c0 = -(1.0 - 2.0 * a) / np.sqrt(2.0)
    knee = (2.0 - a) / 3.0
    vstar = knee * (1.0 - knee) * (knee - a)
    ds = 0.05
    v, plateau = 0.0, 0.0
    while v < vstar:
        v += ds * eps * (_branches(v, a)[-1] - gam * v) / abs(c0)
        plateau += ds
    if L is None:
        L = 0.5 * (front_offset + plateau + 900.0)
    zf = -L + front_offset
    zb = zf + plateau
    m = int(round(2 * L / spacing)) + 1
    z = np.linspace(-L, L, m)
    vs = np.zeros(m)
    up = np.zeros(m)
    lo = np.zeros(m)
    vv = 0.0
    for k in range(m):
        if k:
            h = z[k] - z[k - 1]
            if zf < z[k] <= zb:
                vv += h * eps * (_branches(vv, a)[-1] - gam * vv) / abs(c0)
            elif z[k] > zb:
                vv += h * eps * (_branches(vv, a)[0] - gam * vv) / abs(c0)
        br = _branches(vv, a)
        vs[k], up[k], lo[k] = vv, br[-1], br[0]
    width = 2.0 * np.sqrt(2.0)
    wf = 0.5 * (1.0 + np.tanh((z - zf) / width))
    wb = 0.5 * (1.0 - np.tanh((z - zb) / width))
    lo_part = np.where(z > zf, lo, 0.0)
    u = wf * (lo_part + (up - lo_part) * wb)
    vs = np.where(z < zf, 0.0, vs)
    spl = CubicSpline(z, np.vstack([u, vs]), axis=1)
    du = spl(z, 1)
    S = np.array([1.0, eps])
    values = np.vstack([u, vs, du[0] / S[0], du[1] / S[1]]).T
    return InitialGuess(z, values, float(c0))


def standing_guess(a: float, L: float | None = None, spacing: float = 0.05,
                   tail_tol: float = 1e-8) -> InitialGuess:
    """Symmetric sech^2 bump (derivative of a tanh layer) with zero speed."""
    k = np.sqrt(a)
    amp = 3.0 * a / (2.0 * (1.0 + a))
    if L is None:
        L = np.log(40.0 * amp / tail_tol) / k
    m = int(round(2 * L / spacing)) + 1
    z = np.linspace(-L, L, m)
    u = amp / np.cosh(0.5 * k * z) ** 2
    du = -amp * k * np.tanh(0.5 * k * z) / np.cosh(0.5 * k * z) ** 2
    return InitialGuess(z, np.vstack([u, du]).T, 0.0)


# ---------------------------------------------------------------- solver

def _collocate(system, reference, z0, y0, c0, tol, max_nodes):
    n2 = 2 * system.n
    ref_d = reference.derivative()

    def rhs(z, y, p):
        core = tw_rhs(system, p[0], y[:n2])
        phase = np.sum(ref_d(z) * (y[:n2] - reference(z)), axis=0)
        return np.vstack([core, phase])

    def bc(ya, yb, p):
        lr, rr = projection_rows(system, p[0])
        return np.concatenate([lr @ ya[:n2], rr @ yb[:n2], [ya[n2], yb[n2]]])

    y_init = np.vstack([y0, np.zeros(z0.size)])
    sol = solve_bvp(rhs, bc, z0, y_init, p=[c0], tol=tol, max_nodes=max_nodes)
    return sol


def _extend(system, c, z, y, new_L, step=0.5):
    """Append the linearized asymptotic tails on [-new_L, -L) and (L, new_L]."""
    n = system.n
    A = rest_matrix(system, c)
    w, vr = _eigen_split(A)
    L = z[-1]
    zr = np.arange(L + step, new_L + 0.5 * step, step)
    if zr.size == 0:
        return z, y
    zr[-1] = new_L
    cr = np.linalg.solve(vr, y[:, -1].astype(complex))
    cr[n:] = 0.0
    cl = np.linalg.solve(vr, y[:, 0].astype(complex))
    cl[:n] = 0.0
    yr = np.real(vr @ (cr[:, None] * np.exp(np.outer(w, zr - L))))
    zl = -zr[::-1]
    yl = np.real(vr @ (cl[:, None] * np.exp(np.outer(w, zl - z[0]))))
    return np.concatenate([zl, z, zr]), np.hstack([yl, y, yr])


def solve_wave(system: SkewGradientSystem, guess: InitialGuess,
               config: WaveConfig | None = None) -> WaveProfile:
    cfg = config or WaveConfig()
    require_turing(system)
    n2 = 2 * system.n
    gz = np.asarray(guess.grid, dtype=float)
    gy = np.asarray(guess.values, dtype=float).T
    if np.max(np.abs(gy)) < 1e-12:
        raise NonConvergence("guess is the rest state; the phase condition cannot pin a pulse")
    stride = max(1, int(round(cfg.start_spacing / np.mean(np.diff(gz)))))
    idx = np.unique(np.r_[np.arange(0, gz.size, stride), gz.size - 1])
    reference = CubicSpline(gz, gy, axis=1)
    z0, y0, c = gz[idx], gy[:, idx], guess.c_guess

    for attempt in range(cfg.max_extensions + 1):
        # a loose first pass, then the target tolerance from the converged iterate
        for tol in ((max(cfg.tol, 1e-6), cfg.tol) if attempt == 0 else (cfg.tol,)):
            sol = _collocate(system, reference, z0, y0, c, tol, cfg.max_nodes)
            if sol.status != 0:
                raise NonConvergence(f"collocation failed: {sol.message}",
                                     nodes=int(sol.x.size))
            z0, y0, c = sol.x, sol.y[:n2], float(sol.p[0])
        tails = (float(np.linalg.norm(y0[:, 0])), float(np.linalg.norm(y0[:, -1])))
        if max(tails) < cfg.tail_tol:
            break
        if not cfg.auto_extend or attempt == cfg.max_extensions:
            raise TailTooFat(f"tail norms {tails} exceed {cfg.tail_tol}; increase L",
                             tail_norms=tails, L=float(z0[-1]))
        grow, decay = decay_rates(system, c)
        need = [np.log(t / (0.2 * cfg.tail_tol)) / r if t > 0.2 * cfg.tail_tol else 0.0
                for t, r in zip(tails, (grow, decay))]
        new_L = z0[-1] + max(need)
        z0, y0 = _extend(system, c, z0, y0, new_L)
        reference = CubicSpline(z0, y0, axis=1)

    residual = float(np.max(sol.rms_residuals))
    return WaveProfile(system, c, z0.copy(), y0.T.copy(), residual, tails, tol=cfg.tol)

