"""Evans function from the tracked bundles, real roots, multiplicities and winding numbers.

Raw solutions are frame @ G with log det G accumulated by the tracker, so

    D(lambda) = det(Q) e^{n c z} det G_s det G_u det(X_s^T J X_u)

is evaluated in logs.  g = e^{n c z} det G_s det G_u is the local scale; D / g is
bounded by one in magnitude and is what the root and noise thresholds refer to.
"""
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from numba import njit
from scipy.optimize import minimize_scalar

from .bundle_tracker import BundleCache, _expm
from .linearization import analytic_seeds
from .errors import BoundaryRoot, ClusteredRoots, NoiseFloor, NonConvergentRefinement, RankAmbiguity, SpreadTooLarge
from .maslov_index import eigenfunction_gram
from .symplectic_core import intersection_basis, structure_matrix

ROOT_TOL = 1e-10
NODE_ROOT = 1e-8
SPREAD_TOL = 1e-6


@dataclass
class EvansSample:
    lam: complex
    D: complex
    z_spread: float
    log_scale: complex       # log g at the matching node
    normalized: complex      # D / g

    def row(self) -> list:
        lam, D = complex(self.lam), complex(self.D)
        return [lam.real, lam.imag, D.real, D.imag, self.z_spread]


@dataclass
class RootRecord:
    lambda_star: float
    dprime: float
    ddprime: float
    order: int
    geometric_dim: int
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"lambda_star": self.lambda_star, "dprime": self.dprime, "ddprime": self.ddprime,
                "order": self.order, "geometric_dim": self.geometric_dim, **self.info}


def _check_nodes(cache: BundleCache, offset: float):
    k = cache.matching()[0]
    z = cache.grid
    lo = int(np.argmin(np.abs(z - (z[k] - offset))))
    hi = int(np.argmin(np.abs(z - (z[k] + offset))))
    return [k, lo, hi]


def _local(cache: BundleCache, lam, k: int, plain: bool):
    """(log g, D / g) at node k."""
    system = cache.system
    ts, tu = cache.stable(lam), cache.unstable(lam)
    Xs, Xu = ts.frames[k], tu.frames[k]
    log_g = system.n * cache.profile.c * cache.grid[k] + ts.logdet(k) + tu.logdet(k)
    if plain:
        val = np.linalg.det(np.hstack([Xs, Xu]))
    else:
        detQ = float(np.prod(system.Q))
        val = detQ * np.linalg.det(Xs.T @ structure_matrix(system.Q) @ Xu)
    return log_g, val


def _exp(log_g, val):
    with np.errstate(over="ignore"):
        return np.exp(log_g) * val


def evans(cache: BundleCache, lam, offset: float = 1.0, plain: bool | None = None,
          strict: bool = False, keep: bool = False) -> EvansSample:
    """D(lambda) at the matching node, with its spread over two neighbouring nodes.

    Real lambda uses the pairing determinant; complex lambda (or ``plain``) the
    plain determinant of the stacked frames.  The spread is relative to |D|, or
    to the local scale when |D| is below 1e-6 of it (near a root).
    """
    lam = complex(lam)
    lam = lam.real if lam.imag == 0 else lam
    plain = isinstance(lam, complex) if plain is None else plain
    nodes = _check_nodes(cache, offset)
    vals = [_local(cache, lam, k, plain) for k in nodes]
    log0, v0 = vals[0]
    # every value expressed relative to the scale at the matching node
    rel = np.array([np.exp(lg - log0) * v for lg, v in vals])
    denom = max(np.max(np.abs(rel)), 1e-6)
    spread = float(np.max(np.abs(rel - rel[0])) / denom)
    if not keep and lam != 0:
        cache.forget()
    if strict and spread > SPREAD_TOL:
        raise SpreadTooLarge(f"D varies by {spread:.2e} across check points at lambda={lam}",
                             spread=spread)
    D = _exp(log0, v0)
    if np.isrealobj(D) or not isinstance(lam, complex):
        D = float(np.real(D))
    return EvansSample(lam, D, spread, log0, v0)


def _sign(cache, lam) -> float:
    return float(np.sign(np.real(evans(cache, lam).normalized)))


def real_roots(cache: BundleCache, interval, n: int = 201, with_multiplicity: bool = True):
    """Real roots of D on ``interval``; returns (roots, samples)."""
    a, b = interval
    if not b > a:
        return [], []
    lams = np.linspace(a, b, n)
    samples = [evans(cache, lam) for lam in lams]
    v = np.array([float(np.real(s.normalized)) for s in samples])
    av = np.abs(v)
    at_node = av < NODE_ROOT
    found = [float(lams[i]) for i in np.flatnonzero(at_node)]
    f = lambda s: float(np.real(evans(cache, s).normalized))
    for i in range(n - 1):
        if at_node[i] or at_node[i + 1] or np.sign(v[i]) == np.sign(v[i + 1]):
            continue
        lo, hi, flo = lams[i], lams[i + 1], v[i]
        while hi - lo > ROOT_TOL:
            mid = 0.5 * (lo + hi)
            fm = f(mid)
            if np.sign(fm) == np.sign(flo):
                lo, flo = mid, fm
            else:
                hi = mid
        found.append(0.5 * (lo + hi))
    for i in range(1, n - 1):
        if av[i] < av[i - 1] and av[i] < av[i + 1] and not at_node[i] \
                and np.sign(v[i - 1]) == np.sign(v[i]) == np.sign(v[i + 1]):
            res = minimize_scalar(lambda s: abs(f(s)), bounds=(lams[i - 1], lams[i + 1]),
                                  method="bounded", options={"xatol": ROOT_TOL})
            if res.fun < NODE_ROOT:
                found.append(float(res.x))
    found.sort()
    for x, y in zip(found, found[1:]):
        if y - x < 1e-6:
            raise ClusteredRoots(f"Evans roots {x} and {y} closer than 1e-6", roots=[x, y])
    roots = [multiplicity(cache, lam) if with_multiplicity else
             RootRecord(lam, np.nan, np.nan, 0, geometric_dim(cache, lam)) for lam in found]
    return roots, samples


def geometric_dim(cache: BundleCache, lam: float, tol: float = 1e-8) -> int:
    return len(_intersection(cache, lam, tol))


def _intersection(cache, lam, tol=1e-8):
    k = cache.matching()[0]
    V, W = cache.stable(lam).frames[k], cache.unstable(lam).frames[k]
    try:
        return intersection_basis(V, W, tol=tol)
    except RankAmbiguity:
        return intersection_basis(V, W, tol=100 * tol)


def _derivatives(f, x: float, h: float):
    """Central differences at steps h and h/2 combined by Richardson extrapolation."""
    f0 = f(x)
    d1, d2 = [], []
    for s in (h, h / 2):
        fp, fm = f(x + s), f(x - s)
        d1.append((fp - fm) / (2 * s))
        d2.append((fp - 2 * f0 + fm) / s ** 2)
    return (4 * d1[1] - d1[0]) / 3, (4 * d2[1] - d2[0]) / 3


def multiplicity(cache: BundleCache, lam_star: float, strict: bool = False) -> RootRecord:
    system = cache.system
    k = cache.matching()[0]
    zm = float(cache.grid[k])
    c = cache.profile.c
    detQ = float(np.prod(system.Q))
    base = evans(cache, lam_star, keep=True)
    log_ref = base.log_scale
    basis = _intersection(cache, lam_star)
    dim = len(basis)
    info = {"z_spread": base.z_spread}
    pred1 = pred2 = np.nan
    if dim:
        Z = np.column_stack(basis)
        Xs, Xu = cache.stable(lam_star).frames[k], cache.unstable(lam_star).frames[k]
        F, logN = eigenfunction_gram(cache, lam_star, Z)
        if dim == 1:
            y, x = Xs.T @ Z[:, 0], Xu.T @ Z[:, 0]
            N = Xs.T @ structure_matrix(system.Q) @ Xu
            kappa = np.linalg.det(N + np.outer(y, x))
            pred1 = detQ * kappa * F[0, 0] * np.exp(logN[0] - c * zm)
        elif dim == system.n == 2:
            Fraw = F * np.exp(0.5 * (logN[:, None] + logN[None, :]))
            pred2 = 2 * detQ * np.exp(-2 * c * zm) * np.linalg.det(Z.T @ Xs) \
                * np.linalg.det(Z.T @ Xu) * np.linalg.det(Fraw)

    def f(lam):
        s = evans(cache, lam)
        return float(np.real(np.exp(s.log_scale - log_ref) * s.normalized))

    h = 1e-4 * max(1.0, abs(lam_star))
    d1, d2 = _derivatives(f, lam_star, h)
    noise = max(base.z_spread, 1e-12)
    floor1, floor2 = 10 * noise / h, 10 * noise / h ** 2
    info.update(floor_dprime=floor1, floor_ddprime=floor2, predicted_dprime=pred1,
                predicted_ddprime=pred2)
    if abs(d1) > floor1:
        order = 1
    elif abs(d2) > floor2:
        order = 2
    else:
        if strict:
            raise NoiseFloor(f"derivatives of D vanish at lambda={lam_star}", lam=lam_star)
        order = 3
        info["irregular"] = True
    if order == 1 and np.isfinite(pred1):
        info["dprime_mismatch"] = float(abs(d1 - pred1) / abs(d1))
    if order == 2 and np.isfinite(pred2):
        info["ddprime_mismatch"] = float(abs(d2 - pred2) / abs(d2))
    info["multiplicities_equal"] = order == dim
    cache.forget()
    # derivatives are of D / g(lambda_star), g > 0, so signs and orders are those of D
    return RootRecord(float(lam_star), float(d1), float(d2), order, dim, info)


# ---------------------------------------------------------------- exterior products

def _subsets(d: int, n: int):
    """n-subsets of range(d) in lexicographic order, and the wedge pairing signs."""
    subs = list(combinations(range(d), n))
    index = {s: i for i, s in enumerate(subs)}
    pair = np.zeros(len(subs), dtype=np.int64)
    sign = np.zeros(len(subs))
    for i, s in enumerate(subs):
        rest = tuple(k for k in range(d) if k not in s)
        perm = list(s) + list(rest)
        inv = sum(1 for a in range(d) for b in range(a + 1, d) if perm[a] > perm[b])
        pair[i] = index[rest]
        sign[i] = -1.0 if inv % 2 else 1.0
    return np.array(subs, dtype=np.int64), pair, sign


def _wedge(cols: np.ndarray, subs: np.ndarray) -> np.ndarray:
    return np.array([np.linalg.det(cols[list(s), :]) for s in subs])


@njit(cache=True)
def _compound(E, subs):
    m, n = subs.shape
    C = np.zeros((m, m), dtype=E.dtype)
    sub = np.zeros((n, n), dtype=E.dtype)
    for i in range(m):
        for j in range(m):
            for a in range(n):
                for b in range(n):
                    sub[a, b] = E[subs[i, a], subs[j, b]]
            C[i, j] = np.linalg.det(sub)
    return C


@njit(cache=True)
def _wedge_track(om0, h, alam, lam, w0, forward, shift, subs, stop):
    """Shifted exterior product of a bundle, renormalized by positive reals.

    Forward runs from node 0 to ``stop``; backward from the last node down to ``stop``.
    Returns unit wedges and accumulated log scales on all visited nodes.
    """
    m = om0.shape[0]
    W = np.zeros((m + 1, w0.shape[0]), dtype=w0.dtype)
    logs = np.zeros(m + 1)
    if forward:
        W[0] = w0
        for k in range(stop):
            E = _expm(om0[k] + (lam * h[k]) * alam)
            v = (_compound(E, subs) @ W[k]) * np.exp(-shift * h[k])
            s = np.sqrt(np.sum(np.abs(v) ** 2))
            W[k + 1] = v / s
            logs[k + 1] = logs[k] + np.log(s)
    else:
        W[m] = w0
        for k in range(m - 1, stop - 1, -1):
            E = _expm(-(om0[k] + (lam * h[k]) * alam))
            v = (_compound(E, subs) @ W[k + 1]) * np.exp(shift * h[k])
            s = np.sqrt(np.sum(np.abs(v) ** 2))
            W[k] = v / s
            logs[k] = logs[k + 1] + np.log(s)
    return W, logs


def evans_exterior(cache: BundleCache, lam, offset: float = 1.0) -> EvansSample:
    """D(lambda) from exterior products, analytic in lambda.

    With wedges shifted by the summed asymptotic exponents the weight e^{ncz}
    cancels exactly, so D = <w_s ^ w_u> carries no large phase and is directly
    suitable for argument counting.
    """
    system, mesh = cache.system, cache.mesh
    n = system.n
    lam = complex(lam)
    ms, es, mu_u, eu = analytic_seeds(system, cache.profile.c, lam)
    subs, pair, sign = _subsets(2 * n, n)
    nodes = _check_nodes(cache, offset)
    lo, hi = min(nodes), max(nodes)
    om0 = mesh.om0.astype(complex)
    alam = mesh.alam.astype(complex)
    Wu, lu = _wedge_track(om0, mesh.h, alam, lam, _wedge(eu.astype(complex), subs), True,
                          complex(np.sum(mu_u)), subs, hi)
    Ws, ls = _wedge_track(om0, mesh.h, alam, lam, _wedge(es.astype(complex), subs), False,
                          complex(np.sum(ms)), subs, lo)
    vals = []
    for k in nodes:
        v = np.sum(sign * Ws[k] * Wu[k][pair])
        vals.append((ls[k] + lu[k], v))
    log0, v0 = vals[0]
    rel = np.array([np.exp(lg - log0) * v for lg, v in vals])
    spread = float(np.max(np.abs(rel - rel[0])) / max(np.max(np.abs(rel)), 1e-6))
    return EvansSample(lam, _exp(log0, v0), spread, log0, complex(v0))


# ---------------------------------------------------------------- winding

def _log_value(cache, lam):
    s = evans_exterior(cache, lam)
    return s.log_scale, complex(s.normalized)


def winding_count(cache: BundleCache, rect, per_unit: float = 8.0, min_edge: int = 8,
                  max_samples: int = 4000) -> int:
    """Zeros of D inside the rectangle (re0, re1, im0, im1), by accumulated argument.

    A step is accepted when its argument increment is below pi/4 and the local
    rate |d log D / d lambda| times the step length is below pi/2 at both ends;
    the second condition guards against increments that wrap by a full turn.
    """
    re0, re1, im0, im1 = rect
    corners = [complex(re0, im0), complex(re1, im0), complex(re1, im1), complex(re0, im1)]
    ts = []
    for i in range(4):
        a, b = corners[i], corners[(i + 1) % 4]
        m = max(min_edge, int(np.ceil(abs(b - a) * per_unit)))
        ts.extend(a + (b - a) * np.arange(m) / m)
    pts = ts + [ts[0]]
    vals = {}

    def value(p):
        if p not in vals:
            lg, v = _log_value(cache, p)
            if abs(v) < NODE_ROOT:
                raise BoundaryRoot(f"D vanishes on the contour near {p}", point=p)
            d = 1e-6 * max(1.0, abs(p))
            lg2, v2 = _log_value(cache, p + d)
            rate = abs((lg2 - lg) + np.log(v2 / v)) / d
            vals[p] = (v, rate)
        return vals[p]

    total = 0.0
    stack = [(pts[i], pts[i + 1]) for i in range(len(pts) - 1)][::-1]
    while stack:
        p, q = stack.pop()
        (vp, rp), (vq, rq) = value(p), value(q)
        # log scales are real, so the argument sits in the unit wedge pairing
        d = float(np.angle(vq / vp))
        if abs(d) < np.pi / 4 and max(rp, rq) * abs(q - p) < np.pi / 2:
            total += d
            continue
        if len(vals) > max_samples or abs(q - p) < 1e-12:
            raise NonConvergentRefinement("argument refinement did not converge",
                                          samples=len(vals))
        mid = 0.5 * (p + q)
        stack.append((mid, q))
        stack.append((p, mid))
    count = total / (2 * np.pi)
    if abs(count - round(count)) > 0.1:
        raise NonConvergentRefinement(f"winding {count} is not close to an integer", value=count)
    return int(round(count))
