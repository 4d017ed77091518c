"""Conjugate points, crossing forms and the four-sided index box.

The box lives in the (lambda, z) rectangle [0, lambda_max] x [-L, tau]:

    side 1: z from -L to tau at lambda = 0, unstable bundle against E^s(0, tau)
    side 2: lambda from 0 to lambda_max, unstable against stable bundle
    side 3: z from tau back to -L at lambda_max (shelf, no crossings)
    side 4: lambda from lambda_max back to 0 at z = -L (no crossings)

Endpoint rules: a crossing at the start of a segment contributes -n_minus,
one at the end contributes +n_plus, interior crossings n_plus - n_minus.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import serialization
from .bundle_tracker import BundleCache, _track, build_mesh, frame_at
from .errors import (ClusteredRoots, IrregularCrossing, NoValidTau, RankAmbiguity,
                     ShelfNotFound, ShelfViolated)
from .linearization import asymptotic_system, coefficient_matrix, lambda_derivative
from .symplectic_core import SignatureResult, detection, intersection_basis, signature, structure_matrix

SAFETY = 1e-4
FORM_TOL = 1e-13
Z_TOL = 1e-8
LAMBDA_TOL = 1e-10
CLUSTER = 1e-6


@dataclass
class CrossingRecord:
    kind: str              # "z" or "lambda"
    location: float
    dim: int
    form: np.ndarray
    sig: SignatureResult
    contribution: int
    position: str          # "interior", "left" or "right"
    segment: int = 0
    info: dict = field(default_factory=dict)

    @property
    def regular(self) -> bool:
        return self.sig.n_zero == 0

    def to_dict(self) -> dict:
        return {"kind": f"{self.kind}-crossing", "segment": self.segment, "position": self.position,
                "location": self.location, "dim": self.dim, "form": np.asarray(self.form).tolist(),
                "n_plus": self.sig.n_plus, "n_minus": self.sig.n_minus, "n_zero": self.sig.n_zero,
                "contribution": self.contribution, **self.info}


def contribution(sig: SignatureResult, position: str) -> int:
    if position == "left":
        return -sig.n_minus
    if position == "right":
        return sig.n_plus
    return sig.n_plus - sig.n_minus


def _record(kind, location, form, position, segment=0, tol=FORM_TOL, **info) -> CrossingRecord:
    form = np.atleast_2d(0.5 * (form + np.transpose(form)))
    sig = signature(form, tol)
    return CrossingRecord(kind, float(location), form.shape[0], form, sig,
                          contribution(sig, position), position, segment, info)


@dataclass
class BoxResult:
    tau: float
    lambda_max: float
    mu: list
    crossings: list
    sum_ok: bool
    maslov: int
    certificates: dict = field(default_factory=dict)
    corner: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"tau": self.tau, "lambda_max": self.lambda_max, "mu": list(self.mu),
                "maslov": self.maslov, "sum_ok": self.sum_ok,
                "crossings": [c.to_dict() for c in self.crossings],
                "certificates": self.certificates, "corner": self.corner}

    def to_json(self) -> str:
        return serialization.dumps(self.to_dict())


# ---------------------------------------------------------------- helpers

def _pair_det(U: np.ndarray, frames: np.ndarray, J: np.ndarray) -> np.ndarray:
    """detection(U, frames[k]) for every k; all frames orthonormal."""
    M = np.einsum("ia,ij,kjb->kab", U, J, frames)
    return np.linalg.det(M)


def _orthonormal_columns(X: np.ndarray) -> np.ndarray:
    return np.linalg.qr(X)[0]


def _bisect(f, a: float, b: float, fa: float, tol: float) -> float:
    while b - a > tol:
        m = 0.5 * (a + b)
        fm = f(m)
        if fm == 0:
            return m
        if np.sign(fm) == np.sign(fa):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def _check_clusters(locs: list, what: str):
    locs = sorted(locs)
    for x, y in zip(locs, locs[1:]):
        if y - x < CLUSTER:
            raise ClusteredRoots(f"{what} roots {x} and {y} closer than {CLUSTER}", roots=[x, y])


# ---------------------------------------------------------------- shelf and tau

@dataclass
class ShelfCertificate:
    lambda_max: float
    margin: float
    fine_margin: float
    doublings: int


def lambda_bound(system, profile) -> float:
    """c^2/4 + max_z |QS f'(u(z))|_2 + 1."""
    n = system.n
    U = profile.values[:, :n].T
    D = system.df(U)
    QS = (system.Q * system.S)[:, None, None] * D
    norms = np.linalg.norm(np.moveaxis(QS, -1, 0), ord=2, axis=(1, 2))
    return profile.c ** 2 / 4 + float(norms.max()) + 1.0


def _shelf_margin(system, profile, lam: float, mesh) -> float:
    tu = _track(system, mesh, lam, "unstable", True)
    S = asymptotic_system(system, profile.c, lam).S_frame.columns
    J = structure_matrix(system.Q)
    return float(np.min(np.abs(_pair_det(_orthonormal_columns(S), tu.frames, J))))


def select_lambda_max(system, profile, threshold: float = SAFETY, max_doublings: int = 10,
                      verify: bool = True) -> ShelfCertificate:
    lam = lambda_bound(system, profile)
    for k in range(max_doublings + 1):
        margin = _shelf_margin(system, profile, lam, build_mesh(profile, lam))
        if margin > threshold:
            fine = np.nan
            if verify:
                fine = _shelf_margin(system, profile, lam,
                                     build_mesh(profile, lam, h0=0.01, hmax=0.25, kappa=1.5))
            return ShelfCertificate(lam, margin, fine, k)
        lam *= 2.0
    raise ShelfNotFound(f"no shelf up to lambda={lam / 2}", lam=lam / 2)


def transversality_table(cache: BundleCache, lambdas) -> np.ndarray:
    """|detection(U(lambda), E^s(lambda, z_k))| for each lambda (rows) and node (columns)."""
    J = structure_matrix(cache.system.Q)
    rows = []
    for lam in lambdas:
        U = asymptotic_system(cache.system, cache.profile.c, float(lam)).U_frame.columns
        rows.append(np.abs(_pair_det(_orthonormal_columns(U), cache.stable(lam).frames, J)))
        if lam != 0:
            cache.forget()
    return np.array(rows)


def select_tau(cache: BundleCache, lambdas=None, table: np.ndarray | None = None,
               threshold: float = SAFETY, tail_tol: float = 1e-6) -> int:
    """Index of the smallest node tau with transversality beyond tau for every lambda
    and a wave tail below ``tail_tol`` from tau on."""
    if table is None:
        table = transversality_table(cache, lambdas)
    z = cache.grid
    tail = np.linalg.norm(cache.profile(z), axis=1)
    ok = np.all(np.abs(table) > threshold, axis=0) & (tail < tail_tol)
    # suffix: every node from k to the end must pass
    good = np.flip(np.logical_and.accumulate(np.flip(ok)))
    # keep room for the endpoint and stay right of the pulse
    good[-2:] = False
    good &= z > z[cache.matching()[0]]
    idx = np.flatnonzero(good)
    if idx.size == 0:
        raise NoValidTau("no tau with a transverse stable bundle and a thin tail; increase L",
                         L=float(z[-1]))
    return int(idx[0])


# ---------------------------------------------------------------- z-crossings

def z_crossings(cache: BundleCache, tau_index: int) -> list:
    """Crossings of E^u(0, z), z in [-L, tau], with the fixed plane E^s(0, tau).

    The unstable bundle is the translation-anchored track.  Interior roots come
    from sign changes and small local minima of the detection function, refined
    by bisection; the final interval is the endpoint crossing, which always
    contains the wave derivative.
    """
    profile, system = cache.profile, cache.system
    J = structure_matrix(system.Q)
    tu = cache.anchored()
    V = cache.stable(0.0).frames[tau_index]
    z = cache.grid
    d = _pair_det(V, tu.frames[: tau_index + 1], J)
    dfun = lambda s: detection(J, 0.0, 0.0, V, frame_at(tu, profile, s))
    roots = []
    last = tau_index - 1  # intervals [z_k, z_k+1] with k < last are interior
    for k in range(last):
        if d[k] == 0.0:
            roots.append(float(z[k]))
        elif np.sign(d[k]) != np.sign(d[k + 1]) and d[k + 1] != 0.0:
            roots.append(_bisect(dfun, z[k], z[k + 1], d[k], Z_TOL))
    scale = np.max(np.abs(d))
    ad = np.abs(d)
    for k in range(1, last):
        if ad[k] < ad[k - 1] and ad[k] < ad[k + 1] and ad[k] < 1e-3 * scale \
                and np.sign(d[k - 1]) == np.sign(d[k + 1]) == np.sign(d[k]):
            res = minimize_scalar(lambda s: abs(dfun(s)), bounds=(z[k - 1], z[k + 1]),
                                  method="bounded", options={"xatol": Z_TOL})
            if res.fun < 1e-8:
                roots.append(float(res.x))
    _check_clusters(roots, "z")
    out = []
    for zs in sorted(roots):
        W = frame_at(tu, profile, zs)
        try:
            basis = intersection_basis(V, W)
        except RankAmbiguity:
            basis = intersection_basis(V, W, tol=1e-6)
        if not basis:
            continue
        Z = np.column_stack(basis)
        A = coefficient_matrix(system, profile, 0.0, zs)
        out.append(_record("z", zs, Z.T @ J @ A @ Z, "interior", 1))
    out.append(endpoint_crossing(cache, tau_index))
    return out


def endpoint_crossing(cache: BundleCache, tau_index: int) -> CrossingRecord:
    """Crossing at z = tau, where the translation mode lies in both bundles.

    The intersection vector is taken inside the tracked stable plane; the form
    there is of the size of the wave tail cubed, so it is also evaluated on the
    whole stable plane as a definiteness certificate.
    """
    profile, system = cache.profile, cache.system
    J = structure_matrix(system.Q)
    V = cache.stable(0.0).frames[tau_index]
    W = cache.anchored().frames[tau_index]
    tau = float(cache.grid[tau_index])
    try:
        basis = intersection_basis(V, W, tol=1e-6)
    except RankAmbiguity:
        basis = []
    if not basis:
        raise IrregularCrossing(f"no intersection at tau={tau}; the wave derivative is missing",
                                tau=tau)
    Z = np.column_stack(basis)
    A = coefficient_matrix(system, profile, 0.0, tau)
    G = J @ A
    G = 0.5 * (G + G.T)
    plane = np.linalg.eigvalsh(V.T @ G @ V)
    phi1 = profile(tau, 1)
    align = float(abs(Z[:, 0] @ phi1) / np.linalg.norm(phi1))
    return _record("z", tau, Z.T @ G @ Z, "right", 1, stable_plane_form=plane.tolist(),
                   alignment=align)


def maslov_of_wave(crossings: list) -> int:
    bad = [c for c in crossings if not c.regular]
    if bad:
        raise IrregularCrossing(f"degenerate crossing form at {bad[0].location}",
                                locations=[c.location for c in bad])
    return int(sum(c.contribution for c in crossings))


# ---------------------------------------------------------------- lambda-crossings

def _trapezoid_weights(z: np.ndarray) -> np.ndarray:
    h = np.diff(z)
    w = np.zeros_like(z)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def eigenfunction(cache: BundleCache, lam: float, zeta: np.ndarray, k: int | None = None):
    """Solution through zeta at node k, as unit directions and log amplitudes on the grid.

    Left of k it is carried by the unstable track, right of k by the stable track,
    so it decays in both directions.  Returns (directions (m, 2n), log_scale (m,)).
    """
    k = cache.matching()[0] if k is None else k
    tu, ts = cache.unstable(lam), cache.stable(lam)
    bu, su = tu.coefficients(tu.frames[k].T @ zeta, start=k)
    bs, ss = ts.coefficients(ts.frames[k].T @ zeta, start=k)
    vu = np.einsum("kij,kj->ki", tu.frames, bu)
    vs = np.einsum("kij,kj->ki", ts.frames, bs)
    v = np.where((np.arange(cache.grid.size) <= k)[:, None], vu, vs)
    scale = np.where(np.arange(cache.grid.size) <= k, su, ss)
    nrm = np.linalg.norm(v, axis=1)
    return v / nrm[:, None], scale + np.log(nrm)


def eigenfunction_gram(cache: BundleCache, lam: float, Z: np.ndarray):
    """Normalized cross-integrals of e^{cz} w(P_i, A_lambda P_j) over the grid.

    Each P_i passes through column i of Z at the matching node.  Returns the
    matrix for P_i scaled to unit weighted norm, and log of the weighted norms
    squared of the unscaled P_i.
    """
    system = cache.system
    z = cache.grid
    w = _trapezoid_weights(z)
    c = cache.profile.c
    J = structure_matrix(system.Q)
    K = J @ lambda_derivative(system)
    dirs, logs = [], []
    for i in range(Z.shape[1]):
        v, s = eigenfunction(cache, lam, Z[:, i])
        dirs.append(v)
        logs.append(s)
    logN = []
    for v, s in zip(dirs, logs):
        e = c * z + 2 * s
        top = e.max()
        logN.append(top + np.log(np.sum(w * np.exp(e - top))))
    m = len(dirs)
    F = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            vals = np.einsum("ki,ij,kj->k", dirs[i], K, dirs[j])
            e = c * z + logs[i] + logs[j] - 0.5 * (logN[i] + logN[j])
            F[i, j] = np.sum(w * np.exp(e) * vals)
    return 0.5 * (F + F.T), np.array(logN)


def lambda_crossing_form(cache: BundleCache, lam_star: float, position: str = "interior",
                         tol: float = 1e-8) -> CrossingRecord:
    k = cache.matching()[0]
    V = cache.stable(lam_star).frames[k]
    W = cache.unstable(lam_star).frames[k]
    try:
        basis = intersection_basis(V, W, tol=tol)
    except RankAmbiguity:
        basis = intersection_basis(V, W, tol=10 * tol)
    if not basis:
        raise IrregularCrossing(f"no intersection at lambda={lam_star}", lam=lam_star)
    Z = np.column_stack(basis)
    F, logN = eigenfunction_gram(cache, lam_star, Z)
    return _record("lambda", lam_star, F, position, 2, tol=1e-10, log_norms=logN.tolist())


def matching_detection(cache: BundleCache, lam: float, keep: bool = False) -> float:
    k = cache.matching()[0]
    J = structure_matrix(cache.system.Q)
    d = detection(J, 0.0, 0.0, cache.stable(lam).frames[k], cache.unstable(lam).frames[k])
    if not keep and lam != 0:
        cache.forget()
    return d


def lambda_roots(cache: BundleCache, lambdas: np.ndarray, values: np.ndarray) -> list:
    """Roots of the matching-point detection on (lambdas[0], lambdas[-1]].

    The first interval is skipped: lambda = 0 is always a root (translation), and
    its roundoff sign is meaningless.
    """
    f = lambda s: matching_detection(cache, s)
    roots = []
    for i in range(1, lambdas.size - 1):
        a, b = values[i], values[i + 1]
        if a == 0.0:
            roots.append(float(lambdas[i]))
        elif np.sign(a) != np.sign(b) and b != 0.0:
            roots.append(_bisect(f, lambdas[i], lambdas[i + 1], a, LAMBDA_TOL))
    av = np.abs(values)
    scale = av.max()
    for i in range(2, lambdas.size - 1):
        if av[i] < av[i - 1] and av[i] < av[i + 1] and av[i] < 1e-3 * scale \
                and np.sign(values[i - 1]) == np.sign(values[i]) == np.sign(values[i + 1]):
            res = minimize_scalar(lambda s: abs(f(s)), bounds=(lambdas[i - 1], lambdas[i + 1]),
                                  method="bounded", options={"xatol": LAMBDA_TOL})
            if res.fun < 1e-8:
                roots.append(float(res.x))
    _check_clusters(roots, "lambda")
    return sorted(roots)


# ---------------------------------------------------------------- box

def maslov_box(system, profile, lambda_max: float | None = None, n_lambda: int = 201,
               tau_index: int | None = None, cache: BundleCache | None = None) -> BoxResult:
    certs = {}
    if lambda_max is None:
        shelf = select_lambda_max(system, profile)
        lambda_max = shelf.lambda_max
        certs["shelf_margin"] = shelf.margin
        certs["shelf_margin_fine"] = shelf.fine_margin
    cache = cache or BundleCache(system, profile, lambda_max)
    J = structure_matrix(system.Q)
    k_m, match_err = cache.matching()
    certs["matching_z"] = float(cache.grid[k_m])
    certs["matching_error"] = match_err

    lambdas = np.linspace(0.0, lambda_max, n_lambda)
    table, dvals = [], []
    for lam in lambdas:
        U = asymptotic_system(system, profile.c, float(lam)).U_frame.columns
        table.append(_pair_det(_orthonormal_columns(U), cache.stable(lam).frames, J))
        dvals.append(matching_detection(cache, lam, keep=True))
        if lam != 0:
            cache.forget()
    table, dvals = np.array(table), np.array(dvals)
    if tau_index is None:
        tau_index = select_tau(cache, table=table)
    tau = float(cache.grid[tau_index])

    # side 1
    side1 = z_crossings(cache, tau_index)
    mu1 = maslov_of_wave(side1)
    certs["side1_left_transversality"] = float(abs(table[0, tau_index]))
    if abs(table[0, tau_index]) <= SAFETY:
        raise ShelfViolated("U(0) is not transverse to E^s(0, tau)", value=float(table[0, tau_index]))

    # side 2
    certs["translation_detection"] = float(dvals[0])
    side2 = [lambda_crossing_form(cache, 0.0, "left")]
    for lam in lambda_roots(cache, lambdas, dvals):
        side2.append(lambda_crossing_form(cache, lam, "interior"))
        cache.forget()
    for c in side2:
        c.segment = 2
    mu2 = int(sum(c.contribution for c in side2))

    # side 3: lambda_max, z in [-L, tau] against E^s(lambda_max, tau)
    tu = cache.unstable(lambda_max)
    V = cache.stable(lambda_max).frames[tau_index]
    d3 = _pair_det(V, tu.frames[: tau_index + 1], J)
    m3 = float(np.min(np.abs(d3)))
    certs["side3_margin"] = m3
    cache.forget()
    # side 4: z = -L, lambda in [0, lambda_max]
    d4 = table[:, tau_index]
    m4 = float(np.min(np.abs(d4)))
    certs["side4_margin"] = m4
    # a sign change between samples is a crossing the margin alone would miss
    flips3 = int(np.sum(np.sign(d3[1:]) != np.sign(d3[:-1])))
    flips4 = int(np.sum(np.sign(d4[1:]) != np.sign(d4[:-1])))
    if m3 <= SAFETY or flips3:
        raise ShelfViolated(f"crossing on the lambda_max side (margin {m3:.3e}, "
                            f"{flips3} sign changes)", margin=m3, sign_changes=flips3)
    if m4 <= SAFETY or flips4:
        raise ShelfViolated(f"crossing on the z = -L side (margin {m4:.3e}, "
                            f"{flips4} sign changes)", margin=m4, sign_changes=flips4)
    mu = [mu1, mu2, 0, 0]
    corner = {"lambda": 0.0, "z": tau, "side1_contribution": side1[-1].contribution,
              "side2_contribution": side2[0].contribution}
    return BoxResult(tau, float(lambda_max), mu, side1 + side2, sum(mu) == 0, mu1, certs, corner)
