"""Skew-gradient reaction-diffusion systems u_t = u_xx + QSf(u).

Nonlinearities are closures acting column-wise: ``f(U)`` takes an array of
shape (n, ...) and returns the same shape, ``df(U)`` returns (n, n, ...).
"""
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidParameters, TuringViolated


@dataclass(frozen=True)
class FHNParameters:
    a: float = 0.1
    eps: float = 0.001
    gamma: float = 1.0

    def validate(self):
        if not 0.0 < self.a < 0.5:
            raise InvalidParameters(f"a must lie in (0, 1/2), got {self.a}")
        if not self.eps > 0.0:
            raise InvalidParameters(f"eps must be positive, got {self.eps}")
        if not self.gamma > 0.0:
            raise InvalidParameters(f"gamma must be positive, got {self.gamma}")


@dataclass(frozen=True)
class SkewGradientSystem:
    n: int
    S: np.ndarray
    Q: np.ndarray
    f: Callable = field(repr=False, compare=False)
    df: Callable = field(repr=False, compare=False)
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        S = np.asarray(self.S, dtype=float)
        Q = np.asarray(self.Q, dtype=float)
        if S.shape != (self.n,) or Q.shape != (self.n,):
            raise InvalidParameters("S and Q must be length-n diagonals")
        if np.any(S <= 0):
            raise InvalidParameters("S entries must be positive")
        if not np.all(np.isin(Q, (-1.0, 1.0))):
            raise InvalidParameters("Q entries must be +1 or -1")
        S.setflags(write=False)
        Q.setflags(write=False)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "Q", Q)

    def QS_df0(self) -> np.ndarray:
        return (self.Q * self.S)[:, None] * self.df(np.zeros(self.n))

    def describe(self) -> dict:
        return {"name": self.name, **self.params}


def _cubic(a):
    def g(u):
        return u * (1.0 - u) * (u - a)

    def dg(u):
        return -3.0 * u * u + 2.0 * (1.0 + a) * u - a

    return g, dg


def make_fhn(params: FHNParameters) -> SkewGradientSystem:
    params.validate()
    a, eps, gam = params.a, params.eps, params.gamma
    g, dg = _cubic(a)

    def f(U):
        U = np.asarray(U, dtype=float)
        u, v = U[0], U[1]
        return np.stack([g(u) - v, -u + gam * v])

    def df(U):
        U = np.asarray(U, dtype=float)
        u = U[0]
        one = np.ones_like(u)
        return np.array([[dg(u), -one], [-one, gam * one]])

    return SkewGradientSystem(2, np.array([1.0, eps]), np.array([1.0, -1.0]), f, df,
                              name="fhn", params={"a": a, "eps": eps, "gamma": gam})


def make_scalar_bistable(a: float) -> SkewGradientSystem:
    if not 0.0 < a < 0.5:
        raise InvalidParameters(f"a must lie in (0, 1/2), got {a}")
    g, dg = _cubic(a)

    def f(U):
        U = np.asarray(U, dtype=float)
        return g(U[0])[None, ...] if np.ndim(U) > 1 else np.array([g(U[0])])

    def df(U):
        U = np.asarray(U, dtype=float)
        return dg(U[0])[None, None, ...] if np.ndim(U) > 1 else np.array([[dg(U[0])]])

    return SkewGradientSystem(1, np.array([1.0]), np.array([1.0]), f, df,
                              name="scalar", params={"a": a})


@dataclass(frozen=True)
class SpectralBound:
    nu: np.ndarray
    beta: float
    ok: bool


def turing_check(system: SkewGradientSystem) -> SpectralBound:
    nu = np.linalg.eigvals(system.QS_df0()).astype(complex)
    nu = nu[np.lexsort((nu.imag, nu.real))]
    top = float(np.max(nu.real))
    ok = top < 0.0
    beta = top / 2.0 if ok else top + abs(top) / 2.0
    return SpectralBound(nu, beta, ok)


def require_turing(system: SkewGradientSystem) -> SpectralBound:
    bound = turing_check(system)
    if not bound.ok:
        raise TuringViolated(f"QS f'(0) has eigenvalues with Re >= 0: {bound.nu}")
    return bound


def system_from_dict(d: dict) -> SkewGradientSystem:
    name = d.get("name")
    if name == "fhn":
        return make_fhn(FHNParameters(float(d["a"]), float(d["eps"]), float(d["gamma"])))
    if name == "scalar":
        return make_scalar_bistable(float(d["a"]))
    raise InvalidParameters(f"unknown system {name!r}")
