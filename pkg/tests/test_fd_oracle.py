import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wavemaslov.errors import GridTooCoarse
from wavemaslov.fd_oracle import (assemble, oracle_eigs, richardson, spectral_box, to_dict,
                                  translation_mode_error)
from wavemaslov.system_model import SkewGradientSystem


class FlatProfile:
    """Rest state on [-L, L]."""

    def __init__(self, n, L, c=0.0):
        self.n, self.L, self.c = n, L, c

    def __call__(self, z, nu=0):
        return np.zeros((np.size(z), 2 * self.n))


def zero_system(n):
    return SkewGradientSystem(n, np.ones(n), np.ones(n), lambda U: 0 * U,
                              lambda U: np.zeros((n, n) + np.shape(U)[1:]))


@pytest.mark.parametrize("M", [400, 799])
def test_dirichlet_laplacian_spectrum(M):
    L = 10.0
    op = assemble(zero_system(1), FlatProfile(1, L), "L", M=M)
    w = np.sort(np.linalg.eigvals(op.matrix.toarray()).real)[::-1]
    k = np.arange(1, M + 1)
    exact = -(4 / op.h ** 2) * np.sin(k * np.pi / (2 * (M + 1))) ** 2
    assert np.allclose(w, exact, atol=1e-9 * np.abs(exact).max())
    # the lowest modes approach the continuum values -(k pi / 2L)^2
    assert w[0] == pytest.approx(-(np.pi / (2 * L)) ** 2, rel=1e-4)


def test_weighted_coupling_blocks(fhn_system):
    eps = fhn_system.params["eps"]
    op = assemble(fhn_system, FlatProfile(2, 50.0, -0.5), "Lc", M=400)
    V = op.potential[0]
    assert V[0, 1] == pytest.approx(-np.sqrt(eps))
    assert V[1, 0] == pytest.approx(np.sqrt(eps))
    assert V[0, 0] == pytest.approx(-0.1 - 0.0625)


def test_node_major_ordering(fhn_system):
    op = assemble(fhn_system, FlatProfile(2, 50.0, -0.5), "L", M=400)
    A = op.matrix.toarray()
    # coupling between components only within a node block
    assert A[0, 1] != 0 and A[0, 3] == 0 and A[0, 2] != 0


def test_coarse_grid_rejected(fhn_system):
    with pytest.raises(GridTooCoarse):
        assemble(fhn_system, FlatProfile(2, 50.0), "L", M=100)


@given(e=st.floats(0.1, 10.0), p=st.floats(1.5, 3.0))
@settings(max_examples=30, deadline=None)
def test_richardson_recovers_limit_and_order(e, p):
    vals = [1.0 + e * 2.0 ** (-p * k) for k in range(3)]
    ext, observed = richardson(vals, order=p)
    assert observed == pytest.approx(p, rel=1e-9)
    assert np.allclose(ext, 1.0, atol=1e-12)


def test_scalar_oracle_spectrum(scalar):
    op = assemble(scalar.system, scalar.profile, "L", M=1600)
    w, v = oracle_eigs(op, vectors=True)
    assert np.all(np.diff(w.real) <= 0)
    assert w.size == 2
    assert abs(w[1]) < 2e-5
    assert translation_mode_error(op, scalar.profile, v[:, 1]) < 1e-3
    d = to_dict(op, w)
    assert d["M"] == 1600 and len(d["eigs"]) == 2


def test_spectral_box_bounds_eigenvalues(scalar):
    op = assemble(scalar.system, scalar.profile, "L", M=400)
    rho, im = spectral_box(op)
    w = np.linalg.eigvals(op.matrix.toarray())
    assert w.real.max() <= rho + 1e-12
    assert np.abs(w.imag).max() <= im + 1e-12
