import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wavemaslov.evans_function import (_derivatives, _subsets, _wedge, evans, evans_exterior,
                                       geometric_dim, multiplicity, winding_count)


@given(x=st.floats(-2, 2), h=st.floats(1e-3, 1e-2))
@settings(max_examples=40, deadline=None)
def test_derivative_stencil_on_polynomials(x, h):
    d1, d2 = _derivatives(lambda s: s ** 2, x, h)
    assert d1 == pytest.approx(2 * x, abs=1e-9)
    assert d2 == pytest.approx(2.0, rel=1e-6)
    d1, d2 = _derivatives(lambda s: s ** 4 - s, x, h)
    assert d1 == pytest.approx(4 * x ** 3 - 1, abs=1e-8)
    assert d2 == pytest.approx(12 * x ** 2, abs=1e-5)


def test_double_root_calibration():
    # D = lambda^2 at the root: first derivative vanishes, second is 2
    d1, d2 = _derivatives(lambda s: s * s, 0.0, 1e-4)
    assert abs(d1) < 1e-12 and d2 == pytest.approx(2.0)


def test_wedge_pairing_gives_determinant(rng):
    subs, pair, sign = _subsets(4, 2)
    A, B = rng.standard_normal((2, 4, 2))
    wa, wb = _wedge(A, subs), _wedge(B, subs)
    assert np.sum(sign * wa * wb[pair]) == pytest.approx(np.linalg.det(np.hstack([A, B])))


def test_routes_agree_on_real_axis(scalar):
    for lam in (0.05, 0.3, 1.0):
        a = evans(scalar.cache, lam)
        b = evans_exterior(scalar.cache, lam)
        ratio = np.exp(b.log_scale - a.log_scale) * b.normalized / a.normalized
        assert abs(ratio - 1) < 1e-8


def test_translation_root(scalar):
    s = evans(scalar.cache, 0.0)
    assert abs(s.normalized) < 1e-6
    assert geometric_dim(scalar.cache, 0.0) == 1
    r = multiplicity(scalar.cache, 0.0)
    assert r.order == 1 and r.info["multiplicities_equal"]
    assert r.info["dprime_mismatch"] < 1e-3


def test_scalar_winding(scalar):
    assert winding_count(scalar.cache, (-1e-3, scalar.lambda_max, -1.0, 1.0)) == 2


def test_sample_rows_are_csv_ready(scalar):
    row = evans(scalar.cache, 0.4).row()
    assert len(row) == 5 and row[1] == 0.0
