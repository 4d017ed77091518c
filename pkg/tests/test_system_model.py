import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wavemaslov.errors import InvalidParameters, TuringViolated
from wavemaslov.system_model import (FHNParameters, SkewGradientSystem, make_fhn,
                                     make_scalar_bistable, require_turing, system_from_dict,
                                     turing_check)

a_values = st.floats(0.01, 0.49)


@given(a=a_values, eps=st.floats(1e-4, 0.1), gamma=st.floats(0.1, 5.0),
       u=st.floats(-1.5, 1.5), v=st.floats(-0.5, 0.5))
@settings(max_examples=60, deadline=None)
def test_fhn_jacobian_matches_difference_quotient(a, eps, gamma, u, v):
    system = make_fhn(FHNParameters(a, eps, gamma))
    U = np.array([u, v])
    h = 1e-6
    fd = np.column_stack([(system.f(U + h * e) - system.f(U - h * e)) / (2 * h) for e in np.eye(2)])
    assert np.allclose(system.df(U), fd, atol=1e-7)


@given(a=a_values, u=st.floats(-1.5, 1.5))
@settings(max_examples=40, deadline=None)
def test_fhn_jacobian_is_symmetric(a, u):
    # f is a gradient, so its Jacobian must be symmetric
    system = make_fhn(FHNParameters(a, 0.01, 1.0))
    J = system.df(np.array([u, 0.2]))
    assert np.allclose(J, J.T)


def test_vectorized_evaluation_matches_pointwise():
    system = make_fhn(FHNParameters())
    U = np.array([[0.0, 0.3, 1.0], [0.0, 0.05, 0.1]])
    batch = system.df(U)
    for k in range(3):
        assert np.allclose(batch[:, :, k], system.df(U[:, k]))


def test_rest_state_is_an_equilibrium():
    for system in (make_fhn(FHNParameters()), make_scalar_bistable(0.3)):
        assert np.allclose(system.f(np.zeros(system.n)), 0.0)


def test_fhn_rest_state_is_turing_stable():
    bound = turing_check(make_fhn(FHNParameters(0.1, 0.001, 1.0)))
    assert bound.ok
    assert np.all(bound.nu.real < 0)
    assert bound.nu.real.max() < bound.beta < 0


def test_turing_violation_raises():
    f = lambda U: np.asarray(U)
    df = lambda U: np.array([[1.0]])
    unstable = SkewGradientSystem(1, np.array([1.0]), np.array([1.0]), f, df)
    with pytest.raises(TuringViolated):
        require_turing(unstable)


@pytest.mark.parametrize("params", [FHNParameters(a=0.6), FHNParameters(eps=0.0),
                                    FHNParameters(gamma=-1.0)])
def test_invalid_fhn_parameters(params):
    with pytest.raises(InvalidParameters):
        make_fhn(params)


def test_structure_validation():
    f = df = lambda U: U
    with pytest.raises(InvalidParameters):
        SkewGradientSystem(1, np.array([-1.0]), np.array([1.0]), f, df)
    with pytest.raises(InvalidParameters):
        SkewGradientSystem(1, np.array([1.0]), np.array([0.5]), f, df)


def test_round_trip_through_description():
    system = make_fhn(FHNParameters(0.2, 0.01, 2.0))
    again = system_from_dict(system.describe())
    assert again.params == system.params
    assert np.array_equal(again.S, system.S) and np.array_equal(again.Q, system.Q)
    with pytest.raises(InvalidParameters):
        system_from_dict({"name": "brusselator"})
