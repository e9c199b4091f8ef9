import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypotorus.core import (GridFunction, HypotorusError, Lattice, TorusPoint,
                            as_point, grid_centers, lattice_reduce,
                            regularity_from)


def test_torus_point_rejects_non_finite():
    with pytest.raises(HypotorusError):
        TorusPoint(np.inf, 0.0)
    with pytest.raises(HypotorusError):
        TorusPoint(0.0, np.nan)


def test_torus_point_reduced():
    p = TorusPoint(1.25, -0.5).reduced()
    assert p.as_tuple() == (0.25, 0.5)


def test_as_point_accepts_tuples():
    p = as_point((0.1, 0.9))
    assert isinstance(p, TorusPoint)
    assert p.x == 0.1 and p.y == 0.9


def test_lattice_requires_upper_half_plane():
    with pytest.raises(HypotorusError):
        Lattice(1.0 - 0.5j)
    lat = Lattice(0.3 + 0.8j)
    assert lat.zero_point == (1 + 0.3 + 0.8j) / 2


def test_lattice_reduce_example():
    w, j, k = lattice_reduce(-0.25 - 0.5j, 1j)
    assert abs(w - (0.75 + 0.5j)) < 1e-15
    assert (j, k) == (-1, -1)


def test_lattice_reduce_array():
    z = np.array([0.2 + 0.3j, 1.7 - 2.1j])
    w, j, k = lattice_reduce(z, 1j)
    assert w.shape == z.shape
    assert np.allclose(w + j + k * 1j, z)


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5),
       st.sampled_from([1j, 0.5j, 0.3 + 0.8j, -0.2 + 1.5j]))
def test_lattice_reduce_reconstructs(re, im, tau):
    z = complex(re, im)
    w, j, k = lattice_reduce(z, tau)
    assert abs(w + j + k * tau - z) < 1e-9
    beta = w.imag / tau.imag
    alpha = w.real - beta * tau.real
    assert -1e-12 <= alpha < 1 + 1e-12
    assert -1e-12 <= beta < 1 + 1e-12


def test_grid_function_validation():
    with pytest.raises(HypotorusError):
        GridFunction(2, np.zeros((2, 2)))
    with pytest.raises(HypotorusError):
        GridFunction(4, np.zeros((4, 5)))
    with pytest.raises(HypotorusError):
        GridFunction(4, np.full((4, 4), np.inf))


def test_grid_function_sample_layout():
    g = GridFunction.from_callable(8, lambda x, y: x + 10 * y)
    # first index walks x, second walks y
    assert g.values[3, 0] == pytest.approx((3 + 0.5) / 8 + 10 * (0.5 / 8))
    assert g.values[0, 5] == pytest.approx(0.5 / 8 + 10 * (5 + 0.5) / 8)
    assert g.sup_norm() == pytest.approx(abs(g.values[7, 7]))


def test_grid_centers_layout():
    x, y = grid_centers(4)
    assert x.shape == (4, 4)
    assert x[1, 0] == 0.375 and x[1, 3] == 0.375
    assert y[0, 1] == 0.375 and y[3, 1] == 0.375


def test_regularity_frozen_values():
    assert regularity_from(4.0, 0.0).alpha == pytest.approx(0.5)
    assert regularity_from(3.0, 1.0).alpha == pytest.approx(0.0, abs=1e-15)
    assert regularity_from(10.0, 2.0).alpha == pytest.approx(0.2)
    r = regularity_from(4.0, 0.0)
    assert r.p == pytest.approx(4.0 / 3.0)
    assert r.mu == 0.0


def test_regularity_validation():
    with pytest.raises(HypotorusError):
        regularity_from(1.0, 0.0)
    with pytest.raises(HypotorusError):
        regularity_from(4.0, -0.5)


@settings(max_examples=100, deadline=None)
@given(st.floats(1.01, 50), st.floats(0, 10))
def test_regularity_sign_matches_threshold(q, sigma):
    r = regularity_from(q, sigma)
    assert (r.alpha > 0) == (2.0 - r.p - r.mu > 0)
