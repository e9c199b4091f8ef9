import numpy as np
import pytest

from hypotorus import (
    GridFunction,
    HypotorusError,
    Lattice,
    SolveReport,
    lattice_project,
    mean_integral,
    nu_estimates,
    nu_of,
    pk_apply,
    pk_fixed_point,
    similarity_check,
    solve_a,
    solve_ab,
    solve_f,
    t_omega,
)
from hypotorus import solvers as sv

TWO_PI_I = 2.0j * np.pi


def const_grid(n, value):
    return GridFunction(n, np.full((n, n), value, dtype=complex))


def test_mean_integral():
    assert mean_integral(const_grid(16, 2 + 3j)) == 2 + 3j
    g = GridFunction.from_callable(16, lambda x, y: np.exp(TWO_PI_I * x))
    assert abs(mean_integral(g)) < 1e-12
    g = GridFunction.from_callable(16, lambda x, y: np.sin(np.pi * y) ** 2)
    assert abs(mean_integral(g) - 0.5) < 1e-12


def test_nu_of_constants(ctx_elliptic_16):
    ctx = ctx_elliptic_16
    assert abs(nu_of(ctx, const_grid(16, -TWO_PI_I)) - 1) < 1e-14
    assert nu_of(ctx, const_grid(16, 0)) == 0
    tau = ctx.tau
    want = 2 + 3 * tau
    got = nu_of(ctx, const_grid(16, -TWO_PI_I * want))
    assert abs(got - want) < 1e-13


def test_nu_boundary_formula_agrees(ctx_elliptic_16):
    est = nu_estimates(ctx_elliptic_16, const_grid(16, -TWO_PI_I))
    assert est.discrepancy < 1e-4


def test_lattice_project():
    lat = Lattice(1j)
    assert lattice_project(1 + 1j, lat) == (1, 1)
    assert lattice_project(0.5 + 0j, lat) is None
    assert lattice_project(2 + 3j - 1e-8 * (1 + 1j), lat) == (2, 3)
    lat2 = Lattice(0.3 + 0.8j)
    assert lattice_project(-1 + 2 * (0.3 + 0.8j), lat2) == (-1, 2)
    with pytest.raises(HypotorusError):
        lattice_project(0j, lat, tol=0.0)


def test_report_invariants():
    with pytest.raises(HypotorusError):
        SolveReport(solvable="maybe", u=None, j=None, k=None, nu=None,
                    residual_sup=None, residual_l2=None, iterations=0,
                    offset_constancy=0.0, notes="")
    with pytest.raises(HypotorusError):
        SolveReport(solvable="yes", u=None, j=None, k=None, nu=None,
                    residual_sup=None, residual_l2=None, iterations=0,
                    offset_constancy=0.0, notes="")


def test_solve_f_rejects_nonzero_mean(ctx_elliptic_16):
    rep = solve_f(ctx_elliptic_16, const_grid(16, 1))
    assert rep.solvable == "no"
    assert rep.u is None and rep.residual_sup is None
    assert "gate" in rep.notes


def test_solve_f_zero_mean(ctx_elliptic_16):
    f = GridFunction.from_callable(
        16, lambda x, y: np.exp(TWO_PI_I * (x + y)))
    rep = solve_f(ctx_elliptic_16, f)
    assert rep.solvable == "yes"
    assert rep.u is not None
    assert rep.residual_sup < 0.5
    assert rep.offset_constancy < 1e-3
    assert rep.iterations == 0


def test_solve_a_zero_coefficient(ctx_elliptic_16):
    rep = solve_a(ctx_elliptic_16, const_grid(16, 0))
    assert rep.solvable == "yes"
    assert (rep.j, rep.k) == (0, 0)
    assert np.allclose(rep.u.values, 1.0, atol=1e-14)
    assert rep.residual_sup < 1e-12
    assert "exact mode" in rep.notes
    assert rep.k_sim == 0


def test_solve_a_rejects_off_lattice(ctx_elliptic_16):
    rep = solve_a(ctx_elliptic_16, const_grid(16, 1))
    assert rep.solvable == "no"
    assert abs(rep.nu - 1j / (2 * np.pi)) < 1e-14
    assert "not a lattice point" in rep.notes


def test_solve_a_constant_coefficient(ctx_elliptic_16):
    ctx = ctx_elliptic_16
    a_fn = const_grid(16, -TWO_PI_I * ctx.tau)
    rep = solve_a(ctx, a_fn)
    assert rep.solvable == "yes"
    assert (rep.j, rep.k) == (0, 1)
    assert rep.residual_sup < 0.2
    # u was assembled as exp(v - 2 pi i k Z), so stripping the similarity
    # factor with k_sim leaves an exact constant
    c, max_dev, min_abs = similarity_check(ctx, rep.u, rep.k_sim, rep.v)
    assert max_dev < 1e-12
    assert min_abs > 0.0
    assert abs(c) > 1e-3


def test_pk_apply_ignores_v_when_b_vanishes(ctx_elliptic_16):
    ctx = ctx_elliptic_16
    a_fn = GridFunction.from_callable(16, lambda x, y: np.exp(TWO_PI_I * x))
    b_fn = const_grid(16, 0)
    rng = np.random.default_rng(41)
    v = GridFunction(16, rng.normal(size=(16, 16))
                     + 1j * rng.normal(size=(16, 16)))
    want = t_omega(ctx, a_fn)
    for k in (0, 2):
        got = pk_apply(ctx, a_fn, b_fn, k, v)
        assert np.array_equal(got.values, want.values)


def test_pk_integrand_phase_is_unimodular(ctx_elliptic_16):
    ctx = ctx_elliptic_16
    rng = np.random.default_rng(42)
    a_fn = const_grid(16, 0.3 - 0.2j)
    b_fn = GridFunction.from_callable(16, lambda x, y: 0.1 * np.exp(TWO_PI_I * y))
    v = GridFunction(16, rng.normal(size=(16, 16)) * (2 + 5j))
    integ = sv._pk_integrand(ctx, a_fn, b_fn, 1, v)
    dev = np.abs(integ.values - a_fn.values) - np.abs(b_fn.values)
    assert np.max(np.abs(dev)) < 1e-13


def test_pk_fixed_point_b_zero_lands_in_two_steps(ctx_elliptic_16):
    ctx = ctx_elliptic_16
    a_fn = GridFunction.from_callable(16, lambda x, y: np.exp(TWO_PI_I * x))
    state = pk_fixed_point(ctx, a_fn, const_grid(16, 0), k=0, damping=0.5)
    assert state.converged
    assert state.iterations == 2
    want = t_omega(ctx, a_fn)
    assert np.array_equal(state.v.values, want.values)


def test_pk_fixed_point_zero_data(ctx_elliptic_16):
    state = pk_fixed_point(ctx_elliptic_16, const_grid(16, 0),
                           const_grid(16, 0), k=0)
    assert state.converged and state.iterations == 1
    assert np.all(state.v.values == 0)


def test_pk_fixed_point_validation(ctx_elliptic_16):
    zero = const_grid(16, 0)
    with pytest.raises(HypotorusError):
        pk_fixed_point(ctx_elliptic_16, zero, zero, 0, damping=0.0)
    with pytest.raises(HypotorusError):
        pk_fixed_point(ctx_elliptic_16, zero, zero, 0, damping=1.5)
    with pytest.raises(HypotorusError):
        pk_fixed_point(ctx_elliptic_16, zero, zero, 0, max_iter=0)


def test_k_order():
    assert sv._k_order(3) == [0, 1, -1, 2, -2, 3, -3]
    assert sv._k_order(0) == [0]


def test_solve_ab_b_zero_reduces_to_solve_a(ctx_elliptic_16):
    ctx = ctx_elliptic_16
    a_fn = const_grid(16, -TWO_PI_I * ctx.tau)
    rep_a = solve_a(ctx, a_fn)
    rep_ab = solve_ab(ctx, a_fn, const_grid(16, 0), k_max=1)
    assert rep_ab.solvable == "yes"
    assert rep_ab.k == -rep_a.k
    assert rep_ab.j == 0
    assert rep_ab.iterations == 2
    assert np.max(np.abs(rep_ab.u.values - rep_a.u.values)) < 1e-10


def test_solve_ab_no_matching_winding(ctx_elliptic_16):
    rep = solve_ab(ctx_elliptic_16, const_grid(16, 1), const_grid(16, 0),
                   k_max=1)
    assert rep.solvable == "no"
    assert rep.u is None
    assert "k=0" in rep.notes and "k=-1" in rep.notes
    assert rep.iterations == 3 * 2


def test_solve_ab_validation(ctx_elliptic_16):
    with pytest.raises(HypotorusError):
        solve_ab(ctx_elliptic_16, const_grid(16, 0), const_grid(16, 0),
                 k_max=-1)


def test_similarity_check_degenerate(ctx_elliptic_16):
    with pytest.raises(HypotorusError):
        similarity_check(ctx_elliptic_16, GridFunction.zeros(16), 0,
                         GridFunction.zeros(16))


def test_similarity_check_exact_form(ctx_elliptic_16):
    ctx = ctx_elliptic_16
    rng = np.random.default_rng(43)
    v = GridFunction(16, 0.3 * rng.normal(size=(16, 16))
                     + 0.2j * rng.normal(size=(16, 16)))
    k = 2
    u = GridFunction(16, 1.7 * np.exp(TWO_PI_I * k * ctx.z_centers
                                      + v.values))
    c, max_dev, min_abs = similarity_check(ctx, u, k, v)
    assert abs(c - 1.7) < 1e-12
    assert max_dev < 1e-12
    assert min_abs > 0
