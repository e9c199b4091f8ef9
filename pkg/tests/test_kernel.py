import numpy as np
import pytest

from hypotorus import (
    GridFunction,
    HypotorusError,
    kernel_context,
    kernel_m,
    operator_matrix,
    t_omega,
    t_omega_point,
)
from hypotorus import kernel as kn


def test_ring_offsets_geometry():
    for level in (2, 3, 5):
        offs, u = kn._ring_offsets(level)
        assert len(offs) == 12
        assert u == 2.0 ** -level
        arr = np.asarray(offs)
        # every midpoint sits in the L-inf ring between u and 2u, and the
        # pattern is centrally symmetric (pole contributions cancel in pairs)
        assert np.all(np.max(np.abs(arr), axis=1) <= 1.5 * u + 1e-15)
        assert np.all(np.max(np.abs(arr), axis=1) >= 0.5 * u - 1e-15)
        for (ox, oy) in offs:
            assert any(abs(ox + px) < 1e-15 and abs(oy + py) < 1e-15
                       for (px, py) in offs)


def test_thread_count_env(monkeypatch):
    monkeypatch.delenv("HYPOTORUS_THREADS", raising=False)
    assert kn.thread_count() == 1
    monkeypatch.setenv("HYPOTORUS_THREADS", "3")
    assert kn.thread_count() == 3
    monkeypatch.setenv("HYPOTORUS_THREADS", "0")
    with pytest.raises(HypotorusError):
        kn.thread_count()
    monkeypatch.setenv("HYPOTORUS_THREADS", "two")
    with pytest.raises(HypotorusError):
        kn.thread_count()


def test_context_validation(nf_elliptic):
    with pytest.raises(HypotorusError):
        kernel_context(nf_elliptic, 7)
    with pytest.raises(HypotorusError):
        kernel_context(nf_elliptic, 16, refine_depth=1)
    with pytest.raises(HypotorusError):
        kernel_context(nf_elliptic, 16, refine_depth=13)
    ctx = kernel_context(nf_elliptic, 16)
    assert ctx.h == 1 / 16
    assert abs(ctx.z0 - (1 + 1j) / 2) < 1e-15


def test_kernel_m_lattice_shift(ctx_elliptic_16):
    ctx = ctx_elliptic_16
    rng = np.random.default_rng(31)
    for _ in range(10):
        px, py, sx, sy = rng.uniform(0, 1, 4)
        if abs(px - sx) < 0.05 and abs(py - sy) < 0.05:
            continue
        base = kernel_m(ctx, (px, py), (sx, sy))
        for (j, k) in ((1, 0), (0, 1), (-1, 1), (2, -1)):
            shifted = kernel_m(ctx, (px, py), (sx + j, sy + k))
            assert abs(shifted - base + 2j * np.pi * k) < 1e-10


def test_kernel_m_pole_law(ctx_elliptic_16):
    ctx = ctx_elliptic_16
    eps = 1e-6
    p = (0.3, 0.4)
    for s in ((0.3 + eps, 0.4), (0.3, 0.4 + eps)):
        diff = complex(ctx.zeval.at(*s)) - complex(ctx.zeval.at(*p))
        assert abs(diff * kernel_m(ctx, p, s) - 1) < 1e-4


def test_kernel_m_singular(ctx_elliptic_16):
    with pytest.raises(HypotorusError):
        kernel_m(ctx_elliptic_16, (0.3, 0.4), (0.3, 0.4))
    with pytest.raises(HypotorusError):
        kernel_m(ctx_elliptic_16, (0.3, 0.4), (1.3, 1.4))


def test_point_eval_matches_grid_at_centers(ctx_elliptic_16):
    ctx = ctx_elliptic_16
    g = GridFunction.from_callable(16, lambda x, y: np.exp(2j * np.pi * x))
    tg = t_omega(ctx, g)
    for (i, j) in ((0, 0), (3, 7), (9, 2), (15, 15)):
        p = ((i + 0.5) / 16, (j + 0.5) / 16)
        assert abs(t_omega_point(ctx, g, p) - tg.values[i, j]) < 1e-10


def test_point_eval_continuous_across_cell_edges(ctx_elliptic_16):
    # on an edge the singular treatment switches to two cells; the value
    # must still agree with nearby interior points
    ctx = ctx_elliptic_16
    g = GridFunction.from_callable(
        16, lambda x, y: np.exp(2j * np.pi * (x + y)))
    edge = t_omega_point(ctx, g, (0.25, 0.4))          # x on a cell edge
    near = t_omega_point(ctx, g, (0.25 + 1e-7, 0.4))
    assert abs(edge - near) < 1e-3
    corner = t_omega_point(ctx, g, (0.5, 0.5))         # four-cell corner
    near2 = t_omega_point(ctx, g, (0.5 + 1e-7, 0.5 + 1e-7))
    assert abs(corner - near2) < 1e-3


def test_point_eval_quasi_periodicity(ctx_elliptic_16):
    ctx = ctx_elliptic_16
    g = GridFunction.from_callable(16, lambda x, y: np.ones_like(x) + 0j)
    base = t_omega_point(ctx, g, (0.25, 0.375))
    # x-period: exact, the kernel arguments shift by whole lattice vectors
    assert abs(t_omega_point(ctx, g, (1.25, 0.375)) - base) < 1e-13
    # y-period picks up minus the integral of g; only the dropped block
    # around the singular point contributes error
    dev = t_omega_point(ctx, g, (0.25, 1.375)) - base + 1.0
    assert abs(dev) < 1e-5


def test_streamed_matches_matrix_path(nf_elliptic, ctx_elliptic_16,
                                      monkeypatch):
    g = GridFunction.from_callable(
        16, lambda x, y: np.sin(np.pi * y) ** 2 + 0.5j * np.cos(2 * np.pi * x))
    want = t_omega(ctx_elliptic_16, g)
    monkeypatch.setattr(kn, "_MATRIX_MAX_N", 8)
    ctx = kernel_context(nf_elliptic, 16)
    got = t_omega(ctx, g)
    assert np.max(np.abs(got.values - want.values)) < 1e-12


def test_threaded_run_is_deterministic(nf_elliptic, monkeypatch):
    g = GridFunction.from_callable(
        16, lambda x, y: np.exp(2j * np.pi * (x - y)))
    monkeypatch.setattr(kn, "_MATRIX_MAX_N", 8)  # force the blocked path
    monkeypatch.setenv("HYPOTORUS_THREADS", "1")
    one = t_omega(kernel_context(nf_elliptic, 16), g)
    monkeypatch.setenv("HYPOTORUS_THREADS", "4")
    four = t_omega(kernel_context(nf_elliptic, 16), g)
    assert np.array_equal(one.values, four.values)


def test_lattice_dist(ctx_elliptic_16):
    ctx = ctx_elliptic_16
    z = np.array([0j, 1 + 0j, 2 + 3j, (1 + 1j) / 2])
    d = kn._lattice_dist(ctx, z)
    assert np.allclose(d[:3], 0.0, atol=1e-12)
    assert abs(d[3] - np.sqrt(2) / 2) < 1e-12


def test_row_depths(ctx_elliptic_16, ctx_deg_sin2_32):
    assert np.all(ctx_elliptic_16.row_depths() == 6)
    depths = ctx_deg_sin2_32.row_depths()
    ys = (np.arange(32) + 0.5) / 32
    near = np.abs((ys + 0.5) % 1.0 - 0.5) <= 2.0 / 32
    assert np.all(depths[near] == 7)
    assert np.all(depths[~near] == 6)


def test_quadtree_squares_off_center():
    qx, qy, side = kn._quadtree_squares(0.5, 0.5, 0.5, 0.61, 0.37, 5)
    assert len(qx) == 3 * 5
    covered = np.sum(side ** 2)
    assert abs(covered - (1.0 - (1.0 / 2 ** 5) ** 2)) < 1e-14
    # no evaluated square contains the singular point
    assert np.all(np.maximum(np.abs(qx - 0.61), np.abs(qy - 0.37))
                  > side / 2 - 1e-15)


def test_quadtree_squares_centered_point():
    # point at the cell center: the first level keeps all four children, so
    # each following level emits a 12-square ring and four deepest blocks
    # are dropped symmetrically
    qx, qy, side = kn._quadtree_squares(0.5, 0.5, 0.5, 0.5, 0.5, 6)
    assert len(qx) == 12 * 5
    covered = np.sum(side ** 2)
    assert abs(covered - (1.0 - 4 * (1.0 / 2 ** 6) ** 2)) < 1e-14


def test_operator_matrix_guard(nf_elliptic):
    ctx = kernel_context(nf_elliptic, 96)
    with pytest.raises(HypotorusError):
        operator_matrix(ctx)


def test_grid_mismatch(ctx_elliptic_16):
    g = GridFunction.zeros(32)
    with pytest.raises(HypotorusError):
        t_omega(ctx_elliptic_16, g)
    with pytest.raises(HypotorusError):
        t_omega_point(ctx_elliptic_16, g, (0.3, 0.3))
