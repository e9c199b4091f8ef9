"""Theta-kernel Cauchy-Pompeiu operator on the torus.

The kernel pairs a target point p with a source point s through the
logarithmic derivative of the theta function evaluated at a difference of
first-integral values, shifted by the theta zero z0.  Integrating the
transposed kernel against a density over the fundamental square gives an
operator T that inverts the vector field L = b d/dx - a d/dy on doubly
periodic data and shifts by exact lattice constants under deck
transformations.

Quadrature layout for one target p with singular point s* = p mod 1:

* The cell containing s* freezes the density at its own sample and
  integrates the kernel alone over a dyadic quadtree that shrinks toward
  s*; the deepest block still containing s* is dropped - its simple-pole
  part cancels by central symmetry, leaving an O((h 2^-depth)^(1+alpha))
  error.  With the density frozen at the cell sample, the Holder-difference
  term of the classical value-subtraction split vanishes identically.
  Targets within 2/n of a declared degenerate circle get extra levels,
  matching the locally worse pole there.

* Every other cell starts as a single midpoint node.  A cell is refined
  adaptively whenever its image under the first integral is large relative
  to its distance from the kernel pole: sub-squares split while
  side*(|a|+|b|) >= KAPPA * dist(Z(p) - Z(mid), lattice).  This covers both
  the ordinary neighbors of the singular cell and the cells hugging a
  degenerate circle, where the first integral compresses distances so
  strongly that the pole is felt at points far from s* in grid metric
  (the near-circle mirror of the target, for instance).  The refined value
  replaces the midpoint kernel sample as an effective cell average, so
  downstream code sees one weight row per target either way.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import GridFunction, HypotorusError, as_point, lattice_reduce
from .field import NormalizedField, ZEvaluator
from .theta import ThetaContext, theta_context, theta_log_deriv_raw

KAPPA = 0.45        # leaf criterion: cell Z-size < KAPPA * distance to pole
MAX_LEVEL = 16      # dyadic refinement cap for adaptive cells
_MATRIX_MAX_N = 80  # above this the n^4 weight matrix would not fit in RAM
_SQUARE_BUDGET = 500_000  # per-batch guard against runaway refinement


def _ring_offsets(level: int):
    """Midpoints (in units of h, relative to the quadtree center) of the 12
    squares evaluated at one subdivision level of the singular cell."""
    u = 2.0 ** -level
    base = ((1.5 * u, 0.5 * u), (0.5 * u, 1.5 * u), (1.5 * u, 1.5 * u))
    offs = []
    for qx in (-1.0, 1.0):
        for qy in (-1.0, 1.0):
            for (ax, ay) in base:
                offs.append((qx * ax, qy * ay))
    return offs, u


def thread_count() -> int:
    raw = os.environ.get("HYPOTORUS_THREADS", "")
    if not raw:
        return 1
    try:
        v = int(raw)
    except ValueError as exc:
        raise HypotorusError(
            f"HYPOTORUS_THREADS must be a positive integer, got {raw!r}"
        ) from exc
    if v < 1:
        raise HypotorusError(
            f"HYPOTORUS_THREADS must be a positive integer, got {raw!r}")
    return v


@dataclass
class KernelContext:
    nf: NormalizedField
    theta: ThetaContext
    n: int
    refine_depth: int = 6
    zeval: ZEvaluator = field(repr=False, default=None)
    _zoff: dict = field(repr=False, default_factory=dict)
    _wcoeff: np.ndarray = field(repr=False, default=None)
    _qtw: np.ndarray = field(repr=False, default=None)
    _wmat: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.n < 8:
            raise HypotorusError(f"grid too coarse for quadrature: n={self.n}")
        if not 2 <= self.refine_depth <= 12:
            raise HypotorusError(
                f"refine_depth must lie in [2, 12], got {self.refine_depth}")
        if self.zeval is None:
            self.zeval = ZEvaluator(self.nf, self.n)

    @property
    def tau(self) -> complex:
        return self.nf.tau

    @property
    def z0(self) -> complex:
        return (1.0 + self.tau) / 2.0

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def z_centers(self) -> np.ndarray:
        return self.zeval.centers

    def z_offset_grid(self, ox: float, oy: float) -> np.ndarray:
        """Z at (cell centers + (ox, oy)*h), shape (n, n), memoized."""
        key = (round(ox, 12), round(oy, 12))
        got = self._zoff.get(key)
        if got is None:
            from .core import grid_centers

            x, y = grid_centers(self.n)
            got = self.zeval.at(x + ox * self.h, y + oy * self.h)
            self._zoff[key] = got
        return got

    def coeff_size(self) -> np.ndarray:
        """|a| + |b| at cell centers: the local Z-stretch of a cell."""
        if self._wcoeff is None:
            from .core import grid_centers

            x, y = grid_centers(self.n)
            self._wcoeff = (np.abs(self.nf.a(x, y))
                            + np.abs(self.nf.b(x, y))).astype(float)
        return self._wcoeff

    def sigma_bump(self, y: float) -> int:
        """Extra quadtree levels for targets within 2/n of a degenerate
        circle."""
        bump = 0
        for comp in self.nf.components:
            if comp.y0 is None:
                continue
            d = abs((y - comp.y0 + 0.5) % 1.0 - 0.5)
            if d <= 2.0 / self.n:
                bump = max(bump, math.ceil(comp.sigma / 2.0))
        return bump

    def row_depths(self) -> np.ndarray:
        ys = (np.arange(self.n) + 0.5) / self.n
        return np.array(
            [self.refine_depth + self.sigma_bump(y) for y in ys], dtype=int)


def kernel_context(nf: NormalizedField, n: int, refine_depth: int = 6,
                   theta_tol: float = 1e-14) -> KernelContext:
    return KernelContext(nf, theta_context(nf.tau, theta_tol), n, refine_depth)


# ---------------------------------------------------------------- kernel

def _lattice_dist(ctx: KernelContext, z: np.ndarray) -> np.ndarray:
    """Distance from each value to the nearest lattice point j + k*tau."""
    w, _, _ = lattice_reduce(z, ctx.tau)
    d = np.abs(w)
    for dj in (-1, 0, 1):
        for dk in (-1, 0, 1):
            if (dj, dk) == (0, 0):
                continue
            d = np.minimum(d, np.abs(w - (dj + dk * ctx.tau)))
    return d


def kernel_m(ctx: KernelContext, p, s) -> complex:
    """Theta log-derivative at Z(s) - Z(p) + z0.

    Shifting s by a lattice vector (j,k) changes the value by exactly
    -2*pi*i*k; as s approaches p the product with Z(s) - Z(p) tends to 1.
    """
    pp, ss = as_point(p), as_point(s)
    zp = complex(ctx.zeval.at(pp.x, pp.y))
    zs = complex(ctx.zeval.at(ss.x, ss.y))
    diff = np.asarray(zs - zp)
    if float(_lattice_dist(ctx, diff)) < 1e-12:
        raise HypotorusError(
            "kernel is singular: source and target coincide on the torus")
    return complex(theta_log_deriv_raw(ctx.theta, diff + ctx.z0))


def _kt(ctx: KernelContext, args: np.ndarray) -> np.ndarray:
    """Transposed-kernel values: theta log-derivative at Z(p) - Z(s) + z0."""
    return theta_log_deriv_raw(ctx.theta, args)


# ------------------------------------------------ adaptive cell quadrature

def _refined_cell_integrals(ctx: KernelContext, zt: np.ndarray,
                            cols: np.ndarray) -> np.ndarray:
    """Integral of the kernel over whole cells, one value per (target, cell)
    pair, by dyadic subdivision until each leaf is small in Z relative to
    its distance from the pole.  zt[i] is the target's Z value, cols[i] the
    flat source-cell index."""
    n, h = ctx.n, ctx.h
    out = np.zeros(len(cols), dtype=complex)
    pair = np.arange(len(cols))
    mx = (cols // n + 0.5) * h
    my = (cols % n + 0.5) * h
    side = np.full(len(cols), h)
    zt_sq = np.asarray(zt, dtype=complex).copy()
    for level in range(MAX_LEVEL + 1):
        zs = ctx.zeval.at(mx, my)
        arg = zt_sq - zs
        d = _lattice_dist(ctx, arg)
        w = np.abs(ctx.nf.a(mx, my)) + np.abs(ctx.nf.b(mx, my))
        split = (side * w >= KAPPA * d) & (level < MAX_LEVEL)
        if len(mx) > _SQUARE_BUDGET:
            split[:] = False
        leaf = ~split
        if np.any(leaf):
            vals = _kt(ctx, arg[leaf] + ctx.z0) * side[leaf] ** 2
            np.add.at(out, pair[leaf], vals)
        if not np.any(split):
            break
        q = side[split] / 4.0
        mx0, my0 = mx[split], my[split]
        mx = np.concatenate([mx0 - q, mx0 - q, mx0 + q, mx0 + q])
        my = np.concatenate([my0 - q, my0 + q, my0 - q, my0 + q])
        side = np.tile(side[split] / 2.0, 4)
        pair = np.tile(pair[split], 4)
        zt_sq = np.tile(zt_sq[split], 4)
    return out


# ------------------------------------------------------- weight assembly

def _weight_rows(ctx: KernelContext, r0: int, r1: int) -> np.ndarray:
    """Effective kernel rows for flat targets [r0, r1): the kernel at every
    cell center, with the singular cell zeroed and adaptively refined cells
    replaced by their cell-averaged kernel value.  Multiplying by h^2 and a
    density sample gives that cell's contribution to the integral."""
    n, h = ctx.n, ctx.h
    zs = ctx.z_centers.ravel()
    zt = zs[r0:r1]
    arg = zt[:, None] - zs[None, :]
    rows = _kt(ctx, arg + ctx.z0)
    dist = _lattice_dist(ctx, arg)
    t = np.arange(r0, r1)
    local = np.arange(r1 - r0)
    rows[local, t] = 0.0
    dist[local, t] = np.inf
    thresh = (h / KAPPA) * ctx.coeff_size().ravel()
    flag = dist < thresh[None, :]
    if np.any(flag):
        tloc, cols = np.nonzero(flag)
        refined = _refined_cell_integrals(ctx, zt[tloc], cols)
        rows[tloc, cols] = refined / (h * h)
    return rows


def _qt_weights(ctx: KernelContext) -> np.ndarray:
    """Singular-cell quadtree weight (the kernel integrated over the
    target's own cell, deepest block dropped) for every grid target."""
    if ctx._qtw is not None:
        return ctx._qtw
    zc = ctx.z_centers
    z0 = ctx.z0
    h2 = ctx.h * ctx.h
    depths = ctx.row_depths()
    base_depth = ctx.refine_depth
    acc = np.zeros_like(zc)
    for level in range(2, int(depths.max()) + 1):
        offs, u = _ring_offsets(level)
        if level <= base_depth:
            cols = slice(None)
        else:
            cols = depths >= level
            if not np.any(cols):
                break
        zt = zc[:, cols]
        part = np.zeros_like(zt)
        for (ox, oy) in offs:
            part += _kt(ctx, zt - ctx.z_offset_grid(ox, oy)[:, cols] + z0)
        acc[:, cols] += part * (u * u * h2)
    ctx._qtw = acc
    return acc


def _target_blocks(n: int):
    total = n * n
    size = max(64, 1_048_576 // total)
    return [(r, min(r + size, total)) for r in range(0, total, size)]


def _run_blocks(fn, blocks):
    threads = thread_count()
    if threads == 1 or len(blocks) == 1:
        for b in blocks:
            fn(b)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(fn, blocks))


def operator_matrix(ctx: KernelContext) -> np.ndarray:
    """Dense weight matrix W with T g = (W @ g.ravel()).reshape(n, n),
    cached on the context.  Only available for moderate n."""
    if ctx.n > _MATRIX_MAX_N:
        raise HypotorusError(
            f"weight matrix at n={ctx.n} would exceed the memory budget")
    if ctx._wmat is not None:
        return ctx._wmat
    n = ctx.n
    total = n * n
    scale = ctx.h * ctx.h / (2.0j * np.pi)
    w = np.empty((total, total), dtype=complex)

    def fill(block):
        r0, r1 = block
        w[r0:r1] = _weight_rows(ctx, r0, r1) * scale

    _run_blocks(fill, _target_blocks(n))
    t = np.arange(total)
    w[t, t] += _qt_weights(ctx).ravel() / (2.0j * np.pi)
    ctx._wmat = w
    return w


def t_omega(ctx: KernelContext, g: GridFunction) -> GridFunction:
    """Apply the Cauchy-Pompeiu operator to a grid density."""
    if g.n != ctx.n:
        raise HypotorusError(f"grid mismatch: g.n={g.n}, ctx.n={ctx.n}")
    n = ctx.n
    if n <= _MATRIX_MAX_N:
        w = operator_matrix(ctx)
        vals = (w @ g.values.ravel()).reshape(n, n)
        return GridFunction(n, vals)
    gflat = g.values.ravel()
    h2 = ctx.h * ctx.h
    far = np.empty(n * n, dtype=complex)

    def fill(block):
        r0, r1 = block
        far[r0:r1] = _weight_rows(ctx, r0, r1) @ gflat

    _run_blocks(fill, _target_blocks(n))
    total = far.reshape(n, n) * h2 + _qt_weights(ctx) * g.values
    return GridFunction(n, total / (2.0j * np.pi))


# ------------------------------------------------------ point evaluation

def _axis_cells(c: float, n: int):
    """Cells (per axis) whose closure contains coordinate c mod 1."""
    f = (c % 1.0) * n
    r = round(f)
    if abs(f - r) < 1e-9:
        return [int(r - 1) % n, int(r) % n]
    return [int(math.floor(f)) % n]


def _quadtree_squares(cx: float, cy: float, half: float, sx: float, sy: float,
                      depth: int):
    """Evaluated (midpoint, side) tuples of the dyadic quadtree of the
    square centered (cx, cy) with half-width `half`, shrinking toward
    (sx, sy); the deepest squares still containing the point are dropped."""
    out_x, out_y, out_side = [], [], []
    current = [(cx, cy, half)]
    for _ in range(depth):
        nxt = []
        for (qx, qy, hf) in current:
            nh = hf / 2.0
            for ox in (-nh, nh):
                for oy in (-nh, nh):
                    mx, my = qx + ox, qy + oy
                    if abs(sx - mx) <= nh and abs(sy - my) <= nh:
                        nxt.append((mx, my, nh))
                    else:
                        out_x.append(mx)
                        out_y.append(my)
                        out_side.append(2.0 * nh)
        current = nxt
    return np.asarray(out_x), np.asarray(out_y), np.asarray(out_side)


def t_omega_point(ctx: KernelContext, g: GridFunction, p) -> complex:
    """Evaluate T g at an arbitrary point of the universal cover.

    The point is deliberately not reduced mod 1: the operator is
    quasi-periodic, not periodic, and the exact lattice shifts of the
    kernel produce the required additive constants.  When p sits on a cell
    edge or corner, every cell whose closure contains it is treated as
    singular; their quadtrees jointly restore the symmetric drop around p.
    """
    if g.n != ctx.n:
        raise HypotorusError(f"grid mismatch: g.n={g.n}, ctx.n={ctx.n}")
    pp = as_point(p)
    n, h = ctx.n, ctx.h
    zp = complex(ctx.zeval.at(pp.x, pp.y))
    sx, sy = pp.x % 1.0, pp.y % 1.0
    sing = [(i, j) for i in _axis_cells(pp.x, n) for j in _axis_cells(pp.y, n)]

    gv = g.values
    zs = ctx.z_centers.ravel()
    arg = zp - zs
    row = _kt(ctx, arg + ctx.z0)
    dist = _lattice_dist(ctx, arg)
    for (i, j) in sing:
        row[i * n + j] = 0.0
        dist[i * n + j] = np.inf
    thresh = (h / KAPPA) * ctx.coeff_size().ravel()
    cols = np.nonzero(dist < thresh)[0]
    if len(cols):
        refined = _refined_cell_integrals(
            ctx, np.full(len(cols), zp, dtype=complex), cols)
        row[cols] = refined / (h * h)
    total = (row @ gv.ravel()) * (h * h)

    depth = ctx.refine_depth + ctx.sigma_bump(pp.y)
    for (i, j) in sing:
        cx, cy = (i + 0.5) * h, (j + 0.5) * h
        # representative of the singular point nearest this cell's center
        rx = sx + round(cx - sx)
        ry = sy + round(cy - sy)
        qx, qy, side = _quadtree_squares(cx, cy, h / 2.0, rx, ry, depth)
        if len(qx):
            vals = _kt(ctx, zp - ctx.zeval.at(qx, qy) + ctx.z0)
            total += np.sum(vals * side * side) * gv[i, j]
    return complex(total / (2.0j * np.pi))
