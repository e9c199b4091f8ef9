"""Vector fields on the torus given by a closed 1-form a dx + b dy.

A field is specified by coefficient expressions; normalization rescales the
form so the x-period equals 1 and reflects y when needed so the resulting
modulus tau lands in the upper half plane.  The first integral Z is the path
integral of the form from the origin, a global homeomorphism of the torus
onto C / (Z + tau Z) for the fields treated here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import exprparser as ep
from .core import HypotorusError, Lattice, as_point

GL_ORDER = 16
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(GL_ORDER)


@dataclass(frozen=True)
class SigmaComponent:
    """One declared degenerate circle with its vanishing order."""

    sigma: float
    y0: float | None
    label: str


@dataclass(frozen=True)
class FieldSpec:
    name: str
    a_src: str
    b_src: str
    z_exact_src: str | None
    components: tuple[SigmaComponent, ...]

    @property
    def a_ast(self):
        return ep.parse_expr(self.a_src)

    @property
    def b_ast(self):
        return ep.parse_expr(self.b_src)

    @property
    def z_exact_ast(self):
        return ep.parse_expr(self.z_exact_src) if self.z_exact_src else None

    @property
    def sigma_max(self) -> float:
        return max((c.sigma for c in self.components), default=0.0)


def parse_sigma_hint(hint: str) -> float | None:
    """Hints of the form 'y=0.25' give the circle's ordinate; anything else
    is kept as an opaque label."""
    h = hint.replace(" ", "")
    if h.startswith("y="):
        try:
            return float(h[2:])
        except ValueError:
            return None
    return None


def _derived_field(name, z_src, components):
    z = ep.parse_expr(z_src)
    a = ep.to_string(ep.symbolic_diff(z, "x"))
    b = ep.to_string(ep.symbolic_diff(z, "y"))
    return FieldSpec(name, a, b, z_src, components)


@lru_cache(maxsize=None)
def build_field(name: str) -> FieldSpec:
    """Built-in fields, all already normalized (unit x-period, Im tau > 0)."""
    if name == "elliptic":
        return FieldSpec("elliptic", "1", "i", "x + i*y", ())
    if name == "degenerate_sin2":
        return FieldSpec(
            "degenerate_sin2",
            "1",
            "i*sin(pi*y)^2",
            "x + i*(y/2 - sin(2*pi*y)/(4*pi))",
            (SigmaComponent(2.0, 0.0, "y=0"),),
        )
    if name == "analytic_perturbed":
        return _derived_field(
            "analytic_perturbed",
            "x + i*y + 0.05*sin(2*pi*(x+y))",
            (),
        )
    if name == "degenerate_2d":
        return _derived_field(
            "degenerate_2d",
            "x + 0.05*sin(2*pi*x)*sin(pi*y)^2 + i*(y/2 - sin(2*pi*y)/(4*pi))",
            (SigmaComponent(2.0, 0.0, "y=0"),),
        )
    raise HypotorusError(f"unknown builtin field {name!r}")


BUILTIN_NAMES = ("elliptic", "degenerate_sin2", "analytic_perturbed",
                 "degenerate_2d")


# ------------------------------------------------------------- quadrature

def _gl_panels(fn, edges: np.ndarray) -> complex:
    lo = edges[:-1]
    hi = edges[1:]
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    nodes = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = fn(nodes)
    return complex(np.sum(half[:, None] * _GL_WEIGHTS[None, :] * vals))


def integrate_line(fn, lo: float, hi: float, breakpoints=(),
                   tol: float = 1e-10, max_panels: int = 4096) -> complex:
    """Composite 16-point Gauss-Legendre with panel doubling until the
    value moves by at most tol.  Panels are split at the given interior
    breakpoints (degenerate ordinates) from the start."""
    if hi == lo:
        return 0j
    sign = 1.0
    if hi < lo:
        lo, hi = hi, lo
        sign = -1.0
    pts = sorted({lo, hi} | {b for b in breakpoints if lo < b < hi})
    per_unit = max(1, math.ceil(8 * (hi - lo)))
    edges = []
    for a, b in zip(pts[:-1], pts[1:]):
        m = max(1, math.ceil(per_unit * (b - a) / (hi - lo)))
        edges.append(np.linspace(a, b, m + 1)[:-1])
    edges.append(np.array([hi]))
    edges = np.concatenate(edges)
    prev = _gl_panels(fn, edges)
    while len(edges) - 1 <= max_panels:
        mids = 0.5 * (edges[:-1] + edges[1:])
        edges = np.sort(np.concatenate([edges, mids]))
        cur = _gl_panels(fn, edges)
        if abs(cur - prev) <= tol:
            return sign * cur
        prev = cur
    raise HypotorusError(
        f"line quadrature failed to stabilize below {tol} "
        f"with {max_panels} panels")


# ----------------------------------------------------------- normalization

@dataclass(frozen=True)
class NormalizedField:
    """A field spec together with its normalization data.

    The normalized coefficients are a_n = scale*a_raw(x, +-y) and
    b_n = -+scale*b_raw(x, +-y), the sign and reflection fixed by flip_y.
    """

    spec: FieldSpec
    c1: complex
    c2: complex
    scale: complex
    flip_y: bool
    tau: complex
    lattice: Lattice
    a_n_src: str
    b_n_src: str
    z_n_src: str | None

    @property
    def a_ast(self):
        return ep.parse_expr(self.a_n_src)

    @property
    def b_ast(self):
        return ep.parse_expr(self.b_n_src)

    @property
    def z_exact_ast(self):
        return ep.parse_expr(self.z_n_src) if self.z_n_src else None

    def a(self, x, y):
        return ep.eval_expr(self.a_ast, x, y)

    def b(self, x, y):
        return ep.eval_expr(self.b_ast, x, y)

    @property
    def components(self):
        if not self.flip_y:
            return self.spec.components
        out = []
        for c in self.spec.components:
            y0 = None if c.y0 is None else (-c.y0) % 1.0
            out.append(SigmaComponent(c.sigma, y0, f"{c.label} (reflected)"))
        return tuple(out)

    @property
    def sigma_max(self) -> float:
        return self.spec.sigma_max

    def sigma_ordinates(self):
        return tuple(c.y0 for c in self.components if c.y0 is not None)


def periods(spec: FieldSpec, tol: float = 1e-10) -> tuple[complex, complex]:
    """(c1, c2) = (integral of a dx along y=0, integral of b dy along x=0)."""
    a_ast, b_ast = spec.a_ast, spec.b_ast
    ords = tuple(c.y0 for c in spec.components if c.y0 is not None)
    c1 = integrate_line(lambda t: ep.eval_expr(a_ast, t, np.zeros_like(t)),
                        0.0, 1.0, tol=tol)
    c2 = integrate_line(lambda t: ep.eval_expr(b_ast, np.zeros_like(t), t),
                        0.0, 1.0, breakpoints=ords, tol=tol)
    return c1, c2


def normalize(spec: FieldSpec) -> NormalizedField:
    """Rescale by 1/c1 and reflect y if needed so Im(tau) > 0."""
    c1, c2 = periods(spec)
    if abs((c1 * np.conj(c2)).imag) <= 1e-10:
        raise HypotorusError(
            f"periods c1={c1}, c2={c2} do not span: |Im(c1*conj(c2))| <= 1e-10")
    flip = (c2 / c1).imag <= 0.0
    scale = 1.0 / c1
    tau = (-c2 if flip else c2) / c1
    sc = ep.const(scale)

    def normalize_ast(src, negate=False):
        ast = ep.parse_expr(src)
        if flip:
            ast = ep.subst(ast, "y", ep.neg(ep.var("y")))
        out = ep.mul(sc, ast)
        return ep.to_string(ep.neg(out) if negate else out)

    a_n = normalize_ast(spec.a_src)
    b_n = normalize_ast(spec.b_src, negate=flip)
    z_n = normalize_ast(spec.z_exact_src) if spec.z_exact_src else None
    return NormalizedField(spec, c1, c2, scale, flip, complex(tau),
                           Lattice(complex(tau)), a_n, b_n, z_n)


def coeff_eval(nf: NormalizedField, p) -> tuple[complex, complex]:
    """Normalized coefficients (a, b) at a point."""
    pt = as_point(p)
    return (complex(nf.a(pt.x, pt.y)), complex(nf.b(pt.x, pt.y)))


def coeff_grid(nf: NormalizedField, n: int) -> tuple[np.ndarray, np.ndarray]:
    from .core import grid_centers

    x, y = grid_centers(n)
    return (np.asarray(nf.a(x, y), dtype=complex),
            np.asarray(nf.b(x, y), dtype=complex))


# ---------------------------------------------------------- first integral

def first_integral(nf: NormalizedField, p, path: str = "xy",
                   tol: float = 1e-10) -> complex:
    """Z(p): the form integrated from (0,0) along axis-parallel legs.

    path 'xy' goes through (x, 0); path 'yx' through (0, y).  The two must
    agree because the form is closed; their difference is a quadrature
    diagnostic.
    """
    pt = as_point(p)
    x, y = pt.x, pt.y
    a_ast, b_ast = nf.a_ast, nf.b_ast
    ords = nf.sigma_ordinates()
    shifted = tuple(o + k for o in ords for k in range(-2, 3))
    if path == "xy":
        leg1 = integrate_line(
            lambda t: ep.eval_expr(a_ast, t, np.zeros_like(t)), 0.0, x, tol=tol)
        leg2 = integrate_line(
            lambda t: ep.eval_expr(b_ast, np.full_like(t, x), t), 0.0, y,
            breakpoints=shifted, tol=tol)
    elif path == "yx":
        leg1 = integrate_line(
            lambda t: ep.eval_expr(b_ast, np.zeros_like(t), t), 0.0, y,
            breakpoints=shifted, tol=tol)
        leg2 = integrate_line(
            lambda t: ep.eval_expr(a_ast, t, np.full_like(t, y)), 0.0, x, tol=tol)
    else:
        raise HypotorusError(f"unknown path {path!r}")
    return leg1 + leg2


class ZEvaluator:
    """Fast evaluation of the first integral on and off the sample grid.

    With an exact integral expression, evaluation is direct.  Otherwise the
    cell-center values are accumulated once with per-cell Gauss-Legendre
    panels, and off-center points integrate the form along the short
    straight segment from the nearest memoized center; quasi-periodicity
    extends everything off the unit square exactly.
    """

    def __init__(self, nf: NormalizedField, n: int):
        self.nf = nf
        self.n = n
        self.tau = nf.tau
        self._exact = nf.z_exact_ast
        if self._exact is not None:
            self._anchor = ep.eval_expr(self._exact, 0.0, 0.0)
            self._centers = None
        else:
            self._anchor = 0j
            self._centers = self._build_centers()

    def _build_centers(self) -> np.ndarray:
        n = self.n
        nf = self.nf
        a_ast, b_ast = nf.a_ast, nf.b_ast
        centers = (np.arange(n) + 0.5) / n
        edges = np.concatenate([[0.0], centers])
        ords = nf.sigma_ordinates()

        def leg_integrals(ast, fixed_x=None):
            # integral over [edges[m], edges[m+1]] for every m, GL panels,
            # split at degenerate ordinates
            segs = []
            for lo, hi in zip(edges[:-1], edges[1:]):
                cut = sorted({lo, hi} | {o for o in ords
                                         if fixed_x is not None and lo < o < hi})
                segs.append(list(zip(cut[:-1], cut[1:])))
            out = np.zeros((n,) if fixed_x is None else (len(fixed_x), n),
                           dtype=complex)
            for m, pieces in enumerate(segs):
                for lo, hi in pieces:
                    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
                    t = mid + half * _GL_NODES
                    if fixed_x is None:
                        vals = ep.eval_expr(a_ast, t, np.zeros_like(t))
                        out[m] += half * np.sum(_GL_WEIGHTS * vals)
                    else:
                        xs = np.asarray(fixed_x)[:, None]
                        vals = ep.eval_expr(b_ast, np.broadcast_to(
                            xs, (len(fixed_x), GL_ORDER)), np.broadcast_to(
                            t[None, :], (len(fixed_x), GL_ORDER)))
                        out[:, m] += half * np.sum(_GL_WEIGHTS[None, :] * vals,
                                                   axis=1)
            return out

        x_leg = np.cumsum(leg_integrals(a_ast))
        y_legs = np.cumsum(leg_integrals(b_ast, fixed_x=centers), axis=1)
        return x_leg[:, None] + y_legs

    @property
    def centers(self) -> np.ndarray:
        """Z at the n x n cell centers, shape (n, n), x along axis 0."""
        if self._centers is None:
            from .core import grid_centers

            x, y = grid_centers(self.n)
            self._centers = ep.eval_expr(self._exact, x, y) - self._anchor
        return self._centers

    def at(self, x, y) -> np.ndarray:
        """Z at arbitrary points (vectorized)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self._exact is not None:
            return ep.eval_expr(self._exact, x, y) - self._anchor
        jj = np.floor(x)
        kk = np.floor(y)
        xr, yr = x - jj, y - kk
        n = self.n
        ix = np.clip(np.round(xr * n - 0.5).astype(int), 0, n - 1)
        iy = np.clip(np.round(yr * n - 0.5).astype(int), 0, n - 1)
        cx = (ix + 0.5) / n
        cy = (iy + 0.5) / n
        dx = xr - cx
        dy = yr - cy
        t = 0.5 * (_GL_NODES + 1.0)
        w = 0.5 * _GL_WEIGHTS
        px = cx[..., None] + np.multiply.outer(dx, t)
        py = cy[..., None] + np.multiply.outer(dy, t)
        av = ep.eval_expr(self.nf.a_ast, px, py)
        bv = ep.eval_expr(self.nf.b_ast, px, py)
        seg = np.sum(w * (av * dx[..., None] + bv * dy[..., None]), axis=-1)
        return self.centers[ix, iy] + seg + jj + kk * self.tau


# ----------------------------------------------------- characteristic set

@dataclass
class ComponentReport:
    label: str
    declared_sigma: float
    fitted_rate: float | None
    rate_mismatch: bool


@dataclass
class CharReport:
    sigma_max: float
    components: list
    min_abs_off_sigma: float
    max_abs: float
    sign_fixed: bool
    orientation: int  # sign of Im(a*conj(b)) away from the degenerate set


def char_set_info(nf: NormalizedField, probe_n: int = 128) -> CharReport:
    """Sample Im(a*conj(b)), fit vanishing rates at declared circles, and
    confirm the sign never flips (ellipticity away from the circles)."""
    from .core import grid_centers

    x, y = grid_centers(probe_n)
    im = np.asarray((nf.a(x, y) * np.conj(nf.b(x, y))).imag, dtype=float)
    pos = float(im.max())
    neg = float(im.min())
    sign_fixed = not (pos > 1e-12 and neg < -1e-12)
    orientation = 1 if pos > -neg else -1

    ords = nf.sigma_ordinates()
    if ords:
        dist = np.full_like(im, np.inf)
        for y0 in ords:
            d = np.abs((y - y0 + 0.5) % 1.0 - 0.5)
            dist = np.minimum(dist, d)
        off = np.abs(im)[dist > 0.1]
        min_off = float(off.min()) if off.size else float("nan")
    else:
        min_off = float(np.abs(im).min())

    comps = []
    xs = (np.arange(8) + 0.5) / 8
    for c in nf.components:
        if c.y0 is None:
            comps.append(ComponentReport(c.label, c.sigma, None, False))
            continue
        ds = 2.0 ** -(np.arange(8) + 3)
        vals = []
        for d in ds:
            v = 0.5 * (np.abs((nf.a(xs, c.y0 + d)
                               * np.conj(nf.b(xs, c.y0 + d))).imag).mean()
                       + np.abs((nf.a(xs, c.y0 - d)
                                 * np.conj(nf.b(xs, c.y0 - d))).imag).mean())
            vals.append(v)
        vals = np.asarray(vals)
        if np.any(vals <= 0):
            comps.append(ComponentReport(c.label, c.sigma, None, True))
            continue
        slope = float(np.polyfit(np.log(ds), np.log(vals), 1)[0])
        comps.append(ComponentReport(
            c.label, c.sigma, slope, abs(slope - c.sigma) > 0.3))
    return CharReport(nf.sigma_max, comps, min_off,
                      max(abs(pos), abs(neg)), sign_fixed, orientation)
