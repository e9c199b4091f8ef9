"""Third theta function on Z + tau*Z, its derivative and logarithmic derivative.

The series used is

    Theta(z) = sum_m exp(i*pi*m^2*tau) * exp(2*pi*i*m*z),

which satisfies Theta(z+1) = Theta(z), Theta(z+tau) = exp(-i*pi*tau -
2*pi*i*z) * Theta(z), and has its only zero in the fundamental cell at
z0 = (1+tau)/2.  Arguments are lattice-reduced before summation and the
quasi-periodicity factors are multiplied back exactly, so evaluation never
overflows for moderate lattice shifts.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .core import HypotorusError, Lattice, lattice_reduce


class PoleProximityError(HypotorusError):
    """Logarithmic derivative requested within 1e-13 of a theta zero."""


def truncation_terms(tau: complex, tol: float) -> int:
    """Smallest M so the tail sum_{|m|>M} e^{-pi*Im(tau)*m^2} e^{2*pi*|m|*ymax}
    stays below tol, with ymax = 2*Im(tau).

    Found by direct tail summation.  closed_form_terms gives the cheap upper
    bound; the tests confirm it dominates this value.
    """
    tau = complex(tau)
    if tau.imag <= 0.0:
        raise HypotorusError(f"need Im(tau) > 0, got {tau}")
    if not tol > 0.0:
        raise HypotorusError(f"need tol > 0, got {tol}")
    b = math.pi * tau.imag
    ymax = 2.0 * tau.imag
    m_hi = closed_form_terms(tau, tol) + 64

    def log_term(m: int) -> float:
        return -b * m * m + 2.0 * math.pi * m * ymax + math.log(2.0)

    tail = 0.0
    tails = {}
    for m in range(m_hi, 0, -1):
        lt = log_term(m)
        tail += math.exp(lt) if lt > -745.0 else 0.0
        tails[m - 1] = tail
    for M in range(0, m_hi):
        if tails[M] <= tol:
            return M
    raise HypotorusError("truncation search failed to converge")


def closed_form_terms(tau: complex, tol: float) -> int:
    """Conservative closed-form bound for the same tail criterion."""
    tau = complex(tau)
    ymax = 2.0 * tau.imag
    m = math.ceil(math.sqrt(math.log(1.0 / tol) / (math.pi * tau.imag)))
    return int(m + 2 * math.ceil(ymax / tau.imag) + 2)


@dataclass
class ThetaContext:
    """Precomputed series data for one lattice and accuracy target."""

    lattice: Lattice
    tol: float = 1e-14
    m_max: int = 0

    # per-term update factors e^{i*pi*(2m-1)*tau}, m = 1..m_max
    _rho: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if not (0.0 < self.tol <= 1e-6):
            raise HypotorusError(
                f"theta tolerance must lie in (0, 1e-6], got {self.tol}")
        needed = truncation_terms(self.lattice.tau, self.tol)
        if self.m_max == 0:
            self.m_max = needed
        elif self.m_max < needed:
            raise HypotorusError(
                f"m_max={self.m_max} below required {needed}")
        m = np.arange(1, self.m_max + 1)
        self._rho = np.exp(1j * math.pi * (2 * m - 1) * self.lattice.tau)

    @property
    def zero_point(self) -> complex:
        return self.lattice.zero_point


def theta_context(tau: complex, tol: float = 1e-14) -> ThetaContext:
    return ThetaContext(Lattice(complex(tau)), tol)


def _series_pair(ctx: ThetaContext, w):
    """(Theta(w), Theta'(w)) for reduced arguments w, vectorized.

    Terms are accumulated through the ratio recurrence t_m = t_{m-1} *
    rho_m * u^{+-1} with u = e^{2*pi*i*w}; every partial product stays
    bounded by e^{pi*Im(tau)} for w in the fundamental cell.
    """
    w = np.asarray(w, dtype=complex)
    u = np.exp(2j * math.pi * w)
    uinv = 1.0 / u
    s0 = np.ones_like(u)
    s1 = np.zeros_like(u)
    tp = np.ones_like(u)
    tn = np.ones_like(u)
    for m in range(1, ctx.m_max + 1):
        r = ctx._rho[m - 1]
        tp = tp * (r * u)
        tn = tn * (r * uinv)
        s0 = s0 + (tp + tn)
        s1 = s1 + (2j * math.pi * m) * (tp - tn)
    return s0, s1


def theta_eval(ctx: ThetaContext, z: complex) -> complex:
    """Theta(z), valid for any z reachable without overflowing the
    quasi-periodicity factor (|k| up to a few dozen for tau = i)."""
    w, j, k = lattice_reduce(z, ctx.lattice.tau)
    s0, _ = _series_pair(ctx, w)
    factor = np.exp(-1j * math.pi * k * k * ctx.lattice.tau
                    - 2j * math.pi * k * w)
    out = factor * s0
    return complex(out) if np.ndim(z) == 0 else out


def theta_deriv(ctx: ThetaContext, z: complex) -> complex:
    """Theta'(z) via the termwise-differentiated series and the exact
    derivative of the reduction factor."""
    w, j, k = lattice_reduce(z, ctx.lattice.tau)
    s0, s1 = _series_pair(ctx, w)
    factor = np.exp(-1j * math.pi * k * k * ctx.lattice.tau
                    - 2j * math.pi * k * w)
    out = factor * (s1 - 2j * math.pi * k * s0)
    return complex(out) if np.ndim(z) == 0 else out


def _zero_distance(ctx: ThetaContext, w) -> np.ndarray:
    """Distance from reduced w to the nearest lattice copy of the zero."""
    tau = ctx.lattice.tau
    z0 = ctx.zero_point
    w = np.asarray(w, dtype=complex)
    d = np.full(w.shape, np.inf)
    for dj in (-1, 0, 1):
        for dk in (-1, 0, 1):
            d = np.minimum(d, np.abs(w - (z0 + dj + dk * tau)))
    return d


def theta_log_deriv(ctx: ThetaContext, z) -> complex:
    """Theta'(z)/Theta(z).

    The lattice shift contributes the exact additive -2*pi*i*k, so this is
    stable for arbitrarily large arguments.  Raises PoleProximityError
    within 1e-13 of a zero of Theta.
    """
    w, j, k = lattice_reduce(z, ctx.lattice.tau)
    if np.any(_zero_distance(ctx, w) < 1e-13):
        raise PoleProximityError("argument within 1e-13 of a theta zero")
    s0, s1 = _series_pair(ctx, w)
    out = s1 / s0 - 2j * math.pi * np.asarray(k)
    return complex(out) if np.ndim(z) == 0 else out


def theta_log_deriv_raw(ctx: ThetaContext, z: np.ndarray) -> np.ndarray:
    """Vectorized Theta'/Theta without the pole-distance guard.

    Quadrature callers keep their nodes a provable distance from the zeros;
    skipping the nine-translate distance scan there saves a third of the
    kernel evaluation cost.
    """
    w, j, k = lattice_reduce(z, ctx.lattice.tau)
    s0, s1 = _series_pair(ctx, w)
    return s1 / s0 - 2j * math.pi * k
