"""Jost-function modulus, spectral density, and the Krein characteristic
function g(k) = |F(k)|^-2 - 1.

|F(E)| comes from the bound-state product times the exponential of a
principal-value dispersion integral over the phase curve.  The PV integral
is evaluated by singularity subtraction with the analytic log correction;
the parts of the E' axis outside the tabulated curve are handled with the
low-energy form delta ~ delta(0) - s sqrt(E') and the high-energy tail
delta ~ a1/k' + a3/k'^3 + a5/k'^5, both integrated in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from .errors import ConvergenceError, DomainError
from .solver import BoundSpectrum, PhaseCurve


def _tail_pv_integral(coeffs, c_const, k_max, k) -> float:
    """integral_{Emax}^inf delta(E') dE'/(E' - E) with the tail expansion,
    in closed form; k = sqrt(E/C), k_max = sqrt(Emax/C), k < k_max."""
    a1, a3, a5 = coeffs
    if k >= k_max:
        raise DomainError("subtraction point above the tabulated curve")
    L = math.log((k_max + k) / (k_max - k))
    i0 = L / (2.0 * k)                                   # int dk'/(k'^2-k^2)
    i2 = (i0 - 1.0 / k_max) / k**2                       # int dk'/(k'^2 (k'^2-k^2))
    i4 = (i2 - 1.0 / (3.0 * k_max**3)) / k**2            # int dk'/(k'^4 (k'^2-k^2))
    return 2.0 * (a1 * i0 + a3 * i2 + a5 * i4)


def _low_pv_integral(curve: PhaseCurve, c_const, e_lo, energy) -> float:
    """integral_0^{Emin} delta(E') dE'/(E' - E) using the effective low-E
    form delta(E') = d0 - s sqrt(E'), in closed form (E > Emin)."""
    d1 = float(curve.delta[0])
    d2 = float(curve.delta[1])
    k1 = math.sqrt(float(curve.energies[0]) / c_const)
    k2 = math.sqrt(float(curve.energies[1]) / c_const)
    s = (d1 - d2) / (k2 - k1)
    d0 = d1 + s * k1
    se = math.sqrt(energy)
    sm = math.sqrt(e_lo)
    # int_0^m dE'/(E'-E) and int_0^m sqrt(E') dE'/(E'-E), E > m
    j0 = math.log((energy - e_lo) / energy)
    j1 = 2.0 * sm + se * math.log((se - sm) / (se + sm))
    s_k = s / math.sqrt(c_const)   # slope against sqrt(E')
    return d0 * j0 - s_k * j1


def ln_jost_modulus(curve: PhaseCurve, spectrum: BoundSpectrum,
                    energy: float) -> float:
    """ln |F(E)| for E > 0 via the dispersion representation."""
    if energy <= 0:
        raise DomainError("Jost modulus defined for E > 0 here")
    e_lo, e_hi = curve.e_min, curve.e_max
    if not (e_lo * 4.0 < energy < e_hi / 1.5):
        raise DomainError(
            f"E={energy:g} too close to the tabulated curve edge [{e_lo:g}, {e_hi:g}]"
        )
    c_const = curve.system.c_const
    d_e = float(curve.delta_at(energy))
    log_e = math.log(energy)

    def integrand(le):
        ep = math.exp(le)
        if abs(ep - energy) < 1e-9 * energy:
            # removable point: (delta(E') - delta(E))/(E' - E) -> delta'(E)
            return float(curve._spline(le, 1))
        return (float(curve._spline(le)) - d_e) / (ep - energy) * ep

    val, err = quad(integrand, math.log(e_lo), math.log(e_hi),
                    points=[log_e], limit=400, epsabs=1e-10, epsrel=1e-9)
    if err > 1e-5:
        raise ConvergenceError(f"PV quadrature error {err:g} too large at E={energy:g}")
    val += d_e * math.log((e_hi - energy) / energy)  # subtraction log term, E' in (0, Emax)
    # the [0, Emin) piece was included in the log term with delta(E); swap in
    # the true low-E behaviour
    val -= d_e * math.log((energy - e_lo) / energy)
    val += _low_pv_integral(curve, c_const, e_lo, energy)
    k = math.sqrt(energy / c_const)
    k_max = math.sqrt(e_hi / c_const)
    val += _tail_pv_integral(curve.tail, c_const, k_max, k)

    ln_f = -val / math.pi
    for e_n in np.atleast_1d(spectrum.energies):
        ln_f += math.log(abs(1.0 - e_n / energy))
    return ln_f


def jost_modulus(curve: PhaseCurve, spectrum: BoundSpectrum,
                 energy: float) -> float:
    """|F(E)|, bound-state product times the dispersion exponential."""
    return math.exp(ln_jost_modulus(curve, spectrum, energy))


@dataclass
class JostModulus:
    """|F| tabulated on a k grid (stored as ln|F| against ln k)."""

    k_grid: np.ndarray
    ln_f: np.ndarray
    system: object
    bound_energies: np.ndarray
    _spline: object = field(default=None, repr=False)

    def __post_init__(self):
        if self._spline is None:
            self._spline = CubicSpline(np.log(self.k_grid), self.ln_f)

    @property
    def k_min(self):
        return float(self.k_grid[0])

    @property
    def k_max(self):
        return float(self.k_grid[-1])

    def ln_modulus_k(self, k):
        k = np.asarray(k, dtype=float)
        return self._spline(np.log(k))

    def modulus(self, energy):
        k = np.sqrt(np.asarray(energy, dtype=float) / self.system.c_const)
        return np.exp(self._spline(np.log(k)))


def build_jost(curve: PhaseCurve, spectrum: BoundSpectrum,
               k_lo: float, k_hi: float, n_points: int = 420,
               k_shoulder: Optional[float] = None) -> JostModulus:
    """Tabulate ln|F| on a log-k grid, densified around the k0 shoulder."""
    if not (0 < k_lo < k_hi):
        raise DomainError("need 0 < k_lo < k_hi")
    ks = np.exp(np.linspace(math.log(k_lo), math.log(k_hi), n_points))
    if k_shoulder is not None:
        extra = np.linspace(0.35 * k_shoulder, 3.0 * k_shoulder, n_points // 2)
        ks = np.unique(np.concatenate([ks, extra]))
    c = curve.system.c_const
    vals = np.array([ln_jost_modulus(curve, spectrum, c * k * k) for k in ks])
    return JostModulus(ks, vals, curve.system, np.atleast_1d(spectrum.energies))


def spectral_density(jost: JostModulus, spectrum: BoundSpectrum, energy):
    """Continuous part pi^-1 sqrt(E) |F(E)|^-2 for E >= 0; for E < 0 the
    discrete weight list [(E_n, C_n)]."""
    if np.ndim(energy) == 0 and energy < 0:
        return list(zip(np.atleast_1d(spectrum.energies),
                        np.atleast_1d(spectrum.norming_constants)))
    energy = np.asarray(energy, dtype=float)
    if np.any(energy < 0):
        raise DomainError("vector input must be nonnegative energies")
    out = np.where(energy > 0,
                   np.sqrt(np.maximum(energy, 0.0))
                   / np.pi / np.maximum(jost.modulus(np.maximum(energy, jost.system.c_const * jost.k_min**2)), 1e-300) ** 2,
                   0.0)
    return float(out) if out.ndim == 0 else out


@dataclass
class GFunction:
    """g(k) = |F(k)|^-2 - 1 with asymptotic tail coefficients.

    Below the tabulated grid g is -1 to the accuracy |F|^-2 at the low edge
    (immense |F| there); above k_a the inverse-power tail applies, with b1
    pinned to -V(0)/(2C) and b2, b3 fitted on [k_a, k_grid_max] and frozen.
    """

    jost: JostModulus
    k0: float
    k_a: float
    b1: float
    b2: float
    b3: float

    @property
    def k_grid(self):
        return self.jost.k_grid

    def tail(self, k):
        k = np.asarray(k, dtype=float)
        return self.b1 / k**2 + self.b2 / k**4 + self.b3 / k**6

    def g_at(self, k):
        k = np.asarray(k, dtype=float)
        scalar = k.ndim == 0
        k = np.atleast_1d(k)
        out = np.empty_like(k)
        low = k < self.jost.k_min
        high = k > self.jost.k_max
        mid = ~(low | high)
        out[low] = -1.0
        out[mid] = np.expm1(-2.0 * self.jost.ln_modulus_k(k[mid]))
        out[high] = self.tail(k[high])
        return float(out[0]) if scalar else out

    def __call__(self, k):
        return self.g_at(k)


def g_function(jost: JostModulus, k) -> float:
    """Pointwise g(k) from a tabulated Jost modulus (-1 below the grid)."""
    k = float(k)
    if k <= 0:
        raise DomainError("g(k) defined for k > 0")
    if k < jost.k_min:
        return -1.0
    if k > jost.k_max:
        raise DomainError("k above the tabulated grid; use the fitted tail")
    return float(np.expm1(-2.0 * jost.ln_modulus_k(k)))


def g_tail(gf: GFunction, k) -> float:
    """Fitted asymptote b1/k^2 + b2/k^4 + b3/k^6, valid for k >= k_a."""
    k = float(k)
    if k < gf.k_a:
        raise DomainError(f"k={k:g} below the asymptotic regime k_a={gf.k_a:g}")
    return float(gf.tail(k))


def build_g_function(jost: JostModulus, potential, k_a: float) -> GFunction:
    """Assemble g(k) with its frozen tail fit.

    b1 is computed from V(0), not fitted; b2 and b3 minimize the residual of
    k^2 g(k) - b1 against [1/k^2, 1/k^4] on the window [k_a, k_grid_max].
    """
    c = potential.system.c_const
    v0 = potential.v_at_zero
    k0 = math.sqrt(v0 / c)
    b1 = -v0 / (2.0 * c)
    ks = jost.k_grid[jost.k_grid >= k_a]
    if len(ks) < 8:
        raise DomainError("tail window holds fewer than 8 grid points")
    g_vals = np.expm1(-2.0 * jost.ln_modulus_k(ks))
    rhs = g_vals * ks**2 - b1
    basis = np.vstack([1.0 / ks**2, 1.0 / ks**4]).T
    (b2, b3), *_ = np.linalg.lstsq(basis, rhs, rcond=None)
    return GFunction(jost, k0, k_a, b1, float(b2), float(b3))
