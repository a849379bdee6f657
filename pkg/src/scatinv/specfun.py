"""Configurable-precision special functions.

The scattering solver needs the amplitude/phase split of

    w(z) = exp(-z/2) 1F1(i mu; 2 i mu + 1; z) = A(z) exp(i B(z))

evaluated reliably for real mu and real z up to a few hundred, where the
primary Kummer series suffers severe cancellation.  Three routes are
provided: the primary series (`kummer_direct`), the reduced series specific
to c = 2a + 1 (`pseudo_ab`), and the Buchholz polynomial expansion in 0F1
factors (`buchholz_ab`).  All of them pick their internal big-float
precision automatically from the requested output digits plus the observed
term growth.

Bernoulli numbers follow the old-style convention B1=1/6, B2=1/30, B3=1/42,
i.e. B_n here equals |B_{2n}| of the modern signed convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import mpmath as mp

from .errors import DomainError, PrecisionError

_CONSECUTIVE_SMALL = 5


@dataclass(frozen=True)
class Precision:
    """Requested output precision for a special-function evaluation."""

    decimal_digits: int = 30
    guard_digits: int = 10
    max_terms: int = 20000

    def __post_init__(self):
        if self.decimal_digits < 30:
            raise DomainError("decimal_digits must be >= 30")
        if self.guard_digits < 10:
            raise DomainError("guard_digits must be >= 10")

    @property
    def tol_exponent(self) -> int:
        return self.decimal_digits + self.guard_digits


DEFAULT_PRECISION = Precision()


# -- Bernoulli numbers ------------------------------------------------------

_bernoulli_even: list = [Fraction(1)]  # modern B_0, B_2, B_4, ... cache
_bernoulli_all: list = [Fraction(1)]   # modern B_0, B_1, B_2, ... cache


def _extend_modern_bernoulli(m: int) -> None:
    """Grow the modern-convention cache up to index m via the defining
    recursion sum_k binom(m+1, k) B_k = 0."""
    while len(_bernoulli_all) <= m:
        j = len(_bernoulli_all)
        acc = Fraction(0)
        for k in range(j):
            acc += Fraction(math.comb(j + 1, k)) * _bernoulli_all[k]
        _bernoulli_all.append(-acc / (j + 1))


def bernoulli(n: int) -> Fraction:
    """Old-style Bernoulli number B_n (all positive); B_1 = 1/6.

    Equals |B_{2n}| in the modern signed convention.
    """
    if n < 1 or int(n) != n:
        raise DomainError("old-style Bernoulli numbers start at n = 1")
    n = int(n)
    _extend_modern_bernoulli(2 * n)
    return abs(_bernoulli_all[2 * n])


class BernoulliTable:
    """Read-only prefix of the old-style Bernoulli sequence."""

    def __init__(self, count: int):
        self.values = tuple(bernoulli(n) for n in range(1, count + 1))

    def __getitem__(self, n: int) -> Fraction:
        return self.values[n - 1]

    def __len__(self):
        return len(self.values)


# -- Pochhammer -------------------------------------------------------------

def pochhammer(a, n: int):
    """(a)_n = a (a+1) ... (a+n-1); 1 for n = 0.  Exact for exact inputs."""
    if n < 0 or int(n) != n:
        raise DomainError("pochhammer order must be a nonnegative integer")
    out = 1
    for k in range(int(n)):
        out = out * (a + k)
    return out


# -- amplitude/phase container ----------------------------------------------

@dataclass(frozen=True)
class AmplitudePhase:
    """Polar split w = A exp(iB); B unwrapped when produced with unwrap=True."""

    amplitude: object   # mpf
    phase: object       # mpf

    @property
    def value(self):
        return self.amplitude * mp.e**(1j * self.phase)


def _split(w, reference_phase=None):
    """Polar split; phase moved to the 2 pi branch nearest reference_phase."""
    amp = abs(w)
    ph = mp.arg(w)
    if reference_phase is not None:
        two_pi = 2 * mp.pi
        ph += two_pi * mp.nint((reference_phase - ph) / two_pi)
    return AmplitudePhase(amp, ph)


# -- primary Kummer series ---------------------------------------------------

def _estimate_extra_digits(a, c, z) -> int:
    """Cheap float walk of |t_{n+1}/t_n| to bound the largest series term."""
    a, c, z = complex(a), complex(c), complex(z)
    log_t = 0.0
    log_max = 0.0
    n = 0
    cap = int(4 * abs(z)) + 400
    while n < cap:
        denom = (c + n) * (n + 1)
        if denom == 0:
            return 0
        ratio = abs((a + n) * z / denom)
        if ratio == 0:
            break
        log_t += math.log10(ratio)
        log_max = max(log_max, log_t)
        if log_t < log_max - 40 and ratio < 0.5:
            break
        n += 1
    return int(math.ceil(max(0.0, log_max)))


def kummer_direct(a, c, z, prec: Precision = DEFAULT_PRECISION):
    """Kummer 1F1(a; c; z) by its primary power series.

    Works for complex arguments; c must not be a nonpositive integer.  The
    working precision is raised automatically when intermediate terms exceed
    the requested output scale.  Returns an mpc.
    """
    if complex(c).imag == 0:
        creal = complex(c).real
        if creal <= 0 and creal == int(creal):
            raise DomainError("1F1 undefined for c a nonpositive integer")
    extra = _estimate_extra_digits(a, c, z)
    dps = prec.tol_exponent + extra + 5
    with mp.workdps(dps):
        am, cm, zm = mp.mpmathify(a), mp.mpmathify(c), mp.mpmathify(z)
        tol = mp.mpf(10) ** (-prec.tol_exponent)
        s = mp.mpc(1)
        term = mp.mpc(1)
        small = 0
        for n in range(prec.max_terms):
            term = term * (am + n) * zm / ((cm + n) * (n + 1))
            s += term
            if abs(term) < tol * abs(s):
                small += 1
                if small >= _CONSECUTIVE_SMALL:
                    return +s
            else:
                small = 0
        raise PrecisionError(
            f"1F1 series not converged after {prec.max_terms} terms at "
            f"{dps} digits; estimated extra digits needed: {extra}",
            digits_estimate=dps,
        )


def hyp0f1(c, z, prec: Precision = DEFAULT_PRECISION):
    """0F1(; c; z) = sum z^n / (n! (c)_n), complex arguments allowed."""
    if complex(c).imag == 0:
        creal = complex(c).real
        if creal <= 0 and creal == int(creal):
            raise DomainError("0F1 undefined for c a nonpositive integer")
    # same growth logic with a = absent (ratio z/((c+n)(n+1)))
    zc, cc = complex(z), complex(c)
    log_t, log_max, n = 0.0, 0.0, 0
    while n < int(4 * math.sqrt(abs(zc) + 1)) + 200:
        denom = abs((cc + n) * (n + 1))
        if denom == 0:
            break
        ratio = abs(zc) / denom
        if ratio == 0:
            break
        log_t += math.log10(ratio)
        log_max = max(log_max, log_t)
        if log_t < log_max - 40 and ratio < 0.5:
            break
        n += 1
    dps = prec.tol_exponent + int(math.ceil(max(0.0, log_max))) + 5
    with mp.workdps(dps):
        cm, zm = mp.mpmathify(c), mp.mpmathify(z)
        tol = mp.mpf(10) ** (-prec.tol_exponent)
        s = mp.mpc(1)
        term = mp.mpc(1)
        small = 0
        for n in range(prec.max_terms):
            term = term * zm / ((cm + n) * (n + 1))
            s += term
            if abs(term) < tol * abs(s):
                small += 1
                if small >= _CONSECUTIVE_SMALL:
                    return +s
            else:
                small = 0
        raise PrecisionError("0F1 series not converged", digits_estimate=dps)


def kummer_w(mu0: float, z: float, prec: Precision = DEFAULT_PRECISION):
    """w(z) = exp(-z/2) 1F1(i mu0; 2 i mu0 + 1; z) via the primary series."""
    with mp.workdps(prec.tol_exponent + _estimate_extra_digits(1j * mu0, 1 + 2j * mu0, z) + 5):
        a = 1j * mp.mpmathify(mu0)
        M = kummer_direct(a, 2 * a + 1, z, prec)
        return mp.e**(-mp.mpmathify(z) / 2) * M


# -- reduced series for the pseudo-Morse case (c = 2a + 1) -------------------

def _pseudo_sum(mu0, z, dps, prec):
    with mp.workdps(dps):
        z4 = mp.mpmathify(z) / 4
        base = mp.mpc(mp.mpf(1) / 2, mu0)
        tol = mp.mpf(10) ** (-prec.tol_exponent)
        pref = mp.mpc(1)
        s = mp.mpc(0)
        max_term = mp.mpf(0)
        small = 0
        for n in range(prec.max_terms):
            term = pref * (1 - z4 / (base + n))
            s += term
            max_term = max(max_term, abs(term))
            pref = pref * z4 * z4 / ((n + 1) * (base + n))
            if abs(term) < tol * abs(s) and n > 0:
                small += 1
                if small >= _CONSECUTIVE_SMALL:
                    return +s, max_term
            else:
                small = 0
        raise PrecisionError("pseudo-Morse reduced series not converged",
                             digits_estimate=dps)


def pseudo_ab(mu0: float, z: float, prec: Precision = DEFAULT_PRECISION,
              unwrap: bool = True) -> AmplitudePhase:
    """A(z), B(z) from the reduced series valid for c = 2a + 1.

    With unwrap=True the phase is continued continuously from B(0) = 0 by
    marching along z; unwrap=False returns the principal-branch phase.
    """
    if z < 0:
        raise DomainError("z must be nonnegative")
    return _ab_eval(_pseudo_eval, mu0, z, prec, unwrap)


def _pseudo_eval(mu0, z, prec):
    dps = prec.tol_exponent + 10
    for _ in range(4):
        with mp.workdps(dps):
            s, max_term = _pseudo_sum(mu0, z, dps, prec)
            need = prec.tol_exponent + int(mp.ceil(mp.log10(max_term / abs(s)))) + 5 \
                if abs(s) > 0 else dps + 30
        if dps >= need:
            return s
        dps = need + 10
    raise PrecisionError("pseudo-Morse series precision loop did not settle",
                         digits_estimate=dps)


# -- Buchholz polynomial expansion -------------------------------------------

def _mpf_bernoulli(n: int):
    frac = bernoulli(n)
    return mp.mpf(frac.numerator) / frac.denominator


class _BuchholzTables:
    """f_s(b) and g_m(z) recursion tables, local to one (mu0, z) evaluation."""

    def __init__(self, b, z):
        self.b = b
        self.z = z
        self.f = [mp.mpc(1)]
        self.g = [mp.mpc(1)]

    def fs(self, s: int):
        while len(self.f) <= s:
            j = len(self.f)
            acc = mp.mpc(0)
            for r in range(j):
                acc += (mp.binomial(2 * j - 1, 2 * r)
                        * mp.mpf(4) ** (j - r)
                        * _mpf_bernoulli(j - r)
                        / (j - r) * self.f[r])
            self.f.append(-(self.b / 2 - 1) * acc)
        return self.f[s]

    def gm(self, m: int):
        while len(self.g) <= m:
            j = len(self.g)
            acc = mp.mpc(0)
            for k in range((j - 1) // 2 + 1):
                acc += (mp.binomial(j - 1, 2 * k)
                        * mp.mpf(4) ** (k + 1)
                        * _mpf_bernoulli(k + 1)
                        / (k + 1) * self.g[j - 2 * k - 1])
            self.g.append(-(1j * self.z / 4) * acc)
        return self.g[m]

    def p(self, n: int):
        """Buchholz polynomial p_n(b, z)."""
        acc = mp.mpc(0)
        for s in range(n // 2 + 1):
            acc += mp.binomial(n, 2 * s) * self.fs(s) * self.gm(n - 2 * s)
        return (1j * self.z) ** n / mp.factorial(n) * acc


def buchholz_p(n: int, b, z):
    """Buchholz polynomial p_n(b, z) (standalone; tables rebuilt per call)."""
    if n < 0:
        raise DomainError("polynomial order must be nonnegative")
    with mp.workdps(mp.mp.dps + 10):
        return _BuchholzTables(mp.mpmathify(b), mp.mpmathify(z)).p(n)


def _buchholz_sum(mu0, z, dps, prec):
    with mp.workdps(dps):
        b = 1 + 2j * mp.mpmathify(mu0)
        zm = mp.mpmathify(z)
        tables = _BuchholzTables(b, zm)
        tol = mp.mpf(10) ** (-prec.tol_exponent)
        s = mp.mpc(0)
        max_term = mp.mpf(0)
        poch = mp.mpc(1)   # (b)_n
        small = 0
        sub_prec = Precision(max(30, dps - 10), 10, prec.max_terms)
        for n in range(prec.max_terms):
            # 0F1 parameter b + n: the index pinned by the three-way
            # representation tests
            term = (tables.p(n) * hyp0f1(b + n, -zm / 2, sub_prec)
                    / (mp.mpf(2) ** n * poch))
            s += term
            max_term = max(max_term, abs(term))
            poch = poch * (b + n)
            if n > 2 and abs(term) < tol * abs(s):
                small += 1
                if small >= _CONSECUTIVE_SMALL:
                    return +s, max_term
            else:
                small = 0
        raise PrecisionError("Buchholz expansion not converged",
                             digits_estimate=dps)


def _buchholz_eval(mu0, z, prec):
    dps = prec.tol_exponent + 12
    for _ in range(4):
        with mp.workdps(dps):
            s, max_term = _buchholz_sum(mu0, z, dps, prec)
            need = prec.tol_exponent + int(mp.ceil(mp.log10(max_term / abs(s)))) + 5 \
                if abs(s) > 0 else dps + 30
        if dps >= need:
            return s
        dps = need + 10
    raise PrecisionError("Buchholz precision loop did not settle",
                         digits_estimate=dps)


def buchholz_ab(mu0: float, z: float, prec: Precision = DEFAULT_PRECISION,
                unwrap: bool = True) -> AmplitudePhase:
    """A(z), B(z) through the Buchholz polynomial expansion:
    sum_n p_n(2 i mu0 + 1, z) 0F1(; 2 i mu0 + 1 + n; -z/2) / (2^n (b)_n).
    """
    if z < 0:
        raise DomainError("z must be nonnegative")
    return _ab_eval(_buchholz_eval, mu0, z, prec, unwrap)


# -- shared amplitude/phase driver with path unwrapping ----------------------

def _ab_eval(evaluator, mu0, z, prec, unwrap) -> AmplitudePhase:
    if z == 0:
        return AmplitudePhase(mp.mpf(1), mp.mpf(0))
    w = evaluator(mu0, z, prec)
    if not unwrap:
        return _split(w)
    # march from z = 0 accumulating a continuous phase; coarse evaluations
    # only steer the branch, the endpoint uses the requested precision
    coarse = Precision(30, 10, prec.max_terms)
    phase = mp.mpf(0)
    z_now = mp.mpf(0)
    w_now = mp.mpc(1)
    # |B'(z)| <= mu0/(1+ z-ish) + 1/2 crude bound steers the step
    step_cap = mp.pi / 3 / max(0.5, abs(mu0) * 0.5 + 0.5)
    max_steps = 4000
    for _ in range(max_steps):
        step = min(mp.mpf(z) - z_now, max(mp.mpf(step_cap), z_now * mp.mpf("0.35")))
        z_next = z_now + step
        w_next = evaluator(mu0, z_next, coarse) if z_next < z else w
        dphi = mp.arg(w_next / w_now)
        if abs(dphi) > 2.5:  # too fast; halve the step
            step_cap = step_cap / 2
            if step_cap < mp.mpf("1e-8"):
                raise PrecisionError("phase unwrapping step underflow")
            continue
        phase += dphi
        z_now, w_now = z_next, w_next
        if z_now >= z:
            break
    else:
        raise PrecisionError("phase unwrapping did not reach target z")
    return _split(w, reference_phase=phase)


def kummer_ab(mu0: float, z: float, prec: Precision = DEFAULT_PRECISION,
              unwrap: bool = True) -> AmplitudePhase:
    """A, B via the primary series route (exp(-z/2) prefactor included)."""
    if z < 0:
        raise DomainError("z must be nonnegative")
    return _ab_eval(lambda m, zz, p: kummer_w(m, zz, p), mu0, z, prec, unwrap)


def asymptotic_valid(z: float, prec: Precision = DEFAULT_PRECISION) -> bool:
    """Whether the large-z expansion can reach the requested precision (the
    recessive exp(-z) branch must sit below the output tolerance)."""
    return z > math.log(10.0) * (prec.tol_exponent + 2)


def kummer_w_asymptotic(mu0: float, z: float,
                        prec: Precision = DEFAULT_PRECISION):
    """(w, w') at large z from the dominant branch of the Kummer expansion,

        w = exp(z/2) z^{a-c} Gamma(c)/Gamma(a) S(z),
        S = sum_s (c-a)_s (1-a)_s / (s! z^s),  a = i mu0, c = 2 i mu0 + 1.

    The recessive exp(-z) branch is dropped, so this requires
    asymptotic_valid(z as checked here; the series is truncated at its
    smallest term, which must reach the requested tolerance."""
    if not asymptotic_valid(z, prec):
        raise PrecisionError(
            f"z={z:g} too small for the asymptotic branch at "
            f"{prec.tol_exponent} digits"
        )
    with mp.workdps(prec.tol_exponent + 15):
        a = 1j * mp.mpmathify(mu0)
        c = 2 * a + 1
        zm = mp.mpmathify(z)
        tol = mp.mpf(10) ** (-prec.tol_exponent)
        term = mp.mpc(1)
        s_sum = mp.mpc(1)
        ds_sum = mp.mpc(0)
        min_ratio = None
        for s in range(1, prec.max_terms):
            term = term * (c - a + s - 1) * (1 - a + s - 1) / (s * zm)
            new_min = abs(term)
            s_sum += term
            ds_sum += term * (-s) / zm
            if new_min < tol * abs(s_sum):
                break
            if min_ratio is not None and new_min > min_ratio * 4:
                raise PrecisionError(
                    "asymptotic series floor above the requested tolerance"
                )
            min_ratio = new_min if min_ratio is None else min(min_ratio, new_min)
        pref = mp.e**(zm / 2) * zm**(a - c) * mp.gamma(c) / mp.gamma(a)
        w = pref * s_sum
        dw = w * (mp.mpf(1) / 2 + (a - c) / zm) + pref * ds_sum
        return w, dw
