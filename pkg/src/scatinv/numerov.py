"""Numerov finite-difference oracle for bound states.

Deliberately independent of the analytic matching machinery in `solver`:
this module knows nothing about Morse components or hypergeometric
functions.  It integrates psi'' = (V - E)/C psi on a uniform grid with the
Numerov three-term recursion, counts nodes, and locates eigenvalues by
node-count bisection plus endpoint shooting.  Used to certify bound-state
counts and spectra of both analytic and tabulated potentials.
"""

from __future__ import annotations

import numpy as np

from .errors import ConvergenceError

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:                                    # pragma: no cover
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f
        return wrap(args[0]) if args and callable(args[0]) else wrap


@njit(cache=True)
def _sweep(f, h):
    """Numerov sweep of psi'' = f psi from psi(0)=0; returns (nodes, psi_end,
    psi_prev_end, scale_exponent)."""
    n = f.shape[0]
    c = h * h / 12.0
    psi_prev = 0.0
    psi = h
    nodes = 0
    scale_exp = 0.0
    for i in range(1, n - 1):
        num = (2.0 + 10.0 * c * f[i]) * psi - (1.0 - c * f[i - 1]) * psi_prev
        psi_next = num / (1.0 - c * f[i + 1])
        if (psi_next < 0.0 and psi > 0.0) or (psi_next > 0.0 and psi < 0.0):
            nodes += 1
        psi_prev = psi
        psi = psi_next
        a = abs(psi)
        if a > 1e250:
            psi /= a
            psi_prev /= a
            scale_exp += np.log(a)
    return nodes, psi, psi_prev, scale_exp


class NumerovOracle:
    """Bound-state counter/solver on [0, r_max] with Dirichlet boundaries."""

    def __init__(self, potential, r_max=None, h=2e-4, c_const=None):
        self.potential = potential
        if c_const is None:
            c_const = potential.system.c_const
        self.c_const = c_const
        if r_max is None:
            r_max = potential.r_max + 3.0
        n = int(np.ceil(r_max / h)) + 1
        self.r = np.linspace(0.0, r_max, n)
        self.h = self.r[1] - self.r[0]
        self.v = np.asarray(potential(self.r), dtype=float)

    def nodes(self, energy: float) -> int:
        f = (self.v - energy) / self.c_const
        nodes, _, _, _ = _sweep(f, self.h)
        return nodes

    def endpoint(self, energy: float) -> float:
        """psi at r_max (rescaled); sign changes bracket eigenvalues."""
        f = (self.v - energy) / self.c_const
        _, psi, _, _ = _sweep(f, self.h)
        return psi

    def count_bound_states(self, e_top: float = -1e-9) -> int:
        """Number of eigenvalues below e_top (default: just under zero)."""
        return self.nodes(e_top)

    def eigenvalues(self, e_bottom=None, e_top=-1e-9, tol=1e-10) -> np.ndarray:
        """All eigenvalues in (e_bottom, e_top), found by node-count bisection
        then endpoint-shooting bisection down to `tol` in energy."""
        if e_bottom is None:
            e_bottom = float(np.min(self.v)) + 1e-12
        n_lo = self.nodes(e_bottom)
        n_hi = self.nodes(e_top)
        count = n_hi - n_lo
        energies = []
        for m in range(count):
            target = n_lo + m + 1
            lo, hi = e_bottom, e_top
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if self.nodes(mid) >= target:
                    hi = mid
                else:
                    lo = mid
                if hi - lo < max(tol, 1e-14 * abs(mid)):
                    break
            else:
                raise ConvergenceError("node-count bisection failed")
            energies.append(0.5 * (lo + hi))
        return np.asarray(energies)

    def eigenvalues_refined(self, **kwargs) -> np.ndarray:
        """Richardson-extrapolated eigenvalues from grids h and h/2."""
        e_h = self.eigenvalues(**kwargs)
        fine = NumerovOracle(self.potential, r_max=float(self.r[-1]),
                             h=self.h / 2.0, c_const=self.c_const)
        e_h2 = fine.eigenvalues(**kwargs)
        if len(e_h) != len(e_h2):
            raise ConvergenceError("grid refinement changed the bound-state count")
        return (16.0 * e_h2 - e_h) / 15.0
