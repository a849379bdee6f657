"""Piecewise Morse reference potential with C1 smooth joining.

A reference potential is a sequence of Morse-type pieces

    V(r) = V_k + D_k [exp(-alpha_k (r - r_k)) - 1]^2

on consecutive intervals separated by joints X_1 < X_2 < ..., optionally
truncated to exactly zero beyond a cutoff radius.  The innermost piece is
normally a pseudo-Morse component, i.e. D_0 is pinned to the critical depth
C alpha_0^2 / 4 at which the isolated well holds no bound state.

`smooth_join` resolves free component parameters so that V and V' are
continuous at every joint; which parameters are free is part of the input,
not a convention of this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad

from .errors import ConfigError, DomainError
from .units import PhysicalSystem

KINDS = ("pseudo", "ordinary", "reversed")

# relative tolerance on value/derivative continuity at joints
JOIN_RTOL = 1e-9


@dataclass(frozen=True)
class MorseComponent:
    """One Morse-type piece of the reference potential."""

    kind: str
    v_offset: float      # V_k, meV
    depth: float         # D_k, meV (negative for reversed pieces)
    alpha: float         # A^-1
    r_min: float         # r_k, A

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown component kind {self.kind!r}")
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if self.kind == "reversed" and self.depth >= 0:
            raise ConfigError("reversed component requires D < 0")
        if self.kind in ("ordinary", "pseudo") and self.depth <= 0:
            raise ConfigError(f"{self.kind} component requires D > 0")

    def value(self, r):
        e = np.exp(-self.alpha * (np.asarray(r, dtype=float) - self.r_min))
        return self.v_offset + self.depth * (e - 1.0) ** 2

    def derivative(self, r):
        e = np.exp(-self.alpha * (np.asarray(r, dtype=float) - self.r_min))
        return -2.0 * self.depth * self.alpha * (e - 1.0) * e

    def second_derivative(self, r):
        e = np.exp(-self.alpha * (np.asarray(r, dtype=float) - self.r_min))
        return 2.0 * self.depth * self.alpha**2 * (2.0 * e - 1.0) * e

    def third_derivative(self, r):
        e = np.exp(-self.alpha * (np.asarray(r, dtype=float) - self.r_min))
        return -2.0 * self.depth * self.alpha**3 * (4.0 * e - 1.0) * e


def pseudo_morse_depth(alpha0: float, system: PhysicalSystem) -> float:
    """Critical depth D0 = hbar^2 alpha0^2/(8m) = C alpha0^2/4 in meV."""
    if alpha0 <= 0:
        raise DomainError("alpha0 must be positive")
    return system.c_const * alpha0**2 / 4.0


def validate_pseudo(component: MorseComponent, system: PhysicalSystem,
                    rtol: float = 1e-12) -> None:
    want = pseudo_morse_depth(component.alpha, system)
    if abs(component.depth - want) > rtol * want:
        raise ConfigError(
            f"pseudo component depth {component.depth} != C alpha^2/4 = {want}"
        )


@dataclass(frozen=True)
class PiecewisePotential:
    """Ordered Morse components, joints, optional hard cutoff to zero.

    Component k applies on [X_k, X_{k+1}) with X_0 = 0 and the last interval
    extending to the cutoff (or infinity).  Immutable; all evaluation methods
    are pure and thread-safe.
    """

    system: PhysicalSystem
    components: tuple
    joints: tuple
    cutoff: Optional[float] = None
    cutoff_tol: float = 1e-6   # max |V(cutoff-)| accepted, meV

    def __post_init__(self):
        if len(self.components) == 0:
            raise ConfigError("need at least one component")
        if len(self.joints) != len(self.components) - 1:
            raise ConfigError("need exactly one joint between consecutive components")
        if any(b <= a for a, b in zip(self.joints, self.joints[1:])):
            raise ConfigError("joints must be strictly increasing")
        if self.joints and self.joints[0] <= 0:
            raise ConfigError("joints must be positive")
        for comp in self.components:
            if comp.kind == "pseudo":
                validate_pseudo(comp, self.system)
        if self.cutoff is not None:
            if self.joints and self.cutoff <= self.joints[-1]:
                raise ConfigError("cutoff must lie beyond the last joint")
            tail = abs(float(self.components[-1].value(self.cutoff)))
            if tail > self.cutoff_tol:
                raise ConfigError(
                    f"V({self.cutoff}) = {tail:g} meV exceeds cutoff tolerance"
                )
        self._check_joints()

    def _check_joints(self):
        worst = 0.0
        for i, x in enumerate(self.joints):
            left, right = self.components[i], self.components[i + 1]
            scale_v = max(abs(float(left.value(x))), abs(float(right.value(x))), 1.0)
            scale_d = max(abs(float(left.derivative(x))), abs(float(right.derivative(x))), 1.0)
            rv = abs(float(left.value(x)) - float(right.value(x))) / scale_v
            rd = abs(float(left.derivative(x)) - float(right.derivative(x))) / scale_d
            worst = max(worst, rv, rd)
        if worst > JOIN_RTOL:
            raise ConfigError(f"joint continuity violated, worst residual {worst:g}")

    # -- evaluation -------------------------------------------------------

    def component_index(self, r: float) -> int:
        if r < 0:
            raise DomainError("r must be nonnegative")
        for i, x in enumerate(self.joints):
            if r < x:
                return i
        return len(self.components) - 1

    def _piecewise(self, r, method: str):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise DomainError("r must be nonnegative")
        edges = [0.0, *self.joints, np.inf]
        out = np.zeros_like(r)
        for i, comp in enumerate(self.components):
            mask = (r >= edges[i]) & (r < edges[i + 1])
            if mask.any():
                out[mask] = getattr(comp, method)(r[mask])
        if self.cutoff is not None:
            out[r >= self.cutoff] = 0.0
        return out

    def evaluate(self, r):
        """V(r) in meV; exactly zero beyond the cutoff when one is set."""
        return self._piecewise(r, "value")

    def derivative(self, r):
        return self._piecewise(r, "derivative")

    def second_derivative(self, r):
        return self._piecewise(r, "second_derivative")

    def third_derivative(self, r):
        return self._piecewise(r, "third_derivative")

    def __call__(self, r):
        return self.evaluate(r)

    @property
    def r_max(self) -> float:
        """Radius beyond which V is identically zero (cutoff) or negligible."""
        if self.cutoff is not None:
            return self.cutoff
        last = self.components[-1]
        # reversed tail decays like 2|D| exp(-alpha (r - r0))
        scale = max(abs(last.depth), 1e-30)
        return last.r_min + math.log(scale / 1e-14 + 1.0) / last.alpha

    @property
    def v_at_zero(self) -> float:
        return float(self.components[0].value(0.0))

    def breakpoints(self) -> list:
        """Radii where V or a derivative may be non-smooth."""
        pts = list(self.joints)
        if self.cutoff is not None:
            pts.append(self.cutoff)
        return pts

    # -- integrals used by phase/jost tails -------------------------------

    def integral(self, power: int = 1, of_derivative: bool = False) -> float:
        """integral_0^rmax of V^power (or V'^power) dr by piecewise quadrature."""
        edges = [0.0, *self.joints, self.r_max]
        total = 0.0
        f = self.derivative if of_derivative else self.evaluate
        for a, b in zip(edges, edges[1:]):
            if b <= a:
                continue
            val, _ = quad(lambda r: float(f(r)) ** power, a, b,
                          limit=200, epsabs=1e-12, epsrel=1e-12)
            total += val
        return total


def eval_potential(potential: PiecewisePotential, r):
    """V(r); thin functional alias for PiecewisePotential.evaluate."""
    return potential.evaluate(r)


@dataclass(frozen=True)
class DimensionlessFrame:
    """Per-component dimensionless variables at a fixed energy.

    mu_sq = (V_k + D_k - E)/(C alpha_k^2), carried signed; mu is the
    principal square root (imaginary when mu_sq < 0).  sign is +1 for
    pseudo/ordinary pieces and -1 for reversed ones and selects the branch
    of the hypergeometric reduction.
    """

    a: float
    mu_sq: float
    mu: complex
    sign: int
    alpha: float
    r_min: float

    def y(self, r):
        """y_k(r) = 2 a_k exp(-alpha_k (r - r_k)); positive, decreasing."""
        return 2.0 * self.a * np.exp(-self.alpha * (np.asarray(r, dtype=float) - self.r_min))

    def y_scalar(self, r: float) -> float:
        return 2.0 * self.a * math.exp(-self.alpha * (r - self.r_min))


def frame(potential: PiecewisePotential, k: int, energy: float) -> DimensionlessFrame:
    """Dimensionless frame (a_k, mu_k^2, y_k) of component k at energy E."""
    try:
        comp = potential.components[k]
    except IndexError:
        raise DomainError(f"component index {k} out of range") from None
    if comp.depth == 0:
        raise DomainError("degenerate component with D = 0")
    c = potential.system.c_const
    a = math.sqrt(abs(comp.depth) / c) / comp.alpha
    mu_sq = (comp.v_offset + comp.depth - energy) / (c * comp.alpha**2)
    mu = complex(np.sqrt(complex(mu_sq)))
    sign = -1 if comp.kind == "reversed" else 1
    return DimensionlessFrame(a=a, mu_sq=mu_sq, mu=mu, sign=sign,
                              alpha=comp.alpha, r_min=comp.r_min)


# -- smooth joining -------------------------------------------------------

@dataclass
class ComponentSpec:
    """Partially specified component; None marks a free parameter.

    For pseudo components the depth is always derived from alpha and must
    not be supplied.  `asymptote`, when set, ties v_offset = asymptote - depth
    (used for tails that vanish at infinity).
    """

    kind: str
    alpha: float
    v_offset: Optional[float] = None
    depth: Optional[float] = None
    r_min: Optional[float] = None
    asymptote: Optional[float] = None
    branch: Optional[str] = None   # 'inner'/'outer' disambiguation for (V, r0) solves

    def free_names(self, system: PhysicalSystem):
        names = []
        if self.kind == "pseudo":
            if self.depth is not None:
                raise ConfigError("pseudo depth is derived from alpha; do not set D")
        if self.v_offset is None and self.asymptote is None:
            names.append("v_offset")
        if self.depth is None and self.kind != "pseudo":
            names.append("depth")
        if self.r_min is None:
            names.append("r_min")
        return names

    def resolved(self, system: PhysicalSystem) -> MorseComponent:
        depth = self.depth
        if self.kind == "pseudo":
            depth = pseudo_morse_depth(self.alpha, system)
        v = self.v_offset
        if v is None and self.asymptote is not None and depth is not None:
            v = self.asymptote - depth
        if v is None or depth is None or self.r_min is None:
            raise ConfigError("component has unresolved parameters")
        return MorseComponent(self.kind, v, depth, self.alpha, self.r_min)


def _solve_v_r0(spec: ComponentSpec, depth: float, x: float,
                v_t: float, s_t: float) -> ComponentSpec:
    """Free (v_offset, r_min) given fixed depth: match value v_t, slope s_t at x."""
    # slope: -2 D alpha (w - 1) w = s, w = exp(-alpha (x - r0))
    disc = 1.0 - 2.0 * s_t / (depth * spec.alpha)
    if disc < 0:
        raise ConfigError("no real joining solution for (V, r0) at this joint")
    roots = [(1.0 + math.sqrt(disc)) / 2.0, (1.0 - math.sqrt(disc)) / 2.0]
    roots = [w for w in roots if w > 0]
    if not roots:
        raise ConfigError("joining solution requires positive w")
    if len(roots) == 2:
        if spec.branch == "inner":
            w = min(roots)
        elif spec.branch == "outer":
            w = max(roots)
        else:
            raise ConfigError(
                "two admissible joining branches; set branch = inner or outer"
            )
    else:
        w = roots[0]
    r0 = x + math.log(w) / spec.alpha
    v = v_t - depth * (w - 1.0) ** 2
    out = ComponentSpec(spec.kind, spec.alpha, v, spec.depth, r0,
                        spec.asymptote, spec.branch)
    if spec.kind == "pseudo":
        out.depth = None
    return out


def _solve_depth_r0_tied(spec: ComponentSpec, x: float,
                         v_t: float, s_t: float) -> ComponentSpec:
    """Free (depth, r_min) with v_offset = asymptote - depth."""
    asym = spec.asymptote
    dv = v_t - asym
    denom = s_t + 2.0 * spec.alpha * dv
    if denom == 0:
        raise ConfigError("degenerate joint for tied-asymptote solve")
    q = (2.0 * s_t + 2.0 * spec.alpha * dv) / denom
    if q <= 0:
        raise ConfigError("joining solution requires positive q")
    if abs(q * (q - 2.0)) < 1e-14:
        raise ConfigError("joint sits at a degenerate point of the tail component")
    depth = dv / (q * (q - 2.0))
    r0 = x + math.log(q) / spec.alpha
    return ComponentSpec(spec.kind, spec.alpha, asym - depth, depth, r0,
                         spec.asymptote, spec.branch)


def _solve_v_depth(spec: ComponentSpec, x: float,
                   v_t: float, s_t: float) -> ComponentSpec:
    """Free (v_offset, depth) given fixed r_min."""
    q = math.exp(-spec.alpha * (x - spec.r_min))
    denom = -2.0 * spec.alpha * (q - 1.0) * q
    if abs(denom) < 1e-14:
        raise ConfigError("slope condition degenerate at joint (q = 0 or 1)")
    depth = s_t / denom
    v = v_t - depth * (q - 1.0) ** 2
    return ComponentSpec(spec.kind, spec.alpha, v, depth, spec.r_min,
                         spec.asymptote, spec.branch)


def smooth_join(specs: Sequence[ComponentSpec], joints: Sequence[float],
                system: PhysicalSystem, cutoff: Optional[float] = None,
                cutoff_tol: float = 1e-6) -> PiecewisePotential:
    """Resolve free parameters so V, V' are continuous at every joint.

    Components with no free parameters anchor the construction; each joint is
    solved once the adjacent side is fully determined, with exactly two free
    parameters on the undetermined side.  Raises ConfigError when the system
    is over- or under-determined or no real solution exists.
    """
    specs = [ComponentSpec(s.kind, s.alpha, s.v_offset, s.depth, s.r_min,
                           s.asymptote, s.branch) for s in specs]
    joints = tuple(float(x) for x in joints)
    if len(joints) != len(specs) - 1:
        raise ConfigError("need exactly one joint between consecutive components")

    n = len(specs)
    free = [set(s.free_names(system)) for s in specs]
    resolved = [len(f) == 0 for f in free]
    if n == 1:
        if not resolved[0]:
            raise ConfigError("single component must be fully specified")
        return PiecewisePotential(system, (specs[0].resolved(system),), (),
                                  cutoff, cutoff_tol)
    if not any(resolved):
        raise ConfigError("at least one component must be fully specified")

    solved_joint = [False] * len(joints)
    progress = True
    while not all(resolved) and progress:
        progress = False
        for j, x in enumerate(joints):
            if solved_joint[j]:
                continue
            li, ri = j, j + 1
            if resolved[li] == resolved[ri]:
                continue
            known = li if resolved[li] else ri
            unknown = ri if resolved[li] else li
            if len(free[unknown]) != 2:
                raise ConfigError(
                    f"component {unknown} must have exactly 2 free parameters "
                    f"to be solved at joint {x}, has {sorted(free[unknown])}"
                )
            target = specs[known].resolved(system)
            v_t = float(target.value(x))
            s_t = float(target.derivative(x))
            spec_u = specs[unknown]
            names = free[unknown]
            if names == {"v_offset", "r_min"}:
                depth = (pseudo_morse_depth(spec_u.alpha, system)
                         if spec_u.kind == "pseudo" else spec_u.depth)
                specs[unknown] = _solve_v_r0(spec_u, depth, x, v_t, s_t)
            elif names == {"depth", "r_min"} and spec_u.asymptote is not None:
                specs[unknown] = _solve_depth_r0_tied(spec_u, x, v_t, s_t)
            elif names == {"v_offset", "depth"}:
                specs[unknown] = _solve_v_depth(spec_u, x, v_t, s_t)
            else:
                raise ConfigError(
                    f"unsupported free-parameter combination {sorted(names)}"
                )
            free[unknown] = set()
            resolved[unknown] = True
            solved_joint[j] = True
            progress = True

    if not all(resolved):
        raise ConfigError("joining deadlock: isolated unresolved components")
    comps = tuple(s.resolved(system) for s in specs)
    return PiecewisePotential(system, comps, joints, cutoff, cutoff_tol)


# -- tabulated potentials (Krein output, transform output) -----------------

class TabulatedPotential:
    """Potential known on a grid; cubic interpolation inside, zero outside."""

    def __init__(self, r, v, system: PhysicalSystem, extrapolate_zero=True):
        from scipy.interpolate import CubicSpline

        r = np.asarray(r, dtype=float)
        v = np.asarray(v, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or len(r) < 4:
            raise ConfigError("tabulated potential needs matching 1-d arrays, >= 4 points")
        if np.any(np.diff(r) <= 0):
            raise ConfigError("grid must be strictly increasing")
        self.r = r
        self.v = v
        self.system = system
        self._spline = CubicSpline(r, v)
        self._extrapolate_zero = extrapolate_zero

    @property
    def r_max(self):
        return float(self.r[-1])

    @property
    def v_at_zero(self):
        return float(self._spline(0.0)) if self.r[0] > 0 else float(self.v[0])

    def evaluate(self, r):
        r = np.asarray(r, dtype=float)
        out = self._spline(np.clip(r, self.r[0], self.r[-1]))
        if self._extrapolate_zero:
            out = np.where(r > self.r[-1], 0.0, out)
        return out

    def __call__(self, r):
        return self.evaluate(r)

    def breakpoints(self):
        return [float(self.r[-1])]

    def integral(self, power: int = 1, of_derivative: bool = False) -> float:
        if of_derivative:
            f = self._spline.derivative()(self.r)
        else:
            f = self.v
        return float(np.trapezoid(np.asarray(f) ** power, self.r))
