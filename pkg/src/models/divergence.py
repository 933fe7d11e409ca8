"""
Convex integrands and the divergences they induce on finite measures.

Piecewise-linear and quadratic integrands evaluate exactly in rationals;
transcendental ones evaluate in floating point. +inf is represented by
math.inf and only arises through the recession-slope convention or an
infinite integrand value.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import xlogy

from config import QUADRATURE, TOLERANCES
from src.models.measure_core import Measure, require_same_space
from src.utils.errors import IntegrandError
from src.utils.helpers import approx_le, is_infinite, to_fraction

logger = logging.getLogger(__name__)

ExtendedValue = Union[Fraction, float]

INF = math.inf


@dataclass(frozen=True)
class Integrand:
    """
    Convex function ϑ on [0, ∞) with its right derivative and recession slope.

    `kinks` is set for piecewise-linear integrands: (point, derivative jump)
    pairs. `exact` integrands map Fractions to Fractions.
    """

    name: str
    func: Callable
    right_derivative: Callable
    recession_slope: ExtendedValue
    strictly_convex: bool
    exact: bool = True
    kinks: Optional[Tuple[Tuple[Fraction, Fraction], ...]] = None
    left_derivative: Optional[Callable] = None

    def __call__(self, t):
        return self.func(t)

    def derivative_from_left(self, t):
        if self.left_derivative is not None:
            return self.left_derivative(t)
        return self.right_derivative(t)


def hockey_stick_integrand(gamma):
    """ϑ_γ(t) = (t − γ)_+."""
    gamma = to_fraction(gamma)
    if gamma <= 0:
        raise IntegrandError(f"Hockey-stick parameter must be positive, got {gamma}")
    return Integrand(
        name=f"hockey_stick({gamma})",
        func=lambda t: max(t - gamma, Fraction(0)),
        right_derivative=lambda t: Fraction(1) if t >= gamma else Fraction(0),
        left_derivative=lambda t: Fraction(1) if t > gamma else Fraction(0),
        recession_slope=Fraction(1),
        strictly_convex=False,
        kinks=((gamma, Fraction(1)),),
    )


def square():
    return Integrand(
        name='square',
        func=lambda t: t * t,
        right_derivative=lambda t: 2 * t,
        recession_slope=INF,
        strictly_convex=True,
    )


def chi_square():
    """χ²: ϑ(t) = (t − 1)²."""
    return Integrand(
        name='chi_square',
        func=lambda t: (t - 1) * (t - 1),
        right_derivative=lambda t: 2 * (t - 1),
        recession_slope=INF,
        strictly_convex=True,
    )


def abs_deviation():
    return Integrand(
        name='abs_deviation',
        func=lambda t: abs(t - 1),
        right_derivative=lambda t: Fraction(1) if t >= 1 else Fraction(-1),
        left_derivative=lambda t: Fraction(1) if t > 1 else Fraction(-1),
        recession_slope=Fraction(1),
        strictly_convex=False,
        kinks=((Fraction(1), Fraction(2)),),
    )


def linear(intercept=0, slope=1):
    a = to_fraction(intercept)
    b = to_fraction(slope)
    return Integrand(
        name=f"linear({a},{b})",
        func=lambda t: a + b * t,
        right_derivative=lambda t: b,
        recession_slope=b,
        strictly_convex=False,
        kinks=(),
    )


def exp_neg():
    """ϑ(t) = e^{−t}: strictly convex, bounded, zero recession slope."""
    return Integrand(
        name='exp_neg',
        func=lambda t: math.exp(-float(t)),
        right_derivative=lambda t: -math.exp(-float(t)),
        recession_slope=Fraction(0),
        strictly_convex=True,
        exact=False,
    )


def _log_or_neg_inf(t):
    t = float(t)
    return math.log(t) if t > 0 else -INF


def xlogx():
    """ϑ(t) = t log t with 0 log 0 = 0."""
    return Integrand(
        name='xlogx',
        func=lambda t: float(xlogy(float(t), float(t))),
        right_derivative=lambda t: _log_or_neg_inf(t) + 1.0,
        recession_slope=INF,
        strictly_convex=True,
        exact=False,
    )


def neg_log():
    """ϑ(t) = −log t, infinite at 0."""
    return Integrand(
        name='neg_log',
        func=lambda t: -_log_or_neg_inf(t),
        right_derivative=lambda t: -1.0 / float(t) if t > 0 else -INF,
        recession_slope=Fraction(0),
        strictly_convex=True,
        exact=False,
    )


BUILTIN_INTEGRANDS = {
    'square': square,
    'chi_square': chi_square,
    'abs_deviation': abs_deviation,
    'exp_neg': exp_neg,
    'xlogx': xlogx,
    'neg_log': neg_log,
}


def integrand_by_name(name):
    """
    Resolve a built-in integrand from its command-line name.

    Accepts the keys of BUILTIN_INTEGRANDS and "hs:<gamma>" for hockey-stick.
    """
    if name.startswith('hs:'):
        return hockey_stick_integrand(name[3:])
    try:
        return BUILTIN_INTEGRANDS[name]()
    except KeyError:
        raise IntegrandError(f"Unknown integrand {name!r}")


def _adjoint_derivative_at_zero(theta):
    # lim_{s→∞} ϑ(s) − s ϑ'(s)
    if is_infinite(theta.recession_slope):
        return -INF
    if theta.kinks is not None:
        far = max((k for k, _ in theta.kinks), default=Fraction(0)) + 1
        return theta(far) - far * theta.right_derivative(far)
    far = 1e8
    return float(theta(far)) - far * float(theta.right_derivative(far))


def adjoint_integrand(theta):
    """
    Adjoint ϑ̂(t) = t·ϑ(1/t), ϑ̂(0) = ϑ'_∞, so that D_ϑ(P‖Q) = D_ϑ̂(Q‖P).

    Args:
        theta: Integrand

    Returns:
        Integrand whose recession slope is ϑ(0)
    """
    slope = theta.recession_slope

    def func(t):
        if t == 0:
            return slope
        value = theta(1 / t)
        if is_infinite(value):
            return value
        return t * value

    def right_derivative(t):
        if t == 0:
            return _adjoint_derivative_at_zero(theta)
        s = 1 / t
        return theta(s) - s * theta.derivative_from_left(s)

    def left_derivative(t):
        s = 1 / t
        return theta(s) - s * theta.right_derivative(s)

    kinks = None
    if theta.kinks is not None:
        kinks = tuple(sorted((1 / k, c * k) for k, c in theta.kinks if k > 0))

    return Integrand(
        name=f"adjoint({theta.name})",
        func=func,
        right_derivative=right_derivative,
        left_derivative=left_derivative,
        recession_slope=theta(Fraction(0)) if theta.exact else float(theta(Fraction(0))),
        strictly_convex=theta.strictly_convex,
        exact=theta.exact,
        kinks=kinks,
    )


def f_divergence(P, Q, theta):
    """
    ϑ-divergence of P from Q on a finite space.

    Σ_{Q>0} Q·ϑ(P/Q) + ϑ'_∞·Σ_{Q=0} P; atoms with P = Q = 0 contribute 0.

    Args:
        P: Measure
        Q: Measure on the same space
        theta: Integrand

    Returns:
        Fraction for exact integrands, float otherwise, math.inf when infinite
    """
    require_same_space(P, Q)
    total = Fraction(0) if theta.exact else 0.0
    singular = Fraction(0)
    for atom_id in P.space.ids:
        q = Q[atom_id]
        p = P[atom_id]
        if q > 0:
            value = theta(p / q)
            if is_infinite(value):
                return value
            total += q * value
        elif p > 0:
            singular += p
    if singular > 0:
        if is_infinite(theta.recession_slope):
            return theta.recession_slope
        total += theta.recession_slope * singular
    return total


def hockey_stick(P, Q, gamma):
    """HS_γ(P‖Q) = Σ_{Q>0} (P − γQ)_+ + singular mass of P."""
    return f_divergence(P, Q, hockey_stick_integrand(gamma))


def occurring_ratios(P, Q):
    """Sorted distinct positive ratios P/Q over Q-positive atoms."""
    require_same_space(P, Q)
    return sorted({P[a] / Q[a] for a in P.space.ids if Q[a] > 0 and P[a] > 0})


def hockey_stick_curve(P, Q, gammas):
    """
    HS_γ(P‖Q) over a γ grid.

    Returns:
        DataFrame with columns gamma, hockey_stick
    """
    rows = [{'gamma': to_fraction(g), 'hockey_stick': hockey_stick(P, Q, g)} for g in gammas]
    return pd.DataFrame(rows, columns=['gamma', 'hockey_stick'])


@dataclass(frozen=True)
class MarkovKernel:
    """Row-stochastic map from the atoms of `source` to measures on `target`."""

    source: object
    target: object
    rows: dict

    def __post_init__(self):
        cleaned = {}
        for atom_id, row in self.rows.items():
            if atom_id not in self.source:
                raise IntegrandError(f"Kernel row for unknown atom {atom_id!r}")
            row = {y: to_fraction(p) for y, p in row.items()}
            if any(y not in self.target for y in row):
                raise IntegrandError(f"Kernel row {atom_id!r} charges an unknown target atom")
            if any(p < 0 for p in row.values()) or sum(row.values()) != 1:
                raise IntegrandError(f"Kernel row {atom_id!r} is not a probability vector")
            cleaned[atom_id] = row
        object.__setattr__(self, 'rows', cleaned)

    def push_forward(self, measure):
        return push_forward(measure, self)


def push_forward(measure, kernel):
    """K_#μ for a MarkovKernel whose rows cover the support of μ."""
    if measure.space != kernel.source:
        raise IntegrandError("Kernel source space does not match the measure")
    mass = {}
    for atom_id, value in measure.mass.items():
        if atom_id not in kernel.rows:
            raise IntegrandError(f"Kernel has no row for charged atom {atom_id!r}")
        for target, prob in kernel.rows[atom_id].items():
            mass[target] = mass.get(target, Fraction(0)) + value * prob
    return Measure(kernel.target, mass)


def dpi_audit(P, Q, kernel, theta, tol=None):
    """
    Check D_ϑ(K_#P‖K_#Q) ≤ D_ϑ(P‖Q).

    Exact for exact integrands; tolerance applies once floats are involved.
    """
    tol = TOLERANCES['float'] if tol is None else tol
    before = f_divergence(P, Q, theta)
    after = f_divergence(push_forward(P, kernel), push_forward(Q, kernel), theta)
    holds = approx_le(after, before, tol)
    if not holds:
        logger.debug("DPI violated for %s: %s > %s", theta.name, after, before)
    return holds


def check_convexity(theta, points, tol=None):
    """
    Spot-check convexity of an integrand on sample points.

    Midpoint inequality on every pair of sample points, plus
    monotonicity of the right derivative.
    """
    tol = TOLERANCES['float'] if tol is None else tol
    pts = sorted(to_fraction(p) for p in points)
    for a, b in itertools.combinations(pts, 2):
        mid = (a + b) / 2
        lhs = theta(mid)
        rhs_a, rhs_b = theta(a), theta(b)
        if is_infinite(rhs_a) or is_infinite(rhs_b):
            continue
        if not approx_le(lhs, (rhs_a + rhs_b) / 2, tol):
            return False
    derivs = [theta.right_derivative(p) for p in pts]
    return all(approx_le(d0, d1, tol) for d0, d1 in zip(derivs, derivs[1:]))


def hinge_reconstruct(phi, over, nu_bar_total, nu_iota_total, quad_points=None):
    """
    Rebuild D_φ(payload‖ν̄) from the overflow profile.

    φ(0)·ν̄(Ω) + φ'_+(0)·ν_ι(Ω) + ∫ Over dμ_φ, where μ_φ is the Stieltjes
    measure of φ'_+ on (0, ∞). Exact for piecewise-linear φ; otherwise a
    Stieltjes sum over a grid on [0, max density] that contains every
    breakpoint of Over, plus the constant tail.

    Args:
        phi: Integrand with finite values and finite recession slope
        over: OverflowProfile (callable, with max_density and singular_mass)
        nu_bar_total: Total opposite base mass ν̄(Ω)
        nu_iota_total: Total source base mass ν_ι(Ω)
        quad_points: Grid size for non-piecewise-linear φ

    Returns:
        Fraction when exact, float otherwise

    Raises:
        IntegrandError: on infinite recession slope or infinite φ(0), φ'_+(0)
    """
    if is_infinite(phi.recession_slope):
        raise IntegrandError(f"{phi.name} has infinite recession slope")
    value_at_zero = phi(Fraction(0))
    slope_at_zero = phi.right_derivative(Fraction(0))
    if is_infinite(value_at_zero) or is_infinite(slope_at_zero):
        raise IntegrandError(f"{phi.name} is not finite with finite slope at 0")
    base = value_at_zero * to_fraction(nu_bar_total) + slope_at_zero * to_fraction(nu_iota_total)

    if phi.kinks is not None:
        stieltjes = sum((over(k) * jump for k, jump in phi.kinks if k > 0), Fraction(0))
        return base + stieltjes

    quad_points = QUADRATURE['hinge_points'] if quad_points is None else quad_points
    top = float(over.max_density)
    tail_slope = float(phi.recession_slope)
    if top <= 0:
        return float(base) + float(over.singular_mass) * (tail_slope - float(slope_at_zero))
    breaks = np.array([float(b) for b in over.breakpoints])
    segment_slopes = np.array([float(over.slope(b)) for b in over.breakpoints])
    grid = np.union1d(np.linspace(0.0, top, int(quad_points) + 1), breaks)
    values = np.array([float(phi(t)) for t in grid])
    slopes = segment_slopes[np.searchsorted(breaks, grid[:-1], side='right') - 1]
    top_deriv = float(phi.right_derivative(top))
    # Over is affine on every cell: ∫ Over dφ'_+ = [Over·φ'_+] − slope·[φ]
    stieltjes = (float(over(top)) * top_deriv - float(over(0)) * float(slope_at_zero)
                 - float(np.sum(slopes * np.diff(values))))
    tail = float(over.singular_mass) * (tail_slope - top_deriv)
    return float(base) + stieltjes + tail
