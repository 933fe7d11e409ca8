"""
Attainment failure of the squared-density objective on an open relation.

On [0,1]² with Lebesgue marginals, plans supported on {y > x} get arbitrarily
close to the value 1 of the diagonal plan without reaching it. The ε family
below realizes 1 + 7ε/6; grid instances reproduce the effect at finite scale.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import pandas as pd
from scipy.integrate import simpson

from config import QUADRATURE, TOLERANCES
from src.models.divergence import square
from src.models.measure_core import Instance
from src.oracles.lp_reference import min_divergence_oracle
from src.utils.errors import PreconditionError
from src.utils.helpers import to_fraction

logger = logging.getLogger(__name__)

RELATIONS = ('closed', 'open')


@dataclass(frozen=True)
class EpsilonFamily:
    """
    Plan with kernel uniform on (x, x + min(ε, 1 − x)) for each x.

    Its payload density is y/ε on [0, ε], 1 on (ε, 1 − ε] and
    (1 − y)/ε + log(ε/(1 − y)) on (1 − ε, 1).
    """

    epsilon: Fraction

    def __post_init__(self):
        eps = to_fraction(self.epsilon)
        if not 0 < eps < Fraction(1, 2):
            raise PreconditionError(f"epsilon must lie in (0, 1/2), got {eps}")
        object.__setattr__(self, 'epsilon', eps)

    def density(self, y):
        eps = float(self.epsilon)
        y = float(y)
        if y <= eps:
            return y / eps
        if y <= 1 - eps:
            return 1.0
        return (1 - y) / eps + math.log(eps / (1 - y))

    def closed_form_value(self):
        return 1 + Fraction(7, 6) * self.epsilon

    def value(self, quad_points=None):
        """
        ∫ density² over [0, 1].

        The first two branches integrate exactly to ε/3 + (1 − 2ε). The log
        branch equals ε·∫_0^1 (u − log u)² du; with u = v⁴ the integrand
        4v³(v⁴ − 4 log v)² is continuous on [0, 1] and Simpson's rule applies.
        """
        quad_points = QUADRATURE['attainment_points'] if quad_points is None else int(quad_points)
        if quad_points < QUADRATURE['attainment_min_points']:
            raise PreconditionError(
                f"Need at least {QUADRATURE['attainment_min_points']} quadrature points, got {quad_points}")
        eps = float(self.epsilon)
        v = np.linspace(0.0, 1.0, quad_points + 1)
        safe = np.where(v > 0, v, 1.0)
        integrand = np.where(v > 0, 4 * v ** 3 * (v ** 4 - 4 * np.log(safe)) ** 2, 0.0)
        log_branch = float(simpson(integrand, x=v))
        return eps / 3 + (1 - 2 * eps) + eps * log_branch


def epsilon_family_value(epsilon, quad_points=None):
    """
    Objective value of the ε family by quadrature.

    Raises:
        PreconditionError: unless 0 < ε < 1/2 and quad_points is large enough
    """
    family = EpsilonFamily(to_fraction(epsilon))
    value = family.value(quad_points)
    logger.debug("epsilon family %s: %.12f (closed form %s)", family.epsilon, value,
                 family.closed_form_value())
    return value


def grid_instance(n, relation):
    """
    n × n grid with weights 1/n on both sides.

    closed: x_i ~ y_j iff j ≥ i. open: j ≥ i + 1, plus the corner cells
    (0, 0) and (n − 1, n − 1) that keep y_0 and x_{n−1} connected.
    """
    if n < 4:
        raise PreconditionError(f"Grid size must be at least 4, got {n}")
    if relation not in RELATIONS:
        raise PreconditionError(f"Relation must be one of {RELATIONS}, got {relation!r}")
    weight = Fraction(1, n)
    offset = 0 if relation == 'closed' else 1
    edges = {(f"x{i}", f"y{j}") for i in range(n) for j in range(i + offset, n)}
    if relation == 'open':
        edges |= {('x0', 'y0'), (f"x{n - 1}", f"y{n - 1}")}
    side0 = [(f"x{i}", weight) for i in range(n)]
    side1 = [(f"y{j}", weight) for j in range(n)]
    return Instance.build(side0, side1, edges)


def discretized_infimum(n, relation, tol=None):
    """Descent-oracle minimum of Σ ν(y)·(P(y)/ν(y))² on the n × n grid."""
    tol = TOLERANCES['oracle'] if tol is None else tol
    _, value = min_divergence_oracle(grid_instance(n, relation), 0, square(), tol)
    logger.info("grid n=%d %s: %.9f", n, relation, value)
    return value


def value_table(epsilons=(), grids=(), relations=RELATIONS, quad_points=None):
    """
    ε-family values and grid minima in one table.

    Returns:
        DataFrame with columns kind, epsilon, n, relation, value, closed_form, error
    """
    rows = []
    for eps in epsilons:
        family = EpsilonFamily(to_fraction(eps))
        value = family.value(quad_points)
        closed = float(family.closed_form_value())
        rows.append({'kind': 'epsilon', 'epsilon': float(family.epsilon), 'n': None, 'relation': None,
                     'value': value, 'closed_form': closed, 'error': value - closed})
    for n in grids:
        for relation in relations:
            rows.append({'kind': 'grid', 'epsilon': None, 'n': n, 'relation': relation,
                         'value': discretized_infimum(n, relation), 'closed_form': None, 'error': None})
    return pd.DataFrame(rows, columns=['kind', 'epsilon', 'n', 'relation', 'value', 'closed_form', 'error'])
