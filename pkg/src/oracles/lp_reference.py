"""
Brute-force reference oracles for property tests and cross-checks.

Nothing here imports the flow or maximin code it is used to check: Fit is
solved as a plain LP by an exact rational simplex, divergence minimization
by projected gradient descent on dense numpy arrays.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Tuple

import numpy as np

from config import ORACLE_CONFIG, RANDOM_INSTANCE, SOLVER_LIMITS, TOLERANCES
from src.models.measure_core import Instance, Plan, edge_key, other_side
from src.utils.errors import PreconditionError
from src.utils.helpers import to_fraction

logger = logging.getLogger(__name__)


class SimplexTableau:
    """
    Dense tableau for max c·x s.t. A x <= b, x >= 0 with b >= 0.

    The slack basis is feasible at the origin, so no phase one is needed.
    Pivots follow Bland's rule, which rules out cycling on degenerate LPs.
    """

    def __init__(self, A, b, c):
        self.m = len(A)
        self.n = len(c)
        width = self.n + self.m
        self.rows = []
        for i, row in enumerate(A):
            slack = [Fraction(0)] * self.m
            slack[i] = Fraction(1)
            self.rows.append([Fraction(v) for v in row] + slack)
        self.rhs = [Fraction(v) for v in b]
        self.reduced = [Fraction(v) for v in c] + [Fraction(0)] * self.m
        self.basis = list(range(self.n, width))
        self.value = Fraction(0)
        self.pivots = 0

    def pivot(self, i, j):
        piv = self.rows[i][j]
        self.rows[i] = [v / piv for v in self.rows[i]]
        self.rhs[i] /= piv
        for k in range(self.m):
            if k != i and self.rows[k][j] != 0:
                f = self.rows[k][j]
                self.rows[k] = [a - f * p for a, p in zip(self.rows[k], self.rows[i])]
                self.rhs[k] -= f * self.rhs[i]
        f = self.reduced[j]
        self.reduced = [a - f * p for a, p in zip(self.reduced, self.rows[i])]
        self.value += f * self.rhs[i]
        self.basis[i] = j
        self.pivots += 1

    def bland_step(self):
        entering = next((j for j, r in enumerate(self.reduced) if r > 0), None)
        if entering is None:
            return 'optimal'
        candidates = [(self.rhs[i] / self.rows[i][entering], self.basis[i], i)
                      for i in range(self.m) if self.rows[i][entering] > 0]
        if not candidates:
            return 'unbounded'
        _, _, leaving = min(candidates)
        self.pivot(leaving, entering)
        return 'go_on'

    def solve(self):
        while True:
            status = self.bland_step()
            if status != 'go_on':
                return status

    def solution(self):
        x = [Fraction(0)] * (self.n + self.m)
        for i, var in enumerate(self.basis):
            x[var] = self.rhs[i]
        return x[:self.n]


def lp_fit(instance, side, t):
    """
    Fit(t) as an LP: max Σσ_e, source sums ≤ ν, opposite sums ≤ t·ν.

    Raises:
        PreconditionError: if t < 0 or the instance exceeds the LP edge cap
    """
    t = to_fraction(t)
    if t < 0:
        raise PreconditionError(f"Level must be nonnegative, got {t}")
    edges = instance.edge_list()
    if len(edges) > SOLVER_LIMITS['lp_max_edges']:
        raise PreconditionError(f"lp_fit is capped at {SOLVER_LIMITS['lp_max_edges']} edges")
    if not edges or t == 0:
        return Fraction(0)
    opposite = other_side(side)
    rows, caps = [], []
    for s, space in ((side, instance.space(side)), (opposite, instance.space(opposite))):
        scale = 1 if s == side else t
        for atom_id in space.ids:
            rows.append([1 if edge[s] == atom_id else 0 for edge in edges])
            caps.append(scale * space.weight(atom_id))
    tableau = SimplexTableau(rows, caps, [1] * len(edges))
    status = tableau.solve()
    if status != 'optimal':
        raise PreconditionError(f"Fit LP reported {status}")
    logger.debug("lp_fit side %d t=%s: %s after %d pivots", side, t, tableau.value, tableau.pivots)
    return tableau.value


@dataclass(frozen=True)
class ExtremePlanSet:
    """Vertices of the refinement polytope of one side."""

    plans: Tuple[Plan, ...]

    def __len__(self):
        return len(self.plans)

    def __iter__(self):
        return iter(self.plans)


def enumerate_extreme_plans(instance, side):
    """
    All vertices of {σ ≥ 0 on edges, source marginal = ν_side}.

    With only the source marginal fixed the polytope is a product of
    simplices, one per positive-weight source atom, so a vertex routes each
    atom's whole mass along a single edge: the spanning-forest supports are
    stars.

    Raises:
        PreconditionError: above the enumeration edge cap
    """
    if len(instance.edges) > SOLVER_LIMITS['enumeration_max_edges']:
        raise PreconditionError(
            f"Enumeration is capped at {SOLVER_LIMITS['enumeration_max_edges']} edges")
    space = instance.space(side)
    sources = space.positive_ids()
    choices = [instance.neighbors(side, x) for x in sources]
    seen = set()
    plans = []
    for combo in itertools.product(*choices):
        entries = {edge_key(side, x, y): space.weight(x) for x, y in zip(sources, combo)}
        key = frozenset(entries.items())
        if key not in seen:
            seen.add(key)
            plans.append(Plan(instance, side, entries))
    return ExtremePlanSet(tuple(plans))


def random_feasible_plan(instance, side, seed):
    """
    Seeded random refinement from `side`.

    Each positive-weight atom splits its mass over its neighbors with
    integer weights drawn from 0..16 (at least one positive), so plans mix
    sparse and spread rows and stay exactly rational.
    """
    rng = np.random.default_rng(seed)
    space = instance.space(side)
    entries = {}
    for x in space.positive_ids():
        nbrs = instance.neighbors(side, x)
        draws = rng.integers(0, 17, size=len(nbrs))
        if draws.sum() == 0:
            draws[rng.integers(0, len(nbrs))] = 1
        total = int(draws.sum())
        for y, k in zip(nbrs, draws):
            if k:
                entries[edge_key(side, x, y)] = space.weight(x) * Fraction(int(k), total)
    return Plan(instance, side, entries)


def random_instance(seed, max_atoms=None, max_edges=None, max_denominator=None,
                    zero_weight_prob=None):
    """
    Seeded random instance for property suites.

    The first atom of each side always has positive weight, the others are
    weight 0 with probability `zero_weight_prob`. Every positive-weight atom
    gets at least one edge before random extra edges are drawn.
    """
    max_atoms = max_atoms or RANDOM_INSTANCE['max_atoms']
    max_edges = max_edges or RANDOM_INSTANCE['max_edges']
    max_denominator = max_denominator or RANDOM_INSTANCE['max_denominator']
    if zero_weight_prob is None:
        zero_weight_prob = RANDOM_INSTANCE['zero_weight_prob']
    rng = np.random.default_rng(seed)

    def draw_side(prefix):
        size = int(rng.integers(1, max_atoms + 1))
        atoms = []
        for k in range(size):
            if k > 0 and rng.random() < zero_weight_prob:
                weight = Fraction(0)
            else:
                weight = Fraction(int(rng.integers(1, 2 * max_denominator + 1)),
                                  int(rng.integers(1, max_denominator + 1)))
            atoms.append((f"{prefix}{k + 1}", weight))
        return atoms

    side0, side1 = draw_side('x'), draw_side('y')
    ids0 = [a for a, _ in side0]
    ids1 = [a for a, _ in side1]
    edges = set()
    for atom_id, weight in side0:
        if weight > 0 and not any(e[0] == atom_id for e in edges):
            edges.add((atom_id, ids1[int(rng.integers(0, len(ids1)))]))
    for atom_id, weight in side1:
        if weight > 0 and not any(e[1] == atom_id for e in edges):
            edges.add((ids0[int(rng.integers(0, len(ids0)))], atom_id))
    all_pairs = [(a, b) for a in ids0 for b in ids1]
    target = min(int(rng.integers(len(edges), max_edges + 1)), len(all_pairs))
    while len(edges) < target:
        edges.add(all_pairs[int(rng.integers(0, len(all_pairs)))])
    return Instance.build(side0, side1, edges)


def _as_vector_fn(fn):
    """Evaluate a scalar integrand callable on float arrays."""
    scalar = np.vectorize(lambda v: float(fn(v)), otypes=[float])

    def apply(values):
        try:
            out = np.asarray(fn(values), dtype=float)
            if out.shape == values.shape:
                return out
        except (TypeError, ValueError):
            pass
        return scalar(values)
    return apply


def min_divergence_oracle(instance, side, theta, tol=None, max_iter=None):
    """
    Approximate min of D_ϑ(payload‖ν_opposite) over refinements from `side`.

    Accelerated projected gradient over row-stochastic kernels K (plan =
    ν_source·K) from the barycentric plan, with backtracking step halving
    and momentum restarts. Stops when the best objective improves by less
    than tol over a window of iterations. Never a certificate of optimality.

    Args:
        instance: Instance
        side: Source side
        theta: Integrand (convex)
        tol: Stopping tolerance
        max_iter: Iteration cap

    Returns:
        (Plan, value): a rationalized refinement and the best float objective found
    """
    tol = TOLERANCES['oracle'] if tol is None else tol
    if tol <= 0:
        raise PreconditionError("Oracle tolerance must be positive")
    max_iter = max_iter or ORACLE_CONFIG['max_iter']
    opposite = other_side(side)
    src_space, opp_space = instance.space(side), instance.space(opposite)
    sources = list(src_space.positive_ids())
    columns = list(opp_space.ids)
    w = np.array([float(src_space.weight(x)) for x in sources])
    q = np.array([float(opp_space.weight(y)) for y in columns])
    null = q == 0
    slope = theta.recession_slope
    infinite_slope = isinstance(slope, float) and math.isinf(slope)

    mask = np.zeros((len(sources), len(columns)), dtype=bool)
    for i, x in enumerate(sources):
        for y in instance.neighbors(side, x):
            mask[i, columns.index(y)] = True
    unbounded = False
    if infinite_slope:
        restricted = mask & ~null[None, :]
        starved = ~restricted.any(axis=1)
        unbounded = bool(starved.any())
        mask = np.where(starved[:, None], mask, restricted)

    func = _as_vector_fn(theta.func)
    deriv = _as_vector_fn(theta.right_derivative)

    def objective(K):
        P = w @ K
        value = float(np.sum(q[~null] * func(P[~null] / q[~null])))
        if not infinite_slope:
            value += float(slope) * float(P[null].sum())
        return value

    def gradient(K):
        P = w @ K
        g = np.zeros(len(columns))
        ratio = np.maximum(P[~null] / q[~null], 1e-12)
        g[~null] = deriv(ratio)
        g[null] = 0.0 if infinite_slope else float(slope)
        return w[:, None] * g[None, :]

    counts = mask.sum(axis=1)

    def project(V):
        V = np.where(mask, V, -np.inf)
        U = -np.sort(-V, axis=1)
        css = np.cumsum(np.where(np.isfinite(U), U, 0.0), axis=1) - 1.0
        idx = np.arange(1, V.shape[1] + 1)
        cond = (U - css / idx > 0) & (idx[None, :] <= counts[:, None])
        last = V.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
        shift = css[np.arange(V.shape[0]), last] / (last + 1)
        return np.where(mask, np.maximum(V - shift[:, None], 0.0), 0.0)

    if not sources:
        return Plan(instance, side, {}), float(np.sum(q * func(np.zeros_like(q))))

    K = np.where(mask, 1.0, 0.0) / counts[:, None]
    if unbounded:
        return _rationalize(instance, side, sources, columns, K), math.inf

    best_K, best = K, objective(K)
    Y, momentum, step = K, 1.0, ORACLE_CONFIG['initial_step']
    history = [best]
    patience = ORACLE_CONFIG['stall_patience']
    for iteration in range(max_iter):
        f_y = objective(Y)
        g_y = gradient(Y)
        while True:
            K_new = project(Y - step * g_y)
            diff = K_new - Y
            bound = f_y + float(np.sum(g_y * diff)) + float(np.sum(diff * diff)) / (2 * step)
            f_new = objective(K_new)
            if f_new <= bound + 1e-15 or step < ORACLE_CONFIG['min_step']:
                break
            step /= 2
        if f_new > objective(K):
            # restart momentum
            momentum, Y = 1.0, K
            continue
        next_momentum = (1 + math.sqrt(1 + 4 * momentum * momentum)) / 2
        Y = K_new + ((momentum - 1) / next_momentum) * (K_new - K)
        K, momentum = K_new, next_momentum
        if f_new < best:
            best_K, best = K_new, f_new
        history.append(best)
        if len(history) > patience and history[-patience - 1] - best < tol * 1e-3 * (1 + abs(best)):
            break
    else:
        logger.warning("descent oracle hit the iteration cap (%d) at value %.12g", max_iter, best)
    logger.debug("descent oracle: %s -> %.12g after %d iterations", theta.name, best, iteration + 1)
    return _rationalize(instance, side, sources, columns, best_K), best


def _rationalize(instance, side, sources, columns, K):
    """Exact refinement from a float kernel: rows rounded, last positive entry absorbs the error."""
    space = instance.space(side)
    entries = {}
    for i, x in enumerate(sources):
        support = [j for j in range(len(columns)) if K[i, j] > 0]
        probs = {j: Fraction(float(K[i, j])).limit_denominator(ORACLE_CONFIG['max_denominator'])
                 for j in support}
        anchor = max(support, key=lambda j: probs[j])
        probs[anchor] += 1 - sum(probs.values())
        for j, p in probs.items():
            if p > 0:
                entries[edge_key(side, x, columns[j])] = space.weight(x) * p
    return Plan(instance, side, entries)
