"""
Exact bipartite max-flow / min-cut with capacity measures.

Flows run on networkx DiGraphs with Fraction capacities; edges without a
capacity attribute are infinite. The certifying cut C is read off the final
residual network: source atoms not reachable from the super-source.
"""

import logging
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import FrozenSet, Tuple

import networkx as nx
from networkx.algorithms.flow import edmonds_karp

from src.models.measure_core import ZERO, Measure, Plan, marginal, other_side, payload
from src.utils.errors import PreconditionError, SolverError
from src.utils.helpers import positive_part, to_fraction

logger = logging.getLogger(__name__)

SOURCE = 's'
SINK = 't'


def _x(atom_id):
    return ('x', atom_id)


def _y(atom_id):
    return ('y', atom_id)


@dataclass(frozen=True)
class FlowResult:
    """Maximal subplan with its value and certifying cut C (source-side atom ids)."""

    plan: Plan
    value: Fraction
    cut: FrozenSet[str]


@dataclass(frozen=True)
class CutLine:
    """t ↦ ν_source(C) + t·ν_opposite(N(C^c)) for a fixed cut C."""

    intercept: Fraction
    slope: Fraction
    cut: FrozenSet[str]

    def __call__(self, t):
        return self.intercept + self.slope * t


@dataclass(frozen=True)
class PiecewiseLinear:
    """
    Concave piecewise-linear Fit on [0, ∞).

    Segment j starts at breakpoints[j] and runs to breakpoints[j+1] (the last
    one is unbounded). Each segment carries the cut whose line it follows.
    """

    breakpoints: Tuple[Fraction, ...]
    values: Tuple[Fraction, ...]
    slopes: Tuple[Fraction, ...]
    cuts: Tuple[FrozenSet[str], ...]
    t_max: Fraction
    limit: Fraction

    def segment_at(self, t):
        t = to_fraction(t)
        j = 0
        while j + 1 < len(self.breakpoints) and self.breakpoints[j + 1] <= t:
            j += 1
        return j

    def __call__(self, t):
        j = self.segment_at(t)
        return self.values[j] + self.slopes[j] * (to_fraction(t) - self.breakpoints[j])


def _solve(graph):
    """Max flow from SOURCE to SINK; returns the residual network."""
    if SOURCE not in graph or SINK not in graph:
        graph.add_nodes_from([SOURCE, SINK])
    return edmonds_karp(graph, SOURCE, SINK)


def _flow(residual, u, v):
    if residual.has_edge(u, v):
        return residual[u][v]['flow']
    return ZERO


def _reachable(residual):
    seen = {SOURCE}
    queue = deque([SOURCE])
    while queue:
        u = queue.popleft()
        for v, attr in residual[u].items():
            if v not in seen and attr['flow'] < attr['capacity']:
                seen.add(v)
                queue.append(v)
    return seen


def _bipartite_network(instance, side, a, b):
    graph = nx.DiGraph()
    graph.add_nodes_from([SOURCE, SINK])
    for atom_id, cap in a.mass.items():
        graph.add_edge(SOURCE, _x(atom_id), capacity=cap)
    for id0, id1 in instance.edges:
        source, target = (id0, id1) if side == 0 else (id1, id0)
        graph.add_edge(_x(source), _y(target))
    for atom_id, cap in b.mass.items():
        graph.add_edge(_y(atom_id), SINK, capacity=cap)
    return graph


def _infer_side(instance, a, source_side):
    if source_side is not None:
        return source_side
    if a.space == instance.side0:
        return 0
    if a.space == instance.side1:
        return 1
    raise PreconditionError("Capacity measure a does not live on either side of the instance")


def cut_line(instance, side, cut):
    """The affine function of t certified by cut C on source side `side`."""
    source_space = instance.space(side)
    complement = [atom_id for atom_id in source_space.ids if atom_id not in cut]
    opposite = instance.space(other_side(side))
    intercept = sum((source_space.weight(a) for a in cut), ZERO)
    slope = sum((opposite.weight(y) for y in instance.neighborhood(side, complement)), ZERO)
    return CutLine(intercept, slope, frozenset(cut))


def max_feasible_mass(instance, a, b, source_side=None):
    """
    Largest subplan with source marginal ≤ a and opposite marginal ≤ b.

    Args:
        instance: Instance
        a: Capacity measure on the source side
        b: Capacity measure on the opposite side
        source_side: Side of `a`; inferred from its space when omitted

    Returns:
        FlowResult whose value equals a(C) + b(N(C^c)) for the returned cut C
    """
    side = _infer_side(instance, a, source_side)
    residual = _solve(_bipartite_network(instance, side, a, b))
    entries = {}
    for id0, id1 in instance.edges:
        source, target = (id0, id1) if side == 0 else (id1, id0)
        value = _flow(residual, _x(source), _y(target))
        if value > 0:
            entries[(id0, id1)] = value
    reachable = _reachable(residual)
    cut = frozenset(atom_id for atom_id in instance.space(side).ids if _x(atom_id) not in reachable)
    value = to_fraction(residual.graph['flow_value'])
    logger.debug("max flow from side %d: value %s, |C| = %d", side, value, len(cut))
    return FlowResult(Plan(instance, side, entries), value, cut)


def fit_flow(instance, source_side, t):
    """FlowResult for Fit(t): a = ν_source, b = t·ν_opposite."""
    t = to_fraction(t)
    if t < 0:
        raise PreconditionError(f"Level must be nonnegative, got {t}")
    a = instance.nu(source_side)
    b = instance.nu(other_side(source_side)).scale(t)
    return max_feasible_mass(instance, a, b, source_side)


def fit(instance, source_side, t):
    """Fit(t): the largest subplan mass under source ≤ ν and opposite ≤ t·ν."""
    return fit_flow(instance, source_side, t).value


def fit_at_infinity(instance, source_side):
    """
    Fit(∞) with its certifying cut.

    Positive-weight sinks get a capacity above the total source mass, so every
    min cut avoids them and the value is min ν(C) over cuts with ν(N(C^c)) = 0.
    """
    a = instance.nu(source_side)
    opposite = instance.space(other_side(source_side))
    big = a.total() + 1
    b = Measure(opposite, {y: big for y in opposite.positive_ids()})
    return max_feasible_mass(instance, a, b, source_side)


def fit_breakpoints(instance, source_side):
    """
    Exact piecewise-linear form of t ↦ Fit(t).

    Starts from the line of the zero-weight source atoms (slope
    ν(N(positive atoms))) and the flat line at Fit(∞), then tests line
    crossings until consecutive envelope lines meet on the curve.

    Returns:
        PiecewiseLinear with one certifying cut per segment
    """
    space = instance.space(source_side)
    opposite = instance.space(other_side(source_side))
    start = cut_line(instance, source_side, [a for a in space.ids if space.weight(a) == 0])
    end_flow = fit_at_infinity(instance, source_side)
    end = cut_line(instance, source_side, end_flow.cut)
    if end.slope != 0 or end.intercept != end_flow.value:
        raise SolverError("Infinity cut does not certify Fit(∞)")

    if start.slope == 0:
        lines = [start]
    else:
        lines = _envelope(instance, source_side, start, end)

    breakpoints = [ZERO]
    for left, right in zip(lines, lines[1:]):
        breakpoints.append((right.intercept - left.intercept) / (left.slope - right.slope))
    values = [line(t) for line, t in zip(lines, breakpoints)]
    min_weight = min((opposite.weight(y) for y in opposite.positive_ids()), default=Fraction(1))
    t_max = space.total_weight() / min_weight + 1
    logger.info("Fit from side %d: %d segment(s), Fit(inf) = %s", source_side, len(lines), end.intercept)
    return PiecewiseLinear(
        breakpoints=tuple(breakpoints),
        values=tuple(values),
        slopes=tuple(line.slope for line in lines),
        cuts=tuple(line.cut for line in lines),
        t_max=t_max,
        limit=end.intercept,
    )


def _envelope(instance, side, left, right):
    """Lower-envelope lines between `left` (steeper) and `right`, in slope order."""
    crossing = (right.intercept - left.intercept) / (left.slope - right.slope)
    trial = fit_flow(instance, side, crossing)
    logger.debug("trial t=%s: fit %s, line %s", crossing, trial.value, left(crossing))
    if trial.value == left(crossing):
        return [left, right]
    middle = cut_line(instance, side, trial.cut)
    if not right.slope < middle.slope < left.slope:
        raise SolverError(f"Trial cut at t={crossing} is not between its neighbours")
    return _envelope(instance, side, left, middle)[:-1] + _envelope(instance, side, middle, right)


def realize_payload(instance, source_side, target):
    """
    Refinement whose a.c. payload is exactly `target`, if one exists.

    One max-flow meets the sink capacities `target` exactly; a second flow on
    its residual network moves every remaining unit of source mass onto
    weight-0 opposite atoms without touching the positive-weight sinks.

    Args:
        instance: Instance
        source_side: Side the plan refines
        target: Measure on the opposite side charging positive-weight atoms only

    Returns:
        Plan, or None when no refinement has that a.c. payload
    """
    nu = instance.nu(source_side)
    opposite = instance.space(other_side(source_side))
    first = max_feasible_mass(instance, nu, target, source_side)
    if first.value != target.total():
        return None
    sent = marginal(first.plan, source_side)

    graph = nx.DiGraph()
    graph.add_nodes_from([SOURCE, SINK])
    for atom_id, weight in nu.mass.items():
        slack = weight - sent[atom_id]
        if slack > 0:
            graph.add_edge(SOURCE, _x(atom_id), capacity=slack)
    for id0, id1 in instance.edges:
        source, target_id = (id0, id1) if source_side == 0 else (id1, id0)
        graph.add_edge(_x(source), _y(target_id))
        carried = first.plan[(id0, id1)]
        if carried > 0:
            graph.add_edge(_y(target_id), _x(source), capacity=carried)
    for atom_id in opposite.ids:
        if opposite.weight(atom_id) == 0:
            graph.add_edge(_y(atom_id), SINK)
    residual = _solve(graph)
    missing = nu.total() - first.value
    if to_fraction(residual.graph['flow_value']) != missing:
        return None

    entries = dict(first.plan.entries)
    for id0, id1 in instance.edges:
        source, target_id = (id0, id1) if source_side == 0 else (id1, id0)
        value = entries.get((id0, id1), ZERO) + _flow(residual, _x(source), _y(target_id))
        if value > 0:
            entries[(id0, id1)] = value
        else:
            entries.pop((id0, id1), None)
    return Plan(instance, source_side, entries)


def augmenting_subplan(sigma, sigma0, b):
    """
    Augmenting pair (γ, γ0) between two subplans under a common capacity b.

    Solves the finite network s → x (cap (ξ − ξ0)_+), x → y (cap σ),
    y → x (cap σ0), y → t (cap b − ψ0), where ξ, ξ0 are the source
    marginals and ψ0 the opposite marginal of σ0. The forward flow is γ, the
    backward flow is γ0.

    Returns:
        (gamma, gamma0) Plans with γ ≤ σ and γ0 ≤ σ0

    Raises:
        PreconditionError: if the plans are incompatible, exceed b, or
            total(σ) <= total(σ0)
    """
    if sigma.instance != sigma0.instance or sigma.source_side != sigma0.source_side:
        raise PreconditionError("σ and σ0 must be plans on the same instance and side")
    instance = sigma.instance
    side = sigma.source_side
    if b.space != instance.space(other_side(side)):
        raise PreconditionError("Capacity b must live on the opposite side")
    if not sigma.on_edges() or not sigma0.on_edges():
        raise PreconditionError("σ and σ0 must be supported on edges")
    psi, psi0 = payload(sigma), payload(sigma0)
    if not psi.le(b) or not psi0.le(b):
        raise PreconditionError("Opposite marginals must not exceed b")
    if sigma.total() <= sigma0.total():
        raise PreconditionError("Need total(σ) > total(σ0)")

    xi, xi0 = marginal(sigma, side), marginal(sigma0, side)
    graph = nx.DiGraph()
    graph.add_nodes_from([SOURCE, SINK])
    for atom_id in instance.space(side).ids:
        excess = positive_part(xi[atom_id] - xi0[atom_id])
        if excess > 0:
            graph.add_edge(SOURCE, _x(atom_id), capacity=excess)
    for edge in set(sigma.entries) | set(sigma0.entries):
        source, target = sigma.source_of(edge), sigma.target_of(edge)
        if sigma[edge] > 0:
            graph.add_edge(_x(source), _y(target), capacity=sigma[edge])
        if sigma0[edge] > 0:
            graph.add_edge(_y(target), _x(source), capacity=sigma0[edge])
    for atom_id in b.space.ids:
        room = b[atom_id] - psi0[atom_id]
        if room > 0:
            graph.add_edge(_y(atom_id), SINK, capacity=room)
    residual = _solve(graph)
    if residual.graph['flow_value'] <= 0:
        raise SolverError("Augmenting network carries no flow")

    gamma, gamma0 = {}, {}
    for edge in set(sigma.entries) | set(sigma0.entries):
        net = _flow(residual, _x(sigma.source_of(edge)), _y(sigma.target_of(edge)))
        if net > 0:
            gamma[edge] = net
        elif net < 0:
            gamma0[edge] = -net
    logger.debug("augmenting subplan value %s", residual.graph['flow_value'])
    return Plan(instance, side, gamma), Plan(instance, side, gamma0)
