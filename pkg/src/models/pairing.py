"""
Proportional response, paired divergences and the universal-closestness audit.

A closest pair is read off a level-optimal maximin refinement: push the
opposite base measure back through the refinement's reverse kernel.
"""

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from config import AUDIT_CONFIG, SOLVER_LIMITS, TOLERANCES, get_seed
from src.models.divergence import MarkovKernel, f_divergence, hockey_stick, occurring_ratios
from src.models.maximin import overflow_profile, solve_lom
from src.models.measure_core import (AtomSpace, FallbackPolicy, Measure, Plan, edge_key,
                                     fallback_row, other_side, payload, require_refinement)
from src.oracles import lp_reference
from src.utils.errors import InstanceError, IntegrandError
from src.utils.helpers import approx_le, to_fraction

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReverseKernel:
    """
    Conditional law of the source atom given the opposite atom.

    Rows exist only where the payload is positive; each row sums to 1 and
    is carried by the neighborhood of its atom.
    """

    plan_side: int
    rows: Dict[str, Dict[str, Fraction]]

    def as_markov_kernel(self, instance):
        """The rows as a MarkovKernel from the opposite space to the source space."""
        return MarkovKernel(instance.space(other_side(self.plan_side)),
                            instance.space(self.plan_side), self.rows)


@dataclass
class PairReport:
    """Outcome of universal_audit."""

    gamma_grid: Tuple[Fraction, ...]
    pair_values: Tuple[Fraction, ...]
    best_competitor_values: Tuple[Optional[Fraction], ...]
    n_competitors: int
    overflow_dominance: bool
    verdict: bool
    failures: List[dict] = field(default_factory=list)

    def to_dict(self):
        return {
            'verdict': self.verdict,
            'overflow_dominance': self.overflow_dominance,
            'n_competitors': self.n_competitors,
            'gamma': [
                {'gamma': g, 'pair': v, 'best_competitor': c}
                for g, v, c in zip(self.gamma_grid, self.pair_values, self.best_competitor_values)
            ],
            'failures': self.failures,
        }


def reverse_kernel(plan):
    """
    Reverse kernel of a refinement: column entries normalized by the payload.

    Raises:
        NotARefinementError: if the plan is not a refinement
    """
    require_refinement(plan)
    P = payload(plan)
    rows = {}
    for edge, value in plan.entries.items():
        y = plan.target_of(edge)
        rows.setdefault(y, {})[plan.source_of(edge)] = value / P[y]
    return ReverseKernel(plan.source_side, rows)


def proportional_response(plan, fallback=FallbackPolicy.UNIFORM):
    """
    PR(π): push ν_opposite back through the reverse kernel of π.

    Where the payload vanishes on a ν-positive atom its mass follows the
    fallback row instead. The result is a refinement from the opposite side.

    Args:
        plan: A refinement from side ι
        fallback: FallbackPolicy for atoms with zero payload

    Returns:
        Plan with source side 1 − ι
    """
    kernel = reverse_kernel(plan)
    instance = plan.instance
    side = plan.opposite_side
    nu = instance.nu(side)
    entries = {}
    for y in nu.space.positive_ids():
        row = kernel.rows.get(y)
        if row is None:
            row = fallback_row(instance, side, y, fallback)
        for x, prob in row.items():
            entries[edge_key(side, y, x)] = nu[y] * prob
    return Plan(instance, side, entries)


def edge_measures(pi_a, pi_b):
    """
    The two plans as measures on one atom space whose atoms are edges ("x|y").

    Raises:
        InstanceError: if the plans live on different instances or share a source side
    """
    if pi_a.instance != pi_b.instance:
        raise InstanceError("Paired plans belong to different instances")
    if pi_a.source_side == pi_b.source_side:
        raise InstanceError("Paired plans must refine opposite sides")
    keys = set(pi_a.instance.edges) | set(pi_a.entries) | set(pi_b.entries)
    space = AtomSpace(tuple((f"{a}|{b}", 0) for a, b in sorted(keys)))
    P = Measure(space, {f"{a}|{b}": m for (a, b), m in pi_a.entries.items()})
    Q = Measure(space, {f"{a}|{b}": m for (a, b), m in pi_b.entries.items()})
    return P, Q


def paired_divergence(pi_i, pi_bar, theta):
    """D_ϑ(π_ι‖π_ῑ) with the two plans read as measures on the edge set."""
    P, Q = edge_measures(pi_i, pi_bar)
    return f_divergence(P, Q, theta)


def hockey_stick_paired(pi_i, pi_bar, gamma):
    """HS_γ(π_ι‖π_ῑ) on the edge set."""
    P, Q = edge_measures(pi_i, pi_bar)
    return hockey_stick(P, Q, gamma)


def solve_closest_pair(instance, side, theta=None, fallback=FallbackPolicy.UNIFORM):
    """
    Universally closest pair (π*, PR(π*)) with π* the verified LOM refinement from `side`.

    Args:
        instance: Instance
        side: Side the first plan refines
        theta: Optional integrand; its paired value is logged
        fallback: FallbackPolicy used by the proportional response

    Returns:
        (Plan, Plan)
    """
    pi = solve_lom(instance, side)
    response = proportional_response(pi, fallback)
    if theta is not None:
        logger.info("closest pair from side %d: D_%s = %s", side, theta.name,
                    paired_divergence(pi, response, theta))
    return pi, response


def _payload_ratios(plan):
    nu = plan.instance.nu(plan.opposite_side)
    return occurring_ratios(payload(plan), nu)


def _extreme_competitors(instance, side, fallback):
    if len(instance.edges) > SOLVER_LIMITS['enumeration_max_edges']:
        return []
    own = list(lp_reference.enumerate_extreme_plans(instance, side))
    opposite = list(lp_reference.enumerate_extreme_plans(instance, other_side(side)))
    pairs = [(e, proportional_response(e, fallback)) for e in own]
    grid = itertools.islice(itertools.product(own, opposite), SOLVER_LIMITS['cross_grid_max_pairs'])
    pairs.extend(grid)
    return pairs


def universal_audit(pair, n_competitors=None, gamma_grid=None, seed=None, competitors=None,
                    fallback=FallbackPolicy.UNIFORM):
    """
    Hockey-stick audit of a candidate universally closest pair.

    Each competitor pair must have HS_γ at least the candidate's at every γ
    of the base grid, the candidate's edge and payload ratios and the
    competitor's own ratios; HS_γ is piecewise linear in γ with kinks only
    there, so the sweep is conclusive per competitor. The first component's
    overflow profile must also lie below every competitor's first component.

    Args:
        pair: (π_ι, π_ῑ), both refinements
        n_competitors: Number of random competitor pairs
        gamma_grid: Base γ grid
        seed: Base seed for the random competitors
        competitors: Explicit competitor pairs; replaces the generated ones
        fallback: FallbackPolicy for PR of extreme competitors

    Returns:
        PairReport
    """
    pi, pi_bar = pair
    require_refinement(pi)
    require_refinement(pi_bar)
    if pi.source_side == pi_bar.source_side:
        raise InstanceError("Audited pair must refine opposite sides")
    instance, side = pi.instance, pi.source_side
    n_competitors = AUDIT_CONFIG['n_competitors'] if n_competitors is None else n_competitors
    base = [to_fraction(g) for g in (gamma_grid or AUDIT_CONFIG['gamma_grid'])]
    seed = get_seed() if seed is None else seed

    if competitors is None:
        competitors = []
        for k in range(n_competitors):
            competitors.append((lp_reference.random_feasible_plan(instance, side, seed + 2 * k),
                                lp_reference.random_feasible_plan(instance, other_side(side),
                                                                  seed + 2 * k + 1)))
        competitors.extend(_extreme_competitors(instance, side, fallback))

    P, Q = edge_measures(pi, pi_bar)
    pair_grid = sorted(set(base) | set(occurring_ratios(P, Q)) | set(_payload_ratios(pi)))
    pair_cache = {g: hockey_stick(P, Q, g) for g in pair_grid}
    best = {g: None for g in pair_grid}
    failures = []
    own_over = overflow_profile(pi)
    dominance = True

    for index, (comp, comp_bar) in enumerate(competitors):
        if comp.source_side != side:
            comp, comp_bar = comp_bar, comp
        CP, CQ = edge_measures(comp, comp_bar)
        gammas = set(pair_grid) | set(occurring_ratios(CP, CQ)) | set(_payload_ratios(comp))
        for g in sorted(gammas):
            mine = pair_cache[g] if g in pair_cache else hockey_stick(P, Q, g)
            theirs = hockey_stick(CP, CQ, g)
            if g in best and (best[g] is None or theirs < best[g]):
                best[g] = theirs
            if not approx_le(mine, theirs, TOLERANCES['float']):
                failures.append({'competitor': index, 'gamma': g, 'pair': mine, 'competitor_value': theirs})
        comp_over = overflow_profile(comp)
        for t in sorted(set(own_over.breakpoints) | set(comp_over.breakpoints)):
            if own_over(t) > comp_over(t):
                dominance = False
                failures.append({'competitor': index, 'overflow_level': t,
                                 'pair': own_over(t), 'competitor_value': comp_over(t)})
                break

    verdict = dominance and not failures
    logger.info("universal audit: %d competitors, %d gamma values, verdict %s",
                len(competitors), len(pair_grid), verdict)
    return PairReport(
        gamma_grid=tuple(pair_grid),
        pair_values=tuple(pair_cache[g] for g in pair_grid),
        best_competitor_values=tuple(best[g] for g in pair_grid),
        n_competitors=len(competitors),
        overflow_dominance=dominance,
        verdict=verdict,
        failures=failures[:20],
    )


def strict_convex_pair_audit(pair, theta, tol=None):
    """
    Paired ϑ-value of `pair` against the extreme × extreme competitor grid.

    Returns:
        dict with verdict, the pair's value, the best competitor value and
        the number of competitors

    Raises:
        IntegrandError: if ϑ is not strictly convex
    """
    if not theta.strictly_convex:
        raise IntegrandError(f"{theta.name} is not strictly convex")
    tol = TOLERANCES['float'] if tol is None else tol
    pi, pi_bar = pair
    instance, side = pi.instance, pi.source_side
    own = lp_reference.enumerate_extreme_plans(instance, side)
    opposite = lp_reference.enumerate_extreme_plans(instance, other_side(side))
    grid = itertools.islice(itertools.product(own, opposite), SOLVER_LIMITS['cross_grid_max_pairs'])
    value = paired_divergence(pi, pi_bar, theta)
    best, count, verdict = None, 0, True
    for comp, comp_bar in grid:
        theirs = paired_divergence(comp, comp_bar, theta)
        count += 1
        if best is None or theirs < best:
            best = theirs
        if not approx_le(value, theirs, tol):
            verdict = False
    return {'verdict': verdict, 'pair_value': value, 'best_competitor': best, 'n_competitors': count}


def projection_bound_holds(pi_i, pi_bar, theta, tol=None):
    """D_ϑ(payload(π_ι)‖ν_ῑ) ≤ D_ϑ(π_ι‖π_ῑ) (projection onto the opposite side)."""
    tol = TOLERANCES['float'] if tol is None else tol
    one_sided = f_divergence(payload(pi_i), pi_i.instance.nu(pi_i.opposite_side), theta)
    return approx_le(one_sided, paired_divergence(pi_i, pi_bar, theta), tol)


def pr_comparison_holds(plan, theta, fallback=FallbackPolicy.UNIFORM, tol=None):
    """D_ϑ(π‖PR(π)) ≤ D_ϑ(payload(π)‖ν_ῑ)."""
    tol = TOLERANCES['float'] if tol is None else tol
    one_sided = f_divergence(payload(plan), plan.instance.nu(plan.opposite_side), theta)
    paired = paired_divergence(plan, proportional_response(plan, fallback), theta)
    return approx_le(paired, one_sided, tol)
