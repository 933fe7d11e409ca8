"""
Walrasian allocation-price pairs induced by level-optimal maximin pairs.

Agents and goods are the atoms of both sides, keyed as (side, id). Every
agent owns one unit of itself and values only mass bought from adjacent
agents on the opposite side. All arithmetic is exact.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Tuple

from src.models.flow_oracle import max_feasible_mass
from src.models.maximin import verify_lom
from src.models.measure_core import (ZERO, FallbackPolicy, Measure, Plan, edge_key, fallback_row,
                                     marginal, other_side, payload)
from src.utils.errors import ConstructionError, PreconditionError
from src.utils.helpers import to_fraction

logger = logging.getLogger(__name__)

Agent = Tuple[int, str]

BAD_SET_PRICE = Fraction(2)


@dataclass(frozen=True)
class SideDecomposition:
    """ν = ν^ac + ν^⊥ against the a.c. part of the payload received from the opposite plan."""

    nu_ac: Measure
    nu_perp: Measure
    rho_ac: Dict[str, Fraction]

    @property
    def ac_carrier(self):
        return self.nu_ac.support()

    @property
    def perp_carrier(self):
        return self.nu_perp.support()


@dataclass(frozen=True)
class SddResult:
    """Symmetric density decomposition, indexed by side."""

    sides: Tuple[SideDecomposition, SideDecomposition]

    def __getitem__(self, side):
        return self.sides[side]

    def to_dict(self):
        return {
            side: {
                'nu_ac': dict(part.nu_ac.items()),
                'nu_perp': dict(part.nu_perp.items()),
                'rho_ac': dict(part.rho_ac),
            }
            for side, part in enumerate(self.sides)
        }


@dataclass(frozen=True)
class Allocation:
    """Bundle per agent: a finite measure on the agents of both sides."""

    bundles: Dict[Agent, Dict[Agent, Fraction]]

    def bundle(self, agent):
        return self.bundles.get(agent, {})

    def to_dict(self):
        return [{'agent': list(agent), 'items': [[s, i, m] for (s, i), m in sorted(bundle.items())]}
                for agent, bundle in sorted(self.bundles.items())]


@dataclass(frozen=True)
class Price:
    """Nonnegative bounded price per agent; agents without an entry cost 0."""

    values: Dict[Agent, Fraction]

    def __call__(self, agent):
        return self.values.get(agent, ZERO)

    def value_of(self, bundle):
        """⟨p, z⟩ for a bundle z."""
        return sum((self(agent) * mass for agent, mass in bundle.items()), ZERO)

    def to_dict(self):
        return [[s, i, v] for (s, i), v in sorted(self.values.items())]


@dataclass
class WalrasReport:
    """Outcome of verify_walras. Notes list issues at zero-weight agents, which never fail."""

    passed: bool
    failures: List[dict] = field(default_factory=list)
    notes: List[dict] = field(default_factory=list)

    def to_dict(self):
        return {'passed': self.passed, 'failures': self.failures, 'notes': self.notes}


@dataclass
class StructureReport:
    passed: bool
    traded_edges: int
    failures: List[dict] = field(default_factory=list)

    def to_dict(self):
        return {'passed': self.passed, 'traded_edges': self.traded_edges, 'failures': self.failures}


def _agents(instance):
    return [(side, atom_id) for side in (0, 1) for atom_id in instance.space(side).ids]


def _neighbors(instance, agent):
    side, atom_id = agent
    return [(other_side(side), n) for n in instance.neighbors(side, atom_id)]


def _require_lom_pair(pi0, pi1):
    if pi0.instance != pi1.instance:
        raise PreconditionError("The two plans belong to different instances")
    if pi0.source_side != 0 or pi1.source_side != 1:
        raise PreconditionError("Expected a side-0 refinement and a side-1 refinement")
    for plan in (pi0, pi1):
        if not verify_lom(plan).verdict:
            raise PreconditionError(f"Side-{plan.source_side} plan is not level-optimal maximin")


def symmetric_density_decomposition(pi0, pi1):
    """
    Split each ν_ι against the a.c. payload P_ι^ac delivered by the opposite plan.

    ν_ι^ac lives on {ν_ι > 0, P_ι > 0}, ν_ι^⊥ on {ν_ι > 0, P_ι = 0};
    ρ_ι = P_ι^ac/ν_ι on ν-positive atoms.

    Raises:
        PreconditionError: unless pi0, pi1 are LOM refinements from sides 0 and 1
    """
    _require_lom_pair(pi0, pi1)
    plans = (pi0, pi1)
    sides = []
    for side in (0, 1):
        nu = pi0.instance.nu(side)
        received = payload(plans[other_side(side)])
        ac, perp, rho = {}, {}, {}
        for atom_id in nu.space.positive_ids():
            rho[atom_id] = received[atom_id] / nu[atom_id]
            if received[atom_id] > 0:
                ac[atom_id] = nu[atom_id]
            else:
                perp[atom_id] = nu[atom_id]
        sides.append(SideDecomposition(Measure(nu.space, ac), Measure(nu.space, perp), rho))
    return SddResult(tuple(sides))


def build_equilibrium(pi0, pi1):
    """
    Allocation-price pair induced by a LOM pair.

    Agents on the a.c. carrier S^ac buy along the reverse kernel of the
    opposite plan's a.c. part and pay ρ/(1+ρ); agents on S^⊥ keep their
    own unit at price 0. Neighbors of S^⊥ and neighbors y of x ∈ S^ac with
    ρ(x)ρ(y) < 1 form the bad sets, priced 2 together with every
    zero-weight atom.

    Returns:
        (Allocation, Price), verified by verify_walras

    Raises:
        PreconditionError: unless the inputs form a LOM pair
        ConstructionError: if a bad set hits a positive-weight atom or the
            result fails verify_walras
    """
    sdd = symmetric_density_decomposition(pi0, pi1)
    instance = pi0.instance
    plans = (pi0, pi1)
    bundles, prices = {}, {}
    bad = (set(), set())

    for side in (0, 1):
        opposite = other_side(side)
        part, far = sdd[side], sdd[opposite]
        space = instance.space(side)
        delivering = plans[opposite]
        for atom_id in space.ids:
            agent = (side, atom_id)
            neighbors = instance.neighbors(side, atom_id)
            if atom_id in part.ac_carrier:
                weight = space.weight(atom_id)
                bundle = {}
                for target in neighbors:
                    if target in far.ac_carrier:
                        mass = delivering[edge_key(side, atom_id, target)]
                        if mass:
                            bundle[(opposite, target)] = mass / weight
                bundles[agent] = bundle
                rho = part.rho_ac[atom_id]
                prices[agent] = rho / (1 + rho)
                for target in neighbors:
                    if rho * far.rho_ac.get(target, ZERO) < 1:
                        bad[opposite].add(target)
            elif atom_id in part.perp_carrier:
                bundles[agent] = {agent: Fraction(1)}
                prices[agent] = ZERO
                bad[opposite].update(neighbors)
            else:
                bundles[agent] = {agent: Fraction(1)}
                prices[agent] = BAD_SET_PRICE

    for side in (0, 1):
        space = instance.space(side)
        for atom_id in sorted(bad[side], key=space.index):
            if space.weight(atom_id) > 0:
                raise ConstructionError(f"Bad set on side {side} contains positive-weight atom {atom_id!r}")
            prices[(side, atom_id)] = BAD_SET_PRICE

    allocation, price = Allocation(bundles), Price(prices)
    report = verify_walras(allocation, price, instance)
    if not report.passed:
        raise ConstructionError(f"Constructed pair is not a Walrasian equilibrium: {report.failures[0]}")
    logger.info("equilibrium built: %d agents, bad sets %d/%d", len(bundles), len(bad[0]), len(bad[1]))
    return allocation, price


def agent_utility(instance, agent, bundle):
    """u_t(z) = z(N(t)): mass bought from adjacent opposite-side agents."""
    return sum((bundle.get(n, ZERO) for n in _neighbors(instance, agent)), ZERO)


def max_affordable_utility(instance, agent, price):
    """
    sup of u_t over the budget set {z : ⟨p, z⟩ ≤ p(t)}.

    p(t)/min{p(z) : z ∈ N(t)}; 0 with no neighbors; +inf once a neighbor is free.
    """
    neighbors = _neighbors(instance, agent)
    if not neighbors:
        return ZERO
    cheapest = min(price(n) for n in neighbors)
    if cheapest == 0:
        return math.inf
    return price(agent) / cheapest


def verify_walras(allocation, price, instance):
    """
    Exact Walras verification.

    Feasibility is checked atomwise over all agents. Consumption sets,
    budgets and optimality are required for positive-weight agents; the
    same issues at zero-weight agents are only noted.

    Returns:
        WalrasReport
    """
    failures, notes = [], []
    agents = _agents(instance)
    weights = {agent: instance.space(agent[0]).weight(agent[1]) for agent in agents}

    totals = {}
    for agent in agents:
        for good, mass in allocation.bundle(agent).items():
            totals[good] = totals.get(good, ZERO) + weights[agent] * mass
    for good in set(totals) | set(agents):
        if good not in weights:
            failures.append({'check': 'feasibility', 'agent': good, 'detail': 'unknown good'})
        elif totals.get(good, ZERO) != weights[good]:
            failures.append({'check': 'feasibility', 'agent': good,
                             'detail': {'allocated': totals.get(good, ZERO), 'endowment': weights[good]}})

    for agent in agents:
        sink = failures if weights[agent] > 0 else notes
        bundle = allocation.bundle(agent)
        allowed = {agent} | set(_neighbors(instance, agent))
        outside = [good for good, mass in bundle.items() if mass and good not in allowed]
        if any(mass < 0 for mass in bundle.values()):
            sink.append({'check': 'consumption_set', 'agent': agent, 'detail': 'negative mass'})
        if outside:
            sink.append({'check': 'consumption_set', 'agent': agent, 'detail': {'outside': outside}})
        cost = price.value_of(bundle)
        if cost > price(agent):
            sink.append({'check': 'budget', 'agent': agent, 'detail': {'cost': cost, 'wealth': price(agent)}})
        best = max_affordable_utility(instance, agent, price)
        utility = agent_utility(instance, agent, bundle)
        if utility != best:
            sink.append({'check': 'optimality', 'agent': agent,
                         'detail': {'utility': utility, 'best': best}})

    if any(v < 0 for v in price.values.values()):
        failures.append({'check': 'price', 'agent': None, 'detail': 'negative price'})
    if not any(v > 0 for v in price.values.values()):
        failures.append({'check': 'price', 'agent': None, 'detail': 'price is identically zero'})

    passed = not failures
    logger.debug("verify_walras: %d failure(s), %d note(s)", len(failures), len(notes))
    return WalrasReport(passed, failures, notes)


def _traded_plan(allocation, instance, side):
    """Side-`side` goods bought by opposite agents along edges, as a plan from `side`."""
    opposite = other_side(side)
    buyers = instance.space(opposite)
    entries = {}
    for buyer in buyers.ids:
        weight = buyers.weight(buyer)
        if weight == 0:
            continue
        bundle = allocation.bundle((opposite, buyer))
        for good in instance.neighbors(opposite, buyer):
            mass = bundle.get((side, good), ZERO)
            if mass:
                entries[edge_key(side, good, buyer)] = weight * mass
    return Plan(instance, side, entries)


def _deficit(traded, instance, side):
    nu = instance.nu(side)
    received = marginal(traded, side)
    return {atom_id: nu[atom_id] - received[atom_id] for atom_id in nu.space.ids}


def _fallback_plan(instance, side, deficit, policy):
    entries = {}
    for atom_id, mass in deficit.items():
        if mass > 0:
            for target, prob in fallback_row(instance, side, atom_id, policy).items():
                key = edge_key(side, atom_id, target)
                entries[key] = entries.get(key, ZERO) + mass * prob
    return Plan(instance, side, entries)


def extract_pair(allocation, instance, fallback=FallbackPolicy.UNIFORM):
    """
    Refinement pair read off a feasible allocation.

    π_ι collects the side-ι goods consumed by side-ῑ agents along edges;
    whatever part of ν_ι nobody bought is routed through the fallback rows.

    Returns:
        (pi0, pi1)

    Raises:
        ConstructionError: if some good is bought beyond its endowment
    """
    plans = []
    for side in (0, 1):
        traded = _traded_plan(allocation, instance, side)
        deficit = _deficit(traded, instance, side)
        over = [atom_id for atom_id, d in deficit.items() if d < 0]
        if over:
            raise ConstructionError(f"Goods {over} on side {side} are bought beyond their endowment")
        plans.append(traded + _fallback_plan(instance, side, deficit, fallback))
    return plans[0], plans[1]


def structure_audit(allocation, price, instance, fallback=FallbackPolicy.UNIFORM):
    """
    Structure of the pair extracted from an equilibrium.

    (i) no positive-weight agent faces a free neighbor, and ρ_0(x)ρ_1(y) ≥ 1
    on edges between positive-weight, positive-price agents; (ii) unbought
    endowment sits on zero-price goods and its fallback lands on zero-weight
    atoms only; (iii) ρ_0(x)ρ_1(y) = 1 on every traded edge. Here ρ(t) is
    the utility of agent t.
    """
    failures = []
    weights = {agent: instance.space(agent[0]).weight(agent[1]) for agent in _agents(instance)}
    rho = {agent: agent_utility(instance, agent, allocation.bundle(agent)) for agent in weights}

    for agent, weight in weights.items():
        if weight > 0 and any(price(n) == 0 for n in _neighbors(instance, agent)):
            failures.append({'part': 'i', 'agent': agent, 'detail': 'zero-price neighbor'})
    for x, y in instance.edge_list():
        a, b = (0, x), (1, y)
        if weights[a] > 0 and weights[b] > 0 and price(a) > 0 and price(b) > 0:
            if rho[a] * rho[b] < 1:
                failures.append({'part': 'i', 'edge': (x, y), 'detail': rho[a] * rho[b]})

    traded_edges = set()
    for side in (0, 1):
        traded = _traded_plan(allocation, instance, side)
        deficit = _deficit(traded, instance, side)
        for atom_id, d in deficit.items():
            if d < 0:
                failures.append({'part': 'ii', 'agent': (side, atom_id), 'detail': 'bought beyond endowment'})
            elif d > 0 and price((side, atom_id)) > 0:
                failures.append({'part': 'ii', 'agent': (side, atom_id), 'detail': 'unbought positive-price good'})
        positive = {a: d for a, d in deficit.items() if d > 0}
        landing = payload(_fallback_plan(instance, side, positive, fallback))
        for atom_id in landing.support():
            if instance.space(other_side(side)).weight(atom_id) > 0:
                failures.append({'part': 'ii', 'agent': (other_side(side), atom_id),
                                 'detail': 'fallback lands on a positive-weight atom'})
        traded_edges.update(traded.support())

    for x, y in sorted(traded_edges):
        product = rho[(0, x)] * rho[(1, y)]
        if product != 1:
            failures.append({'part': 'iii', 'edge': (x, y), 'detail': product})

    return StructureReport(not failures, len(traded_edges), failures)


def canonical_sdd_audit(pair_a, pair_b):
    """True iff two LOM pairs induce the same symmetric density decomposition."""
    first = symmetric_density_decomposition(*pair_a)
    second = symmetric_density_decomposition(*pair_b)
    for side in (0, 1):
        a, b = first[side], second[side]
        if a.nu_ac != b.nu_ac or a.nu_perp != b.nu_perp or a.rho_ac != b.rho_ac:
            return False
    return True


def backward_singularity_holds(plan, sdd):
    """Mass a refinement sends to zero-weight atoms leaves only atoms with ρ^ac = 0."""
    opposite = plan.instance.space(plan.opposite_side)
    rho = sdd[plan.source_side].rho_ac
    for edge, mass in plan.entries.items():
        if mass and opposite.weight(plan.target_of(edge)) == 0:
            if rho.get(plan.source_of(edge), ZERO) != 0:
                return False
    return True


def layer_incompatibility_holds(instance, sdd, t, side=0):
    """
    No subplan moves mass from {ρ_ι ≤ t} (caps ν_ι) to {ρ_ῑ < 1/t} (caps ν_ῑ^ac).

    Raises:
        PreconditionError: if t <= 0
    """
    t = to_fraction(t)
    if t <= 0:
        raise PreconditionError(f"Layer level must be positive, got {t}")
    opposite = other_side(side)
    nu = instance.nu(side)
    low = Measure(nu.space, {x: nu[x] for x, r in sdd[side].rho_ac.items() if r <= t})
    far = sdd[opposite]
    high = Measure(far.nu_ac.space, {y: far.nu_ac[y] for y, r in far.rho_ac.items() if r < 1 / t})
    return max_feasible_mass(instance, low, high, side).value == 0
