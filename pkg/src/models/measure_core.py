"""
Finite measures, bipartite instances and refinement plans.

Atoms carry exact rational weights. Zero-weight atoms stand in for null sets that
can still carry singular payload. Every value here is treated as immutable after
construction.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, Mapping, Tuple

from src.utils.errors import InstanceError, NotARefinementError, SpaceMismatchError
from src.utils.helpers import to_fraction

logger = logging.getLogger(__name__)

ZERO = Fraction(0)

Edge = Tuple[str, str]


def other_side(side):
    """Return the opposite side index."""
    if side not in (0, 1):
        raise InstanceError(f"Side must be 0 or 1, got {side!r}")
    return 1 - side


def edge_key(side, source, target):
    """Orient a (source, target) pair as the (side-0 id, side-1 id) edge key."""
    return (source, target) if side == 0 else (target, source)


@dataclass(frozen=True)
class AtomSpace:
    """Ordered finite set of labelled atoms with nonnegative rational weights."""

    atoms: Tuple[Tuple[str, Fraction], ...]
    _weights: Dict[str, Fraction] = field(init=False, repr=False, compare=False)
    _index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        atoms = tuple((str(atom_id), to_fraction(weight)) for atom_id, weight in self.atoms)
        if not atoms:
            raise InstanceError("An atom space needs at least one atom")
        weights = {}
        for atom_id, weight in atoms:
            if atom_id in weights:
                raise InstanceError(f"Duplicate atom id {atom_id!r}")
            if weight < 0:
                raise InstanceError(f"Negative weight {weight} at atom {atom_id!r}")
            weights[atom_id] = weight
        object.__setattr__(self, 'atoms', atoms)
        object.__setattr__(self, '_weights', weights)
        object.__setattr__(self, '_index', {atom_id: i for i, (atom_id, _) in enumerate(atoms)})

    @classmethod
    def from_weights(cls, weights):
        """Build from a mapping or an iterable of (id, weight) pairs, keeping order."""
        items = weights.items() if isinstance(weights, Mapping) else weights
        return cls(tuple(items))

    @property
    def ids(self):
        return tuple(atom_id for atom_id, _ in self.atoms)

    def weight(self, atom_id):
        try:
            return self._weights[atom_id]
        except KeyError:
            raise InstanceError(f"Unknown atom {atom_id!r}")

    def index(self, atom_id):
        return self._index[atom_id]

    def total_weight(self):
        return sum(self._weights.values(), ZERO)

    def positive_ids(self):
        return tuple(atom_id for atom_id, weight in self.atoms if weight > 0)

    def measure(self):
        """The base measure ν of this space."""
        return Measure(self, dict(self._weights))

    def __contains__(self, atom_id):
        return atom_id in self._weights

    def __len__(self):
        return len(self.atoms)

    def __iter__(self):
        return iter(self.ids)


@dataclass(frozen=True, eq=False)
class Measure:
    """Nonnegative rational mass on the atoms of an AtomSpace (zero entries are not stored)."""

    space: AtomSpace
    mass: Mapping[str, Fraction] = field(default_factory=dict)

    def __post_init__(self):
        cleaned = {}
        for atom_id, value in self.mass.items():
            if atom_id not in self.space:
                raise InstanceError(f"Measure charges unknown atom {atom_id!r}")
            value = to_fraction(value)
            if value < 0:
                raise InstanceError(f"Negative mass {value} at atom {atom_id!r}")
            if value:
                cleaned[atom_id] = value
        object.__setattr__(self, 'mass', cleaned)

    @classmethod
    def zero(cls, space):
        return cls(space, {})

    def __getitem__(self, atom_id):
        return self.mass.get(atom_id, ZERO)

    def __eq__(self, other):
        if not isinstance(other, Measure):
            return NotImplemented
        return self.space == other.space and self.mass == other.mass

    __hash__ = None

    def items(self):
        """(id, mass) for every atom of the space, in space order."""
        return [(atom_id, self[atom_id]) for atom_id in self.space.ids]

    def total(self):
        return sum(self.mass.values(), ZERO)

    def support(self):
        return frozenset(self.mass)

    def restrict(self, atom_ids):
        keep = set(atom_ids)
        return Measure(self.space, {a: m for a, m in self.mass.items() if a in keep})

    def scale(self, factor):
        factor = to_fraction(factor)
        return Measure(self.space, {a: factor * m for a, m in self.mass.items()})

    def __add__(self, other):
        require_same_space(self, other)
        merged = dict(self.mass)
        for atom_id, value in other.mass.items():
            merged[atom_id] = merged.get(atom_id, ZERO) + value
        return Measure(self.space, merged)

    def __sub__(self, other):
        """Difference; raises InstanceError if it would go negative anywhere."""
        require_same_space(self, other)
        return Measure(self.space, {a: self[a] - other[a] for a in self.space.ids})

    def le(self, other):
        """Atomwise self <= other."""
        require_same_space(self, other)
        return all(value <= other[atom_id] for atom_id, value in self.mass.items())


def require_same_space(mu, nu):
    if mu.space != nu.space:
        raise SpaceMismatchError("Measures live on different atom spaces")


@dataclass(frozen=True)
class Instance:
    """A finite weighted bipartite relation between side 0 and side 1."""

    side0: AtomSpace
    side1: AtomSpace
    edges: FrozenSet[Edge]
    _neighbors: Tuple[Dict[str, Tuple[str, ...]], Dict[str, Tuple[str, ...]]] = field(
        init=False, repr=False, compare=False)

    def __post_init__(self):
        edges = frozenset((str(a), str(b)) for a, b in self.edges)
        object.__setattr__(self, 'edges', edges)
        adjacency = ({atom_id: [] for atom_id in self.side0.ids},
                     {atom_id: [] for atom_id in self.side1.ids})
        for id0, id1 in edges:
            if id0 not in self.side0:
                raise InstanceError(f"Edge ({id0!r}, {id1!r}) has unknown side-0 endpoint")
            if id1 not in self.side1:
                raise InstanceError(f"Edge ({id0!r}, {id1!r}) has unknown side-1 endpoint")
            adjacency[0][id0].append(id1)
            adjacency[1][id1].append(id0)
        for side, space in ((0, self.side0), (1, self.side1)):
            for atom_id in space.positive_ids():
                if not adjacency[side][atom_id]:
                    raise InstanceError(
                        f"Positive-weight atom {atom_id!r} on side {side} has no incident edge")
        opposite = (self.side1, self.side0)
        ordered = tuple(
            {atom_id: tuple(sorted(nbrs, key=opposite[side].index)) for atom_id, nbrs in adjacency[side].items()}
            for side in (0, 1))
        object.__setattr__(self, '_neighbors', ordered)

    @classmethod
    def build(cls, side0, side1, edges):
        """Convenience constructor from weight mappings and an edge iterable."""
        return cls(AtomSpace.from_weights(side0), AtomSpace.from_weights(side1), frozenset(edges))

    def space(self, side):
        return self.side0 if side == 0 else self.side1

    def nu(self, side):
        return self.space(side).measure()

    def neighbors(self, side, atom_id):
        """Neighbors of an atom of `side`, in the opposite space's order."""
        return self._neighbors[side][atom_id]

    def neighborhood(self, side, atom_ids):
        """N(A) for a set A of side atoms."""
        result = set()
        for atom_id in atom_ids:
            result.update(self._neighbors[side][atom_id])
        return result

    def edge_list(self):
        """Edges sorted by (side-0 index, side-1 index)."""
        return sorted(self.edges, key=lambda e: (self.side0.index(e[0]), self.side1.index(e[1])))


@dataclass(frozen=True, eq=False)
class Plan:
    """
    Sparse nonnegative mass on pairs (side-0 id, side-1 id) of an instance.

    Entries off the relation are accepted at construction so that
    is_refinement can report them; every builder in this package only
    produces on-edge entries.
    """

    instance: Instance
    source_side: int
    entries: Mapping[Edge, Fraction] = field(default_factory=dict)

    def __post_init__(self):
        if self.source_side not in (0, 1):
            raise InstanceError(f"Source side must be 0 or 1, got {self.source_side!r}")
        cleaned = {}
        for (id0, id1), value in self.entries.items():
            if id0 not in self.instance.side0 or id1 not in self.instance.side1:
                raise InstanceError(f"Plan entry ({id0!r}, {id1!r}) has an unknown endpoint")
            value = to_fraction(value)
            if value < 0:
                raise InstanceError(f"Negative plan mass {value} on ({id0!r}, {id1!r})")
            if value:
                cleaned[(id0, id1)] = cleaned.get((id0, id1), ZERO) + value
        object.__setattr__(self, 'entries', cleaned)

    @classmethod
    def from_rows(cls, instance, source_side, rows):
        """Build from {source id: {target id: mass}} rows."""
        entries = {}
        for source, row in rows.items():
            for target, value in row.items():
                key = edge_key(source_side, source, target)
                entries[key] = entries.get(key, ZERO) + to_fraction(value)
        return cls(instance, source_side, entries)

    @property
    def opposite_side(self):
        return 1 - self.source_side

    def __getitem__(self, edge):
        return self.entries.get(edge, ZERO)

    def __eq__(self, other):
        if not isinstance(other, Plan):
            return NotImplemented
        return (self.instance == other.instance and self.source_side == other.source_side
                and self.entries == other.entries)

    __hash__ = None

    def source_of(self, edge):
        return edge[self.source_side]

    def target_of(self, edge):
        return edge[self.opposite_side]

    def rows(self):
        """{source id: {target id: mass}} view of the entries."""
        result = {}
        for edge, value in self.entries.items():
            result.setdefault(self.source_of(edge), {})[self.target_of(edge)] = value
        return result

    def total(self):
        return sum(self.entries.values(), ZERO)

    def support(self):
        return frozenset(self.entries)

    def on_edges(self):
        return all(edge in self.instance.edges for edge in self.entries)

    def with_entries(self, entries):
        return Plan(self.instance, self.source_side, entries)

    def scale(self, factor):
        factor = to_fraction(factor)
        return self.with_entries({e: factor * m for e, m in self.entries.items()})

    def __add__(self, other):
        _require_compatible(self, other)
        merged = dict(self.entries)
        for edge, value in other.entries.items():
            merged[edge] = merged.get(edge, ZERO) + value
        return self.with_entries(merged)

    def __sub__(self, other):
        """Entrywise difference; raises InstanceError if any entry would go negative."""
        _require_compatible(self, other)
        keys = set(self.entries) | set(other.entries)
        return self.with_entries({e: self[e] - other[e] for e in keys})

    def le(self, other):
        _require_compatible(self, other)
        return all(value <= other[edge] for edge, value in self.entries.items())


def _require_compatible(plan, other):
    if plan.instance != other.instance:
        raise SpaceMismatchError("Plans belong to different instances")


@dataclass(frozen=True)
class LebesgueSplit:
    """mu = density * nu + singular, atom by atom."""

    density: Dict[str, Fraction]
    singular: Measure

    def absolutely_continuous(self, nu):
        return Measure(nu.space, {a: r * nu[a] for a, r in self.density.items()})

    def reconstruct(self, nu):
        return self.absolutely_continuous(nu) + self.singular


def marginal(plan, side):
    """Marginal of a plan on the given side."""
    space = plan.instance.space(side)
    mass = {}
    for edge, value in plan.entries.items():
        atom_id = edge[side]
        mass[atom_id] = mass.get(atom_id, ZERO) + value
    return Measure(space, mass)


def payload(plan):
    """Opposite-side marginal of a plan."""
    return marginal(plan, plan.opposite_side)


def lebesgue_decompose(mu, nu):
    """
    Lebesgue decomposition of mu with respect to nu on a finite atom space.

    Args:
        mu: Measure to decompose
        nu: Reference measure on the same space

    Returns:
        LebesgueSplit with density mu/nu on nu-positive atoms and the rest singular
    """
    require_same_space(mu, nu)
    density = {}
    singular = {}
    for atom_id in mu.space.ids:
        weight = nu[atom_id]
        if weight > 0:
            density[atom_id] = mu[atom_id] / weight
        elif mu[atom_id]:
            singular[atom_id] = mu[atom_id]
    return LebesgueSplit(density, Measure(mu.space, singular))


def is_refinement(plan):
    """True iff the plan lives on edges and its source marginal is exactly ν_source."""
    if not plan.on_edges():
        return False
    return marginal(plan, plan.source_side) == plan.instance.nu(plan.source_side)


def require_refinement(plan):
    if not is_refinement(plan):
        raise NotARefinementError(f"Plan from side {plan.source_side} is not a refinement")


def payload_split(plan):
    """Lebesgue split of the payload against the opposite base measure."""
    return lebesgue_decompose(payload(plan), plan.instance.nu(plan.opposite_side))


def truncated_payload(plan, t):
    """
    Truncated absolutely continuous payload (r ∧ t)·ν on the opposite side.

    Args:
        plan: A refinement
        t: Nonnegative rational level

    Returns:
        Measure on the opposite space; the singular part is dropped
    """
    t = to_fraction(t)
    split = payload_split(plan)
    nu = plan.instance.nu(plan.opposite_side)
    return Measure(nu.space, {a: min(r, t) * nu[a] for a, r in split.density.items()})


class FallbackPolicy(str, Enum):
    """How a fallback kernel spreads an atom's mass over its neighborhood."""

    UNIFORM = 'uniform'
    LOWEST = 'lowest'


def fallback_row(instance, side, atom_id, policy=FallbackPolicy.UNIFORM):
    """
    Probability row over N(atom) used where a reverse kernel is undefined.

    Args:
        instance: The bipartite instance
        side: Side of the atom
        atom_id: Atom whose mass needs a destination
        policy: FallbackPolicy (uniform over neighbors, or the lowest-indexed neighbor)

    Returns:
        dict opposite id -> probability (exact, sums to 1)

    Raises:
        InstanceError: if the atom has no neighbor
    """
    neighbors = instance.neighbors(side, atom_id)
    if not neighbors:
        raise InstanceError(f"Atom {atom_id!r} on side {side} has no neighbor to fall back on")
    policy = FallbackPolicy(policy)
    if policy is FallbackPolicy.LOWEST:
        return {neighbors[0]: Fraction(1)}
    share = Fraction(1, len(neighbors))
    return {target: share for target in neighbors}
