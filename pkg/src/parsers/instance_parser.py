"""
JSON codecs for instances, plans and allocations.

Rationals travel as "p/q" strings; decimal strings and integers are accepted
on input and converted exactly. Every malformed file raises InputFormatError
pointing at the offending line.
"""

import json
import logging
import re

from src.models.equilibrium import Allocation, Price
from src.models.measure_core import AtomSpace, Instance, Plan, edge_key
from src.utils.errors import InputFormatError, InstanceError
from src.utils.helpers import to_fraction, to_jsonable

logger = logging.getLogger(__name__)


def _read(path):
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return f.read()
    except OSError as exc:
        raise InputFormatError(f"Cannot read file: {exc.strerror}", path)


def _load(text, path):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"Invalid JSON: {exc.msg}", path, exc.lineno)


def _line_of(text, pattern, occurrence=0):
    """1-based line of the n-th regex match in the source text, or None."""
    for k, match in enumerate(re.finditer(pattern, text)):
        if k == occurrence:
            return text.count('\n', 0, match.start()) + 1
    return None


def _key_line(text, key, occurrence=0):
    return _line_of(text, rf'"{re.escape(key)}"\s*:', occurrence)


def _require(doc, key, kind, text, path):
    if not isinstance(doc, dict) or key not in doc:
        raise InputFormatError(f"Missing key {key!r}", path, _key_line(text, key) or 1)
    value = doc[key]
    if not isinstance(value, kind):
        raise InputFormatError(f"Key {key!r} has the wrong type", path, _key_line(text, key))
    return value


def parse_rational(value, path=None, line=None):
    """
    Parse a weight or mass literal.

    Args:
        value: int or string in "p/q" or decimal form
        path: Source file for diagnostics
        line: Source line for diagnostics

    Returns:
        Fraction
    """
    if isinstance(value, float):
        raise InputFormatError(f"Write rationals as strings or integers, got {value!r}", path, line)
    try:
        return to_fraction(value)
    except ValueError:
        raise InputFormatError(f"Not a rational literal: {value!r}", path, line)


def _parse_side(doc, name, text, path):
    side = _require(doc, name, dict, text, path)
    atoms = side.get('atoms')
    if not isinstance(atoms, list):
        raise InputFormatError(f"{name}.atoms must be a list", path, _key_line(text, name))
    parsed = []
    for atom in atoms:
        if not isinstance(atom, dict) or 'id' not in atom or 'weight' not in atom:
            raise InputFormatError(f"Every atom of {name} needs 'id' and 'weight'", path, _key_line(text, name))
        atom_id = str(atom['id'])
        line = _line_of(text, rf'"id"\s*:\s*"{re.escape(atom_id)}"')
        parsed.append((atom_id, parse_rational(atom['weight'], path, line)))
    return parsed


def parse_instance_text(text, path=None):
    """Parse an InstanceFile document."""
    doc = _load(text, path)
    side0 = _parse_side(doc, 'side0', text, path)
    side1 = _parse_side(doc, 'side1', text, path)
    raw_edges = _require(doc, 'edges', list, text, path)
    edges = []
    for k, edge in enumerate(raw_edges):
        if not isinstance(edge, list) or len(edge) != 2:
            raise InputFormatError(f"Edge #{k} must be a [side0 id, side1 id] pair", path, _key_line(text, 'edges'))
        edges.append((str(edge[0]), str(edge[1])))
    try:
        instance = Instance(AtomSpace(tuple(side0)), AtomSpace(tuple(side1)), frozenset(edges))
    except InstanceError as exc:
        quoted = re.findall(r"'([^']*)'", str(exc))
        line = _line_of(text, rf'"{re.escape(quoted[0])}"') if quoted else None
        raise InputFormatError(str(exc), path, line)
    logger.debug("parsed instance %s: %d x %d atoms, %d edges", path, len(instance.side0),
                 len(instance.side1), len(instance.edges))
    return instance


def parse_instance(path):
    return parse_instance_text(_read(path), path)


def parse_plan_text(text, instance, path=None):
    """Parse a PlanFile document against an instance."""
    doc = _load(text, path)
    side = _require(doc, 'source_side', int, text, path)
    if side not in (0, 1):
        raise InputFormatError(f"source_side must be 0 or 1, got {side!r}", path, _key_line(text, 'source_side'))
    raw_entries = _require(doc, 'entries', list, text, path)
    source, target = instance.space(side), instance.space(1 - side)
    entries = {}
    for k, entry in enumerate(raw_entries):
        line = _key_line(text, 'from', k) or _key_line(text, 'entries')
        if not isinstance(entry, dict) or not {'from', 'to', 'mass'} <= set(entry):
            raise InputFormatError("Plan entries need 'from', 'to' and 'mass'", path, line)
        origin, dest = str(entry['from']), str(entry['to'])
        if origin not in source:
            raise InputFormatError(f"Unknown side-{side} atom {origin!r}", path, line)
        if dest not in target:
            raise InputFormatError(f"Unknown side-{1 - side} atom {dest!r}", path, line)
        mass = parse_rational(entry['mass'], path, line)
        if mass < 0:
            raise InputFormatError(f"Negative mass {mass}", path, line)
        key = edge_key(side, origin, dest)
        entries[key] = entries.get(key, 0) + mass
    return Plan(instance, side, entries)


def parse_plan(path, instance):
    return parse_plan_text(_read(path), instance, path)


def _parse_agent(raw, instance, path, line):
    if not isinstance(raw, list) or len(raw) < 2 or raw[0] not in (0, 1):
        raise InputFormatError(f"Agent reference must start with [side, id], got {raw!r}", path, line)
    side, atom_id = raw[0], str(raw[1])
    if atom_id not in instance.space(side):
        raise InputFormatError(f"Unknown side-{side} atom {atom_id!r}", path, line)
    return side, atom_id


def parse_allocation_text(text, instance, path=None):
    """Parse an AllocationFile document into (Allocation, Price)."""
    doc = _load(text, path)
    raw_bundles = _require(doc, 'bundles', list, text, path)
    raw_price = _require(doc, 'price', list, text, path)
    bundles = {}
    for k, entry in enumerate(raw_bundles):
        line = _key_line(text, 'agent', k)
        if not isinstance(entry, dict) or 'agent' not in entry or not isinstance(entry.get('items'), list):
            raise InputFormatError("Bundles need 'agent' and a list of 'items'", path, line)
        agent = _parse_agent(entry['agent'], instance, path, line)
        bundle = {}
        for item in entry['items']:
            good = _parse_agent(item, instance, path, line)
            if len(item) != 3:
                raise InputFormatError(f"Bundle item must be [side, id, mass], got {item!r}", path, line)
            bundle[good] = bundle.get(good, 0) + parse_rational(item[2], path, line)
        bundles[agent] = bundle
    prices = {}
    line = _key_line(text, 'price')
    for item in raw_price:
        agent = _parse_agent(item, instance, path, line)
        if len(item) != 3:
            raise InputFormatError(f"Price entry must be [side, id, value], got {item!r}", path, line)
        prices[agent] = parse_rational(item[2], path, line)
    return Allocation(bundles), Price(prices)


def parse_allocation(path, instance):
    return parse_allocation_text(_read(path), instance, path)


def serialize_instance(instance):
    return to_jsonable({
        'side0': {'atoms': [{'id': a, 'weight': w} for a, w in instance.side0.atoms]},
        'side1': {'atoms': [{'id': a, 'weight': w} for a, w in instance.side1.atoms]},
        'edges': [list(edge) for edge in instance.edge_list()],
    })


def serialize_plan(plan):
    instance = plan.instance
    order = {edge: k for k, edge in enumerate(instance.edge_list())}
    edges = sorted(plan.entries, key=lambda e: (order.get(e, len(order)), e))
    return to_jsonable({
        'source_side': plan.source_side,
        'entries': [{'from': plan.source_of(e), 'to': plan.target_of(e), 'mass': plan[e]} for e in edges],
    })


def serialize_allocation(allocation, price):
    return to_jsonable({'bundles': allocation.to_dict(), 'price': price.to_dict()})


def serialize_certificate(certificate):
    return to_jsonable(certificate.to_dict())


def write_json(doc, path):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(to_jsonable(doc), f, indent=2)
        f.write('\n')
