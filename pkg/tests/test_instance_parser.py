import json
from fractions import Fraction

import pytest

from src.models.equilibrium import build_equilibrium
from src.models.maximin import solve_lom
from src.parsers.instance_parser import (parse_allocation_text, parse_instance, parse_instance_text,
                                         parse_plan, parse_plan_text, parse_rational,
                                         serialize_allocation, serialize_instance, serialize_plan,
                                         write_json)
from src.utils.errors import InputFormatError

NEGATIVE_WEIGHT = """{
  "side0": {"atoms": [
    {"id": "x1", "weight": "1"},
    {"id": "x2", "weight": "-1"}
  ]},
  "side1": {"atoms": [{"id": "y1", "weight": "1"}]},
  "edges": [["x1", "y1"], ["x2", "y1"]]
}
"""


class TestInstances:
    def test_sample_files(self, data_dir, complete_2x2, path_2x2, null_target, crossed_null):
        instances = data_dir / 'instances'
        assert parse_instance(instances / 'complete_2x2.json') == complete_2x2
        assert parse_instance(instances / 'path_2x2.json') == path_2x2
        assert parse_instance(instances / 'null_target.json') == null_target
        assert parse_instance(instances / 'crossed_null.json') == crossed_null

    def test_serialized_form_parses_back(self, null_target):
        doc = serialize_instance(null_target)
        assert doc['side0']['atoms'] == [{'id': 'x1', 'weight': '2'}]
        assert parse_instance_text(json.dumps(doc)) == null_target

    def test_bad_json_is_located(self):
        with pytest.raises(InputFormatError) as excinfo:
            parse_instance_text('{\n  "side0": {\n  ,\n}', 'broken.json')
        assert excinfo.value.line == 3
        assert excinfo.value.located().startswith('broken.json:3:')

    def test_negative_weight_is_located(self):
        with pytest.raises(InputFormatError) as excinfo:
            parse_instance_text(NEGATIVE_WEIGHT, 'neg.json')
        assert excinfo.value.line == 4

    def test_missing_edges(self):
        with pytest.raises(InputFormatError, match='edges'):
            parse_instance_text('{"side0": {"atoms": []}, "side1": {"atoms": []}}')

    def test_isolated_positive_atom(self):
        text = json.dumps({
            'side0': {'atoms': [{'id': 'x1', 'weight': 1}]},
            'side1': {'atoms': [{'id': 'y1', 'weight': 1}, {'id': 'y2', 'weight': 1}]},
            'edges': [['x1', 'y1']],
        }, indent=2)
        with pytest.raises(InputFormatError, match="'y2'"):
            parse_instance_text(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputFormatError):
            parse_instance(tmp_path / 'absent.json')


class TestRationals:
    @pytest.mark.parametrize('literal, expected', [('1/3', Fraction(1, 3)), ('0.25', Fraction(1, 4)),
                                                   (3, Fraction(3))])
    def test_accepted(self, literal, expected):
        assert parse_rational(literal) == expected

    @pytest.mark.parametrize('literal', [0.5, 'one', '1/0', None])
    def test_rejected(self, literal):
        with pytest.raises(InputFormatError):
            parse_rational(literal)


class TestPlans:
    def test_sample_files(self, data_dir, complete_2x2, identity_plan, mixed_plan):
        plans = data_dir / 'plans'
        assert parse_plan(plans / 'complete_2x2_identity.json', complete_2x2) == identity_plan
        assert parse_plan(plans / 'complete_2x2_mixed.json', complete_2x2) == mixed_plan

    def test_serialized_form_parses_back(self, path_2x2):
        plan = solve_lom(path_2x2, 1)
        doc = serialize_plan(plan)
        assert doc['source_side'] == 1
        assert parse_plan_text(json.dumps(doc), path_2x2) == plan

    def test_unknown_atom(self, complete_2x2):
        text = '{\n  "source_side": 0,\n  "entries": [\n    {"from": "x9", "to": "y1", "mass": "1"}\n  ]\n}'
        with pytest.raises(InputFormatError, match='x9') as excinfo:
            parse_plan_text(text, complete_2x2)
        assert excinfo.value.line == 4

    def test_bad_side(self, complete_2x2):
        with pytest.raises(InputFormatError, match='source_side'):
            parse_plan_text('{"source_side": 2, "entries": []}', complete_2x2)

    def test_negative_mass(self, complete_2x2):
        text = json.dumps({'source_side': 0, 'entries': [{'from': 'x1', 'to': 'y1', 'mass': '-1'}]})
        with pytest.raises(InputFormatError, match='Negative'):
            parse_plan_text(text, complete_2x2)


class TestAllocations:
    def test_round_trip(self, null_target, tmp_path):
        allocation, price = build_equilibrium(solve_lom(null_target, 0), solve_lom(null_target, 1))
        path = tmp_path / 'allocation.json'
        write_json(serialize_allocation(allocation, price), path)
        parsed, parsed_price = parse_allocation_text(path.read_text(), null_target)
        assert parsed == allocation
        assert parsed_price == price

    def test_bad_item(self, null_target):
        text = json.dumps({'bundles': [{'agent': [0, 'x1'], 'items': [[1, 'y1']]}], 'price': []})
        with pytest.raises(InputFormatError):
            parse_allocation_text(text, null_target)

    def test_unknown_agent(self, null_target):
        text = json.dumps({'bundles': [], 'price': [[1, 'y9', '1/2']]})
        with pytest.raises(InputFormatError, match='y9'):
            parse_allocation_text(text, null_target)
