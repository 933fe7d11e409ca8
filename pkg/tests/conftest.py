"""Shared fixtures: the four reference instances and their named plans."""

from fractions import Fraction
from pathlib import Path

import pytest

from src.models.measure_core import Instance, Plan

DATA = Path(__file__).resolve().parent.parent / 'data'


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def complete_2x2():
    return Instance.build({'x1': 1, 'x2': 1}, {'y1': 1, 'y2': 1},
                          [('x1', 'y1'), ('x1', 'y2'), ('x2', 'y1'), ('x2', 'y2')])


@pytest.fixture
def path_2x2():
    return Instance.build({'x1': 1, 'x2': 1}, {'y1': 1, 'y2': 1},
                          [('x1', 'y1'), ('x2', 'y1'), ('x2', 'y2')])


@pytest.fixture
def null_target():
    return Instance.build({'x1': 2}, {'y1': 1, 'y2': 0}, [('x1', 'y1'), ('x1', 'y2')])


@pytest.fixture
def crossed_null():
    return Instance.build({'x1': 1, 'x2': 0}, {'y1': 1, 'y2': 0}, [('x1', 'y2'), ('x2', 'y1')])


@pytest.fixture
def identity_plan(complete_2x2):
    return Plan(complete_2x2, 0, {('x1', 'y1'): 1, ('x2', 'y2'): 1})


@pytest.fixture
def swapped_plan(complete_2x2):
    return Plan(complete_2x2, 0, {('x1', 'y2'): 1, ('x2', 'y1'): 1})


@pytest.fixture
def mixed_plan(complete_2x2):
    return Plan(complete_2x2, 1, {
        ('x1', 'y1'): Fraction(1, 4), ('x2', 'y1'): Fraction(3, 4),
        ('x1', 'y2'): Fraction(3, 4), ('x2', 'y2'): Fraction(1, 4),
    })


@pytest.fixture
def crowded_plan(path_2x2):
    return Plan(path_2x2, 0, {('x1', 'y1'): 1, ('x2', 'y1'): 1})


@pytest.fixture
def path_identity(path_2x2):
    return Plan(path_2x2, 0, {('x1', 'y1'): 1, ('x2', 'y2'): 1})


@pytest.fixture
def reference_instances(complete_2x2, path_2x2, null_target, crossed_null):
    return {
        'complete_2x2': complete_2x2,
        'path_2x2': path_2x2,
        'null_target': null_target,
        'crossed_null': crossed_null,
    }
