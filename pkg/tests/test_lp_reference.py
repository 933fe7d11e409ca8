from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.models.divergence import square
from src.models.flow_oracle import cut_line, fit, fit_breakpoints, fit_flow
from src.models.measure_core import Instance, is_refinement
from src.oracles.lp_reference import (SimplexTableau, enumerate_extreme_plans, lp_fit,
                                      min_divergence_oracle, random_feasible_plan, random_instance)
from src.utils.errors import PreconditionError


class TestSimplex:
    def test_small_lp(self):
        tableau = SimplexTableau([[1, 0], [0, 1], [1, 1]], [1, 2, Fraction(5, 2)], [1, 1])
        assert tableau.solve() == 'optimal'
        assert tableau.value == Fraction(5, 2)
        x, y = tableau.solution()
        assert x + y == Fraction(5, 2)

    def test_unbounded(self):
        tableau = SimplexTableau([[1, -1]], [1], [0, 1])
        assert tableau.solve() == 'unbounded'

    def test_degenerate_lp_terminates(self):
        tableau = SimplexTableau([[1, 1], [1, 1], [1, 0]], [0, 0, 0], [1, 1])
        assert tableau.solve() == 'optimal'
        assert tableau.value == 0


class TestLpFit:
    @pytest.mark.parametrize('t', [0, '1/3', 1, 2, 5])
    def test_matches_max_flow(self, reference_instances, t):
        for instance in reference_instances.values():
            for side in (0, 1):
                assert lp_fit(instance, side, t) == fit(instance, side, t)

    def test_negative_level(self, complete_2x2):
        with pytest.raises(PreconditionError):
            lp_fit(complete_2x2, 0, -1)

    def test_edge_cap(self):
        ids = [f"a{k}" for k in range(9)]
        instance = Instance.build({a: 1 for a in ids}, {a: 1 for a in ids},
                                  [(a, b) for a in ids for b in ids])
        with pytest.raises(PreconditionError):
            lp_fit(instance, 0, 1)


class TestExtremePlans:
    def test_complete_graph(self, complete_2x2):
        plans = enumerate_extreme_plans(complete_2x2, 0)
        assert len(plans) == 4
        assert all(is_refinement(plan) for plan in plans)

    def test_zero_weight_atoms_do_not_branch(self, crossed_null):
        assert len(enumerate_extreme_plans(crossed_null, 0)) == 1

    def test_enumeration_cap(self):
        ids = [f"a{k}" for k in range(4)]
        instance = Instance.build({a: 1 for a in ids}, {a: 1 for a in ids},
                                  [(a, b) for a in ids for b in ids])
        with pytest.raises(PreconditionError):
            enumerate_extreme_plans(instance, 0)


class TestGenerators:
    def test_seeded_instances_repeat(self):
        assert random_instance(11) == random_instance(11)

    def test_first_atoms_are_positive(self):
        for seed in range(20):
            instance = random_instance(seed, zero_weight_prob=1.0)
            assert instance.side0.weight('x1') > 0
            assert instance.side1.weight('y1') > 0

    def test_seeded_plans_repeat(self, complete_2x2):
        assert random_feasible_plan(complete_2x2, 0, 4) == random_feasible_plan(complete_2x2, 0, 4)


class TestDescentOracle:
    def test_balanced_square(self, complete_2x2):
        plan, value = min_divergence_oracle(complete_2x2, 0, square())
        assert is_refinement(plan)
        assert value == pytest.approx(2, abs=1e-4)

    def test_starved_row_is_infinite(self, crossed_null):
        _, value = min_divergence_oracle(crossed_null, 0, square())
        assert value == float('inf')

    @pytest.mark.parametrize('seed', range(4))
    def test_rounded_plans_are_exact_refinements(self, seed):
        instance = random_instance(seed, max_atoms=4, max_edges=10)
        plan, _ = min_divergence_oracle(instance, 0, square())
        assert is_refinement(plan)
        assert all(isinstance(mass, Fraction) for mass in plan.entries.values())

    def test_positive_tolerance(self, complete_2x2):
        with pytest.raises(PreconditionError):
            min_divergence_oracle(complete_2x2, 0, square(), tol=0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10_000), side=st.sampled_from([0, 1]))
def test_lp_agrees_with_flow_on_breakpoints(seed, side):
    instance = random_instance(seed)
    profile = fit_breakpoints(instance, side)
    levels = set(profile.breakpoints) | {profile.t_max, Fraction(1, 7)}
    for t in levels:
        assert lp_fit(instance, side, t) == fit(instance, side, t)


@pytest.mark.slow
@pytest.mark.parametrize('seed', range(200))
def test_lp_agrees_with_flow_at_random_levels(seed):
    instance = random_instance(seed)
    rng = np.random.default_rng(seed)
    side = seed % 2
    for numerator in rng.integers(0, 65, size=5):
        t = Fraction(int(numerator), 16)
        result = fit_flow(instance, side, t)
        assert result.value == cut_line(instance, side, result.cut)(t)
        assert lp_fit(instance, side, t) == result.value
