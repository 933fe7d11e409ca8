from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.models.equilibrium import (Allocation, Price, backward_singularity_holds, build_equilibrium,
                                    canonical_sdd_audit, extract_pair, layer_incompatibility_holds,
                                    max_affordable_utility, structure_audit,
                                    symmetric_density_decomposition, verify_walras)
from src.models.maximin import solve_lom, verify_lom
from src.models.measure_core import FallbackPolicy
from src.models.pairing import proportional_response
from src.oracles.lp_reference import random_instance
from src.utils.errors import ConstructionError, PreconditionError


def lom_pair(instance):
    return solve_lom(instance, 0), solve_lom(instance, 1)


class TestDecomposition:
    def test_null_target(self, null_target):
        sdd = symmetric_density_decomposition(*lom_pair(null_target))
        assert sdd[0].rho_ac == {'x1': Fraction(1, 2)}
        assert sdd[1].rho_ac == {'y1': 2}
        assert sdd[0].ac_carrier == frozenset({'x1'})
        assert not sdd[1].perp_carrier

    def test_crossed_null_is_all_singular(self, crossed_null):
        sdd = symmetric_density_decomposition(*lom_pair(crossed_null))
        assert sdd[0].perp_carrier == frozenset({'x1'})
        assert sdd[1].perp_carrier == frozenset({'y1'})
        assert sdd[0].rho_ac == {'x1': 0}

    def test_rejects_non_lom_input(self, path_2x2, crowded_plan):
        with pytest.raises(PreconditionError):
            symmetric_density_decomposition(crowded_plan, solve_lom(path_2x2, 1))

    def test_rejects_swapped_sides(self, complete_2x2):
        pi0, pi1 = lom_pair(complete_2x2)
        with pytest.raises(PreconditionError):
            symmetric_density_decomposition(pi1, pi0)

    def test_canonical_across_pairs(self, complete_2x2, identity_plan, swapped_plan):
        first = (identity_plan, proportional_response(identity_plan))
        second = (swapped_plan, proportional_response(swapped_plan))
        assert canonical_sdd_audit((first[0], first[1]), (second[0], second[1]))


class TestConstruction:
    def test_null_target_prices(self, null_target):
        allocation, price = build_equilibrium(*lom_pair(null_target))
        assert price((0, 'x1')) == Fraction(1, 3)
        assert price((1, 'y1')) == Fraction(2, 3)
        assert price((1, 'y2')) == 2
        assert allocation.bundle((0, 'x1')) == {(1, 'y1'): Fraction(1, 2)}
        assert allocation.bundle((1, 'y1')) == {(0, 'x1'): 2}

    def test_crossed_null_prices(self, crossed_null):
        allocation, price = build_equilibrium(*lom_pair(crossed_null))
        assert price.values == {(0, 'x1'): 0, (1, 'y1'): 0, (0, 'x2'): 2, (1, 'y2'): 2}
        assert allocation.bundle((0, 'x1')) == {(0, 'x1'): 1}

    def test_complete_graph_prices(self, complete_2x2):
        _, price = build_equilibrium(*lom_pair(complete_2x2))
        assert set(price.values.values()) == {Fraction(1, 2)}

    def test_complete_graph_bundles(self, identity_plan, mixed_plan):
        allocation, price = build_equilibrium(identity_plan, mixed_plan)
        assert allocation.bundle((0, 'x1')) == {(1, 'y1'): Fraction(1, 4), (1, 'y2'): Fraction(3, 4)}
        assert allocation.bundle((0, 'x2')) == {(1, 'y1'): Fraction(3, 4), (1, 'y2'): Fraction(1, 4)}
        assert allocation.bundle((1, 'y1')) == {(0, 'x1'): 1}
        assert allocation.bundle((1, 'y2')) == {(0, 'x2'): 1}
        assert set(price.values.values()) == {Fraction(1, 2)}
        assert verify_walras(allocation, price, identity_plan.instance).passed

    def test_reference_instances_verify(self, reference_instances):
        for name, instance in reference_instances.items():
            allocation, price = build_equilibrium(*lom_pair(instance))
            assert verify_walras(allocation, price, instance).passed, name
            report = structure_audit(allocation, price, instance)
            assert report.passed, (name, report.failures)


class TestVerification:
    def test_wrong_price_fails(self, null_target):
        allocation, price = build_equilibrium(*lom_pair(null_target))
        values = dict(price.values)
        values[(1, 'y1')] = Fraction(1)
        report = verify_walras(allocation, Price(values), null_target)
        assert not report.passed
        assert {'budget', 'optimality'} <= {f['check'] for f in report.failures}

    def test_missing_bundle_is_infeasible(self, null_target):
        allocation, price = build_equilibrium(*lom_pair(null_target))
        bundles = dict(allocation.bundles)
        del bundles[(1, 'y1')]
        report = verify_walras(Allocation(bundles), price, null_target)
        assert any(f['check'] == 'feasibility' for f in report.failures)

    def test_zero_price_is_rejected(self, complete_2x2):
        allocation, _ = build_equilibrium(*lom_pair(complete_2x2))
        report = verify_walras(allocation, Price({}), complete_2x2)
        assert not report.passed

    def test_zero_weight_issues_are_notes(self, crossed_null):
        allocation, price = build_equilibrium(*lom_pair(crossed_null))
        report = verify_walras(allocation, price, crossed_null)
        assert report.passed
        assert all(note['agent'] in {(0, 'x2'), (1, 'y2')} for note in report.notes)

    def test_free_neighbor_means_unbounded_utility(self, complete_2x2):
        price = Price({(0, 'x1'): 1})
        assert max_affordable_utility(complete_2x2, (0, 'x1'), price) == float('inf')


class TestExtraction:
    @pytest.mark.parametrize('policy', list(FallbackPolicy))
    def test_round_trip_gives_lom_pair(self, reference_instances, policy):
        for name, instance in reference_instances.items():
            allocation, price = build_equilibrium(*lom_pair(instance))
            pi0, pi1 = extract_pair(allocation, instance, policy)
            assert verify_lom(pi0).verdict, name
            assert verify_lom(pi1).verdict, name
            assert structure_audit(allocation, price, instance, policy).passed, name

    def test_null_target_extraction(self, null_target):
        allocation, _ = build_equilibrium(*lom_pair(null_target))
        pi0, pi1 = extract_pair(allocation, null_target)
        assert pi0.entries == {('x1', 'y1'): 2}
        assert pi1.entries == {('x1', 'y1'): 1}

    def test_over_bought_good(self, null_target):
        allocation = Allocation({(1, 'y1'): {(0, 'x1'): 3}, (0, 'x1'): {(1, 'y1'): Fraction(1, 2)}})
        with pytest.raises(ConstructionError):
            extract_pair(allocation, null_target)


class TestLayers:
    def test_backward_singularity(self, crossed_null):
        pi0, pi1 = lom_pair(crossed_null)
        sdd = symmetric_density_decomposition(pi0, pi1)
        assert backward_singularity_holds(pi0, sdd)
        assert backward_singularity_holds(pi1, sdd)

    @pytest.mark.parametrize('t', ['1/4', 1, 3])
    def test_layer_incompatibility(self, null_target, t):
        sdd = symmetric_density_decomposition(*lom_pair(null_target))
        assert layer_incompatibility_holds(null_target, sdd, t, side=0)
        assert layer_incompatibility_holds(null_target, sdd, t, side=1)

    def test_layer_level_must_be_positive(self, null_target):
        sdd = symmetric_density_decomposition(*lom_pair(null_target))
        with pytest.raises(PreconditionError):
            layer_incompatibility_holds(null_target, sdd, 0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10_000))
def test_random_lom_pairs_induce_equilibria(seed):
    instance = random_instance(seed)
    allocation, price = build_equilibrium(*lom_pair(instance))
    assert verify_walras(allocation, price, instance).passed
    assert structure_audit(allocation, price, instance).passed
    pi0, pi1 = extract_pair(allocation, instance)
    assert verify_lom(pi0).verdict
    assert verify_lom(pi1).verdict
