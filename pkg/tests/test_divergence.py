import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from config import AUDIT_CONFIG, QUADRATURE, TOLERANCES
from src.models.divergence import (Integrand, MarkovKernel, abs_deviation, adjoint_integrand,
                                   check_convexity, chi_square, dpi_audit, exp_neg, f_divergence,
                                   hinge_reconstruct, hockey_stick, hockey_stick_curve,
                                   hockey_stick_integrand, integrand_by_name, neg_log,
                                   occurring_ratios, push_forward, square, xlogx)
from src.models.maximin import overflow_profile, solve_lom
from src.models.measure_core import AtomSpace, Measure, payload
from src.oracles.lp_reference import random_feasible_plan, random_instance
from src.utils.errors import IntegrandError

SPACE = AtomSpace.from_weights({'a': 1, 'b': 1, 'c': 1})


def measure(**mass):
    return Measure(SPACE, mass)


class TestFDivergence:
    def test_exact_values(self):
        P, Q = measure(a=2), measure(a=1, b=1)
        assert f_divergence(P, Q, square()) == 4
        assert f_divergence(P, Q, chi_square()) == 2
        assert isinstance(f_divergence(P, Q, square()), Fraction)

    def test_singular_mass_uses_recession_slope(self):
        P, Q = measure(a=1, b=1), measure(a=1)
        assert hockey_stick(P, Q, Fraction(1, 2)) == Fraction(3, 2)
        assert f_divergence(P, Q, square()) == math.inf

    def test_atoms_outside_both_supports_are_free(self):
        assert f_divergence(measure(a=1), measure(a=1), chi_square()) == 0

    def test_float_integrand(self):
        value = f_divergence(measure(a=1), measure(a=1, b=1), exp_neg())
        assert value == pytest.approx(math.exp(-1) + 1)

    def test_occurring_ratios(self):
        assert occurring_ratios(measure(a=2, b=1, c=1), measure(a=1, b=2)) == [Fraction(1, 2), 2]


class TestAdjoint:
    def test_square_swaps_arguments(self):
        P, Q = measure(a=2, b=1), measure(a=1, b=3)
        theta = square()
        assert f_divergence(P, Q, theta) == Fraction(13, 3)
        assert f_divergence(Q, P, adjoint_integrand(theta)) == Fraction(13, 3)

    def test_singular_parts_swap(self):
        P, Q = measure(a=1, b=1), measure(a=2)
        theta = abs_deviation()
        assert f_divergence(P, Q, theta) == 2
        assert f_divergence(Q, P, adjoint_integrand(theta)) == 2

    def test_recession_slope_is_value_at_zero(self):
        assert adjoint_integrand(chi_square()).recession_slope == 1


class TestIntegrands:
    def test_by_name(self):
        assert integrand_by_name('square').name == 'square'
        assert integrand_by_name('hs:2')(Fraction(5)) == 3

    def test_unknown_name(self):
        with pytest.raises(IntegrandError):
            integrand_by_name('cubic')

    def test_hockey_stick_needs_positive_gamma(self):
        with pytest.raises(IntegrandError):
            hockey_stick_integrand(0)

    @pytest.mark.parametrize('theta', [square(), chi_square(), abs_deviation(), exp_neg(), xlogx(),
                                       hockey_stick_integrand('3/2')])
    def test_builtins_are_convex(self, theta):
        assert check_convexity(theta, [0, '1/4', '1/2', 1, 2, 5])

    def test_concave_function_is_caught(self):
        concave = Integrand(name='concave', func=lambda t: -t * t, right_derivative=lambda t: -2 * t,
                            recession_slope=-math.inf, strictly_convex=False)
        assert not check_convexity(concave, [0, 1, 2])

    def test_curve_table(self):
        table = hockey_stick_curve(measure(a=2), measure(a=1, b=1), [1, 2])
        assert list(table.columns) == ['gamma', 'hockey_stick']
        assert list(table['hockey_stick']) == [1, 0]


class TestKernels:
    def test_push_forward_merges_atoms(self):
        target = AtomSpace.from_weights({'u': 1, 'v': 1})
        kernel = MarkovKernel(SPACE, target, {'a': {'u': 1}, 'b': {'u': 1}, 'c': {'v': 1}})
        assert push_forward(measure(a=1, b=2), kernel).mass == {'u': 3}

    def test_row_must_be_a_probability(self):
        target = AtomSpace.from_weights({'u': 1})
        with pytest.raises(IntegrandError):
            MarkovKernel(SPACE, target, {'a': {'u': '1/2'}})

    @pytest.mark.parametrize('theta', [square(), chi_square(), abs_deviation(), exp_neg(), xlogx(),
                                       hockey_stick_integrand('1/2')])
    def test_data_processing_inequality(self, theta):
        target = AtomSpace.from_weights({'u': 1, 'v': 1})
        kernel = MarkovKernel(SPACE, target, {
            'a': {'u': 1}, 'b': {'u': '1/2', 'v': '1/2'}, 'c': {'v': 1}})
        assert dpi_audit(measure(a=1, b=2), measure(a=2, b=1, c=1), kernel, theta)


class TestHingeReconstruction:
    def test_piecewise_linear_is_exact(self, crowded_plan):
        over = overflow_profile(crowded_plan)
        nu_bar = crowded_plan.instance.nu(1)
        P = Measure(nu_bar.space, {'y1': 2})
        for phi in (hockey_stick_integrand(1), abs_deviation()):
            rebuilt = hinge_reconstruct(phi, over, nu_bar.total(), 2)
            assert rebuilt == f_divergence(P, nu_bar, phi)

    def test_smooth_integrand_by_quadrature(self, crowded_plan):
        over = overflow_profile(crowded_plan)
        rebuilt = hinge_reconstruct(exp_neg(), over, 2, 2)
        assert rebuilt == pytest.approx(1 + math.exp(-2), abs=TOLERANCES['hinge'])

    def test_infinite_recession_slope(self, crowded_plan):
        with pytest.raises(IntegrandError):
            hinge_reconstruct(square(), overflow_profile(crowded_plan), 2, 2)


FRACTIONS = st.fractions(min_value=0, max_value=4, max_denominator=8)
DPI_INTEGRANDS = [square(), chi_square(), abs_deviation(), exp_neg(), xlogx(), neg_log(),
                  hockey_stick_integrand('1/2'), hockey_stick_integrand(2)]
TARGET = AtomSpace.from_weights({'u': 1, 'v': 1})


@st.composite
def measures(draw):
    return Measure(SPACE, dict(zip(SPACE.ids, draw(st.tuples(FRACTIONS, FRACTIONS, FRACTIONS)))))


@st.composite
def kernels(draw):
    rows = {}
    for atom_id in SPACE.ids:
        share = draw(st.fractions(min_value=0, max_value=1, max_denominator=6))
        rows[atom_id] = {'u': share, 'v': 1 - share}
    return MarkovKernel(SPACE, TARGET, rows)


@settings(max_examples=200, deadline=None)
@given(P=measures(), Q=measures(), kernel=kernels(), theta=st.sampled_from(DPI_INTEGRANDS))
def test_random_kernels_never_increase_divergence(P, Q, kernel, theta):
    assert dpi_audit(P, Q, kernel, theta)


@settings(max_examples=100, deadline=None)
@given(P=measures(), Q=measures(), theta=st.sampled_from(DPI_INTEGRANDS))
def test_adjoint_swaps_arguments(P, Q, theta):
    forward = f_divergence(P, Q, theta)
    backward = f_divergence(Q, P, adjoint_integrand(theta))
    if theta.exact:
        assert forward == backward
    else:
        assert backward == pytest.approx(forward, rel=1e-9, abs=1e-9)


@pytest.mark.parametrize('theta, partner', [(xlogx(), neg_log()), (neg_log(), xlogx())],
                         ids=['xlogx', 'neg_log'])
def test_log_integrands_are_adjoint(theta, partner):
    adjoint = adjoint_integrand(theta)
    for t in (Fraction(1, 4), Fraction(1, 2), 1, 3):
        assert float(adjoint(t)) == pytest.approx(float(partner(t)), rel=1e-12, abs=1e-12)
    assert adjoint.recession_slope == partner.recession_slope


@pytest.mark.parametrize('seed', range(20))
@pytest.mark.parametrize('side', [0, 1])
def test_hockey_stick_reads_the_overflow_profile(seed, side):
    instance = random_instance(seed)
    nu_bar = instance.nu(1 - side)
    for plan in (solve_lom(instance, side), random_feasible_plan(instance, side, seed)):
        P = payload(plan)
        over = overflow_profile(plan)
        for gamma in set(occurring_ratios(P, nu_bar)) | set(AUDIT_CONFIG['gamma_grid']):
            assert hockey_stick(P, nu_bar, gamma) == over(gamma)


@pytest.mark.parametrize('seed', range(20))
def test_hinge_reconstruction_on_random_plans(seed):
    instance = random_instance(seed)
    plan = random_feasible_plan(instance, 0, seed)
    expected = f_divergence(payload(plan), instance.nu(1), exp_neg())
    rebuilt = hinge_reconstruct(exp_neg(), overflow_profile(plan), instance.nu(1).total(),
                                instance.nu(0).total(), QUADRATURE['hinge_points'])
    assert rebuilt == pytest.approx(expected, abs=TOLERANCES['hinge'])
