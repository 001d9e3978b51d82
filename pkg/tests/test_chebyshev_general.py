"""
Chebyshev power-series solver for the general case
"""

import numpy as np
import pytest

from linalg.dense_ops import dagger, unvec, vec
from services.chebyshev_general import (MAX_CHEB_DEGREE_INDEX, annulus_points, apply_power,
                                        binomial_tail, binomial_tail_exact, build_plan,
                                        cheb_abs_sum_closed_form, cheb_odd_coeffs,
                                        coefficient_bound, coefficient_growth, plan_sizes,
                                        scalar_inverse_check, solve_general)
from services.error_handler import ParameterError, TermBudgetExceeded
from services.problem_model import SylvesterInstance, build_q
from services.verification_oracle import residual
from tests.conftest import random_matrix


def general_instance():
    a = np.array([[0.45, 0.04], [0.0, -0.45]])
    return SylvesterInstance(a=a, b=0.05 * np.eye(2), c=np.eye(2), alpha=1.0)


class TestCoefficients:

    def test_low_degree_tables(self):
        assert cheb_odd_coeffs(0) == [1]
        assert cheb_odd_coeffs(1) == [-3, 4]
        assert cheb_odd_coeffs(2) == [5, -20, 16]

    def test_closed_form_absolute_sum(self):
        for j in range(MAX_CHEB_DEGREE_INDEX + 1):
            assert cheb_abs_sum_closed_form(j) == sum(abs(v) for v in cheb_odd_coeffs(j))

    def test_power_of_two_only_for_small_j(self):
        for j in (0, 1):
            assert cheb_abs_sum_closed_form(j) == 2 ** (2 * j + 1) - 1
        assert cheb_abs_sum_closed_form(2) == 41

    def test_degree_guard(self):
        with pytest.raises(ParameterError):
            cheb_odd_coeffs(MAX_CHEB_DEGREE_INDEX + 1)
        with pytest.raises(ParameterError):
            cheb_odd_coeffs(-1)


class TestPlan:

    def test_sizes(self):
        assert plan_sizes(2.5, 0.1) == (21, 12)

    def test_size_guards(self):
        with pytest.raises(ParameterError):
            plan_sizes(0.5, 0.1)
        with pytest.raises(ParameterError):
            plan_sizes(2.0, 1.0)

    def test_tails_match_exact_fractions(self):
        for j in range(0, 12):
            assert binomial_tail(20, j) == pytest.approx(float(binomial_tail_exact(20, j)), rel=1e-12)
        assert binomial_tail(5, 5) == 0.0

    def test_plan_is_within_bound(self):
        plan = build_plan(2.0, 0.01)
        assert len(plan.xi) == plan.j0 + 1
        assert plan.within_bound
        assert plan.to_dict()['coeff_bound'] == coefficient_bound(plan.j0)

    def test_scalar_inverse_on_annulus(self):
        plan = build_plan(2.0, 0.01)
        points = annulus_points(2.0, 100)
        assert np.all(np.abs(points) >= 0.5 - 1e-12)
        check = scalar_inverse_check(plan, points)
        assert check['pass']
        assert check['points'] == 100

    def test_coefficients_grow_with_kappa(self):
        rows = coefficient_growth([2.0, 4.0], 0.01)
        assert rows[1]['coeff_l1'] > 10 * rows[0]['coeff_l1']

    def test_oversized_plan_rejected(self):
        with pytest.raises(TermBudgetExceeded):
            build_plan(50.0, 0.01)


class TestGeneralSolve:

    def test_apply_power_matches_vectorized(self, rng):
        c = random_matrix(rng, 2)
        inst = SylvesterInstance(a=general_instance().a, b=0.05 * np.eye(2), c=c,
                                 alpha=float(np.linalg.norm(c, 2)))
        q = build_q(inst)
        expected = dagger(q) @ np.linalg.matrix_power(q @ dagger(q), 3) @ vec(c)
        assert np.allclose(apply_power(inst, 3), unvec(expected, 2, 2))

    def test_apply_power_guard(self, scalar_instance):
        with pytest.raises(ParameterError):
            apply_power(scalar_instance, -1)

    def test_solve_general_residual(self):
        inst = general_instance()
        x_hat, plan = solve_general(inst, 0.1)
        assert plan.kappa == pytest.approx(2.5, rel=0.05)
        assert residual(inst, x_hat) <= 0.1
