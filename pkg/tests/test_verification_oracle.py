"""
Oracle solves, property checks and complexity estimates
"""

import math

import numpy as np
import pytest
import scipy.linalg

from linalg.dense_ops import fro_norm, spectral_norm
from services.discretization import manual_params
from services.error_handler import DimensionError, ParameterError, SingularQError
from services.calibration import calibrate
from services.lcu_synthesis import apply_lcu, synth_bzero, synth_pos_herm
from services.problem_model import CaseTag, SylvesterInstance, kappa
from services.verification_oracle import (ComplexityEstimate, complexity_estimate,
                                          evolution_perturbation_check, frobenius_transfer_check,
                                          lyapunov_quadrature, oracle_solve, oracle_solve_rectangular,
                                          residual, solution_errors, solution_norm_bound,
                                          verify_solution)
from tests.conftest import random_hermitian, random_invertible_instance, random_matrix, random_unitary


class TestOracle:

    def test_random_instances_solve(self, rng):
        for _ in range(200):
            inst = random_invertible_instance(rng, int(rng.integers(1, 4)))
            x = oracle_solve(inst)
            assert residual(inst, x) <= 1e-10

    def test_agrees_with_scipy_sylvester(self, rng):
        inst = random_invertible_instance(rng, 3)
        assert np.allclose(oracle_solve(inst), scipy.linalg.solve_sylvester(inst.a, inst.b, inst.c))

    def test_singular(self):
        inst = SylvesterInstance(a=[[0.25]], b=[[-0.25]], c=[[1.0]], alpha=1.0)
        with pytest.raises(SingularQError):
            oracle_solve(inst)

    def test_rectangular(self, rng):
        a = random_matrix(rng, 2) * 0.05
        b = random_matrix(rng, 3) * 0.05 + np.eye(3) * 0.5
        c = random_matrix(rng, 2, 3)
        x = oracle_solve_rectangular(a, b, c)
        assert np.allclose(a @ x + x @ b, c)
        with pytest.raises(DimensionError):
            oracle_solve_rectangular(a, b, c.T)

    def test_residual_shape_checked(self, scalar_instance):
        with pytest.raises(DimensionError):
            residual(scalar_instance, np.zeros((2, 2)))

    def test_lyapunov_quadrature(self, rng):
        a = random_hermitian(rng, 2, 0.2) + 0.3 * np.eye(2)
        c = random_matrix(rng, 2)
        inst = SylvesterInstance(a=a, b=a, c=c, alpha=float(np.linalg.norm(c, 2)))
        x = lyapunov_quadrature(a, c, t_max=120.0, steps=6000)
        assert np.allclose(x, oracle_solve(inst), atol=1e-6)

    def test_lyapunov_matches_lchs_program(self, rng):
        u = random_unitary(rng, 2)
        a = u @ np.diag([0.1, 0.5]) @ u.conj().T
        a = (a + a.conj().T) / 2
        inst = SylvesterInstance(a=a, b=a.copy(), c=np.eye(2), alpha=1.0)
        epsilon = 0.1
        params = calibrate(inst, CaseTag.POSITIVE_HERMITIAN_PART, epsilon)
        x_hat = apply_lcu(synth_pos_herm(inst, params), inst.c)
        x_quad = lyapunov_quadrature(a, inst.c, t_max=150.0, steps=6000)
        assert spectral_norm(x_hat - x_quad) / spectral_norm(x_quad) <= epsilon

    def test_lyapunov_needs_steps(self):
        with pytest.raises(ParameterError):
            lyapunov_quadrature(np.eye(1), np.eye(1), 1.0, 1)

    def test_solution_errors(self):
        errors = solution_errors(np.array([[1.1]]), np.array([[1.0]]))
        assert errors['spectral_err'] == pytest.approx(0.1)
        assert errors['mult_err'] == pytest.approx(0.1)


class TestNormBound:

    def test_frobenius_bound_on_random_instances(self, rng):
        for _ in range(200):
            inst = random_invertible_instance(rng, int(rng.integers(1, 4)))
            x = oracle_solve(inst)
            assert fro_norm(x) <= kappa(inst) * fro_norm(inst.c) * (1 + 1e-8)
            bound = solution_norm_bound(inst, x)
            assert bound['x_norm'] <= bound['kappa_alpha'] * math.sqrt(inst.n) * (1 + 1e-8)

    def test_worst_case_reaches_kappa_alpha(self):
        a = np.diag([0.1, 0.5])
        c = np.zeros((2, 2))
        c[0, 0] = 1.0
        inst = SylvesterInstance(a=a, b=a.copy(), c=c, alpha=1.0)
        bound = solution_norm_bound(inst)
        assert bound['x_norm'] >= 0.99 * bound['kappa_alpha']
        assert bound['x_norm'] <= bound['kappa_alpha'] * (1 + 1e-8)


class TestPropertyChecks:

    def test_frobenius_transfer(self, rng):
        for _ in range(20):
            inst = random_invertible_instance(rng, 2, max_kappa=20.0)
            check = frobenius_transfer_check(inst, 1e-3, trials=5, seed=int(rng.integers(1000)))
            assert check['pass'], check

    def test_frobenius_transfer_explicit_perturbation(self, hermitian_bzero):
        e = 1e-2 * np.eye(4)
        check = frobenius_transfer_check(hermitian_bzero, 1e-2, perturbations=[e])
        assert check['pass']
        assert check['max_distance'] == pytest.approx(1e-2 * spectral_norm(oracle_solve(hermitian_bzero)))

    def test_evolution_perturbation(self, hermitian_bzero):
        program = synth_bzero(hermitian_bzero, manual_params(CaseTag.B_ZERO, 0.5, 0.5, 4, 2))
        for sides in ('both', 'left', 'right'):
            check = evolution_perturbation_check(program, hermitian_bzero, 0.05, trials=20, sides=sides)
            assert check['pass'], check
            assert check['perturbation_norm'] <= 0.05 / 4


class TestEstimates:

    def test_normal_estimate(self):
        est = complexity_estimate(CaseTag.NORMAL, 10.0, 4, 0.01)
        assert est.q_est == pytest.approx(82.94, abs=1e-2)
        assert est.q_est == est.g_est

    def test_roots_are_sqrt_kappa(self):
        est = complexity_estimate(CaseTag.POSITIVE_WITH_ROOTS, 16.0, 4, 0.01)
        assert est.q_est == pytest.approx(4.0 * math.log(16.0 * 4 / 0.01))

    def test_general_reports_coefficient_bound(self):
        est = complexity_estimate(CaseTag.GENERAL_CHEBYSHEV, 2.5, 2, 0.1)
        assert est.q_est == pytest.approx(8.0 / 3.0 * 2.0 ** 26)
        assert 'j0 = 12' in est.formula

    def test_bad_epsilon(self):
        with pytest.raises(ParameterError):
            complexity_estimate(CaseTag.B_ZERO, 2.0, 2, 0.0)


class TestVerifySolution:

    def _estimate(self):
        return ComplexityEstimate(1.0, 1.0, 2.0, 'unit')

    def test_exact_solution_passes(self, scalar_instance):
        x = oracle_solve(scalar_instance)
        report = verify_solution(scalar_instance, x, 0.01, 2.0, self._estimate(), x_used=4.0)
        data = report.to_dict()
        assert data['pass']
        assert data['criterion'] == 'mult_err*sqrt(N)'
        assert data['x_ratio'] == pytest.approx(2.0)

    def test_wrong_solution_fails(self, scalar_instance):
        report = verify_solution(scalar_instance, np.array([[1.0]]), 0.01, 2.0, self._estimate(), 4.0)
        assert not report.passed
        assert report.criterion == 'none'
