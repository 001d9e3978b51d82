"""
LCU programs and their reconstruction paths
"""

import math

import numpy as np
import pytest

from services.discretization import (DiscretizationConstants, manual_params, params_bzero,
                                     params_normal, params_positive)
from services.error_handler import InvalidInstanceError, TermBudgetExceeded
from services.lcu_synthesis import (EvolutionSpec, LcuTerm, Side, apply_lcu, compare_forms,
                                    l1_norm, max_evolution_time, program_from_terms, synth_bzero,
                                    synth_normal, synth_pos_herm, synth_positive, synthesize)
from services.problem_model import CaseTag, SylvesterInstance
from services.verification_oracle import oracle_solve, residual
from tests.conftest import random_hermitian, random_matrix, random_unitary


@pytest.fixture
def normal_instance(rng):
    u = random_unitary(rng, 2)
    a = u @ np.diag([0.3 + 0.1j, 0.25 - 0.2j]) @ u.conj().T
    v = random_unitary(rng, 2)
    b = v @ np.diag([0.2, 0.35 + 0.05j]) @ v.conj().T
    c = random_matrix(rng, 2)
    return SylvesterInstance(a=a, b=b, c=c, alpha=float(np.linalg.norm(c, 2)))


@pytest.fixture
def pos_herm_instance():
    a = np.array([[0.25, 0.25], [0.0, 0.25]])
    return SylvesterInstance(a=a, b=0.1 * np.eye(2), c=np.array([[1.0, 0.0], [0.5, 0.5]]) / 1.2,
                             alpha=1.0)


@pytest.fixture
def roots_instance(rng):
    p_a = random_hermitian(rng, 2, 0.3) + 0.35 * np.eye(2)
    p_b = np.diag([0.5, 0.4])
    c = random_matrix(rng, 2)
    return SylvesterInstance(a=p_a @ p_a, b=p_b @ p_b, c=c, alpha=float(np.linalg.norm(c, 2)),
                             p_a=p_a, p_b=p_b)


class TestPrograms:

    def test_scalar_normal_solution(self, scalar_instance):
        params = params_normal(2.0, 0.05, DiscretizationConstants().scaled(c3=4.0, c4=4.0))
        program = synth_normal(scalar_instance, params)
        x_hat = apply_lcu(program, scalar_instance.c)
        assert residual(scalar_instance, x_hat) <= 0.05

    def test_term_layout(self, hermitian_bzero):
        params = manual_params(CaseTag.B_ZERO, 0.5, 0.5, 4, 2)
        program = synth_bzero(hermitian_bzero, params)
        assert program.term_count == 4 * 5
        terms = program.terms
        assert len(terms) == 20
        assert terms[0].left.time == 0.0
        assert terms[-1].left.time == pytest.approx(1.5)
        assert terms[5].left.side == Side.LEFT
        with pytest.raises(IndexError):
            terms[20]

    def test_l1_and_rescale(self, hermitian_bzero):
        params = manual_params(CaseTag.B_ZERO, 0.5, 0.5, 4, 2)
        program = synth_bzero(hermitian_bzero, params)
        expected = sum(abs(t.coeff) for t in program.terms)
        assert l1_norm(program) == pytest.approx(expected)
        assert program.rescale == pytest.approx(expected * hermitian_bzero.alpha)

    def test_max_evolution_time_roots(self, roots_instance):
        params = manual_params(CaseTag.POSITIVE_WITH_ROOTS, 0.5, 0.5, 5, 3)
        program = synth_positive(roots_instance, params)
        assert max_evolution_time(program) == pytest.approx(math.sqrt(2 * 4 * 0.5) * 1.5)

    def test_term_budget(self, hermitian_bzero):
        params = manual_params(CaseTag.B_ZERO, 0.5, 0.5, 4, 2)
        with pytest.raises(TermBudgetExceeded):
            synthesize(hermitian_bzero, CaseTag.B_ZERO, params, term_budget=10)

    def test_preconditions(self, pos_herm_instance, scalar_instance):
        params = manual_params(CaseTag.NORMAL, 0.5, 0.5, 2, 1)
        with pytest.raises(InvalidInstanceError):
            synth_normal(pos_herm_instance, params)
        with pytest.raises(InvalidInstanceError):
            synth_positive(scalar_instance, manual_params(CaseTag.POSITIVE_WITH_ROOTS, 0.5, 0.5, 2, 1))
        with pytest.raises(InvalidInstanceError):
            synth_bzero(scalar_instance, manual_params(CaseTag.B_ZERO, 0.5, 0.5, 2, 1))
        with pytest.raises(InvalidInstanceError):
            synthesize(scalar_instance, CaseTag.GENERAL_CHEBYSHEV, params)

    def test_bzero_needs_hermitian(self):
        inst = SylvesterInstance(a=np.array([[0.3, 0.1], [0.0, 0.4]]), b=np.zeros((2, 2)),
                                 c=np.eye(2), alpha=1.0)
        with pytest.raises(InvalidInstanceError):
            synth_bzero(inst, manual_params(CaseTag.B_ZERO, 0.5, 0.5, 2, 1))

    def test_to_dict_lists_small_programs(self, hermitian_bzero):
        program = synth_bzero(hermitian_bzero, manual_params(CaseTag.B_ZERO, 0.5, 0.5, 4, 2))
        data = program.to_dict()
        assert data['term_count'] == 20
        assert len(data['terms']) == 20
        assert data['case'] == 'BZero'


class TestReconstructionPaths:

    def test_bzero_paths_agree(self, hermitian_bzero):
        program = synth_bzero(hermitian_bzero, manual_params(CaseTag.B_ZERO, 0.5, 0.5, 4, 2))
        dense = apply_lcu(program, hermitian_bzero.c, method='dense')
        assert np.allclose(apply_lcu(program, hermitian_bzero.c, method='eigen'), dense, atol=1e-12)
        assert np.allclose(apply_lcu(program, hermitian_bzero.c, method='geometric'), dense, atol=1e-12)

    def test_normal_paths_agree(self, normal_instance):
        program = synth_normal(normal_instance, manual_params(CaseTag.NORMAL, 0.4, 0.5, 5, 3))
        dense = apply_lcu(program, normal_instance.c, method='dense')
        assert np.allclose(apply_lcu(program, normal_instance.c, method='eigen'), dense, atol=1e-12)
        assert np.allclose(apply_lcu(program, normal_instance.c, method='geometric'), dense, atol=1e-12)

    def test_pos_herm_paths_agree(self, pos_herm_instance):
        params = manual_params(CaseTag.POSITIVE_HERMITIAN_PART, 0.5, 0.25, 6, 8, beta=0.5)
        program = synth_pos_herm(pos_herm_instance, params)
        dense = apply_lcu(program, pos_herm_instance.c, method='dense')
        assert np.allclose(apply_lcu(program, pos_herm_instance.c, method='geometric'), dense, atol=1e-12)
        with pytest.raises(InvalidInstanceError):
            apply_lcu(program, pos_herm_instance.c, method='eigen')

    def test_roots_paths_agree(self, roots_instance):
        program = synth_positive(roots_instance, manual_params(CaseTag.POSITIVE_WITH_ROOTS, 0.5, 0.5, 5, 3))
        dense = apply_lcu(program, roots_instance.c, method='dense')
        assert np.allclose(apply_lcu(program, roots_instance.c, method='eigen'), dense, atol=1e-12)
        with pytest.raises(InvalidInstanceError):
            apply_lcu(program, roots_instance.c, method='geometric')

    def test_roots_solution(self, roots_instance):
        params = params_positive(4.0, 0.05, DiscretizationConstants().scaled(c3=3.0, c4=2.0))
        program = synth_positive(roots_instance, params)
        x_hat = apply_lcu(program, roots_instance.c)
        x = oracle_solve(roots_instance)
        assert np.linalg.norm(x_hat - x, 2) / np.linalg.norm(x, 2) < 0.05

    def test_hand_built_program(self, rng):
        h = random_hermitian(rng, 2)
        zero = np.zeros((2, 2))
        terms = [
            LcuTerm(0.5, EvolutionSpec(1.0, 0.0, 0.3, Side.LEFT), EvolutionSpec(0.0, 0.0, 0.0, Side.RIGHT)),
            LcuTerm(-0.25j, EvolutionSpec(1.0, 0.0, -1.1, Side.LEFT), EvolutionSpec(0.0, 0.0, 0.0, Side.RIGHT)),
        ]
        program = program_from_terms(terms, (h, zero))
        c = random_matrix(rng, 2)
        w, v = np.linalg.eigh(h)

        def u(t):
            return (v * np.exp(-1j * t * w)) @ v.conj().T

        expected = 0.5 * u(0.3) @ c - 0.25j * u(-1.1) @ c
        assert np.allclose(apply_lcu(program, c), expected)
        assert program.l1 == pytest.approx(0.75)

    def test_compare_forms_normal(self, normal_instance):
        result = compare_forms(normal_instance, CaseTag.NORMAL, manual_params(CaseTag.NORMAL, 0.4, 0.5, 3, 2))
        assert result['relative_difference'] < 1e-12

    def test_compare_forms_skew_sign(self, pos_herm_instance):
        params = manual_params(CaseTag.POSITIVE_HERMITIAN_PART, 0.5, 0.25, 6, 8, beta=0.5)
        result = compare_forms(pos_herm_instance, CaseTag.POSITIVE_HERMITIAN_PART, params)
        assert result['difference'] > 0.0


class TestProgramProperties:

    @pytest.mark.parametrize('case', [CaseTag.NORMAL, CaseTag.B_ZERO])
    def test_l1_grows_like_kappa_root_log(self, case, scalar_instance, hermitian_bzero):
        epsilon = 0.1
        ratios = []
        for kappa_value in (2.0, 5.0, 10.0, 20.0):
            if case == CaseTag.NORMAL:
                program = synth_normal(scalar_instance, params_normal(kappa_value, epsilon),
                                       term_budget=10 ** 8)
            else:
                program = synth_bzero(hermitian_bzero, params_bzero(kappa_value, epsilon))
            ratios.append(program.l1 / (kappa_value * math.sqrt(math.log(1.0 / epsilon))))
        # Gaussian first moments bound the ratio: √(π/2) in two dimensions, 2/√(2π) in one
        ceiling = math.sqrt(math.pi / 2.0) if case == CaseTag.NORMAL else 2.0 / math.sqrt(2.0 * math.pi)
        assert max(ratios) <= 1.05 * ceiling
        assert min(ratios) >= 0.4 * ceiling
        assert max(ratios) / min(ratios) <= 1.6

    def test_bzero_l1_closed_form(self, hermitian_bzero):
        params = params_bzero(10.0, 0.01)
        assert params.t_r_max == pytest.approx(21.46, abs=1e-2)
        program = synth_bzero(hermitian_bzero, params)
        window = params.j_count * params.delta_omega
        span = params.r_count * params.delta_t
        expected = span * 2.0 * (1.0 - math.exp(-window ** 2 / 2.0)) / math.sqrt(2.0 * math.pi)
        assert program.l1 == pytest.approx(expected, rel=2e-2)

    def test_bzero_l1_worked_example(self, hermitian_bzero):
        # a frequency window wide enough that the Gaussian tail is negligible
        params = params_bzero(10.0, 0.01, DiscretizationConstants().scaled(c4=3.0))
        program = synth_bzero(hermitian_bzero, params)
        assert program.l1 == pytest.approx(17.12, rel=5e-3)

    def test_apply_is_linear_in_c(self, normal_instance, rng):
        program = synth_normal(normal_instance, manual_params(CaseTag.NORMAL, 0.4, 0.5, 5, 3))
        c1, c2 = random_matrix(rng, 2), random_matrix(rng, 2)
        combined = apply_lcu(program, 2.0 * c1 - 0.5j * c2)
        separate = 2.0 * apply_lcu(program, c1) - 0.5j * apply_lcu(program, c2)
        assert np.linalg.norm(combined - separate) <= 1e-12 * max(1.0, np.linalg.norm(separate))
        assert np.array_equal(apply_lcu(program, np.zeros((2, 2))), np.zeros((2, 2)))
