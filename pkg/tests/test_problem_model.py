"""
Instances, classification and structural reductions
"""

import numpy as np
import pytest

from linalg.dense_ops import smallest_singular, spectral_norm, unvec, vec
from services.error_handler import DimensionError, InvalidInstanceError, ParameterError, SingularQError
from services.problem_model import (CaseTag, SylvesterInstance, build_q, classify, embed_rectangular,
                                    extract_dilated_solution, hermitian_dilation, kappa,
                                    phase_normalize, rectangular_q, recover_rectangular,
                                    reduce_rectangular, rescale_instance, spectral_data,
                                    transpose_instance)
from services.verification_oracle import oracle_solve
from tests.conftest import random_hermitian, random_matrix


def general_instance():
    a = np.array([[0.45, 0.04], [0.0, -0.45]])
    return SylvesterInstance(a=a, b=0.05 * np.eye(2), c=np.eye(2), alpha=1.0)


class TestInstance:

    def test_scalar_instance(self, scalar_instance):
        assert scalar_instance.n == 1
        assert not scalar_instance.has_roots

    def test_rejects_large_norm(self):
        with pytest.raises(InvalidInstanceError):
            SylvesterInstance(a=[[0.75]], b=[[0.1]], c=[[1.0]], alpha=1.0)

    def test_rejects_small_alpha(self):
        with pytest.raises(InvalidInstanceError):
            SylvesterInstance(a=[[0.25]], b=[[0.25]], c=[[2.0]], alpha=1.0)

    def test_rejects_shape_mismatch(self):
        with pytest.raises(DimensionError):
            SylvesterInstance(a=np.eye(2) / 4, b=[[0.1]], c=np.eye(2), alpha=1.0)

    def test_rejects_wrong_root(self):
        with pytest.raises(InvalidInstanceError):
            SylvesterInstance(a=[[0.25]], b=[[0.25]], c=[[1.0]], alpha=1.0, p_a=[[0.4]], p_b=[[0.5]])

    def test_rejects_non_hermitian_root(self):
        # squares to I/4 exactly but is not Hermitian
        p_a = 0.5 * np.array([[1.0, 1.0], [0.0, -1.0]])
        assert np.allclose(p_a @ p_a, 0.25 * np.eye(2))
        with pytest.raises(InvalidInstanceError, match="not Hermitian"):
            SylvesterInstance(a=0.25 * np.eye(2), b=0.25 * np.eye(2),
                              c=np.array([[0.5, 0.1], [0.2, 0.3]]), alpha=1.0,
                              p_a=p_a, p_b=0.5 * np.eye(2))

    def test_hermitian_root_is_kept_as_given(self):
        p_a = np.array([[0.4, 0.1j], [-0.1j, 0.3]])
        inst = SylvesterInstance(a=p_a @ p_a, b=0.25 * np.eye(2), c=np.eye(2), alpha=1.0,
                                 p_a=p_a, p_b=0.5 * np.eye(2))
        assert np.array_equal(inst.p_a, p_a)
        assert classify(inst) == CaseTag.POSITIVE_WITH_ROOTS

    def test_roots_must_come_in_pairs(self):
        with pytest.raises(InvalidInstanceError):
            SylvesterInstance(a=[[0.25]], b=[[0.25]], c=[[1.0]], alpha=1.0, p_a=[[0.5]])


class TestConditionNumber:

    def test_scalar_kappa(self, scalar_instance):
        assert kappa(scalar_instance) == pytest.approx(2.0)

    def test_q_convention(self, rng):
        a, b, x = (random_matrix(rng, 3) * 0.1 for _ in range(3))
        inst = SylvesterInstance(a=a, b=b, c=np.zeros((3, 3)), alpha=1.0, normalized=False)
        assert np.allclose(build_q(inst) @ vec(x), vec(a @ x + x @ b))

    def test_singular_q(self):
        inst = SylvesterInstance(a=[[0.25]], b=[[-0.25]], c=[[1.0]], alpha=1.0)
        with pytest.raises(SingularQError):
            kappa(inst)

    def test_spectral_data(self, hermitian_bzero):
        data = spectral_data(hermitian_bzero)
        assert data.kappa == pytest.approx(2.0)
        assert sorted(data.eigs_a.real) == pytest.approx([-0.5, 0.5])


class TestClassify:

    def test_b_zero(self, hermitian_bzero):
        assert classify(hermitian_bzero) == CaseTag.B_ZERO

    def test_a_zero_is_b_zero(self):
        inst = SylvesterInstance(a=np.zeros((2, 2)), b=np.diag([0.3, 0.4]), c=np.eye(2), alpha=1.0)
        assert classify(inst) == CaseTag.B_ZERO

    def test_roots_take_priority(self):
        inst = SylvesterInstance(a=[[0.25]], b=[[0.25]], c=[[1.0]], alpha=1.0, p_a=[[0.5]], p_b=[[0.5]])
        assert classify(inst) == CaseTag.POSITIVE_WITH_ROOTS

    def test_scalar_is_normal(self, scalar_instance):
        assert classify(scalar_instance) == CaseTag.NORMAL

    def test_rotation_plus_identity_is_normal(self):
        a = 0.25 * np.eye(2) + 0.125 * np.array([[0, 1], [-1, 0]])
        inst = SylvesterInstance(a=a, b=0.1 * np.eye(2), c=np.eye(2), alpha=1.0)
        assert classify(inst) == CaseTag.NORMAL

    def test_positive_hermitian_part(self):
        a = np.array([[0.25, 0.25], [0.0, 0.25]])
        inst = SylvesterInstance(a=a, b=0.1 * np.eye(2), c=np.eye(2), alpha=1.0)
        assert classify(inst) == CaseTag.POSITIVE_HERMITIAN_PART

    def test_general(self):
        assert classify(general_instance()) == CaseTag.GENERAL_CHEBYSHEV


class TestReductions:

    def test_rescale(self):
        inst = SylvesterInstance(a=np.diag([1.0, 0.5]), b=0.5 * np.eye(2), c=np.eye(2), alpha=1.0,
                                 normalized=False)
        before = kappa(inst)
        scaled, s = rescale_instance(inst)
        assert s == pytest.approx(0.5)
        assert spectral_norm(scaled.a) == pytest.approx(0.5)
        assert scaled.alpha == pytest.approx(0.5)
        assert kappa(scaled) == pytest.approx(before / s)
        assert np.allclose(oracle_solve(scaled), oracle_solve(inst))

    def test_rescale_leaves_normalized_alone(self, scalar_instance):
        same, s = rescale_instance(scalar_instance)
        assert s == 1.0
        assert np.array_equal(same.a, scalar_instance.a)

    def test_hermitian_dilation(self, rng):
        a = random_matrix(rng, 3)
        a *= 0.25 / spectral_norm(a)
        while smallest_singular(a) < 1e-3:
            a = random_matrix(rng, 3) * 0.1
        c = random_matrix(rng, 3)
        inst = SylvesterInstance(a=a, b=np.zeros((3, 3)), c=c, alpha=spectral_norm(c))
        dilated = hermitian_dilation(inst)
        x_dil = oracle_solve(dilated)
        assert np.allclose(extract_dilated_solution(x_dil), np.linalg.solve(a, c))
        assert kappa(dilated) == pytest.approx(kappa(inst))

    def test_dilation_needs_b_zero(self, scalar_instance):
        with pytest.raises(InvalidInstanceError):
            hermitian_dilation(scalar_instance)

    def test_transpose_mirror(self, rng):
        b = np.diag([0.3, -0.4])
        c = random_matrix(rng, 2)
        inst = SylvesterInstance(a=np.zeros((2, 2)), b=b, c=c, alpha=spectral_norm(c))
        mirrored = transpose_instance(inst)
        assert spectral_norm(mirrored.b) == 0.0
        assert np.allclose(oracle_solve(mirrored).T, c @ np.linalg.inv(b))

    def test_phase_normalize_keeps_solution(self, rng):
        a = random_hermitian(rng, 2, 0.3) + 0.15 * np.eye(2)
        inst = SylvesterInstance(a=a, b=0.2 * np.eye(2), c=np.eye(2), alpha=1.0)
        turned = phase_normalize(inst, np.exp(0.7j))
        assert np.allclose(oracle_solve(turned), oracle_solve(inst))

    def test_phase_drops_roots(self):
        inst = SylvesterInstance(a=0.25 * np.eye(2), b=0.16 * np.eye(2), c=np.eye(2), alpha=1.0,
                                 p_a=0.5 * np.eye(2), p_b=0.4 * np.eye(2))
        assert not phase_normalize(inst, 1j).has_roots
        assert phase_normalize(inst, 1.0).has_roots

    def test_phase_must_be_unit(self, scalar_instance):
        with pytest.raises(ParameterError):
            phase_normalize(scalar_instance, 2.0)


class TestRectangular:

    def _solve_rect(self, a, b, c):
        q = rectangular_q(a, b)
        return unvec(np.linalg.solve(q, vec(c)), c.shape[0], c.shape[1])

    def _draw(self, rng, m, n):
        while True:
            a = random_matrix(rng, m)
            b = random_matrix(rng, n)
            a *= 0.5 / spectral_norm(a)
            b *= 0.5 / spectral_norm(b)
            if smallest_singular(rectangular_q(a, b)) > 1e-2:
                return a, b, random_matrix(rng, m, n)

    def test_embedding_matches_rectangular_solve(self, rng):
        for _ in range(20):
            a, b, c = self._draw(rng, 2, 3)
            inst = embed_rectangular(a, b, c)
            x_square = oracle_solve(inst)
            assert np.linalg.norm(x_square[:2] - self._solve_rect(a, b, c)) <= 1e-8
            assert np.linalg.norm(x_square[2:]) <= 1e-8

    def test_tall_problem_is_transposed(self, rng):
        a, b, c = self._draw(rng, 3, 2)
        inst, mapping = reduce_rectangular(a, b, c)
        assert mapping['transposed']
        x = recover_rectangular(oracle_solve(inst), mapping)
        assert x.shape == (3, 2)
        assert np.allclose(x, self._solve_rect(a, b, c), atol=1e-8)

    def test_pad_constant_guard(self, rng):
        a, b, c = self._draw(rng, 2, 3)
        with pytest.raises(ParameterError):
            embed_rectangular(a, b, c, c_pad=1.0)

    def test_tall_embed_rejected(self, rng):
        a, b, c = self._draw(rng, 3, 2)
        with pytest.raises(DimensionError):
            embed_rectangular(a, b, c)
