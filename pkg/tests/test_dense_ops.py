"""
Dense linear algebra primitives
"""

import numpy as np
import pytest
import scipy.linalg

from linalg import dense_ops
from linalg.dense_ops import (as_cmatrix, commutator_norm, evolution, herm_split, is_hermitian,
                              is_normal, kron, mat_exp, psd_sqrt, smallest_singular, spectral_norm,
                              unitary_diagonalize, unvec, vec, vectorization_self_test)
from services.error_handler import (ConventionError, DimensionCapExceeded, DimensionError,
                                    NonFiniteError, NormCutoffError, NotPsdError)
from solver_config import configure_solver
from tests.conftest import random_hermitian, random_matrix


class TestVectorization:

    def test_vec_is_row_major(self):
        f = np.array([[1, 2], [3, 4]])
        assert np.array_equal(vec(f), np.array([1, 2, 3, 4], dtype=complex))

    def test_unvec_inverts_vec(self, rng):
        x = random_matrix(rng, 2, 3)
        assert np.allclose(unvec(vec(x), 2, 3), x)

    def test_unvec_rejects_bad_length(self):
        with pytest.raises(DimensionError):
            unvec(np.zeros(5), 2, 3)

    def test_product_identity(self, rng):
        # vec(AXB) = (A ⊗ Bᵀ) vec X for row-major vec
        for _ in range(100):
            n = int(rng.integers(2, 4))
            a, x, b = (random_matrix(rng, n) for _ in range(3))
            lhs = vec(a @ x @ b)
            rhs = kron(a, b.T) @ vec(x)
            assert np.linalg.norm(lhs - rhs) <= 1e-12 * max(1.0, np.linalg.norm(lhs))

    def test_self_test_passes(self):
        assert vectorization_self_test() <= 1e-12

    def test_self_test_catches_column_major(self, monkeypatch):
        monkeypatch.setattr(dense_ops, 'vec', lambda f: np.asarray(f).reshape(-1, order='F'))
        with pytest.raises(ConventionError) as info:
            vectorization_self_test()
        assert info.value.stage == 'startup'

    def test_kron_layout(self):
        a = np.array([[1, 2], [3, 4]])
        b = np.eye(2)
        k = kron(a, b)
        assert k[0, 2] == 2 and k[2, 0] == 3

    def test_kron_cap(self):
        configure_solver({'kron_element_cap': 100})
        with pytest.raises(DimensionCapExceeded):
            kron(np.eye(4), np.eye(4))


class TestSplitsAndNorms:

    def test_herm_split_reassembles(self, rng):
        m = random_matrix(rng, 3)
        h, s = herm_split(m)
        assert is_hermitian(h) and is_hermitian(s)
        assert np.allclose(h + 1j * s, m)

    def test_herm_split_example(self):
        h, s = herm_split([[0, 1], [-1, 0]])
        assert np.allclose(h, 0)
        assert np.allclose(s, [[0, -1j], [1j, 0]])

    def test_norms(self):
        m = np.diag([3.0, -0.5])
        assert spectral_norm(m) == pytest.approx(3.0)
        assert smallest_singular(m) == pytest.approx(0.5)

    def test_normality(self):
        assert is_normal(np.array([[0.25, 0.125], [-0.125, 0.25]]))
        assert not is_normal(np.array([[0.25, 0.25], [0, 0.25]]))
        assert commutator_norm(np.eye(2), np.array([[0, 1], [1, 0]])) == 0.0

    def test_rejects_non_finite(self):
        with pytest.raises(NonFiniteError):
            as_cmatrix([[np.nan]])

    def test_rejects_3d(self):
        with pytest.raises(DimensionError):
            as_cmatrix(np.zeros((2, 2, 2)))


class TestExponentials:

    def test_unitary_diagonalize_normal(self, rng):
        h = random_hermitian(rng, 3)
        u, w = unitary_diagonalize(h)
        assert np.allclose((u * w) @ u.conj().T, h)

    def test_mat_exp_matches_scipy(self, rng):
        m = random_matrix(rng, 3) * 0.3
        assert np.allclose(mat_exp(m), scipy.linalg.expm(m), atol=1e-12)

    def test_evolution_is_unitary(self, rng):
        h, s = random_hermitian(rng, 3), random_hermitian(rng, 3)
        u = evolution(h, s, 0.7, -1.3, 2.5)
        assert np.allclose(u.conj().T @ u, np.eye(3), atol=1e-12)

    def test_evolution_scalar(self):
        u = evolution(np.array([[0.5]]), np.array([[0.0]]), 2.0, 0.0, 1.0)
        assert u[0, 0] == pytest.approx(np.exp(-1j))

    def test_norm_cutoff(self):
        with pytest.raises(NormCutoffError):
            mat_exp(np.array([[1e5]]))


class TestPsdSqrt:

    def test_square_root_squares_back(self, rng):
        g = random_matrix(rng, 3)
        m = g @ g.conj().T
        root = psd_sqrt(m)
        assert is_hermitian(root)
        assert np.allclose(root @ root, m, atol=1e-10)

    def test_clamps_tiny_negative(self):
        root = psd_sqrt(np.diag([1.0, -1e-12]))
        assert np.allclose(root, np.diag([1.0, 0.0]))

    def test_rejects_indefinite(self):
        with pytest.raises(NotPsdError):
            psd_sqrt(np.diag([1.0, -0.1]))
