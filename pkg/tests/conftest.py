"""
Shared fixtures for the Sylvester LCU test suites
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from services.problem_model import SylvesterInstance  # noqa: E402
from solver_config import reset_solver_config  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(autouse=True)
def fresh_config(monkeypatch):
    """Every test starts from the default limits, whatever the shell exports"""
    for name in list(os.environ):
        if name.startswith('QSYLV_'):
            monkeypatch.delenv(name, raising=False)
    reset_solver_config()
    yield
    reset_solver_config()


def random_matrix(rng, n, m=None):
    m = n if m is None else m
    return rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))


def random_unitary(rng, n):
    q, r = np.linalg.qr(random_matrix(rng, n))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_hermitian(rng, n, norm=0.5):
    h = random_matrix(rng, n)
    h = (h + h.conj().T) / 2
    return norm * h / np.linalg.norm(h, 2)


def random_invertible_instance(rng, n, max_kappa=50.0):
    """Random normalized instance with κ ≤ max_kappa (rejection sampled)"""
    from services.problem_model import kappa

    while True:
        a = random_matrix(rng, n)
        b = random_matrix(rng, n)
        a *= 0.5 / np.linalg.norm(a, 2)
        b *= 0.5 / np.linalg.norm(b, 2)
        c = random_matrix(rng, n)
        inst = SylvesterInstance(a=a, b=b, c=c, alpha=float(np.linalg.norm(c, 2)))
        try:
            if kappa(inst) <= max_kappa:
                return inst
        except Exception:
            continue


@pytest.fixture
def scalar_instance():
    return SylvesterInstance(a=[[0.25]], b=[[0.25]], c=[[1.0]], alpha=1.0)


@pytest.fixture
def hermitian_bzero():
    """2×2 B = 0 instance with A = diag(1/2, -1/2)"""
    return SylvesterInstance(a=np.diag([0.5, -0.5]), b=np.zeros((2, 2)),
                             c=np.array([[1.0, 0.5], [0.25, -1.0]]) / 1.5, alpha=1.0)
