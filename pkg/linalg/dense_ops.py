"""
Dense complex linear algebra primitives
Kronecker products, row-major vectorization, Hermitian/skew splits, exponentials,
norms and PSD square roots on numpy complex arrays
"""

from typing import Optional, Tuple

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from services.error_handler import (ConventionError, DimensionCapExceeded, DimensionError,
                                    NonFiniteError, NormCutoffError, NotPsdError, get_logger)
from solver_config import get_solver_config

CMatrix = NDArray[np.complex128]
CVector = NDArray[np.complex128]

NORMALITY_RTOL = 1e-12
HERMITIAN_TOL = 1e-12
PSD_CLAMP = 1e-10

logger = get_logger(__name__)


def as_cmatrix(m, name: str = 'matrix') -> CMatrix:
    """Coerce to a finite 2-D complex128 array"""
    arr = np.asarray(m, dtype=np.complex128)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} has non-finite entries")
    return arr


def _require_square(m: CMatrix, name: str) -> None:
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")


def kron(a, b, element_cap: Optional[int] = None) -> CMatrix:
    """Kronecker product in block-of-b layout: kron(a,b)[i*p+k, j*q+l] = a[i,j]*b[k,l]"""
    a = as_cmatrix(a, 'a')
    b = as_cmatrix(b, 'b')
    cap = element_cap if element_cap is not None else get_solver_config().kron_element_cap
    elements = a.shape[0] * b.shape[0] * a.shape[1] * b.shape[1]
    if elements > cap:
        raise DimensionCapExceeded(f"Kronecker product needs {elements} entries, cap is {cap}",
                                   context={'elements': elements, 'cap': cap})
    return np.kron(a, b)


def vec(f) -> CVector:
    """Row-major flattening: entry (j, k) lands at index j*cols + k"""
    return as_cmatrix(f, 'f').reshape(-1).copy()


def unvec(v, rows: int, cols: int) -> CMatrix:
    v = np.asarray(v, dtype=np.complex128).reshape(-1)
    if v.size != rows * cols:
        raise DimensionError(f"Cannot reshape vector of length {v.size} to {rows}x{cols}")
    return v.reshape(rows, cols).copy()


def dagger(m: CMatrix) -> CMatrix:
    return np.conjugate(m).T


def herm_split(m) -> Tuple[CMatrix, CMatrix]:
    """
    Split M = M_H + i*M_S with both parts Hermitian

    Args:
        m: Square matrix

    Returns:
        Tuple (M_H, M_S) with M_H = (M + M†)/2 and M_S = (M - M†)/(2i)
    """
    m = as_cmatrix(m, 'm')
    _require_square(m, 'm')
    md = dagger(m)
    m_h = (m + md) / 2
    m_s = (m - md) / 2j
    # Exact Hermitian symmetrization removes rounding asymmetry
    return (m_h + dagger(m_h)) / 2, (m_s + dagger(m_s)) / 2


def spectral_norm(m) -> float:
    m = as_cmatrix(m)
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def smallest_singular(m) -> float:
    m = as_cmatrix(m)
    if m.size == 0:
        return 0.0
    return float(np.linalg.svd(m, compute_uv=False)[-1])


def fro_norm(m) -> float:
    return float(np.linalg.norm(as_cmatrix(m), 'fro'))


def commutator_norm(a, b) -> float:
    a = as_cmatrix(a)
    b = as_cmatrix(b)
    return spectral_norm(a @ b - b @ a)


def is_hermitian(m, tol: float = HERMITIAN_TOL) -> bool:
    m = as_cmatrix(m)
    if m.shape[0] != m.shape[1]:
        return False
    return spectral_norm(m - dagger(m)) <= tol * max(1.0, spectral_norm(m))


def is_normal(m, rtol: float = NORMALITY_RTOL) -> bool:
    """‖[M, M†]‖ ≤ rtol · max(1, ‖M‖²)"""
    m = as_cmatrix(m)
    if m.shape[0] != m.shape[1]:
        return False
    scale = max(1.0, spectral_norm(m) ** 2)
    return commutator_norm(m, dagger(m)) <= rtol * scale


def unitary_diagonalize(m) -> Tuple[CMatrix, NDArray[np.complex128]]:
    """
    Unitary eigenbasis of a normal matrix via the complex Schur form

    Returns:
        Tuple (U, eigenvalues) with M = U diag(eigenvalues) U†
    """
    m = as_cmatrix(m, 'm')
    _require_square(m, 'm')
    if is_hermitian(m):
        w, u = np.linalg.eigh((m + dagger(m)) / 2)
        return u.astype(np.complex128), w.astype(np.complex128)
    t, u = scipy.linalg.schur(m, output='complex')
    return u, np.diag(t).copy()


def mat_exp(m) -> CMatrix:
    """
    Matrix exponential

    Normal inputs go through their unitary eigenbasis; everything else uses
    scipy's Pade scaling-and-squaring.
    """
    m = as_cmatrix(m, 'm')
    _require_square(m, 'm')
    if m.shape[0] == 0:
        return m.copy()
    norm = spectral_norm(m)
    cutoff = get_solver_config().expm_norm_cutoff
    if norm > cutoff:
        raise NormCutoffError(f"Exponent norm {norm:.3e} exceeds cutoff {cutoff:.1e}",
                              context={'norm': norm, 'cutoff': cutoff})
    if norm == 0.0:
        return np.eye(m.shape[0], dtype=np.complex128)
    if is_normal(m):
        u, w = unitary_diagonalize(m)
        return (u * np.exp(w)) @ dagger(u)
    return scipy.linalg.expm(m)


def evolution(h_part: CMatrix, s_part: CMatrix, h_weight: float, s_weight: float,
              time: float) -> CMatrix:
    """e^{-i·time·(h_weight·H + s_weight·S)} for Hermitian H, S"""
    generator = h_weight * h_part
    if s_weight != 0.0:
        generator = generator + s_weight * s_part
    return mat_exp(-1j * time * generator)


def psd_sqrt(m) -> CMatrix:
    """
    Hermitian PSD square root

    Small negative eigenvalues (≥ -1e-10) are clamped to zero.
    """
    m = as_cmatrix(m, 'm')
    _require_square(m, 'm')
    if not is_hermitian(m):
        raise NotPsdError("psd_sqrt needs a Hermitian input")
    w, u = np.linalg.eigh((m + dagger(m)) / 2)
    if w.size and w.min() < -PSD_CLAMP:
        raise NotPsdError(f"Matrix has eigenvalue {w.min():.3e} below -{PSD_CLAMP}",
                          context={'min_eigenvalue': float(w.min())})
    root = (u * np.sqrt(np.clip(w, 0.0, None))) @ dagger(u)
    return (root + dagger(root)) / 2


def vectorization_self_test(seed: int = 0, trials: int = 3) -> float:
    """
    Check Q·vec(X) = vec(AX + XB) for Q = A⊗I + I⊗Bᵀ on random inputs

    Returns:
        Worst residual observed; raises ConventionError if the convention is broken
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n in range(2, 2 + trials):
        a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        b = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        x = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        eye = np.eye(n)
        q = kron(a, eye) + kron(eye, b.T)
        lhs = q @ vec(x)
        rhs = vec(a @ x + x @ b)
        worst = max(worst, float(np.linalg.norm(lhs - rhs)) / max(1.0, float(np.linalg.norm(rhs))))
    if worst > 1e-12:
        raise ConventionError(f"Vectorization convention self-test failed: residual {worst:.3e}",
                              stage='startup', context={'residual': worst})
    logger.debug(f"Vectorization self-test residual {worst:.2e}")
    return worst
