"""
Problem Model Service
Sylvester instances AX + XB = C, their vectorized operator Q, condition number,
case classification and the structural reductions (rectangular embedding,
Hermitian dilation, transposition, phase and norm rescaling)
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np

from linalg.dense_ops import (CMatrix, as_cmatrix, commutator_norm, dagger, herm_split, kron,
                              smallest_singular, spectral_norm)
from services.error_handler import (DimensionError, InvalidInstanceError, ParameterError,
                                    SingularQError, get_logger)

NORM_SLACK = 1e-12
ROOT_TOL = 1e-10
ZERO_TOL = 1e-14
NORMAL_Q_TOL = 1e-10
POSITIVITY_TOL = 1e-10
SINGULAR_TOL = 1e-12

logger = get_logger(__name__)


class CaseTag(str, Enum):
    NORMAL = 'Normal'
    POSITIVE_HERMITIAN_PART = 'PositiveHermitianPart'
    B_ZERO = 'BZero'
    POSITIVE_WITH_ROOTS = 'PositiveWithRoots'
    GENERAL_CHEBYSHEV = 'GeneralChebyshev'


@dataclass(frozen=True)
class SylvesterInstance:
    """
    A Sylvester problem AX + XB = C with the block-encoding normalization alpha ≥ ‖C‖.

    Structure:
    - a, b, c: N×N complex matrices
    - alpha: normalization of the C oracle
    - p_a, p_b: optional Hermitian roots with p_a² = a, p_b² = b
    - normalized: when True, ‖a‖, ‖b‖ ≤ 1/2 is enforced
    """
    a: CMatrix
    b: CMatrix
    c: CMatrix
    alpha: float
    p_a: Optional[CMatrix] = None
    p_b: Optional[CMatrix] = None
    normalized: bool = True
    notes: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        a = as_cmatrix(self.a, 'A')
        b = as_cmatrix(self.b, 'B')
        c = as_cmatrix(self.c, 'C')
        n = a.shape[0]
        if a.shape != (n, n) or b.shape != (n, n) or c.shape != (n, n):
            raise DimensionError(f"A, B, C must share a square shape, got {a.shape}, {b.shape}, {c.shape}")
        object.__setattr__(self, 'a', a)
        object.__setattr__(self, 'b', b)
        object.__setattr__(self, 'c', c)
        object.__setattr__(self, 'alpha', float(self.alpha))

        if self.normalized:
            for name, m in (('A', a), ('B', b)):
                norm = spectral_norm(m)
                if norm > 0.5 + NORM_SLACK:
                    raise InvalidInstanceError(f"‖{name}‖ = {norm:.6g} exceeds 1/2",
                                               context={'norm': norm, 'matrix': name})
        c_norm = spectral_norm(c)
        if c_norm > self.alpha + NORM_SLACK:
            raise InvalidInstanceError(f"‖C‖ = {c_norm:.6g} exceeds alpha = {self.alpha:.6g}")

        if (self.p_a is None) != (self.p_b is None):
            raise InvalidInstanceError("Roots must be given for both A and B or neither")
        if self.p_a is not None:
            p_a = as_cmatrix(self.p_a, 'P_A')
            p_b = as_cmatrix(self.p_b, 'P_B')
            if p_a.shape != (n, n) or p_b.shape != (n, n):
                raise DimensionError("Roots must have the shape of A and B")
            for name, p, m in (('P_A', p_a, a), ('P_B', p_b, b)):
                skew = spectral_norm(p - dagger(p))
                if skew > ROOT_TOL:
                    raise InvalidInstanceError(f"{name} is not Hermitian (‖P − P†‖ = {skew:.3e})",
                                               context={'matrix': name, 'skew': skew})
                defect = spectral_norm(p @ p - m)
                if defect > ROOT_TOL:
                    raise InvalidInstanceError(f"{name}² differs from its matrix by {defect:.3e}")
            object.__setattr__(self, 'p_a', p_a)
            object.__setattr__(self, 'p_b', p_b)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def has_roots(self) -> bool:
        return self.p_a is not None

    def replace(self, **changes) -> 'SylvesterInstance':
        values = {
            'a': self.a, 'b': self.b, 'c': self.c, 'alpha': self.alpha,
            'p_a': self.p_a, 'p_b': self.p_b, 'normalized': self.normalized, 'notes': self.notes,
        }
        values.update(changes)
        return SylvesterInstance(**values)


@dataclass(frozen=True)
class SpectralData:
    q: CMatrix
    kappa: float
    eigs_a: np.ndarray
    eigs_b: np.ndarray

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kappa': self.kappa,
            'eigs_a': [[float(z.real), float(z.imag)] for z in self.eigs_a],
            'eigs_b': [[float(z.real), float(z.imag)] for z in self.eigs_b],
        }


def build_q(inst: SylvesterInstance) -> CMatrix:
    """Q = A⊗I + I⊗Bᵀ so that Q·vec(X) = vec(AX + XB) for row-major vec"""
    eye = np.eye(inst.n, dtype=np.complex128)
    return kron(inst.a, eye) + kron(eye, inst.b.T)


def kappa(inst: SylvesterInstance) -> float:
    """κ = ‖Q⁻¹‖ = 1/σ_min(Q)"""
    sigma = smallest_singular(build_q(inst))
    if sigma <= SINGULAR_TOL:
        raise SingularQError(f"Q is singular (σ_min = {sigma:.3e}): some γ_j + λ_k vanishes",
                             context={'sigma_min': sigma})
    return 1.0 / sigma


def spectral_data(inst: SylvesterInstance) -> SpectralData:
    q = build_q(inst)
    sigma = smallest_singular(q)
    if sigma <= SINGULAR_TOL:
        raise SingularQError(f"Q is singular (σ_min = {sigma:.3e})", context={'sigma_min': sigma})
    return SpectralData(q=q, kappa=1.0 / sigma,
                        eigs_a=np.linalg.eigvals(inst.a), eigs_b=np.linalg.eigvals(inst.b))


def _min_hermitian_eig(m: CMatrix) -> float:
    return float(np.linalg.eigvalsh((m + dagger(m)) / 2)[0])


def classify(inst: SylvesterInstance) -> CaseTag:
    """
    Pick the solvable case, in priority order:
    BZero > PositiveWithRoots > Normal > PositiveHermitianPart > GeneralChebyshev
    """
    # A = 0 is the transposed B = 0 problem
    if spectral_norm(inst.b) <= ZERO_TOL or spectral_norm(inst.a) <= ZERO_TOL:
        return CaseTag.B_ZERO

    q = build_q(inst)
    q_scale = max(1.0, spectral_norm(q))
    q_hermitian = spectral_norm(q - dagger(q)) <= NORMAL_Q_TOL * q_scale
    if inst.has_roots and q_hermitian and _min_hermitian_eig(q) > POSITIVITY_TOL:
        return CaseTag.POSITIVE_WITH_ROOTS

    if commutator_norm(q, dagger(q)) <= NORMAL_Q_TOL:
        return CaseTag.NORMAL

    q_h, _ = herm_split(q)
    if _min_hermitian_eig(q_h) > POSITIVITY_TOL:
        return CaseTag.POSITIVE_HERMITIAN_PART

    return CaseTag.GENERAL_CHEBYSHEV


def default_c_pad(kappa_value: float) -> float:
    return 1.0 + 2.0 / kappa_value + 0.1


def rectangular_q(a: CMatrix, b: CMatrix) -> CMatrix:
    """Q on the M×N vec space: A⊗I_N + I_M⊗Bᵀ"""
    return kron(a, np.eye(b.shape[0])) + kron(np.eye(a.shape[0]), b.T)


def embed_rectangular(a, b, c, c_pad: Optional[float] = None,
                      alpha: Optional[float] = None) -> SylvesterInstance:
    """
    Embed an M×N problem (M ≤ N) into an N×N one

    Args:
        a: M×M matrix
        b: N×N matrix
        c: M×N right-hand side
        c_pad: diagonal padding constant; must exceed 1 + 1/κ
        alpha: normalization of C (defaults to ‖C‖)

    Returns:
        Instance with A' = diag(A, c_pad·I) and C' = [C; 0]; its solution is [X; 0].
        The instance is not norm-normalized; see rescale_instance.
    """
    a = as_cmatrix(a, 'A')
    b = as_cmatrix(b, 'B')
    c = as_cmatrix(c, 'C')
    m, n = a.shape[0], b.shape[0]
    if a.shape != (m, m) or b.shape != (n, n) or c.shape != (m, n):
        raise DimensionError(f"Expected A M×M, B N×N, C M×N; got {a.shape}, {b.shape}, {c.shape}")
    if m > n:
        raise DimensionError(f"M = {m} exceeds N = {n}; transpose the problem first")

    sigma = smallest_singular(rectangular_q(a, b))
    if sigma <= SINGULAR_TOL:
        raise SingularQError(f"Rectangular Q is singular (σ_min = {sigma:.3e})")
    kappa_rect = 1.0 / sigma
    if c_pad is None:
        c_pad = default_c_pad(kappa_rect)
    if c_pad <= 1.0 + 1.0 / kappa_rect:
        raise ParameterError(f"c_pad = {c_pad} must exceed 1 + 1/κ = {1.0 + 1.0 / kappa_rect:.6g}")

    alpha_value = float(alpha) if alpha is not None else max(spectral_norm(c), 1e-300)
    if m == n:
        return SylvesterInstance(a=a, b=b, c=c, alpha=alpha_value, normalized=False)

    a_emb = np.zeros((n, n), dtype=np.complex128)
    a_emb[:m, :m] = a
    a_emb[m:, m:] = c_pad * np.eye(n - m)
    c_emb = np.zeros((n, n), dtype=np.complex128)
    c_emb[:m, :] = c
    logger.debug(f"Embedded {m}x{n} problem with c_pad={c_pad:.4g}")
    return SylvesterInstance(a=a_emb, b=b, c=c_emb, alpha=alpha_value, normalized=False,
                             notes=(f"embedded {m}x{n} with c_pad={c_pad:.6g}",))


def reduce_rectangular(a, b, c, c_pad: Optional[float] = None) -> Tuple[SylvesterInstance, Dict[str, Any]]:
    """
    Reduce any rectangular problem to a square one

    Returns:
        Tuple (instance, mapping) where mapping tells recover_rectangular how to
        read the original M×N solution back
    """
    a = as_cmatrix(a, 'A')
    b = as_cmatrix(b, 'B')
    c = as_cmatrix(c, 'C')
    m, n = c.shape
    if m <= n:
        return embed_rectangular(a, b, c, c_pad), {'rows': m, 'cols': n, 'transposed': False}
    # BᵀXᵀ + XᵀAᵀ = Cᵀ has the short side first
    inst = embed_rectangular(b.T, a.T, c.T, c_pad)
    return inst, {'rows': m, 'cols': n, 'transposed': True}


def recover_rectangular(x_square: CMatrix, mapping: Dict[str, Any]) -> CMatrix:
    rows, cols = mapping['rows'], mapping['cols']
    if mapping['transposed']:
        return x_square[:cols, :rows].T.copy()
    return x_square[:rows, :cols].copy()


def hermitian_dilation(inst: SylvesterInstance) -> SylvesterInstance:
    """
    Dilate a B = 0 instance so that A becomes Hermitian

    A ↦ [[0, A], [A†, 0]], C ↦ [[C, 0], [0, 0]]; the original solution A⁻¹C is
    the lower-left block of the dilated solution.
    """
    if spectral_norm(inst.b) > ZERO_TOL:
        raise InvalidInstanceError("Hermitian dilation applies to B = 0 instances only")
    n = inst.n
    a_dil = np.zeros((2 * n, 2 * n), dtype=np.complex128)
    a_dil[:n, n:] = inst.a
    a_dil[n:, :n] = dagger(inst.a)
    c_dil = np.zeros((2 * n, 2 * n), dtype=np.complex128)
    c_dil[:n, :n] = inst.c
    return SylvesterInstance(a=a_dil, b=np.zeros_like(a_dil), c=c_dil, alpha=inst.alpha,
                             normalized=inst.normalized, notes=inst.notes + ('hermitian dilation',))


def extract_dilated_solution(x_dilated: CMatrix) -> CMatrix:
    n = x_dilated.shape[0] // 2
    return x_dilated[n:, :n].copy()


def transpose_instance(inst: SylvesterInstance) -> SylvesterInstance:
    """AX + XB = C  ⇔  BᵀXᵀ + XᵀAᵀ = Cᵀ; used to send A = 0 problems to the B = 0 case"""
    return SylvesterInstance(
        a=inst.b.T, b=inst.a.T, c=inst.c.T, alpha=inst.alpha,
        p_a=None if inst.p_b is None else inst.p_b.T,
        p_b=None if inst.p_a is None else inst.p_a.T,
        normalized=inst.normalized, notes=inst.notes + ('transposed',))


def phase_normalize(inst: SylvesterInstance, phase: complex) -> SylvesterInstance:
    """
    Multiply A, B, C by a common unit phase; the solution X is unchanged

    Hermitian roots survive only a unit phase of 1; any other phase drops them.
    """
    phase = complex(phase)
    if abs(abs(phase) - 1.0) > 1e-14:
        raise ParameterError(f"Phase must have unit modulus, got |phase| = {abs(phase)}")
    keep_roots = abs(phase - 1.0) <= 1e-14
    return inst.replace(
        a=phase * inst.a, b=phase * inst.b, c=phase * inst.c,
        p_a=inst.p_a if keep_roots else None,
        p_b=inst.p_b if keep_roots else None)


def rescale_instance(inst: SylvesterInstance) -> Tuple[SylvesterInstance, float]:
    """
    Bring ‖A‖, ‖B‖ down to 1/2 by a common factor s applied to A, B, C and alpha

    X is unchanged; κ grows by 1/s. Returns (instance, s).
    """
    largest = max(spectral_norm(inst.a), spectral_norm(inst.b))
    if largest <= 0.5 + NORM_SLACK:
        return inst.replace(normalized=True), 1.0
    s = 0.5 / largest
    logger.info(f"Rescaling A, B, C by {s:.6g} so that ‖A‖, ‖B‖ ≤ 1/2")
    root = np.sqrt(s)
    return SylvesterInstance(
        a=s * inst.a, b=s * inst.b, c=s * inst.c, alpha=s * inst.alpha,
        p_a=None if inst.p_a is None else root * inst.p_a,
        p_b=None if inst.p_b is None else root * inst.p_b,
        normalized=True, notes=inst.notes + (f"rescaled by {s:.6g}",)), s

