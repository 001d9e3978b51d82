"""
Block-Encoding Service
Dilation of C/α into a unitary, PREPARE/SELECT assembly of two-sided LCU
programs, block extraction and verification at desk scale
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from linalg.dense_ops import CMatrix, CVector, as_cmatrix, dagger, psd_sqrt, spectral_norm
from services.error_handler import (DimensionCapExceeded, DimensionError, InvalidInstanceError,
                                    ParameterError, get_logger)
from services.lcu_synthesis import LcuProgram, evolution_unitary
from solver_config import get_solver_config
from storage.matrix_store import encode_matrix

UNITARITY_TOL = 1e-10
BLOCK_TOL = 1e-10
CONSTRUCTION_TOL = 1e-8
ZERO_WEIGHT = 0.0

logger = get_logger(__name__)


def unitarity_defect(u: CMatrix) -> float:
    """‖U†U - I‖"""
    return spectral_norm(dagger(u) @ u - np.eye(u.shape[1]))


@dataclass(frozen=True)
class BlockEncoding:
    """A unitary whose top-left block_dim × block_dim block is target/alpha"""
    unitary: CMatrix
    block_dim: int
    alpha: float

    def __post_init__(self):
        rows, cols = self.unitary.shape
        if rows != cols:
            raise DimensionError(f"Block-encoding unitary must be square, got {self.unitary.shape}")
        if not 0 < self.block_dim <= rows:
            raise DimensionError(f"block_dim {self.block_dim} outside 1..{rows}")
        gram = dagger(self.unitary) @ self.unitary
        defect = float(np.linalg.norm(gram - np.eye(rows), 'fro'))
        if defect > CONSTRUCTION_TOL:
            raise InvalidInstanceError(f"Matrix is not unitary (defect {defect:.3e})", stage='assembly')

    @property
    def dim(self) -> int:
        return self.unitary.shape[0]

    def to_dict(self) -> Dict[str, Any]:
        return {'block_dim': self.block_dim, 'alpha': self.alpha,
                'unitary': encode_matrix(self.unitary)}


@dataclass
class LcuCircuit:
    """
    PREPARE/SELECT data for one LCU.

    select_terms[i] is the (left, right) pair controlled on ancilla value i;
    padding slots hold None and act as the identity.
    """
    prepare: CMatrix
    select_terms: List[Optional[Tuple[CMatrix, CMatrix]]]
    phases: List[complex]
    unprime: CMatrix
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def ancilla_dim(self) -> int:
        return self.prepare.shape[0]

    @property
    def l1(self) -> float:
        return float(np.sum(self.weights))


def dilate(c, alpha: float) -> BlockEncoding:
    """[[C/α, √(I - CC†/α²)], [√(I - C†C/α²), -C†/α]]"""
    c = as_cmatrix(c, 'C')
    if alpha <= 0:
        raise ParameterError(f"alpha must be positive, got {alpha}")
    norm = spectral_norm(c)
    if norm > alpha * (1.0 + 1e-12):
        raise ParameterError(f"‖C‖ = {norm:.6g} exceeds alpha = {alpha:.6g}")
    scaled = c / alpha
    rows, cols = scaled.shape
    top_right = psd_sqrt(np.eye(rows) - scaled @ dagger(scaled))
    bottom_left = psd_sqrt(np.eye(cols) - dagger(scaled) @ scaled)
    unitary = np.block([[scaled, top_right], [bottom_left, -dagger(scaled)]])
    return BlockEncoding(unitary=unitary, block_dim=rows, alpha=alpha)


def identity_encoding(n: int) -> BlockEncoding:
    """Trivial encoding of the identity (used to test SELECT structure)"""
    return BlockEncoding(unitary=np.eye(n, dtype=np.complex128), block_dim=n, alpha=1.0)


def padded_size(count: int) -> int:
    size = 1
    while size < count:
        size *= 2
    return size


def prepare_state(weights: Sequence[float]) -> CVector:
    """Unit vector with entries √(w_i / Σw)"""
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.size == 0 or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ParameterError("Weights must be finite and non-negative")
    total = float(w.sum())
    if total <= 0:
        raise ParameterError("At least one weight must be positive")
    return np.sqrt(w / total).astype(np.complex128)


def prepare_unitary(state: CVector) -> CMatrix:
    """Householder reflection V with V|0⟩ = state (state real and non-negative)"""
    state = np.asarray(state, dtype=np.complex128).reshape(-1)
    basis = np.zeros_like(state)
    basis[0] = 1.0
    v = basis - state
    norm_sq = float(np.real(np.vdot(v, v)))
    if norm_sq < 1e-30:
        return np.eye(state.size, dtype=np.complex128)
    return np.eye(state.size, dtype=np.complex128) - 2.0 * np.outer(v, np.conj(v)) / norm_sq


def build_circuit(coeffs: Sequence[complex], lefts: Sequence[CMatrix],
                  rights: Sequence[CMatrix]) -> LcuCircuit:
    """
    Split complex coefficients into weights |x_i| and phases e^{i arg x_i}

    The ancilla register is padded to a power of two; V′ = V† · diag(phases).
    """
    coeffs = np.asarray(coeffs, dtype=np.complex128).reshape(-1)
    if not (len(coeffs) == len(lefts) == len(rights)):
        raise DimensionError("Coefficient, left and right lists must have equal length")
    size = padded_size(len(coeffs))
    weights = np.zeros(size)
    weights[:coeffs.size] = np.abs(coeffs)
    phases = np.ones(size, dtype=np.complex128)
    nonzero = weights[:coeffs.size] > 0
    phases[:coeffs.size][nonzero] = coeffs[nonzero] / weights[:coeffs.size][nonzero]

    prepare = prepare_unitary(prepare_state(weights))
    select: List[Optional[Tuple[CMatrix, CMatrix]]] = [
        (as_cmatrix(lefts[i]), as_cmatrix(rights[i])) if weights[i] > ZERO_WEIGHT else None
        for i in range(coeffs.size)]
    select.extend([None] * (size - coeffs.size))
    return LcuCircuit(prepare=prepare, select_terms=select, phases=phases.tolist(),
                      unprime=dagger(prepare) @ np.diag(phases), weights=weights)


def _select_blocks(circuit: LcuCircuit, u_c: BlockEncoding) -> np.ndarray:
    """SELECT diagonal blocks (I ⊗ L_i) U_c (I ⊗ R_i) on the u_c register"""
    n = u_c.block_dim
    if u_c.dim % n:
        raise DimensionError(f"Encoding dimension {u_c.dim} is not a multiple of block_dim {n}")
    outer = np.eye(u_c.dim // n)
    blocks = np.empty((circuit.ancilla_dim, u_c.dim, u_c.dim), dtype=np.complex128)
    for i, pair in enumerate(circuit.select_terms):
        if pair is None:
            blocks[i] = np.eye(u_c.dim)
            continue
        left, right = pair
        if left.shape != (n, n) or right.shape != (n, n):
            raise DimensionError(f"SELECT term {i} acts on {left.shape}/{right.shape}, expected {(n, n)}")
        blocks[i] = np.kron(outer, left) @ u_c.unitary @ np.kron(outer, right)
    return blocks


def assemble_circuit(circuit: LcuCircuit, u_c: BlockEncoding) -> BlockEncoding:
    """W = (V′ ⊗ I) · Σ_i |i⟩⟨i| ⊗ S_i · (V ⊗ I), ancilla index most significant"""
    total = circuit.ancilla_dim * u_c.dim
    cap = get_solver_config().unitary_dim_cap
    if total > cap:
        raise DimensionCapExceeded(f"Assembled unitary would have dimension {total}, cap is {cap}",
                                   stage='assembly', context={'dimension': total, 'cap': cap})
    blocks = _select_blocks(circuit, u_c)
    # W[k,a,j,b] = Σ_i V′[k,i] S_i[a,b] V[i,j]
    right = np.einsum('iab,ij->iajb', blocks, circuit.prepare)
    dims = (circuit.ancilla_dim, u_c.dim)
    unitary = (circuit.unprime @ right.reshape(dims[0], -1)).reshape(total, total)
    logger.debug(f"Assembled block-encoding of dimension {total} from {circuit.ancilla_dim} slots")
    return BlockEncoding(unitary=unitary, block_dim=u_c.block_dim, alpha=circuit.l1 * u_c.alpha)


def assemble_terms(coeffs: Sequence[complex], lefts: Sequence[CMatrix], rights: Sequence[CMatrix],
                   u_c: BlockEncoding) -> BlockEncoding:
    return assemble_circuit(build_circuit(coeffs, lefts, rights), u_c)


def assemble(program: LcuProgram, u_c: BlockEncoding) -> BlockEncoding:
    """
    Block-encoding of X̂/x for an LCU program

    Args:
        program: LCU program acting on dimension u_c.block_dim
        u_c: Encoding of C/α

    Returns:
        BlockEncoding with alpha = program.l1 · u_c.alpha
    """
    if program.dim != u_c.block_dim:
        raise DimensionError(f"Program acts on dimension {program.dim}, encoding block is {u_c.block_dim}")
    count = program.term_count
    total = padded_size(count) * u_c.dim
    cap = get_solver_config().unitary_dim_cap
    if total > cap:
        raise DimensionCapExceeded(f"{count} terms need a unitary of dimension {total}, cap is {cap}; "
                                   f"shrink R and J with manual params",
                                   stage='assembly', context={'dimension': total, 'cap': cap,
                                                              'term_count': count})
    terms = list(program.terms)
    lefts = [evolution_unitary(program, term.left) for term in terms]
    rights = [evolution_unitary(program, term.right) for term in terms]
    return assemble_terms([term.coeff for term in terms], lefts, rights, u_c)


def extract_block(be: BlockEncoding) -> CMatrix:
    return be.unitary[:be.block_dim, :be.block_dim].copy()


def verify_block_encoding(be: BlockEncoding, target, eps: float,
                          unitarity_tol: float = UNITARITY_TOL) -> Dict[str, Any]:
    """Spectral distance of the top-left block to target, plus the unitarity defect"""
    target = as_cmatrix(target, 'target')
    if target.shape != (be.block_dim, be.block_dim):
        raise DimensionError(f"Target has shape {target.shape}, block is {be.block_dim}")
    block_error = spectral_norm(extract_block(be) - target)
    defect = unitarity_defect(be.unitary)
    return {
        'check': 'block_encoding',
        'block_error': block_error,
        'unitarity_defect': defect,
        'eps': eps,
        'pass': block_error <= eps and defect <= unitarity_tol,
    }


def lemma_block(weights: Sequence[float], unitaries: Sequence[CMatrix]) -> CMatrix:
    """Π V†UV Π for the one-sided LCU Σ α_i U_i (V′ = V†)"""
    n = as_cmatrix(unitaries[0]).shape[0]
    eye = np.eye(n, dtype=np.complex128)
    be = assemble_terms(weights, unitaries, [eye] * len(unitaries), identity_encoding(n))
    return extract_block(be)
