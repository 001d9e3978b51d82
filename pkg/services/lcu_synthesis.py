"""
LCU Synthesis Service
Builds the discretized linear-combination-of-unitaries programs whose sum
Σ coeff · e^{-iτ(h M_H + s M_S)} C e^{-iτ'(h' N_H + s' N_S)} approximates the
Sylvester solution, and reconstructs X̂ densely or through closed-form fast paths
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from linalg.dense_ops import (CMatrix, as_cmatrix, commutator_norm, dagger, evolution, herm_split,
                              is_hermitian, spectral_norm, unitary_diagonalize)
from services.discretization import (SQRT_2PI, DiscretizationParams, KernelSpec, default_kernel,
                                     eval_h_scalar, geometric_r_sum, kernel_values, term_count)
from services.error_handler import (DimensionError, InvalidInstanceError, TermBudgetExceeded,
                                    get_logger)
from services.problem_model import ZERO_TOL, CaseTag, SylvesterInstance
from solver_config import get_solver_config

COMMUTE_RTOL = 1e-10
EXPORT_TERM_LIMIT = 10_000
# Frequencies handled per batched eigendecomposition in the geometric path
GEOMETRIC_BATCH = 2048

logger = get_logger(__name__)


class Side(str, Enum):
    LEFT = 'Left'
    RIGHT = 'Right'


@dataclass(frozen=True)
class EvolutionSpec:
    """The unitary e^{-i·time·(h_weight·M_H + s_weight·M_S)} applied on one side of C"""
    h_weight: float
    s_weight: float
    time: float
    side: Side

    def to_dict(self) -> Dict[str, Any]:
        return {'h_weight': self.h_weight, 's_weight': self.s_weight, 'time': self.time,
                'side': self.side.value}


@dataclass(frozen=True)
class LcuTerm:
    coeff: complex
    left: EvolutionSpec
    right: EvolutionSpec

    def to_dict(self) -> Dict[str, Any]:
        return {'coeff': [self.coeff.real, self.coeff.imag],
                'left': self.left.to_dict(), 'right': self.right.to_dict()}


@dataclass(frozen=True)
class TermTable:
    """
    Struct-of-arrays term layout: term (r, f) has coefficient coeff[f] and
    evolution times time_grid[r]·left_time[f] / time_grid[r]·right_time[f]
    """
    coeff: np.ndarray
    left_h: np.ndarray
    left_s: np.ndarray
    left_time: np.ndarray
    right_h: np.ndarray
    right_s: np.ndarray
    right_time: np.ndarray
    time_grid: np.ndarray

    @property
    def width(self) -> int:
        return self.coeff.size

    def __len__(self) -> int:
        return self.time_grid.size * self.coeff.size


class LcuTermSequence(Sequence):
    """Read-only view materializing LcuTerm objects on index, r-major"""

    def __init__(self, table: TermTable):
        self._table = table

    def __len__(self) -> int:
        return len(self._table)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return [self[i] for i in range(*index.indices(len(self)))]
        if index < 0:
            index += len(self)
        if not 0 <= index < len(self):
            raise IndexError(index)
        t = self._table
        r, f = divmod(index, t.width)
        tau = float(t.time_grid[r])
        return LcuTerm(
            coeff=complex(t.coeff[f]),
            left=EvolutionSpec(float(t.left_h[f]), float(t.left_s[f]), tau * float(t.left_time[f]), Side.LEFT),
            right=EvolutionSpec(float(t.right_h[f]), float(t.right_s[f]), tau * float(t.right_time[f]), Side.RIGHT))


@dataclass(frozen=True)
class LcuProgram:
    """
    An LCU program X̂ = Σ_i coeff_i V_i C W_i.

    Structure:
    - case / params: origin of the grid (params is None for hand-built programs)
    - table: term coefficients and evolution weights
    - left_ops, right_ops: (Hermitian part, skew part) generators of V_i and W_i
    - alpha: normalization of the C oracle; rescale x = l1 · alpha
    - linear_time: True when term times are r·δ_t (closed-form r-sums apply)
    """
    case: Optional[CaseTag]
    params: Optional[DiscretizationParams]
    table: TermTable
    left_ops: Tuple[CMatrix, CMatrix]
    right_ops: Tuple[CMatrix, CMatrix]
    alpha: float = 1.0
    kernel: Optional[KernelSpec] = None
    skew_sign: float = 1.0
    form: str = 'lemma'
    linear_time: bool = False
    synthesized: bool = False

    @property
    def terms(self) -> LcuTermSequence:
        return LcuTermSequence(self.table)

    @property
    def term_count(self) -> int:
        return len(self.table)

    @property
    def l1(self) -> float:
        return float(self.table.time_grid.size * np.sum(np.abs(self.table.coeff)))

    @property
    def rescale(self) -> float:
        return self.l1 * self.alpha

    @property
    def dim(self) -> int:
        return self.left_ops[0].shape[0]

    def to_dict(self, include_terms: Optional[bool] = None) -> Dict[str, Any]:
        """JSON form; the explicit term list is included for small programs"""
        if include_terms is None:
            include_terms = self.term_count <= EXPORT_TERM_LIMIT
        t = self.table
        data = {
            'case': self.case.value if self.case else None,
            'params': self.params.to_dict() if self.params else None,
            'kernel': self.kernel.to_dict() if self.kernel else None,
            'term_count': self.term_count,
            'l1': self.l1,
            'alpha': self.alpha,
            'rescale': self.rescale,
            'max_evolution_time': max_evolution_time(self),
            'time_grid': t.time_grid.tolist(),
            'frequency_table': [
                {'coeff': [float(t.coeff[f].real), float(t.coeff[f].imag)],
                 'left': [float(t.left_h[f]), float(t.left_s[f]), float(t.left_time[f])],
                 'right': [float(t.right_h[f]), float(t.right_s[f]), float(t.right_time[f])]}
                for f in range(t.width)],
        }
        if include_terms:
            data['terms'] = [term.to_dict() for term in self.terms]
        return data


def _check_budget(count: int, term_budget: Optional[int]) -> None:
    budget = term_budget if term_budget is not None else get_solver_config().term_budget
    if count > budget:
        raise TermBudgetExceeded(count, budget, stage='synthesis')


def _pair_table(coeff: np.ndarray, h_left: np.ndarray, s_left: np.ndarray, h_right: np.ndarray,
                s_right: np.ndarray, right_time: float, time_grid: np.ndarray) -> TermTable:
    ones = np.ones(coeff.size)
    return TermTable(coeff=coeff.astype(np.complex128), left_h=h_left, left_s=s_left, left_time=ones,
                     right_h=h_right, right_s=s_right, right_time=right_time * ones,
                     time_grid=time_grid)


def _pairs_commute(h_part: CMatrix, s_part: CMatrix) -> bool:
    scale = max(1.0, spectral_norm(h_part) * spectral_norm(s_part))
    return commutator_norm(h_part, s_part) <= COMMUTE_RTOL * scale


def synth_normal(inst: SylvesterInstance, params: DiscretizationParams, form: str = 'lemma',
                 term_budget: Optional[int] = None) -> LcuProgram:
    """
    Case-1 program: (i/2π)δ_tδ_ω² Σ (ω_j - iω_j') e^{-(ω_j²+ω_j'²)/2}
    e^{-it_r(ω_j A_H + ω_j' A_S)} C e^{-it_r(ω_j B_H + ω_j' B_S)}

    Args:
        inst: Instance with A and B normal
        params: Case-1 grids
        form: 'lemma' uses i(ω - iω'), 'main' uses (iω + ω'); the two agree
        term_budget: Override of the configured term cap
    """
    a_h, a_s = herm_split(inst.a)
    b_h, b_s = herm_split(inst.b)
    if not (_pairs_commute(a_h, a_s) and _pairs_commute(b_h, b_s)):
        raise InvalidInstanceError("Case-1 synthesis needs commuting Hermitian and skew parts",
                                   stage='synthesis')
    _check_budget(term_count(params), term_budget)

    omegas = params.omegas()
    gauss = np.exp(-omegas ** 2 / 2.0)
    w_h = np.repeat(omegas, omegas.size)
    w_s = np.tile(omegas, omegas.size)
    weight = np.repeat(gauss, omegas.size) * np.tile(gauss, omegas.size)
    pair = (1j * w_h + w_s) if form == 'main' else 1j * (w_h - 1j * w_s)
    coeff = params.delta_t * params.delta_omega ** 2 / (2.0 * math.pi) * pair * weight

    table = _pair_table(coeff, w_h, w_s, w_h, w_s, 1.0, params.times())
    logger.debug(f"Case-1 program: {len(table)} terms")
    return LcuProgram(case=CaseTag.NORMAL, params=params, table=table, left_ops=(a_h, a_s),
                      right_ops=(b_h, b_s), alpha=inst.alpha, form=form, linear_time=True,
                      synthesized=True)


def synth_pos_herm(inst: SylvesterInstance, params: DiscretizationParams,
                   kernel: Optional[KernelSpec] = None, skew_sign: float = 1.0,
                   term_budget: Optional[int] = None) -> LcuProgram:
    """
    Case-2 program: δ_tδ_ω Σ_{r,j} f̂(ω_j) e^{-i(ω_j A_H + A_S)t_r} C e^{-i(ω_j B_H + B_S)t_r}

    skew_sign = -1 selects the variant with -A_S, -B_S, kept for comparison only.
    """
    a_h, a_s = herm_split(inst.a)
    b_h, b_s = herm_split(inst.b)
    kernel = kernel or default_kernel(params)
    _check_budget(term_count(params), term_budget)

    omegas = params.omegas()
    coeff = params.delta_t * params.delta_omega * kernel_values(kernel, omegas)
    skew = np.full(omegas.size, float(skew_sign))
    table = _pair_table(coeff, omegas, skew, omegas, skew, 1.0, params.times())
    return LcuProgram(case=CaseTag.POSITIVE_HERMITIAN_PART, params=params, table=table,
                      left_ops=(a_h, a_s), right_ops=(b_h, b_s), alpha=inst.alpha, kernel=kernel,
                      skew_sign=float(skew_sign), linear_time=True, synthesized=True)


def synth_bzero(inst: SylvesterInstance, params: DiscretizationParams,
                term_budget: Optional[int] = None) -> LcuProgram:
    """Case-3 program: (i/√2π)δ_tδ_ω Σ_{r,j} ω_j e^{-ω_j²/2} e^{-it_rω_j A} C"""
    if spectral_norm(inst.b) > ZERO_TOL:
        raise InvalidInstanceError("Case-3 synthesis needs B = 0", stage='synthesis')
    if not is_hermitian(inst.a):
        raise InvalidInstanceError("Case-3 synthesis needs Hermitian A; dilate first", stage='synthesis')
    _check_budget(term_count(params), term_budget)

    omegas = params.omegas()
    coeff = (1j / SQRT_2PI) * params.delta_t * params.delta_omega * omegas * np.exp(-omegas ** 2 / 2.0)
    zeros = np.zeros(omegas.size)
    a_h, _ = herm_split(inst.a)
    table = _pair_table(coeff, omegas, zeros, zeros, zeros, 0.0, params.times())
    zero_op = np.zeros_like(a_h)
    return LcuProgram(case=CaseTag.B_ZERO, params=params, table=table, left_ops=(a_h, zero_op),
                      right_ops=(zero_op, zero_op), alpha=inst.alpha, linear_time=True,
                      synthesized=True)


def synth_positive(inst: SylvesterInstance, params: DiscretizationParams,
                   term_budget: Optional[int] = None) -> LcuProgram:
    """Case-4 program: (1/2π)δ_tδ_ω² Σ e^{-(ω_j²+ω_j'²)/2} e^{-iω_j√(2t_r)P_A} C e^{-iω_j'√(2t_r)P_B}"""
    if not inst.has_roots:
        raise InvalidInstanceError("Case-4 synthesis needs the roots P_A and P_B", stage='synthesis')
    _check_budget(term_count(params), term_budget)

    omegas = params.omegas()
    gauss = np.exp(-omegas ** 2 / 2.0)
    w_left = np.repeat(omegas, omegas.size)
    w_right = np.tile(omegas, omegas.size)
    coeff = params.delta_t * params.delta_omega ** 2 / (2.0 * math.pi) \
        * np.repeat(gauss, omegas.size) * np.tile(gauss, omegas.size)
    zeros = np.zeros(coeff.size)
    table = _pair_table(coeff, w_left, zeros, w_right, zeros, 1.0, np.sqrt(2.0 * params.times()))
    p_a, p_b = inst.p_a, inst.p_b
    zero_op = np.zeros_like(p_a)
    return LcuProgram(case=CaseTag.POSITIVE_WITH_ROOTS, params=params, table=table,
                      left_ops=(p_a, zero_op), right_ops=(p_b, zero_op), alpha=inst.alpha,
                      synthesized=True)


def synthesize(inst: SylvesterInstance, case: CaseTag, params: DiscretizationParams,
               kernel: Optional[KernelSpec] = None, term_budget: Optional[int] = None) -> LcuProgram:
    if case == CaseTag.NORMAL:
        return synth_normal(inst, params, term_budget=term_budget)
    if case == CaseTag.POSITIVE_HERMITIAN_PART:
        return synth_pos_herm(inst, params, kernel, term_budget=term_budget)
    if case == CaseTag.B_ZERO:
        return synth_bzero(inst, params, term_budget=term_budget)
    if case == CaseTag.POSITIVE_WITH_ROOTS:
        return synth_positive(inst, params, term_budget=term_budget)
    raise InvalidInstanceError(f"No LCU program for case {case.value}", stage='synthesis')


def program_from_terms(terms: List[LcuTerm], left_ops: Tuple[CMatrix, CMatrix],
                       right_ops: Optional[Tuple[CMatrix, CMatrix]] = None,
                       alpha: float = 1.0) -> LcuProgram:
    """Hand-built program from an explicit term list"""
    left_ops = (as_cmatrix(left_ops[0]), as_cmatrix(left_ops[1]))
    if right_ops is None:
        right_ops = (np.zeros_like(left_ops[0]), np.zeros_like(left_ops[0]))
    right_ops = (as_cmatrix(right_ops[0]), as_cmatrix(right_ops[1]))

    def column(getter):
        return np.array([getter(term) for term in terms], dtype=float)

    table = TermTable(
        coeff=np.array([term.coeff for term in terms], dtype=np.complex128),
        left_h=column(lambda t: t.left.h_weight), left_s=column(lambda t: t.left.s_weight),
        left_time=column(lambda t: t.left.time),
        right_h=column(lambda t: t.right.h_weight), right_s=column(lambda t: t.right.s_weight),
        right_time=column(lambda t: t.right.time),
        time_grid=np.ones(1 if terms else 0))
    return LcuProgram(case=None, params=None, table=table, left_ops=left_ops, right_ops=right_ops,
                      alpha=alpha)


def l1_norm(program: LcuProgram) -> float:
    """y = Σ|coeff|"""
    return program.l1


def max_evolution_time(program: LcuProgram) -> float:
    """Largest |time · weight| over the program's evolutions"""
    t = program.table
    if len(t) == 0:
        return 0.0
    peak_time = float(np.max(np.abs(t.time_grid)))
    left = np.abs(t.left_time) * np.maximum(np.abs(t.left_h), np.abs(t.left_s))
    right = np.abs(t.right_time) * np.maximum(np.abs(t.right_h), np.abs(t.right_s))
    return peak_time * float(max(left.max(), right.max()))


def evolution_unitary(program: LcuProgram, spec: EvolutionSpec) -> CMatrix:
    ops = program.left_ops if spec.side == Side.LEFT else program.right_ops
    return evolution(ops[0], ops[1], spec.h_weight, spec.s_weight, spec.time)


def _apply_dense(program: LcuProgram, c: CMatrix) -> CMatrix:
    cache: Dict[Tuple, CMatrix] = {}

    def unitary(spec: EvolutionSpec) -> CMatrix:
        key = (spec.side, spec.h_weight, spec.s_weight, spec.time)
        if key not in cache:
            cache[key] = evolution_unitary(program, spec)
        return cache[key]

    # Group by evolution pair so repeated pairs cost one sandwich product
    grouped: Dict[Tuple, complex] = {}
    specs: Dict[Tuple, Tuple[EvolutionSpec, EvolutionSpec]] = {}
    for term in program.terms:
        key = (term.left.h_weight, term.left.s_weight, term.left.time,
               term.right.h_weight, term.right.s_weight, term.right.time)
        grouped[key] = grouped.get(key, 0.0) + term.coeff
        specs[key] = (term.left, term.right)

    out = np.zeros_like(c)
    for key, coeff in grouped.items():
        if coeff == 0:
            continue
        left, right = specs[key]
        out += coeff * (unitary(left) @ c @ unitary(right))
    return out


def _joint_eigenbasis(ops: Tuple[CMatrix, CMatrix]) -> Optional[Tuple[CMatrix, np.ndarray, np.ndarray]]:
    h_part, s_part = ops
    if not _pairs_commute(h_part, s_part):
        return None
    u, z = unitary_diagonalize(h_part + 1j * s_part)
    return u, z.real.copy(), z.imag.copy()


def _generic_kernel(program: LcuProgram, left_eigs, right_eigs) -> np.ndarray:
    """K[p, q] = Σ_terms coeff · e^{-iτ_L(h a_H,p + s a_S,p)} e^{-iτ_R(h' b_H,q + s' b_S,q)}"""
    t = program.table
    a_h, a_s = left_eigs
    b_h, b_s = right_eigs
    kernel = np.zeros((a_h.size, b_h.size), dtype=np.complex128)
    for tau in t.time_grid:
        left_phase = np.exp(-1j * tau * t.left_time[:, None]
                            * (t.left_h[:, None] * a_h[None, :] + t.left_s[:, None] * a_s[None, :]))
        right_phase = np.exp(-1j * tau * t.right_time[:, None]
                             * (t.right_h[:, None] * b_h[None, :] + t.right_s[:, None] * b_s[None, :]))
        kernel += np.einsum('f,fp,fq->pq', t.coeff, left_phase, right_phase)
    return kernel


def _closed_form_kernel(program: LcuProgram, left_eigs, right_eigs) -> np.ndarray:
    a_h, a_s = left_eigs
    b_h, b_s = right_eigs
    case = program.case
    if case == CaseTag.B_ZERO:
        row = eval_h_scalar(case, a_h, 0.0, program.params)
        return np.repeat(np.asarray(row)[:, None], b_h.size, axis=1)
    if case == CaseTag.POSITIVE_WITH_ROOTS:
        return eval_h_scalar(case, a_h[:, None], b_h[None, :], program.params)
    return eval_h_scalar(case, a_h[:, None] + b_h[None, :], a_s[:, None] + b_s[None, :],
                         program.params, kernel=program.kernel, skew_sign=program.skew_sign,
                         form=program.form)


def _apply_eigen(program: LcuProgram, c: CMatrix) -> Optional[CMatrix]:
    left = _joint_eigenbasis(program.left_ops)
    right = _joint_eigenbasis(program.right_ops)
    if left is None or right is None:
        return None
    u_a, a_h, a_s = left
    u_b, b_h, b_s = right
    if program.synthesized and program.case is not None:
        kernel = _closed_form_kernel(program, (a_h, a_s), (b_h, b_s))
    else:
        kernel = _generic_kernel(program, (a_h, a_s), (b_h, b_s))
    c_tilde = dagger(u_a) @ c @ u_b
    return u_a @ (kernel * c_tilde) @ dagger(u_b)


def _apply_geometric(program: LcuProgram, c: CMatrix) -> CMatrix:
    """Per frequency: Σ_r e^{-it_r G_L} C e^{-it_r G_R} = V_L[(V_L†CV_R) ∘ S(l_p + m_q)]V_R†"""
    t = program.table
    params = program.params
    l_h, l_s = program.left_ops
    r_h, r_s = program.right_ops
    out = np.zeros_like(c)
    for start in range(0, t.width, GEOMETRIC_BATCH):
        sl = slice(start, min(t.width, start + GEOMETRIC_BATCH))
        g_left = t.left_time[sl, None, None] * (t.left_h[sl, None, None] * l_h[None]
                                                + t.left_s[sl, None, None] * l_s[None])
        g_right = t.right_time[sl, None, None] * (t.right_h[sl, None, None] * r_h[None]
                                                  + t.right_s[sl, None, None] * r_s[None])
        l_vals, v_left = np.linalg.eigh(g_left)
        m_vals, v_right = np.linalg.eigh(g_right)
        c_tilde = np.conj(np.swapaxes(v_left, 1, 2)) @ c[None] @ v_right
        sums = geometric_r_sum(l_vals[:, :, None] + m_vals[:, None, :], params.delta_t, params.r_count)
        blocks = v_left @ (sums * c_tilde) @ np.conj(np.swapaxes(v_right, 1, 2))
        out += np.einsum('f,fpq->pq', t.coeff[sl], blocks)
    return out


def apply_lcu(program: LcuProgram, c, method: str = 'auto',
              term_budget: Optional[int] = None) -> CMatrix:
    """
    Reconstruct X̂ = Σ coeff_i V_i C W_i

    Args:
        program: LCU program
        c: Right-hand side
        method: 'dense' (term by term, ground truth), 'eigen' (joint eigenbasis of
            commuting generators), 'geometric' (closed-form r-sums per frequency) or 'auto'
        term_budget: Override of the configured term cap

    Returns:
        The reconstructed matrix
    """
    c = as_cmatrix(c, 'C')
    if c.shape != (program.dim, program.dim):
        raise DimensionError(f"C has shape {c.shape}, program acts on dimension {program.dim}")
    _check_budget(program.term_count, term_budget)
    if program.term_count == 0:
        return np.zeros_like(c)

    if method in ('auto', 'eigen'):
        result = _apply_eigen(program, c)
        if result is not None:
            return result
        if method == 'eigen':
            raise InvalidInstanceError("Generators are not jointly diagonalizable", stage='reconstruction')
    geometric_ok = program.synthesized and program.linear_time and program.params is not None
    if method == 'geometric' or (method == 'auto' and geometric_ok):
        if not geometric_ok:
            raise InvalidInstanceError("Closed-form r-sums need a synthesized linear-time program",
                                       stage='reconstruction')
        return _apply_geometric(program, c)
    return _apply_dense(program, c)


def compare_forms(inst: SylvesterInstance, case: CaseTag, params: DiscretizationParams,
                  kernel: Optional[KernelSpec] = None) -> Dict[str, Any]:
    """Disagreement between the adopted evolution convention and its alternative"""
    if case == CaseTag.NORMAL:
        adopted = apply_lcu(synth_normal(inst, params, form='lemma'), inst.c)
        alternative = apply_lcu(synth_normal(inst, params, form='main'), inst.c)
    elif case == CaseTag.POSITIVE_HERMITIAN_PART:
        adopted = apply_lcu(synth_pos_herm(inst, params, kernel, skew_sign=1.0), inst.c)
        alternative = apply_lcu(synth_pos_herm(inst, params, kernel, skew_sign=-1.0), inst.c)
    else:
        raise InvalidInstanceError(f"No alternative form for case {case.value}")
    scale = max(spectral_norm(adopted), 1e-300)
    return {
        'case': case.value,
        'difference': spectral_norm(adopted - alternative),
        'relative_difference': spectral_norm(adopted - alternative) / scale,
        'adopted': adopted,
        'alternative': alternative,
    }
