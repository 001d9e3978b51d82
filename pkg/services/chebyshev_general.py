"""
General-case Chebyshev Solver
Expands the odd Chebyshev approximation of 1/x into powers Q†(QQ†)^k and applies
them to C through nested left/right multiplications, never forming Q
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
from scipy.special import gammaln

from linalg.dense_ops import CMatrix, dagger, spectral_norm
from services.error_handler import ParameterError, TermBudgetExceeded, get_logger
from services.problem_model import SylvesterInstance, kappa as instance_kappa

# Public coefficient tables stop at T_81; plans may nest deeper for growth tables
MAX_CHEB_DEGREE_INDEX = 40
MAX_PLAN_J0 = 64
EXACT_TAIL_LIMIT = 30

logger = get_logger(__name__)


@dataclass(frozen=True)
class ChebPlan:
    """
    Power-series plan for 1/Q ≈ Σ_k ξ_k Q†(QQ†)^k.

    coeff_l1 = Σ|ξ_k|; within_bound records coeff_l1 < (8/3)·2^{2 j0 + 2}.
    """
    kappa: float
    epsilon: float
    b: int
    j0: int
    xi: List[float]
    coeff_l1: float
    tail_weights: List[float] = field(default_factory=list)

    @property
    def bound(self) -> float:
        return coefficient_bound(self.j0)

    @property
    def within_bound(self) -> bool:
        return self.coeff_l1 < self.bound

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kappa': self.kappa,
            'epsilon': self.epsilon,
            'b': self.b,
            'j0': self.j0,
            'xi': list(self.xi),
            'coeff_l1': self.coeff_l1,
            'coeff_bound': self.bound,
            'within_bound': self.within_bound,
        }


def cheb_odd_coeffs(j: int) -> List[int]:
    """
    Exact coefficients of x^{2k+1}, k = 0..j, in T_{2j+1}(x)

    Args:
        j: Index of the odd polynomial T_{2j+1}

    Returns:
        List of Python integers, lowest power first
    """
    if j < 0:
        raise ParameterError(f"j must be non-negative, got {j}")
    if j > MAX_CHEB_DEGREE_INDEX:
        raise ParameterError(f"j = {j} exceeds the coefficient guard {MAX_CHEB_DEGREE_INDEX}")
    return _odd_coeffs(j)


def _odd_coeffs(j: int) -> List[int]:
    degree = 2 * j + 1
    prev, cur = [1], [0, 1]
    for _ in range(1, degree):
        nxt = [0] * (len(cur) + 1)
        for power, value in enumerate(cur):
            nxt[power + 1] += 2 * value
        for power, value in enumerate(prev):
            nxt[power] -= value
        prev, cur = cur, nxt
    return [cur[2 * k + 1] for k in range(j + 1)]


def cheb_abs_sum_closed_form(j: int) -> int:
    """
    Σ_k |T_{2j+1,2k+1}| = |T_{2j+1}(i)| = ((1+√2)^n + (1-√2)^n)/2 with n = 2j+1

    Evaluated with the integer recurrence u_{n+1} = 2u_n + u_{n-1}, u_0 = u_1 = 1.
    Coincides with 2^{2j+1} - 1 only for j ≤ 1.
    """
    if j < 0:
        raise ParameterError(f"j must be non-negative, got {j}")
    prev, cur = 1, 1
    for _ in range(2 * j):
        prev, cur = cur, 2 * cur + prev
    return cur


def plan_sizes(kappa: float, epsilon: float) -> tuple:
    """b = ⌈κ² ln(κ/ε)⌉ and j0 = ⌈√(b ln(4b/ε))⌉"""
    if kappa < 1.0 - 1e-9:
        raise ParameterError(f"kappa must be ≥ 1, got {kappa}")
    if not 0.0 < epsilon < 1.0:
        raise ParameterError(f"epsilon must lie in (0, 1), got {epsilon}")
    b = int(math.ceil(kappa ** 2 * math.log(kappa / epsilon)))
    j0 = int(math.ceil(math.sqrt(b * math.log(4.0 * b / epsilon))))
    return b, j0


def coefficient_bound(j0: int) -> float:
    """(8/3)·2^{2 j0 + 2}"""
    return 8.0 / 3.0 * 2.0 ** (2 * j0 + 2)


def binomial_tail(b: int, j: int) -> float:
    """Σ_{i=j+1}^{b} C(2b, b+i) / 2^{2b} in log space"""
    if j >= b:
        return 0.0
    i = np.arange(j + 1, b + 1)
    log_terms = gammaln(2 * b + 1) - gammaln(b + i + 1) - gammaln(b - i + 1) - 2 * b * math.log(2.0)
    return math.fsum(np.exp(log_terms).tolist())


def binomial_tail_exact(b: int, j: int) -> Fraction:
    if b > EXACT_TAIL_LIMIT:
        raise ParameterError(f"Exact binomial tails are limited to b ≤ {EXACT_TAIL_LIMIT}")
    numerator = sum(math.comb(2 * b, b + i) for i in range(j + 1, b + 1))
    return Fraction(numerator, 2 ** (2 * b))


def tail_weights(b: int, j0: int) -> List[float]:
    weights = [binomial_tail(b, j) for j in range(j0 + 1)]
    if b <= EXACT_TAIL_LIMIT:
        for j, value in enumerate(weights):
            exact = float(binomial_tail_exact(b, j))
            if abs(value - exact) > 1e-12 * max(exact, 1e-300) + 1e-300:
                logger.warning(f"Binomial tail mismatch at b={b}, j={j}: {value:.17g} vs {exact:.17g}")
    return weights


def build_plan(kappa: float, epsilon: float) -> ChebPlan:
    """
    Power coefficients of 4 Σ_j (-1)^j w_j T_{2j+1}(x)

    ξ_k = 4 Σ_{j=k}^{j0} (-1)^j w_j T_{2j+1,2k+1} with the signed Chebyshev
    coefficients; w_j is the binomial tail weight.
    """
    b, j0 = plan_sizes(kappa, epsilon)
    if j0 > MAX_PLAN_J0:
        raise TermBudgetExceeded(j0 + 1, MAX_PLAN_J0 + 1, stage='chebyshev')
    weights = tail_weights(b, j0)

    xi = [0.0] * (j0 + 1)
    for j in range(j0 + 1):
        sign = -1.0 if j % 2 else 1.0
        for k, coeff in enumerate(_odd_coeffs(j)):
            xi[k] += 4.0 * sign * weights[j] * float(coeff)

    coeff_l1 = math.fsum(abs(v) for v in xi)
    plan = ChebPlan(kappa=kappa, epsilon=epsilon, b=b, j0=j0, xi=xi, coeff_l1=coeff_l1,
                    tail_weights=weights)
    if not plan.within_bound:
        logger.warning(f"Chebyshev coefficient L1 {coeff_l1:.3e} exceeds (8/3)·2^(2j0+2) = {plan.bound:.3e}")
    logger.info(f"Chebyshev plan κ={kappa:.4g}, ε={epsilon}: b={b}, j0={j0}, Σ|ξ|={coeff_l1:.3e}")
    return plan


def scalar_inverse(plan: ChebPlan, q) -> np.ndarray:
    """Σ_k ξ_k q̄ (q q̄)^k, the plan evaluated on scalars"""
    q = np.asarray(q, dtype=np.complex128)
    modulus_sq = np.abs(q) ** 2
    return np.conj(q) * np.polynomial.polynomial.polyval(modulus_sq, plan.xi)


def annulus_points(kappa: float, count: int = 100, seed: int = 0) -> np.ndarray:
    """Real points of both signs plus complex phases with |q| ∈ [1/κ, 1]"""
    rng = np.random.default_rng(seed)
    radii = np.exp(rng.uniform(math.log(1.0 / kappa), 0.0, count))
    phases = np.zeros(count)
    phases[count // 4: count // 2] = math.pi
    phases[count // 2:] = rng.uniform(0.0, 2.0 * math.pi, count - count // 2)
    return radii * np.exp(1j * phases)


def scalar_inverse_check(plan: ChebPlan, points: Optional[Iterable[complex]] = None) -> Dict[str, Any]:
    q = annulus_points(plan.kappa) if points is None else np.asarray(list(points), dtype=np.complex128)
    errors = np.abs(scalar_inverse(plan, q) - 1.0 / q)
    worst = float(errors.max()) if errors.size else 0.0
    return {'max_error': worst, 'pass': worst <= plan.epsilon, 'points': int(q.size)}


def _forward(inst: SylvesterInstance, m: CMatrix) -> CMatrix:
    return inst.a @ m + m @ inst.b


def _adjoint(inst: SylvesterInstance, m: CMatrix) -> CMatrix:
    return dagger(inst.a) @ m + m @ dagger(inst.b)


def apply_power(inst: SylvesterInstance, k: int) -> CMatrix:
    """unvec(Q†(QQ†)^k vec C): 2k+1 alternating maps, adjoint innermost and outermost"""
    if k < 0:
        raise ParameterError(f"k must be non-negative, got {k}")
    if k > MAX_PLAN_J0:
        raise TermBudgetExceeded(k + 1, MAX_PLAN_J0 + 1, stage='chebyshev')
    m = _adjoint(inst, inst.c)
    for _ in range(k):
        m = _adjoint(inst, _forward(inst, m))
    return m


def solve_general(inst: SylvesterInstance, epsilon: float,
                  kappa_value: Optional[float] = None):
    """
    X̂ = Σ_k ξ_k Q†(QQ†)^k C

    Args:
        inst: Normalized instance (‖A‖, ‖B‖ ≤ 1/2 so the spectrum of Q lies in the unit disk)
        epsilon: Scalar approximation target
        kappa_value: Precomputed κ; computed from Q when omitted

    Returns:
        Tuple (X̂, ChebPlan)
    """
    kappa_value = instance_kappa(inst) if kappa_value is None else kappa_value
    plan = build_plan(max(kappa_value, 1.0), epsilon)

    # cancellation among ξ_k costs roughly coeff_l1 · machine epsilon
    if plan.coeff_l1 * np.finfo(float).eps > epsilon:
        logger.warning(f"Σ|ξ| = {plan.coeff_l1:.3e} leaves no double-precision headroom for ε = {epsilon}")

    power = _adjoint(inst, inst.c)
    x_hat = plan.xi[0] * power
    for k in range(1, plan.j0 + 1):
        power = _adjoint(inst, _forward(inst, power))
        x_hat = x_hat + plan.xi[k] * power
    logger.debug(f"General solve: ‖X̂‖ = {spectral_norm(x_hat):.4e}")
    return x_hat, plan


def coefficient_growth(kappas: Iterable[float], epsilon: float) -> List[Dict[str, Any]]:
    """Σ|ξ_k| across condition numbers at fixed ε"""
    rows = []
    for kappa_value in kappas:
        plan = build_plan(kappa_value, epsilon)
        rows.append({'kappa': kappa_value, 'b': plan.b, 'j0': plan.j0,
                     'coeff_l1': plan.coeff_l1, 'coeff_bound': plan.bound,
                     'within_bound': plan.within_bound})
    return rows
