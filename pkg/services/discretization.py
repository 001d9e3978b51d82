"""
Discretization Service
Quadrature and truncation parameters for the four integral representations of
the Sylvester solution, their kernel weight functions, and closed-form scalar
evaluation of the discretized inverse h(λ)
"""

import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import Any, Dict, Optional

import numpy as np

from services.error_handler import ParameterError, get_logger
from services.problem_model import CaseTag

SQRT_2PI = math.sqrt(2.0 * math.pi)
COUNT_RTOL = 1e-12
# Working-set size (complex entries) for chunked scalar evaluations
CHUNK_ENTRIES = 2_000_000

logger = get_logger(__name__)


@dataclass(frozen=True)
class DiscretizationConstants:
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0
    c4: float = 1.0

    def scaled(self, c1: float = 1.0, c2: float = 1.0, c3: float = 1.0,
               c4: float = 1.0) -> 'DiscretizationConstants':
        return DiscretizationConstants(self.c1 * c1, self.c2 * c2, self.c3 * c3, self.c4 * c4)


# The case-2 frequency step carries a t_R² ‖C‖ ω_J / ε factor that is far finer than
# the aliasing resolution 2π/δ_ω ≈ 2t_R actually needs; its class default starts coarse.
CLASS_DEFAULT_CONSTANTS = {
    CaseTag.NORMAL: DiscretizationConstants(),
    CaseTag.POSITIVE_HERMITIAN_PART: DiscretizationConstants(c2=1e4),
    CaseTag.B_ZERO: DiscretizationConstants(),
    CaseTag.POSITIVE_WITH_ROOTS: DiscretizationConstants(),
}


def _ceil_count(ratio: float) -> int:
    return int(math.ceil(ratio - COUNT_RTOL * max(1.0, ratio)))


def aliasing_bound(case: CaseTag, t_r_max: float) -> float:
    """Smallest admissible 2π/δ_ω for the case"""
    if case == CaseTag.POSITIVE_WITH_ROOTS:
        return 2.0 * math.sqrt(2.0 * t_r_max)
    return 2.0 * t_r_max


@dataclass(frozen=True)
class DiscretizationParams:
    """
    Time/frequency grids t_r = r·δ_t (r < R) and ω_j = j·δ_ω (|j| ≤ J).

    R = ⌈t_R/δ_t⌉, J = ⌈ω_J/δ_ω⌉ and the aliasing guard are checked on construction.
    """
    case: CaseTag
    kappa: float
    epsilon: float
    delta_t: float
    delta_omega: float
    t_r_max: float
    omega_j_max: float
    r_count: int
    j_count: int
    constants: DiscretizationConstants = field(default_factory=DiscretizationConstants)
    beta: Optional[float] = None
    c_norm: Optional[float] = None
    manual: bool = False
    achieved_error: Optional[float] = None
    rounds: int = 0

    def __post_init__(self):
        if self.delta_t <= 0 or self.delta_omega <= 0:
            raise ParameterError("Time and frequency steps must be positive")
        if self.t_r_max < 0 or self.omega_j_max < 0:
            raise ParameterError("Cutoffs must be non-negative")
        if self.r_count != _ceil_count(self.t_r_max / self.delta_t):
            raise ParameterError(f"R = {self.r_count} does not equal ⌈t_R/δ_t⌉")
        if self.j_count != _ceil_count(self.omega_j_max / self.delta_omega):
            raise ParameterError(f"J = {self.j_count} does not equal ⌈ω_J/δ_ω⌉")
        guard = aliasing_bound(self.case, self.t_r_max)
        if 2.0 * math.pi / self.delta_omega < guard * (1.0 - 1e-12):
            raise ParameterError(f"Aliasing guard fails: 2π/δ_ω = {2 * math.pi / self.delta_omega:.4g} < {guard:.4g}")
        if self.case == CaseTag.POSITIVE_HERMITIAN_PART and self.beta is not None \
                and not 0.0 < self.beta < 1.0:
            raise ParameterError(f"beta must lie in (0, 1), got {self.beta}")

    def times(self) -> np.ndarray:
        return np.arange(self.r_count) * self.delta_t

    def omegas(self) -> np.ndarray:
        return np.arange(-self.j_count, self.j_count + 1) * self.delta_omega

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['case'] = self.case.value
        return data


def _check_common(kappa: float, epsilon: float) -> None:
    if kappa < 1.0 - 1e-9:
        raise ParameterError(f"kappa must be ≥ 1, got {kappa}")
    if not 0.0 < epsilon < 1.0:
        raise ParameterError(f"epsilon must lie in (0, 1), got {epsilon}")


def _finish(case: CaseTag, kappa: float, epsilon: float, delta_t: float, delta_omega: float,
            t_r_max: float, omega_j_max: float, constants: DiscretizationConstants,
            **extra) -> DiscretizationParams:
    guard = aliasing_bound(case, t_r_max)
    if 2.0 * math.pi / delta_omega < guard:
        shrink = (2.0 * math.pi / guard) / delta_omega
        logger.debug(f"Aliasing guard lowers δ_ω by {shrink:.4g} for {case.value}")
        delta_omega *= shrink
        constants = replace(constants, c2=constants.c2 * shrink)
    return DiscretizationParams(
        case=case, kappa=kappa, epsilon=epsilon, delta_t=delta_t, delta_omega=delta_omega,
        t_r_max=t_r_max, omega_j_max=omega_j_max,
        r_count=_ceil_count(t_r_max / delta_t), j_count=_ceil_count(omega_j_max / delta_omega),
        constants=constants, **extra)


def params_normal(kappa: float, epsilon: float,
                  constants: Optional[DiscretizationConstants] = None) -> DiscretizationParams:
    """
    Grids for a normal Q

    Args:
        kappa: Condition number ‖Q⁻¹‖
        epsilon: Target multiplicative error
        constants: c1..c4 (unit by default)

    Returns:
        δ_t = c1 ε/√log(κ/ε), δ_ω = c2/(κ√log(1/ε)), t_R = c3 κ√log(1/ε), ω_J = c4 √log(κ/ε)
    """
    _check_common(kappa, epsilon)
    c = constants or DiscretizationConstants()
    log_inv = math.log(1.0 / epsilon)
    log_ratio = math.log(kappa / epsilon)
    return _finish(CaseTag.NORMAL, kappa, epsilon,
                   delta_t=c.c1 * epsilon / math.sqrt(log_ratio),
                   delta_omega=c.c2 / (kappa * math.sqrt(log_inv)),
                   t_r_max=c.c3 * kappa * math.sqrt(log_inv),
                   omega_j_max=c.c4 * math.sqrt(log_ratio),
                   constants=c)


def params_pos_herm(kappa: float, c_norm: float, epsilon: float, beta: float = 0.5,
                    constants: Optional[DiscretizationConstants] = None) -> DiscretizationParams:
    """
    Grids for Q with positive Hermitian part, computed in dependency order
    t_R → ω_J → δ_ω
    """
    _check_common(kappa, epsilon)
    if not 0.0 < beta < 1.0:
        raise ParameterError(f"beta must lie in (0, 1), got {beta}")
    if c_norm <= 0:
        raise ParameterError(f"‖C‖ must be positive, got {c_norm}")
    c = constants or CLASS_DEFAULT_CONSTANTS[CaseTag.POSITIVE_HERMITIAN_PART]
    t_r_max = c.c3 * kappa * math.log(kappa * c_norm / epsilon)
    omega_j_max = c.c4 * math.log(t_r_max * c_norm / epsilon) ** (1.0 / beta)
    return _finish(CaseTag.POSITIVE_HERMITIAN_PART, kappa, epsilon,
                   delta_t=c.c1 * epsilon / (kappa * c_norm),
                   delta_omega=c.c2 * epsilon / (omega_j_max * c_norm * t_r_max ** 2),
                   t_r_max=t_r_max, omega_j_max=omega_j_max, constants=c,
                   beta=beta, c_norm=c_norm)


def params_bzero(kappa: float, epsilon: float,
                 constants: Optional[DiscretizationConstants] = None) -> DiscretizationParams:
    _check_common(kappa, epsilon)
    c = constants or DiscretizationConstants()
    root_log = math.sqrt(math.log(1.0 / epsilon))
    return _finish(CaseTag.B_ZERO, kappa, epsilon,
                   delta_t=c.c1 * epsilon / root_log,
                   delta_omega=c.c2 / (kappa * root_log),
                   t_r_max=c.c3 * kappa * root_log,
                   omega_j_max=c.c4 * root_log,
                   constants=c)


def params_positive(kappa: float, epsilon: float,
                    constants: Optional[DiscretizationConstants] = None) -> DiscretizationParams:
    _check_common(kappa, epsilon)
    c = constants or DiscretizationConstants()
    log_inv = math.log(1.0 / epsilon)
    return _finish(CaseTag.POSITIVE_WITH_ROOTS, kappa, epsilon,
                   delta_t=c.c1 * epsilon,
                   delta_omega=c.c2 / math.sqrt(kappa * log_inv),
                   t_r_max=c.c3 * kappa * log_inv,
                   omega_j_max=c.c4 * math.sqrt(math.log(kappa / epsilon)),
                   constants=c)


def params_for_case(case: CaseTag, kappa: float, epsilon: float,
                    constants: Optional[DiscretizationConstants] = None,
                    c_norm: float = 1.0, beta: float = 0.5) -> DiscretizationParams:
    if case == CaseTag.NORMAL:
        return params_normal(kappa, epsilon, constants)
    if case == CaseTag.POSITIVE_HERMITIAN_PART:
        return params_pos_herm(kappa, c_norm, epsilon, beta, constants)
    if case == CaseTag.B_ZERO:
        return params_bzero(kappa, epsilon, constants)
    if case == CaseTag.POSITIVE_WITH_ROOTS:
        return params_positive(kappa, epsilon, constants)
    raise ParameterError(f"No quadrature grid for case {case.value}")


def manual_params(case: CaseTag, delta_t: float, delta_omega: float, r_count: int, j_count: int,
                  kappa: float = 1.0, epsilon: float = 0.5, beta: Optional[float] = None,
                  c_norm: Optional[float] = None) -> DiscretizationParams:
    """Explicit grids (full-unitary runs); t_R = R·δ_t and ω_J = J·δ_ω"""
    if r_count < 0 or j_count < 0:
        raise ParameterError("R and J must be non-negative")
    if case == CaseTag.POSITIVE_HERMITIAN_PART and beta is None:
        beta = 0.5
    return DiscretizationParams(
        case=case, kappa=kappa, epsilon=epsilon, delta_t=delta_t, delta_omega=delta_omega,
        t_r_max=r_count * delta_t, omega_j_max=j_count * delta_omega,
        r_count=r_count, j_count=j_count, beta=beta, c_norm=c_norm, manual=True)


def term_count(params: DiscretizationParams) -> int:
    width = 2 * params.j_count + 1
    if params.case in (CaseTag.NORMAL, CaseTag.POSITIVE_WITH_ROOTS):
        return params.r_count * width * width
    return params.r_count * width


class KernelKind(str, Enum):
    GAUSSIAN = 'Gaussian'
    HERMITE_ONE = 'HermiteOne'
    LCHS_BETA = 'LchsBeta'


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind
    beta: Optional[float] = None
    normalization: float = 1.0

    def __post_init__(self):
        if self.normalization <= 0:
            raise ParameterError("Kernel normalization must be positive")
        if self.kind == KernelKind.LCHS_BETA and not (self.beta is not None and 0.0 < self.beta < 1.0):
            raise ParameterError(f"LCHS kernel needs beta in (0, 1), got {self.beta}")

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind.value, 'beta': self.beta, 'normalization': self.normalization}


def lchs_kernel(omega, beta: float, normalization: float = 1.0):
    """normalization · (1/2π) · e^{-(1+iω)^β} / (1 - iω)"""
    if not 0.0 < beta < 1.0:
        raise ParameterError(f"beta must lie in (0, 1), got {beta}")
    w = np.asarray(omega, dtype=float)
    value = normalization * np.exp(-np.power(1.0 + 1j * w, beta)) / (2.0 * math.pi * (1.0 - 1j * w))
    return complex(value) if value.ndim == 0 else value


def lchs_modulus(omega, beta: float):
    """|f̂(ω)| = e^{-(ω²+1)^{β/2} cos(β atan ω)} / (2π √(ω²+1))"""
    w = np.asarray(omega, dtype=float)
    value = np.exp(-(w ** 2 + 1.0) ** (beta / 2.0) * np.cos(beta * np.arctan(w))) \
        / (2.0 * math.pi * np.sqrt(w ** 2 + 1.0))
    return float(value) if value.ndim == 0 else value


def kernel_values(kernel: KernelSpec, omegas: np.ndarray) -> np.ndarray:
    if kernel.kind == KernelKind.GAUSSIAN:
        return kernel.normalization * np.exp(-omegas ** 2 / 2.0)
    if kernel.kind == KernelKind.HERMITE_ONE:
        return kernel.normalization * omegas * np.exp(-omegas ** 2 / 2.0)
    return lchs_kernel(omegas, kernel.beta, kernel.normalization)


def lchs_quadrature(kernel: KernelSpec, t_values, delta_omega: float, omega_max: float) -> np.ndarray:
    """δ_ω Σ_{|j| ≤ J} f̂(ω_j) e^{-iω_j t}, which approximates e^{-t} for t ≥ 0"""
    j_count = _ceil_count(omega_max / delta_omega)
    omegas = np.arange(-j_count, j_count + 1) * delta_omega
    weights = kernel_values(kernel, omegas)
    t = np.atleast_1d(np.asarray(t_values, dtype=float))
    return delta_omega * np.exp(-1j * np.outer(t, omegas)) @ weights


@lru_cache(maxsize=16)
def calibrate_lchs_normalization(beta: float, delta_omega: float = 0.1, omega_max: float = 200.0,
                                 t_max: float = 5.0, samples: int = 51) -> KernelSpec:
    """
    Fit the kernel scale so the scalar quadrature reproduces e^{-t} on [0, t_max]

    The closed-form least-squares scale lands on e^{2^β}, the residue factor at ω = -i.
    """
    raw = KernelSpec(KernelKind.LCHS_BETA, beta=beta, normalization=1.0)
    t = np.linspace(0.0, t_max, samples)
    approx = lchs_quadrature(raw, t, delta_omega, omega_max)
    target = np.exp(-t)
    scale = float(np.sum(np.real(np.conj(approx) * target)) / np.sum(np.abs(approx) ** 2))
    logger.info(f"LCHS kernel normalization for beta={beta}: {scale:.6f} (e^(2^beta) = {math.exp(2.0 ** beta):.6f})")
    return KernelSpec(KernelKind.LCHS_BETA, beta=beta, normalization=scale)


def kernel_l1(kernel: KernelSpec, params: DiscretizationParams) -> float:
    """δ_ω Σ_j |f̂(ω_j)| over the case grid"""
    return float(params.delta_omega * np.sum(np.abs(kernel_values(kernel, params.omegas()))))


def comb_check(delta_omega: float) -> float:
    """(δ_ω/√2π) Σ_j e^{-ω_j²/2} - 1, summed until terms drop below 1e-18"""
    if delta_omega <= 0:
        raise ParameterError("delta_omega must be positive")
    terms = [1.0]
    j = 1
    while True:
        term = math.exp(-(j * delta_omega) ** 2 / 2.0)
        if term < 1e-18:
            break
        terms.extend((term, term))
        j += 1
    return delta_omega / SQRT_2PI * math.fsum(terms) - 1.0


def comb_check_rhs(delta_omega: float) -> float:
    """2 Σ_{k≥1} e^{-(2πk/δ_ω)²/2}"""
    terms = []
    k = 1
    while True:
        term = math.exp(-(2.0 * math.pi * k / delta_omega) ** 2 / 2.0)
        if term < 1e-300 or (terms and term < 1e-18 * terms[0]):
            break
        terms.append(term)
        k += 1
    return 2.0 * math.fsum(terms)


def gaussian_profile(s_values, delta_omega: float, j_count: int) -> np.ndarray:
    """g(s) = (δ_ω/√2π) Σ_{|j|≤J} e^{-ω_j²/2} e^{-iω_j s}; real because the grid is symmetric"""
    s = np.asarray(s_values, dtype=float)
    omegas = np.arange(1, j_count + 1) * delta_omega
    weights = np.exp(-omegas ** 2 / 2.0)
    flat = s.reshape(-1)
    out = np.empty(flat.size)
    step = max(1, CHUNK_ENTRIES // max(1, omegas.size))
    for start in range(0, flat.size, step):
        block = flat[start:start + step]
        out[start:start + step] = 1.0 + 2.0 * np.cos(np.outer(block, omegas)) @ weights
    return (delta_omega / SQRT_2PI * out).reshape(s.shape)


def hs_quadrature(p, t: float, delta_omega: float, omega_max: float) -> np.ndarray:
    """Grid approximation of e^{-t p²} via the Gaussian superposition of e^{-iω√(2t)p}"""
    return gaussian_profile(math.sqrt(2.0 * t) * np.asarray(p, dtype=float), delta_omega,
                            _ceil_count(omega_max / delta_omega))


def geometric_r_sum(theta, delta_t: float, r_count: int) -> np.ndarray:
    """Σ_{r<R} e^{-i r δ_t θ} in closed form; equals R where δ_t θ ≡ 0 (mod 2π)"""
    x = np.asarray(theta, dtype=float) * delta_t
    half = np.sin(x / 2.0)
    small = np.abs(half) < 1e-12
    safe = np.where(small, 1.0, half)
    dirichlet = np.sin(r_count * x / 2.0) / safe
    value = dirichlet * np.exp(-0.5j * (r_count - 1) * x)
    return np.where(small, complex(r_count), value)


def positive_time_profile(p_values, params: DiscretizationParams) -> np.ndarray:
    """G[k, r] = g(√(2 t_r) p_k) for the roots case"""
    p = np.asarray(p_values, dtype=float).reshape(-1)
    roots = np.sqrt(2.0 * params.times())
    return gaussian_profile(np.outer(p, roots), params.delta_omega, params.j_count)


def _chunks(total: int, width: int):
    step = max(1, CHUNK_ENTRIES // max(1, width))
    for start in range(0, total, step):
        yield slice(start, min(total, start + step))


def _h_normal(lam_h: np.ndarray, lam_s: np.ndarray, params: DiscretizationParams,
              form: str) -> np.ndarray:
    omegas = params.omegas()
    gauss = np.exp(-omegas ** 2 / 2.0)
    w_h, w_s = omegas[:, None], omegas[None, :]
    if form == 'main':
        pair = 1j * w_h + w_s
    else:
        pair = 1j * (w_h - 1j * w_s)
    coeff = (params.delta_t * params.delta_omega ** 2 / (2.0 * math.pi)) * pair * np.outer(gauss, gauss)
    out = np.empty(lam_h.size, dtype=np.complex128)
    for sl in _chunks(lam_h.size, coeff.size):
        theta = lam_h[sl, None, None] * w_h[None] + lam_s[sl, None, None] * w_s[None]
        out[sl] = np.einsum('jk,pjk->p', coeff, geometric_r_sum(theta, params.delta_t, params.r_count))
    return out


def _h_bzero(lam: np.ndarray, params: DiscretizationParams) -> np.ndarray:
    omegas = params.omegas()
    coeff = (1j / SQRT_2PI) * params.delta_t * params.delta_omega * omegas * np.exp(-omegas ** 2 / 2.0)
    out = np.empty(lam.size, dtype=np.complex128)
    for sl in _chunks(lam.size, omegas.size):
        out[sl] = geometric_r_sum(np.outer(lam[sl], omegas), params.delta_t, params.r_count) @ coeff
    return out


def _h_pos_herm(lam_h: np.ndarray, lam_s: np.ndarray, params: DiscretizationParams,
                kernel: KernelSpec, skew_sign: float) -> np.ndarray:
    omegas = params.omegas()
    coeff = params.delta_t * params.delta_omega * kernel_values(kernel, omegas)
    out = np.empty(lam_h.size, dtype=np.complex128)
    for sl in _chunks(lam_h.size, omegas.size):
        theta = np.outer(lam_h[sl], omegas) + skew_sign * lam_s[sl, None]
        out[sl] = geometric_r_sum(theta, params.delta_t, params.r_count) @ coeff
    return out


def _h_positive(p_a: np.ndarray, p_b: np.ndarray, params: DiscretizationParams) -> np.ndarray:
    if params.r_count == 0:
        return np.zeros(p_a.size, dtype=np.complex128)
    profile_a = positive_time_profile(p_a, params)
    profile_b = positive_time_profile(p_b, params)
    return (params.delta_t * np.sum(profile_a * profile_b, axis=1)).astype(np.complex128)


def default_kernel(params: DiscretizationParams) -> KernelSpec:
    return calibrate_lchs_normalization(params.beta if params.beta is not None else 0.5)


def eval_h_scalar(case: CaseTag, lam_h, lam_s, params: DiscretizationParams,
                  kernel: Optional[KernelSpec] = None, skew_sign: float = 1.0,
                  form: str = 'lemma'):
    """
    Discretized inverse evaluated on scalar eigenvalue data

    Args:
        case: Which discretized sum to evaluate
        lam_h: Hermitian-part eigenvalue (BZero: the eigenvalue of A; roots case: eigenvalue of P_A)
        lam_s: Skew-part eigenvalue (ignored for BZero; roots case: eigenvalue of P_B)
        params: Grids
        kernel: Case-2 kernel; calibrated LCHS kernel by default
        skew_sign: +1 for the appendix evolution, -1 for the main-text variant (case 2)
        form: 'lemma' or 'main' coefficient expression (case 1)

    Returns:
        h as a complex scalar or an array broadcast from lam_h, lam_s. The r-sum
        is closed-form except in the roots case, whose time √(2t_r) is not linear in r.
    """
    h_arr, s_arr = np.broadcast_arrays(np.asarray(lam_h, dtype=float), np.asarray(lam_s, dtype=float))
    shape = h_arr.shape
    flat_h = h_arr.reshape(-1)
    flat_s = s_arr.reshape(-1)

    if case == CaseTag.NORMAL:
        out = _h_normal(flat_h, flat_s, params, form)
    elif case == CaseTag.B_ZERO:
        out = _h_bzero(flat_h, params)
    elif case == CaseTag.POSITIVE_HERMITIAN_PART:
        out = _h_pos_herm(flat_h, flat_s, params, kernel or default_kernel(params), skew_sign)
    elif case == CaseTag.POSITIVE_WITH_ROOTS:
        out = _h_positive(flat_h, flat_s, params)
    else:
        raise ParameterError(f"No scalar evaluator for case {case.value}")

    out = out.reshape(shape)
    return complex(out) if out.ndim == 0 else out
