"""
Calibration Service
Greedy refinement of the hidden constants c1..c4 until the discretized inverse
meets its error target inside the term budget
"""

import math
from dataclasses import replace
from typing import Callable, List, Optional, Tuple

import numpy as np

from linalg.dense_ops import herm_split, is_hermitian, spectral_norm
from services.discretization import (CLASS_DEFAULT_CONSTANTS, DiscretizationConstants,
                                     DiscretizationParams, KernelSpec, default_kernel,
                                     eval_h_scalar, params_for_case, term_count)
from services.error_handler import BudgetExhausted, ParameterError, get_logger
from services.lcu_synthesis import apply_lcu, synth_pos_herm
from services.problem_model import CaseTag, SylvesterInstance, kappa as instance_kappa
from services.verification_oracle import oracle_solve
from solver_config import get_solver_config

SAMPLE_COUNT = 8
SAMPLE_SPLITS = (0.0, 0.5, 1.0)

logger = get_logger(__name__)

MOVES: List[Tuple[str, dict]] = [
    ('t_R x2', {'c3': 2.0}),
    ('omega_J x2', {'c4': 2.0}),
    ('delta_t /2', {'c1': 0.5}),
    ('delta_omega /2', {'c2': 0.5}),
    ('joint', {'c1': 0.5, 'c2': 0.5, 'c3': 2.0, 'c4': 2.0}),
]


def error_target(case: CaseTag, epsilon: float, n_dim: int) -> float:
    """ε for the unvectorized case 3; ε/√N where the Frobenius transfer applies"""
    if case == CaseTag.B_ZERO:
        return epsilon
    return epsilon / math.sqrt(n_dim)


def _radial_samples(kappa_value: float) -> np.ndarray:
    return np.geomspace(1.0 / kappa_value, 1.0, SAMPLE_COUNT)


def _normal_points(inst: SylvesterInstance, kappa_value: float) -> np.ndarray:
    eig_q = (np.linalg.eigvals(inst.a)[:, None] + np.linalg.eigvals(inst.b)[None, :]).reshape(-1)
    angles = np.linspace(0.0, 2.0 * math.pi, SAMPLE_COUNT, endpoint=False)
    samples = np.outer(_radial_samples(kappa_value), np.exp(1j * angles)).reshape(-1)
    return np.concatenate([eig_q, samples])


def _bzero_points(inst: SylvesterInstance, kappa_value: float) -> np.ndarray:
    if is_hermitian(inst.a):
        spectrum = np.linalg.eigvalsh(herm_split(inst.a)[0])
    else:
        sigma = np.linalg.svd(inst.a, compute_uv=False)
        spectrum = np.concatenate([sigma, -sigma])
    radial = _radial_samples(kappa_value)
    return np.concatenate([spectrum, radial, -radial])


def _positive_points(inst: SylvesterInstance, kappa_value: float) -> Tuple[np.ndarray, np.ndarray]:
    p_a = np.linalg.eigvalsh(inst.p_a)
    p_b = np.linalg.eigvalsh(inst.p_b)
    grid_a = np.repeat(p_a, p_b.size)
    grid_b = np.tile(p_b, p_a.size)
    radial = _radial_samples(kappa_value)
    sample_a = np.concatenate([np.sqrt(s * radial) for s in SAMPLE_SPLITS])
    sample_b = np.concatenate([np.sqrt((1.0 - s) * radial) for s in SAMPLE_SPLITS])
    return np.concatenate([grid_a, sample_a]), np.concatenate([grid_b, sample_b])


def inverse_error_metric(inst: SylvesterInstance, case: CaseTag, kappa_value: float,
                         kernel: Optional[KernelSpec] = None) -> Callable[[DiscretizationParams], float]:
    """
    Build the error functional minimized during calibration

    Cases 1, 3 and 4 measure max |q·h(q) - 1| over the instance spectrum plus
    samples covering [1/κ, 1]; case 2 measures the dense multiplicative error of
    the reconstructed solution against the oracle.
    """
    if case == CaseTag.NORMAL:
        points = _normal_points(inst, kappa_value)
        return lambda params: float(np.max(np.abs(
            points * eval_h_scalar(case, points.real, points.imag, params) - 1.0)))

    if case == CaseTag.B_ZERO:
        points = _bzero_points(inst, kappa_value)
        return lambda params: float(np.max(np.abs(
            points * eval_h_scalar(case, points, 0.0, params) - 1.0)))

    if case == CaseTag.POSITIVE_WITH_ROOTS:
        p_a, p_b = _positive_points(inst, kappa_value)
        q = p_a ** 2 + p_b ** 2
        return lambda params: float(np.max(np.abs(q * eval_h_scalar(case, p_a, p_b, params) - 1.0)))

    if case == CaseTag.POSITIVE_HERMITIAN_PART:
        x_oracle = oracle_solve(inst)
        x_norm = spectral_norm(x_oracle)

        def dense_error(params: DiscretizationParams) -> float:
            program = synth_pos_herm(inst, params, kernel or default_kernel(params),
                                     term_budget=term_count(params))
            x_hat = apply_lcu(program, inst.c, method='geometric', term_budget=program.term_count)
            gap = spectral_norm(x_hat - x_oracle)
            return gap / x_norm if x_norm > 0 else gap

        return dense_error

    raise ParameterError(f"Case {case.value} has no quadrature to calibrate")


def calibrate(inst: SylvesterInstance, case: CaseTag, epsilon: float, budget: Optional[int] = None,
              beta: float = 0.5, kernel: Optional[KernelSpec] = None,
              rounds: Optional[int] = None) -> DiscretizationParams:
    """
    Refine c1..c4 greedily from the class defaults

    Args:
        inst: Normalized instance of the given case
        case: Quadrature to calibrate
        epsilon: Error target before the per-case √N accounting
        budget: Maximum term count (configured term budget by default)
        beta: LCHS exponent (case 2)
        kernel: Case-2 kernel (calibrated LCHS kernel by default)
        rounds: Refinement rounds (configured default when omitted)

    Returns:
        DiscretizationParams with achieved_error and rounds filled in

    Raises:
        SingularQError: Before any refinement when Q is singular
        BudgetExhausted: Rounds run out, or no candidate fits the budget
    """
    config = get_solver_config()
    budget = config.term_budget if budget is None else budget
    max_rounds = config.calibration_rounds if rounds is None else rounds

    kappa_value = instance_kappa(inst)
    target = error_target(case, epsilon, inst.n)
    c_norm = spectral_norm(inst.c) or 1.0
    constants: DiscretizationConstants = CLASS_DEFAULT_CONSTANTS.get(case, DiscretizationConstants())

    def build(consts: DiscretizationConstants) -> DiscretizationParams:
        return params_for_case(case, kappa_value, epsilon, consts, c_norm=c_norm, beta=beta)

    params = build(constants)
    if term_count(params) > budget:
        raise BudgetExhausted(math.inf, target, params, stage='calibration')
    measure = inverse_error_metric(inst, case, kappa_value, kernel)
    error = measure(params)
    logger.info(f"Calibrating {case.value}: κ={kappa_value:.4g}, target {target:.3e}, "
                f"initial error {error:.3e}, {term_count(params)} terms")

    best_error, best_params = error, params
    completed = 0
    while error > target:
        if completed >= max_rounds:
            raise BudgetExhausted(best_error, target, best_params, stage='calibration')
        choice = None
        for label, move in MOVES:
            candidate = build(params.constants.scaled(**move))
            count = term_count(candidate)
            if count > budget:
                logger.debug(f"  {label}: {count} terms over budget {budget}")
                continue
            candidate_error = measure(candidate)
            logger.debug(f"  {label}: error {candidate_error:.3e}, {count} terms")
            if choice is None or candidate_error < choice[0]:
                choice = (candidate_error, candidate, label)
        if choice is None:
            raise BudgetExhausted(best_error, target, best_params, stage='calibration')
        error, params, label = choice
        completed += 1
        logger.info(f"Round {completed}: {label} -> error {error:.3e}, {term_count(params)} terms")
        if error < best_error:
            best_error, best_params = error, params

    return replace(params, achieved_error=error, rounds=completed)
