"""
Pipeline Service
Instance generators and the classify → parametrize → synthesize → reconstruct →
verify run that backs every CLI verb
"""

import math
import time
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
import scipy.optimize

from linalg.dense_ops import CMatrix, dagger, is_hermitian, psd_sqrt, spectral_norm
from services.block_encoding import (BLOCK_TOL, BlockEncoding, assemble, dilate, extract_block,
                                     padded_size, verify_block_encoding)
from services.calibration import calibrate
from services.chebyshev_general import solve_general
from services.discretization import DiscretizationParams, default_kernel, manual_params
from services.error_handler import (EXIT_PASS, EXIT_VERIFICATION_FAIL, InvalidInstanceError,
                                    ParameterError, PipelineErrorHandler, SylvesterError,
                                    get_logger)
from services.lcu_synthesis import LcuProgram, apply_lcu, max_evolution_time, synthesize
from services.problem_model import (ZERO_TOL, CaseTag, SylvesterInstance, classify,
                                    extract_dilated_solution, hermitian_dilation, kappa,
                                    recover_rectangular, transpose_instance)
from services.verification_oracle import (ComplexityEstimate, VerificationReport,
                                          complexity_estimate, oracle_solve, solution_norm_bound,
                                          verify_solution)
from solver_config import get_solver_config
from storage.matrix_store import LoadedProblem, MatrixStore, load_problem, sibling_path

MODES = ('lcu-only', 'full-unitary', 'chebyshev', 'estimate')
GENERATOR_KAPPA_RTOL = 0.2
SKEW_WEIGHT = 0.15
NILPOTENT_WEIGHT = 0.1

logger = get_logger(__name__)


def parse_case(name: str) -> CaseTag:
    """Accept the enum value ('BZero') or its name ('B_ZERO'), case-insensitively"""
    key = name.strip().replace('-', '_').lower()
    for tag in CaseTag:
        if key in (tag.value.lower(), tag.name.lower(), tag.name.lower().replace('_', '')):
            return tag
    raise ParameterError(f"Unknown case '{name}'; choose one of {', '.join(t.value for t in CaseTag)}")


@dataclass
class RunConfig:
    """
    One pipeline run.

    Either input_path or generator ('poisson' or a case name) supplies the instance;
    manual_params holds {delta_t, delta_omega, r_count, j_count} when given.
    """
    input_path: Optional[str] = None
    generator: Optional[str] = None
    n: int = 2
    kappa: Optional[float] = None
    epsilon: float = 0.1
    beta: float = 0.5
    mode: str = 'lcu-only'
    term_budget: Optional[int] = None
    manual_params: Optional[Dict[str, Any]] = None
    seed: int = 0
    case: Optional[str] = None
    output_path: Optional[str] = None
    csv_path: Optional[str] = None

    def validate(self) -> None:
        if not 0.0 < self.epsilon < 1.0:
            raise ParameterError(f"epsilon must lie in (0, 1), got {self.epsilon}", stage='config')
        if not 0.0 < self.beta < 1.0:
            raise ParameterError(f"beta must lie in (0, 1), got {self.beta}", stage='config')
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {', '.join(MODES)}", stage='config')
        if self.input_path is None and self.generator is None:
            raise ParameterError("Provide --input or --generate", stage='config')
        if self.term_budget is not None and self.term_budget <= 0:
            raise ParameterError("term budget must be positive", stage='config')
        if self.manual_params is not None:
            missing = {'delta_t', 'delta_omega', 'r_count', 'j_count'} - set(self.manual_params)
            if missing:
                raise ParameterError(f"manual params missing {', '.join(sorted(missing))}", stage='config')

    def to_dict(self) -> Dict[str, Any]:
        return {
            'input_path': self.input_path, 'generator': self.generator, 'n': self.n,
            'kappa': self.kappa, 'epsilon': self.epsilon, 'beta': self.beta, 'mode': self.mode,
            'term_budget': self.term_budget, 'manual_params': self.manual_params, 'seed': self.seed,
            'case': self.case,
        }


@dataclass
class RunOutcome:
    report: Dict[str, Any]
    verification: Optional[VerificationReport] = None
    x_hat: Optional[CMatrix] = None
    solution: Optional[CMatrix] = None
    program: Optional[LcuProgram] = None
    block_encoding: Optional[BlockEncoding] = None
    exit_code: int = EXIT_PASS
    artifacts: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.exit_code == EXIT_PASS


# Generators

def _laplacian(n: int) -> np.ndarray:
    return 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)


def gen_poisson(n: int, source: str = 'sine') -> SylvesterInstance:
    """
    P²X + XP² = C for the Dirichlet second-difference Laplacian

    A = B = L/(2‖L‖) with roots P = √A, so the instance classifies as PositiveWithRoots.
    source is 'sine' (product of first sine modes) or 'zero'.
    """
    if n < 2:
        raise ParameterError(f"Poisson grid needs n ≥ 2, got {n}")
    lap = _laplacian(n)
    a = lap / (2.0 * spectral_norm(lap))
    root = psd_sqrt(a)
    a = root @ root
    if source == 'sine':
        mode = np.sin(math.pi * np.arange(1, n + 1) / (n + 1))
        c = np.outer(mode, mode).astype(np.complex128)
    elif source == 'zero':
        c = np.zeros((n, n), dtype=np.complex128)
    else:
        raise ParameterError(f"Unknown Poisson source '{source}'")
    c_norm = spectral_norm(c)
    return SylvesterInstance(a=a, b=a.copy(), c=c, alpha=c_norm if c_norm > 0 else 1.0,
                             p_a=root, p_b=root.copy(), notes=(f"poisson n={n}",))


def _random_unitary(rng: np.random.Generator, n: int) -> CMatrix:
    """Haar unitary from the QR factors of a complex Gaussian matrix"""
    if n == 1:
        return np.ones((1, 1), dtype=np.complex128)
    q, r = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    diag = np.diag(r)
    return q * (diag / np.abs(diag))


def _random_rhs(rng: np.random.Generator, n: int) -> CMatrix:
    c = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return c / spectral_norm(c)


def _diagonal_in_basis(rng: np.random.Generator, values: np.ndarray) -> CMatrix:
    u = _random_unitary(rng, values.size)
    return (u * values) @ dagger(u)


def _nilpotent(rng: np.random.Generator, n: int) -> CMatrix:
    upper = np.triu(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)), k=1)
    u = _random_unitary(rng, n)
    return u @ (upper / spectral_norm(upper)) @ dagger(u)


def _normal_spectrum(rng: np.random.Generator, n: int, floor: float) -> np.ndarray:
    """Re λ ≥ floor with one eigenvalue exactly at floor, |λ| < 1/2"""
    x = rng.uniform(floor, max(floor, 0.3), n)
    x[0] = floor
    half_width = 0.8 * np.sqrt(np.clip(0.25 - x ** 2, 0.0, None))
    y = rng.uniform(-1.0, 1.0, n) * half_width
    y[0] = 0.0
    return x + 1j * y


def _solve_floor(family, kappa_target: float, upper: float) -> SylvesterInstance:
    """Find the floor parameter f of a one-parameter family with κ(f) = κ_target"""
    def gap(f: float) -> float:
        return math.log(kappa(family(f))) - math.log(kappa_target)

    lower = 1e-6
    if gap(upper) > 0 or gap(lower) < 0:
        raise InvalidInstanceError(f"κ = {kappa_target} is outside what this family can reach",
                                   stage='generate')
    f = scipy.optimize.brentq(gap, lower, upper, xtol=1e-12)
    return family(f)


def gen_random(case: CaseTag, n: int, kappa_target: float, seed: int = 0) -> SylvesterInstance:
    """
    Random instance of the requested case with κ near kappa_target

    Deterministic in seed. Normal, BZero and PositiveWithRoots hit κ exactly through
    their spectra; the non-normal families solve for a diagonal floor with brentq.
    """
    if n < 1:
        raise ParameterError(f"n must be positive, got {n}")
    if kappa_target < 1.0:
        raise ParameterError(f"κ must be at least 1, got {kappa_target}")
    rng = np.random.default_rng(seed)
    floor = 1.0 / (2.0 * kappa_target)

    if case == CaseTag.NORMAL:
        a = _diagonal_in_basis(rng, _normal_spectrum(rng, n, floor))
        b = _diagonal_in_basis(rng, _normal_spectrum(rng, n, floor))
        inst = SylvesterInstance(a=a, b=b, c=_random_rhs(rng, n), alpha=1.0)

    elif case == CaseTag.POSITIVE_WITH_ROOTS:
        roots = []
        for _ in range(2):
            values = rng.uniform(floor, 0.5, n)
            values[0] = floor
            roots.append(_diagonal_in_basis(rng, np.sqrt(values)))
        p_a, p_b = ((r + dagger(r)) / 2 for r in roots)
        inst = SylvesterInstance(a=p_a @ p_a, b=p_b @ p_b, c=_random_rhs(rng, n), alpha=1.0,
                                 p_a=p_a, p_b=p_b)

    elif case == CaseTag.B_ZERO:
        if kappa_target < 2.0:
            raise InvalidInstanceError("B = 0 instances have κ ≥ 2 under ‖A‖ ≤ 1/2", stage='generate')
        magnitudes = rng.uniform(1.0 / kappa_target, 0.5, n)
        signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        values = signs * magnitudes
        values[0] = 1.0 / kappa_target
        if n > 1:
            values[1] = -0.5
        a = _diagonal_in_basis(rng, values.astype(np.complex128))
        a = (a + dagger(a)) / 2
        inst = SylvesterInstance(a=a, b=np.zeros((n, n)), c=_random_rhs(rng, n), alpha=1.0)

    elif case == CaseTag.POSITIVE_HERMITIAN_PART:
        if n < 2:
            raise InvalidInstanceError("A non-normal instance needs n ≥ 2", stage='generate')
        skew = []
        for _ in range(2):
            h = rng.uniform(-1.0, 1.0, n)
            h[0] = 0.0
            skew.append(_diagonal_in_basis(rng, h.astype(np.complex128)))
        nil_a, nil_b = _nilpotent(rng, n), _nilpotent(rng, n)
        c = _random_rhs(rng, n)
        eye = np.eye(n)

        def family(f: float) -> SylvesterInstance:
            a = f * eye + 1j * SKEW_WEIGHT * skew[0] + NILPOTENT_WEIGHT * f * nil_a
            b = f * eye + 1j * SKEW_WEIGHT * skew[1] + NILPOTENT_WEIGHT * f * nil_b
            return SylvesterInstance(a=a, b=b, c=c, alpha=1.0)

        inst = _solve_floor(family, kappa_target, (0.5 - SKEW_WEIGHT) / (1.0 + NILPOTENT_WEIGHT))

    elif case == CaseTag.GENERAL_CHEBYSHEV:
        if n < 2:
            raise InvalidInstanceError("An indefinite non-normal instance needs n ≥ 2", stage='generate')
        rest = np.where(rng.random(n) < 0.5, -1.0, 1.0) * rng.uniform(0.2, 0.35, n)
        rest[1] = -0.3
        nil = _nilpotent(rng, n)
        u = _random_unitary(rng, n)
        shift = 0.05
        c = _random_rhs(rng, n)

        def family(f: float) -> SylvesterInstance:
            values = rest.copy()
            values[0] = f - shift
            a = u @ (np.diag(values) + NILPOTENT_WEIGHT * nil) @ dagger(u)
            return SylvesterInstance(a=a, b=shift * np.eye(n), c=c, alpha=1.0)

        inst = _solve_floor(family, kappa_target, 0.3)
    else:
        raise ParameterError(f"No generator for case {case}")

    got = classify(inst)
    if got != case:
        raise InvalidInstanceError(f"Generated instance classifies as {got.value}, not {case.value}",
                                   stage='generate')
    measured = kappa(inst)
    if abs(measured - kappa_target) > GENERATOR_KAPPA_RTOL * kappa_target:
        raise InvalidInstanceError(f"Generated κ = {measured:.4g} misses target {kappa_target}",
                                   stage='generate')
    return inst.replace(notes=(f"random {case.value} n={n} κ={measured:.6g} seed={seed}",))


# Pipeline

def shrink_to_cap(params: DiscretizationParams, encoding_dim: int, cap: int) -> DiscretizationParams:
    """Truncate R and J (same steps, shorter windows) until the assembled unitary fits the cap"""
    r_count, j_count = params.r_count, params.j_count

    def fits(r: int, j: int) -> bool:
        width = 2 * j + 1
        count = r * (width * width if params.case in (CaseTag.NORMAL, CaseTag.POSITIVE_WITH_ROOTS) else width)
        return padded_size(count) * encoding_dim <= cap

    turn = 0
    while not fits(r_count, j_count):
        if r_count <= 1 and j_count == 0:
            raise ParameterError("No truncation fits the unitary dimension cap", stage='assembly')
        if (turn % 2 == 0 and r_count > 1) or j_count == 0:
            r_count = max(1, r_count // 2)
        else:
            j_count //= 2
        turn += 1
    logger.info(f"Full-unitary grids shrunk to R={r_count}, J={j_count}")
    return manual_params(params.case, params.delta_t, params.delta_omega, r_count, j_count,
                         kappa=params.kappa, epsilon=params.epsilon, beta=params.beta,
                         c_norm=params.c_norm)


class SylvesterPipeline:
    """
    Runs the solver stages for one configuration:
    - load or generate the instance
    - classify, mirror (A = 0) or dilate (non-Hermitian A, B = 0)
    - calibrate or take manual grids, synthesize, reconstruct
    - verify against the oracle and write artifacts
    """

    def __init__(self, store: Optional[MatrixStore] = None):
        self.store = store or MatrixStore()
        self.error_handler = PipelineErrorHandler()

    def load(self, config: RunConfig) -> LoadedProblem:
        self.error_handler.enter_stage('load')
        if config.input_path is not None:
            return load_problem(config.input_path)
        try:
            if config.generator.lower() == 'poisson':
                inst = gen_poisson(config.n)
            else:
                if config.kappa is None:
                    raise ParameterError("--kappa is required for random generators", stage='config')
                inst = gen_random(parse_case(config.generator), config.n, config.kappa, config.seed)
        except SylvesterError as e:
            raise e.with_stage('generate')
        return LoadedProblem(instance=inst, source=f"generate:{config.generator}", notes=list(inst.notes))

    def estimate(self, case: CaseTag, kappa_value: float, inst: SylvesterInstance,
                 config: RunConfig) -> ComplexityEstimate:
        c_norm = spectral_norm(inst.c)
        return complexity_estimate(case, kappa_value, inst.n, config.epsilon,
                                   c_norm=c_norm if c_norm > 0 else 1.0, beta=config.beta,
                                   alpha=inst.alpha)

    def _params(self, work: SylvesterInstance, case: CaseTag, kappa_value: float,
                config: RunConfig) -> DiscretizationParams:
        if config.manual_params is not None:
            m = config.manual_params
            c_norm = spectral_norm(work.c)
            return manual_params(case, float(m['delta_t']), float(m['delta_omega']), int(m['r_count']),
                                 int(m['j_count']), kappa=kappa_value, epsilon=config.epsilon,
                                 beta=config.beta if case == CaseTag.POSITIVE_HERMITIAN_PART else None,
                                 c_norm=c_norm if c_norm > 0 else 1.0)
        self.error_handler.enter_stage('calibration')
        try:
            return calibrate(work, case, config.epsilon, budget=config.term_budget, beta=config.beta)
        except SylvesterError as e:
            raise e.with_stage('calibration')

    def run(self, config: RunConfig) -> RunOutcome:
        """Execute one configuration and return its report"""
        started = time.perf_counter()
        config.validate()
        loaded = self.load(config)
        inst = loaded.instance

        self.error_handler.enter_stage('classify')
        try:
            kappa_value = kappa(inst)
            a_zero = spectral_norm(inst.a) <= ZERO_TOL
            if config.case:
                case = parse_case(config.case)
            else:
                case = classify(inst)
        except SylvesterError as e:
            raise e.with_stage('classify')

        report: Dict[str, Any] = {
            'config': config.to_dict(),
            'instance': {'n': inst.n, 'alpha': inst.alpha, 'kappa': kappa_value,
                         'kappa_alpha': kappa_value * inst.alpha, **loaded.to_dict()},
            'case': case.value,
            'mode': config.mode,
        }

        if config.mode == 'estimate':
            estimate = self.estimate(case, kappa_value, inst, config)
            report['estimate'] = estimate.to_dict()
            report['pass'] = True
            return self._finish(RunOutcome(report=report), config, started)

        work, mirrored, dilated = inst, False, False
        if case == CaseTag.B_ZERO and a_zero:
            work, mirrored = transpose_instance(inst), True
        if case == CaseTag.B_ZERO and not is_hermitian(work.a):
            work, dilated = hermitian_dilation(work), True
        report['reductions'] = {'mirrored': mirrored, 'dilated': dilated}

        estimate = self.estimate(case, kappa_value, inst, config)
        report['estimate'] = estimate.to_dict()
        x_oracle = oracle_solve(inst)

        if config.mode == 'chebyshev' or case == CaseTag.GENERAL_CHEBYSHEV:
            self.error_handler.enter_stage('chebyshev')
            try:
                x_hat, plan = solve_general(inst, config.epsilon, kappa_value)
            except SylvesterError as e:
                raise e.with_stage('chebyshev')
            report['chebyshev'] = plan.to_dict()
            verification = verify_solution(inst, x_hat, config.epsilon, kappa_value, estimate,
                                           x_used=plan.coeff_l1 * inst.alpha, x_oracle=x_oracle)
            return self._conclude(report, verification, x_hat, loaded, config, started)

        params = self._params(work, case, kappa_value, config)
        if config.mode == 'full-unitary' and config.manual_params is None:
            params = shrink_to_cap(params, 2 * work.n, get_solver_config().unitary_dim_cap)
        report['params'] = params.to_dict()

        self.error_handler.enter_stage('synthesis')
        try:
            program = synthesize(work, case, params, term_budget=config.term_budget)
        except SylvesterError as e:
            raise e.with_stage('synthesis')
        report['program'] = {
            'term_count': program.term_count,
            'y': program.l1,
            'x': program.rescale,
            'max_evolution_time': max_evolution_time(program),
            'kernel': program.kernel.to_dict() if program.kernel else None,
        }

        self.error_handler.enter_stage('reconstruction')
        be: Optional[BlockEncoding] = None
        if config.mode == 'full-unitary':
            self.error_handler.enter_stage('assembly')
            try:
                be = assemble(program, dilate(work.c, work.alpha))
            except SylvesterError as e:
                raise e.with_stage('assembly')
            dense = apply_lcu(program, work.c, method='dense', term_budget=config.term_budget)
            report['block_check'] = verify_block_encoding(be, dense / program.rescale, BLOCK_TOL)
            report['block_check']['dimension'] = be.dim
            x_work = extract_block(be) * program.rescale
        else:
            x_work = apply_lcu(program, work.c, term_budget=config.term_budget)

        x_hat = extract_dilated_solution(x_work) if dilated else x_work
        if mirrored:
            x_hat = x_hat.T.copy()

        constants = dict(vars(params.constants))
        kernel = program.kernel or (default_kernel(params) if case == CaseTag.POSITIVE_HERMITIAN_PART else None)
        if kernel is not None:
            constants['kernel_normalization'] = kernel.normalization
        verification = verify_solution(inst, x_hat, config.epsilon, kappa_value, estimate,
                                       x_used=program.rescale, x_oracle=x_oracle,
                                       calibrated_constants=constants,
                                       details={'achieved_inverse_error': params.achieved_error,
                                                'calibration_rounds': params.rounds})
        return self._conclude(report, verification, x_hat, loaded, config, started,
                              program=program, block_encoding=be)

    def _conclude(self, report: Dict[str, Any], verification: VerificationReport, x_hat: CMatrix,
                  loaded: LoadedProblem, config: RunConfig, started: float,
                  program: Optional[LcuProgram] = None,
                  block_encoding: Optional[BlockEncoding] = None) -> RunOutcome:
        self.error_handler.enter_stage('verification')
        report['verification'] = verification.to_dict()
        report['norm_bound'] = solution_norm_bound(loaded.instance)
        solution = x_hat
        if loaded.rectangular is not None:
            solution = recover_rectangular(x_hat, loaded.rectangular)
            report['rectangular_solution_shape'] = list(solution.shape)
        passed = verification.passed and report.get('block_check', {}).get('pass', True)
        report['pass'] = passed
        outcome = RunOutcome(report=report, verification=verification, x_hat=x_hat,
                             solution=solution, program=program, block_encoding=block_encoding,
                             exit_code=EXIT_PASS if passed else EXIT_VERIFICATION_FAIL)
        return self._finish(outcome, config, started)

    def _finish(self, outcome: RunOutcome, config: RunConfig, started: float) -> RunOutcome:
        outcome.report['wall_time'] = time.perf_counter() - started
        if config.output_path:
            report_path = self.store.write_report(outcome.report, config.output_path)
            outcome.artifacts.append(report_path)
            outcome.artifacts.extend(self.write_artifacts(outcome, report_path))
        if config.csv_path and outcome.verification is not None:
            outcome.artifacts.append(self.store.append_rows([csv_row(outcome.report)], config.csv_path))
        logger.info(f"Run finished: case={outcome.report['case']}, pass={outcome.report['pass']}")
        return outcome

    def write_artifacts(self, outcome: RunOutcome, report_path: str) -> List[str]:
        """Program, solution and (full-unitary mode) block-encoding next to the report"""
        self.error_handler.enter_stage('artifacts')
        paths = []
        if outcome.program is not None:
            paths.append(self.store.write_artifact(outcome.program.to_dict(), report_path, 'program'))
        if outcome.solution is not None:
            paths.append(self.store.export_matrix(outcome.solution, sibling_path(report_path, 'x_hat')))
        if outcome.block_encoding is not None:
            paths.append(self.store.write_artifact(outcome.block_encoding.to_dict(), report_path, 'unitary'))
        return paths

    def sweep(self, base: RunConfig, kappas: Iterable[float]) -> List[Dict[str, Any]]:
        """One generated run per κ; failed runs are logged and skipped"""
        rows = []
        for kappa_target in kappas:
            config = replace(base, kappa=float(kappa_target), output_path=None)
            try:
                outcome = self.run(config)
            except SylvesterError as e:
                record = self.error_handler.capture_error(e, {'kappa': kappa_target})
                logger.warning(f"Sweep point κ={kappa_target} failed in {record['stage']}: {e}")
                continue
            rows.append(csv_row(outcome.report))
        return rows


def csv_row(report: Dict[str, Any]) -> Dict[str, Any]:
    verification = report.get('verification', {})
    program = report.get('program', {})
    chebyshev = report.get('chebyshev', {})
    return {
        'case': report['case'],
        'n': report['instance']['n'],
        'kappa': report['instance']['kappa'],
        'epsilon': report['config']['epsilon'],
        'y': program.get('y', chebyshev.get('coeff_l1')),
        'x': program.get('x', verification.get('x_used')),
        'mult_err': verification.get('mult_err'),
        'residual': verification.get('residual_rel'),
        'q_est': report.get('estimate', {}).get('q_est'),
        'term_count': program.get('term_count', (chebyshev.get('j0', -1) + 1) if chebyshev else None),
        'max_evolution_time': program.get('max_evolution_time'),
        'wall_time': report.get('wall_time'),
        'pass': report.get('pass'),
    }


# Global instance
pipeline = None


def get_pipeline() -> SylvesterPipeline:
    """Get global pipeline instance"""
    global pipeline
    if pipeline is None:
        pipeline = SylvesterPipeline()
    return pipeline
