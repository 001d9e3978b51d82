"""
Solver Configuration Manager for the Sylvester LCU toolkit
Handles environment-driven limits (term budget, dense caps, calibration rounds)
"""
import os
from dataclasses import dataclass, asdict
from typing import Any, Dict, Optional

from services.error_handler import ParameterError, get_logger

try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    def load_dotenv():
        pass

logger = get_logger(__name__)


@dataclass
class SolverConfig:
    term_budget: int
    kron_element_cap: int
    expm_norm_cutoff: float
    unitary_dim_cap: int
    calibration_rounds: int
    log_level: str
    log_dir: Optional[str]


class SolverConfigManager:
    """
    Reads solver limits from the environment:
    - QSYLV_TERM_BUDGET: maximum LCU term count a synthesizer may emit
    - QSYLV_KRON_ELEMENT_CAP: maximum element count of a dense Kronecker product
    - QSYLV_EXPM_NORM_CUTOFF: spectral-norm ceiling for matrix exponentials
    - QSYLV_UNITARY_DIM_CAP: maximum dimension of an assembled block-encoding
    - QSYLV_CALIBRATION_ROUNDS: refinement rounds allowed during calibration
    """

    DEFAULTS = {
        'term_budget': 10_000_000,
        'kron_element_cap': 2 ** 24,
        'expm_norm_cutoff': 1e4,
        'unitary_dim_cap': 4096,
        'calibration_rounds': 8,
        'log_level': 'INFO',
        'log_dir': None,
    }

    def __init__(self, overrides: Optional[Dict[str, Any]] = None):
        self.overrides = overrides or {}
        self.config = self._create_config()

    def _read(self, key: str, env_name: str, cast):
        if key in self.overrides:
            return cast(self.overrides[key])
        raw = os.environ.get(env_name, '')
        if raw == '':
            return self.DEFAULTS[key]
        try:
            return cast(float(raw)) if cast is int else cast(raw)
        except ValueError:
            return self.DEFAULTS[key]

    def _create_config(self) -> SolverConfig:
        return SolverConfig(
            term_budget=self._read('term_budget', 'QSYLV_TERM_BUDGET', int),
            kron_element_cap=self._read('kron_element_cap', 'QSYLV_KRON_ELEMENT_CAP', int),
            expm_norm_cutoff=self._read('expm_norm_cutoff', 'QSYLV_EXPM_NORM_CUTOFF', float),
            unitary_dim_cap=self._read('unitary_dim_cap', 'QSYLV_UNITARY_DIM_CAP', int),
            calibration_rounds=self._read('calibration_rounds', 'QSYLV_CALIBRATION_ROUNDS', int),
            log_level=self._read('log_level', 'QSYLV_LOG_LEVEL', str).upper(),
            log_dir=self.overrides.get('log_dir', os.environ.get('QSYLV_LOG_DIR') or None),
        )

    def validate_configuration(self) -> Dict[str, Any]:
        """Validate solver limits"""
        issues = []
        warnings = []

        if self.config.term_budget <= 0:
            issues.append("Term budget must be positive")
        elif self.config.term_budget > 10 ** 9:
            warnings.append(f"Term budget {self.config.term_budget} exceeds desk scale")

        if self.config.kron_element_cap <= 0:
            issues.append("Kronecker element cap must be positive")

        if self.config.expm_norm_cutoff <= 0:
            issues.append("Exponential norm cutoff must be positive")

        if self.config.unitary_dim_cap < 2:
            issues.append("Unitary dimension cap must be at least 2")
        elif self.config.unitary_dim_cap > 2 ** 13:
            warnings.append("Unitary dimension cap above 8192 needs several GB of memory")

        if self.config.calibration_rounds < 1:
            issues.append("At least one calibration round is required")

        if self.config.log_level not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            warnings.append(f"Unknown log level {self.config.log_level}, INFO will be used")

        return {
            'valid': len(issues) == 0,
            'issues': issues,
            'warnings': warnings,
            'config': asdict(self.config),
        }


# Global instance
solver_config_manager = None


def _checked(manager: SolverConfigManager) -> SolverConfigManager:
    report = manager.validate_configuration()
    for warning in report['warnings']:
        logger.warning(f"Solver configuration: {warning}")
    if not report['valid']:
        raise ParameterError(f"Invalid solver configuration: {'; '.join(report['issues'])}",
                             stage='config', context={'issues': report['issues']})
    return manager


def get_solver_config() -> SolverConfig:
    """Get the process-wide solver configuration"""
    global solver_config_manager
    if solver_config_manager is None:
        solver_config_manager = _checked(SolverConfigManager())
    return solver_config_manager.config


def configure_solver(overrides: Dict[str, Any]) -> SolverConfig:
    """Replace the process-wide configuration with explicit overrides"""
    global solver_config_manager
    solver_config_manager = _checked(SolverConfigManager(overrides))
    return solver_config_manager.config


def reset_solver_config() -> None:
    """Forget the cached configuration so the environment is read again"""
    global solver_config_manager
    solver_config_manager = None
