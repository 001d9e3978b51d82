"""
Error Handling and Logging
Stage-tagged exceptions for the solver pipeline plus the capture log the CLI
uses to turn failures into exit codes
"""

import logging
import os
import time
import traceback
from datetime import datetime
from typing import Any, Dict, List, Optional

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

EXIT_PASS = 0
EXIT_VERIFICATION_FAIL = 1
EXIT_USAGE = 2
EXIT_BUDGET = 3


class SylvesterError(Exception):
    """Base error; carries the pipeline stage it was raised in"""

    exit_code = EXIT_BUDGET

    def __init__(self, message: str, stage: Optional[str] = None,
                 context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.stage = stage
        self.context = context or {}

    def with_stage(self, stage: str) -> 'SylvesterError':
        if self.stage is None:
            self.stage = stage
        return self


class DimensionError(SylvesterError):
    exit_code = EXIT_USAGE


class NonFiniteError(SylvesterError):
    exit_code = EXIT_USAGE


class NormCutoffError(SylvesterError):
    pass


class NotPsdError(SylvesterError):
    exit_code = EXIT_USAGE


class SingularQError(SylvesterError):
    pass


class InvalidInstanceError(SylvesterError):
    exit_code = EXIT_USAGE


class ParameterError(SylvesterError):
    exit_code = EXIT_USAGE


class InstanceParseError(SylvesterError):
    exit_code = EXIT_USAGE


class DimensionCapExceeded(SylvesterError):
    pass


class ConventionError(SylvesterError):
    """The vectorization convention failed its startup self-test"""


class TermBudgetExceeded(SylvesterError):

    def __init__(self, term_count: int, budget: int, stage: Optional[str] = None):
        super().__init__(f"LCU needs {term_count} terms, budget is {budget}",
                         stage=stage, context={'term_count': term_count, 'budget': budget})
        self.term_count = term_count
        self.budget = budget


class BudgetExhausted(SylvesterError):

    def __init__(self, best_error: float, target: float, params: Any = None,
                 stage: Optional[str] = None):
        super().__init__(
            f"Calibration stopped at error {best_error:.3e} (target {target:.3e})",
            stage=stage, context={'best_error': best_error, 'target': target})
        self.best_error = best_error
        self.target = target
        self.params = params


_configured = False


def setup_logging(level: str = 'INFO', log_dir: Optional[str] = None) -> logging.Logger:
    """Configure the package logger once: console handler plus optional file log"""
    global _configured
    logger = logging.getLogger('sylvester_lcu')
    if _configured:
        logger.setLevel(getattr(logging, level, logging.INFO))
        return logger

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logger.addHandler(console_handler)

    if log_dir:
        os.makedirs(log_dir, exist_ok=True)
        file_handler = logging.FileHandler(
            os.path.join(log_dir, f'sylvester-{datetime.now().strftime("%Y%m%d-%H%M%S")}.log'))
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(file_handler)

    logger.setLevel(getattr(logging, level, logging.INFO))
    logger.propagate = False
    _configured = True
    return logger


def get_logger(name: str) -> logging.Logger:
    """Child logger under the package logger"""
    return logging.getLogger(f'sylvester_lcu.{name.rsplit(".", 1)[-1]}')


class PipelineErrorHandler:
    """Captures stage-tagged errors raised while running the solver pipeline"""

    def __init__(self):
        self.logger = get_logger('PipelineErrorHandler')
        self.error_log: List[Dict[str, Any]] = []
        self.current_stage: Optional[str] = None

    def enter_stage(self, stage: str) -> None:
        self.current_stage = stage
        self.logger.debug(f"Entering stage: {stage}")

    def capture_error(self, error: Exception, context: Optional[Dict[str, Any]] = None,
                      stage: Optional[str] = None) -> Dict[str, Any]:
        """Record an error with its stage and return the capture record"""
        error_id = f"ERR-{int(time.time())}-{len(self.error_log)}"
        error_stage = stage or getattr(error, 'stage', None) or self.current_stage or 'unknown'
        merged_context = dict(getattr(error, 'context', {}) or {})
        merged_context.update(context or {})

        error_info = {
            'error_id': error_id,
            'timestamp': datetime.now().isoformat(),
            'stage': error_stage,
            'error_type': type(error).__name__,
            'error_message': str(error),
            'context': merged_context,
            'exit_code': self.exit_code_for(error),
        }
        self.error_log.append(error_info)

        self.logger.error(f"[{error_id}] {error_stage}: {error_info['error_type']}: {error_info['error_message']}")
        self.logger.debug(f"[{error_id}] Traceback: {traceback.format_exc()}")
        return error_info

    @staticmethod
    def exit_code_for(error: Exception) -> int:
        if isinstance(error, SylvesterError):
            return error.exit_code
        if isinstance(error, (ValueError, KeyError, FileNotFoundError)):
            return EXIT_USAGE
        return EXIT_BUDGET

    def get_error_summary(self) -> Dict[str, Any]:
        return {
            'errors_captured': len(self.error_log),
            'stages': sorted({entry['stage'] for entry in self.error_log}),
            'error_log': self.error_log,
        }
