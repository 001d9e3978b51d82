"""
Stage-tagged errors and exit codes
"""

import logging

from services.error_handler import (EXIT_BUDGET, EXIT_USAGE, BudgetExhausted, DimensionError,
                                    PipelineErrorHandler, SingularQError, TermBudgetExceeded,
                                    get_logger)


class TestErrors:

    def test_exit_codes(self):
        assert DimensionError("x").exit_code == EXIT_USAGE
        assert SingularQError("x").exit_code == EXIT_BUDGET
        assert TermBudgetExceeded(20, 10).exit_code == EXIT_BUDGET
        assert BudgetExhausted(0.5, 0.1).exit_code == EXIT_BUDGET

    def test_with_stage_keeps_first_stage(self):
        error = DimensionError("x", stage='load').with_stage('classify')
        assert error.stage == 'load'
        assert DimensionError("x").with_stage('classify').stage == 'classify'

    def test_budget_context(self):
        error = TermBudgetExceeded(20, 10, stage='synthesis')
        assert error.context == {'term_count': 20, 'budget': 10}

    def test_logger_namespace(self):
        assert get_logger('services.pipeline').name == 'sylvester_lcu.pipeline'
        assert isinstance(get_logger('x'), logging.Logger)


class TestPipelineErrorHandler:

    def test_capture_uses_error_stage(self):
        handler = PipelineErrorHandler()
        handler.enter_stage('synthesis')
        record = handler.capture_error(SingularQError("singular", stage='classify'), {'n': 2})
        assert record['stage'] == 'classify'
        assert record['exit_code'] == EXIT_BUDGET
        assert record['context'] == {'n': 2}

    def test_capture_falls_back_to_current_stage(self):
        handler = PipelineErrorHandler()
        handler.enter_stage('assembly')
        record = handler.capture_error(RuntimeError("boom"))
        assert record['stage'] == 'assembly'
        assert record['exit_code'] == EXIT_BUDGET

    def test_plain_value_errors_are_usage(self):
        assert PipelineErrorHandler.exit_code_for(ValueError("bad")) == EXIT_USAGE

    def test_summary(self):
        handler = PipelineErrorHandler()
        handler.capture_error(DimensionError("a", stage='load'))
        handler.capture_error(DimensionError("b", stage='classify'))
        summary = handler.get_error_summary()
        assert summary['errors_captured'] == 2
        assert summary['stages'] == ['classify', 'load']
