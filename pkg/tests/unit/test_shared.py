# tests/unit/test_shared.py
"""
Unit tests for the shared exceptions, logging, settings and metrics
"""

import contextvars
import json
import logging

import pytest
from prometheus_client import REGISTRY
from pydantic import ValidationError

from shared.config import SolverSettings, get_settings
from shared.exceptions import ConfigurationError, ConvergenceError, StepFailure
from shared.logging import StructuredFormatter, get_run_id, log_context, set_run_id, setup_logging
from shared.metrics import track_run_metrics


def make_record(**extra):
    record = logging.LogRecord("kfrac.test", logging.INFO, __file__, 12, "solved %s", ("level",), None)
    for key, value in extra.items():
        setattr(record, key, value)
    return record


class TestExceptions:

    def test_to_dict(self):
        exc = ConfigurationError("line 3: unknown key 'gird'", line=3, key="gird")
        assert exc.to_dict() == {
            "error_code": "CONFIG_ERROR",
            "message": "line 3: unknown key 'gird'",
            "details": {"line": 3, "key": "gird"},
        }

    def test_step_failure_wraps_cause(self):
        cause = ConvergenceError("stalled", solver="cg", iterations=10, residual=1e-3)
        exc = StepFailure("step 4 failed", level=4, cause=cause)
        assert exc.details["level"] == 4
        assert exc.details["cause"]["details"]["solver"] == "cg"
        assert str(exc) == "step 4 failed"


class TestStructuredLogging:

    def test_json_fields(self):
        out = json.loads(StructuredFormatter().format(make_record(alpha=0.5)))
        assert out["message"] == "solved level"
        assert out["level"] == "INFO"
        assert out["logger"] == "kfrac.test"
        assert out["alpha"] == 0.5
        assert "run_id" not in out

    def test_run_id_inside_context(self):
        with log_context(run_id="kirchhoff-sin/P=9") as ctx:
            out = json.loads(StructuredFormatter().format(make_record()))
            assert get_run_id() == ctx.run_id == "kirchhoff-sin/P=9"
        assert out["run_id"] == "kirchhoff-sin/P=9"
        assert get_run_id() == ""

    def test_generated_run_id(self):
        def body():
            rid = set_run_id()
            return rid, get_run_id()

        rid, current = contextvars.copy_context().run(body)
        assert rid == current and len(rid) == 12

    def test_service_adapter(self):
        adapter = setup_logging("kfrac-test", "debug")
        assert adapter.extra == {"service": "kfrac-test"}
        assert adapter.logger.level == logging.DEBUG
        assert not adapter.logger.propagate
        (handler,) = adapter.logger.handlers
        assert isinstance(handler.formatter, StructuredFormatter)


class TestSettings:

    def test_defaults(self):
        settings = SolverSettings()
        assert settings.LINEAR_TOL == 1e-11
        assert settings.NEWTON_TOL == 1e-7
        assert settings.NEWTON_MAX_ITER == 50
        assert settings.LONG_RUN_STEPS == 200_000
        assert settings.MEMORY_CLOSURE == "implicit"

    def test_fields(self):
        assert set(SolverSettings.model_fields) == {
            "LINEAR_TOL", "LINEAR_MAX_ITER", "DENSE_FALLBACK_DIM", "NEWTON_TOL", "NEWTON_MAX_ITER",
            "MEMORY_CLOSURE", "LONG_RUN_STEPS", "WORKERS", "LOG_LEVEL", "LOG_FORMAT",
        }

    def test_memory_closure_is_validated(self, monkeypatch):
        monkeypatch.setenv("KFRAC_MEMORY_CLOSURE", "midpoint")
        with pytest.raises(ValidationError):
            SolverSettings()

    def test_environment_override(self, monkeypatch):
        monkeypatch.setenv("KFRAC_WORKERS", "3")
        monkeypatch.setenv("KFRAC_LINEAR_TOL", "1e-9")
        get_settings.cache_clear()
        try:
            assert get_settings().WORKERS == 3
            assert get_settings().LINEAR_TOL == 1e-9
        finally:
            get_settings.cache_clear()


class TestMetrics:

    def test_run_counter_by_status(self):
        class Problem:
            problem_id = "metrics-check"

        @track_run_metrics("problem_id")
        def solve(problem, fail=False):
            if fail:
                raise ValueError("boom")
            return 1

        labels = {"problem": "metrics-check"}
        before_ok = REGISTRY.get_sample_value("kfrac_runs_total", {**labels, "status": "success"}) or 0.0
        solve(Problem())
        with pytest.raises(ValueError):
            solve(Problem(), fail=True)
        assert REGISTRY.get_sample_value("kfrac_runs_total", {**labels, "status": "success"}) == before_ok + 1
        assert REGISTRY.get_sample_value("kfrac_runs_total", {**labels, "status": "error"}) >= 1
