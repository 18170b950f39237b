# shared/logging.py
"""
Centralized logging configuration for the fractional Kirchhoff solver
Structured logging with run IDs for tracing study runs
"""

import logging
import logging.config
import json
import os
import sys
import uuid
from contextvars import ContextVar
from datetime import datetime, timezone

# Context variable for the run ID across solver runs and worker threads
run_id: ContextVar[str] = ContextVar('run_id', default='')

_RESERVED = {
    'name', 'msg', 'args', 'levelname', 'levelno', 'pathname', 'filename',
    'module', 'lineno', 'funcName', 'created', 'msecs', 'relativeCreated',
    'thread', 'threadName', 'processName', 'process', 'getMessage', 'exc_info',
    'exc_text', 'stack_info', 'taskName', 'message',
}


class StructuredFormatter(logging.Formatter):
    """
    JSON structured logging formatter
    Includes run IDs and standard fields
    """

    def format(self, record):
        log_entry = {
            'timestamp': datetime.fromtimestamp(record.created, tz=timezone.utc).isoformat(),
            'level': record.levelname,
            'logger': record.name,
            'message': record.getMessage(),
            'module': record.module,
            'function': record.funcName,
            'line': record.lineno,
        }
        current_run = run_id.get()
        if current_run:
            log_entry['run_id'] = current_run

        if record.exc_info:
            log_entry['exception'] = self.formatException(record.exc_info)

        # Extra fields passed with extra={...}
        for key, value in record.__dict__.items():
            if key not in _RESERVED and key not in log_entry:
                log_entry[key] = value

        return json.dumps(log_entry, default=str)


def setup_logging_config(log_level: str = None, log_format: str = None):
    """Configure the root logger once for CLI entry points"""
    log_level = (log_level or os.getenv('LOG_LEVEL', 'INFO')).upper()
    log_format = log_format or os.getenv('LOG_FORMAT', 'json')

    if log_format == 'json':
        formatter_config = {'()': StructuredFormatter}
    else:
        formatter_config = {
            'format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        }

    logging.config.dictConfig({
        'version': 1,
        'disable_existing_loggers': False,
        'formatters': {'default': formatter_config},
        'handlers': {
            'console': {
                'class': 'logging.StreamHandler',
                'level': log_level,
                'formatter': 'default',
                # stdout carries reports; logs go to stderr
                'stream': 'ext://sys.stderr',
            }
        },
        'root': {'level': log_level, 'handlers': ['console']},
        'loggers': {
            'matplotlib': {'level': 'WARNING'},
        },
    })


def setup_logging(service_name: str, log_level: str = "INFO") -> logging.LoggerAdapter:
    """
    Configure structured logging for a service

    Args:
        service_name: Name of the service (e.g., 'harness')
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)

    Returns:
        Logger adapter tagging every record with the service name
    """
    logger = logging.getLogger(service_name)
    logger.setLevel(getattr(logging, log_level.upper()))

    for handler in logger.handlers[:]:
        logger.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(StructuredFormatter())
    logger.addHandler(handler)
    logger.propagate = False

    return logging.LoggerAdapter(logger, {'service': service_name})


def set_run_id(rid: str = None) -> str:
    """
    Set run ID for tracing one solver run

    Args:
        rid: Run ID to set, generates a short UUID if None

    Returns:
        The run ID that was set
    """
    if rid is None:
        rid = uuid.uuid4().hex[:12]
    run_id.set(rid)
    return rid


def get_run_id() -> str:
    """Get current run ID (empty string outside a run)"""
    return run_id.get()


class log_context:
    """Context manager for setting the run ID around a solver run"""

    def __init__(self, run_id: str = None, **kwargs):
        self.run_id = run_id
        self.kwargs = kwargs
        self._token = None

    def __enter__(self):
        rid = self.run_id or uuid.uuid4().hex[:12]
        self._token = run_id.set(rid)
        self.run_id = rid
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        run_id.reset(self._token)
