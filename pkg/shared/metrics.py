# shared/metrics.py
"""
Prometheus metrics utilities for the fractional Kirchhoff solver
In-process counters for runs, steps and solver work
"""

import time
from functools import wraps

from prometheus_client import Counter, Histogram


RUNS_TOTAL = Counter(
    'kfrac_runs_total',
    'Total number of solver runs',
    ['problem', 'status']
)

RUN_DURATION = Histogram(
    'kfrac_run_duration_seconds',
    'Wall time of one solver run',
    ['problem'],
    buckets=(0.01, 0.1, 0.5, 1, 5, 15, 60, 300, 1800, float('inf'))
)

TIME_STEPS = Counter(
    'kfrac_time_steps_total',
    'Time levels advanced by the scheme',
    ['kind']
)

NEWTON_ITERATIONS = Histogram(
    'kfrac_newton_iterations',
    'Newton iterations at the first time level',
    buckets=(1, 2, 3, 4, 6, 8, 12, 20, 50, float('inf'))
)

LINEAR_SOLVES = Counter(
    'kfrac_linear_solves_total',
    'Linear solves by method and outcome',
    ['method', 'status']
)


def track_run_metrics(problem_attr: str = "problem_id"):
    """
    Decorator to track run metrics

    Args:
        problem_attr: keyword argument or first-argument attribute naming the problem
    """
    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            problem = kwargs.get(problem_attr)
            if problem is None and args:
                problem = getattr(args[0], problem_attr, "unknown")
            start_time = time.perf_counter()
            status = "success"
            try:
                return func(*args, **kwargs)
            except Exception:
                status = "error"
                raise
            finally:
                RUNS_TOTAL.labels(problem=str(problem), status=status).inc()
                RUN_DURATION.labels(problem=str(problem)).observe(time.perf_counter() - start_time)
        return wrapper
    return decorator


def record_linear_solve(method: str, status: str = "success"):
    """Increment linear-solve counter"""
    LINEAR_SOLVES.labels(method=method, status=status).inc()
