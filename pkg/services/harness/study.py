# services/harness/study.py
"""
Convergence-study orchestration
Runs one solver pass per (alpha, delta, P, N), collects max-over-levels errors
and computes log-log rates within each (alpha, delta) series
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

from shared import __version__
from shared.config import get_settings
from shared.exceptions import ConfigurationError, ParameterDomainError, SolverException
from shared.logging import log_context
from shared.models import NormKind, RunError, StudyAxis, StudyReport, StudyRow

from services.solver.problems import get_problem
from services.solver.scheme import build_problem, run

from .config import StudyConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunSpec:
    """One solver run of a study"""
    problem: str
    alpha: float
    delta: float
    P: int
    N: int
    T: float
    rate_parameter: float
    memory_closure: Optional[str] = None

    @property
    def sort_key(self) -> Tuple[float, float, int, int]:
        return (self.alpha, self.delta, self.P, self.N)

    @property
    def run_id(self) -> str:
        return f"{self.problem}/a={self.alpha!r}/d={self.delta!r}/P={self.P}/N={self.N}"


@dataclass(frozen=True)
class RunResult:
    l2_error: Optional[float] = None
    h1_error: Optional[float] = None
    newton_iterations: Optional[int] = None
    error: Optional[RunError] = None


def loglog_rate(e1: float, e2: float, m1: float, m2: float) -> float:
    """
    Observed order between two runs: log(e1/e2) / log(m2/m1)

    m1, m2 are refinement counts (P or N), so the rate is positive when the
    error drops as the count grows.
    """
    for name, value in (("e1", e1), ("e2", e2), ("m1", m1), ("m2", m2)):
        if not (value > 0) or not math.isfinite(value):
            raise ParameterDomainError(f"loglog_rate needs positive finite {name}, got {value}", name, value)
    if m1 == m2:
        raise ParameterDomainError("loglog_rate needs distinct mesh parameters", "m2", m2)
    return math.log(e1 / e2) / math.log(m2 / m1)


def plan_runs(config: StudyConfig) -> List[RunSpec]:
    """Expand a config into ordered runs, enforcing the long-run guard"""
    limit = get_settings().LONG_RUN_STEPS
    runs = []
    for alpha in config.alphas:
        for rule in config.deltas:
            delta = config.delta_value(rule, alpha)
            for P in config.grids:
                for N in config.step_counts(P, alpha):
                    if N > limit and not config.allow_long:
                        raise ConfigurationError(
                            f"run alpha={alpha}, P={P} needs N={N} > {limit:g} steps; pass --allow-long",
                            key="allow_long",
                        )
                    if config.axis == StudyAxis.SPACE:
                        parameter = float(P)
                    elif config.n_rule == "explicit":
                        parameter = float(N)
                    else:
                        parameter = config.coupled_parameter(P, alpha)
                    runs.append(RunSpec(config.problem, alpha, delta, P, N, config.T, parameter,
                                        config.memory_closure))
    runs.sort(key=lambda r: r.sort_key)
    return runs


def run_single(spec: RunSpec) -> RunResult:
    """Solve one configuration; solver failures become a recorded RunError"""
    with log_context(run_id=spec.run_id):
        try:
            problem = build_problem(get_problem(spec.problem, spec.alpha), spec.P, spec.N, spec.delta, spec.T,
                                    memory_closure=spec.memory_closure)
            trace = run(problem)
        except SolverException as exc:
            logger.warning("Run failed", extra={"error_code": exc.error_code, "error": exc.message})
            return RunResult(error=RunError(
                error_code=exc.error_code, message=exc.message, level=getattr(exc, "level", None),
            ))
        l2, h1 = trace.max_errors()
        return RunResult(l2_error=l2, h1_error=h1, newton_iterations=trace.newton_iterations)


def _with_rates(rows: List[StudyRow], norm: str,
                axis: str = StudyAxis.SPACE.value) -> Tuple[List[StudyRow], int]:
    """
    Fill rates from the previous row of the same series

    On the time axis a row whose floored N equals its predecessor's refines
    only in space; it gets no rate. Returns the rows and how many were skipped.
    """
    out = []
    previous: Dict[tuple, StudyRow] = {}
    repeated = 0
    for row in rows:
        prev = previous.get(row.series)
        updates = {}
        if prev is not None and axis == StudyAxis.TIME.value and prev.N == row.N:
            repeated += 1
        elif prev is not None and prev.ok and row.ok:
            if norm in (NormKind.L2.value, NormKind.BOTH.value) and prev.l2_error > 0 and row.l2_error > 0:
                updates["l2_rate"] = loglog_rate(prev.l2_error, row.l2_error, prev.rate_parameter, row.rate_parameter)
            if norm in (NormKind.H1.value, NormKind.BOTH.value) and prev.h1_error > 0 and row.h1_error > 0:
                updates["h1_rate"] = loglog_rate(prev.h1_error, row.h1_error, prev.rate_parameter, row.rate_parameter)
        out.append(row.model_copy(update=updates))
        previous[row.series] = row
    return out, repeated


def diverging_series(rows: List[StudyRow], norm: str) -> List[Dict[str, Any]]:
    """Series whose last successful error exceeds the first one, per reported norm"""
    groups: Dict[tuple, List[StudyRow]] = {}
    for row in rows:
        if row.ok:
            groups.setdefault(row.series, []).append(row)
    kinds = {NormKind.L2.value: ["l2"], NormKind.H1.value: ["h1"], NormKind.BOTH.value: ["l2", "h1"]}[norm]
    flagged = []
    for (alpha, delta), series in groups.items():
        if len(series) < 2:
            continue
        for kind in kinds:
            first, last = getattr(series[0], f"{kind}_error"), getattr(series[-1], f"{kind}_error")
            if first is not None and last is not None and last > first:
                flagged.append({"alpha": alpha, "delta": delta, "norm": kind, "first": first, "last": last})
    return flagged


def run_study(config: StudyConfig, workers: Optional[int] = None) -> StudyReport:
    """
    Run every configuration of a study and assemble the report

    Runs may execute on a bounded thread pool; rows are always ordered by
    (alpha, delta, P, N) so the report does not depend on completion order.
    """
    start = time.perf_counter()
    runs = plan_runs(config)
    workers = workers or config.workers or get_settings().WORKERS
    logger.info("Starting study", extra={
        "problem": config.problem, "axis": config.axis, "runs": len(runs), "workers": workers,
    })

    if workers > 1 and len(runs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_single, runs))
    else:
        results = [run_single(spec) for spec in runs]

    rows = [
        StudyRow(
            alpha=spec.alpha, delta=spec.delta, P=spec.P, N=spec.N,
            l2_error=result.l2_error, h1_error=result.h1_error,
            rate_parameter=spec.rate_parameter, newton_iterations=result.newton_iterations,
            error=result.error,
        )
        for spec, result in zip(runs, results)
    ]
    rows, repeated = _with_rates(rows, config.norm, config.axis)
    failed = sum(1 for row in rows if row.error is not None)
    diverging = diverging_series(rows, config.norm)
    if repeated:
        logger.warning("Rows repeat the previous step count and carry no rate", extra={"rows": repeated})
    if diverging:
        logger.warning("Errors grow along a refinement series", extra={"series": diverging})

    report = StudyReport(
        problem=config.problem, axis=config.axis, norm=config.norm, rows=rows,
        wall_time=time.perf_counter() - start, version=__version__,
        metadata={
            "n_rule": config.n_rule, "T": config.T, "failed_runs": failed,
            "memory_closure": config.memory_closure or get_settings().MEMORY_CLOSURE,
            "repeated_step_rows": repeated, "diverging_series": diverging,
        },
    )
    logger.info("Finished study", extra={"runs": len(rows), "failed": failed, "wall_time": round(report.wall_time, 3)})
    return report
