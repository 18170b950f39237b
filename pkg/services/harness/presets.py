# services/harness/presets.py
"""
Preset studies reproducing the published convergence tables
"""

import logging
from typing import Dict, List, Optional

from shared.exceptions import ConfigurationError
from shared.models import StudyReport

from .config import StudyConfig, build_study_config
from .study import run_study

logger = logging.getLogger(__name__)

SIN = "kirchhoff-sin"
POLY = "kirchhoff-poly"
GRIDS = [9, 10, 11, 12]


def _table_1(allow_long: bool) -> List[dict]:
    return [dict(problem=SIN, alphas=[0.5], deltas=[1.0, 3.0], axis="space", grids=GRIDS, steps=[5000])]


def _table_2(allow_long: bool) -> List[dict]:
    # uniform alpha = 0.4 needs N = 12^5 steps at the finest grid
    uniform = [0.4, 0.6, 0.8] if allow_long else [0.6, 0.8]
    return [
        dict(problem=SIN, alphas=uniform, deltas=[1.0], axis="time", grids=GRIDS,
             n_rule="coupled-2/alpha", norm="l2"),
        dict(problem=SIN, alphas=[0.4, 0.6, 0.8], deltas=["optimal"], axis="time", grids=GRIDS,
             n_rule="coupled-2/(2-alpha)", norm="l2"),
    ]


def _table_3(allow_long: bool) -> List[dict]:
    # uniform alpha = 0.4 (N = 243..498) has errors that grow with P; run it through a config file
    return [
        dict(problem=SIN, alphas=[0.6, 0.8], deltas=[1.0], axis="time", grids=GRIDS,
             n_rule="coupled-1/alpha", norm="h1"),
        dict(problem=SIN, alphas=[0.4, 0.6, 0.8], deltas=["optimal"], axis="time", grids=GRIDS,
             n_rule="coupled-1/(2-alpha)", norm="h1"),
    ]


def _table_4(allow_long: bool) -> List[dict]:
    return [dict(problem=POLY, alphas=[0.5], deltas=["optimal"], axis="space", grids=GRIDS, steps=[5000])]


def _table_5(allow_long: bool) -> List[dict]:
    return [dict(problem=POLY, alphas=[0.2, 0.4, 0.6, 0.8], deltas=["optimal"], axis="time", grids=GRIDS,
                 n_rule="coupled-2/(2-alpha)", norm="l2")]


def _table_6(allow_long: bool) -> List[dict]:
    return [dict(problem=POLY, alphas=[0.2, 0.4, 0.6, 0.8], deltas=["optimal"], axis="time", grids=GRIDS,
                 n_rule="coupled-1/(2-alpha)", norm="h1")]


PRESETS = {
    "table-1": _table_1,
    "table-2": _table_2,
    "table-3": _table_3,
    "table-4": _table_4,
    "table-5": _table_5,
    "table-6": _table_6,
}


def preset_configs(name: str, allow_long: bool = False, overrides: Optional[Dict] = None) -> List[StudyConfig]:
    """StudyConfigs of a preset; overrides (e.g. output, workers) apply to each"""
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ConfigurationError(f"unknown preset '{name}', expected one of {sorted(PRESETS)}", key="preset") from None
    extra = {k: v for k, v in (overrides or {}).items() if v is not None}
    return [build_study_config({**values, "allow_long": allow_long, **extra}) for values in factory(allow_long)]


def merge_reports(reports: List[StudyReport]) -> StudyReport:
    """Concatenate reports of one problem; rows keep their (alpha, delta, P, N) order"""
    if not reports:
        raise ConfigurationError("nothing to merge")
    rows = sorted((row for r in reports for row in r.rows), key=lambda row: (row.alpha, row.delta, row.P, row.N))
    first = reports[0]
    return StudyReport(
        problem=first.problem, axis=first.axis, norm=first.norm, rows=rows,
        wall_time=sum(r.wall_time for r in reports), version=first.version,
        metadata={
            "n_rule": ",".join(str(r.metadata.get("n_rule")) for r in reports),
            "T": first.metadata.get("T"),
            "failed_runs": sum(r.metadata.get("failed_runs", 0) for r in reports),
            "memory_closure": first.metadata.get("memory_closure"),
            "repeated_step_rows": sum(r.metadata.get("repeated_step_rows", 0) for r in reports),
            "diverging_series": [s for r in reports for s in r.metadata.get("diverging_series", [])],
        },
    )


def run_preset(name: str, allow_long: bool = False, workers: Optional[int] = None,
               memory_closure: Optional[str] = None) -> StudyReport:
    configs = preset_configs(name, allow_long, overrides={"memory_closure": memory_closure})
    logger.info("Running preset", extra={"preset": name, "studies": len(configs)})
    report = merge_reports([run_study(config, workers=workers) for config in configs])
    report.metadata["preset"] = name
    return report
