# services/harness/plot.py
"""
Log-log convergence plots as standalone SVG
"""

import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

import matplotlib
matplotlib.use("Agg")
from matplotlib import rc_context
from matplotlib.figure import Figure

from shared.exceptions import ReportError
from shared.models import NormKind, StudyReport

logger = logging.getLogger(__name__)

# fixed so clip-path ids do not change between runs
_SVG_RC = {"svg.hashsalt": "kfrac-loglog", "svg.fonttype": "none", "path.simplify": False}


def _series_points(report: StudyReport, norm: str) -> List[Tuple[tuple, List[float], List[float]]]:
    key = "h1_error" if norm == NormKind.H1.value else "l2_error"
    out = []
    for series, rows in report.series().items():
        pts = [(row.rate_parameter, getattr(row, key)) for row in rows if row.ok and getattr(row, key)]
        if len(pts) < 2:
            raise ReportError(f"series alpha={series[0]}, delta={series[1]} has {len(pts)} plottable points, need 2")
        out.append((series, [p[0] for p in pts], [p[1] for p in pts]))
    return out


def _guide_slope(report: StudyReport, norm: str) -> float:
    key = "h1_rate" if norm == NormKind.H1.value else "l2_rate"
    rates = [getattr(row, key) for row in report.rows if getattr(row, key) is not None]
    return sum(rates) / len(rates) if rates else 1.0


def build_figure(report: StudyReport, norm: str = "l2", guide_slope: Optional[float] = None) -> Figure:
    """One line per (alpha, delta) series (gid 'series-i') plus a 'guide' reference line"""
    norm = NormKind(norm).value
    if norm == NormKind.BOTH.value:
        norm = NormKind.L2.value
    if not report.rows:
        raise ReportError("cannot plot an empty report")
    series = _series_points(report, norm)
    slope = _guide_slope(report, norm) if guide_slope is None else guide_slope

    fig = Figure(figsize=(7, 7))
    ax = fig.add_subplot(1, 1, 1)
    ax.set_xscale("log")
    ax.set_yscale("log")
    for i, ((alpha, delta), xs, ys) in enumerate(series):
        (line,) = ax.plot(xs, ys, label=f"alpha={alpha:g}, delta={delta:g}")
        line.set_gid(f"series-{i}")
        line.set_snap(False)

    # reference slope anchored half a decade below the first series
    (_, xs, ys) = series[0]
    x0, x1 = xs[0], xs[-1]
    y0 = ys[0] / 3.0
    (guide,) = ax.plot([x0, x1], [y0, y0 * (x0 / x1) ** slope], linestyle="--", color="0.4",
                       label=f"slope {slope:.2f}")
    guide.set_gid("guide")
    guide.set_snap(False)

    # equal decades on both axes: on-screen slope equals the log-log slope
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("refinement parameter")
    ax.set_ylabel(f"{norm.upper()} error")
    ax.set_title(f"{report.problem} ({report.axis})")
    ax.legend(loc="best")
    return fig


def emit_loglog_plot(report: StudyReport, norm: str = "l2", path: Union[str, Path] = "loglog.svg",
                     guide_slope: Optional[float] = None) -> None:
    """Write the log-log plot of a report as SVG; identical reports give identical files"""
    with rc_context(_SVG_RC):
        fig = build_figure(report, norm, guide_slope)
        try:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(path, format="svg", metadata={"Date": None})
        except OSError as exc:
            raise ReportError(f"cannot write plot to {path}: {exc}", path=str(path)) from exc
    logger.info("Wrote plot", extra={"path": str(path), "norm": norm, "series": len(report.series())})
