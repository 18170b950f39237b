# tests/integration/test_published_tables.py
"""
Integration tests reproducing the published convergence tables
Run with: pytest -m slow tests/integration
"""

import numpy as np
import pytest

from services.harness.presets import preset_configs
from services.harness.study import loglog_rate, run_study
from services.solver.fractional_time import optimal_grading
from services.solver.problems import example_52
from services.solver.scheme import build_problem, run

pytestmark = pytest.mark.slow

# (alpha, delta) -> L2 errors at P = 9..12
TABLE_1_L2 = {
    (0.5, 1.0): [6.4781e-3, 5.2692e-3, 4.3683e-3, 3.6794e-3],
    (0.5, 3.0): [6.4778e-3, 5.2688e-3, 4.3680e-3, 3.6791e-3],
}
TABLE_5_L2 = {
    0.2: [1.9132e-3, 1.5653e-3, 1.2958e-3, 1.0918e-3],
    0.4: [1.0081e-3, 8.2233e-4, 6.8299e-4, 5.7596e-4],
    0.6: [8.6619e-4, 7.0303e-4, 5.8189e-4, 4.8951e-4],
    0.8: [8.2069e-4, 6.6538e-4, 5.5028e-4, 4.6264e-4],
}
# coupled N = floor(P^(1/(2-alpha))) only grows at these P within 9..12
H1_RATED_GRIDS = {0.2: [], 0.4: [10], 0.6: [10], 0.8: [11]}


def run_preset_configs(name, **overrides):
    return [run_study(config, workers=2) for config in preset_configs(name, overrides=overrides)]


def assert_rates(rows, attr, expected, tol):
    rates = [getattr(row, attr) for row in rows[1:]]
    assert rates[0] is not None
    for rate in rates:
        assert rate == pytest.approx(expected, abs=tol)


def assert_errors(rows, attr, expected, rel=0.25):
    assert [getattr(row, attr) for row in rows] == pytest.approx(expected, rel=rel)


def endpoint_rate(rows, attr):
    first, last = rows[0], rows[-1]
    return loglog_rate(getattr(first, attr), getattr(last, attr), first.rate_parameter, last.rate_parameter)


def rated_grids(report, attr):
    return {alpha: [row.P for row in rows if getattr(row, attr) is not None]
            for (alpha, _), rows in report.series().items()}


class TestKirchhoffSin:
    """Constant memory coefficient, u = t^alpha (x-1)(y-1) sin(pi x) sin(pi y)"""

    def test_spatial_rates(self):
        (report,) = run_preset_configs("table-1")
        assert report.metadata["failed_runs"] == 0
        for (alpha, delta), rows in report.series().items():
            assert_rates(rows, "l2_rate", 2.0, 0.1)
            assert_rates(rows, "h1_rate", 1.0, 0.1)
            assert_errors(rows, "l2_error", TABLE_1_L2[(alpha, delta)])

    def test_temporal_l2_rates(self):
        uniform, graded = run_preset_configs("table-2")
        for (alpha, _), rows in uniform.series().items():
            assert_rates(rows, "l2_rate", alpha, 0.1)
        for (alpha, _), rows in graded.series().items():
            # floored N makes single-step rates swing (alpha = 0.4: N = 15, 17, 20, 22)
            assert endpoint_rate(rows, "l2_error") == pytest.approx(2.0 - alpha, abs=0.12)
            errors = [row.l2_error for row in rows]
            assert errors == sorted(errors, reverse=True)

    def test_temporal_h1_rates(self):
        uniform, graded = run_preset_configs("table-3")
        assert uniform.metadata["repeated_step_rows"] == 0
        assert uniform.metadata["diverging_series"] == []
        for (alpha, _), rows in uniform.series().items():
            assert endpoint_rate(rows, "h1_error") == pytest.approx(alpha, abs=0.15)
        assert graded.metadata["failed_runs"] == 0
        assert graded.metadata["repeated_step_rows"] == 6
        assert rated_grids(graded, "h1_rate") == {0.4: [10], 0.6: [10], 0.8: [11]}


class TestKirchhoffPoly:
    """Variable memory coefficients, u = t^alpha (x-x^2)(y-y^2)"""

    def test_spatial_rates(self):
        (report,) = run_preset_configs("table-4")
        (rows,) = report.series().values()
        assert_rates(rows, "l2_rate", 2.0, 0.1)
        assert_rates(rows, "h1_rate", 1.0, 0.1)

    def test_temporal_l2_errors(self):
        (implicit,) = run_preset_configs("table-5")
        (explicit,) = run_preset_configs("table-5", memory_closure="explicit")
        assert implicit.metadata["memory_closure"] == "implicit"
        assert implicit.metadata["failed_runs"] == 0
        closed = implicit.series()
        for rows in closed.values():
            errors = [row.l2_error for row in rows]
            assert errors == sorted(errors, reverse=True)
            assert endpoint_rate(rows, "l2_error") > 1.0
        for (alpha, delta), rows in explicit.series().items():
            if alpha in (0.2, 0.4):
                for lhs, rhs in zip(closed[(alpha, delta)], rows):
                    assert lhs.l2_error < rhs.l2_error
        small_alpha = next(rows for (alpha, _), rows in closed.items() if alpha == 0.2)
        ratios = np.array([row.l2_error for row in small_alpha]) / np.array(TABLE_5_L2[0.2])
        assert np.all((ratios > 1.0 / 3.0) & (ratios < 3.0))

    def test_explicit_closure_peaks_at_final_level(self):
        problem = build_problem(example_52(0.2), 9, 11, optimal_grading(0.2), memory_closure="explicit")
        trace = run(problem)
        l2 = trace.level_errors[1:, 0]
        assert int(np.argmax(l2)) == len(l2) - 1
        assert l2.max() == pytest.approx(3.66e-2, rel=0.05)

    def test_temporal_h1_rates(self):
        (report,) = run_preset_configs("table-6")
        assert report.metadata["failed_runs"] == 0
        assert report.metadata["repeated_step_rows"] == 9
        assert rated_grids(report, "h1_rate") == H1_RATED_GRIDS
