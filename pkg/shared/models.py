# shared/models.py
"""
Core Pydantic models for convergence studies
These models define the report structures exchanged between harness and writers
"""

from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, model_validator


class StudyAxis(str, Enum):
    """Refinement direction of a study"""
    SPACE = "space"
    TIME = "time"


class NormKind(str, Enum):
    """Error norms reported by a study"""
    L2 = "l2"
    H1 = "h1"
    BOTH = "both"


class RunError(BaseModel):
    """Failure recorded for one run of a study"""
    error_code: str = Field(..., description="Machine-readable error code")
    message: str = Field(..., description="Human-readable failure summary")
    level: Optional[int] = Field(None, description="Failing time level, if any")


class StudyRow(BaseModel):
    """
    One (alpha, delta, P, N) run of a study
    Rates are present exactly when the row has a predecessor in its series
    """
    alpha: float = Field(..., gt=0, lt=1)
    delta: float = Field(..., ge=1)
    P: int = Field(..., ge=1)
    N: int = Field(..., ge=1)
    l2_error: Optional[float] = Field(None, ge=0)
    h1_error: Optional[float] = Field(None, ge=0)
    l2_rate: Optional[float] = None
    h1_rate: Optional[float] = None
    rate_parameter: float = Field(..., gt=0, description="Refinement count used in the log-log rate")
    newton_iterations: Optional[int] = Field(None, ge=0)
    error: Optional[RunError] = None

    @property
    def series(self) -> tuple:
        return (self.alpha, self.delta)

    @property
    def ok(self) -> bool:
        return self.error is None and self.l2_error is not None


class StudyReport(BaseModel):
    """Rows of a convergence study plus run metadata"""
    problem: str = Field(..., description="Problem id")
    axis: StudyAxis
    norm: NormKind = NormKind.BOTH
    rows: List[StudyRow] = Field(default_factory=list)
    wall_time: float = Field(0.0, ge=0, description="Total wall time in seconds")
    version: str = Field("1.0.0", description="Tool version")
    metadata: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def check_rate_positions(self):
        """A rate needs a predecessor in the same (alpha, delta) series"""
        seen = set()
        for row in self.rows:
            if row.series not in seen and (row.l2_rate is not None or row.h1_rate is not None):
                raise ValueError(f"row P={row.P}, N={row.N} has a rate but no predecessor")
            seen.add(row.series)
        return self

    def series(self) -> Dict[tuple, List[StudyRow]]:
        groups: Dict[tuple, List[StudyRow]] = {}
        for row in self.rows:
            groups.setdefault(row.series, []).append(row)
        return groups

    class Config:
        use_enum_values = True
