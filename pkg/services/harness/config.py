# services/harness/config.py
"""
Study configuration: flat key = value files with command-line overrides
"""

import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from shared.exceptions import ConfigurationError
from shared.models import NormKind, StudyAxis

from services.solver.fractional_time import optimal_grading

logger = logging.getLogger(__name__)

# coupled step rules N = floor(P^e(alpha))
N_RULES = {
    "coupled-2/alpha": lambda a: 2.0 / a,
    "coupled-2/(2-alpha)": lambda a: 2.0 / (2.0 - a),
    "coupled-1/alpha": lambda a: 1.0 / a,
    "coupled-1/(2-alpha)": lambda a: 1.0 / (2.0 - a),
}

DeltaRule = Union[float, Literal["optimal"]]

_LIST_KEYS = {"alphas", "deltas", "grids", "steps"}
_BOOL_KEYS = {"allow_long"}


class StudyConfig(BaseModel):
    """One convergence study: a sweep over alpha, delta and mesh parameters"""
    problem: str = Field(..., description="Problem id")
    alphas: List[float] = Field(..., min_length=1)
    deltas: List[DeltaRule] = Field(default_factory=lambda: ["optimal"], min_length=1)
    axis: StudyAxis = StudyAxis.SPACE
    grids: List[int] = Field(..., min_length=1, description="P values")
    n_rule: str = Field("explicit", description="'explicit' or a coupled rule")
    steps: List[int] = Field(default_factory=list, description="explicit N values")
    norm: NormKind = NormKind.BOTH
    T: float = Field(1.0, gt=0)
    output: Optional[str] = None
    format: Literal["csv", "json"] = "csv"
    plot: Optional[str] = None
    allow_long: bool = False
    workers: Optional[int] = Field(None, ge=1)
    memory_closure: Optional[Literal["implicit", "explicit"]] = Field(
        None, description="last memory interval rule; KFRAC_MEMORY_CLOSURE when unset")

    @field_validator("alphas")
    @classmethod
    def check_alphas(cls, v):
        for a in v:
            if not (0.0 < a < 1.0):
                raise ValueError(f"alpha {a} outside (0, 1)")
        return v

    @field_validator("deltas")
    @classmethod
    def check_deltas(cls, v):
        for d in v:
            if d != "optimal" and not (d >= 1.0):
                raise ValueError(f"delta {d} must be >= 1 or 'optimal'")
        return v

    @field_validator("grids", "steps")
    @classmethod
    def check_positive(cls, v):
        if any(int(x) < 1 for x in v):
            raise ValueError("list entries must be positive")
        return v

    @model_validator(mode="after")
    def check_rule(self):
        if self.n_rule == "explicit":
            if not self.steps:
                raise ValueError("explicit step rule needs a 'steps' list")
        elif self.n_rule in N_RULES:
            if self.axis != StudyAxis.TIME:
                raise ValueError("coupled step rules require axis = time")
        else:
            raise ValueError(f"unknown n_rule '{self.n_rule}', expected explicit or one of {sorted(N_RULES)}")
        # one refinement direction per series
        if self.axis == StudyAxis.SPACE and len(self.steps) != 1:
            raise ValueError("space studies take exactly one step count")
        if self.axis == StudyAxis.TIME and self.n_rule == "explicit" and len(self.grids) != 1:
            raise ValueError("explicit time studies take exactly one grid")
        return self

    class Config:
        use_enum_values = True

    def delta_value(self, rule: DeltaRule, alpha: float) -> float:
        return optimal_grading(alpha) if rule == "optimal" else float(rule)

    def coupled_parameter(self, P: int, alpha: float) -> float:
        """Unfloored P^e(alpha) of a coupled rule"""
        return float(P) ** N_RULES[self.n_rule](alpha)

    def step_counts(self, P: int, alpha: float) -> List[int]:
        if self.n_rule == "explicit":
            return [int(n) for n in self.steps]
        return [max(1, math.floor(self.coupled_parameter(P, alpha)))]


def parse_value(key: str, raw: str) -> Any:
    raw = raw.strip()
    if key in _LIST_KEYS:
        items = [item.strip() for item in raw.split(",") if item.strip()]
        if key == "deltas":
            return [item if item == "optimal" else float(item) for item in items]
        if key in ("grids", "steps"):
            return [int(item) for item in items]
        return [float(item) for item in items]
    if key in _BOOL_KEYS:
        return raw.lower() in ("1", "true", "yes", "on")
    return raw


def parse_config_lines(lines: List[str]) -> Dict[str, Any]:
    """Parse 'key = value' lines; '#' starts a comment"""
    values: Dict[str, Any] = {}
    known = set(StudyConfig.model_fields)
    for number, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigurationError(f"line {number}: expected 'key = value'", line=number)
        key, raw = (part.strip() for part in text.split("=", 1))
        if key == "delta":
            key = "deltas"
        if key == "alpha":
            key = "alphas"
        if key not in known:
            raise ConfigurationError(f"line {number}: unknown key '{key}'", line=number, key=key)
        try:
            values[key] = parse_value(key, raw)
        except ValueError as exc:
            raise ConfigurationError(f"line {number}: bad value for '{key}': {exc}", line=number, key=key) from exc
    return values


def build_study_config(values: Dict[str, Any]) -> StudyConfig:
    try:
        return StudyConfig(**values)
    except ValidationError as exc:
        raise ConfigurationError(f"invalid study configuration: {exc.errors()[0]['msg']}") from exc


def load_study_config(path: Optional[Union[str, Path]], overrides: Optional[Dict[str, Any]] = None) -> StudyConfig:
    """
    Load a study config file and apply overrides (command line wins)

    Args:
        path: key = value file, or None to build from overrides alone
        overrides: values that replace file entries; None values are ignored
    """
    values: Dict[str, Any] = {}
    if path is not None:
        try:
            lines = Path(path).read_text().splitlines()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
        values.update(parse_config_lines(lines))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    config = build_study_config(values)
    logger.debug("Loaded study config", extra={"config": config.model_dump()})
    return config
