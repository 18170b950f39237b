# shared/exceptions.py
"""
Custom exceptions for the fractional Kirchhoff solver
Centralized error handling across solver and harness services
"""

from typing import Any, Dict, Optional


class SolverException(Exception):
    """Base exception for all solver errors"""
    def __init__(self, message: str, error_code: str = None, details: dict = None):
        self.message = message
        self.error_code = error_code or "SOLVER_ERROR"
        self.details = details or {}
        super().__init__(self.message)

    def to_dict(self) -> Dict[str, Any]:
        """Machine-readable form used by the CLI"""
        return {
            "error_code": self.error_code,
            "message": self.message,
            "details": self.details,
        }


class ParameterDomainError(SolverException):
    """Parameter outside its admissible domain"""
    def __init__(self, message: str, field: str = None, value=None):
        details = {"field": field, "value": value} if field else {}
        super().__init__(message, "PARAMETER_DOMAIN_ERROR", details)


class DimensionMismatchError(SolverException):
    """Vectors or matrices of incompatible shapes"""
    def __init__(self, message: str, expected=None, actual=None):
        details = {"expected": expected, "actual": actual}
        super().__init__(message, "DIMENSION_MISMATCH", details)


class MeshError(SolverException):
    """Invalid mesh construction or degenerate elements"""
    def __init__(self, message: str, element: int = None):
        details = {"element": element} if element is not None else {}
        super().__init__(message, "MESH_ERROR", details)


class QuadratureError(SolverException):
    """Non-finite integrand values at quadrature points"""
    def __init__(self, message: str, quantity: str = None):
        details = {"quantity": quantity} if quantity else {}
        super().__init__(message, "QUADRATURE_ERROR", details)


class ConvergenceError(SolverException):
    """Iterative solver did not reach its tolerance"""
    def __init__(self, message: str, solver: str = None, iterations: int = None,
                 residual: float = None):
        details = {"solver": solver, "iterations": iterations, "residual": residual}
        super().__init__(message, "CONVERGENCE_ERROR", details)


class SingularCorrectionError(SolverException):
    """Rank-one correction makes the operator (numerically) singular"""
    def __init__(self, message: str, denominator: float = None):
        details = {"denominator": denominator}
        super().__init__(message, "SINGULAR_CORRECTION", details)


class CacheUnderflowError(SolverException):
    """Memory product cache is missing a required time level"""
    def __init__(self, message: str, level: int = None, available: int = None):
        details = {"level": level, "available": available}
        super().__init__(message, "CACHE_UNDERFLOW", details)


class StepFailure(SolverException):
    """A time step failed; wraps the underlying cause with its level"""
    def __init__(self, message: str, level: int = None, cause: Optional[SolverException] = None):
        details = {"level": level}
        if cause is not None:
            details["cause"] = cause.to_dict()
        super().__init__(message, "STEP_FAILURE", details)
        self.level = level
        self.cause = cause


class ReportError(SolverException):
    """Report serialization or plotting errors"""
    def __init__(self, message: str, path: str = None):
        details = {"path": path} if path else {}
        super().__init__(message, "REPORT_ERROR", details)


class ConfigurationError(SolverException):
    """Study configuration file or override errors"""
    def __init__(self, message: str, line: int = None, key: str = None):
        details = {"line": line, "key": key}
        super().__init__(message, "CONFIG_ERROR", details)
