# services/solver/linalg.py
"""
Sparse linear solvers for the per-step systems
Jacobi-preconditioned Krylov methods with a posteriori residual checks,
a small dense LU fallback and the rank-one corrected Newton Jacobian
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from shared.config import get_settings
from shared.exceptions import (
    ConvergenceError, DimensionMismatchError, ParameterDomainError, SingularCorrectionError,
)
from shared.metrics import record_linear_solve

logger = logging.getLogger(__name__)

# restarts from the last iterate when the recomputed residual misses the target
_MAX_RESTARTS = 3


@dataclass(frozen=True, eq=False)
class RankOneCorrected:
    """base + scale * u_vec v_vec^T, never formed explicitly"""
    base: sp.csr_matrix
    u_vec: np.ndarray
    v_vec: np.ndarray
    scale: float

    def __post_init__(self):
        n = self.base.shape[0]
        if self.base.shape != (n, n) or self.u_vec.shape != (n,) or self.v_vec.shape != (n,):
            raise DimensionMismatchError(
                "rank-one correction does not match base operator",
                expected=self.base.shape, actual=(self.u_vec.shape, self.v_vec.shape),
            )

    @property
    def shape(self):
        return self.base.shape

    def __matmul__(self, x: np.ndarray) -> np.ndarray:
        return self.base @ x + self.scale * (self.v_vec @ x) * self.u_vec

    def diagonal(self) -> np.ndarray:
        return self.base.diagonal() + self.scale * self.u_vec * self.v_vec

    def toarray(self) -> np.ndarray:
        return self.base.toarray() + self.scale * np.outer(self.u_vec, self.v_vec)

    def as_linear_operator(self) -> spla.LinearOperator:
        return spla.LinearOperator(self.shape, matvec=self.__matmul__, dtype=float)


Operator = Union[sp.spmatrix, RankOneCorrected]


def _check_system(A: Operator, b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1] or b.shape != (A.shape[0],):
        raise DimensionMismatchError("right-hand side does not match operator", expected=A.shape, actual=b.shape)
    return b


def resolve_limits(tol: Optional[float], max_iter: Optional[int], default_tol: float,
                   default_iter: int):
    """Fill unset tolerance / iteration cap from defaults; explicit values must be usable"""
    tol = default_tol if tol is None else tol
    max_iter = default_iter if max_iter is None else max_iter
    if not (tol > 0):
        raise ParameterDomainError(f"tolerance must be positive, got {tol}", "tol", tol)
    if int(max_iter) != max_iter or max_iter < 1:
        raise ParameterDomainError(f"iteration cap must be a positive integer, got {max_iter}",
                                   "max_iter", max_iter)
    return float(tol), int(max_iter)


def _jacobi(A: Operator) -> spla.LinearOperator:
    d = np.asarray(A.diagonal(), dtype=float)
    safe = np.where(np.abs(d) > 0, d, 1.0)
    inv = 1.0 / safe
    return spla.LinearOperator(A.shape, matvec=lambda r: inv * r, dtype=float)


def _residual(A: Operator, x: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(A @ x - b))


def _krylov(method: str, A: Operator, b: np.ndarray, tol: float, max_iter: int):
    """Run a Krylov method with restarts until the true residual meets tol"""
    op = A.as_linear_operator() if isinstance(A, RankOneCorrected) else A
    krylov = spla.cg if method == "cg" else spla.bicgstab
    precond = _jacobi(A)
    target = tol * np.linalg.norm(b)
    x = np.zeros_like(b)
    res = np.inf
    for _ in range(_MAX_RESTARTS + 1):
        x, info = krylov(op, b, x0=x, rtol=tol, atol=0.0, maxiter=max_iter, M=precond)
        res = _residual(A, x, b)
        if res <= target:
            return x, res
        if info < 0:
            break
    return None, res


def cg_solve(A: sp.spmatrix, b: np.ndarray, tol: float = None, max_iter: int = None) -> np.ndarray:
    """
    Jacobi-preconditioned conjugate gradients for SPD systems

    Raises:
        ConvergenceError: residual above tol * ||b|| after max_iter (with restarts)
    """
    settings = get_settings()
    tol, max_iter = resolve_limits(tol, max_iter, settings.LINEAR_TOL, settings.LINEAR_MAX_ITER)
    b = _check_system(A, b)
    if not np.any(b):
        return np.zeros_like(b)

    x, res = _krylov("cg", A, b, tol, max_iter)
    if x is None:
        record_linear_solve("cg", "error")
        raise ConvergenceError(
            f"CG did not reach relative residual {tol:.1e}", solver="cg",
            iterations=max_iter, residual=res / np.linalg.norm(b),
        )
    record_linear_solve("cg")
    return x


def dense_solve(A: Operator, b: np.ndarray) -> np.ndarray:
    """LU solve of the dense form of A"""
    dense = A.toarray()
    lu, piv = sla.lu_factor(dense)
    return sla.lu_solve((lu, piv), b)


def bicgstab_solve(A: Operator, b: np.ndarray, tol: float = None, max_iter: int = None,
                   dense_fallback: bool = True) -> np.ndarray:
    """
    Jacobi-preconditioned BiCGStab for general nonsingular systems

    Falls back to dense LU when the Krylov iteration breaks down and the
    dimension is at most DENSE_FALLBACK_DIM.
    """
    settings = get_settings()
    tol, max_iter = resolve_limits(tol, max_iter, settings.LINEAR_TOL, settings.LINEAR_MAX_ITER)
    b = _check_system(A, b)
    if not np.any(b):
        return np.zeros_like(b)

    x, res = _krylov("bicgstab", A, b, tol, max_iter)
    if x is not None:
        record_linear_solve("bicgstab")
        return x

    bnorm = np.linalg.norm(b)
    if dense_fallback and A.shape[0] <= settings.DENSE_FALLBACK_DIM:
        logger.warning("BiCGStab missed tolerance, using dense LU",
                       extra={"dim": A.shape[0], "residual": res / bnorm})
        x = dense_solve(A, b)
        res = _residual(A, x, b)
        if res <= tol * bnorm:
            record_linear_solve("dense_lu")
            return x

    record_linear_solve("bicgstab", "error")
    raise ConvergenceError(
        f"BiCGStab did not reach relative residual {tol:.1e}", solver="bicgstab",
        iterations=max_iter, residual=res / bnorm,
    )


def sherman_morrison_solve(base_solver: Callable[[np.ndarray], np.ndarray], u_vec: np.ndarray,
                           v_vec: np.ndarray, scale: float, b: np.ndarray) -> np.ndarray:
    """
    Solve (base + scale u v^T) x = b with two base solves

    Raises:
        SingularCorrectionError: |1 + scale v^T base^{-1} u| below 1e-14
    """
    y = base_solver(b)
    if scale == 0.0:
        return y
    z = base_solver(u_vec)
    denom = 1.0 + scale * float(v_vec @ z)
    if abs(denom) < 1e-14:
        raise SingularCorrectionError("rank-one correction is singular", denominator=denom)
    return y - (scale * float(v_vec @ y) / denom) * z


def solve_corrected(op: RankOneCorrected, b: np.ndarray, tol: float = None,
                    max_iter: int = None) -> np.ndarray:
    """Sherman-Morrison over BiCGStab base solves, residual-verified on the full operator"""
    settings = get_settings()
    tol, max_iter = resolve_limits(tol, max_iter, settings.LINEAR_TOL, settings.LINEAR_MAX_ITER)
    b = _check_system(op, b)
    x = sherman_morrison_solve(
        lambda rhs: bicgstab_solve(op.base, rhs, tol=tol, max_iter=max_iter),
        op.u_vec, op.v_vec, op.scale, b,
    )
    bnorm = np.linalg.norm(b)
    res = _residual(op, x, b)
    if bnorm > 0 and res > tol * bnorm:
        # the two base solves combine their errors; polish on the corrected operator
        logger.debug("Polishing Sherman-Morrison solution", extra={"residual": res / bnorm})
        x = x + bicgstab_solve(op, b - op @ x, tol=tol * bnorm / max(res, 1e-300), max_iter=max_iter)
        res = _residual(op, x, b)
        if res > tol * bnorm:
            raise ConvergenceError(
                "corrected solve missed tolerance", solver="sherman-morrison", residual=res / bnorm,
            )
    return x
