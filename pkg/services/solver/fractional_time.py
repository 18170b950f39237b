# services/solver/fractional_time.py
"""
Graded temporal meshes and the L1 approximation of the Caputo derivative
Discrete kernels, history sums and the two-level extrapolation
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.special import gamma as _gamma

from shared.exceptions import DimensionMismatchError, ParameterDomainError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, Sequence[float]]


@dataclass(frozen=True)
class GradedTimeMesh:
    """Time partition t_n = T (n/N)^delta of [0, T]"""
    T: float
    N: int
    delta: float
    nodes: np.ndarray = field(repr=False)
    steps: np.ndarray = field(repr=False)

    def tau(self, n: int) -> float:
        """Step size tau_n = t_n - t_{n-1}, 1 <= n <= N"""
        return float(self.steps[n - 1])

    @property
    def max_step_ratio(self) -> float:
        if self.N < 2:
            return 1.0
        return float(np.max(self.steps[1:] / self.steps[:-1]))


@dataclass(frozen=True)
class L1KernelRow:
    """Discrete kernels (k_{n,1}, ..., k_{n,n}) for one time level; k_{n,0} = 0"""
    n: int
    alpha: float
    kernels: np.ndarray = field(repr=False)

    @property
    def diagonal(self) -> float:
        """k_{n,n}"""
        return float(self.kernels[-1])

    @property
    def increments(self) -> np.ndarray:
        """k_{n,j} - k_{n,j-1} for j = 1..n"""
        return np.diff(self.kernels, prepend=0.0)


def _check_alpha(alpha: float) -> None:
    if not (0.0 < alpha < 1.0):
        raise ParameterDomainError(f"alpha must lie in (0, 1), got {alpha}", "alpha", alpha)


def build_graded_mesh(T: float, N: int, delta: float) -> GradedTimeMesh:
    """
    Build the graded mesh t_n = T (n/N)^delta

    Args:
        T: final time, positive
        N: number of time steps, at least 1
        delta: grading exponent, at least 1 (delta = 1 is the uniform mesh)

    Returns:
        GradedTimeMesh with N+1 nodes and N steps
    """
    if not (T > 0):
        raise ParameterDomainError(f"final time must be positive, got {T}", "T", T)
    if int(N) != N or N < 1:
        raise ParameterDomainError(f"number of steps must be a positive integer, got {N}", "N", N)
    if not (delta >= 1):
        raise ParameterDomainError(f"grading exponent must be >= 1, got {delta}", "delta", delta)

    N = int(N)
    # scalar pow per node so that re-evaluating T*(n/N)**delta reproduces nodes exactly
    nodes = np.array([T * (n / N) ** delta for n in range(N + 1)], dtype=float)
    nodes.setflags(write=False)
    steps = np.diff(nodes)
    steps.setflags(write=False)
    return GradedTimeMesh(T=float(T), N=N, delta=float(delta), nodes=nodes, steps=steps)


def optimal_grading(alpha: float) -> float:
    """Grading exponent (2 - alpha)/alpha giving temporal order 2 - alpha"""
    _check_alpha(alpha)
    return (2.0 - alpha) / alpha


def gamma_function(x: float) -> float:
    """Gamma function for positive arguments"""
    if not (x > 0) or not math.isfinite(x):
        raise ParameterDomainError(f"gamma_function requires x > 0, got {x}", "x", x)
    return float(_gamma(x))


def l1_kernels(mesh: GradedTimeMesh, alpha: float, n: int) -> L1KernelRow:
    """
    L1 kernels of level n from the closed-form power difference

    k_{n,j} = [(t_n - t_{j-1})^{1-alpha} - (t_n - t_j)^{1-alpha}] / (tau_j Gamma(2-alpha))
    """
    _check_alpha(alpha)
    if int(n) != n or not (1 <= n <= mesh.N):
        raise ParameterDomainError(f"level must satisfy 1 <= n <= {mesh.N}, got {n}", "n", n)
    n = int(n)

    t_n = mesh.nodes[n]
    beta = 1.0 - alpha
    left = (t_n - mesh.nodes[:n]) ** beta
    right = (t_n - mesh.nodes[1:n + 1]) ** beta
    kernels = (left - right) / (mesh.steps[:n] * gamma_function(2.0 - alpha))
    kernels.setflags(write=False)
    return L1KernelRow(n=n, alpha=float(alpha), kernels=kernels)


def _as_history(history, n: int) -> np.ndarray:
    if isinstance(history, np.ndarray):
        arr = np.asarray(history, dtype=float)
    else:
        shapes = {np.shape(h) for h in history}
        if len(shapes) > 1:
            raise DimensionMismatchError(
                "history vectors have inconsistent dimensions", expected=None, actual=sorted(shapes)
            )
        arr = np.asarray(history, dtype=float)
    if arr.shape[0] != n:
        raise DimensionMismatchError(
            f"history must hold exactly {n} levels", expected=n, actual=arr.shape[0]
        )
    return arr


def caputo_history_sum(kernels: L1KernelRow, history) -> np.ndarray:
    """
    H^n = sum_{j=1}^{n} (k_{n,j} - k_{n,j-1}) U^{j-1}

    Args:
        kernels: kernel row of level n
        history: U^0..U^{n-1}, a sequence of equal-length vectors, an (n, dim)
            array, or n scalars

    Returns:
        H^n with the shape of one history entry
    """
    arr = _as_history(history, kernels.n)
    return kernels.increments @ arr


def caputo_apply(kernels: L1KernelRow, history, current: ArrayLike) -> np.ndarray:
    """Discrete Caputo operator k_{n,n} U^n - H^n"""
    current = np.asarray(current, dtype=float)
    hist = caputo_history_sum(kernels, history)
    if np.shape(hist) != current.shape:
        raise DimensionMismatchError(
            "current level does not match history dimension",
            expected=np.shape(hist), actual=current.shape,
        )
    return kernels.diagonal * current - hist


def extrapolate(u_prev: ArrayLike, u_prev2: ArrayLike, tau_n: float, tau_prev: float) -> np.ndarray:
    """(1 + tau_n/tau_prev) u_prev - (tau_n/tau_prev) u_prev2"""
    if not (tau_prev > 0):
        raise ParameterDomainError(f"previous step must be positive, got {tau_prev}", "tau_prev", tau_prev)
    u_prev = np.asarray(u_prev, dtype=float)
    u_prev2 = np.asarray(u_prev2, dtype=float)
    if u_prev.shape != u_prev2.shape:
        raise DimensionMismatchError(
            "extrapolation levels differ in dimension", expected=u_prev.shape, actual=u_prev2.shape
        )
    ratio = tau_n / tau_prev
    return (1.0 + ratio) * u_prev - ratio * u_prev2


def weighted_norm(mass_norm: float, grad_norm: float, tau_n: float, alpha: float) -> float:
    """|||v||| = ||v|| + tau_n^{alpha/2} ||grad v||"""
    return float(mass_norm + tau_n ** (alpha / 2.0) * grad_norm)
