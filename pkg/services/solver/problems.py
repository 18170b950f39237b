# services/solver/problems.py
"""
Manufactured-solution problem bank
Exact solutions u = t^alpha w(x, y) with hand-derived forcing terms
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from shared.exceptions import ParameterDomainError

from .assembly import MemoryCoefficient, MemoryTerm, ScalarField, VectorField
from .fractional_time import gamma_function

logger = logging.getLogger(__name__)

PI = math.pi


@dataclass(frozen=True)
class ProblemSpec:
    """
    Problem data with exact solution u(x, y, t) = t^alpha w(x, y)

    The forcing is a hand-expanded closed form; pde_residual re-evaluates the
    operator from the profile derivatives and coefficient fields.
    """
    id: str
    alpha: float
    profile: ScalarField
    profile_grad: VectorField
    profile_hessian: Callable[[np.ndarray, np.ndarray], np.ndarray]
    M_fn: Callable[[float], float]
    M_prime: Callable[[float], float]
    memory: MemoryCoefficient
    forcing: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    energy_constant: float
    u0_field: Optional[ScalarField] = None
    u0_grad: Optional[VectorField] = None

    def exact(self, x, y, t: float) -> np.ndarray:
        return t ** self.alpha * self.profile(x, y)

    def exact_grad(self, x, y, t: float) -> np.ndarray:
        return t ** self.alpha * self.profile_grad(x, y)

    def grad_norm_sq(self, t: float) -> float:
        """||grad u(t)||^2 = C t^{2 alpha}"""
        return self.energy_constant * t ** (2.0 * self.alpha)


def spatial_energy_constant(grad: VectorField, order: int = 20) -> float:
    """int_{[0,1]^2} |grad w|^2 by tensor Gauss-Legendre quadrature"""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    s = 0.5 * (nodes + 1.0)
    w = 0.5 * weights
    X, Y = np.meshgrid(s, s, indexing="ij")
    W = np.outer(w, w)
    g = grad(X, Y)
    return float(np.sum(W * np.sum(g ** 2, axis=-1)))


def _check_alpha(alpha: float) -> None:
    if not (0.0 < alpha < 1.0):
        raise ParameterDomainError(f"alpha must lie in (0, 1), got {alpha}", "alpha", alpha)


def _kirchhoff(s):
    return 1.0 + s


def _kirchhoff_prime(s):
    return 1.0


# --- kirchhoff-sin: w = (x-1)(y-1) sin(pi x) sin(pi y), b2 = I -------------------

def _g(x):
    return (x - 1.0) * np.sin(PI * x)


def _dg(x):
    return np.sin(PI * x) + PI * (x - 1.0) * np.cos(PI * x)


def _d2g(x):
    return 2.0 * PI * np.cos(PI * x) - PI ** 2 * (x - 1.0) * np.sin(PI * x)


def _sin_profile(x, y):
    return _g(x) * _g(y)


def _sin_grad(x, y):
    return np.stack([_dg(x) * _g(y), _g(x) * _dg(y)], axis=-1)


def _sin_hessian(x, y):
    xy = _dg(x) * _dg(y)
    return np.stack([
        np.stack([_d2g(x) * _g(y), xy], axis=-1),
        np.stack([xy, _g(x) * _d2g(y)], axis=-1),
    ], axis=-2)


def example_51(alpha: float) -> ProblemSpec:
    """u = t^alpha (x-1)(y-1) sin(pi x) sin(pi y), M(s) = 1 + s, b2 = I, b1 = b0 = 0"""
    _check_alpha(alpha)
    gamma_1a = gamma_function(1.0 + alpha)
    C = spatial_energy_constant(_sin_grad)

    term = MemoryTerm(
        phi=lambda t: 1.0,
        psi=lambda s: 1.0,
        c2=lambda x, y: np.broadcast_to(np.eye(2), np.shape(x) + (2, 2)),
        psi_moment=lambda t, a: t ** (1.0 + a) / (1.0 + a),
        div_c2=lambda x, y: np.zeros(np.shape(x) + (2,)),
    )

    def forcing(x, y, t):
        gx, gy = (x - 1.0) * np.sin(PI * x), (y - 1.0) * np.sin(PI * y)
        lap = (
            (2.0 * PI * np.cos(PI * x) - PI ** 2 * (x - 1.0) * np.sin(PI * x)) * gy
            + gx * (2.0 * PI * np.cos(PI * y) - PI ** 2 * (y - 1.0) * np.sin(PI * y))
        )
        ta = t ** alpha
        return (
            gamma_1a * gx * gy
            - (1.0 + C * ta * ta) * ta * lap
            + t ** (1.0 + alpha) / (1.0 + alpha) * lap
        )

    return ProblemSpec(
        id="kirchhoff-sin", alpha=alpha,
        profile=_sin_profile, profile_grad=_sin_grad, profile_hessian=_sin_hessian,
        M_fn=_kirchhoff, M_prime=_kirchhoff_prime,
        memory=MemoryCoefficient((term,)), forcing=forcing, energy_constant=C,
    )


# --- kirchhoff-poly: w = (x-x^2)(y-y^2), (1+t)(1+s) variable coefficients ---------

def _poly_profile(x, y):
    return (x - x * x) * (y - y * y)


def _poly_grad(x, y):
    return np.stack([(1.0 - 2.0 * x) * (y - y * y), (x - x * x) * (1.0 - 2.0 * y)], axis=-1)


def _poly_hessian(x, y):
    xy = (1.0 - 2.0 * x) * (1.0 - 2.0 * y)
    return np.stack([
        np.stack([-2.0 * (y - y * y), xy], axis=-1),
        np.stack([xy, -2.0 * (x - x * x)], axis=-1),
    ], axis=-2)


def _poly_c2(x, y):
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape + (2, 2))
    out[..., 0, 0] = 1.0 + x
    out[..., 1, 1] = 1.0 + np.asarray(y, dtype=float)
    return out


def example_52(alpha: float) -> ProblemSpec:
    """u = t^alpha (x-x^2)(y-y^2), M(s) = 1 + s, memory (1+t)(1+s)(diag(1+x,1+y), (x,y), xy)"""
    _check_alpha(alpha)
    gamma_1a = gamma_function(1.0 + alpha)
    C = spatial_energy_constant(_poly_grad)

    def moment(t, a):
        return t ** (1.0 + a) / (1.0 + a) + t ** (2.0 + a) / (2.0 + a)

    term = MemoryTerm(
        phi=lambda t: 1.0 + t,
        psi=lambda s: 1.0 + s,
        c2=_poly_c2,
        c1=lambda x, y: np.stack(np.broadcast_arrays(x, y), axis=-1).astype(float),
        c0=lambda x, y: np.asarray(x * y, dtype=float),
        psi_moment=moment,
        div_c2=lambda x, y: np.ones(np.shape(x) + (2,)),
        div_c1=lambda x, y: np.full(np.shape(x), 2.0),
    )

    def forcing(x, y, t):
        px, py = x - x * x, y - y * y
        w = px * py
        wx, wy = (1.0 - 2.0 * x) * py, px * (1.0 - 2.0 * y)
        image = (
            (x - 1.0) * wx + (y - 1.0) * wy
            + 2.0 * (1.0 + x) * py + 2.0 * (1.0 + y) * px
            + (2.0 + x * y) * w
        )
        ta = t ** alpha
        return (
            gamma_1a * w
            + 2.0 * (1.0 + C * ta * ta) * ta * (px + py)
            - (1.0 + t) * moment(t, alpha) * image
        )

    return ProblemSpec(
        id="kirchhoff-poly", alpha=alpha,
        profile=_poly_profile, profile_grad=_poly_grad, profile_hessian=_poly_hessian,
        M_fn=_kirchhoff, M_prime=_kirchhoff_prime,
        memory=MemoryCoefficient((term,)), forcing=forcing, energy_constant=C,
    )


PROBLEMS: Dict[str, Callable[[float], ProblemSpec]] = {
    "kirchhoff-sin": example_51,
    "kirchhoff-poly": example_52,
}


def get_problem(problem_id: str, alpha: float) -> ProblemSpec:
    try:
        factory = PROBLEMS[problem_id]
    except KeyError:
        raise ParameterDomainError(
            f"unknown problem '{problem_id}', expected one of {sorted(PROBLEMS)}", "problem", problem_id
        ) from None
    return factory(alpha)


def memory_image(term: MemoryTerm, spec: ProblemSpec, x, y) -> np.ndarray:
    """-div(c2 grad w) + div(c1 w) + c0 w from coefficient divergences and the Hessian of w"""
    w = spec.profile(x, y)
    grad = spec.profile_grad(x, y)
    out = np.zeros(np.shape(w))
    if term.c2 is not None:
        hess = spec.profile_hessian(x, y)
        out -= np.einsum("...a,...a->...", term.div_c2(x, y), grad)
        out -= np.einsum("...ab,...ab->...", term.c2(x, y), hess)
    if term.c1 is not None:
        out += term.div_c1(x, y) * w + np.einsum("...a,...a->...", term.c1(x, y), grad)
    if term.c0 is not None:
        out += term.c0(x, y) * w
    return out


def pde_residual(spec: ProblemSpec, x, y, t: float) -> np.ndarray:
    """
    Caputo(u) - M(||grad u||^2) Lap(u) - int_0^t b u ds - f at (x, y, t)

    Uses D^alpha t^alpha = Gamma(1+alpha) and the analytic memory moments;
    vanishes up to rounding when the forcing is consistent.
    """
    if not (t > 0):
        raise ParameterDomainError(f"pde_residual requires t > 0, got {t}", "t", t)
    a = spec.alpha
    caputo = gamma_function(1.0 + a) * spec.profile(x, y)
    laplacian = np.trace(spec.profile_hessian(x, y), axis1=-2, axis2=-1)
    diffusion = spec.M_fn(spec.grad_norm_sq(t)) * t ** a * laplacian
    memory = np.zeros(np.shape(caputo))
    for term in spec.memory.terms:
        memory = memory + term.phi(t) * term.psi_moment(t, a) * memory_image(term, spec, x, y)
    return caputo - diffusion - memory - spec.forcing(x, y, t)
