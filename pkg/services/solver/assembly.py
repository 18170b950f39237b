# services/solver/assembly.py
"""
Assembly of mass, stiffness, memory-operator and load objects on the P1 space
Discrete projections, the discrete Laplacian and error norms
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from shared.exceptions import DimensionMismatchError, QuadratureError

from .tri_mesh import P1Space, TriMesh, element_geometry

logger = logging.getLogger(__name__)

ScalarField = Callable[[np.ndarray, np.ndarray], np.ndarray]
VectorField = Callable[[np.ndarray, np.ndarray], np.ndarray]
MatrixField = Callable[[np.ndarray, np.ndarray], np.ndarray]
TimeFactor = Callable[[float], float]


@dataclass(frozen=True, eq=False)
class TriangleRule:
    """Symmetric triangle quadrature in barycentric form; weights sum to 1"""
    name: str
    degree: int
    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)


def _rule_7() -> TriangleRule:
    r = np.sqrt(15.0)
    a, b = (6.0 - r) / 21.0, (6.0 + r) / 21.0
    wa, wb = (155.0 - r) / 1200.0, (155.0 + r) / 1200.0
    points = np.array([
        [1 / 3, 1 / 3, 1 / 3],
        [a, a, 1 - 2 * a], [a, 1 - 2 * a, a], [1 - 2 * a, a, a],
        [b, b, 1 - 2 * b], [b, 1 - 2 * b, b], [1 - 2 * b, b, b],
    ])
    weights = np.array([9 / 40, wa, wa, wa, wb, wb, wb])
    return TriangleRule("strang-fix-7", 5, points, weights)


TRI_RULE_7 = _rule_7()


@dataclass(frozen=True, eq=False)
class QuadratureData:
    """Per-element geometry and physical quadrature points for one mesh"""
    mesh: TriMesh
    rule: TriangleRule
    grads: np.ndarray = field(repr=False)    # (nE, 3, 2)
    areas: np.ndarray = field(repr=False)    # (nE,)
    points: np.ndarray = field(repr=False)   # (nE, nq, 2)

    @property
    def x(self) -> np.ndarray:
        return self.points[..., 0]

    @property
    def y(self) -> np.ndarray:
        return self.points[..., 1]

    @property
    def weighted_areas(self) -> np.ndarray:
        """area_e * w_q, shape (nE, nq)"""
        return self.areas[:, None] * self.rule.weights[None, :]


@lru_cache(maxsize=32)
def quadrature_data(mesh: TriMesh, rule: TriangleRule = TRI_RULE_7) -> QuadratureData:
    grads, areas = element_geometry(mesh)
    corners = mesh.vertices[mesh.triangles]                      # (nE, 3, 2)
    points = np.einsum("qi,eid->eqd", rule.points, corners)
    return QuadratureData(mesh=mesh, rule=rule, grads=grads, areas=areas, points=points)


def _finite(values: np.ndarray, quantity: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise QuadratureError(f"non-finite {quantity} values at quadrature points", quantity)
    return values


def _scatter(space: P1Space, local: np.ndarray, full: bool = False) -> sp.csr_matrix:
    """Sum (nE, 3, 3) element matrices into CSR, interior dofs unless full"""
    tri = space.mesh.triangles
    rows = np.repeat(tri[:, :, None], 3, axis=2).ravel()
    cols = np.repeat(tri[:, None, :], 3, axis=1).ravel()
    vals = local.ravel()
    if full:
        n = space.mesh.n_vertices
    else:
        rows = space.dof_of_vertex[rows]
        cols = space.dof_of_vertex[cols]
        keep = (rows >= 0) & (cols >= 0)
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        n = space.n_dofs
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def is_symmetric(A: sp.spmatrix, rtol: float = 1e-12) -> bool:
    """|A - A^T|_max <= rtol * |A|_max"""
    diff = abs(A - A.T)
    scale = abs(A).max() if A.nnz else 0.0
    return (diff.max() if diff.nnz else 0.0) <= rtol * max(scale, np.finfo(float).tiny)


def assemble_mass(space: P1Space, full: bool = False) -> sp.csr_matrix:
    """Consistent P1 mass matrix, local A/12 * (2 on diagonal, 1 off)"""
    qd = quadrature_data(space.mesh)
    pattern = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = qd.areas[:, None, None] * pattern[None, :, :]
    return _scatter(space, local, full)


def assemble_stiffness(space: P1Space, full: bool = False) -> sp.csr_matrix:
    """P1 stiffness matrix (grad phi_j, grad phi_i)"""
    qd = quadrature_data(space.mesh)
    local = qd.areas[:, None, None] * np.einsum("eid,ejd->eij", qd.grads, qd.grads)
    return _scatter(space, local, full)


def constant_matrix_field(value) -> MatrixField:
    value = np.asarray(value, dtype=float)
    return lambda x, y: np.broadcast_to(value, np.shape(x) + (2, 2))


def constant_vector_field(value) -> VectorField:
    value = np.asarray(value, dtype=float)
    return lambda x, y: np.broadcast_to(value, np.shape(x) + (2,))


def constant_scalar_field(value: float) -> ScalarField:
    return lambda x, y: np.full(np.shape(x), float(value))


@dataclass(frozen=True)
class MemoryTerm:
    """
    One separable memory term phi(t) psi(s) (c2(x), c1(x), c0(x))

    Spatial parts are vectorized fields; None means the part vanishes.
    psi_moment(t, alpha) = int_0^t psi(s) s^alpha ds and the divergences
    div_c2 (row-wise) and div_c1 are only needed for manufactured forcing checks.
    """
    phi: TimeFactor
    psi: TimeFactor
    c2: Optional[MatrixField] = None
    c1: Optional[VectorField] = None
    c0: Optional[ScalarField] = None
    diffusive: bool = True
    psi_moment: Optional[Callable[[float, float], float]] = None
    div_c2: Optional[VectorField] = None
    div_c1: Optional[ScalarField] = None


@dataclass(frozen=True)
class MemoryCoefficient:
    """b2, b1, b0 as sums of separable terms"""
    terms: Tuple[MemoryTerm, ...] = ()

    @property
    def is_zero(self) -> bool:
        return len(self.terms) == 0

    def b2(self, x, y, t: float, s: float) -> np.ndarray:
        out = np.zeros(np.shape(x) + (2, 2))
        for term in self.terms:
            if term.c2 is not None:
                out = out + term.phi(t) * term.psi(s) * term.c2(x, y)
        return out

    def b1(self, x, y, t: float, s: float) -> np.ndarray:
        out = np.zeros(np.shape(x) + (2,))
        for term in self.terms:
            if term.c1 is not None:
                out = out + term.phi(t) * term.psi(s) * term.c1(x, y)
        return out

    def b0(self, x, y, t: float, s: float) -> np.ndarray:
        out = np.zeros(np.shape(x))
        for term in self.terms:
            if term.c0 is not None:
                out = out + term.phi(t) * term.psi(s) * term.c0(x, y)
        return out

    def check_diffusive(self, points: np.ndarray) -> bool:
        """c2 symmetric positive semidefinite at the given (k, 2) points"""
        for term in self.terms:
            if term.c2 is None or not term.diffusive:
                continue
            mats = np.asarray(term.c2(points[:, 0], points[:, 1]))
            if not np.allclose(mats, np.swapaxes(mats, -1, -2), atol=1e-14):
                return False
            if np.min(np.linalg.eigvalsh(mats)) < -1e-14:
                return False
        return True


def assemble_memory_matrix(space: P1Space, term: MemoryTerm, full: bool = False) -> sp.csr_matrix:
    """
    Spatial factor B_k of one memory term:
    (c2 grad phi_j, grad phi_i) - (c1 phi_j, grad phi_i) + (c0 phi_j, phi_i)
    """
    qd = quadrature_data(space.mesh)
    wa = qd.weighted_areas                    # (nE, nq)
    lam = qd.rule.points                      # (nq, 3)
    local = np.zeros((space.mesh.n_triangles, 3, 3))

    if term.c2 is not None:
        c2 = _finite(term.c2(qd.x, qd.y), "c2")                     # (nE, nq, 2, 2)
        c2_avg = np.einsum("eq,eqab->eab", wa, c2)
        local += np.einsum("eia,eab,ejb->eij", qd.grads, c2_avg, qd.grads)
    if term.c1 is not None:
        c1 = _finite(term.c1(qd.x, qd.y), "c1")                     # (nE, nq, 2)
        local -= np.einsum("eq,eqa,qj,eia->eij", wa, c1, lam, qd.grads)
    if term.c0 is not None:
        c0 = _finite(term.c0(qd.x, qd.y), "c0")                     # (nE, nq)
        local += np.einsum("eq,eq,qi,qj->eij", wa, c0, lam, lam)

    return _scatter(space, local, full)


class LoadAssembler:
    """Precomputed map from quadrature-point values to the interior load vector"""

    def __init__(self, space: P1Space, rule: TriangleRule = TRI_RULE_7):
        self.space = space
        self.qd = quadrature_data(space.mesh, rule)
        nE, nq = self.qd.x.shape
        tri = space.mesh.triangles
        # weight of point (e, q) in dof row of vertex tri[e, i]
        weights = self.qd.weighted_areas[:, :, None] * rule.points[None, :, :]   # (nE, nq, 3)
        rows = space.dof_of_vertex[np.repeat(tri[:, None, :], nq, axis=1)]
        cols = np.broadcast_to(np.arange(nE * nq).reshape(nE, nq, 1), (nE, nq, 3))
        keep = rows >= 0
        self._map = sp.csr_matrix(
            (weights[keep], (rows[keep], cols[keep])), shape=(space.n_dofs, nE * nq)
        )

    def __call__(self, values: np.ndarray) -> np.ndarray:
        values = _finite(values, "load")
        return self._map @ values.ravel()

    def assemble(self, f: ScalarField) -> np.ndarray:
        return self(f(self.qd.x, self.qd.y))


def assemble_load(space: P1Space, f: ScalarField) -> np.ndarray:
    """Interior vector (f, phi_i) by the degree-5 rule"""
    return LoadAssembler(space).assemble(f)


def _gradient_load(space: P1Space, grad_field: VectorField) -> np.ndarray:
    """(grad u, grad phi_i) by quadrature"""
    qd = quadrature_data(space.mesh)
    g = _finite(grad_field(qd.x, qd.y), "gradient")              # (nE, nq, 2)
    g_avg = np.einsum("eq,eqd->ed", qd.weighted_areas, g)
    local = np.einsum("ed,eid->ei", g_avg, qd.grads)
    dofs = space.dof_of_vertex[space.mesh.triangles].ravel()
    keep = dofs >= 0
    return np.bincount(dofs[keep], weights=local.ravel()[keep], minlength=space.n_dofs)


def ritz_projection(space: P1Space, u0_grad: Optional[VectorField],
                    stiffness: Optional[sp.csr_matrix] = None, tol: float = None) -> np.ndarray:
    """
    Ritz projection R_h u0: (grad R_h u0, grad v) = (grad u0, grad v)

    Args:
        space: P1 space
        u0_grad: gradient of u0 (vectorized); None for u0 = 0
        stiffness: interior stiffness, assembled if omitted
        tol: relative residual for CG
    """
    from .linalg import cg_solve

    if u0_grad is None:
        return np.zeros(space.n_dofs)
    K = stiffness if stiffness is not None else assemble_stiffness(space)
    rhs = _gradient_load(space, u0_grad)
    return cg_solve(K, rhs, tol=tol)


def l2_projection(space: P1Space, g: Optional[ScalarField],
                  mass: Optional[sp.csr_matrix] = None, tol: float = None) -> np.ndarray:
    """L2 projection P_h g: (P_h g, v) = (g, v)"""
    from .linalg import cg_solve

    if g is None:
        return np.zeros(space.n_dofs)
    M = mass if mass is not None else assemble_mass(space)
    return cg_solve(M, assemble_load(space, g), tol=tol)


def discrete_laplacian(mass: sp.csr_matrix, stiffness: sp.csr_matrix, U: np.ndarray,
                       tol: float = None) -> np.ndarray:
    """Delta_h u_h with (Delta_h u_h, v) = -(grad u_h, grad v)"""
    from .linalg import cg_solve

    return -cg_solve(mass, stiffness @ _check_dofs(U, stiffness), tol=tol)


def interpolate(space: P1Space, f: ScalarField) -> np.ndarray:
    """Nodal interpolant on interior dofs"""
    coords = space.dof_coords
    return _finite(f(coords[:, 0], coords[:, 1]), "interpolant")


def _check_dofs(U: np.ndarray, A: sp.spmatrix) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    if U.shape != (A.shape[1],):
        raise DimensionMismatchError("vector does not match operator", expected=A.shape[1], actual=U.shape)
    return U


def grad_norm_sq(U: np.ndarray, K: sp.csr_matrix) -> float:
    """||grad u_h||^2 = U^T K U"""
    U = _check_dofs(U, K)
    return float(U @ (K @ U))


def mass_norm(U: np.ndarray, M: sp.csr_matrix) -> float:
    """||u_h|| = sqrt(U^T M U)"""
    U = _check_dofs(U, M)
    return float(np.sqrt(max(U @ (M @ U), 0.0)))


class ErrorEvaluator:
    """L2 and H1-seminorm errors against an analytic field, reusable across time levels"""

    def __init__(self, space: P1Space, rule: TriangleRule = TRI_RULE_7):
        self.space = space
        self.qd = quadrature_data(space.mesh, rule)

    def __call__(self, U: np.ndarray, exact_values: np.ndarray,
                 exact_grad_values: np.ndarray) -> Tuple[float, float]:
        qd = self.qd
        local = self.space.to_full(U)[self.space.mesh.triangles]        # (nE, 3)
        uh = local @ qd.rule.points.T                                   # (nE, nq)
        grad_uh = np.einsum("ei,eid->ed", local, qd.grads)              # (nE, 2)
        exact_values = _finite(exact_values, "exact solution")
        exact_grad_values = _finite(exact_grad_values, "exact gradient")
        wa = qd.weighted_areas
        l2_sq = np.sum(wa * (exact_values - uh) ** 2)
        h1_sq = np.sum(wa * np.sum((exact_grad_values - grad_uh[:, None, :]) ** 2, axis=-1))
        return float(np.sqrt(l2_sq)), float(np.sqrt(h1_sq))

    def fields(self, U: np.ndarray, exact: ScalarField, exact_grad: VectorField) -> Tuple[float, float]:
        x, y = self.qd.x, self.qd.y
        return self(U, exact(x, y), exact_grad(x, y))


def error_norms(space: P1Space, U: np.ndarray, exact: ScalarField,
                exact_grad: VectorField) -> Tuple[float, float]:
    """(||u - u_h||, ||grad(u - u_h)||) by the degree-5 rule"""
    return ErrorEvaluator(space).fields(U, exact, exact_grad)


@dataclass
class AssembledOperators:
    """Mass, stiffness and memory factor matrices for one space"""
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    memory: List[sp.csr_matrix]


def assemble_operators(space: P1Space, memory: MemoryCoefficient) -> AssembledOperators:
    mass = assemble_mass(space)
    stiffness = assemble_stiffness(space)
    factors = [assemble_memory_matrix(space, term) for term in memory.terms]
    logger.debug("Assembled operators", extra={
        "n_dofs": space.n_dofs, "nnz_stiffness": int(stiffness.nnz), "memory_terms": len(factors),
    })
    return AssembledOperators(mass=mass, stiffness=stiffness, memory=factors)
