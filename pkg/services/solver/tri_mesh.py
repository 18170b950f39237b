# services/solver/tri_mesh.py
"""
Structured triangulation of the unit square and the P1 finite element space
Interior vertices carry the degrees of freedom (homogeneous Dirichlet data)
"""

import logging
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from shared.exceptions import DimensionMismatchError, MeshError, ParameterDomainError

logger = logging.getLogger(__name__)

# below this the triangle is treated as degenerate
_AREA_EPS = 1e-300


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Uniform triangulation of [0,1]^2 with P subdivisions per direction"""
    P: int
    vertices: np.ndarray = field(repr=False)
    triangles: np.ndarray = field(repr=False)
    boundary_mask: np.ndarray = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.P

    def triangle_coords(self, e: int) -> np.ndarray:
        """(3, 2) vertex coordinates of triangle e"""
        return self.vertices[self.triangles[e]]

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted vertex pairs"""
        t = self.triangles
        pairs = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        pairs.sort(axis=1)
        return np.unique(pairs, axis=0)

    def signed_areas(self) -> np.ndarray:
        c = self.vertices[self.triangles]
        return 0.5 * (
            (c[:, 1, 0] - c[:, 0, 0]) * (c[:, 2, 1] - c[:, 0, 1])
            - (c[:, 2, 0] - c[:, 0, 0]) * (c[:, 1, 1] - c[:, 0, 1])
        )

    def locate(self, x: float, y: float) -> int:
        """Index of a triangle containing (x, y)"""
        if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
            raise ParameterDomainError(f"point ({x}, {y}) lies outside the unit square", "point", (x, y))
        P = self.P
        i = min(int(x * P), P - 1)
        j = min(int(y * P), P - 1)
        cell = j * P + i
        # lower triangle (a, b, c) sits below the diagonal
        return 2 * cell if (x * P - i) >= (y * P - j) else 2 * cell + 1


def build_unit_square_mesh(P: int) -> TriMesh:
    """
    Uniform mesh with P+1 nodes per direction, every cell split along
    the lower-left to upper-right diagonal
    """
    if int(P) != P or P < 1:
        raise MeshError(f"number of subdivisions must be a positive integer, got {P}")
    P = int(P)

    ii, jj = np.meshgrid(np.arange(P + 1), np.arange(P + 1), indexing="xy")
    vertices = np.column_stack([ii.ravel() / P, jj.ravel() / P])

    ci, cj = np.meshgrid(np.arange(P), np.arange(P), indexing="xy")
    ci, cj = ci.ravel(), cj.ravel()
    a = cj * (P + 1) + ci
    b = a + 1
    c = a + P + 2
    d = a + P + 1
    triangles = np.empty((2 * P * P, 3), dtype=np.int64)
    triangles[0::2] = np.column_stack([a, b, c])
    triangles[1::2] = np.column_stack([a, c, d])

    x, y = vertices[:, 0], vertices[:, 1]
    boundary_mask = (x == 0.0) | (x == 1.0) | (y == 0.0) | (y == 1.0)

    for arr in (vertices, triangles, boundary_mask):
        arr.setflags(write=False)

    logger.debug("Built unit square mesh", extra={"P": P, "triangles": len(triangles)})
    return TriMesh(P=P, vertices=vertices, triangles=triangles, boundary_mask=boundary_mask)


@dataclass(frozen=True, eq=False)
class P1Space:
    """Continuous piecewise linears vanishing on the boundary"""
    mesh: TriMesh
    dof_of_vertex: np.ndarray = field(repr=False)
    vertex_of_dof: np.ndarray = field(repr=False)

    @property
    def n_dofs(self) -> int:
        return self.vertex_of_dof.shape[0]

    @property
    def dof_coords(self) -> np.ndarray:
        return self.mesh.vertices[self.vertex_of_dof]

    def to_full(self, U: np.ndarray) -> np.ndarray:
        """Extend interior coefficients by zero boundary values"""
        U = np.asarray(U, dtype=float)
        if U.shape != (self.n_dofs,):
            raise DimensionMismatchError("dof vector has wrong length", expected=self.n_dofs, actual=U.shape)
        full = np.zeros(self.mesh.n_vertices)
        full[self.vertex_of_dof] = U
        return full

    def restrict(self, values: np.ndarray) -> np.ndarray:
        """Interior part of a full-vertex vector"""
        return np.asarray(values, dtype=float)[self.vertex_of_dof]

    def evaluate(self, U: np.ndarray, x: float, y: float) -> float:
        """Value of the P1 function with coefficients U at (x, y)"""
        e = self.mesh.locate(x, y)
        lam = barycentric(self.mesh.triangle_coords(e), x, y)
        return float(lam @ self.to_full(U)[self.mesh.triangles[e]])

    def gradient(self, U: np.ndarray, x: float, y: float) -> np.ndarray:
        """Gradient of the P1 function at a point inside a triangle"""
        e = self.mesh.locate(x, y)
        grads, _ = p1_basis_gradients(self.mesh.triangle_coords(e))
        return self.to_full(U)[self.mesh.triangles[e]] @ grads


def build_p1_space(mesh: TriMesh) -> P1Space:
    interior = np.flatnonzero(~mesh.boundary_mask)
    dof_of_vertex = np.full(mesh.n_vertices, -1, dtype=np.int64)
    dof_of_vertex[interior] = np.arange(interior.size)
    for arr in (dof_of_vertex, interior):
        arr.setflags(write=False)
    return P1Space(mesh=mesh, dof_of_vertex=dof_of_vertex, vertex_of_dof=interior)


def p1_basis_gradients(coords: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    Constant gradients of the three nodal hat functions on one triangle

    Args:
        coords: (3, 2) vertex coordinates

    Returns:
        (grads, area): grads[i] is the gradient of the hat at vertex i
    """
    coords = np.asarray(coords, dtype=float)
    if coords.shape != (3, 2):
        raise DimensionMismatchError("triangle needs (3, 2) coordinates", expected=(3, 2), actual=coords.shape)
    (x0, y0), (x1, y1), (x2, y2) = coords
    area2 = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    if abs(area2) <= _AREA_EPS or not np.isfinite(area2):
        raise MeshError("degenerate triangle with zero area")
    grads = np.array([
        [y1 - y2, x2 - x1],
        [y2 - y0, x0 - x2],
        [y0 - y1, x1 - x0],
    ]) / area2
    return grads, 0.5 * abs(area2)


def element_geometry(mesh: TriMesh) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized p1_basis_gradients over all triangles: (nE, 3, 2) and (nE,)"""
    c = mesh.vertices[mesh.triangles]
    x, y = c[:, :, 0], c[:, :, 1]
    area2 = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    bad = np.flatnonzero(np.abs(area2) <= _AREA_EPS)
    if bad.size:
        raise MeshError("degenerate triangle with zero area", element=int(bad[0]))
    grads = np.empty((mesh.n_triangles, 3, 2))
    grads[:, 0, 0] = y[:, 1] - y[:, 2]
    grads[:, 0, 1] = x[:, 2] - x[:, 1]
    grads[:, 1, 0] = y[:, 2] - y[:, 0]
    grads[:, 1, 1] = x[:, 0] - x[:, 2]
    grads[:, 2, 0] = y[:, 0] - y[:, 1]
    grads[:, 2, 1] = x[:, 1] - x[:, 0]
    grads /= area2[:, None, None]
    return grads, 0.5 * np.abs(area2)


def barycentric(coords: np.ndarray, x: float, y: float) -> np.ndarray:
    """Barycentric coordinates (local hat values) of (x, y) in a triangle"""
    coords = np.asarray(coords, dtype=float)
    grads, _ = p1_basis_gradients(coords)
    # each hat is 1 at its own vertex and linear
    offsets = np.array([x, y]) - coords
    return 1.0 + np.einsum("ij,ij->i", grads, offsets)
