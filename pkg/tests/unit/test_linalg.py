# tests/unit/test_linalg.py
"""
Unit tests for the Krylov solvers, dense fallback and rank-one corrected operators
"""

import numpy as np
import pytest
import scipy.sparse as sp

from shared.exceptions import (
    ConvergenceError, DimensionMismatchError, ParameterDomainError, SingularCorrectionError,
)
from services.solver.assembly import (
    MemoryTerm, assemble_mass, assemble_memory_matrix, assemble_stiffness, constant_vector_field,
)
from services.solver.fractional_time import l1_kernels
from services.solver.linalg import (
    RankOneCorrected, bicgstab_solve, cg_solve, dense_solve, resolve_limits, sherman_morrison_solve,
    solve_corrected,
)
from services.solver.problems import example_52
from services.solver.scheme import build_problem
from services.solver.tri_mesh import build_p1_space, build_unit_square_mesh


@pytest.fixture(scope="module")
def space():
    return build_p1_space(build_unit_square_mesh(16))


@pytest.fixture(scope="module")
def spd(space):
    return (50.0 * assemble_mass(space) + assemble_stiffness(space)).tocsr()


@pytest.fixture(scope="module")
def nonsymmetric(space, spd):
    term = MemoryTerm(phi=lambda t: 1.0, psi=lambda s: 1.0, c1=constant_vector_field([3.0, 1.0]))
    return (spd - assemble_memory_matrix(space, term)).tocsr()


@pytest.fixture
def rhs(space):
    rng = np.random.default_rng(7)
    return rng.standard_normal(space.n_dofs)


def relative_residual(A, x, b):
    return np.linalg.norm(A @ x - b) / np.linalg.norm(b)


class TestConjugateGradient:

    def test_solves_spd_system(self, spd, rhs):
        x = cg_solve(spd, rhs, tol=1e-11)
        assert relative_residual(spd, x, rhs) <= 1e-11

    def test_zero_rhs(self, spd):
        x = cg_solve(spd, np.zeros(spd.shape[0]))
        assert not np.any(x)

    def test_dimension_mismatch(self, spd):
        with pytest.raises(DimensionMismatchError):
            cg_solve(spd, np.ones(3))

    def test_reports_non_convergence(self, space, rhs):
        K = assemble_stiffness(space)
        with pytest.raises(ConvergenceError) as exc_info:
            cg_solve(K, rhs, tol=1e-14, max_iter=1)
        assert exc_info.value.error_code == "CONVERGENCE_ERROR"
        assert exc_info.value.details["solver"] == "cg"


class TestBiCGStab:

    def test_solves_nonsymmetric_system(self, nonsymmetric, rhs):
        x = bicgstab_solve(nonsymmetric, rhs, tol=1e-11)
        assert relative_residual(nonsymmetric, x, rhs) <= 1e-11

    def test_dense_fallback(self, nonsymmetric, rhs):
        """A starved iteration falls back to LU on small systems"""
        x = bicgstab_solve(nonsymmetric, rhs, tol=1e-12, max_iter=1)
        assert relative_residual(nonsymmetric, x, rhs) <= 1e-12

    def test_no_fallback_raises(self, nonsymmetric, rhs):
        with pytest.raises(ConvergenceError):
            bicgstab_solve(nonsymmetric, rhs, tol=1e-14, max_iter=1, dense_fallback=False)

    def test_dense_solve(self, nonsymmetric, rhs):
        x = dense_solve(nonsymmetric, rhs)
        np.testing.assert_allclose(nonsymmetric @ x, rhs, atol=1e-10)


class TestRankOneCorrection:
    """base + scale u v^T"""

    @pytest.fixture
    def corrected(self, spd, space):
        rng = np.random.default_rng(3)
        u = rng.standard_normal(space.n_dofs)
        return RankOneCorrected(spd, u, u.copy(), 0.7)

    def test_operator_views_agree(self, corrected):
        dense = corrected.toarray()
        x = np.linspace(-1.0, 1.0, corrected.shape[0])
        np.testing.assert_allclose(corrected @ x, dense @ x, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(corrected.diagonal(), np.diag(dense))
        np.testing.assert_allclose(corrected.as_linear_operator() @ x, dense @ x, rtol=1e-12, atol=1e-12)

    def test_rejects_mismatched_vectors(self, spd):
        with pytest.raises(DimensionMismatchError):
            RankOneCorrected(spd, np.ones(3), np.ones(3), 1.0)

    def test_sherman_morrison_matches_dense(self, corrected, rhs):
        base = corrected.base.toarray()
        x = sherman_morrison_solve(lambda b: np.linalg.solve(base, b), corrected.u_vec, corrected.v_vec,
                                   corrected.scale, rhs)
        np.testing.assert_allclose(x, np.linalg.solve(corrected.toarray(), rhs), rtol=1e-9, atol=1e-12)

    def test_zero_scale_is_base_solve(self, spd, rhs):
        base = spd.toarray()
        x = sherman_morrison_solve(lambda b: np.linalg.solve(base, b), rhs, rhs, 0.0, rhs)
        np.testing.assert_allclose(x, np.linalg.solve(base, rhs))

    def test_singular_correction(self):
        identity = sp.identity(2, format="csr")
        e1 = np.array([1.0, 0.0])
        with pytest.raises(SingularCorrectionError) as exc_info:
            sherman_morrison_solve(lambda b: identity @ b, e1, e1, -1.0, np.ones(2))
        assert exc_info.value.details["denominator"] == pytest.approx(0.0)

    def test_solve_corrected(self, corrected, rhs):
        x = solve_corrected(corrected, rhs, tol=1e-11)
        assert relative_residual(corrected, x, rhs) <= 1e-11

    def test_first_step_jacobian_of_poly_problem(self):
        """k11 M + M(s) K - tau_1 B(t_1, t_1) + 2 M'(s) KU (KU)^T at P = 6"""
        problem = build_problem(example_52(0.5), 6, 4, 3.0)
        ops, mesh_t = problem.operators, problem.mesh_t
        xy = problem.space.dof_coords
        U = problem.exact.exact(xy[:, 0], xy[:, 1], float(mesh_t.nodes[1]))
        KU = ops.stiffness @ U
        s = float(U @ KU)
        base = (l1_kernels(mesh_t, 0.5, 1).diagonal * ops.mass + problem.M_fn(s) * ops.stiffness
                - mesh_t.tau(1) * problem.memory_matrix(1, 1)).tocsr()
        jacobian = RankOneCorrected(base, KU, KU, 2.0 * problem.M_prime(s))
        x_true = np.random.default_rng(11).standard_normal(problem.n_dofs)
        b = jacobian @ x_true
        for x in (bicgstab_solve(jacobian, b, tol=1e-12), solve_corrected(jacobian, b, tol=1e-12)):
            np.testing.assert_allclose(x, x_true, rtol=0, atol=1e-8)


class TestSolveLimits:
    """Explicit tolerances and iteration caps are honoured or rejected, never replaced"""

    def test_defaults_fill_unset(self):
        assert resolve_limits(None, None, 1e-9, 40) == (1e-9, 40)
        assert resolve_limits(1e-6, 3, 1e-9, 40) == (1e-6, 3)

    @pytest.mark.parametrize("tol, max_iter", [(0.0, None), (-1e-8, None), (None, 0), (None, 2.5)])
    def test_rejects_unusable_limits(self, tol, max_iter):
        with pytest.raises(ParameterDomainError):
            resolve_limits(tol, max_iter, 1e-9, 40)

    def test_cg_zero_tolerance(self, spd, rhs):
        with pytest.raises(ParameterDomainError) as exc_info:
            cg_solve(spd, rhs, tol=0.0)
        assert exc_info.value.details["field"] == "tol"

    def test_bicgstab_zero_cap(self, nonsymmetric, rhs):
        with pytest.raises(ParameterDomainError) as exc_info:
            bicgstab_solve(nonsymmetric, rhs, max_iter=0)
        assert exc_info.value.details["field"] == "max_iter"

    def test_corrected_zero_tolerance(self, spd, rhs):
        op = RankOneCorrected(spd, rhs, rhs, 0.5)
        with pytest.raises(ParameterDomainError):
            solve_corrected(op, rhs, tol=0.0)
