# services/solver/scheme.py
"""
Linearized L1 Galerkin time stepper on graded meshes
Newton at the first level, one linear solve per level afterwards, with the
Caputo history sum and a modified trapezoidal rule for the memory integral
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
import scipy.sparse as sp

from shared.config import get_settings
from shared.exceptions import (
    CacheUnderflowError, ConvergenceError, ParameterDomainError, SolverException, StepFailure,
)
from shared.metrics import NEWTON_ITERATIONS, TIME_STEPS, track_run_metrics

from .assembly import (
    AssembledOperators, ErrorEvaluator, LoadAssembler, MemoryCoefficient, VectorField,
    assemble_operators, grad_norm_sq, mass_norm, ritz_projection,
)
from .fractional_time import (
    GradedTimeMesh, build_graded_mesh, caputo_history_sum, extrapolate, l1_kernels, weighted_norm,
)
from .linalg import RankOneCorrected, bicgstab_solve, cg_solve, resolve_limits, solve_corrected
from .problems import ProblemSpec
from .tri_mesh import P1Space, build_p1_space, build_unit_square_mesh

logger = logging.getLogger(__name__)

Forcing = Callable[[np.ndarray, np.ndarray, float], np.ndarray]

# implicit: trapezoid on [t_{n-1}, t_n] with tau_n/2 B(t_n, t_n) U^n moved to the left side
# explicit: left rectangle tau_n B(t_n, t_{n-1}) U^{n-1}
MEMORY_CLOSURES = ("implicit", "explicit")


def _check_closure(closure: str) -> None:
    if closure not in MEMORY_CLOSURES:
        raise ParameterDomainError(
            f"memory closure must be one of {MEMORY_CLOSURES}, got {closure!r}", "memory_closure", closure
        )


@dataclass(eq=False)
class DiscreteProblem:
    """Assembled discrete problem on one space-time mesh pair"""
    space: P1Space
    mesh_t: GradedTimeMesh
    alpha: float
    M_fn: Callable[[float], float]
    M_prime: Callable[[float], float]
    memory: MemoryCoefficient
    forcing: Optional[Forcing]
    u0_grad: Optional[VectorField] = None
    problem_id: str = "custom"
    exact: Optional[ProblemSpec] = None
    s_max: float = 100.0
    memory_closure: Optional[str] = None
    operators: AssembledOperators = field(init=False, repr=False)
    loads: LoadAssembler = field(init=False, repr=False)

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ParameterDomainError(f"alpha must lie in (0, 1), got {self.alpha}", "alpha", self.alpha)
        samples = np.linspace(0.0, self.s_max, 201)
        m_values = np.array([self.M_fn(s) for s in samples])
        if not np.all(m_values > 0):
            raise ParameterDomainError("Kirchhoff coefficient must be bounded below by m0 > 0", "M_fn",
                                       float(np.min(m_values)))
        if not self.memory.check_diffusive(self.space.mesh.vertices):
            raise ParameterDomainError("memory diffusion c2 must be symmetric positive semidefinite", "memory")
        if self.memory_closure is None:
            self.memory_closure = get_settings().MEMORY_CLOSURE
        _check_closure(self.memory_closure)
        self.operators = assemble_operators(self.space, self.memory)
        self.loads = LoadAssembler(self.space)
        nodes = self.mesh_t.nodes
        self._phi = np.array([[term.phi(t) for t in nodes] for term in self.memory.terms]).reshape(-1, nodes.size)
        self._psi = np.array([[term.psi(t) for t in nodes] for term in self.memory.terms]).reshape(-1, nodes.size)

    @property
    def n_dofs(self) -> int:
        return self.space.n_dofs

    def load(self, n: int) -> np.ndarray:
        """F^n = (f(t_n), phi_i)"""
        if self.forcing is None:
            return np.zeros(self.n_dofs)
        qd = self.loads.qd
        return self.loads(self.forcing(qd.x, qd.y, float(self.mesh_t.nodes[n])))

    def memory_matrix(self, n: int, j: int) -> sp.csr_matrix:
        """B(t_n, t_j) = sum_k phi_k(t_n) psi_k(t_j) B_k"""
        B = sp.csr_matrix((self.n_dofs, self.n_dofs))
        for k, factor in enumerate(self.operators.memory):
            B = B + (self._phi[k, n] * self._psi[k, j]) * factor
        return B


def build_problem(spec: ProblemSpec, P: int, N: int, delta: float, T: float = 1.0,
                  memory_closure: Optional[str] = None) -> DiscreteProblem:
    """Assemble a manufactured problem on the P x P mesh with N graded steps"""
    space = build_p1_space(build_unit_square_mesh(P))
    return DiscreteProblem(
        space=space, mesh_t=build_graded_mesh(T, N, delta), alpha=spec.alpha,
        M_fn=spec.M_fn, M_prime=spec.M_prime, memory=spec.memory, forcing=spec.forcing,
        u0_grad=spec.u0_grad, problem_id=spec.id, exact=spec, memory_closure=memory_closure,
    )


@dataclass(eq=False)
class SolveTrace:
    """Trajectory U^0..U^N with cached memory products and solver records"""
    solutions: np.ndarray = field(repr=False)               # (N+1, dim)
    memory_products: List[np.ndarray] = field(repr=False)   # per term, (N+1, dim)
    filled: int = 0                                         # levels 0..filled-1 present
    newton_iterations: int = 0
    newton_residuals: List[float] = field(default_factory=list)
    per_step_residuals: List[float] = field(default_factory=list)
    level_errors: Optional[np.ndarray] = field(default=None, repr=False)  # (N+1, 2)
    wall_time: float = 0.0

    @classmethod
    def empty(cls, problem: DiscreteProblem) -> "SolveTrace":
        levels = problem.mesh_t.N + 1
        return cls(
            solutions=np.zeros((levels, problem.n_dofs)),
            memory_products=[np.zeros((levels, problem.n_dofs)) for _ in problem.operators.memory],
        )

    def push(self, problem: DiscreteProblem, U: np.ndarray) -> None:
        """Store the next level and its memory products B_k U"""
        n = self.filled
        self.solutions[n] = U
        for k, factor in enumerate(problem.operators.memory):
            self.memory_products[k][n] = factor @ U
        self.filled = n + 1

    @property
    def levels(self) -> np.ndarray:
        return self.solutions[:self.filled]

    def max_errors(self):
        """(max_n l2, max_n h1) over levels n = 1..N"""
        if self.level_errors is None or self.filled < 2:
            return None
        errs = self.level_errors[1:self.filled]
        return float(np.max(errs[:, 0])), float(np.max(errs[:, 1]))

    def diagnostics(self, problem: DiscreteProblem) -> Dict[str, np.ndarray]:
        """Mass norms, gradient norms and weighted norms |||U^n||| per level"""
        ops = problem.operators
        steps = problem.mesh_t.steps
        m = np.array([mass_norm(U, ops.mass) for U in self.levels])
        g = np.sqrt(np.maximum([grad_norm_sq(U, ops.stiffness) for U in self.levels], 0.0))
        taus = np.concatenate([[steps[0]], steps[:self.filled - 1]])
        w = np.array([weighted_norm(mi, gi, ti, problem.alpha) for mi, gi, ti in zip(m, g, taus)])
        return {"mass_norm": m, "grad_norm": g, "weighted_norm": w}


def memory_weights(mesh_t: GradedTimeMesh, n: int, closure: str = "explicit") -> np.ndarray:
    """
    Collapsed node weights w_1..w_{n-1} of the modified trapezoidal rule:
    tau_2/2, (tau_j + tau_{j+1})/2, ..., tau_{n-1}/2 + tau_n; they sum to t_n - t_1

    With the implicit closure the last interval keeps only tau_n/2 on level n-1;
    its other half multiplies U^n and sits on the left-hand side.
    """
    _check_closure(closure)
    if n < 2:
        return np.zeros(0)
    tau = mesh_t.steps                      # tau_{j+1} = tau[j]
    w = np.zeros(n - 1)                     # w[j-1] is the weight of level j
    half = 0.5 * tau[1:n - 1]               # tau_{j+1}/2 for j = 1..n-2
    w[:n - 2] += half
    w[1:n - 1] += half
    w[n - 2] += tau[n - 1] if closure == "explicit" else 0.5 * tau[n - 1]
    return w


def memory_rhs(problem: DiscreteProblem, trace: SolveTrace, n: int, closure: str = "explicit") -> np.ndarray:
    """
    Q^n = sum_{j=1}^{n-1} w_j Bbar(t_n, t_j) U^j from cached products B_k U^j
    """
    if trace.filled < n:
        raise CacheUnderflowError(
            f"memory products missing for level {trace.filled}", level=trace.filled, available=trace.filled
        )
    Q = np.zeros(problem.n_dofs)
    if n < 2 or problem.memory.is_zero:
        return Q
    w = memory_weights(problem.mesh_t, n, closure)
    for k, products in enumerate(trace.memory_products):
        coeff = w * problem._psi[k, 1:n]
        Q += problem._phi[k, n] * (coeff @ products[1:n])
    return Q


def _newton_residual(problem, k11, U, U0, B11, F1):
    ops = problem.operators
    KU = ops.stiffness @ U
    s = float(U @ KU)
    R = k11 * (ops.mass @ (U - U0)) + problem.M_fn(s) * KU - problem.mesh_t.tau(1) * (B11 @ U) - F1
    return R, KU, s


def first_step_newton(problem: DiscreteProblem, U0: np.ndarray, tol: float = None,
                      max_iter: int = None):
    """
    Solve the nonlinear first level by Newton with the rank-one Jacobian

    Returns:
        (U1, iterations, residual history)
    """
    settings = get_settings()
    tol, max_iter = resolve_limits(tol, max_iter, settings.NEWTON_TOL, settings.NEWTON_MAX_ITER)
    ops = problem.operators
    tau1 = problem.mesh_t.tau(1)
    k11 = l1_kernels(problem.mesh_t, problem.alpha, 1).diagonal
    B11 = problem.memory_matrix(1, 1)
    F1 = problem.load(1)

    U = np.array(U0, dtype=float)
    R, KU, s = _newton_residual(problem, k11, U, U0, B11, F1)
    history = [float(np.linalg.norm(R))]
    iterations = 0
    while history[-1] > tol:
        if iterations >= max_iter:
            raise ConvergenceError(
                f"Newton did not converge in {max_iter} iterations", solver="newton",
                iterations=iterations, residual=history[-1],
            )
        base = (k11 * ops.mass + problem.M_fn(s) * ops.stiffness - tau1 * B11).tocsr()
        jacobian = RankOneCorrected(base, KU, KU, 2.0 * problem.M_prime(s))
        U = U + solve_corrected(jacobian, -R)
        iterations += 1
        R, KU, s = _newton_residual(problem, k11, U, U0, B11, F1)
        history.append(float(np.linalg.norm(R)))
        logger.debug("Newton iteration", extra={"iteration": iterations, "residual": history[-1]})

    NEWTON_ITERATIONS.observe(iterations)
    return U, iterations, history


def linearized_step(problem: DiscreteProblem, trace: SolveTrace, n: int) -> np.ndarray:
    """
    Solve (k_nn Mass + M(||grad u~||^2) K) U^n = F^n + Mass H^n + Q^n for n >= 2

    The implicit memory closure subtracts tau_n/2 B(t_n, t_n) from the operator,
    which is then nonsymmetric in general and goes to BiCGStab.
    """
    if n < 2:
        raise ParameterDomainError("linearized steps start at level 2", "n", n)
    if trace.filled < n:
        raise CacheUnderflowError(f"level {n - 1} not computed", level=n - 1, available=trace.filled)
    ops = problem.operators
    mesh_t = problem.mesh_t
    row = l1_kernels(mesh_t, problem.alpha, n)

    u_tilde = extrapolate(trace.solutions[n - 1], trace.solutions[n - 2], mesh_t.tau(n), mesh_t.tau(n - 1))
    coeff = problem.M_fn(grad_norm_sq(u_tilde, ops.stiffness))
    A = (row.diagonal * ops.mass + coeff * ops.stiffness).tocsr()
    history = caputo_history_sum(row, trace.solutions[:n])
    rhs = problem.load(n) + ops.mass @ history + memory_rhs(problem, trace, n, problem.memory_closure)
    if problem.memory_closure == "implicit" and not problem.memory.is_zero:
        A = (A - 0.5 * mesh_t.tau(n) * problem.memory_matrix(n, n)).tocsr()
        U = bicgstab_solve(A, rhs)
    else:
        U = cg_solve(A, rhs)
    bnorm = np.linalg.norm(rhs)
    trace.per_step_residuals.append(float(np.linalg.norm(A @ U - rhs) / bnorm) if bnorm > 0 else 0.0)
    return U


@track_run_metrics("problem_id")
def run(problem: DiscreteProblem) -> SolveTrace:
    """Full trajectory U^0..U^N; step failures carry the failing level"""
    start = time.perf_counter()
    trace = SolveTrace.empty(problem)
    ops = problem.operators
    mesh_t = problem.mesh_t
    logger.info("Starting run", extra={
        "problem": problem.problem_id, "alpha": problem.alpha, "delta": mesh_t.delta,
        "P": problem.space.mesh.P, "N": mesh_t.N, "n_dofs": problem.n_dofs,
        "memory_closure": problem.memory_closure,
    })

    evaluator = ErrorEvaluator(problem.space) if problem.exact is not None else None
    if evaluator is not None:
        trace.level_errors = np.zeros((mesh_t.N + 1, 2))

    def record(n: int, U: np.ndarray) -> None:
        trace.push(problem, U)
        if evaluator is not None:
            t = float(mesh_t.nodes[n])
            x, y = evaluator.qd.x, evaluator.qd.y
            trace.level_errors[n] = evaluator(U, problem.exact.exact(x, y, t), problem.exact.exact_grad(x, y, t))

    U0 = ritz_projection(problem.space, problem.u0_grad, ops.stiffness)
    record(0, U0)

    try:
        U1, iterations, history = first_step_newton(problem, U0)
    except SolverException as exc:
        raise StepFailure(f"first step failed: {exc.message}", level=1, cause=exc) from exc
    trace.newton_iterations = iterations
    trace.newton_residuals = history
    trace.per_step_residuals.append(history[-1])
    record(1, U1)
    TIME_STEPS.labels(kind="newton").inc()

    for n in range(2, mesh_t.N + 1):
        try:
            U = linearized_step(problem, trace, n)
        except SolverException as exc:
            raise StepFailure(f"step {n} failed: {exc.message}", level=n, cause=exc) from exc
        record(n, U)
    if mesh_t.N >= 2:
        TIME_STEPS.labels(kind="linearized").inc(mesh_t.N - 1)

    trace.wall_time = time.perf_counter() - start
    logger.info("Finished run", extra={
        "problem": problem.problem_id, "newton_iterations": trace.newton_iterations,
        "wall_time": round(trace.wall_time, 3), "max_errors": trace.max_errors(),
    })
    return trace
