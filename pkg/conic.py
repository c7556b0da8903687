"""This module is a thin adapter from linear and semidefinite programs to cvxpy.

The backend is chosen by the environment variable REGRET_SOLVER, default CLARABEL.
"""

import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import cvxpy as cp
import numpy as np

from REGRET_DEFAULTS import (
    DefaultMaxSolverIterations,
    DefaultSolver,
    HermitianTolerance,
    LpTolerance,
    SolverEnvVariable,
)

logger = logging.getLogger(__name__)


class SolverFailure(RuntimeError):
    """Raised when the backend fails or does not return a usable solution."""


@dataclass
class ConeMembership:
    """expr belongs to the nonnegative orthant ("nonneg") or to the PSD cone ("psd") of given order."""

    kind: str
    expr: cp.Expression
    order: int = 0

    def constraint(self) -> cp.Constraint:
        """cvxpy form of the membership."""
        if self.kind == "nonneg":
            return self.expr >= 0
        if self.kind == "psd":
            return 0.5 * (self.expr + self.expr.T) >> 0
        msg = f"unknown cone {self.kind}"
        raise ValueError(msg)


@dataclass
class ConicProblem:
    """Minimization of a linear objective over equalities and cone memberships.

    variables lists the decision variables in their canonical order, lifted holds
    auxiliary variables which are fully determined by them.
    """

    objective: cp.Expression
    variables: dict[str, cp.Variable]
    equalities: list[cp.Constraint] = field(default_factory=list)
    cones: list[ConeMembership] = field(default_factory=list)
    lifted: dict[str, cp.Variable] = field(default_factory=dict)

    @property
    def variable_count(self) -> int:
        """Scalar count of the decision variables without lifted ones."""
        return sum(variable.size for variable in self.variables.values())

    def cone_orders(self, kind: str) -> list[int]:
        """Orders of all memberships of one kind."""
        return [cone.order for cone in self.cones if cone.kind == kind]

    def to_cvxpy(self) -> cp.Problem:
        """Problem instance for the backend."""
        constraints = list(self.equalities) + [cone.constraint() for cone in self.cones]
        return cp.Problem(cp.Minimize(self.objective), constraints)


@dataclass
class ConicSolution:
    """Solver outcome with primal values by variable name."""

    status: str
    values: dict[str, np.ndarray]
    objective: float
    residuals: dict[str, float]
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        """True for optimal solutions."""
        return self.status == "optimal"


StatusMap = {
    cp.OPTIMAL: "optimal",
    cp.OPTIMAL_INACCURATE: "inaccurate",
    cp.INFEASIBLE: "infeasible",
    cp.INFEASIBLE_INACCURATE: "infeasible",
    cp.UNBOUNDED: "unbounded",
    cp.UNBOUNDED_INACCURATE: "unbounded",
    cp.USER_LIMIT: "max-iter",
    cp.SOLVER_ERROR: "error",
}


def classify_status(raw_status: str, primal_residual: float, tol: float) -> str:
    """Maps a cvxpy status to the status reported by solve.

    An inaccurate optimum counts as optimal only if its measured primal
    residual is within tol. Statuses without a mapping are reported as error.

    Params:
        raw_status: status string of cvxpy
        primal_residual: largest constraint violation of the returned point, nan if none
        tol: feasibility tolerance requested from the backend
    Returns:
        one of optimal, inaccurate, infeasible, unbounded, max-iter, error
    """
    status = StatusMap.get(raw_status)
    if status is None:
        logger.error("Unknown solver status %s", raw_status)
        return "error"
    if status == "inaccurate" and primal_residual <= tol:
        return "optimal"
    return status


def selected_solver(solver: str | None = None, env_variable: str = SolverEnvVariable) -> str:
    """Explicit solver, else environment variable, else the default backend."""
    return (solver or os.getenv(env_variable) or DefaultSolver).upper()


def solver_options(solver: str, tol: float, max_iter: int) -> dict:
    """Tolerance and iteration keywords understood by the backend."""
    if solver == "CLARABEL":
        return {
            "tol_gap_abs": tol,
            "tol_gap_rel": tol,
            "tol_feas": tol,
            "max_iter": max_iter,
        }
    if solver == "SCS":
        return {"eps_abs": tol, "eps_rel": tol, "max_iters": max(max_iter, 10000)}
    if solver == "ECOS":
        return {"abstol": tol, "reltol": tol, "feastol": tol, "max_iters": max_iter}
    if solver == "OSQP":
        return {"eps_abs": tol, "eps_rel": tol, "max_iter": max(max_iter, 10000)}
    logger.info("No tolerance mapping for solver %s, using its defaults", solver)
    return {}


def primal_residual(problem: cp.Problem) -> float:
    """Largest constraint violation of the point stored in a solved cvxpy problem."""
    worst = 0.0
    for constraint in problem.constraints:
        violation = np.asarray(constraint.violation())
        if violation.size:
            worst = max(worst, float(np.max(violation)))
    return worst


def solve(
    problem: ConicProblem,
    tol: float = LpTolerance,
    max_iter: int = DefaultMaxSolverIterations,
    solver: str | None = None,
) -> ConicSolution:
    """Solves a conic problem with the selected backend.

    Params:
        problem: problem to solve
        tol: feasibility and gap tolerance handed to the backend
        max_iter: iteration limit of the backend
        solver: backend name, overrides REGRET_SOLVER
    Returns:
        ConicSolution, values are empty unless the backend returned a point
    """
    backend = selected_solver(solver)
    instance = problem.to_cvxpy()
    started = time.perf_counter()
    try:
        instance.solve(solver=backend, **solver_options(backend, tol, max_iter))
    except cp.error.SolverError as error:
        msg = f"{backend} failed: {error}"
        raise SolverFailure(msg) from error
    elapsed = time.perf_counter() - started

    values = {}
    residuals = {"primal": float("nan")}
    if instance.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE, cp.USER_LIMIT) and all(
        variable.value is not None for variable in problem.variables.values()
    ):
        values = {
            name: np.asarray(variable.value, dtype=float)
            for name, variable in {**problem.variables, **problem.lifted}.items()
            if variable.value is not None
        }
        residuals["primal"] = primal_residual(instance)
    status = classify_status(instance.status, residuals["primal"], tol)
    if instance.status == cp.OPTIMAL_INACCURATE:
        logger.warning(
            "%s reports an inaccurate optimum with primal residual %s, accepted as %s",
            backend,
            residuals["primal"],
            status,
        )
    stats = instance.solver_stats
    diagnostics = {
        "solver": backend,
        "raw_status": instance.status,
        "inaccurate": instance.status == cp.OPTIMAL_INACCURATE,
        "iterations": getattr(stats, "num_iters", None),
        "solve_time": elapsed,
        "tolerance": tol,
    }
    objective = float(instance.value) if instance.value is not None else float("nan")
    logger.debug(
        "%s finished with %s (objective %s) in %.3fs", backend, status, objective, elapsed
    )
    return ConicSolution(
        status=status,
        values=values,
        objective=objective,
        residuals=residuals,
        diagnostics=diagnostics,
    )


def solve_or_raise(problem: ConicProblem, **kwargs: object) -> ConicSolution:
    """Like solve but raises SolverFailure unless the solution is optimal."""
    solution = solve(problem, **kwargs)
    if not solution.ok:
        msg = f"solver returned status {solution.status} (primal residual {solution.residuals['primal']})"
        raise SolverFailure(msg)
    return solution


def hermitian_embed(matrix: np.ndarray, tol: float = HermitianTolerance) -> np.ndarray:
    """Real symmetric embedding [[Re H, -Im H], [Im H, Re H]] of a Hermitian matrix.

    Params:
        matrix: complex Hermitian n x n matrix
        tol: admissible deviation from Hermitian symmetry
    Returns:
        real 2n x 2n matrix whose eigenvalues are those of H, each doubled
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
    if matrix.shape[0] != matrix.shape[1] or not np.allclose(
        matrix, matrix.conj().T, atol=tol, rtol=0
    ):
        msg = "matrix is not Hermitian"
        raise ValueError(msg)
    return embed_blocks(matrix.real, matrix.imag)


def embed_blocks(
    real: np.ndarray | cp.Expression, imag: np.ndarray | cp.Expression
) -> np.ndarray | cp.Expression:
    """Real embedding of a complex matrix given as real and imaginary part."""
    if isinstance(real, np.ndarray) and isinstance(imag, np.ndarray):
        return np.block([[real, -imag], [imag, real]])
    return cp.bmat([[real, -imag], [imag, real]])


def dump_problem(problem: ConicProblem, path: Path | str) -> dict:
    """Writes the canonical conic data (c, A, b, cone dimensions) as json triplets.

    Params:
        problem: problem to export
        path: target file
    Returns:
        the written document
    """
    data, _, _ = problem.to_cvxpy().get_problem_data(cp.SCS)
    matrix = data["A"].tocoo()
    dims = data["dims"]
    document = {
        "c": np.asarray(data["c"]).tolist(),
        "b": np.asarray(data["b"]).tolist(),
        "A": {
            "shape": list(matrix.shape),
            "rows": matrix.row.tolist(),
            "cols": matrix.col.tolist(),
            "values": matrix.data.tolist(),
        },
        "cones": {
            "zero": int(getattr(dims, "zero", 0)),
            "nonneg": int(getattr(dims, "nonneg", 0)),
            "soc": [int(size) for size in getattr(dims, "soc", [])],
            "psd": [int(size) for size in getattr(dims, "psd", [])],
        },
    }
    with Path(path).open(mode="w", encoding="utf-8") as file:
        json.dump(document, file)
    logger.info("Conic problem data written to %s", path)
    return document
