"""This module contains tests for the cvxpy adapter defined in conic.py."""

import json
import logging
import logging.config
import os
import tempfile
import unittest
from pathlib import Path
from unittest import mock

import cvxpy as cp
import numpy as np

from conic import (
    ConeMembership,
    ConicProblem,
    SolverFailure,
    classify_status,
    dump_problem,
    embed_blocks,
    hermitian_embed,
    selected_solver,
    solve,
    solve_or_raise,
    solver_options,
)
from REGRET_DEFAULTS import SolverEnvVariable

config_file = Path("logging_config.json")
with config_file.open(encoding="utf-8") as f_in:
    logging_config = json.load(f_in)
    logging.config.dictConfig(config=logging_config)
logger = logging.getLogger(__name__)


def small_lp(lower: float = 1.0) -> ConicProblem:
    """min x + y with x >= lower and y >= 2."""
    x = cp.Variable()
    y = cp.Variable()
    return ConicProblem(
        objective=x + y,
        variables={"x": x, "y": y},
        cones=[ConeMembership("nonneg", x - lower, 1), ConeMembership("nonneg", y - 2, 1)],
    )


class TestConic(unittest.TestCase):
    """Test class for solving, status mapping and embeddings."""

    def __init__(self, *args: any, **kwargs: any) -> None:
        """Preparation of Test object.

        Params:
            args: passthrough arguments
            kwargs: passthrough named arguments
        """
        super().__init__(*args, **kwargs)

    def test_linear_program(self) -> None:
        """Optimum of the small LP with its primal values."""
        problem = small_lp()
        self.assertEqual(2, problem.variable_count)
        self.assertEqual([1, 1], problem.cone_orders("nonneg"))
        solution = solve(problem)
        self.assertTrue(solution.ok)
        self.assertAlmostEqual(3.0, solution.objective, places=6)
        self.assertAlmostEqual(1.0, float(solution.values["x"]), places=6)
        self.assertLessEqual(solution.residuals["primal"], 1e-6)
        self.assertEqual("CLARABEL", solution.diagnostics["solver"])
        logger.debug("finished test_linear_program")

    def test_infeasible_program(self) -> None:
        """Infeasible problems carry no values and raise on demand."""
        x = cp.Variable()
        problem = ConicProblem(
            objective=x,
            variables={"x": x},
            equalities=[x == -1],
            cones=[ConeMembership("nonneg", x, 1)],
        )
        solution = solve(problem)
        self.assertEqual("infeasible", solution.status)
        self.assertFalse(solution.ok)
        self.assertEqual({}, solution.values)
        with self.assertRaises(SolverFailure):
            solve_or_raise(problem)
        logger.debug("finished test_infeasible_program")

    def test_semidefinite_program(self) -> None:
        """Largest eigenvalue of [[2, 1], [1, 2]] as min t with t I - M >= 0."""
        t = cp.Variable()
        matrix = np.array([[2.0, 1.0], [1.0, 2.0]])
        problem = ConicProblem(
            objective=t,
            variables={"t": t},
            cones=[ConeMembership("psd", t * np.eye(2) - matrix, 2)],
        )
        solution = solve_or_raise(problem, tol=1e-8)
        self.assertAlmostEqual(3.0, solution.objective, places=5)
        self.assertEqual([2], problem.cone_orders("psd"))
        with self.assertRaises(ValueError):
            ConeMembership("soc", t).constraint()
        logger.debug("finished test_semidefinite_program")

    def test_hermitian_embedding(self) -> None:
        """Eigenvalues of the embedding are those of H, each doubled."""
        hermitian = np.array([[2.0, 1j], [-1j, 2.0]])
        embedded = hermitian_embed(hermitian)
        self.assertEqual((4, 4), embedded.shape)
        np.testing.assert_allclose([1.0, 1.0, 3.0, 3.0], np.linalg.eigvalsh(embedded))
        with self.assertRaises(ValueError):
            hermitian_embed(np.array([[1.0, 1j], [1j, 1.0]]))
        expression = embed_blocks(cp.Variable((2, 2)), np.zeros((2, 2)))
        self.assertEqual((4, 4), expression.shape)
        logger.debug("finished test_hermitian_embedding")

    def test_solver_selection(self) -> None:
        """Explicit names win over the environment, which wins over the default."""
        with mock.patch.dict(os.environ, {SolverEnvVariable: "scs"}):
            self.assertEqual("SCS", selected_solver())
            self.assertEqual("ECOS", selected_solver("ecos"))
        with mock.patch.dict(os.environ, clear=True):
            self.assertEqual("CLARABEL", selected_solver())
        self.assertEqual(1e-7, solver_options("CLARABEL", 1e-7, 100)["tol_feas"])
        self.assertEqual(10000, solver_options("SCS", 1e-7, 100)["max_iters"])
        with self.assertLogs("conic", level="INFO"):
            self.assertEqual({}, solver_options("MOSEK", 1e-7, 100))
        logger.debug("finished test_solver_selection")

    def test_dump_problem(self) -> None:
        """Canonical data is written as json with its cone dimensions."""
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / "problem.json"
            document = dump_problem(small_lp(), path)
            with path.open(encoding="utf-8") as file:
                written = json.load(file)
        self.assertEqual(document, written)
        self.assertEqual(2, len(written["c"]))
        self.assertEqual(2, written["cones"]["nonneg"])
        self.assertEqual(len(written["A"]["rows"]), len(written["A"]["values"]))
        logger.debug("finished test_dump_problem")

    def test_status_classification(self) -> None:
        """Inaccurate optima pass only with a small residual, unknown statuses are errors."""
        self.assertEqual("optimal", classify_status(cp.OPTIMAL, float("nan"), 1e-8))
        self.assertEqual("optimal", classify_status(cp.OPTIMAL_INACCURATE, 1e-10, 1e-8))
        self.assertEqual("inaccurate", classify_status(cp.OPTIMAL_INACCURATE, 1e-5, 1e-8))
        self.assertEqual("inaccurate", classify_status(cp.OPTIMAL_INACCURATE, float("nan"), 1e-8))
        self.assertEqual("max-iter", classify_status(cp.USER_LIMIT, 0.0, 1e-8))
        self.assertEqual("error", classify_status(cp.SOLVER_ERROR, float("nan"), 1e-8))
        with self.assertLogs("conic", level="ERROR"):
            self.assertEqual("error", classify_status("interrupted", float("nan"), 1e-8))
        logger.debug("finished test_status_classification")

    def test_inaccurate_solution(self) -> None:
        """A reported inaccurate optimum is certified by its primal residual or rejected."""
        problem = small_lp()
        problem.variables["x"].value = 1.0
        problem.variables["y"].value = 2.0
        backend = mock.MagicMock(status=cp.OPTIMAL_INACCURATE, value=3.0)
        with mock.patch.object(ConicProblem, "to_cvxpy", return_value=backend):
            with mock.patch("conic.primal_residual", return_value=1e-12), self.assertLogs(
                "conic", level="WARNING"
            ):
                accepted = solve(problem)
            self.assertTrue(accepted.ok)
            self.assertTrue(accepted.diagnostics["inaccurate"])
            self.assertAlmostEqual(1.0, float(accepted.values["x"]))

            with mock.patch("conic.primal_residual", return_value=1e-3), self.assertLogs(
                "conic", level="WARNING"
            ):
                rejected = solve(problem)
            self.assertEqual("inaccurate", rejected.status)
            self.assertFalse(rejected.ok)
            self.assertEqual(1e-3, rejected.residuals["primal"])
            with mock.patch("conic.primal_residual", return_value=1e-3), self.assertRaises(
                SolverFailure
            ):
                solve_or_raise(problem)

        backend = mock.MagicMock(status=cp.SOLVER_ERROR, value=None)
        with mock.patch.object(ConicProblem, "to_cvxpy", return_value=backend):
            failed = solve(problem)
            self.assertEqual("error", failed.status)
            self.assertEqual({}, failed.values)
            with self.assertRaises(SolverFailure):
                solve_or_raise(problem)
        logger.debug("finished test_inaccurate_solution")

    def test_random_hermitian_embeddings(self) -> None:
        """Doubled spectra and PSD equivalence over random Hermitian matrices."""
        rng = np.random.default_rng(5)
        for _ in range(100):
            size = int(rng.integers(1, 6))
            raw = rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))
            hermitian = 0.5 * (raw + raw.conj().T)
            expected = np.repeat(np.linalg.eigvalsh(hermitian), 2)
            np.testing.assert_allclose(
                expected, np.linalg.eigvalsh(hermitian_embed(hermitian)), atol=1e-10
            )

            gram = raw @ raw.conj().T
            shift = rng.uniform(-1.0, 1.0) * np.min(np.linalg.eigvalsh(gram)) * 2
            shifted = gram - shift * np.eye(size)
            shifted = 0.5 * (shifted + shifted.conj().T)
            self.assertEqual(
                bool(np.min(np.linalg.eigvalsh(shifted)) >= -1e-12),
                bool(np.min(np.linalg.eigvalsh(hermitian_embed(shifted))) >= -1e-12),
            )
        logger.debug("finished test_random_hermitian_embeddings")
