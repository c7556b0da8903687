"""This module contains tests for oracle and regret synthesis defined in synth.py."""

import json
import logging
import logging.config
import os
import unittest
from pathlib import Path

import numpy as np
import scipy.optimize

from bench import build_random_plant
from conic import solve_or_raise
from netgraph import DirectedGraph, respects_mask
from REGRET_DEFAULTS import LongTestsEnvVariable, SdpTolerance
from regret import spreg2, spreg_inf_upper_bound
from sstf import FirTransferMatrix, FrequencyGrid
from synth import (
    SynthesisConfig,
    assemble_spreg2_sdp,
    closed_loop_metrics,
    free_coefficients,
    synth_oracle,
    synth_spreg2,
    synth_spreg_inf,
    youla_basis,
    youla_mask,
)

config_file = Path("logging_config.json")
with config_file.open(encoding="utf-8") as f_in:
    logging_config = json.load(f_in)
    logging.config.dictConfig(config=logging_config)
logger = logging.getLogger(__name__)


class TestYoulaBasis(unittest.TestCase):
    """Test class for masks and the impulse domain basis on a random 3 node chain."""

    def __init__(self, *args: any, **kwargs: any) -> None:
        """Preparation of Test object.

        Params:
            args: passthrough arguments
            kwargs: passthrough named arguments
        """
        super().__init__(*args, **kwargs)
        self.plant = build_random_plant(3, seed=11)
        self.blocks = self.plant.youla_blocks()

    def test_youla_mask(self) -> None:
        """Node 0 hears from node 2 after two steps."""
        mask = youla_mask(self.blocks, self.plant.graph, 3)
        self.assertEqual((4, 3, 3), mask.shape)
        self.assertEqual([False, False, True, True], mask[:, 0, 2].tolist())
        self.assertTrue(np.all(mask[:, 1, 1]))
        with self.assertLogs("synth", level="WARNING"):
            youla_mask(self.blocks, self.plant.graph, 1)
        logger.debug("finished test_youla_mask")

    def test_basis_matches_closed_loop(self) -> None:
        """The affine basis reproduces P̃11 + P̃12 Q P̃21 on its horizon."""
        mask = youla_mask(self.blocks, self.plant.graph, 2)
        basis = youla_basis(self.blocks, mask)
        vector = np.random.default_rng(0).standard_normal(basis.free.shape[0])
        q = basis.coefficients(vector)
        self.assertTrue(respects_mask(q.coeffs, mask))
        np.testing.assert_allclose(vector, basis.vectorize(q))
        np.testing.assert_allclose(
            self.blocks.closed_loop_fir(q, basis.horizon).coeffs.transpose(1, 2, 0),
            basis.response(vector),
            atol=1e-10,
        )
        with self.assertRaises(ValueError):
            youla_basis(self.blocks, mask, horizon=1)
        logger.debug("finished test_basis_matches_closed_loop")

    def test_config_checks(self) -> None:
        """Negative orders and unknown criteria are rejected."""
        with self.assertRaises(ValueError):
            SynthesisConfig(fir_order=-1)
        with self.assertRaises(ValueError):
            SynthesisConfig(criterion="H3")
        provenance = SynthesisConfig(fir_order=5, grid=FrequencyGrid.uniform(8)).provenance()
        self.assertEqual(8, provenance["grid_points"])
        logger.debug("finished test_config_checks")


class TestSynthesis(unittest.TestCase):
    """Test class for oracle, SpReg₂ and SpReg∞ synthesis on small instances."""

    def __init__(self, *args: any, **kwargs: any) -> None:
        """Preparation of Test object.

        Params:
            args: passthrough arguments
            kwargs: passthrough named arguments
        """
        super().__init__(*args, **kwargs)
        self.plant = build_random_plant(3, seed=11)
        self.blocks = self.plant.youla_blocks()
        self.oracle_graph = self.plant.graph.with_edges([(0, 2), (2, 0)])
        self.cfg = SynthesisConfig(fir_order=3, grid=FrequencyGrid.uniform(16))

    def test_h2_oracle(self) -> None:
        """More communication never increases the optimal H2 cost."""
        baseline = synth_oracle(self.blocks, self.plant.graph, "H2", self.cfg)
        oracle = synth_oracle(
            self.blocks, self.oracle_graph, "H2", self.cfg, graph=self.plant.graph
        )
        self.assertLessEqual(oracle.objective, baseline.objective + 1e-10)
        self.assertAlmostEqual(baseline.objective, baseline.metrics["h2_sq"], places=8)
        uncontrolled = closed_loop_metrics(
            self.blocks, FirTransferMatrix(np.zeros((1, 3, 3))), None, self.cfg.grid
        )
        self.assertLessEqual(baseline.objective, uncontrolled["h2_sq"] + 1e-6)
        mask = youla_mask(self.blocks, self.plant.graph, 3)
        self.assertTrue(respects_mask(baseline.q.coeffs, mask))
        self.assertEqual("lstsq", baseline.diagnostics["method"])
        logger.debug("finished test_h2_oracle")

    def test_hinf_oracle(self) -> None:
        """The SDP level equals the largest grid gain of the closed loop."""
        result = synth_oracle(self.blocks, self.oracle_graph, "Hinf", self.cfg)
        self.assertAlmostEqual(result.metrics["hinf_sq"], result.objective, delta=1e-4)
        logger.debug("finished test_hinf_oracle")

    def test_oracle_graph_checks(self) -> None:
        """Oracle graphs missing a learner edge are rejected, equal ones warned about."""
        with self.assertRaises(ValueError):
            synth_oracle(
                self.blocks,
                DirectedGraph.undirected(3, [(0, 1)]),
                "H2",
                self.cfg,
                graph=self.plant.graph,
            )
        with self.assertRaises(ValueError):
            synth_oracle(self.blocks, self.plant.graph, "H3", self.cfg)
        q_hat = synth_oracle(self.blocks, self.plant.graph, "H2", self.cfg).q
        with self.assertLogs("synth", level="WARNING"):
            result = synth_spreg2(
                self.blocks, q_hat, self.plant.graph, self.cfg, oracle_graph=self.plant.graph
            )
        self.assertLess(result.objective, 1e-5)
        logger.debug("finished test_oracle_graph_checks")

    def test_spreg2_synthesis(self) -> None:
        """The SDP optimum bounds the grid regret and improves on the H2 baseline."""
        q_hat = synth_oracle(self.blocks, self.oracle_graph, "H2", self.cfg).q
        baseline = synth_oracle(self.blocks, self.plant.graph, "H2", self.cfg).q
        result = synth_spreg2(
            self.blocks, q_hat, self.plant.graph, self.cfg, oracle_graph=self.oracle_graph
        )
        self.assertLessEqual(result.metrics["spreg2"], result.objective + 1e-5)
        baseline_regret = spreg2(baseline, q_hat, self.blocks, self.cfg.grid).value
        self.assertLessEqual(result.objective, baseline_regret + 1e-5)
        self.assertEqual(64, len(result.diagnostics["oracle_hash"]))
        self.assertEqual(3, result.q.order)
        logger.debug("finished test_spreg2_synthesis")

    def test_spreg_inf_synthesis(self) -> None:
        """The LP optimum is the L1 mismatch and improves on the L1 baseline."""
        q_hat = synth_oracle(self.blocks, self.oracle_graph, "L1", self.cfg).q
        baseline = synth_oracle(self.blocks, self.plant.graph, "L1", self.cfg).q
        result = synth_spreg_inf(
            self.blocks, q_hat, self.plant.graph, self.cfg, oracle_graph=self.oracle_graph
        )
        self.assertGreaterEqual(result.objective, -1e-8)
        self.assertAlmostEqual(result.objective, result.metrics["l1_mismatch"], delta=1e-5)
        baseline_bound = spreg_inf_upper_bound(baseline, q_hat, self.blocks).value
        self.assertLessEqual(result.objective, baseline_bound + 1e-5)
        mask = youla_mask(self.blocks, self.plant.graph, 3)
        self.assertTrue(respects_mask(result.q.coeffs, mask))
        logger.debug("finished test_spreg_inf_synthesis")

    def test_schur_complement_equivalence(self) -> None:
        """With Q fixed the LMI level equals the largest eigenvalue of Ψ over the grid."""
        q_hat = synth_oracle(self.blocks, self.oracle_graph, "H2", self.cfg).q
        mask = youla_mask(self.blocks, self.plant.graph, self.cfg.fir_order)
        coeffs = 0.5 * np.random.default_rng(3).standard_normal(mask.shape) * mask
        rows, cols, times = free_coefficients(mask).T
        problem = assemble_spreg2_sdp(self.blocks, q_hat, mask, self.cfg.grid)
        problem.equalities.append(problem.variables["q"] == coeffs[times, rows, cols])
        solution = solve_or_raise(problem, tol=SdpTolerance)
        expected = spreg2(FirTransferMatrix(coeffs), q_hat, self.blocks, self.cfg.grid).value
        self.assertGreater(expected, 0)
        self.assertAlmostEqual(expected, solution.objective, delta=1e-6 * max(1.0, expected))
        logger.debug("finished test_schur_complement_equivalence")

    def test_lp_against_dense_linprog(self) -> None:
        """The L1 regret LP agrees with a dense LP assembled from closed loop responses."""
        plant = build_random_plant(2, seed=12)
        blocks = plant.youla_blocks()
        learner = DirectedGraph.undirected(2, [])
        cfg = SynthesisConfig(fir_order=2, grid=FrequencyGrid.uniform(8))
        q_hat = synth_oracle(blocks, plant.graph, "L1", cfg).q
        result = synth_spreg_inf(blocks, q_hat, learner, cfg, oracle_graph=plant.graph)

        mask = youla_mask(blocks, learner, cfg.fir_order)
        horizon = blocks.closed_loop_horizon(max(cfg.fir_order, q_hat.order))
        base = blocks.closed_loop_fir(FirTransferMatrix(np.zeros(mask.shape)), horizon).coeffs
        offset = (base - blocks.closed_loop_fir(q_hat, horizon).coeffs).transpose(1, 0, 2)
        columns = []
        for t, row, col in np.argwhere(mask):
            unit = np.zeros(mask.shape)
            unit[t, row, col] = 1.0
            response = blocks.closed_loop_fir(FirTransferMatrix(unit), horizon).coeffs - base
            columns.append(response.transpose(1, 0, 2).ravel())
        matrix = np.stack(columns, axis=1)
        n_z = offset.shape[0]
        count, slacks = matrix.shape[1], matrix.shape[0]
        eye = np.eye(slacks)
        row_sums = np.kron(np.eye(n_z), np.ones((1, slacks // n_z)))
        inequalities = np.block(
            [
                [np.zeros((slacks, 1)), matrix, -eye],
                [np.zeros((slacks, 1)), -matrix, -eye],
                [-np.ones((n_z, 1)), np.zeros((n_z, count)), row_sums],
            ]
        )
        bounds = np.concatenate([-offset.ravel(), offset.ravel(), np.zeros(n_z)])
        costs = np.zeros(1 + count + slacks)
        costs[0] = 1.0
        dense = scipy.optimize.linprog(
            costs,
            A_ub=inequalities,
            b_ub=bounds,
            bounds=[(None, None)] * (1 + count) + [(0, None)] * slacks,
            method="highs",
        )
        self.assertTrue(dense.success, dense.message)
        self.assertAlmostEqual(dense.fun, result.objective, delta=1e-6 * max(1.0, dense.fun))
        logger.debug("finished test_lp_against_dense_linprog")

    def test_longer_fir_never_hurts(self) -> None:
        """The SpReg₂ optimum does not increase with the FIR order."""
        q_hat = synth_oracle(self.blocks, self.oracle_graph, "H2", self.cfg).q
        objectives = [
            synth_spreg2(
                self.blocks,
                q_hat,
                self.plant.graph,
                SynthesisConfig(fir_order=order, grid=self.cfg.grid),
                oracle_graph=self.oracle_graph,
            ).objective
            for order in (1, 3)
        ]
        self.assertLessEqual(objectives[1], objectives[0] + 1e-6)
        logger.debug("finished test_longer_fir_never_hurts")


class TestWellPosedness(unittest.TestCase):
    """Test class for the sign of the regret against H2 and H∞ optimal oracles."""

    def __init__(self, *args: any, **kwargs: any) -> None:
        """Preparation of Test object.

        Params:
            args: passthrough arguments
            kwargs: passthrough named arguments
        """
        super().__init__(*args, **kwargs)
        self.cfg = SynthesisConfig(fir_order=2, grid=FrequencyGrid.uniform(32))

    def smallest_regret(self, plant_count: int, draws: int) -> float:
        """Smallest SpReg₂ of random masked Youla parameters against optimal oracles.

        Params:
            plant_count: number of random stable 3 node plants
            draws: random Youla parameters per plant and criterion
        Returns:
            smallest regret, scaled by the oracle objective where it exceeds one
        """
        rng = np.random.default_rng(21)
        smallest = float("inf")
        for seed in range(plant_count):
            plant = build_random_plant(3, seed=100 + seed)
            blocks = plant.youla_blocks()
            mask = youla_mask(blocks, plant.graph, self.cfg.fir_order)
            for criterion in ("H2", "Hinf"):
                oracle = synth_oracle(blocks, plant.graph, criterion, self.cfg)
                for _ in range(draws):
                    q = FirTransferMatrix(0.5 * rng.standard_normal(mask.shape) * mask)
                    value = spreg2(q, oracle.q, blocks, self.cfg.grid).value
                    smallest = min(smallest, value / max(1.0, oracle.objective))
        return smallest

    def test_regret_against_optimal_oracle(self) -> None:
        """No learner on the oracle graph beats an optimal oracle at every frequency."""
        self.assertGreaterEqual(self.smallest_regret(2, 5), -1e-6)
        logger.debug("finished test_regret_against_optimal_oracle")

    @unittest.skipUnless(os.getenv(LongTestsEnvVariable) == "1", "full well-posedness suite")
    def test_regret_suite(self) -> None:
        """Ten plants with twenty draws each."""
        self.assertGreaterEqual(self.smallest_regret(10, 20), -1e-6)
        logger.debug("finished test_regret_suite")
