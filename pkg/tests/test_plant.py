"""This module contains tests for NetworkedPlant and its stabilization part."""

import json
import logging
import logging.config
import tempfile
import unittest
from pathlib import Path

import numpy as np

from bench import build_random_plant, build_toy_plant, toy_cancelling_youla
from NetworkedPlant import NetworkedPlant
from NetworkedPlantStabilizationPart import PrestabilizationError
from NetworkedPlantStructurePart import PlantPartitions
from netgraph import DirectedGraph, fir_sparsity_mask, respects_mask
from sstf import (
    FirTransferMatrix,
    UnstableSystemError,
    fir_convolve,
    freq_response,
    impulse_response,
)

config_file = Path("logging_config.json")
with config_file.open(encoding="utf-8") as f_in:
    logging_config = json.load(f_in)
    logging.config.dictConfig(config=logging_config)
logger = logging.getLogger(__name__)


def unstable_pair() -> NetworkedPlant:
    """Two coupled unstable nodes with local actuation and measurement."""
    graph = DirectedGraph.undirected(2, [(0, 1)])
    eye = np.eye(2)
    matrices = {
        "A": [[1.2, 0.1], [0.1, 1.1]],
        "B1": eye,
        "B2": eye,
        "C1": eye,
        "C2": eye,
        "D21": 0.1 * eye,
    }
    return NetworkedPlant(graph, PlantPartitions.uniform(2), matrices)


class TestNetworkedPlantStructure(unittest.TestCase):
    """Test class for construction, sub-blocks and structure validation."""

    def __init__(self, *args: any, **kwargs: any) -> None:
        """Preparation of Test object.

        Params:
            args: passthrough arguments
            kwargs: passthrough named arguments
        """
        super().__init__(*args, **kwargs)

    def test_random_plant_is_structured(self) -> None:
        """Generated plants respect the chain pattern."""
        plant = build_random_plant(3, seed=4)
        self.assertEqual([], plant.validate_network_structure())
        self.assertTrue(plant.is_stable)
        self.assertEqual((6, 3), plant.p12.shape)
        self.assertEqual((3, 3), plant.p22.shape)
        self.assertEqual((2, 1), plant.block("C1", 1, 1).shape)
        logger.debug("finished test_random_plant_is_structured")

    def test_structure_violation(self) -> None:
        """Coupling between nodes 0 and 2 of a chain is reported."""
        plant = build_random_plant(3, seed=4)
        plant.matrices["A"][0, 2] = 0.3
        violations = plant.validate_network_structure()
        self.assertEqual(1, len(violations))
        self.assertEqual(("A", 0, 2), (violations[0].matrix, violations[0].row_node, violations[0].col_node))
        self.assertAlmostEqual(0.3, violations[0].magnitude)
        logger.debug("finished test_structure_violation")

    def test_invalid_construction(self) -> None:
        """Wrong shapes, nonzero D22 and mismatching partitions are rejected."""
        graph = DirectedGraph.undirected(2, [(0, 1)])
        partitions = PlantPartitions.uniform(2)
        with self.assertRaises(ValueError):
            NetworkedPlant(graph, partitions, {"A": np.eye(3)})
        with self.assertRaises(ValueError):
            NetworkedPlant(graph, partitions, {"A": np.eye(2), "D22": np.eye(2)})
        with self.assertRaises(ValueError):
            NetworkedPlant(graph, PlantPartitions.uniform(3), {"A": np.eye(3)})
        logger.debug("finished test_invalid_construction")

    def test_quadratic_invariance(self) -> None:
        """X P22 Y stays within the delay mask for masked FIR factors X and Y."""
        plant = build_random_plant(4, seed=6)
        parts = plant.partitions
        mask = fir_sparsity_mask(plant.graph, 4, parts.input, parts.output)
        rng = np.random.default_rng(6)
        for _ in range(100):
            x = FirTransferMatrix(rng.standard_normal(mask.shape) * mask)
            y = FirTransferMatrix(rng.standard_normal(mask.shape) * mask)
            product = fir_convolve([x, plant.p22, y], 4)
            self.assertTrue(respects_mask(product.coeffs, mask, tol=1e-12))
        logger.debug("finished test_quadratic_invariance")

    def test_plant_file(self) -> None:
        """Plant documents are read back unchanged."""
        plant = build_random_plant(3, seed=2)
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / "plant.json"
            plant.write_file(path)
            restored = NetworkedPlant.from_file(path)
        np.testing.assert_array_equal(plant.A, restored.A)
        np.testing.assert_array_equal(plant.D12, restored.D12)
        self.assertEqual(plant.graph.edges, restored.graph.edges)
        self.assertEqual(plant.partitions, restored.partitions)
        logger.debug("finished test_plant_file")


class TestNetworkedPlantStabilization(unittest.TestCase):
    """Test class for pre-stabilization, coprime factors and the transformed plant."""

    def __init__(self, *args: any, **kwargs: any) -> None:
        """Preparation of Test object.

        Params:
            args: passthrough arguments
            kwargs: passthrough named arguments
        """
        super().__init__(*args, **kwargs)
        self.stable = build_random_plant(3, seed=1)
        self.unstable = unstable_pair()

    def test_stable_plant_trivial_factors(self) -> None:
        """F = L = 0 gives U_l = -I, M_r = -I and N_r = -P22."""
        gains = self.stable.prestabilize()
        self.assertTrue(gains.is_zero)
        self.assertEqual("stable", gains.method)
        cf = self.stable.doubly_coprime(gains)
        np.testing.assert_allclose(-np.eye(3), freq_response(cf.U_l, 0.3), atol=1e-12)
        np.testing.assert_allclose(-np.eye(3), freq_response(cf.M_r, 0.3), atol=1e-12)
        np.testing.assert_allclose(
            -freq_response(self.stable.p22, 0.3), freq_response(cf.N_r, 0.3), atol=1e-12
        )
        omegas = self.stable.factorization_frequencies()
        self.assertLessEqual(cf.identity_residual(omegas), 1e-8)
        self.assertLessEqual(cf.p22_residual(self.stable.p22, omegas), 1e-8)
        self.assertIs(self.stable, self.stable.transform_plant(cf).realization)
        logger.debug("finished test_stable_plant_trivial_factors")

    def test_prestabilize_unstable_plant(self) -> None:
        """Structured gains make both loops Schur stable."""
        gains = self.unstable.prestabilize(pattern="block-diagonal")
        self.assertLess(gains.radius_f, 1)
        self.assertLess(gains.radius_l, 1)
        self.assertEqual(0.0, gains.F[0, 1])
        self.assertEqual(0.0, gains.L[1, 0])
        cf = self.unstable.doubly_coprime(gains)
        omegas = self.unstable.factorization_frequencies()
        self.assertLessEqual(cf.identity_residual(omegas), 1e-8)
        self.assertLessEqual(cf.p22_residual(self.unstable.p22, omegas), 1e-6)
        with self.assertRaises(ValueError):
            self.unstable.prestabilize(pattern="dense")
        logger.debug("finished test_prestabilize_unstable_plant")

    def test_unstable_fixed_mode(self) -> None:
        """A node without actuation cannot be stabilized."""
        plant = NetworkedPlant(
            DirectedGraph.undirected(2, []),
            PlantPartitions.uniform(2),
            {"A": np.diag([1.5, 0.5]), "B2": np.diag([0.0, 1.0]), "C2": np.eye(2)},
        )
        with self.assertRaises(PrestabilizationError):
            plant.prestabilize()
        logger.debug("finished test_unstable_fixed_mode")

    def test_transformed_plant(self) -> None:
        """The stable realization has a vanishing map u -> y."""
        transformed = self.unstable.transformed()
        self.assertTrue(transformed.realization.is_stable)
        self.assertEqual((4, 4), transformed.realization.A.shape)
        np.testing.assert_allclose(0.0, impulse_response(transformed.realization.p22, 20), atol=1e-12)
        self.assertEqual(
            {"performance": 2, "disturbance": 2, "input": 2, "output": 2}, transformed.dims
        )
        self.assertGreaterEqual(transformed.closed_loop_horizon(3), 3)
        logger.debug("finished test_transformed_plant")

    def test_stabilizer_controller(self) -> None:
        """Q = 0 in the transformed plant equals the observer based controller."""
        gains = self.unstable.prestabilize()
        transformed = self.unstable.transformed(gains)
        closed_loop = self.unstable.lft_closed_loop(self.unstable.stabilizer_controller(gains))
        self.assertTrue(closed_loop.is_stable)
        np.testing.assert_allclose(
            impulse_response(transformed.p11, 40), impulse_response(closed_loop, 40), atol=1e-8
        )
        logger.debug("finished test_stabilizer_controller")

    def test_stabilizer_controller_structure(self) -> None:
        """The Markov parameters of K0 follow the delay mask of the graph."""
        graph = DirectedGraph.undirected(3, [(0, 1), (1, 2)])
        eye = np.eye(3)
        plant = NetworkedPlant(
            graph,
            PlantPartitions.uniform(3),
            {
                "A": [[1.2, 0.1, 0.0], [0.1, 1.1, 0.1], [0.0, 0.1, 1.15]],
                "B1": eye,
                "B2": eye,
                "C1": eye,
                "C2": eye,
                "D21": 0.1 * eye,
            },
        )
        mask = fir_sparsity_mask(graph, 8, plant.partitions.input, plant.partitions.output)
        for pattern in ("graph", "block-diagonal"):
            gains = plant.prestabilize(pattern=pattern)
            controller = plant.stabilizer_controller(gains)
            markov = impulse_response(controller, 8)
            self.assertTrue(respects_mask(markov, mask, tol=1e-12), pattern)
            self.assertEqual(0.0, markov[1, 0, 2])
            self.assertGreater(np.max(np.abs(markov[1])), 0.0)
            self.assertTrue(plant.lft_closed_loop(controller).is_stable)
        logger.debug("finished test_stabilizer_controller_structure")


class TestClosedLoopSimulation(unittest.TestCase):
    """Test class for recover_and_simulate against closed loop impulse responses."""

    def __init__(self, *args: any, **kwargs: any) -> None:
        """Preparation of Test object.

        Params:
            args: passthrough arguments
            kwargs: passthrough named arguments
        """
        super().__init__(*args, **kwargs)
        rng = np.random.default_rng(7)
        self.q = FirTransferMatrix(0.2 * rng.standard_normal((3, 2, 2)))

    def _impulse_outputs(
        self, plant: NetworkedPlant, q: FirTransferMatrix, channel: int, **kwargs: object
    ) -> np.ndarray:
        w = np.zeros((30, plant.partitions.disturbance.total))
        w[0, channel] = 1.0
        return plant.recover_and_simulate(q, w, **kwargs).z

    def test_stable_plant_simulation(self) -> None:
        """Simulated impulse responses match P11 + P12 Q P21."""
        plant = build_random_plant(2, seed=3)
        fir = plant.closed_loop_fir(self.q, 29)
        for channel in range(2):
            np.testing.assert_allclose(
                fir.coeffs[:, :, channel], self._impulse_outputs(plant, self.q, channel), atol=1e-10
            )
        logger.debug("finished test_stable_plant_simulation")

    def test_prestabilized_simulation(self) -> None:
        """Innovation form simulation matches the transformed plant closed loop."""
        plant = unstable_pair()
        gains = plant.prestabilize()
        fir = plant.transformed(gains).closed_loop_fir(self.q, 29)
        for channel in range(2):
            np.testing.assert_allclose(
                fir.coeffs[:, :, channel],
                self._impulse_outputs(plant, self.q, channel, gains=gains),
                atol=1e-8,
            )
        with self.assertRaises(UnstableSystemError):
            plant.closed_loop_fir(self.q, 10)
        with self.assertRaises(UnstableSystemError):
            plant.recover_and_simulate(self.q, np.zeros((5, 2)))
        logger.debug("finished test_prestabilized_simulation")

    def test_cancelling_toy_controller(self) -> None:
        """The order one Youla parameter cancels the toy plant response."""
        plant = build_toy_plant(0.5, 1.0, 2.0)
        q = toy_cancelling_youla(0.5, 1.0, 2.0)
        np.testing.assert_allclose(0.0, plant.closed_loop_fir(q, 10).coeffs, atol=1e-12)
        w = np.random.default_rng(0).standard_normal((50, 1))
        np.testing.assert_allclose(0.0, plant.recover_and_simulate(q, w).z, atol=1e-12)
        logger.debug("finished test_cancelling_toy_controller")

    def test_trajectory_frame(self) -> None:
        """Horizon padding and one column per signal channel."""
        plant = build_random_plant(3, seed=0)
        q = FirTransferMatrix(np.zeros((1, 3, 3)))
        trajectory = plant.recover_and_simulate(q, np.ones((4, 3)), horizon=6)
        self.assertEqual(6, trajectory.horizon)
        self.assertEqual(0.0, trajectory.w[5, 0])
        frame = trajectory.to_frame()
        self.assertEqual(16, len(frame.columns))
        self.assertIn("z_5", frame.columns)
        with self.assertRaises(ValueError):
            plant.recover_and_simulate(q, np.ones((4, 2)))
        with self.assertRaises(ValueError):
            plant.recover_and_simulate(FirTransferMatrix(np.zeros((1, 2, 3))), np.ones((4, 3)))
        logger.debug("finished test_trajectory_frame")
