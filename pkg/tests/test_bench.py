"""This module contains tests for the power grid benchmark and evaluation helpers in bench.py."""

import json
import logging
import logging.config
import os
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

from bench import (
    DisturbanceSpec,
    ExperimentReport,
    ExperimentSettings,
    GridSpec,
    average_output_norm,
    build_power_grid,
    build_toy_plant,
    integrated_improvement,
    load_grid_spec,
    make_disturbance,
    peak_output_norm,
    random_phase_frequencies,
    run_experiment,
    simulate_controllers,
    spectral_curve,
    time_averaged_energy,
    toy_cancelling_youla,
)
from netgraph import is_supergraph
from REGRET_DEFAULTS import LongTestsEnvVariable
from sstf import FirTransferMatrix, FrequencyGrid

config_file = Path("logging_config.json")
with config_file.open(encoding="utf-8") as f_in:
    logging_config = json.load(f_in)
    logging.config.dictConfig(config=logging_config)
logger = logging.getLogger(__name__)


class TestPowerGrid(unittest.TestCase):
    """Test class for grid specs, the topology file and the swing dynamics."""

    def __init__(self, *args: any, **kwargs: any) -> None:
        """Preparation of Test object.

        Params:
            args: passthrough arguments
            kwargs: passthrough named arguments
        """
        super().__init__(*args, **kwargs)

    def test_topology_file(self) -> None:
        """Full grid and five bus subsystem with their oracle links."""
        full = load_grid_spec()
        self.assertEqual(16, full.n_buses)
        self.assertEqual(17, len(full.lines))
        self.assertIn((7, 14), full.lines)
        self.assertEqual(((0, 2), (0, 3), (0, 4)), full.oracle_edges)

        five = load_grid_spec(subsystem="five_bus", coupling=10.0)
        self.assertEqual(5, five.n_buses)
        self.assertEqual(((0, 1), (1, 2), (2, 3), (3, 4)), five.lines)
        self.assertEqual((10.0,) * 4, five.coupling)
        self.assertTrue(is_supergraph(five.oracle_graph(), five.graph()))

        with self.assertRaises(ValueError):
            load_grid_spec(subsystem="three_bus")
        logger.debug("finished test_topology_file")

    def test_grid_spec_validation(self) -> None:
        """Inconsistent specs are rejected."""
        with self.assertRaises(ValueError):
            GridSpec.uniform(3, [(0, 1)], [(0, 1)])
        with self.assertRaises(ValueError):
            GridSpec.uniform(3, [(0, 0)])
        with self.assertRaises(ValueError):
            GridSpec.uniform(3, [(0, 3)])
        with self.assertRaises(ValueError):
            GridSpec.uniform(3, [(0, 1)], friction=1.0)
        with self.assertRaises(ValueError):
            GridSpec(2, ((0, 1),), (1.0, 1.0), (2.0, 2.0), (20.0, 20.0))
        with self.assertRaises(ValueError):
            GridSpec(2, ((0, 1),), (0.0, 1.0), (2.0, 2.0), (20.0,))
        logger.debug("finished test_grid_spec_validation")

    def test_single_bus(self) -> None:
        """An isolated bus keeps only the discretized damping."""
        plant = build_power_grid(GridSpec.uniform(1, []))
        np.testing.assert_allclose([[1.0, 0.1], [0.0, 0.8]], plant.A)
        np.testing.assert_allclose([[0.0], [0.1]], plant.B2)
        np.testing.assert_allclose([[1.0, 0.0], [0.0, 0.0]], plant.C1)
        logger.debug("finished test_single_bus")

    def test_open_loop_modes(self) -> None:
        """Modes 0.9 ± j sqrt(0.2 μ - 0.01) for every nonzero Laplacian eigenvalue μ."""
        five = build_power_grid(load_grid_spec(subsystem="five_bus"))
        self.assertEqual([], five.validate_network_structure())
        self.assertFalse(five.is_stable)
        eigenvalues = np.linalg.eigvals(five.A)
        oscillating = eigenvalues[np.abs(eigenvalues.imag) > 1e-6]
        self.assertEqual(8, oscillating.size)
        np.testing.assert_allclose(0.9, oscillating.real, atol=1e-9)
        largest = 2 - 2 * np.cos(4 * np.pi / 5)
        self.assertAlmostEqual(np.sqrt(0.2 * largest - 0.01), np.max(oscillating.imag), places=9)
        self.assertAlmostEqual(1.0, np.max(np.abs(eigenvalues.real)), places=9)

        full = build_power_grid(load_grid_spec())
        eigenvalues = np.linalg.eigvals(full.A)
        oscillating = eigenvalues[np.abs(eigenvalues.imag) > 1e-6]
        np.testing.assert_allclose(0.9, oscillating.real, atol=1e-9)
        self.assertGreaterEqual(np.max(oscillating.imag), 0.85)
        self.assertLessEqual(np.max(oscillating.imag), 1.1)
        logger.debug("finished test_open_loop_modes")


class TestDisturbances(unittest.TestCase):
    """Test class for the disturbance generators."""

    def __init__(self, *args: any, **kwargs: any) -> None:
        """Preparation of Test object.

        Params:
            args: passthrough arguments
            kwargs: passthrough named arguments
        """
        super().__init__(*args, **kwargs)

    def test_impulse(self) -> None:
        """Only the chosen bus carries the impulse."""
        signal = make_disturbance(DisturbanceSpec("impulse", bus=1, horizon=4), 3)
        self.assertEqual((4, 3), signal.shape)
        self.assertEqual([1.0, 0.0, 0.0, 0.0], signal[:, 1].tolist())
        self.assertFalse(np.any(signal[:, [0, 2]]))
        logger.debug("finished test_impulse")

    def test_localized_cosines(self) -> None:
        """cos(0.1 t) + cos(π t / 5) on the first bus."""
        signal = make_disturbance(DisturbanceSpec("localized_cosines", horizon=50), 2)
        times = np.arange(50)
        np.testing.assert_allclose(np.cos(0.1 * times) + np.cos(np.pi * times / 5), signal[:, 0])
        normalized = make_disturbance(
            DisturbanceSpec("localized_cosines", horizon=50, normalization=2), 2
        )
        self.assertAlmostEqual(1.0, float(np.linalg.norm(normalized)))
        logger.debug("finished test_localized_cosines")

    def test_random_phase_sum(self) -> None:
        """101 high frequencies with seeded phases."""
        frequencies = random_phase_frequencies()
        self.assertEqual(101, len(frequencies))
        self.assertAlmostEqual(0.75 * np.pi, frequencies[0])
        self.assertAlmostEqual(np.pi, frequencies[-1])
        first = make_disturbance(DisturbanceSpec("random_phase_sum", seed=3, normalization=np.inf), 1)
        second = make_disturbance(DisturbanceSpec("random_phase_sum", seed=3, normalization=np.inf), 1)
        other = make_disturbance(DisturbanceSpec("random_phase_sum", seed=4, normalization=np.inf), 1)
        np.testing.assert_array_equal(first, second)
        self.assertFalse(np.allclose(first, other))
        self.assertAlmostEqual(1.0, float(np.max(np.abs(first))))
        logger.debug("finished test_random_phase_sum")

    def test_invalid_disturbances(self) -> None:
        """Unknown kinds, buses, norms and phase counts are rejected."""
        with self.assertRaises(ValueError):
            DisturbanceSpec("step")
        with self.assertRaises(ValueError):
            DisturbanceSpec("impulse", normalization=3)
        with self.assertRaises(ValueError):
            DisturbanceSpec("impulse", horizon=0)
        with self.assertRaises(ValueError):
            make_disturbance(DisturbanceSpec("impulse", bus=2), 2)
        with self.assertRaises(ValueError):
            make_disturbance(
                DisturbanceSpec("localized_cosines", frequencies=(0.1, 0.2), phases=(0.0,)), 1
            )
        logger.debug("finished test_invalid_disturbances")


class TestEvaluation(unittest.TestCase):
    """Test class for spectral curves, output metrics and reports on the toy plant."""

    def __init__(self, *args: any, **kwargs: any) -> None:
        """Preparation of Test object.

        Params:
            args: passthrough arguments
            kwargs: passthrough named arguments
        """
        super().__init__(*args, **kwargs)
        self.plant = build_toy_plant(0.5, 1.0, 2.0)
        self.zero = FirTransferMatrix(np.zeros((1, 1, 2)))

    def test_spectral_curve(self) -> None:
        """|1 / (e^{jω} - 0.5)| is 2 at ω = 0 and 2/3 at ω = π."""
        grid = FrequencyGrid.uniform(3)
        squared = spectral_curve(self.plant, self.zero, 0, grid, "sq2norm")
        self.assertEqual(["omega", "value"], list(squared.columns))
        self.assertAlmostEqual(4.0, squared["value"].iloc[0])
        peak = spectral_curve(self.plant, self.zero, 0, grid, "infnorm")
        self.assertAlmostEqual(2 / 3, peak["value"].iloc[-1])
        with self.assertRaises(ValueError):
            spectral_curve(self.plant, self.zero, 0, grid, "h3")
        logger.debug("finished test_spectral_curve")

    def test_time_averaged_energy(self) -> None:
        """A cosine input yields half the squared gain at its frequency."""
        omega = np.pi / 3
        grid = FrequencyGrid(np.array([omega]))
        gain = spectral_curve(self.plant, self.zero, 0, grid)["value"].iloc[0]
        w = np.cos(omega * np.arange(2000))[:, None]
        z = self.plant.recover_and_simulate(self.zero, w).z
        self.assertAlmostEqual(gain / 2, time_averaged_energy(z, burn_in=100), delta=1e-2)
        logger.debug("finished test_time_averaged_energy")

    def test_output_metrics(self) -> None:
        """Average Euclidean norm, peak magnitude and curve areas."""
        z = np.array([[3.0, 4.0], [0.0, 0.0]])
        self.assertEqual(2.5, average_output_norm(z))
        self.assertEqual(4.0, peak_output_norm(z))
        self.assertEqual(0.0, time_averaged_energy(z, burn_in=1))
        with self.assertRaises(ValueError):
            time_averaged_energy(z, burn_in=2)

        omegas = np.linspace(0, np.pi, 5)
        base = pd.DataFrame({"omega": omegas, "value": 2.0})
        new = pd.DataFrame({"omega": omegas, "value": 1.0})
        self.assertAlmostEqual(0.5, integrated_improvement(base, new))
        with self.assertRaises(ValueError):
            integrated_improvement(base, new.assign(omega=omegas + 0.1))
        logger.debug("finished test_output_metrics")

    def test_simulate_controllers(self) -> None:
        """All controllers see the same disturbance."""
        w = np.random.default_rng(1).standard_normal((30, 1))
        controllers = {"zero": self.zero, "cancelling": toy_cancelling_youla(0.5, 1.0, 2.0)}
        trajectories = simulate_controllers(self.plant, controllers, w, workers=2)
        self.assertEqual(["zero", "cancelling"], list(trajectories))
        np.testing.assert_array_equal(trajectories["zero"].w, trajectories["cancelling"].w)
        np.testing.assert_allclose(0.0, trajectories["cancelling"].z, atol=1e-12)
        self.assertGreater(peak_output_norm(trajectories["zero"].z), 0)
        logger.debug("finished test_simulate_controllers")

    def test_report_files(self) -> None:
        """Reports write csv tables and a summary with extra entries."""
        frame = pd.DataFrame({"omega": [0.0, 1.0], "value": [1.0, 2.0]})
        report = ExperimentReport(
            name="demo",
            table=frame,
            curves=frame,
            trajectories={"SR": frame},
            summary={"value": 1.0},
            traces={"SR": frame},
        )
        with tempfile.TemporaryDirectory() as directory:
            written = report.write(Path(directory) / "out", {"config_hash": "abc"})
            names = sorted(path.name for path in written)
            with (Path(directory) / "out" / "summary.json").open(encoding="utf-8") as file:
                summary = json.load(file)
        self.assertEqual(
            [
                "admm_trace_SR.csv",
                "metric_table.csv",
                "spectral_curves.csv",
                "summary.json",
                "trajectory_SR.csv",
            ],
            names,
        )
        self.assertEqual({"experiment": "demo", "value": 1.0, "config_hash": "abc"}, summary)
        with self.assertRaises(ValueError):
            run_experiment("ten_bus")
        self.assertEqual("Hinf", ExperimentSettings(fir_order=5).synthesis_config("Hinf").criterion)
        logger.debug("finished test_report_files")


@unittest.skipUnless(os.getenv(LongTestsEnvVariable) == "1", "full benchmark experiments")
class TestExperiments(unittest.TestCase):
    """Test class for the benchmark experiments at reduced size."""

    def __init__(self, *args: any, **kwargs: any) -> None:
        """Preparation of Test object.

        Params:
            args: passthrough arguments
            kwargs: passthrough named arguments
        """
        super().__init__(*args, **kwargs)

    def test_five_bus_spreg2(self) -> None:
        """Each controller wins the criterion it was designed for."""
        report = run_experiment(
            "five_bus_spreg2", ExperimentSettings(fir_order=20, grid_points=100, horizon=300)
        )
        self.assertEqual(
            {"h2_sq": "H2", "hinf_sq": "Hinf", "spreg2": "SR"}, report.summary["argmin"]
        )
        self.assertEqual(["H2", "SR", "Hinf"], report.table["controller"].tolist())
        self.assertEqual(300, len(report.trajectories["SR"]))
        logger.debug("finished test_five_bus_spreg2")

    def test_sixteen_bus_spreg_inf(self) -> None:
        """The regret controller is reported next to the nominal L1 controller."""
        report = run_experiment(
            "sixteen_bus_spreg_inf",
            ExperimentSettings(
                fir_order=10, grid_points=50, horizon=200, realizations=5, admm_max_iter=100
            ),
        )
        self.assertEqual(["L1", "SR"], report.table["controller"].tolist())
        self.assertEqual(5, report.summary["realizations"])
        self.assertEqual({"oracle", "L1", "SR"}, set(report.traces))
        logger.debug("finished test_sixteen_bus_spreg_inf")
