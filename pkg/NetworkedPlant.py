"""This file is used to define NetworkedPlant class together with its closed loops and controller simulation."""

import json
import logging
import logging.config
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from NetworkedPlantStabilizationPart import (
    NetworkedPlantStabilizationPart,
    StabilizingGains,
    TransformedPlant,
)
from NetworkedPlantStructurePart import NetworkedPlantStructurePart, PlantPartitions
from netgraph import DirectedGraph
from sstf import (
    FirTransferMatrix,
    StateSpace,
    UnstableSystemError,
    fir_convolve,
    fir_from_state_space,
)

config_file = Path("logging_config.json")
with config_file.open(encoding="utf-8") as f_in:
    logging_config = json.load(f_in)
    logging.config.dictConfig(config=logging_config)
logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Signals of one closed-loop simulation, each of shape (T, size)."""

    w: np.ndarray
    y: np.ndarray
    u: np.ndarray
    z: np.ndarray

    @property
    def horizon(self) -> int:
        """Number of simulated steps."""
        return self.w.shape[0]

    def to_frame(self) -> pd.DataFrame:
        """One row per time step with columns t, w_0.., y_0.., u_0.., z_0.."""
        columns = {"t": np.arange(self.horizon)}
        for name in ("w", "y", "u", "z"):
            signal = getattr(self, name)
            for index in range(signal.shape[1]):
                columns[f"{name}_{index}"] = signal[:, index]
        return pd.DataFrame(columns)


class NetworkedPlant(NetworkedPlantStructurePart, NetworkedPlantStabilizationPart):
    """Main class that defines one network-structured plant on a directed graph."""

    def __init__(
        self,
        graph: DirectedGraph,
        partitions: PlantPartitions,
        matrices: dict[str, np.ndarray],
    ) -> None:
        """Default construction of a plant and its block views.

        Args:
            graph: coupling and communication graph, self-loops included
            partitions: per-node dimensions of x, u, y, w and z
            matrices: A, B1, B2, C1, C2 and optional D11, D12, D21, D22
        """
        super().__init__(graph=graph, partitions=partitions, matrices=matrices)

    def closed_loop_fir(self, q: FirTransferMatrix, f_out: int) -> FirTransferMatrix:
        """FIR truncation of P11 + P12 Q P21 exact up to f_out.

        Params:
            q: Youla parameter of shape (m, p)
            f_out: last coefficient index kept
        Returns:
            closed loop impulse response w -> z
        """
        if not self.is_stable:
            msg = "plant is unstable, use the closed loop of its transformed plant"
            raise UnstableSystemError(msg)
        if q.shape != self.p22.shape[::-1]:
            msg = f"Youla parameter has shape {q.shape}, expected {self.p22.shape[::-1]}"
            raise ValueError(msg)
        return fir_from_state_space(self.p11, f_out) + fir_convolve(
            [self.p12, q, self.p21], f_out
        )

    def stabilizer_controller(self, gains: StabilizingGains) -> StateSpace:
        """Observer based controller K0 with u = K0 y, the controller of Q = 0."""
        return StateSpace(
            self.A + self.B2 @ gains.F + gains.L @ self.C2,
            -gains.L,
            gains.F,
            np.zeros((self.partitions.input.total, self.partitions.output.total)),
        )

    def lft_closed_loop(self, controller: StateSpace) -> StateSpace:
        """Map w -> z of the interconnection with u = K y.

        Params:
            controller: explicit controller realization of shape (m, p)
        Returns:
            closed loop in coordinates (x, controller state)
        """
        if controller.shape != self.p22.shape[::-1]:
            msg = f"controller has shape {controller.shape}, expected {self.p22.shape[::-1]}"
            raise ValueError(msg)
        Ak, Bk, Ck, Dk = controller.A, controller.B, controller.C, controller.D  # noqa: N806
        A = np.block(  # noqa: N806
            [
                [self.A + self.B2 @ Dk @ self.C2, self.B2 @ Ck],
                [Bk @ self.C2, Ak],
            ]
        )
        B = np.vstack([self.B1 + self.B2 @ Dk @ self.D21, Bk @ self.D21])  # noqa: N806
        C = np.hstack([self.C1 + self.D12 @ Dk @ self.C2, self.D12 @ Ck])  # noqa: N806
        D = self.D11 + self.D12 @ Dk @ self.D21  # noqa: N806
        return StateSpace(A, B, C, D)

    def _default_gains(self) -> StabilizingGains:
        if not self.is_stable:
            msg = "unstable plant requires stabilizing gains for the simulation"
            raise UnstableSystemError(msg)
        return StabilizingGains(
            np.zeros((self.partitions.input.total, self.partitions.state.total)),
            np.zeros((self.partitions.state.total, self.partitions.output.total)),
            self.p22.spectral_radius,
            self.p22.spectral_radius,
            method="stable",
        )

    def recover_and_simulate(
        self,
        q: FirTransferMatrix,
        w: np.ndarray,
        horizon: int | None = None,
        gains: StabilizingGains | None = None,
    ) -> Trajectory:
        """Simulates the loop closed by the controller of Youla parameter Q.

        The controller is never formed, it is run in innovation form
        x̂+ = A x̂ + B2 u - L η, η = y - C2 x̂, u = F x̂ + (Q * η).
        With zero gains x̂ is an internal model copy of P22 and η = y - P22 u.

        Params:
            q: Youla parameter of shape (m, p)
            w: disturbance of shape (T, n_w), zero padded or truncated to horizon
            horizon: number of steps, defaults to the length of w
            gains: stabilizing gains which define the parametrization, zero for stable plants
        Returns:
            Trajectory with w, y, u and z
        """
        if q.shape != self.p22.shape[::-1]:
            msg = f"internal model has shape {self.p22.shape}, Youla parameter {q.shape}"
            raise ValueError(msg)
        gains = self._default_gains() if gains is None else gains
        w = np.asarray(w, dtype=float).reshape(len(w), -1)
        if w.shape[1] != self.partitions.disturbance.total:
            msg = f"disturbance has {w.shape[1]} channels, expected {self.partitions.disturbance.total}"
            raise ValueError(msg)
        horizon = w.shape[0] if horizon is None else horizon
        disturbance = np.zeros((horizon, w.shape[1]))
        keep = min(horizon, w.shape[0])
        disturbance[:keep] = w[:keep]

        state = np.zeros(self.partitions.state.total)
        estimate = np.zeros(self.partitions.state.total)
        innovations = np.zeros((horizon, self.partitions.output.total))
        y = np.zeros((horizon, self.partitions.output.total))
        u = np.zeros((horizon, self.partitions.input.total))
        z = np.zeros((horizon, self.partitions.performance.total))
        coeffs = q.coeffs
        for t in range(horizon):
            y[t] = self.C2 @ state + self.D21 @ disturbance[t]
            innovations[t] = y[t] - self.C2 @ estimate
            taps = min(t + 1, coeffs.shape[0])
            u[t] = gains.F @ estimate + np.einsum(
                "sij,sj->i", coeffs[:taps], innovations[t::-1][:taps]
            )
            z[t] = self.C1 @ state + self.D11 @ disturbance[t] + self.D12 @ u[t]
            state = self.A @ state + self.B1 @ disturbance[t] + self.B2 @ u[t]
            estimate = self.A @ estimate + self.B2 @ u[t] - gains.L @ innovations[t]
        logger.debug("Simulated %s steps with Youla order %s", horizon, q.order)
        return Trajectory(disturbance, y, u, z)

    def transformed(self, gains: StabilizingGains | None = None) -> TransformedPlant:
        """Transformed plant from given gains, found by prestabilize if None."""
        gains = self.prestabilize() if gains is None else gains
        return self.transform_plant(self.doubly_coprime(gains))
