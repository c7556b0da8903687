"""This file is used to define pre-stabilization and coprime factorization of a NetworkedPlant."""

import abc
import logging
from dataclasses import dataclass

import cvxpy as cp
import numpy as np
import scipy.linalg

from conic import ConeMembership, ConicProblem, solve
from netgraph import BlockPartition, decentralized_fixed_modes
from REGRET_DEFAULTS import (
    FactorizationSamples,
    SdpTolerance,
    StabilizationDecayTargets,
    StabilizationPatterns,
    StabilizationRandomTrials,
    SynthesisTailTolerance,
)
from sstf import (
    FirTransferMatrix,
    FrequencyGrid,
    StateSpace,
    UnstableSystemError,
    certified_horizon,
    fir_convolve,
    fir_from_state_space,
    freq_response,
)

logger = logging.getLogger(__name__)


class PrestabilizationError(RuntimeError):
    """Raised if no structured stabilizing gains were found."""

    def __init__(self, message: str, radius_f: float, radius_l: float) -> None:
        """Keeps the best spectral radii which were reached.

        Args:
            message: description of the failure
            radius_f: best spectral radius of A + B2 F
            radius_l: best spectral radius of A + L C2
        """
        super().__init__(message)
        self.radius_f = radius_f
        self.radius_l = radius_l


@dataclass(frozen=True, eq=False)
class StabilizingGains:
    """State feedback F on the graph pattern and block-diagonal observer gain L."""

    F: np.ndarray
    L: np.ndarray
    radius_f: float
    radius_l: float
    method: str = "given"

    @property
    def is_zero(self) -> bool:
        """True for the trivial choice of a stable plant."""
        return not np.any(self.F) and not np.any(self.L)

    def to_dict(self) -> dict:
        """Json representation."""
        return {
            "F": self.F.tolist(),
            "L": self.L.tolist(),
            "radius_f": self.radius_f,
            "radius_l": self.radius_l,
            "method": self.method,
        }


def _radius(matrix: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(matrix)))) if matrix.size else 0.0


def _lmi_state_feedback(
    A: np.ndarray,  # noqa: N803
    B: np.ndarray,  # noqa: N803
    gain_mask: np.ndarray,
    lyapunov_mask: np.ndarray,
    decay: float,
) -> np.ndarray | None:
    """Gain G with pattern gain_mask such that A + B G has spectral radius below decay.

    Block-diagonal X >= I, Y = G X and [[decay X, A X + B Y], [., decay X]] >= 0.
    """
    n = A.shape[0]
    lyapunov = cp.Variable((n, n), symmetric=True)
    product = cp.Variable(gain_mask.shape)
    coupled = A @ lyapunov + B @ product
    problem = ConicProblem(
        objective=cp.norm(product, "fro") + 1e-3 * cp.trace(lyapunov),
        variables={"X": lyapunov, "Y": product},
        equalities=[
            cp.multiply(~lyapunov_mask, lyapunov) == 0,
            cp.multiply(~gain_mask, product) == 0,
        ],
        cones=[
            ConeMembership("psd", lyapunov - np.eye(n), n),
            ConeMembership(
                "psd",
                cp.bmat([[decay * lyapunov, coupled], [coupled.T, decay * lyapunov]]),
                2 * n,
            ),
        ],
    )
    solution = solve(problem, tol=SdpTolerance)
    if not solution.ok:
        logger.debug("Structured LMI with decay %s returned %s", decay, solution.status)
        return None
    lyapunov_value = np.where(lyapunov_mask, solution.values["X"], 0.0)
    gain = np.where(gain_mask, solution.values["Y"], 0.0) @ np.linalg.inv(lyapunov_value)
    return np.where(gain_mask, gain, 0.0)


def _lqr_projection(
    A: np.ndarray,  # noqa: N803
    B: np.ndarray,  # noqa: N803
    gain_mask: np.ndarray,
) -> np.ndarray:
    """Centralized LQR gain with entries outside of the pattern removed."""
    riccati = scipy.linalg.solve_discrete_are(A, B, np.eye(A.shape[0]), np.eye(B.shape[1]))
    gain = -np.linalg.solve(np.eye(B.shape[1]) + B.T @ riccati @ B, B.T @ riccati @ A)
    return np.where(gain_mask, gain, 0.0)


def _random_search(
    A: np.ndarray,  # noqa: N803
    B: np.ndarray,  # noqa: N803
    gain_mask: np.ndarray,
    start: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Hill climbing on the spectral radius over structured gains."""
    best = start
    best_radius = _radius(A + B @ best)
    step = 0.1 * max(1.0, float(np.linalg.norm(best)))
    for _ in range(StabilizationRandomTrials):
        if best_radius < 1:
            break
        candidate = best + step * np.where(gain_mask, rng.standard_normal(best.shape), 0.0)
        radius = _radius(A + B @ candidate)
        if radius < best_radius:
            best, best_radius = candidate, radius
        else:
            step *= 0.995
    return best


def structured_stabilizing_gain(
    A: np.ndarray,  # noqa: N803
    B: np.ndarray,  # noqa: N803
    gain_mask: np.ndarray,
    lyapunov_mask: np.ndarray,
    seed: int = 0,
) -> tuple[np.ndarray, str]:
    """Structured G making A + B G Schur stable.

    Tries the block-diagonal Lyapunov LMI for decreasing decay targets,
    then the projected LQR gain and finally a randomized search.

    Returns:
        best gain found and the name of the method which produced it
    """
    for decay in StabilizationDecayTargets:
        gain = _lmi_state_feedback(A, B, gain_mask, lyapunov_mask, decay)
        if gain is not None and _radius(A + B @ gain) < 1:
            return gain, "lmi"
    try:
        gain = _lqr_projection(A, B, gain_mask)
    except (np.linalg.LinAlgError, ValueError):
        logger.info("Riccati equation not solvable, starting random search from zero")
        gain = np.zeros(gain_mask.shape)
    if _radius(A + B @ gain) < 1:
        return gain, "lqr-projection"
    gain = _random_search(A, B, gain_mask, gain, np.random.default_rng(seed))
    return gain, "random-search"


@dataclass(frozen=True, eq=False)
class CoprimeFactorization:
    """Eight stable factors of P22 built from stabilizing gains."""

    U_l: StateSpace
    V_l: StateSpace
    N_l: StateSpace
    M_l: StateSpace
    U_r: StateSpace
    V_r: StateSpace
    N_r: StateSpace
    M_r: StateSpace
    gains: StabilizingGains

    def identity_residual(self, omegas: np.ndarray) -> float:
        """Largest deviation of [[U_l, -V_l], [-N_l, M_l]] [[M_r, V_r], [N_r, U_r]] from I."""
        worst = 0.0
        for omega in omegas:
            left = np.block(
                [
                    [freq_response(self.U_l, omega), -freq_response(self.V_l, omega)],
                    [-freq_response(self.N_l, omega), freq_response(self.M_l, omega)],
                ]
            )
            right = np.block(
                [
                    [freq_response(self.M_r, omega), freq_response(self.V_r, omega)],
                    [freq_response(self.N_r, omega), freq_response(self.U_r, omega)],
                ]
            )
            worst = max(worst, float(np.max(np.abs(left @ right - np.eye(left.shape[0])))))
        return worst

    def p22_residual(self, p22: StateSpace, omegas: np.ndarray) -> float:
        """Largest deviation of N_r M_r^{-1} from P22."""
        worst = 0.0
        for omega in omegas:
            ratio = freq_response(self.N_r, omega) @ np.linalg.inv(
                freq_response(self.M_r, omega)
            )
            worst = max(worst, float(np.max(np.abs(ratio - freq_response(p22, omega)))))
        return worst


@dataclass(frozen=True, eq=False)
class TransformedPlant:
    """Stable blocks P̃11, P̃12, P̃21, the closed loop is P̃11 + P̃12 Q P̃21.

    realization is a stable plant whose sub-blocks are the three maps and whose
    map u -> y vanishes, gains are the stabilizing gains used to obtain it.
    """

    p11: StateSpace
    p12: StateSpace
    p21: StateSpace
    realization: "NetworkedPlantStabilizationPart"
    gains: StabilizingGains

    @property
    def dims(self) -> dict[str, int]:
        """Sizes of z, w, u and y."""
        return {
            "performance": self.p11.shape[0],
            "disturbance": self.p11.shape[1],
            "input": self.p12.shape[1],
            "output": self.p21.shape[0],
        }

    def closed_loop_horizon(self, order: int, tol: float = SynthesisTailTolerance) -> int:
        """Horizon after which the closed loop tail of an FIR Q of given order is below tol."""
        return max(
            certified_horizon(self.p11, tol),
            order + certified_horizon(self.p12, tol) + certified_horizon(self.p21, tol),
        )

    def closed_loop_fir(self, q: FirTransferMatrix, f_out: int) -> FirTransferMatrix:
        """Impulse response of P̃11 + P̃12 Q P̃21 up to f_out."""
        return fir_from_state_space(self.p11, f_out) + fir_convolve(
            [self.p12, q, self.p21], f_out
        )

    def closed_loop_response(self, q: FirTransferMatrix, omega: float) -> np.ndarray:
        """Frequency response of the closed loop at ω."""
        return freq_response(self.p11, omega) + freq_response(
            self.p12, omega
        ) @ freq_response(q, omega) @ freq_response(self.p21, omega)

    def closed_loop_grid(
        self, q: FirTransferMatrix, grid: FrequencyGrid
    ) -> np.ndarray:
        """Closed loop responses stacked over the grid."""
        return np.stack([self.closed_loop_response(q, omega) for omega in grid])


class NetworkedPlantStabilizationPart(abc.ABC):
    """Part of NetworkedPlant class that defines pre-stabilization and the transformed plant."""

    def prestabilize(
        self, pattern: str = "graph", seed: int = 0
    ) -> StabilizingGains:
        """Finds F on the given pattern and block-diagonal L stabilizing the plant.

        Params:
            pattern: "graph" for F on the adjacency pattern or "block-diagonal"
            seed: seed of random gains used by the fixed mode test and the search
        Returns:
            StabilizingGains, zero gains for a stable plant
        """
        if pattern not in StabilizationPatterns:
            msg = f"unknown pattern {pattern}, use one of {StabilizationPatterns}"
            raise ValueError(msg)
        parts = self.partitions
        if self.is_stable:
            logger.info("Plant is stable, using F = 0 and L = 0")
            radius = self.p22.spectral_radius
            return StabilizingGains(
                np.zeros((parts.input.total, parts.state.total)),
                np.zeros((parts.state.total, parts.output.total)),
                radius,
                radius,
                method="stable",
            )
        report = decentralized_fixed_modes(
            self.A, self.B2, self.C2, parts.input, parts.output, seed=seed
        )
        if not report.stabilizable:
            msg = f"unstable decentralized fixed modes {report.modes}"
            raise PrestabilizationError(msg, self.p22.spectral_radius, self.p22.spectral_radius)

        diagonal = self.allowed_blocks("block-diagonal")
        lyapunov_mask = parts.state.expand(diagonal, parts.state)
        feedback_mask = parts.input.expand(self.allowed_blocks(pattern), parts.state)
        observer_mask = parts.output.expand(diagonal, parts.state)

        feedback, method_f = structured_stabilizing_gain(
            self.A, self.B2, feedback_mask, lyapunov_mask, seed
        )
        observer_t, method_l = structured_stabilizing_gain(
            self.A.T, self.C2.T, observer_mask, lyapunov_mask, seed
        )
        radius_f = _radius(self.A + self.B2 @ feedback)
        radius_l = _radius(self.A + observer_t.T @ self.C2)
        if radius_f >= 1 or radius_l >= 1:
            msg = f"no stabilizing gains found, best radii {radius_f:.4f} and {radius_l:.4f}"
            raise PrestabilizationError(msg, radius_f, radius_l)
        logger.info(
            "Pre-stabilized with radii %.4f (F by %s) and %.4f (L by %s)",
            radius_f,
            method_f,
            radius_l,
            method_l,
        )
        return StabilizingGains(
            feedback, observer_t.T, radius_f, radius_l, method=f"{method_f}/{method_l}"
        )

    def doubly_coprime(self, gains: StabilizingGains) -> CoprimeFactorization:
        """Doubly coprime factorization of P22 from stabilizing gains.

        Right factors carry a sign flip compared to the observer-based textbook
        realization, so that F = L = 0 reproduces U_l = -I, V_l = 0, N_l = P22,
        M_l = I, U_r = I, V_r = 0, N_r = -P22 and M_r = -I.

        Params:
            gains: F and L with A + B2 F and A + L C2 Schur stable
        Returns:
            CoprimeFactorization
        """
        feedback, observer = gains.F, gains.L
        closed_f = self.A + self.B2 @ feedback
        closed_l = self.A + observer @ self.C2
        if _radius(closed_f) >= 1 or _radius(closed_l) >= 1:
            msg = "gains do not stabilize the plant"
            raise ValueError(msg)
        eye_u = np.eye(self.partitions.input.total)
        eye_y = np.eye(self.partitions.output.total)
        zero_uy = np.zeros((eye_u.shape[0], eye_y.shape[0]))
        zero_yu = zero_uy.T
        return CoprimeFactorization(
            U_l=-StateSpace(closed_l, -self.B2, feedback, eye_u),
            V_l=StateSpace(closed_l, observer, feedback, zero_uy),
            N_l=StateSpace(closed_l, self.B2, self.C2, zero_yu),
            M_l=StateSpace(closed_l, observer, self.C2, eye_y),
            U_r=StateSpace(closed_f, -observer, self.C2, eye_y),
            V_r=StateSpace(closed_f, -observer, feedback, zero_uy),
            N_r=-StateSpace(closed_f, self.B2, self.C2, zero_yu),
            M_r=-StateSpace(closed_f, self.B2, feedback, eye_u),
            gains=gains,
        )

    def stabilized_realization(
        self, gains: StabilizingGains
    ) -> "NetworkedPlantStabilizationPart":
        """Stable plant realizing P̃11, P̃12 and P̃21 with vanishing u -> y map.

        States are (x_i, e_i) per node with e = x - x̂ the observer error.
        """
        n = self.partitions.state.total
        feedback, observer = gains.F, gains.L
        zero = np.zeros((n, n))
        matrices = {
            "A": np.block(
                [
                    [self.A + self.B2 @ feedback, -self.B2 @ feedback],
                    [zero, self.A + observer @ self.C2],
                ]
            ),
            "B1": np.vstack([self.B1, self.B1 + observer @ self.D21]),
            "B2": np.vstack([self.B2, np.zeros_like(self.B2)]),
            "C1": np.hstack([self.C1 + self.D12 @ feedback, -self.D12 @ feedback]),
            "C2": np.hstack([np.zeros_like(self.C2), self.C2]),
            "D11": self.D11,
            "D12": self.D12,
            "D21": self.D21,
        }
        state = self.partitions.state
        order = np.concatenate(
            [
                np.concatenate([np.arange(n)[state.slice(i)], n + np.arange(n)[state.slice(i)]])
                for i in range(state.node_count)
            ]
        )
        matrices["A"] = matrices["A"][np.ix_(order, order)]
        matrices["B1"] = matrices["B1"][order]
        matrices["B2"] = matrices["B2"][order]
        matrices["C1"] = matrices["C1"][:, order]
        matrices["C2"] = matrices["C2"][:, order]
        partitions = type(self.partitions)(
            state=BlockPartition(tuple(2 * size for size in state.sizes)),
            input=self.partitions.input,
            output=self.partitions.output,
            disturbance=self.partitions.disturbance,
            performance=self.partitions.performance,
        )
        return type(self)(graph=self.graph, partitions=partitions, matrices=matrices)

    def transform_plant(self, cf: CoprimeFactorization) -> TransformedPlant:
        """P̃11 = P11 + P12 V_r M_l P21, P̃12 = -P12 M_r and P̃21 = M_l P21.

        The blocks are taken from a stable joint realization which equals the
        factor products, a stable plant with zero gains keeps its own realization.
        """
        if cf.gains.is_zero and self.is_stable:
            realization = self
        else:
            realization = self.stabilized_realization(cf.gains)
        if not realization.is_stable:
            msg = "transformed plant is unstable, the factorization is invalid"
            raise UnstableSystemError(msg)
        return TransformedPlant(
            p11=realization.p11,
            p12=realization.p12,
            p21=realization.p21,
            realization=realization,
            gains=cf.gains,
        )

    def youla_blocks(self) -> TransformedPlant:
        """Transformed plant of a stable plant with the trivial factorization."""
        if not self.is_stable:
            msg = "plant is unstable, call prestabilize and transform_plant first"
            raise UnstableSystemError(msg)
        return self.transform_plant(self.doubly_coprime(self.prestabilize()))

    def factorization_frequencies(self) -> np.ndarray:
        """Frequencies used for identity checks of a factorization."""
        return np.linspace(-np.pi, np.pi, FactorizationSamples, endpoint=False)
