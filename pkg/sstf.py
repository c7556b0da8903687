"""This module contains state-space and FIR transfer matrices with their norms.

Discrete-time systems only. Frequency responses are evaluated at z = e^{jω}.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from REGRET_DEFAULTS import MaxCertifiedHorizon, TailTolerance

logger = logging.getLogger(__name__)


class UnstableSystemError(ValueError):
    """Raised when a norm or closed loop of an unstable system is requested."""


class EvaluationError(ArithmeticError):
    """Raised when e^{jω} is an eigenvalue of the state matrix."""


def _as_matrix(value: np.ndarray | Sequence | float, shape: tuple | None = None) -> np.ndarray:
    matrix = np.asarray(value, dtype=float)
    if shape is not None and matrix.size == 0:
        return np.zeros(shape)
    return np.atleast_2d(matrix)


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Realization x+ = A x + B u, y = C x + D u."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self) -> None:
        """Converts to float arrays and checks conformity."""
        D = _as_matrix(self.D)  # noqa: N806
        n = np.asarray(self.A).shape[0] if np.asarray(self.A).size else 0
        A = _as_matrix(self.A, (n, n))  # noqa: N806
        B = _as_matrix(self.B, (n, D.shape[1]))  # noqa: N806
        C = _as_matrix(self.C, (D.shape[0], n))  # noqa: N806
        if A.shape != (n, n) or B.shape != (n, D.shape[1]) or C.shape != (D.shape[0], n):
            msg = f"non conformable realization A{A.shape} B{B.shape} C{C.shape} D{D.shape}"
            raise ValueError(msg)
        for name, value in zip("ABCD", (A, B, C, D), strict=True):
            object.__setattr__(self, name, value)

    @classmethod
    def static(cls, D: np.ndarray) -> "StateSpace":  # noqa: N803
        """Memoryless system."""
        D = _as_matrix(D)  # noqa: N806
        return cls(
            np.zeros((0, 0)), np.zeros((0, D.shape[1])), np.zeros((D.shape[0], 0)), D
        )

    @property
    def states(self) -> int:
        """Number of states."""
        return self.A.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        """(outputs, inputs)."""
        return self.D.shape

    @property
    def spectral_radius(self) -> float:
        """Largest eigenvalue modulus of A, 0 for static systems."""
        if self.states == 0:
            return 0.0
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))

    @property
    def is_stable(self) -> bool:
        """Schur stability, recomputed on every call."""
        return self.spectral_radius < 1

    def __matmul__(self, other: "StateSpace") -> "StateSpace":
        """Series connection self * other, other acts first."""
        if self.shape[1] != other.shape[0]:
            msg = f"cannot multiply {self.shape} by {other.shape}"
            raise ValueError(msg)
        A = np.block(  # noqa: N806
            [
                [self.A, self.B @ other.C],
                [np.zeros((other.states, self.states)), other.A],
            ]
        )
        B = np.vstack([self.B @ other.D, other.B])  # noqa: N806
        C = np.hstack([self.C, self.D @ other.C])  # noqa: N806
        return StateSpace(A, B, C, self.D @ other.D)

    def __add__(self, other: "StateSpace") -> "StateSpace":
        """Parallel connection."""
        if self.shape != other.shape:
            msg = f"cannot add {self.shape} and {other.shape}"
            raise ValueError(msg)
        return StateSpace(
            scipy.linalg.block_diag(self.A, other.A),
            np.vstack([self.B, other.B]),
            np.hstack([self.C, other.C]),
            self.D + other.D,
        )

    def __neg__(self) -> "StateSpace":
        """Sign flip of the output."""
        return StateSpace(self.A, self.B, -self.C, -self.D)

    def scaled(self, factor: float) -> "StateSpace":
        """Output scaled by a constant."""
        return StateSpace(self.A, self.B, factor * self.C, factor * self.D)

    def __sub__(self, other: "StateSpace") -> "StateSpace":
        """Parallel connection with the second system negated."""
        return self + (-other)

    def to_dict(self) -> dict:
        """Row-major lists for json export."""
        return {key: getattr(self, key).tolist() for key in "ABCD"}

    @classmethod
    def from_dict(cls, content: dict) -> "StateSpace":
        """Inverse of to_dict."""
        return cls(*(np.asarray(content[key], dtype=float) for key in "ABCD"))


def hstack_systems(systems: Sequence[StateSpace]) -> StateSpace:
    """[G1 G2 ...] sharing the output."""
    return StateSpace(
        scipy.linalg.block_diag(*(sys.A for sys in systems)),
        scipy.linalg.block_diag(*(sys.B for sys in systems)),
        np.hstack([sys.C for sys in systems]),
        np.hstack([sys.D for sys in systems]),
    )


def vstack_systems(systems: Sequence[StateSpace]) -> StateSpace:
    """[G1; G2; ...] sharing the input."""
    return StateSpace(
        scipy.linalg.block_diag(*(sys.A for sys in systems)),
        np.vstack([sys.B for sys in systems]),
        scipy.linalg.block_diag(*(sys.C for sys in systems)),
        np.vstack([sys.D for sys in systems]),
    )


@dataclass(frozen=True, eq=False)
class FirTransferMatrix:
    """Q(z) = sum_t Q_t z^{-t} with coefficients of shape (f+1, rows, cols)."""

    coeffs: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self) -> None:
        """Checks the coefficient tensor against its mask."""
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.ndim != 3 or coeffs.shape[0] < 1:  # noqa: PLR2004
            msg = f"FIR coefficients need shape (f+1, rows, cols), got {coeffs.shape}"
            raise ValueError(msg)
        object.__setattr__(self, "coeffs", coeffs)
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != coeffs.shape:
                msg = f"mask shape {mask.shape} differs from {coeffs.shape}"
                raise ValueError(msg)
            if np.any(coeffs[~mask] != 0):
                msg = "FIR coefficients are nonzero outside of the mask"
                raise ValueError(msg)
            object.__setattr__(self, "mask", mask)

    @classmethod
    def zeros(
        cls, order: int, rows: int, cols: int, mask: np.ndarray | None = None
    ) -> "FirTransferMatrix":
        """Zero FIR of order f."""
        return cls(np.zeros((order + 1, rows, cols)), mask)

    @classmethod
    def identity(cls, size: int) -> "FirTransferMatrix":
        """Static identity."""
        return cls(np.eye(size)[None, :, :])

    @classmethod
    def delay(cls, size: int, steps: int) -> "FirTransferMatrix":
        """z^{-steps} I."""
        coeffs = np.zeros((steps + 1, size, size))
        coeffs[steps] = np.eye(size)
        return cls(coeffs)

    @property
    def order(self) -> int:
        """Index f of the last coefficient."""
        return self.coeffs.shape[0] - 1

    @property
    def shape(self) -> tuple[int, int]:
        """(rows, cols)."""
        return self.coeffs.shape[1], self.coeffs.shape[2]

    def padded(self, order: int) -> np.ndarray:
        """Coefficients extended with zeros or truncated to order."""
        result = np.zeros((order + 1, *self.shape))
        keep = min(order, self.order) + 1
        result[:keep] = self.coeffs[:keep]
        return result

    def __add__(self, other: "FirTransferMatrix") -> "FirTransferMatrix":
        """Coefficient sum, the mask is dropped."""
        order = max(self.order, other.order)
        return FirTransferMatrix(self.padded(order) + other.padded(order))

    def __neg__(self) -> "FirTransferMatrix":
        """Sign flip, keeps the mask."""
        return FirTransferMatrix(-self.coeffs, self.mask)

    def __sub__(self, other: "FirTransferMatrix") -> "FirTransferMatrix":
        """Coefficient difference."""
        return self + (-other)

    def column(self, index: int) -> "FirTransferMatrix":
        """Single input column."""
        return FirTransferMatrix(self.coeffs[:, :, index : index + 1])

    def to_dict(self) -> dict:
        """Json representation {rows, cols, f, coeffs, mask}."""
        content = {
            "rows": self.shape[0],
            "cols": self.shape[1],
            "f": self.order,
            "coeffs": self.coeffs.tolist(),
        }
        if self.mask is not None:
            content["mask"] = self.mask.astype(int).tolist()
        return content

    @classmethod
    def from_dict(cls, content: dict) -> "FirTransferMatrix":
        """Inverse of to_dict."""
        coeffs = np.asarray(content["coeffs"], dtype=float).reshape(
            int(content["f"]) + 1, int(content["rows"]), int(content["cols"])
        )
        mask = content.get("mask")
        return cls(coeffs, None if mask is None else np.asarray(mask, dtype=bool))


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """Sorted, deduplicated frequencies within [-π, π]."""

    omegas: np.ndarray

    def __post_init__(self) -> None:
        """Sorts, deduplicates and checks the range."""
        omegas = np.unique(np.asarray(self.omegas, dtype=float).ravel())
        if omegas.size == 0:
            msg = "frequency grid is empty"
            raise ValueError(msg)
        if np.any(np.abs(omegas) > np.pi + 1e-12):
            msg = "frequencies must lie within [-pi, pi]"
            raise ValueError(msg)
        object.__setattr__(self, "omegas", np.clip(omegas, -np.pi, np.pi))

    @classmethod
    def uniform(cls, points: int, half: bool = True) -> "FrequencyGrid":
        """points equally spaced frequencies on [0, π] or on [-π, π]."""
        start = 0.0 if half else -np.pi
        return cls(np.linspace(start, np.pi, points))

    @classmethod
    def full(cls, points: int) -> "FrequencyGrid":
        """points equally spaced frequencies on [-π, π)."""
        return cls(np.linspace(-np.pi, np.pi, points, endpoint=False))

    def with_points(self, extra: Sequence[float]) -> "FrequencyGrid":
        """Grid refined by user supplied frequencies."""
        return FrequencyGrid(np.concatenate([self.omegas, np.asarray(extra, dtype=float)]))

    def __len__(self) -> int:
        """Number of frequencies."""
        return self.omegas.size

    def __iter__(self):  # noqa: ANN204
        """Iterates over the frequencies as floats."""
        return iter(float(omega) for omega in self.omegas)


def freq_response(sys: StateSpace | FirTransferMatrix, omega: float) -> np.ndarray:
    """Evaluates a system at z = e^{jω}.

    Params:
        sys: state-space or FIR system
        omega: frequency in radian per sample
    Returns:
        complex matrix of shape (outputs, inputs)
    """
    if isinstance(sys, FirTransferMatrix):
        phases = np.exp(-1j * omega * np.arange(sys.order + 1))
        return np.tensordot(phases, sys.coeffs, axes=1)
    if sys.states == 0:
        return sys.D.astype(complex)
    resolvent = np.exp(1j * omega) * np.eye(sys.states) - sys.A
    if np.linalg.cond(resolvent) > 1 / np.finfo(float).eps:
        msg = f"e^(j{omega}) is an eigenvalue of the state matrix"
        raise EvaluationError(msg)
    return sys.C @ np.linalg.solve(resolvent, sys.B) + sys.D


def freq_response_grid(
    sys: StateSpace | FirTransferMatrix, grid: FrequencyGrid | Sequence[float]
) -> np.ndarray:
    """Frequency responses stacked to shape (len(grid), outputs, inputs)."""
    omegas = grid.omegas if isinstance(grid, FrequencyGrid) else np.asarray(grid)
    if isinstance(sys, FirTransferMatrix):
        phases = np.exp(-1j * np.outer(omegas, np.arange(sys.order + 1)))
        return np.tensordot(phases, sys.coeffs, axes=1)
    return np.stack([freq_response(sys, float(omega)) for omega in omegas])


def impulse_response(sys: StateSpace, horizon: int) -> np.ndarray:
    """Markov parameters D, CB, CAB, ... up to index horizon.

    Returns:
        array of shape (horizon+1, outputs, inputs)
    """
    if horizon < 0:
        msg = f"horizon must be nonnegative, got {horizon}"
        raise ValueError(msg)
    result = np.zeros((horizon + 1, *sys.shape))
    result[0] = sys.D
    state_response = sys.B
    for t in range(1, horizon + 1):
        result[t] = sys.C @ state_response
        state_response = sys.A @ state_response
    return result


def fir_from_state_space(sys: StateSpace, horizon: int) -> FirTransferMatrix:
    """Truncated impulse response as FIR."""
    return FirTransferMatrix(impulse_response(sys, horizon))


def _decay_certificate(sys: StateSpace) -> tuple[float, float]:
    """Constants (c, r) with ||C A^s B|| <= c r^s for all s >= 0."""
    radius = sys.spectral_radius
    rate = radius + (1 - radius) / 4
    lyapunov = scipy.linalg.solve_discrete_lyapunov((sys.A / rate).T, np.eye(sys.states))
    eigenvalues = np.linalg.eigvalsh(0.5 * (lyapunov + lyapunov.T))
    transient = np.sqrt(eigenvalues[-1] / eigenvalues[0])
    scale = np.linalg.norm(sys.C, 2) * np.linalg.norm(sys.B, 2) * transient
    return float(scale), float(rate)


def certified_horizon(sys: StateSpace, tol: float = TailTolerance, kind: str = "l1") -> int:
    """Smallest horizon T whose impulse tail beyond T is certified below tol.

    kind "l1" bounds the absolute row sums of the tail, kind "h2" its energy.

    Params:
        sys: stable system
        tol: admissible tail size
        kind: "l1" or "h2"
    Returns:
        horizon T, 0 if the strictly proper part vanishes
    """
    if kind not in ("l1", "h2"):
        msg = f"unknown tail kind {kind}"
        raise ValueError(msg)
    if sys.states == 0 or not np.any(sys.B) or not np.any(sys.C):
        return 0
    if not sys.is_stable:
        msg = f"spectral radius {sys.spectral_radius:.6f} is not below 1"
        raise UnstableSystemError(msg)
    scale, rate = _decay_certificate(sys)
    if kind == "l1":
        scale = scale * np.sqrt(sys.shape[1]) / (1 - rate)
        decay = rate
    else:
        scale = scale**2 * min(sys.shape) / (1 - rate**2)
        decay = rate**2
    if scale <= tol:
        return 0
    horizon = int(np.ceil(np.log(tol / scale) / np.log(decay)))
    if horizon > MaxCertifiedHorizon:
        logger.warning(
            "Certified horizon %s capped at %s (radius %.4f)",
            horizon,
            MaxCertifiedHorizon,
            sys.spectral_radius,
        )
        return MaxCertifiedHorizon
    return max(horizon, 0)


def _require_stable(sys: StateSpace | FirTransferMatrix) -> None:
    if isinstance(sys, StateSpace) and not sys.is_stable:
        msg = f"spectral radius {sys.spectral_radius:.6f} is not below 1"
        raise UnstableSystemError(msg)


def h2_norm_sq(sys: StateSpace | FirTransferMatrix, tol: float = TailTolerance) -> float:
    """Squared H2 norm.

    FIR systems are summed exactly, state-space systems up to a certified tail
    below tol relative to the leading Markov parameters.
    """
    _require_stable(sys)
    if isinstance(sys, FirTransferMatrix):
        return float(np.sum(sys.coeffs**2))
    head = np.sum(sys.D**2) + np.sum((sys.C @ sys.B) ** 2)
    horizon = certified_horizon(sys, tol * max(1.0, float(head)), kind="h2")
    return float(np.sum(impulse_response(sys, horizon) ** 2))


def hinf_norm_sq(sys: StateSpace | FirTransferMatrix, grid: FrequencyGrid) -> float:
    """Squared H∞ norm on a grid, a lower bound of the true supremum."""
    _require_stable(sys)
    responses = freq_response_grid(sys, grid)
    return float(np.max(np.linalg.norm(responses, ord=2, axis=(1, 2)) ** 2))


def l1_norm(
    sys: StateSpace | FirTransferMatrix,
    horizon: int | None = None,
    tol: float = TailTolerance,
) -> float:
    """Largest absolute row sum of the impulse response.

    Params:
        sys: stable system
        horizon: truncation, chosen by the tail certificate if None
        tol: tail size used for the automatic horizon
    Returns:
        L1 norm, the induced ℓ∞ gain
    """
    _require_stable(sys)
    if isinstance(sys, FirTransferMatrix):
        coeffs = sys.coeffs
    else:
        if horizon is None:
            horizon = certified_horizon(sys, tol, kind="l1")
        coeffs = impulse_response(sys, horizon)
    return float(np.max(np.sum(np.abs(coeffs), axis=(0, 2))))


def _convolve_pair(first: np.ndarray, second: np.ndarray, order: int) -> np.ndarray:
    result = np.zeros((order + 1, first.shape[1], second.shape[2]))
    for lag in range(min(order, first.shape[0] - 1) + 1):
        count = min(order - lag, second.shape[0] - 1) + 1
        result[lag : lag + count] += np.einsum(
            "ik,tkj->tij", first[lag], second[:count]
        )
    return result


def fir_convolve(
    xs: Sequence[FirTransferMatrix | StateSpace], f_out: int
) -> FirTransferMatrix:
    """Product x1 x2 ... truncated after coefficient f_out.

    State-space factors are replaced by their impulse response up to f_out,
    which keeps the first f_out+1 coefficients exact.
    """
    if not xs:
        msg = "nothing to convolve"
        raise ValueError(msg)
    tensors = [
        x.coeffs if isinstance(x, FirTransferMatrix) else impulse_response(x, f_out)
        for x in xs
    ]
    result = tensors[0][: f_out + 1]
    for tensor in tensors[1:]:
        if result.shape[2] != tensor.shape[1]:
            msg = f"cannot convolve {result.shape[1:]} with {tensor.shape[1:]}"
            raise ValueError(msg)
        result = _convolve_pair(result, tensor, f_out)
    return FirTransferMatrix(result)
