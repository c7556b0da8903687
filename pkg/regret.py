"""This module evaluates spatial regret between a learner and an oracle Youla parameter.

Both parameters act on the same transformed plant. SpReg₂ is evaluated on a frequency
grid, SpReg∞ only through its L1 upper bound and through empirical lower estimates.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from NetworkedPlantStabilizationPart import TransformedPlant
from REGRET_DEFAULTS import EigengapTolerance, HermitianTolerance, SynthesisTailTolerance
from sstf import FirTransferMatrix, FrequencyGrid, l1_norm

logger = logging.getLogger(__name__)

NormalizationTolerance = 1e-9


@dataclass(frozen=True, eq=False)
class PsiSample:
    """Ψ(e^{jω}) = F*F - F̂*F̂ with its eigendecomposition, eigenvalues ascending."""

    omega: float
    psi: np.ndarray
    lambda_max: float
    eigvals: np.ndarray
    eigvecs: np.ndarray


@dataclass
class RegretReport:
    """Regret value with its origin, method is grid-sup, lp-bound or empirical."""

    value: float
    achieving_omega: float | None
    achieving_disturbance: np.ndarray | None
    method: str
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        """Json representation, the disturbance is referenced by its shape only."""
        disturbance = self.achieving_disturbance
        return {
            "value": self.value,
            "achieving_omega": self.achieving_omega,
            "achieving_disturbance_shape": None if disturbance is None else list(disturbance.shape),
            "method": self.method,
            "metadata": self.metadata,
        }


@dataclass(frozen=True, eq=False)
class WorstCaseDisturbance:
    """Unit energy windowed cosine aligned with the top eigenvector of Ψ(e^{jω0})."""

    signal: np.ndarray
    omega: float
    lambda_max: float
    eigengap: float
    nyquist_fallback: bool = False
    degenerate: bool = False

    @property
    def metadata(self) -> dict:
        """Flags for reports."""
        return {
            "omega": self.omega,
            "lambda_max": self.lambda_max,
            "eigengap": self.eigengap,
            "nyquist_fallback": self.nyquist_fallback,
            "degenerate": self.degenerate,
        }


def _as_blocks(plant: object) -> TransformedPlant:
    if isinstance(plant, TransformedPlant):
        return plant
    return plant.youla_blocks()


def psi_at(f: np.ndarray, f_hat: np.ndarray) -> PsiSample:
    """Hermitian difference of the closed loop Gramians at one frequency.

    Params:
        f: learner closed loop response F(e^{jω}), n_z x n_w
        f_hat: oracle closed loop response of the same shape
    Returns:
        PsiSample with omega set to nan
    """
    f = np.atleast_2d(np.asarray(f, dtype=complex))
    f_hat = np.atleast_2d(np.asarray(f_hat, dtype=complex))
    if f.shape != f_hat.shape:
        msg = f"closed loop shapes differ: {f.shape} vs {f_hat.shape}"
        raise ValueError(msg)
    psi = f.conj().T @ f - f_hat.conj().T @ f_hat
    psi = 0.5 * (psi + psi.conj().T)
    eigvals, eigvecs = np.linalg.eigh(psi)
    return PsiSample(float("nan"), psi, float(eigvals[-1]), eigvals, eigvecs)


def psi_grid(
    q: FirTransferMatrix,
    q_hat: FirTransferMatrix,
    plant: object,
    grid: FrequencyGrid,
) -> list[PsiSample]:
    """Ψ samples of a learner/oracle pair on every grid frequency."""
    blocks = _as_blocks(plant)
    learner = blocks.closed_loop_grid(q, grid)
    oracle = blocks.closed_loop_grid(q_hat, grid)
    samples = []
    for omega, f, f_hat in zip(grid, learner, oracle, strict=True):
        sample = psi_at(f, f_hat)
        samples.append(
            PsiSample(omega, sample.psi, sample.lambda_max, sample.eigvals, sample.eigvecs)
        )
    return samples


def spreg2(
    q: FirTransferMatrix,
    q_hat: FirTransferMatrix,
    plant: object,
    grid: FrequencyGrid,
) -> RegretReport:
    """SpReg₂ as the grid maximum of λ_max(Ψ).

    Params:
        q: learner Youla parameter
        q_hat: oracle Youla parameter
        plant: TransformedPlant or stable NetworkedPlant
        grid: frequencies to sample
    Returns:
        RegretReport with method grid-sup and the maximizing frequency
    """
    samples = psi_grid(q, q_hat, plant, grid)
    best = max(samples, key=lambda sample: sample.lambda_max)
    logger.debug("SpReg2 %s attained at omega %s", best.lambda_max, best.omega)
    return RegretReport(
        value=best.lambda_max,
        achieving_omega=best.omega,
        achieving_disturbance=None,
        method="grid-sup",
        metadata={"grid_points": len(grid)},
    )


def worst_case_disturbance(
    samples: Sequence[PsiSample], omega0: float, window: int
) -> WorstCaseDisturbance:
    """Disturbance approaching λ_max(Ψ(e^{jω0})) for long windows.

    Channel i carries α_i cos(ω0 t + θ_i) for t < window where α_i e^{jθ_i} is the
    top eigenvector, scaled to unit energy. At ω0 = ±π the real part of the
    eigenvector times (-1)^t is used.

    Params:
        samples: Ψ samples, one of them at ω0
        omega0: target frequency
        window: number of nonzero time steps
    Returns:
        WorstCaseDisturbance of shape (window, n_w)
    """
    if window < 1:
        msg = f"window must be positive, got {window}"
        raise ValueError(msg)
    matches = [sample for sample in samples if np.isclose(sample.omega, omega0, atol=1e-12)]
    if not matches:
        msg = f"frequency {omega0} is not part of the Ψ samples"
        raise ValueError(msg)
    sample = matches[0]
    vector = sample.eigvecs[:, -1]
    vector = vector * np.exp(-1j * np.angle(vector[np.argmax(np.abs(vector))]))
    eigengap = (
        float(sample.eigvals[-1] - sample.eigvals[-2]) if sample.eigvals.size > 1 else float("inf")
    )
    degenerate = eigengap < EigengapTolerance * max(1.0, abs(sample.lambda_max))
    if degenerate:
        logger.warning("Top eigenspace of Ψ at omega %s is degenerate (gap %s)", omega0, eigengap)

    times = np.arange(window)[:, None]
    nyquist = bool(np.isclose(abs(omega0), np.pi, atol=HermitianTolerance))
    if nyquist:
        logger.warning("Using alternating sign disturbance at omega %s", omega0)
        signal = np.cos(np.pi * times) * vector.real[None, :]
    else:
        signal = np.abs(vector)[None, :] * np.cos(omega0 * times + np.angle(vector)[None, :])
    energy = np.linalg.norm(signal)
    if energy == 0:
        msg = "disturbance vanishes on the window, increase the window"
        raise ValueError(msg)
    return WorstCaseDisturbance(
        signal=signal / energy,
        omega=float(omega0),
        lambda_max=sample.lambda_max,
        eigengap=eigengap,
        nyquist_fallback=nyquist,
        degenerate=bool(degenerate),
    )


def l1_worst_case_disturbance(fir: FirTransferMatrix) -> np.ndarray:
    """Sign sequence with unit ℓ∞ norm whose response attains the L1 norm of fir.

    The output row with the largest absolute sum reaches that sum at time f.
    """
    coeffs = fir.coeffs
    row = int(np.argmax(np.sum(np.abs(coeffs), axis=(0, 2))))
    signal = np.sign(coeffs[::-1, row, :])
    if not np.any(signal):
        signal[0, 0] = 1.0
    return signal


def _response(fir: FirTransferMatrix, w: np.ndarray) -> np.ndarray:
    """Full output z = F * w of shape (T + f, n_z)."""
    output = np.zeros((w.shape[0] + fir.order, fir.shape[0]))
    for column in range(fir.shape[1]):
        output += scipy.signal.fftconvolve(
            fir.coeffs[:, :, column], w[:, column : column + 1], axes=0
        )
    return output


def _signal_norm(w: np.ndarray, q_norm: float) -> float:
    if q_norm == 2:  # noqa: PLR2004
        return float(np.linalg.norm(w))
    return float(np.max(np.abs(w)))


def _cost(z: np.ndarray, q_norm: float) -> float:
    if q_norm == 2:  # noqa: PLR2004
        return float(np.sum(z**2))
    return float(np.max(np.abs(z)))


def _closed_loops(
    q: FirTransferMatrix,
    q_hat: FirTransferMatrix,
    blocks: TransformedPlant,
    length: int,
) -> tuple[FirTransferMatrix, FirTransferMatrix]:
    horizon = blocks.closed_loop_horizon(max(q.order, q_hat.order)) + length
    return blocks.closed_loop_fir(q, horizon), blocks.closed_loop_fir(q_hat, horizon)


def empirical_regret(
    q: FirTransferMatrix,
    q_hat: FirTransferMatrix,
    plant: object,
    q_norm: float,
    disturbances: Sequence[np.ndarray],
) -> RegretReport:
    """Largest cost gap J_q(w, Q) - J_q(w, Q̂) over a finite set of disturbances.

    J_2 is the output energy, J_∞ the peak output magnitude.

    Params:
        q: learner Youla parameter
        q_hat: oracle Youla parameter
        plant: TransformedPlant or stable NetworkedPlant
        q_norm: 2 or np.inf
        disturbances: signals of shape (T, n_w) with unit q-norm
    Returns:
        RegretReport with method empirical, value -inf for an empty set
    """
    if q_norm not in (2, np.inf):
        msg = f"q must be 2 or inf, got {q_norm}"
        raise ValueError(msg)
    if not disturbances:
        return RegretReport(float("-inf"), None, None, "empirical", {"q": str(q_norm), "count": 0})
    blocks = _as_blocks(plant)
    length = max(np.asarray(w).shape[0] for w in disturbances)
    learner, oracle = _closed_loops(q, q_hat, blocks, length)

    best_value, best_disturbance = float("-inf"), None
    for w in disturbances:
        w = np.asarray(w, dtype=float).reshape(np.asarray(w).shape[0], -1)
        size = _signal_norm(w, q_norm)
        if abs(size - 1) > NormalizationTolerance:
            msg = f"disturbance has {q_norm}-norm {size}, expected 1"
            raise ValueError(msg)
        gap = _cost(_response(learner, w), q_norm) - _cost(_response(oracle, w), q_norm)
        if gap > best_value:
            best_value, best_disturbance = gap, w
    return RegretReport(
        value=best_value,
        achieving_omega=None,
        achieving_disturbance=best_disturbance,
        method="empirical",
        metadata={"q": str(q_norm), "count": len(disturbances)},
    )


def attainment_ratio(
    q: FirTransferMatrix,
    q_hat: FirTransferMatrix,
    plant: object,
    disturbance: WorstCaseDisturbance,
) -> float:
    """Energy gap caused by the disturbance relative to its λ_max."""
    report = empirical_regret(q, q_hat, plant, 2, [disturbance.signal])
    if disturbance.lambda_max == 0:
        return float("nan")
    return report.value / disturbance.lambda_max


def spreg_inf_upper_bound(
    q: FirTransferMatrix,
    q_hat: FirTransferMatrix,
    plant: object,
    horizon: int | None = None,
) -> RegretReport:
    """L1 norm of the closed loop difference, an upper bound of SpReg∞.

    Params:
        q: learner Youla parameter
        q_hat: oracle Youla parameter
        plant: TransformedPlant or stable NetworkedPlant
        horizon: impulse truncation, certified from the plant tails if None
    Returns:
        RegretReport with method lp-bound
    """
    blocks = _as_blocks(plant)
    if horizon is None:
        horizon = blocks.closed_loop_horizon(max(q.order, q_hat.order), SynthesisTailTolerance)
    difference = blocks.closed_loop_fir(q, horizon) - blocks.closed_loop_fir(q_hat, horizon)
    value = l1_norm(difference)
    return RegretReport(
        value=value,
        achieving_omega=None,
        achieving_disturbance=l1_worst_case_disturbance(difference),
        method="lp-bound",
        metadata={"horizon": horizon},
    )
