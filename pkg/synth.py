"""This module synthesizes FIR Youla parameters on a transformed plant.

Oracle problems minimize H2, H∞ or L1 of the closed loop P̃11 + P̃12 Q P̃21 over the
delay mask of the oracle graph. Regret problems minimize SpReg₂ (a semidefinite
program over a frequency grid) or the L1 bound of SpReg∞ (a linear program) over
the delay mask of the learner graph.
"""

import hashlib
import logging
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np
import scipy.signal
import scipy.sparse

from conic import ConeMembership, ConicProblem, embed_blocks, solve_or_raise
from netgraph import DirectedGraph, fir_sparsity_mask, is_supergraph, shortest_path_lengths
from NetworkedPlantStabilizationPart import TransformedPlant
from REGRET_DEFAULTS import (
    DefaultFirOrder,
    DefaultGridPoints,
    DefaultMaxSolverIterations,
    LpTolerance,
    SdpTolerance,
    StrictPositivityFloor,
    SynthesisCriteria,
    SynthesisTailTolerance,
)
from regret import spreg2, spreg_inf_upper_bound
from sstf import (
    FirTransferMatrix,
    FrequencyGrid,
    freq_response,
    h2_norm_sq,
    impulse_response,
    l1_norm,
)

logger = logging.getLogger(__name__)


@dataclass
class SynthesisConfig:
    """FIR order, frequency grid, criterion and solver settings of one synthesis."""

    fir_order: int = DefaultFirOrder
    grid: FrequencyGrid = field(default_factory=lambda: FrequencyGrid.uniform(DefaultGridPoints))
    criterion: str = "H2"
    lp_tol: float = LpTolerance
    sdp_tol: float = SdpTolerance
    tail_tol: float = SynthesisTailTolerance
    max_iter: int = DefaultMaxSolverIterations
    solver: str | None = None

    def __post_init__(self) -> None:
        """Checks order and criterion."""
        if self.fir_order < 0:
            msg = f"fir_order must be nonnegative, got {self.fir_order}"
            raise ValueError(msg)
        if self.criterion not in SynthesisCriteria:
            msg = f"criterion must be one of {SynthesisCriteria}, got {self.criterion}"
            raise ValueError(msg)

    def provenance(self) -> dict:
        """Settings stored next to every result."""
        return {
            "fir_order": self.fir_order,
            "grid_points": len(self.grid),
            "criterion": self.criterion,
            "lp_tol": self.lp_tol,
            "sdp_tol": self.sdp_tol,
            "tail_tol": self.tail_tol,
            "solver": self.solver,
        }


@dataclass
class SynthesisResult:
    """Synthesized Youla parameter with objective, closed loop metrics and diagnostics."""

    q: FirTransferMatrix
    objective: float
    metrics: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        """Json representation."""
        return {
            "q": self.q.to_dict(),
            "objective": self.objective,
            "metrics": self.metrics,
            "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True, eq=False)
class YoulaBasis:
    """Affine map from free Youla coefficients to the closed loop impulse response.

    F = offset + matrix @ q with F flattened in (row, column, t) order.
    """

    offset: np.ndarray
    matrix: np.ndarray
    free: np.ndarray
    mask: np.ndarray

    @property
    def shape(self) -> tuple[int, int, int]:
        """(n_z, n_w, H+1)."""
        return self.offset.shape

    @property
    def horizon(self) -> int:
        """Last impulse index H."""
        return self.offset.shape[2] - 1

    @property
    def flat_offset(self) -> np.ndarray:
        """Offset as vector."""
        return self.offset.ravel()

    @property
    def flat_matrix(self) -> np.ndarray:
        """Map as (n_z n_w (H+1)) x (free) matrix."""
        return self.matrix.reshape(-1, self.free.shape[0])

    def coefficients(self, vector: np.ndarray) -> FirTransferMatrix:
        """Youla parameter of a coefficient vector, zero outside of the mask."""
        return coefficients_from_vector(self.mask, vector)

    def vectorize(self, q: FirTransferMatrix) -> np.ndarray:
        """Free coefficients of q in basis order."""
        rows, cols, times = self.free.T
        return q.padded(self.mask.shape[0] - 1)[times, rows, cols]

    def response(self, vector: np.ndarray) -> np.ndarray:
        """Closed loop impulse response of shape (n_z, n_w, H+1)."""
        return self.offset + self.matrix @ vector


def free_coefficients(mask: np.ndarray) -> np.ndarray:
    """Indices (row, column, t) of all free coefficients in lexicographic order."""
    return np.argwhere(np.asarray(mask, dtype=bool).transpose(1, 2, 0))


def coefficients_from_vector(mask: np.ndarray, vector: np.ndarray) -> FirTransferMatrix:
    """Youla parameter with the given free coefficients, exactly zero outside of the mask."""
    coeffs = np.zeros(mask.shape)
    rows, cols, times = free_coefficients(mask).T
    coeffs[times, rows, cols] = vector
    return FirTransferMatrix(coeffs, mask)


def youla_mask(
    blocks: TransformedPlant, graph: DirectedGraph, fir_order: int
) -> np.ndarray:
    """Delay mask of a Youla parameter on the given graph."""
    parts = blocks.realization.partitions
    lengths = shortest_path_lengths(graph)
    if fir_order < lengths.max_finite():
        logger.warning(
            "FIR order %s is below the longest finite path %s, some blocks stay zero",
            fir_order,
            lengths.max_finite(),
        )
    return fir_sparsity_mask(graph, fir_order, parts.input, parts.output)


def youla_basis(
    blocks: TransformedPlant, mask: np.ndarray, horizon: int | None = None
) -> YoulaBasis:
    """Impulse domain linear map from the free coefficients to F(t).

    Params:
        blocks: transformed plant
        mask: Youla mask of shape (f+1, m, p)
        horizon: impulse horizon H, certified from the plant tails if None
    Returns:
        YoulaBasis of the closed loop
    """
    order = mask.shape[0] - 1
    if horizon is None:
        horizon = blocks.closed_loop_horizon(order)
    if horizon < order:
        msg = f"horizon {horizon} is shorter than the FIR order {order}"
        raise ValueError(msg)
    h12 = impulse_response(blocks.p12, horizon)
    h21 = impulse_response(blocks.p21, horizon)
    kernel = scipy.signal.fftconvolve(
        h12[:, :, :, None, None], h21[:, None, None, :, :], axes=0
    )[: horizon + 1]
    free = free_coefficients(mask)
    n_z, n_w = h12.shape[1], h21.shape[2]
    matrix = np.zeros((n_z, n_w, horizon + 1, free.shape[0]))
    for index, (row, col, delay) in enumerate(free):
        matrix[:, :, delay:, index] = kernel[: horizon + 1 - delay, :, row, col, :].transpose(
            1, 2, 0
        )
    offset = impulse_response(blocks.p11, horizon).transpose(1, 2, 0)
    logger.debug("Youla basis with %s free coefficients on horizon %s", free.shape[0], horizon)
    return YoulaBasis(offset=offset, matrix=matrix, free=free, mask=np.asarray(mask, dtype=bool))


def frequency_basis(blocks: TransformedPlant, free: np.ndarray, omega: float) -> np.ndarray:
    """Closed loop response of every free coefficient at ω, shape (n_z, n_w, free)."""
    p12 = freq_response(blocks.p12, omega)
    p21 = freq_response(blocks.p21, omega)
    rows, cols, times = free.T
    return (
        np.exp(-1j * omega * times)[None, None, :]
        * p12[:, rows][:, None, :]
        * p21[cols, :].T[None, :, :]
    )


def _embedded_lmi(
    level: cp.Variable, real: cp.Variable, imag: cp.Variable, gram: np.ndarray | None
) -> cp.Expression:
    """Real form of [[level I, F], [F*, I]] or, with gram, [[I, F], [F*, level I + gram]]."""
    n_z, n_w = real.shape
    if gram is None:
        top = level * np.eye(n_z)
        bottom_real = np.eye(n_w)
        bottom_imag = np.zeros((n_w, n_w))
    else:
        top = np.eye(n_z)
        bottom_real = level * np.eye(n_w) + gram.real
        bottom_imag = gram.imag
    real_part = cp.bmat([[top, real], [real.T, bottom_real]])
    imag_part = cp.bmat([[np.zeros((n_z, n_z)), imag], [-imag.T, bottom_imag]])
    return embed_blocks(real_part, imag_part)


def _frequency_lmi_problem(
    blocks: TransformedPlant,
    mask: np.ndarray,
    grid: FrequencyGrid,
    q_hat: FirTransferMatrix | None,
) -> ConicProblem:
    free = free_coefficients(mask)
    n_z, n_w = blocks.p11.shape
    level = cp.Variable(name="lambda")
    q = cp.Variable(free.shape[0], name="q")
    equalities, cones, lifted = [], [], {}
    for index, omega in enumerate(grid):
        columns = frequency_basis(blocks, free, omega).transpose(1, 0, 2).reshape(n_z * n_w, -1)
        offset = freq_response(blocks.p11, omega).flatten(order="F")
        real = cp.Variable((n_z, n_w), name=f"re_{index}")
        imag = cp.Variable((n_z, n_w), name=f"im_{index}")
        equalities += [
            cp.vec(real, order="F") == offset.real + columns.real @ q,
            cp.vec(imag, order="F") == offset.imag + columns.imag @ q,
        ]
        lifted[f"re_{index}"] = real
        lifted[f"im_{index}"] = imag
        gram = None
        if q_hat is not None:
            oracle = blocks.closed_loop_response(q_hat, omega)
            gram = oracle.conj().T @ oracle
        cones.append(
            ConeMembership("psd", _embedded_lmi(level, real, imag, gram), 2 * (n_z + n_w))
        )
    if q_hat is not None:
        cones.append(ConeMembership("nonneg", level - StrictPositivityFloor, 1))
    return ConicProblem(
        objective=level,
        variables={"lambda": level, "q": q},
        equalities=equalities,
        cones=cones,
        lifted=lifted,
    )


def assemble_hinf_sdp(
    blocks: TransformedPlant, mask: np.ndarray, grid: FrequencyGrid
) -> ConicProblem:
    """min γ s.t. [[γI, F(e^{jω})], [F*, I]] ⪰ 0 on every grid frequency."""
    return _frequency_lmi_problem(blocks, mask, grid, None)


def assemble_spreg2_sdp(
    blocks: TransformedPlant,
    q_hat: FirTransferMatrix,
    mask: np.ndarray,
    grid: FrequencyGrid,
) -> ConicProblem:
    """min λ s.t. [[I, F], [F*, λI + F̂*F̂]] ⪰ 0 on every grid frequency and λ ≥ 1e-12.

    Variables are λ followed by the free Youla coefficients in (row, column, t)
    order, the real and imaginary parts of F per frequency are lifted.
    """
    return _frequency_lmi_problem(blocks, mask, grid, q_hat)


def assemble_spreg_inf_lp(
    blocks: TransformedPlant,
    q_hat: FirTransferMatrix | None,
    mask: np.ndarray,
    horizon: int | None = None,
) -> tuple[ConicProblem, YoulaBasis]:
    """LP over (λ, q, ν) bounding the L1 norm of F - F̂ row by row.

    -ν ≤ F - F̂ ≤ ν entrywise and Σ_j Σ_t ν_ijt ≤ λ for every output i. Without
    oracle F̂ = 0 and the LP is the L1 synthesis of the closed loop.

    Returns:
        problem and the Youla basis to map its solution back
    """
    order = mask.shape[0] - 1
    if horizon is None:
        oracle_order = 0 if q_hat is None else q_hat.order
        horizon = blocks.closed_loop_horizon(max(order, oracle_order))
    basis = youla_basis(blocks, mask, horizon)
    target = basis.flat_offset
    if q_hat is not None:
        target = target - blocks.closed_loop_fir(q_hat, horizon).coeffs.transpose(1, 2, 0).ravel()
    n_z, n_w, length = basis.shape
    level = cp.Variable(name="lambda")
    q = cp.Variable(basis.free.shape[0], name="q")
    slack = cp.Variable(n_z * n_w * length, name="nu")
    mismatch = target + basis.flat_matrix @ q
    row_sums = scipy.sparse.kron(scipy.sparse.eye(n_z), np.ones((1, n_w * length)), format="csr")
    problem = ConicProblem(
        objective=level,
        variables={"lambda": level, "q": q, "nu": slack},
        cones=[
            ConeMembership("nonneg", slack - mismatch, slack.size),
            ConeMembership("nonneg", slack + mismatch, slack.size),
            ConeMembership("nonneg", level - row_sums @ slack, n_z),
        ],
    )
    return problem, basis


def closed_loop_metrics(
    blocks: TransformedPlant,
    q: FirTransferMatrix,
    q_hat: FirTransferMatrix | None,
    grid: FrequencyGrid,
    tol: float = SynthesisTailTolerance,
) -> dict:
    """H2², H∞², L1 of F(Q) and, given an oracle, SpReg₂ and the L1 mismatch."""
    horizon = blocks.closed_loop_horizon(q.order, tol)
    closed_loop = blocks.closed_loop_fir(q, horizon)
    responses = blocks.closed_loop_grid(q, grid)
    metrics = {
        "h2_sq": h2_norm_sq(closed_loop),
        "hinf_sq": float(np.max(np.linalg.norm(responses, ord=2, axis=(1, 2)) ** 2)),
        "l1": l1_norm(closed_loop),
    }
    if q_hat is not None:
        metrics["spreg2"] = spreg2(q, q_hat, blocks, grid).value
        metrics["l1_mismatch"] = spreg_inf_upper_bound(q, q_hat, blocks).value
    return metrics


def _oracle_hash(q_hat: FirTransferMatrix) -> str:
    return hashlib.sha256(np.ascontiguousarray(q_hat.coeffs).tobytes()).hexdigest()


def _check_oracle_graph(graph: DirectedGraph, oracle_graph: DirectedGraph | None) -> None:
    if oracle_graph is None:
        return
    if oracle_graph.edges == graph.edges:
        logger.warning("Oracle graph equals the learner graph, the regret optimum is zero")
    elif not is_supergraph(oracle_graph, graph):
        msg = "oracle graph must contain every edge of the learner graph"
        raise ValueError(msg)


def _solve_h2(basis: YoulaBasis, cfg: SynthesisConfig) -> tuple[np.ndarray, dict]:
    matrix, offset = basis.flat_matrix, basis.flat_offset
    rank = np.linalg.matrix_rank(matrix) if matrix.size else 0
    if rank == matrix.shape[1]:
        vector = np.linalg.lstsq(matrix, -offset, rcond=None)[0]
        return vector, {"method": "lstsq", "rank": int(rank)}
    logger.info("H2 normal equations are rank deficient (%s), using the conic solver", rank)
    q = cp.Variable(matrix.shape[1], name="q")
    problem = ConicProblem(objective=cp.sum_squares(offset + matrix @ q), variables={"q": q})
    solution = solve_or_raise(problem, tol=cfg.lp_tol, max_iter=cfg.max_iter, solver=cfg.solver)
    return solution.values["q"], {"method": "conic", "rank": int(rank), **solution.diagnostics}


def synth_oracle(
    blocks: TransformedPlant,
    g_hat: DirectedGraph,
    criterion: str | None = None,
    cfg: SynthesisConfig | None = None,
    graph: DirectedGraph | None = None,
) -> SynthesisResult:
    """Youla parameter on mask(ĝ, f) minimizing the chosen closed loop norm.

    Params:
        blocks: transformed plant
        g_hat: oracle graph, equal to the learner graph for baseline controllers
        criterion: H2, Hinf or L1, defaults to cfg.criterion
        cfg: synthesis settings
        graph: learner graph, checked to be contained in g_hat if given
    Returns:
        SynthesisResult whose objective is H2², H∞² or L1 of the closed loop
    """
    cfg = cfg or SynthesisConfig()
    criterion = criterion or cfg.criterion
    if criterion not in SynthesisCriteria:
        msg = f"criterion must be one of {SynthesisCriteria}, got {criterion}"
        raise ValueError(msg)
    if graph is not None and graph.edges != g_hat.edges:
        _check_oracle_graph(graph, g_hat)
    mask = youla_mask(blocks, g_hat, cfg.fir_order)

    if criterion == "H2":
        basis = youla_basis(blocks, mask)
        vector, diagnostics = _solve_h2(basis, cfg)
        objective = float(np.sum(basis.response(vector) ** 2))
        q = basis.coefficients(vector)
    elif criterion == "Hinf":
        problem = assemble_hinf_sdp(blocks, mask, cfg.grid)
        solution = solve_or_raise(problem, tol=cfg.sdp_tol, max_iter=cfg.max_iter, solver=cfg.solver)
        q = coefficients_from_vector(mask, solution.values["q"])
        objective, diagnostics = solution.objective, solution.diagnostics
    else:
        problem, basis = assemble_spreg_inf_lp(blocks, None, mask)
        solution = solve_or_raise(problem, tol=cfg.lp_tol, max_iter=cfg.max_iter, solver=cfg.solver)
        q = basis.coefficients(solution.values["q"])
        objective, diagnostics = solution.objective, solution.diagnostics
    logger.info("%s oracle synthesized with objective %s", criterion, objective)
    return SynthesisResult(
        q=q,
        objective=float(objective),
        metrics=closed_loop_metrics(blocks, q, None, cfg.grid, cfg.tail_tol),
        diagnostics={**diagnostics, **cfg.provenance(), "criterion": criterion},
    )


def synth_spreg2(
    blocks: TransformedPlant,
    q_hat: FirTransferMatrix,
    graph: DirectedGraph | None = None,
    cfg: SynthesisConfig | None = None,
    oracle_graph: DirectedGraph | None = None,
) -> SynthesisResult:
    """Youla parameter on mask(g, f) minimizing the grid SpReg₂ against Q̂.

    Params:
        blocks: transformed plant
        q_hat: oracle Youla parameter
        graph: learner graph, defaults to the graph of the plant
        cfg: synthesis settings
        oracle_graph: graph of the oracle, must contain graph
    Returns:
        SynthesisResult with λ* as objective
    """
    cfg = cfg or SynthesisConfig()
    graph = graph or blocks.realization.graph
    _check_oracle_graph(graph, oracle_graph)
    mask = youla_mask(blocks, graph, cfg.fir_order)
    problem = assemble_spreg2_sdp(blocks, q_hat, mask, cfg.grid)
    solution = solve_or_raise(problem, tol=cfg.sdp_tol, max_iter=cfg.max_iter, solver=cfg.solver)
    q = coefficients_from_vector(mask, solution.values["q"])
    metrics = closed_loop_metrics(blocks, q, q_hat, cfg.grid, cfg.tail_tol)
    logger.info(
        "SpReg2 synthesis reached %s, grid evaluation %s", solution.objective, metrics["spreg2"]
    )
    return SynthesisResult(
        q=q,
        objective=float(solution.objective),
        metrics=metrics,
        diagnostics={**solution.diagnostics, **cfg.provenance(), "oracle_hash": _oracle_hash(q_hat)},
    )


def synth_spreg_inf(
    blocks: TransformedPlant,
    q_hat: FirTransferMatrix,
    graph: DirectedGraph | None = None,
    cfg: SynthesisConfig | None = None,
    oracle_graph: DirectedGraph | None = None,
) -> SynthesisResult:
    """Youla parameter on mask(g, f) minimizing the L1 bound of SpReg∞ against Q̂.

    Params:
        blocks: transformed plant
        q_hat: oracle Youla parameter
        graph: learner graph, defaults to the graph of the plant
        cfg: synthesis settings
        oracle_graph: graph of the oracle, must contain graph
    Returns:
        SynthesisResult with the L1 mismatch λ* as objective
    """
    cfg = cfg or SynthesisConfig()
    graph = graph or blocks.realization.graph
    _check_oracle_graph(graph, oracle_graph)
    mask = youla_mask(blocks, graph, cfg.fir_order)
    problem, basis = assemble_spreg_inf_lp(blocks, q_hat, mask)
    solution = solve_or_raise(problem, tol=cfg.lp_tol, max_iter=cfg.max_iter, solver=cfg.solver)
    q = basis.coefficients(solution.values["q"])
    logger.info("SpReg-inf synthesis reached L1 mismatch %s", solution.objective)
    return SynthesisResult(
        q=q,
        objective=float(solution.objective),
        metrics=closed_loop_metrics(blocks, q, q_hat, cfg.grid, cfg.tail_tol),
        diagnostics={
            **solution.diagnostics,
            **cfg.provenance(),
            "horizon": basis.horizon,
            "oracle_hash": _oracle_hash(q_hat),
        },
    )
