"""This module contains the system level parametrization and its distributed ADMM solver.

The closed loop maps Φ = [[Φxx, Φxy], [Φux, Φuy]] are stored as one coefficient
tensor of shape (H+1, n+m, n+p). Row constraints couple the coefficients of one
row over time, column constraints those of one column, so projections onto either
set split into independent blocks which are solved in a thread pool.
"""

import logging
import math
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import cvxpy as cp
import networkx as nx
import numpy as np
import pandas as pd
import scipy.sparse
import scipy.sparse.linalg

from conic import classify_status, primal_residual, selected_solver, solver_options
from netgraph import DirectedGraph
from NetworkedPlantStabilizationPart import TransformedPlant
from REGRET_DEFAULTS import (
    AdmmAbsTolerance,
    AdmmRelTolerance,
    BracketExpansions,
    DefaultAdmmMaxIterations,
    DefaultAdmmRho,
    DefaultFirOrder,
    DefaultMaxSolverIterations,
    FirClosureMargin,
    FirClosureTolerance,
    GoldenRatio,
    LineSearchTolerance,
    LpTolerance,
    MaxCertifiedHorizon,
    ProjectionClosureBound,
    QpSolverEnvVariable,
    ResidualBalanceFactor,
    ResidualBalanceRatio,
)
from sstf import FirTransferMatrix, FrequencyGrid
from synth import SynthesisResult, closed_loop_metrics, youla_mask

logger = logging.getLogger(__name__)


class AssumptionViolation(ValueError):
    """Raised if [C1 D12] cannot be permuted to a block-diagonal matrix."""


@dataclass(frozen=True, eq=False)
class SlsMaps:
    """Stacked closed loop maps, stacked[t] = [[Φxx, Φxy], [Φux, Φuy]] at time t."""

    stacked: np.ndarray
    states: int

    @property
    def horizon(self) -> int:
        """Last coefficient index H."""
        return self.stacked.shape[0] - 1

    @property
    def xx(self) -> np.ndarray:
        """Φxx, strictly proper."""
        return self.stacked[:, : self.states, : self.states]

    @property
    def xy(self) -> np.ndarray:
        """Φxy, strictly proper."""
        return self.stacked[:, : self.states, self.states :]

    @property
    def ux(self) -> np.ndarray:
        """Φux, strictly proper."""
        return self.stacked[:, self.states :, : self.states]

    @property
    def uy(self) -> np.ndarray:
        """Φuy, the Youla parameter."""
        return self.stacked[:, self.states :, self.states :]


@dataclass(frozen=True)
class Partitioning:
    """Row blocks of Φ with the performance rows they drive, and column blocks of Φ."""

    row_blocks: tuple[np.ndarray, ...]
    z_blocks: tuple[np.ndarray, ...]
    col_blocks: tuple[np.ndarray, ...] = ()
    permutation: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def size(self) -> int:
        """Number M of row blocks."""
        return len(self.row_blocks)


@dataclass
class AdmmState:
    """Iterates, scaled dual and residual history of one ADMM run."""

    phi: np.ndarray
    psi: np.ndarray
    dual: np.ndarray
    gamma: float = float("inf")
    k: int = 0
    rho: float = DefaultAdmmRho
    history: list[dict] = field(default_factory=list)

    @property
    def trace(self) -> pd.DataFrame:
        """Iteration trace with columns k, gamma, objective, primal, dual."""
        return pd.DataFrame(
            self.history, columns=["k", "gamma", "objective", "primal", "dual", "rho"]
        )

    def write_trace(self, path: Path | str) -> None:
        """Writes the iteration trace as csv."""
        self.trace.to_csv(path, index=False)
        logger.debug("ADMM trace written to %s", path)


def _stacked_gains(realization: object) -> tuple[np.ndarray, np.ndarray]:
    """[A B2] acting from the left and [A; C2] acting from the right."""
    return np.hstack([realization.A, realization.B2]), np.vstack([realization.A, realization.C2])


def sls_maps_from_youla(
    realization: object, q: FirTransferMatrix, horizon: int
) -> SlsMaps:
    """Closed loop maps of a stable realization under Youla parameter Q.

    Φuy = Q and the other maps follow the achievability recursions.
    """
    n, m, p = realization.A.shape[0], realization.B2.shape[1], realization.C2.shape[0]
    if q.shape != (m, p):
        msg = f"Youla parameter has shape {q.shape}, expected {(m, p)}"
        raise ValueError(msg)
    stacked = np.zeros((horizon + 1, n + m, n + p))
    stacked[:, n:, n:] = q.padded(horizon)
    left, right = _stacked_gains(realization)
    for t in range(horizon):
        stacked[t + 1, :n, :] = left @ stacked[t]
        stacked[t + 1, n:, :n] = stacked[t, n:, :] @ right
        if t == 0:
            stacked[1, :n, :n] += np.eye(n)
    return SlsMaps(stacked, n)


def sls_closed_loop(realization: object, maps: SlsMaps) -> FirTransferMatrix:
    """F[t] = [C1 D12] Φ[t] [B1; D21], plus D11 at t = 0."""
    outputs = np.hstack([realization.C1, realization.D12])
    inputs = np.vstack([realization.B1, realization.D21])
    coeffs = np.einsum("ir,trc,cj->tij", outputs, maps.stacked, inputs)
    coeffs[0] += realization.D11
    return FirTransferMatrix(coeffs)


def achievability_residual(
    maps: SlsMaps,
    A: np.ndarray,  # noqa: N803
    B2: np.ndarray,  # noqa: N803
    C2: np.ndarray,  # noqa: N803
) -> tuple[float, float, float]:
    """Largest violations of the row recursions, the column recursions and the FIR closure.

    Returns:
        (row residual, column residual, terminal residual) in max-abs norm
    """
    stacked = maps.stacked
    n = maps.states
    if A.shape != (n, n) or B2.shape[0] != n or C2.shape[1] != n:
        msg = "plant dimensions do not match the closed loop maps"
        raise ValueError(msg)
    if stacked.shape[1:] != (n + B2.shape[1], n + C2.shape[0]):
        msg = f"maps have shape {stacked.shape[1:]}, expected {(n + B2.shape[1], n + C2.shape[0])}"
        raise ValueError(msg)
    left = np.hstack([A, B2])
    right = np.vstack([A, C2])
    impulse_rows = np.zeros((stacked.shape[1], n))
    impulse_rows[:n] = np.eye(n)
    impulse_cols = np.zeros((n, stacked.shape[2]))
    impulse_cols[:, :n] = np.eye(n)
    row = np.einsum("trc,cj->trj", stacked[:-1], right)
    row[0] += impulse_rows
    col = np.einsum("ir,trc->tic", left, stacked[:-1])
    col[0] += impulse_cols
    row_residual = np.max(np.abs(stacked[1:, :, :n] - row), initial=0.0)
    col_residual = np.max(np.abs(stacked[1:, :n, :] - col), initial=0.0)
    terminal = max(
        np.max(np.abs(left @ stacked[-1]), initial=0.0),
        np.max(np.abs(stacked[-1] @ right), initial=0.0),
    )
    return float(row_residual), float(col_residual), float(terminal)


def discover_permutation(
    c1: np.ndarray,
    d12: np.ndarray,
    row_labels: np.ndarray | None = None,
    tol: float = 0.0,
) -> Partitioning:
    """Groups the columns of [C1 D12] into blocks which make it block-diagonal.

    Blocks are the connected components of the bipartite graph between performance
    rows and Φ rows given by the nonzero pattern. Φ rows sharing a node label are
    kept together.

    Params:
        c1: performance state matrix
        d12: performance input matrix
        row_labels: optional node label per Φ row
        tol: magnitude treated as zero
    Returns:
        Partitioning without column blocks, permutation lists the Φ rows block by block
    """
    pattern = np.abs(np.hstack([c1, d12])) > tol
    n_z, n_rows = pattern.shape
    graph = nx.Graph()
    graph.add_nodes_from(("phi", row) for row in range(n_rows))
    graph.add_nodes_from(("z", row) for row in range(n_z))
    graph.add_edges_from(
        (("z", int(z_row)), ("phi", int(row))) for z_row, row in zip(*np.nonzero(pattern), strict=True)
    )
    if row_labels is not None:
        graph.add_edges_from(
            (("phi", row), ("node", int(label))) for row, label in enumerate(row_labels)
        )

    row_blocks, z_blocks, loose_z = [], [], []
    for component in nx.connected_components(graph):
        rows = sorted(index for kind, index in component if kind == "phi")
        z_rows = sorted(index for kind, index in component if kind == "z")
        if rows:
            row_blocks.append(np.array(rows, dtype=int))
            z_blocks.append(np.array(z_rows, dtype=int))
        else:
            loose_z += z_rows
    order = np.argsort([block[0] for block in row_blocks])
    row_blocks = [row_blocks[index] for index in order]
    z_blocks = [z_blocks[index] for index in order]
    if loose_z:
        z_blocks[0] = np.sort(np.concatenate([z_blocks[0], loose_z])).astype(int)

    if len(row_blocks) == 1 and n_z > 1:
        msg = "[C1 D12] has a single coupled block, use the centralized LP (M = 1)"
        raise AssumptionViolation(msg)
    logger.debug("Discovered %s row blocks", len(row_blocks))
    return Partitioning(
        row_blocks=tuple(row_blocks),
        z_blocks=tuple(z_blocks),
        permutation=np.concatenate(row_blocks),
    )


def plant_partitioning(realization: object) -> Partitioning:
    """Node-wise row and column blocks of a networked realization."""
    parts = realization.partitions
    row_labels = np.concatenate([parts.state.labels(), parts.input.labels()])
    col_labels = np.concatenate([parts.state.labels(), parts.output.labels()])
    partitioning = discover_permutation(realization.C1, realization.D12, row_labels)
    col_blocks = tuple(
        np.flatnonzero(col_labels == node) for node in range(realization.graph.node_count)
    )
    return replace(partitioning, col_blocks=col_blocks)


class AffineProjector:
    """Euclidean projection onto {x : x = 0 off the free set, G x = d} via a cached KKT factorization."""

    def __init__(self, constraint: scipy.sparse.spmatrix, rhs: np.ndarray, free: np.ndarray) -> None:
        """Factors [[I, Gᵀ], [G, 0]] restricted to the free entries.

        Args:
            constraint: sparse G acting on the full vector
            rhs: right hand side d
            free: bool vector of free entries
        """
        self.free_index = np.flatnonzero(free)
        self.size = free.size
        self.rhs = np.asarray(rhs, dtype=float)
        self.matrix = scipy.sparse.csr_matrix(constraint)[:, self.free_index]
        count = self.free_index.size
        kkt = scipy.sparse.bmat(
            [[scipy.sparse.eye(count), self.matrix.T], [self.matrix, None]], format="csc"
        )
        try:
            self.factor = scipy.sparse.linalg.splu(kkt)
        except RuntimeError as error:
            msg = "singular KKT system, the constraints are structurally rank deficient"
            raise np.linalg.LinAlgError(msg) from error

    def project_free(self, target: np.ndarray) -> np.ndarray:
        """Projection of the free part of a target vector."""
        count = self.free_index.size
        solution = self.factor.solve(np.concatenate([target, self.rhs]))
        return solution[:count]

    def expand(self, free_values: np.ndarray) -> np.ndarray:
        """Full vector with zeros off the free set."""
        full = np.zeros(self.size)
        full[self.free_index] = free_values
        return full

    def project(self, target: np.ndarray) -> np.ndarray:
        """Projection of a full target vector."""
        return self.expand(self.project_free(np.asarray(target)[self.free_index]))


def _shift_operators(horizon: int) -> tuple[scipy.sparse.spmatrix, scipy.sparse.spmatrix]:
    """Selections of t+1 and t for t = 0..H-1."""
    current = scipy.sparse.eye(horizon, horizon + 1, k=0)
    following = scipy.sparse.eye(horizon, horizon + 1, k=1)
    return following, current


def _terminal_selector(horizon: int) -> scipy.sparse.spmatrix:
    """Selection of t = H."""
    return scipy.sparse.csr_matrix(([1.0], ([0], [horizon])), shape=(1, horizon + 1))


def closure_horizon(realization: object, horizon: int, tol: float = FirClosureTolerance) -> int:
    """Smallest horizon from the given one on which the maps of Q = 0 close within a fraction of tol.

    Params:
        realization: stable realization
        horizon: horizon required by the closed loop tails
        tol: FIR closure tolerance
    Returns:
        horizon H with max |A^H| <= FirClosureMargin * tol
    """
    A = realization.A  # noqa: N806
    power = np.linalg.matrix_power(A, horizon)
    while np.max(np.abs(power), initial=0.0) > FirClosureMargin * tol:
        if horizon >= MaxCertifiedHorizon:
            msg = f"A^t does not reach {FirClosureMargin * tol} within {MaxCertifiedHorizon} steps"
            raise ValueError(msg)
        power = A @ power
        horizon += 1
    return horizon


def _solve_projection_qp(problem: cp.Problem, values: cp.Variable) -> np.ndarray | None:
    """Solves a projection QP with the QP backend, None unless the optimum is certified."""
    backend = selected_solver(None, QpSolverEnvVariable)
    try:
        problem.solve(solver=backend, **solver_options(backend, LpTolerance, DefaultMaxSolverIterations))
    except cp.error.SolverError:
        logger.debug("%s failed on a projection QP", backend)
        return None
    if values.value is None:
        return None
    status = classify_status(problem.status, primal_residual(problem), LpTolerance)
    if status != "optimal":
        logger.debug("Projection QP returned %s", problem.status)
        return None
    return np.asarray(values.value)


class RowProjection:
    """Projection of one row block onto the row constraints with an L1 bound on its performance rows."""

    def __init__(
        self,
        rows: np.ndarray,
        z_rows: np.ndarray,
        free: np.ndarray,
        realization: object,
        oracle: np.ndarray,
    ) -> None:
        """Assembles constraints, the L1 map and the affine projector.

        Args:
            rows: Φ rows of the block
            z_rows: performance rows driven by the block
            free: bool mask of free Φ coefficients (H+1, n+m, n+p)
            realization: stable realization
            oracle: oracle closed loop coefficients (H+1, n_z, n_w)
        """
        self.rows = rows
        self.z_rows = z_rows
        horizon = free.shape[0] - 1
        n = realization.A.shape[0]
        n_cols = free.shape[2]
        _, right = _stacked_gains(realization)
        following, current = _shift_operators(horizon)
        select = scipy.sparse.eye(n, n_cols)
        per_row = scipy.sparse.kron(following, select) - scipy.sparse.kron(current, right.T)
        constraint = scipy.sparse.kron(scipy.sparse.eye(rows.size), per_row, format="csr")
        rhs = np.zeros((rows.size, horizon, n))
        for index, row in enumerate(rows):
            if row < n:
                rhs[index, 0, row] = 1.0
        self.free = free[:, rows, :].transpose(1, 0, 2).ravel()
        self.projector = AffineProjector(constraint, rhs.ravel(), self.free)
        terminal = scipy.sparse.kron(
            scipy.sparse.eye(rows.size),
            scipy.sparse.kron(_terminal_selector(horizon), right.T),
            format="csr",
        )
        self.terminal_matrix = terminal[:, self.projector.free_index]

        outputs = np.hstack([realization.C1, realization.D12])[np.ix_(z_rows, rows)]
        inputs = np.vstack([realization.B1, realization.D21])
        self.n_w = inputs.shape[1]
        self.length = (horizon + 1) * self.n_w
        l1_map = scipy.sparse.kron(
            outputs, scipy.sparse.kron(scipy.sparse.eye(horizon + 1), inputs.T), format="csr"
        )
        self.l1_matrix = l1_map[:, self.projector.free_index]
        offset = -oracle[:, z_rows, :].transpose(1, 0, 2).copy()
        offset[:, 0, :] += realization.D11[z_rows]
        self.l1_offset = offset.ravel()
        self._problem = None

    def vector(self, stacked: np.ndarray) -> np.ndarray:
        """Block vector in (row, t, column) order."""
        return stacked[:, self.rows, :].transpose(1, 0, 2).ravel()

    def row_norms(self, free_values: np.ndarray) -> np.ndarray:
        """L1 norm of every performance row of the mismatch."""
        if self.z_rows.size == 0:
            return np.zeros(0)
        mismatch = self.l1_matrix @ free_values + self.l1_offset
        return np.abs(mismatch).reshape(self.z_rows.size, self.length).sum(axis=1)

    def terminal_residual(self, free_values: np.ndarray) -> float:
        """Largest entry of Φ[H] [A; C2] over the rows of the block."""
        return float(np.max(np.abs(self.terminal_matrix @ free_values), initial=0.0))

    def affine_bound(self, target: np.ndarray) -> float:
        """Largest row L1 norm at the affine projection, beyond it the bound is inactive."""
        affine = self.projector.project_free(target[self.projector.free_index])
        return float(np.max(self.row_norms(affine), initial=0.0))

    def _qp(self) -> tuple[cp.Problem, cp.Variable, cp.Parameter, cp.Parameter]:
        if self._problem is None:
            count = self.projector.free_index.size
            values = cp.Variable(count)
            target = cp.Parameter(count)
            gamma = cp.Parameter(nonneg=True)
            mismatch = self.l1_matrix @ values + self.l1_offset
            constraints = [
                self.projector.matrix @ values == self.projector.rhs,
                cp.abs(self.terminal_matrix @ values) <= ProjectionClosureBound,
            ] + [
                cp.norm1(mismatch[index * self.length : (index + 1) * self.length]) <= gamma
                for index in range(self.z_rows.size)
            ]
            problem = cp.Problem(cp.Minimize(cp.sum_squares(values - target)), constraints)
            self._problem = (problem, values, target, gamma)
        return self._problem

    def __call__(self, gamma: float, target: np.ndarray) -> tuple[np.ndarray | None, float]:
        """Projection of a block target vector for the bound γ.

        Returns:
            projected full block vector and its squared distance, (None, inf) if γ is infeasible
        """
        target_free = target[self.projector.free_index]
        offset = float(np.sum(target**2) - np.sum(target_free**2))
        affine = self.projector.project_free(target_free)
        if (
            np.all(self.row_norms(affine) <= gamma + LpTolerance)
            and self.terminal_residual(affine) <= ProjectionClosureBound
        ):
            return self.projector.expand(affine), float(np.sum((affine - target_free) ** 2)) + offset
        problem, values, parameter, bound = self._qp()
        parameter.value = target_free
        bound.value = gamma
        projected = _solve_projection_qp(problem, values)
        if projected is None:
            logger.debug("Row QP has no certified optimum for gamma %s", gamma)
            return None, float("inf")
        return self.projector.expand(projected), float(np.sum((projected - target_free) ** 2)) + offset


def row_project(
    gamma: float, target: np.ndarray, block: RowProjection
) -> tuple[np.ndarray | None, float]:
    """Row step of one block for the stacked target Ψ - Λ, see RowProjection."""
    return block(gamma, block.vector(target))


class ColumnProjection:
    """Projection of one column block onto the column constraints."""

    def __init__(self, cols: np.ndarray, free: np.ndarray, realization: object) -> None:
        """Assembles and factors the column constraints of the block.

        Args:
            cols: Φ columns of the block
            free: bool mask of free Φ coefficients (H+1, n+m, n+p)
            realization: stable realization
        """
        self.cols = cols
        horizon = free.shape[0] - 1
        n = realization.A.shape[0]
        n_rows = free.shape[1]
        left, _ = _stacked_gains(realization)
        following, current = _shift_operators(horizon)
        select = scipy.sparse.eye(n, n_rows)
        per_col = scipy.sparse.kron(following, select) - scipy.sparse.kron(current, left)
        constraint = scipy.sparse.kron(scipy.sparse.eye(cols.size), per_col, format="csr")
        rhs = np.zeros((cols.size, horizon, n))
        for index, col in enumerate(cols):
            if col < n:
                rhs[index, 0, col] = 1.0
        self.projector = AffineProjector(
            constraint, rhs.ravel(), free[:, :, cols].transpose(2, 0, 1).ravel()
        )
        terminal = scipy.sparse.kron(
            scipy.sparse.eye(cols.size),
            scipy.sparse.kron(_terminal_selector(horizon), left),
            format="csr",
        )
        self.terminal_matrix = terminal[:, self.projector.free_index]
        self._problem = None

    def vector(self, stacked: np.ndarray) -> np.ndarray:
        """Block vector in (column, t, row) order."""
        return stacked[:, :, self.cols].transpose(2, 0, 1).ravel()

    def terminal_residual(self, free_values: np.ndarray) -> float:
        """Largest entry of [A B2] Φ[H] over the columns of the block."""
        return float(np.max(np.abs(self.terminal_matrix @ free_values), initial=0.0))

    def _qp(self) -> tuple[cp.Problem, cp.Variable, cp.Parameter]:
        if self._problem is None:
            count = self.projector.free_index.size
            values = cp.Variable(count)
            target = cp.Parameter(count)
            constraints = [
                self.projector.matrix @ values == self.projector.rhs,
                cp.abs(self.terminal_matrix @ values) <= ProjectionClosureBound,
            ]
            problem = cp.Problem(cp.Minimize(cp.sum_squares(values - target)), constraints)
            self._problem = (problem, values, target)
        return self._problem

    def __call__(self, target: np.ndarray) -> np.ndarray:
        """Projected block vector, the terminal bound is added as QP when the affine projection violates it."""
        target_free = np.asarray(target)[self.projector.free_index]
        affine = self.projector.project_free(target_free)
        if self.terminal_residual(affine) <= ProjectionClosureBound:
            return self.projector.expand(affine)
        problem, values, parameter = self._qp()
        parameter.value = target_free
        projected = _solve_projection_qp(problem, values)
        if projected is None:
            logger.warning("Column QP has no certified optimum, keeping the affine projection")
            return self.projector.expand(affine)
        return self.projector.expand(projected)


def col_project(target: np.ndarray, block: ColumnProjection) -> np.ndarray:
    """Column step of one block for the stacked target Φ + Λ."""
    return block(block.vector(target))


def gamma_line_search(
    objective: Callable[[float], float],
    bounds: tuple[float, float],
    tol: float = LineSearchTolerance,
) -> float:
    """Golden-section minimization of a convex, possibly extended valued function.

    Params:
        objective: h(γ), +inf where infeasible
        bounds: bracket (a, b) containing a finite minimizer
        tol: final bracket width
    Returns:
        γ* within tol of the minimizer
    """
    lower, upper = bounds
    if upper < lower:
        msg = f"invalid bracket {bounds}"
        raise ValueError(msg)
    cache = {}

    def value(gamma: float) -> float:
        if gamma not in cache:
            cache[gamma] = objective(gamma)
        return cache[gamma]

    if math.isinf(value(upper)):
        msg = f"objective is infeasible on the whole bracket {bounds}"
        raise ValueError(msg)
    steps = 0
    if upper - lower > tol:
        steps = math.ceil(math.log((upper - lower) / tol) / math.log(1 / GoldenRatio))
    left = upper - GoldenRatio * (upper - lower)
    right = lower + GoldenRatio * (upper - lower)
    for _ in range(steps):
        if value(left) < value(right):
            upper, right = right, left
            left = upper - GoldenRatio * (upper - lower)
        else:
            lower, left = left, right
            right = lower + GoldenRatio * (upper - lower)
    middle = 0.5 * (lower + upper)
    return middle if not math.isinf(value(middle)) else upper


def youla_free_mask(youla: np.ndarray, states: int, horizon: int) -> np.ndarray:
    """Free coefficients of Φ: strictly proper Φxx, Φxy, Φux and Φuy on the Youla mask."""
    order = youla.shape[0] - 1
    inputs, outputs = youla.shape[1:]
    free = np.zeros((horizon + 1, states + inputs, states + outputs), dtype=bool)
    free[1:] = True
    free[:, states:, states:] = False
    keep = min(order, horizon) + 1
    free[:keep, states:, states:] = youla[:keep]
    return free


class AdmmSolver:
    """Alternates row and column projections until Φ and Ψ reach consensus."""

    def __init__(
        self,
        realization: object,
        free: np.ndarray,
        oracle: np.ndarray,
        partitioning: Partitioning,
        workers: int | None = None,
    ) -> None:
        """Sets up and factors all block projections.

        Args:
            realization: stable realization
            free: bool mask of free Φ coefficients
            oracle: oracle closed loop coefficients (H+1, n_z, n_w)
            partitioning: row and column blocks
            workers: thread pool size, None for the executor default
        """
        self.realization = realization
        self.free = free
        self.oracle = oracle
        self.workers = workers
        self.rows = [
            RowProjection(rows, z_rows, free, realization, oracle)
            for rows, z_rows in zip(partitioning.row_blocks, partitioning.z_blocks, strict=True)
        ]
        self.cols = [ColumnProjection(cols, free, realization) for cols in partitioning.col_blocks]

    def _row_step(
        self, executor: ThreadPoolExecutor, target: np.ndarray, rho: float
    ) -> tuple[float, np.ndarray]:
        vectors = [block.vector(target) for block in self.rows]
        results = {}

        def penalized(gamma: float) -> float:
            outcome = list(
                executor.map(lambda pair: pair[0](gamma, pair[1]), zip(self.rows, vectors, strict=True))
            )
            results[gamma] = outcome
            distances = [distance for _, distance in outcome]
            if any(math.isinf(distance) for distance in distances):
                return float("inf")
            return gamma + 0.5 * rho * sum(distances)

        upper = max(
            (block.affine_bound(vector) for block, vector in zip(self.rows, vectors, strict=True)),
            default=0.0,
        )
        # the terminal bound can push the row norms beyond the affine projection
        for _ in range(BracketExpansions):
            if not math.isinf(penalized(upper + LineSearchTolerance)):
                break
            upper = 2.0 * upper + 1.0
        gamma = gamma_line_search(
            penalized, (0.0, upper + LineSearchTolerance), LineSearchTolerance * max(1.0, upper)
        )
        if gamma not in results:
            penalized(gamma)
        phi = np.zeros_like(target)
        for block, (projected, _) in zip(self.rows, results[gamma], strict=True):
            phi[:, block.rows, :] = projected.reshape(block.rows.size, phi.shape[0], -1).transpose(1, 0, 2)
        return gamma, phi

    def _col_step(self, executor: ThreadPoolExecutor, target: np.ndarray) -> np.ndarray:
        psi = np.zeros_like(target)
        projected = executor.map(lambda block: col_project(target, block), self.cols)
        for block, vector in zip(self.cols, projected, strict=True):
            psi[:, :, block.cols] = vector.reshape(block.cols.size, psi.shape[0], -1).transpose(1, 2, 0)
        return psi

    def objective(self, stacked: np.ndarray) -> float:
        """L1 norm of the closed loop mismatch of a stacked Φ."""
        maps = SlsMaps(stacked, self.realization.A.shape[0])
        mismatch = sls_closed_loop(self.realization, maps).coeffs - self.oracle
        return float(np.max(np.sum(np.abs(mismatch), axis=(0, 2)), initial=0.0))

    def run(
        self,
        start: np.ndarray,
        rho: float = DefaultAdmmRho,
        max_iter: int = DefaultAdmmMaxIterations,
        eps_abs: float = AdmmAbsTolerance,
        eps_rel: float = AdmmRelTolerance,
        adapt_rho: bool = False,
    ) -> tuple[AdmmState, bool]:
        """Iterates Φ-step, Ψ-step and dual update.

        Returns:
            final state and whether the stopping rule was met
        """
        state = AdmmState(phi=start.copy(), psi=start.copy(), dual=np.zeros_like(start), rho=rho)
        scale = math.sqrt(start.size)
        converged = False
        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            for k in range(1, max_iter + 1):
                state.gamma, state.phi = self._row_step(executor, state.psi - state.dual, state.rho)
                psi = self._col_step(executor, state.phi + state.dual)
                state.dual = state.dual + state.phi - psi
                primal = float(np.linalg.norm(state.phi - psi))
                dual = float(state.rho * np.linalg.norm(psi - state.psi))
                state.psi, state.k = psi, k
                state.history.append(
                    {
                        "k": k,
                        "gamma": state.gamma,
                        "objective": self.objective(state.phi),
                        "primal": primal,
                        "dual": dual,
                        "rho": state.rho,
                    }
                )
                logger.debug("ADMM %s: gamma %s primal %s dual %s", k, state.gamma, primal, dual)
                eps_pri = scale * eps_abs + eps_rel * max(
                    np.linalg.norm(state.phi), np.linalg.norm(state.psi)
                )
                eps_dual = scale * eps_abs + eps_rel * state.rho * np.linalg.norm(state.dual)
                if primal <= eps_pri and dual <= eps_dual:
                    converged = True
                    break
                if adapt_rho:
                    self._balance(state, primal, dual)
        return state, converged

    @staticmethod
    def _balance(state: AdmmState, primal: float, dual: float) -> None:
        """Residual balancing, the scaled dual follows ρ."""
        if primal > ResidualBalanceRatio * dual:
            state.rho *= ResidualBalanceFactor
            state.dual = state.dual / ResidualBalanceFactor
        elif dual > ResidualBalanceRatio * primal:
            state.rho /= ResidualBalanceFactor
            state.dual = state.dual * ResidualBalanceFactor


def admm_run(
    blocks: TransformedPlant,
    q_hat: FirTransferMatrix | None,
    graph: DirectedGraph | None = None,
    partitioning: Partitioning | None = None,
    fir_order: int = DefaultFirOrder,
    rho: float = DefaultAdmmRho,
    max_iter: int = DefaultAdmmMaxIterations,
    eps_abs: float = AdmmAbsTolerance,
    eps_rel: float = AdmmRelTolerance,
    adapt_rho: bool = False,
    grid: FrequencyGrid | None = None,
    workers: int | None = None,
) -> tuple[SynthesisResult, AdmmState]:
    """Distributed minimization of the L1 mismatch to an oracle over masked SLS maps.

    Without oracle the L1 norm of the closed loop itself is minimized.

    Params:
        blocks: transformed plant, its realization carries A, B2 and C2
        q_hat: oracle Youla parameter or None
        graph: learner graph, defaults to the graph of the realization
        partitioning: row and column blocks, discovered node-wise if None
        fir_order: order f of Φuy
        rho: ADMM penalty
        max_iter: iteration limit
        eps_abs: absolute stopping tolerance
        eps_rel: relative stopping tolerance
        adapt_rho: enables residual balancing
        grid: frequency grid of the reported metrics
        workers: thread pool size
    Returns:
        SynthesisResult with Q = Φuy and the final AdmmState
    """
    if rho <= 0:
        msg = f"rho must be positive, got {rho}"
        raise ValueError(msg)
    realization = blocks.realization
    graph = graph or realization.graph
    if partitioning is None:
        try:
            partitioning = plant_partitioning(realization)
        except AssumptionViolation as error:
            if blocks.gains.is_zero:
                raise
            msg = f"{error}; F couples the performance rows of neighbors, prestabilize with the block-diagonal pattern"
            raise AssumptionViolation(msg) from error
    youla = youla_mask(blocks, graph, fir_order)
    horizon = blocks.closed_loop_horizon(max(fir_order, 0 if q_hat is None else q_hat.order))
    horizon = max(horizon, fir_order + closure_horizon(realization, 1))
    n = realization.A.shape[0]
    free = youla_free_mask(youla, n, horizon)
    start = sls_maps_from_youla(
        realization,
        FirTransferMatrix.zeros(fir_order, *youla.shape[1:]),
        horizon,
    )
    oracle = np.zeros((horizon + 1, *blocks.p11.shape))
    if q_hat is not None:
        oracle = sls_closed_loop(realization, sls_maps_from_youla(realization, q_hat, horizon)).coeffs

    solver = AdmmSolver(realization, free, oracle, partitioning, workers)
    state, converged = solver.run(start.stacked, rho, max_iter, eps_abs, eps_rel, adapt_rho)
    if not converged:
        logger.warning("ADMM stopped after %s iterations without reaching consensus", state.k)
    maps = SlsMaps(state.phi, n)
    q = FirTransferMatrix(maps.uy[: fir_order + 1].copy(), youla)
    objective = solver.objective(state.phi)
    residuals = achievability_residual(maps, realization.A, realization.B2, realization.C2)
    closed = residuals[2] <= FirClosureTolerance
    if not closed:
        logger.warning(
            "FIR closure residual %s exceeds %s, the run is not converged",
            residuals[2],
            FirClosureTolerance,
        )
    converged = converged and closed
    logger.info("ADMM finished after %s iterations with L1 mismatch %s", state.k, objective)
    grid = grid or FrequencyGrid.uniform(64)
    return (
        SynthesisResult(
            q=q,
            objective=objective,
            metrics=closed_loop_metrics(blocks, q, q_hat, grid),
            diagnostics={
                "iterations": state.k,
                "converged": converged,
                "rho": state.rho,
                "blocks": partitioning.size,
                "horizon": horizon,
                "row_residual": residuals[0],
                "col_residual": residuals[1],
                "terminal_residual": residuals[2],
                "primal": state.history[-1]["primal"] if state.history else None,
                "dual": state.history[-1]["dual"] if state.history else None,
            },
        ),
        state,
    )
