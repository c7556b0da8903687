"""This module defines the communication graph of a networked system and the sparsity masks derived from it.

Nodes are numbered from 0 in memory. Graph files use 1-based numbering like the bus labels of a grid.
"""

import json
import logging
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx
import numpy as np

from REGRET_DEFAULTS import FixedModeSamples, FixedModeTolerance

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DirectedGraph:
    """Directed graph with mandatory self-loops.

    An edge (i, j) is a link from node i to node j.
    """

    node_count: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self) -> None:
        """Checks node range and self-loops."""
        if self.node_count < 1:
            msg = f"graph requires at least one node, got {self.node_count}"
            raise ValueError(msg)
        object.__setattr__(
            self, "edges", frozenset((int(i), int(j)) for i, j in self.edges)
        )
        for i, j in self.edges:
            if not (0 <= i < self.node_count and 0 <= j < self.node_count):
                msg = f"edge ({i}, {j}) outside of {self.node_count} nodes"
                raise ValueError(msg)
        missing = [i for i in range(self.node_count) if (i, i) not in self.edges]
        if missing:
            msg = f"nodes {missing} have no self-loop"
            raise ValueError(msg)

    @classmethod
    def from_edges(
        cls,
        node_count: int,
        edges: Iterable[tuple[int, int]],
        add_self_loops: bool = True,
    ) -> "DirectedGraph":
        """Creates a graph and adds the self-loops which are missing.

        Params:
            node_count: number of nodes
            edges: directed 0-based edges
            add_self_loops: complete missing self-loops with a warning
        Returns:
            validated graph
        """
        edge_set = {(int(i), int(j)) for i, j in edges}
        if add_self_loops:
            missing = [i for i in range(node_count) if (i, i) not in edge_set]
            if missing:
                logger.warning("Adding missing self-loops for nodes %s", missing)
                edge_set.update((i, i) for i in missing)
        return cls(node_count=node_count, edges=frozenset(edge_set))

    @classmethod
    def undirected(
        cls, node_count: int, lines: Iterable[tuple[int, int]]
    ) -> "DirectedGraph":
        """Each undirected line becomes two directed edges, self-loops are implied."""
        edges = {(i, i) for i in range(node_count)}
        for i, j in lines:
            edges.update({(i, j), (j, i)})
        return cls(node_count=node_count, edges=frozenset(edges))

    @classmethod
    def from_adjacency(cls, adjacency: np.ndarray) -> "DirectedGraph":
        """Inverse of the adjacency property."""
        rows, cols = np.nonzero(np.asarray(adjacency))
        return cls(
            node_count=adjacency.shape[0],
            edges=frozenset((int(i), int(j)) for j, i in zip(rows, cols, strict=True)),
        )

    @property
    def adjacency(self) -> np.ndarray:
        """0/1 matrix with adjacency[j, i] = 1 iff (i, j) is an edge."""
        result = np.zeros((self.node_count, self.node_count), dtype=int)
        for i, j in self.edges:
            result[j, i] = 1
        return result

    def neighbors(self, node: int) -> list[int]:
        """Nodes j with a link j -> node, including node itself."""
        return sorted(j for j, i in self.edges if i == node)

    def with_edges(self, extra: Iterable[tuple[int, int]]) -> "DirectedGraph":
        """Copy of the graph with additional directed edges."""
        return DirectedGraph(
            node_count=self.node_count, edges=self.edges | frozenset(extra)
        )

    def to_networkx(self) -> nx.DiGraph:
        """Graph as networkx digraph used for path computations."""
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.node_count))
        graph.add_edges_from(self.edges)
        return graph

    def to_dict(self) -> dict:
        """1-based file representation."""
        return {
            "nodes": self.node_count,
            "edges": sorted([i + 1, j + 1] for i, j in self.edges),
        }


def load_graph(path: Path | str) -> DirectedGraph:
    """Reads a graph file.

    File content is {"nodes": N, "edges": [[i, j], ...]} with 1-based labels.
    The optional key "undirected": true doubles every edge.

    Params:
        path: location of the json document
    Returns:
        DirectedGraph with self-loops added where missing
    """
    with Path(path).open(encoding="utf-8") as file:
        content = json.load(file)
    return graph_from_dict(content)


def graph_from_dict(content: dict) -> DirectedGraph:
    """Builds a graph from the 1-based file representation."""
    edges = [(int(i) - 1, int(j) - 1) for i, j in content["edges"]]
    if content.get("undirected", False):
        edges += [(j, i) for i, j in edges]
    return DirectedGraph.from_edges(int(content["nodes"]), edges)


@dataclass(frozen=True, eq=False)
class PathLengthTable:
    """lengths[j, i] is the shortest directed path length from j to i, inf if unreachable."""

    lengths: np.ndarray

    def __call__(self, source: int, target: int) -> float:
        """Path length from source to target."""
        return float(self.lengths[source, target])

    def max_finite(self) -> int:
        """Largest finite path length."""
        finite = self.lengths[np.isfinite(self.lengths)]
        return int(finite.max()) if finite.size else 0


def shortest_path_lengths(graph: DirectedGraph) -> PathLengthTable:
    """Breadth first search path lengths for all pairs.

    Params:
        graph: graph with self-loops
    Returns:
        table with l(i, i) = 0 and inf for unreachable pairs
    """
    lengths = np.full((graph.node_count, graph.node_count), np.inf)
    for source, targets in nx.all_pairs_shortest_path_length(graph.to_networkx()):
        for target, length in targets.items():
            lengths[source, target] = length
    np.fill_diagonal(lengths, 0)
    return PathLengthTable(lengths=lengths)


@dataclass(frozen=True)
class BlockPartition:
    """Per-node block sizes of one stacked signal."""

    sizes: tuple[int, ...]
    offsets: tuple[int, ...] = field(init=False)

    def __post_init__(self) -> None:
        """Rejects empty blocks and computes offsets."""
        sizes = tuple(int(size) for size in self.sizes)
        if not sizes:
            msg = "partition requires at least one block"
            raise ValueError(msg)
        if min(sizes) < 1:
            msg = f"zero-size blocks are not supported: {sizes}"
            raise ValueError(msg)
        object.__setattr__(self, "sizes", sizes)
        offsets = tuple(int(offset) for offset in np.cumsum((0, *sizes[:-1])))
        object.__setattr__(self, "offsets", offsets)

    @classmethod
    def uniform(cls, node_count: int, size: int) -> "BlockPartition":
        """Partition with identical block sizes."""
        return cls(sizes=(size,) * node_count)

    @property
    def node_count(self) -> int:
        """Number of blocks."""
        return len(self.sizes)

    @property
    def total(self) -> int:
        """Stacked dimension."""
        return sum(self.sizes)

    def slice(self, node: int) -> slice:
        """Index range of one node."""
        return slice(self.offsets[node], self.offsets[node] + self.sizes[node])

    def labels(self) -> np.ndarray:
        """Node label of every stacked entry."""
        return np.repeat(np.arange(self.node_count), self.sizes)

    def expand(self, node_matrix: np.ndarray, other: "BlockPartition") -> np.ndarray:
        """Blows up a node level matrix (last two axes) to entry level.

        Params:
            node_matrix: array whose last two axes index (row node, col node)
            other: partition of the columns
        Returns:
            array with rows repeated per self and columns per other
        """
        rows = np.repeat(node_matrix, self.sizes, axis=-2)
        return np.repeat(rows, other.sizes, axis=-1)


def delay_mask(graph: DirectedGraph, fir_order: int) -> np.ndarray:
    """Node level mask[t, i, j] = t >= l(j, i)."""
    if fir_order < 0:
        msg = f"FIR order must be nonnegative, got {fir_order}"
        raise ValueError(msg)
    lengths = shortest_path_lengths(graph).lengths
    times = np.arange(fir_order + 1)[:, None, None]
    return times >= lengths.T[None, :, :]


def fir_sparsity_mask(
    graph: DirectedGraph,
    fir_order: int,
    row_part: BlockPartition,
    col_part: BlockPartition,
) -> np.ndarray:
    """Delay structure of a FIR parameter.

    Params:
        graph: communication graph
        fir_order: last coefficient index f
        row_part: partition of the rows (controller inputs)
        col_part: partition of the columns (measurements)
    Returns:
        bool array (f+1, rows, cols), True where the coefficient is free
    """
    if row_part.node_count != graph.node_count or col_part.node_count != graph.node_count:
        msg = "partitions do not match the node count of the graph"
        raise ValueError(msg)
    return row_part.expand(delay_mask(graph, fir_order), col_part)


def respects_mask(coeffs: np.ndarray, mask: np.ndarray, tol: float = 0.0) -> bool:
    """True if every coefficient outside the mask is (numerically) zero.

    Coefficients beyond the mask horizon are compared against the last mask slice.
    """
    coeffs = np.asarray(coeffs)
    horizon = min(coeffs.shape[0], mask.shape[0])
    if not np.all(np.abs(coeffs[:horizon][~mask[:horizon]]) <= tol):
        return False
    if coeffs.shape[0] > horizon:
        return bool(np.all(np.abs(coeffs[horizon:][:, ~mask[-1]]) <= tol))
    return True


def is_supergraph(g_hat: DirectedGraph, graph: DirectedGraph) -> bool:
    """Strict superset test for oracle graphs."""
    if g_hat.node_count != graph.node_count:
        msg = f"node count differs: {g_hat.node_count} vs {graph.node_count}"
        raise ValueError(msg)
    return graph.edges < g_hat.edges


@dataclass(frozen=True)
class FixedModeReport:
    """Result of the decentralized fixed mode test."""

    modes: tuple[complex, ...]
    stabilizable: bool
    marginal: tuple[complex, ...]


def _match_persistent(
    candidates: list[complex], sampled: np.ndarray, tol: float
) -> list[complex]:
    """Greedy minimal-distance pairing, keeps candidates with a partner within tol."""
    distances = np.abs(np.subtract.outer(np.asarray(candidates), sampled))
    kept = []
    free_rows = set(range(len(candidates)))
    free_cols = set(range(sampled.size))
    while free_rows and free_cols:
        rows = sorted(free_rows)
        cols = sorted(free_cols)
        sub = distances[np.ix_(rows, cols)]
        row, col = np.unravel_index(np.argmin(sub), sub.shape)
        if sub[row, col] > tol:
            break
        kept.append(candidates[rows[row]])
        free_rows.remove(rows[row])
        free_cols.remove(cols[col])
    return kept


def decentralized_fixed_modes(
    A: np.ndarray,  # noqa: N803
    B2: np.ndarray,  # noqa: N803
    C2: np.ndarray,  # noqa: N803
    input_part: BlockPartition,
    output_part: BlockPartition,
    samples: int = FixedModeSamples,
    tol: float = FixedModeTolerance,
    seed: int = 0,
) -> FixedModeReport:
    """Eigenvalues of A which no block-diagonal static output feedback moves.

    Params:
        A: state matrix
        B2: input matrix
        C2: measurement matrix
        input_part: node partition of the inputs
        output_part: node partition of the measurements
        samples: number of random block-diagonal gains, at least 2
        tol: matching tolerance for persistent eigenvalues
        seed: seed of the random gains
    Returns:
        fixed modes, stabilizability verdict and modes within tol of the unit circle
    """
    A, B2, C2 = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (A, B2, C2))  # noqa: N806
    n = A.shape[0]
    if A.shape != (n, n) or B2.shape[0] != n or C2.shape[1] != n:
        msg = f"dimension mismatch A{A.shape} B2{B2.shape} C2{C2.shape}"
        raise ValueError(msg)
    if B2.shape[1] != input_part.total or C2.shape[0] != output_part.total:
        msg = "partitions do not match B2 columns and C2 rows"
        raise ValueError(msg)
    if samples < 2:  # noqa: PLR2004
        msg = f"at least 2 samples are required, got {samples}"
        raise ValueError(msg)

    rng = np.random.default_rng(seed)
    candidates = list(np.linalg.eigvals(A))
    for _ in range(samples):
        gain = np.zeros((input_part.total, output_part.total))
        for node in range(input_part.node_count):
            rows, cols = input_part.slice(node), output_part.slice(node)
            gain[rows, cols] = rng.standard_normal(gain[rows, cols].shape)
        sampled = np.linalg.eigvals(A + B2 @ gain @ C2)
        candidates = _match_persistent(candidates, sampled, tol)
        if not candidates:
            break

    modes = tuple(
        complex(mode) for mode in sorted(candidates, key=lambda m: (abs(m), m.imag))
    )
    marginal = tuple(mode for mode in modes if abs(abs(mode) - 1) <= tol)
    stabilizable = all(abs(mode) < 1 for mode in modes)
    if marginal:
        logger.warning("Fixed modes close to the unit circle: %s", marginal)
    logger.debug("Found %s decentralized fixed modes", len(modes))
    return FixedModeReport(modes=modes, stabilizable=stabilizable, marginal=marginal)
