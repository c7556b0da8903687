"""This file is used to define the construction and structure checks of a NetworkedPlant."""

import abc
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from netgraph import BlockPartition, DirectedGraph, graph_from_dict
from sstf import StateSpace

logger = logging.getLogger(__name__)

# matrix name -> (row partition, column partition, pattern)
MatrixLayout = {
    "A": ("state", "state", "graph"),
    "B1": ("state", "disturbance", "graph"),
    "B2": ("state", "input", "block-diagonal"),
    "C1": ("performance", "state", "graph"),
    "D11": ("performance", "disturbance", "graph"),
    "D12": ("performance", "input", "graph"),
    "C2": ("output", "state", "graph"),
    "D21": ("output", "disturbance", "graph"),
    "D22": ("output", "input", "block-diagonal"),
}


@dataclass(frozen=True)
class PlantPartitions:
    """Per-node dimensions of all plant signals."""

    state: BlockPartition
    input: BlockPartition
    output: BlockPartition
    disturbance: BlockPartition
    performance: BlockPartition

    @classmethod
    def uniform(
        cls,
        node_count: int,
        state: int = 1,
        input: int = 1,  # noqa: A002
        output: int = 1,
        disturbance: int = 1,
        performance: int = 1,
    ) -> "PlantPartitions":
        """Identical block sizes on every node."""
        return cls(
            *(
                BlockPartition.uniform(node_count, size)
                for size in (state, input, output, disturbance, performance)
            )
        )

    def to_dict(self) -> dict:
        """Block sizes per signal."""
        return {
            key: list(getattr(self, key).sizes)
            for key in ("state", "input", "output", "disturbance", "performance")
        }

    @classmethod
    def from_dict(cls, content: dict) -> "PlantPartitions":
        """Inverse of to_dict."""
        return cls(
            **{key: BlockPartition(tuple(sizes)) for key, sizes in content.items()}
        )


@dataclass(frozen=True)
class StructureViolation:
    """Nonzero block outside of the admissible pattern."""

    matrix: str
    row_node: int
    col_node: int
    magnitude: float


class NetworkedPlantStructurePart(abc.ABC):
    """Part of NetworkedPlant class that defines construction, sub-blocks and structure validation."""

    def __init__(
        self,
        graph: DirectedGraph,
        partitions: PlantPartitions,
        matrices: dict[str, np.ndarray],
    ) -> None:
        """Default construction of a plant on a graph.

        Missing D11, D12, D21 and D22 default to zero.

        Args:
            graph: coupling and communication graph
            partitions: per-node signal dimensions
            matrices: A, B1, B2, C1, C2 and optional feedthrough matrices
        """
        if any(
            getattr(partitions, key).node_count != graph.node_count
            for key in ("state", "input", "output", "disturbance", "performance")
        ):
            msg = "partitions do not match the node count of the graph"
            raise ValueError(msg)
        self.graph = graph
        self.partitions = partitions
        self.matrices = {}
        for name, (rows, cols, _) in MatrixLayout.items():
            shape = (getattr(partitions, rows).total, getattr(partitions, cols).total)
            value = matrices.get(name)
            matrix = np.zeros(shape) if value is None else np.asarray(value, dtype=float)
            matrix = matrix.reshape(shape) if matrix.size == np.prod(shape) else matrix
            if matrix.shape != shape:
                msg = f"{name} has shape {matrix.shape}, expected {shape}"
                raise ValueError(msg)
            self.matrices[name] = matrix
        if np.any(self.matrices["D22"]):
            msg = "nonzero D22 is not supported, the plant must satisfy D22 = 0"
            raise ValueError(msg)
        unknown = set(matrices) - set(MatrixLayout)
        if unknown:
            logger.warning("Ignoring unknown plant matrices %s", sorted(unknown))

    def __getattr__(self, name: str) -> np.ndarray:
        """Matrices are accessible as attributes, e.g. plant.B2."""
        if name in MatrixLayout and "matrices" in self.__dict__:
            return self.__dict__["matrices"][name]
        raise AttributeError(name)

    def allowed_blocks(self, pattern: str) -> np.ndarray:
        """Node level bool matrix, block (i, j) allowed iff j is an in-neighbor of i."""
        if pattern == "block-diagonal":
            return np.eye(self.graph.node_count, dtype=bool)
        return self.graph.adjacency.astype(bool)

    def block(self, name: str, row_node: int, col_node: int) -> np.ndarray:
        """Block view M^{[i,j]} of a plant matrix."""
        rows, cols, _ = MatrixLayout[name]
        row_part = getattr(self.partitions, rows)
        col_part = getattr(self.partitions, cols)
        return self.matrices[name][row_part.slice(row_node), col_part.slice(col_node)]

    def validate_network_structure(self) -> list[StructureViolation]:
        """Lists every nonzero block outside of the admissible pattern.

        A, B1, C1, D11, D12, C2 and D21 follow the graph, B2 and D22 are block-diagonal.

        Returns:
            list of violations, empty if the plant is network-structured
        """
        violations = []
        for name, (_, _, pattern) in MatrixLayout.items():
            allowed = self.allowed_blocks(pattern)
            for row_node, col_node in zip(*np.nonzero(~allowed), strict=True):
                magnitude = float(np.max(np.abs(self.block(name, row_node, col_node)), initial=0))
                if magnitude > 0:
                    violations.append(
                        StructureViolation(name, int(row_node), int(col_node), magnitude)
                    )
        for violation in violations:
            logger.info(
                "%s block (%s, %s) violates the %s pattern with magnitude %s",
                violation.matrix,
                violation.row_node,
                violation.col_node,
                MatrixLayout[violation.matrix][2],
                violation.magnitude,
            )
        return violations

    @property
    def is_stable(self) -> bool:
        """Schur stability of A, recomputed."""
        return self.p22.is_stable

    @property
    def p11(self) -> StateSpace:
        """Map w -> z."""
        return StateSpace(self.A, self.B1, self.C1, self.D11)

    @property
    def p12(self) -> StateSpace:
        """Map u -> z."""
        return StateSpace(self.A, self.B2, self.C1, self.D12)

    @property
    def p21(self) -> StateSpace:
        """Map w -> y."""
        return StateSpace(self.A, self.B1, self.C2, self.D21)

    @property
    def p22(self) -> StateSpace:
        """Map u -> y."""
        return StateSpace(self.A, self.B2, self.C2, self.D22)

    def to_dict(self) -> dict:
        """Json document {graph, partitions, matrices}."""
        return {
            "graph": self.graph.to_dict(),
            "partitions": self.partitions.to_dict(),
            "matrices": {key: value.tolist() for key, value in self.matrices.items()},
        }

    def write_file(self, path: Path | str) -> None:
        """Writes the plant document to disk."""
        with Path(path).open(mode="w", encoding="utf-8") as file:
            json.dump(self.to_dict(), file, indent=2)
        logger.debug("Plant written to %s", path)

    @classmethod
    def from_dict(cls, content: dict) -> "NetworkedPlantStructurePart":
        """Inverse of to_dict."""
        return cls(
            graph=graph_from_dict(content["graph"]),
            partitions=PlantPartitions.from_dict(content["partitions"]),
            matrices={
                key: np.asarray(value, dtype=float)
                for key, value in content["matrices"].items()
            },
        )

    @classmethod
    def from_file(cls, path: Path | str) -> "NetworkedPlantStructurePart":
        """Reads a plant document."""
        with Path(path).open(encoding="utf-8") as file:
            content = json.load(file)
        logger.debug("Plant read from %s", path)
        return cls.from_dict(content)
