"""Regular quadrilateral meshes of the unit square and their boundary conditions.

Node ``(i, j)`` sits at ``(i / nel_x, j / nel_y)`` and has id ``j * (nel_x + 1) + i``;
element ``(ex, ey)`` has id ``ey * nel_x + ex`` and lists its nodes counterclockwise
starting at the lower-left corner. Both orderings are row-major with y slowest,
matching the cell layout of microstructures.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from src.shared.errors import DomainError
from src.shared.validation import ConfigValidator, RangeValidator


@dataclass(frozen=True)
class MeshSpec:
    nel_x: int
    nel_y: int

    def __post_init__(self) -> None:
        result = ConfigValidator.collect(
            [
                RangeValidator.positive_int(self.nel_x, "nel_x"),
                RangeValidator.positive_int(self.nel_y, "nel_y"),
            ]
        )
        if not result.is_valid:
            raise DomainError(result.error_message or "Invalid mesh")

    @property
    def n_nodes(self) -> int:
        return (self.nel_x + 1) * (self.nel_y + 1)

    @property
    def n_elements(self) -> int:
        return self.nel_x * self.nel_y

    @property
    def node_shape(self) -> tuple[int, int]:
        return (self.nel_y + 1, self.nel_x + 1)

    @property
    def element_size(self) -> tuple[float, float]:
        return (1.0 / self.nel_x, 1.0 / self.nel_y)

    def node_id(self, i: int, j: int) -> int:
        return j * (self.nel_x + 1) + i

    def node_coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        i = np.tile(np.arange(self.nel_x + 1), self.nel_y + 1)
        j = np.repeat(np.arange(self.nel_y + 1), self.nel_x + 1)
        return i / self.nel_x, j / self.nel_y

    def element_nodes(self) -> np.ndarray:
        ex = np.tile(np.arange(self.nel_x), self.nel_y)
        ey = np.repeat(np.arange(self.nel_y), self.nel_x)
        lower_left = ey * (self.nel_x + 1) + ex
        return np.stack(
            [lower_left, lower_left + 1, lower_left + self.nel_x + 2, lower_left + self.nel_x + 1],
            axis=1,
        )

    def boundary_nodes(self) -> np.ndarray:
        i, j = np.meshgrid(np.arange(self.nel_x + 1), np.arange(self.nel_y + 1))
        on_boundary = (i == 0) | (i == self.nel_x) | (j == 0) | (j == self.nel_y)
        return np.flatnonzero(on_boundary.ravel())

    def boundary_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Edge node pairs ``(n_edges, 2)`` and outward unit normals ``(n_edges, 2)``."""
        bottom = [(self.node_id(i, 0), self.node_id(i + 1, 0)) for i in range(self.nel_x)]
        top = [(self.node_id(i, self.nel_y), self.node_id(i + 1, self.nel_y)) for i in range(self.nel_x)]
        left = [(self.node_id(0, j), self.node_id(0, j + 1)) for j in range(self.nel_y)]
        right = [(self.node_id(self.nel_x, j), self.node_id(self.nel_x, j + 1)) for j in range(self.nel_y)]
        pairs = np.array(bottom + top + left + right, dtype=np.int64)
        normals = np.array(
            [(0.0, -1.0)] * len(bottom)
            + [(0.0, 1.0)] * len(top)
            + [(-1.0, 0.0)] * len(left)
            + [(1.0, 0.0)] * len(right)
        )
        return pairs, normals

    def to_dict(self) -> dict[str, Any]:
        return {"nel_x": self.nel_x, "nel_y": self.nel_y}

    @classmethod
    def from_dict(cls, data: dict[str, Any] | list[int]) -> "MeshSpec":
        if isinstance(data, (list, tuple)):
            return cls(int(data[0]), int(data[1]))
        return cls(int(data["nel_x"]), int(data["nel_y"]))


@dataclass(frozen=True)
class AffineFlux:
    """Heat-flux vector Q(x, y) = (qx0 + qx1 x + qx2 y, qy0 + qy1 x + qy2 y)."""

    qx: tuple[float, float, float] = (150.0, 0.0, -30.0)
    qy: tuple[float, float, float] = (100.0, -30.0, 0.0)

    def __call__(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        a0, a1, a2 = self.qx
        b0, b1, b2 = self.qy
        return a0 + a1 * x + a2 * y, b0 + b1 * x + b2 * y

    def to_dict(self) -> dict[str, Any]:
        return {"qx": list(self.qx), "qy": list(self.qy)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AffineFlux":
        return cls(
            qx=tuple(float(v) for v in data["qx"]),  # type: ignore[arg-type]
            qy=tuple(float(v) for v in data["qy"]),  # type: ignore[arg-type]
        )


CORNERS = {
    "upper_left": (0.0, 1.0),
    "upper_right": (1.0, 1.0),
    "lower_left": (0.0, 0.0),
    "lower_right": (1.0, 0.0),
}


@dataclass
class BoundaryConditions:
    mesh: MeshSpec
    dirichlet: tuple[tuple[int, float], ...]
    flux: AffineFlux | None = None
    description: dict[str, Any] = field(default_factory=dict)

    @property
    def dirichlet_nodes(self) -> np.ndarray:
        return np.array([node for node, _ in self.dirichlet], dtype=np.int64)

    @property
    def dirichlet_values(self) -> np.ndarray:
        return np.array([value for _, value in self.dirichlet], dtype=np.float64)

    @classmethod
    def corner(
        cls,
        mesh: MeshSpec,
        value: float = -50.0,
        flux: AffineFlux | None = None,
        corner: str = "upper_left",
    ) -> "BoundaryConditions":
        if corner not in CORNERS:
            raise DomainError(f"Unknown corner {corner!r}; expected one of {sorted(CORNERS)}")
        cx, cy = CORNERS[corner]
        node = mesh.node_id(int(cx * mesh.nel_x), int(cy * mesh.nel_y))
        flux = flux if flux is not None else AffineFlux()
        return cls(
            mesh=mesh,
            dirichlet=((node, float(value)),),
            flux=flux,
            description={"kind": "corner", "corner": corner, "value": float(value), "flux": flux.to_dict()},
        )

    @classmethod
    def affine_dirichlet(
        cls, mesh: MeshSpec, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    ) -> "BoundaryConditions":
        x, y = mesh.node_coordinates()
        nodes = mesh.boundary_nodes()
        values = np.asarray(fn(x[nodes], y[nodes]), dtype=float)
        return cls(
            mesh=mesh,
            dirichlet=tuple((int(n), float(v)) for n, v in zip(nodes, values)),
            flux=None,
            description={"kind": "dirichlet_boundary"},
        )

    @classmethod
    def left_right(cls, mesh: MeshSpec, left: float, right: float) -> "BoundaryConditions":
        left_nodes = [mesh.node_id(0, j) for j in range(mesh.nel_y + 1)]
        right_nodes = [mesh.node_id(mesh.nel_x, j) for j in range(mesh.nel_y + 1)]
        dirichlet = tuple((n, float(left)) for n in left_nodes) + tuple(
            (n, float(right)) for n in right_nodes
        )
        return cls(
            mesh=mesh,
            dirichlet=dirichlet,
            flux=None,
            description={"kind": "left_right", "left": float(left), "right": float(right)},
        )


@dataclass(frozen=True)
class BoundarySpec:
    """Mesh-independent boundary recipe shared by the fine and coarse models."""

    corner: str = "upper_left"
    corner_value: float = -50.0
    flux: AffineFlux = field(default_factory=AffineFlux)

    def build(self, mesh: MeshSpec) -> BoundaryConditions:
        return BoundaryConditions.corner(mesh, value=self.corner_value, flux=self.flux, corner=self.corner)

    def to_dict(self) -> dict[str, Any]:
        return {"corner": self.corner, "corner_value": self.corner_value, "flux": self.flux.to_dict()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "BoundarySpec":
        return cls(
            corner=str(data.get("corner", "upper_left")),
            corner_value=float(data.get("corner_value", -50.0)),
            flux=AffineFlux.from_dict(data["flux"]) if "flux" in data else AffineFlux(),
        )
