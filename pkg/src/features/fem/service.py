"""Bilinear finite elements for the stationary heat equation on the unit square.

The fine model assembles a sparse system once per microstructure and solves it
with preconditioned CG or a sparse direct factorization. The coarse model keeps
a precomputed scatter from element conductivities to the reduced stiffness so a
whole batch of latent draws can be solved as stacked dense systems.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg

from src.features.fem.mesh import BoundaryConditions, MeshSpec
from src.shared.errors import DomainError, NumericError, SingularSystemError
from src.shared.logging import get_logger
from src.shared.storage import read_array, write_array
from src.shared.validation import MeshValidator

logger = get_logger(__name__)

GAUSS_POINT = 1.0 / np.sqrt(3.0)
# Local node order is counterclockwise from the lower-left corner.
LOCAL_XI = np.array([-1.0, 1.0, 1.0, -1.0])
LOCAL_ETA = np.array([-1.0, -1.0, 1.0, 1.0])
DEFAULT_DIRECT_THRESHOLD = 10_000


@dataclass(frozen=True)
class LinearSolverConfig:
    method: str = "auto"
    rtol: float = 1e-10
    maxiter: int | None = None
    direct_threshold: int = DEFAULT_DIRECT_THRESHOLD

    def __post_init__(self) -> None:
        if self.method not in ("auto", "cg", "direct"):
            raise DomainError(f"Unknown linear solver method {self.method!r}")
        if not self.rtol > 0:
            raise DomainError(f"Solver tolerance must be positive, got {self.rtol}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "rtol": self.rtol,
            "maxiter": self.maxiter,
            "direct_threshold": self.direct_threshold,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "LinearSolverConfig":
        maxiter = data.get("maxiter")
        return cls(
            method=str(data.get("method", "auto")),
            rtol=float(data.get("rtol", 1e-10)),
            maxiter=int(maxiter) if maxiter is not None else None,
            direct_threshold=int(data.get("direct_threshold", DEFAULT_DIRECT_THRESHOLD)),
        )


@dataclass
class FemSystem:
    mesh: MeshSpec
    bc: BoundaryConditions
    stiffness: sparse.csr_matrix
    load: np.ndarray
    free_nodes: np.ndarray
    reduced_matrix: sparse.csr_matrix
    reduced_rhs: np.ndarray

    @property
    def n_unknowns(self) -> int:
        return int(self.free_nodes.size)


@dataclass
class FemSolution:
    nodal_values: np.ndarray
    mesh: MeshSpec
    bc_description: dict[str, Any] = field(default_factory=dict)
    residual: float = 0.0

    def grid(self) -> np.ndarray:
        return self.nodal_values.reshape(self.mesh.node_shape)


def reference_stiffness(hx: float, hy: float) -> np.ndarray:
    """Unit-conductivity stiffness of one hx-by-hy bilinear element, 2x2 Gauss."""
    stiffness = np.zeros((4, 4))
    det_j = hx * hy / 4.0
    for xi in (-GAUSS_POINT, GAUSS_POINT):
        for eta in (-GAUSS_POINT, GAUSS_POINT):
            dn_dx = 0.25 * LOCAL_XI * (1.0 + LOCAL_ETA * eta) * (2.0 / hx)
            dn_dy = 0.25 * LOCAL_ETA * (1.0 + LOCAL_XI * xi) * (2.0 / hy)
            stiffness += (np.outer(dn_dx, dn_dx) + np.outer(dn_dy, dn_dy)) * det_j
    return 0.5 * (stiffness + stiffness.T)


def flux_load(mesh: MeshSpec, bc: BoundaryConditions) -> np.ndarray:
    """Boundary load -int N_a (Q.n) ds over every boundary edge, 2-point Gauss."""
    load = np.zeros(mesh.n_nodes)
    if bc.flux is None:
        return load
    x, y = mesh.node_coordinates()
    pairs, normals = mesh.boundary_edges()
    xa, ya = x[pairs[:, 0]], y[pairs[:, 0]]
    xb, yb = x[pairs[:, 1]], y[pairs[:, 1]]
    length = np.hypot(xb - xa, yb - ya)
    for t in (0.5 * (1.0 - GAUSS_POINT), 0.5 * (1.0 + GAUSS_POINT)):
        qx, qy = bc.flux(xa + t * (xb - xa), ya + t * (yb - ya))
        q_normal = qx * normals[:, 0] + qy * normals[:, 1]
        weight = 0.5 * length
        np.add.at(load, pairs[:, 0], -weight * (1.0 - t) * q_normal)
        np.add.at(load, pairs[:, 1], -weight * t * q_normal)
    return load


def _check_conductivity(mesh: MeshSpec, conductivity: np.ndarray) -> np.ndarray:
    values = np.asarray(conductivity, dtype=float).reshape(-1)
    if values.size != mesh.n_elements:
        raise DomainError(
            f"Expected {mesh.n_elements} element conductivities, got {values.size}",
            context={"nel_x": mesh.nel_x, "nel_y": mesh.nel_y},
        )
    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise DomainError("Element conductivities must be finite and positive")
    return values


def _free_nodes(mesh: MeshSpec, bc: BoundaryConditions) -> np.ndarray:
    if bc.mesh != mesh:
        raise DomainError(f"Boundary conditions belong to mesh {bc.mesh}, not {mesh}")
    if not bc.dirichlet:
        raise SingularSystemError("At least one Dirichlet node is required; the system is singular")
    constrained = np.zeros(mesh.n_nodes, dtype=bool)
    constrained[bc.dirichlet_nodes] = True
    return np.flatnonzero(~constrained)


def assemble(mesh: MeshSpec, conductivity: np.ndarray, bc: BoundaryConditions) -> FemSystem:
    values = _check_conductivity(mesh, conductivity)
    free = _free_nodes(mesh, bc)

    elements = mesh.element_nodes()
    local = reference_stiffness(*mesh.element_size)
    rows = np.repeat(elements, 4, axis=1).ravel()
    cols = np.tile(elements, (1, 4)).ravel()
    entries = (values[:, None, None] * local[None, :, :]).reshape(-1)
    stiffness = sparse.coo_matrix((entries, (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes)).tocsr()
    stiffness = (0.5 * (stiffness + stiffness.T)).tocsr()
    stiffness.sum_duplicates()
    stiffness.sort_indices()

    load = flux_load(mesh, bc)
    prescribed = np.zeros(mesh.n_nodes)
    prescribed[bc.dirichlet_nodes] = bc.dirichlet_values
    reduced_matrix = stiffness[free][:, free].tocsr()
    reduced_rhs = load[free] - stiffness[free] @ prescribed

    return FemSystem(
        mesh=mesh,
        bc=bc,
        stiffness=stiffness,
        load=load,
        free_nodes=free,
        reduced_matrix=reduced_matrix,
        reduced_rhs=np.asarray(reduced_rhs, dtype=float),
    )


def _solve_reduced(
    matrix: sparse.csr_matrix, rhs: np.ndarray, config: LinearSolverConfig
) -> tuple[np.ndarray, str]:
    n = rhs.size
    method = config.method
    if method == "auto":
        method = "direct" if n <= config.direct_threshold else "cg"
    if method == "direct":
        return np.asarray(sparse_linalg.spsolve(matrix.tocsc(), rhs), dtype=float), method
    diagonal = matrix.diagonal()
    preconditioner = sparse.diags(1.0 / diagonal)
    maxiter = config.maxiter if config.maxiter is not None else 10 * n
    # CG stops on its recursive residual; tighten it so the true residual meets rtol.
    x, info = sparse_linalg.cg(
        matrix, rhs, rtol=0.1 * config.rtol, atol=0.0, maxiter=maxiter, M=preconditioner
    )
    if info > 0:
        residual = float(np.linalg.norm(rhs - matrix @ x))
        raise NumericError(
            f"CG did not converge in {maxiter} iterations",
            context={"unknowns": n, "maxiter": maxiter},
            residual=residual,
        )
    return np.asarray(x, dtype=float), method


def solve(system: FemSystem, config: LinearSolverConfig | None = None) -> FemSolution:
    config = config or LinearSolverConfig()
    mesh = system.mesh
    values = np.zeros(mesh.n_nodes)
    values[system.bc.dirichlet_nodes] = system.bc.dirichlet_values
    if system.n_unknowns == 0:
        return FemSolution(values, mesh, dict(system.bc.description))

    rhs = system.reduced_rhs
    x, method = _solve_reduced(system.reduced_matrix, rhs, config)
    residual = float(np.linalg.norm(rhs - system.reduced_matrix @ x))
    load_norm = float(np.linalg.norm(rhs))
    if not np.all(np.isfinite(x)) or residual > config.rtol * max(load_norm, np.finfo(float).tiny):
        raise NumericError(
            f"Linear solve residual {residual:.3e} exceeds {config.rtol:g} x load norm {load_norm:.3e}",
            context={"method": method, "unknowns": system.n_unknowns},
            residual=residual,
        )
    values[system.free_nodes] = x
    logger.debug(
        "FEM solve finished",
        extra={"context": {"method": method, "unknowns": system.n_unknowns, "residual": residual}},
    )
    return FemSolution(values, mesh, dict(system.bc.description), residual=residual)


def solve_fine(
    mesh: MeshSpec,
    conductivity: np.ndarray,
    bc: BoundaryConditions,
    config: LinearSolverConfig | None = None,
) -> FemSolution:
    return solve(assemble(mesh, conductivity, bc), config)


def reaction_flux(system: FemSystem, solution: FemSolution, nodes: np.ndarray | list[int]) -> float:
    """Net heat flow the constraints at ``nodes`` inject into the domain."""
    reactions = system.stiffness @ solution.nodal_values - system.load
    return float(np.sum(reactions[np.asarray(nodes, dtype=np.int64)]))


def _bilinear_weights(s: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.stack([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t], axis=1)


def interpolation_matrix(coarse: MeshSpec, fine: MeshSpec) -> sparse.csr_matrix:
    """Coarse bilinear shape functions evaluated at every fine node, ``(n_fine, n_coarse)``."""
    nested = MeshValidator.nested((coarse.nel_x, coarse.nel_y), (fine.nel_x, fine.nel_y))
    if not nested.is_valid:
        raise DomainError(nested.error_message or "Meshes are not nested")
    rx, ry = nested.normalized_value

    fi = np.tile(np.arange(fine.nel_x + 1), fine.nel_y + 1)
    fj = np.repeat(np.arange(fine.nel_y + 1), fine.nel_x + 1)
    ex = np.minimum(fi // rx, coarse.nel_x - 1)
    ey = np.minimum(fj // ry, coarse.nel_y - 1)
    s = (fi - ex * rx) / rx
    t = (fj - ey * ry) / ry

    weights = _bilinear_weights(s, t)
    columns = coarse.element_nodes()[ey * coarse.nel_x + ex]
    rows = np.repeat(np.arange(fine.n_nodes), 4)
    keep = weights.ravel() != 0.0
    matrix = sparse.coo_matrix(
        (weights.ravel()[keep], (rows[keep], columns.ravel()[keep])),
        shape=(fine.n_nodes, coarse.n_nodes),
    ).tocsr()
    matrix.sort_indices()
    return matrix


class CoarseModel:
    """Batched coarse solves for a fixed mesh and boundary conditions.

    The reduced stiffness is linear in the element conductivities, so it is
    stored as a sparse map from ``lambda`` to the flattened dense matrix.
    """

    def __init__(self, bc: BoundaryConditions):
        mesh = bc.mesh
        self.mesh = mesh
        self.bc = bc
        self.free_nodes = _free_nodes(mesh, bc)
        n_free = self.free_nodes.size
        self._n_free = n_free

        position = np.full(mesh.n_nodes, -1, dtype=np.int64)
        position[self.free_nodes] = np.arange(n_free)
        self._prescribed = np.zeros(mesh.n_nodes)
        self._prescribed[bc.dirichlet_nodes] = bc.dirichlet_values
        self._load_free = flux_load(mesh, bc)[self.free_nodes]

        local = reference_stiffness(*mesh.element_size)
        elements = mesh.element_nodes()
        entry_rows: list[np.ndarray] = []
        entry_cols: list[np.ndarray] = []
        entry_vals: list[np.ndarray] = []
        lift = np.zeros((n_free, mesh.n_elements))
        element_ids = np.arange(mesh.n_elements)
        for a in range(4):
            pa = position[elements[:, a]]
            for b in range(4):
                pb = position[elements[:, b]]
                both_free = (pa >= 0) & (pb >= 0)
                entry_rows.append(pa[both_free] * n_free + pb[both_free])
                entry_cols.append(element_ids[both_free])
                entry_vals.append(np.full(int(both_free.sum()), local[a, b]))
                lifted = (pa >= 0) & (pb < 0)
                np.add.at(
                    lift,
                    (pa[lifted], element_ids[lifted]),
                    local[a, b] * self._prescribed[elements[lifted, b]],
                )
        self._scatter = sparse.coo_matrix(
            (np.concatenate(entry_vals), (np.concatenate(entry_rows), np.concatenate(entry_cols))),
            shape=(n_free * n_free, mesh.n_elements),
        ).tocsr()
        self._lift = lift

    @property
    def n_latent(self) -> int:
        return self.mesh.n_elements

    @property
    def n_nodes(self) -> int:
        return self.mesh.n_nodes

    def solve_batch(self, z: np.ndarray) -> np.ndarray:
        """Nodal solutions for each row of log-conductivities; failed rows are NaN."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if z.shape[1] != self.n_latent:
            raise DomainError(f"Expected {self.n_latent} coarse log-conductivities, got {z.shape[1]}")
        m = z.shape[0]
        result = np.tile(self._prescribed, (m, 1))
        if self._n_free == 0:
            return result

        with np.errstate(over="ignore", invalid="ignore", under="ignore"):
            lam = np.exp(z)
        ok = np.all(np.isfinite(lam) & (lam > 0.0), axis=1)
        result[~ok] = np.nan
        if not np.any(ok):
            return result

        lam_ok = lam[ok]
        matrices = np.asarray(self._scatter @ lam_ok.T).T.reshape(-1, self._n_free, self._n_free)
        rhs = self._load_free[None, :] - lam_ok @ self._lift.T
        try:
            solved = np.linalg.solve(matrices, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError:
            solved = np.full_like(rhs, np.nan)
            for k in range(rhs.shape[0]):
                try:
                    solved[k] = np.linalg.solve(matrices[k], rhs[k])
                except np.linalg.LinAlgError:
                    pass
        block = result[ok]
        block[:, self.free_nodes] = solved
        result[ok] = block
        bad = ~np.all(np.isfinite(result), axis=1)
        if np.any(bad):
            result[bad] = np.nan
        return result

    def solve(self, z: np.ndarray) -> FemSolution:
        z = np.asarray(z, dtype=float).reshape(-1)
        if not np.all(np.isfinite(z)):
            raise DomainError("Coarse log-conductivities must be finite")
        values = self.solve_batch(z[None, :])[0]
        if not np.all(np.isfinite(values)):
            raise NumericError(
                "Coarse solve produced non-finite temperatures",
                context={"z_min": float(z.min()), "z_max": float(z.max())},
            )
        return FemSolution(values, self.mesh, dict(self.bc.description))


def coarse_solve(z_c: np.ndarray, bc: BoundaryConditions) -> FemSolution:
    return CoarseModel(bc).solve(z_c)


def save_solution(stem: Path, solution: FemSolution, extra: dict[str, Any] | None = None) -> tuple[Path, Path]:
    metadata = {
        "mesh": solution.mesh.to_dict(),
        "bc": solution.bc_description,
        **(extra or {}),
    }
    return write_array(stem, solution.nodal_values, metadata)


def load_solution(stem: Path) -> FemSolution:
    values, sidecar = read_array(stem)
    mesh = MeshSpec.from_dict(sidecar["mesh"])
    if values.size != mesh.n_nodes:
        raise DomainError(f"Solution at {stem} has {values.size} values for a mesh of {mesh.n_nodes} nodes")
    return FemSolution(values.reshape(-1), mesh, dict(sidecar.get("bc", {})))
