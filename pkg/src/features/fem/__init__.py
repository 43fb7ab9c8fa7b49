"""Finite element models of the stationary heat equation.

Usage:
    from src.features.fem import MeshSpec, BoundarySpec, assemble, solve

    mesh = MeshSpec(64, 64)
    bc = BoundarySpec().build(mesh)
    solution = solve(assemble(mesh, microstructure.flat, bc))
"""

from src.features.fem.mesh import (
    AffineFlux,
    BoundaryConditions,
    BoundarySpec,
    MeshSpec,
)
from src.features.fem.service import (
    CoarseModel,
    FemSolution,
    FemSystem,
    LinearSolverConfig,
    assemble,
    coarse_solve,
    flux_load,
    interpolation_matrix,
    load_solution,
    reaction_flux,
    reference_stiffness,
    save_solution,
    solve,
    solve_fine,
)

__all__ = [
    "AffineFlux",
    "BoundaryConditions",
    "BoundarySpec",
    "MeshSpec",
    "CoarseModel",
    "FemSolution",
    "FemSystem",
    "LinearSolverConfig",
    "assemble",
    "coarse_solve",
    "flux_load",
    "interpolation_matrix",
    "load_solution",
    "reaction_flux",
    "reference_stiffness",
    "save_solution",
    "solve",
    "solve_fine",
]
