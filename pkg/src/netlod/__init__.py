"""Localized orthogonal decomposition (LOD) for discrete networks."""

from .coarse import CoarseGrid, build_grid, build_patches, interpolate_basis
from .lod import (
    build_basis,
    compute_correctors,
    energy_norm,
    fem_basis,
    global_correctors,
    l2_norm,
    multiscale_basis,
    solve_displaced,
    solve_full,
    solve_multiscale,
    split_elements,
)
from .models import LameField, assemble_elasticity, assemble_laplacian, elasticity_blocks, laplacian_blocks, map_lame
from .network import Attributes, BoundaryConditions, Network, derive_pairs, generate_regular, perturb_random

__version__ = "0.1.0"

__all__ = [
    "CoarseGrid",
    "build_grid",
    "build_patches",
    "interpolate_basis",
    "build_basis",
    "compute_correctors",
    "energy_norm",
    "fem_basis",
    "global_correctors",
    "l2_norm",
    "multiscale_basis",
    "solve_displaced",
    "solve_full",
    "solve_multiscale",
    "split_elements",
    "LameField",
    "assemble_elasticity",
    "assemble_laplacian",
    "elasticity_blocks",
    "laplacian_blocks",
    "map_lame",
    "Attributes",
    "BoundaryConditions",
    "Network",
    "derive_pairs",
    "generate_regular",
    "perturb_random",
]
