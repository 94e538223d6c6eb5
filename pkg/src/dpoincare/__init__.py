"""Discrete de Rham complexes on tetrahedral meshes and their Poincare constants."""

__version__ = "0.1.0"

from .derham import assemble_diff, assemble_mass, complex_report, kernel_orthogonal_projector
from .equilibration import commuting_projection_hdiv
from .fespace import build_space, eval_basis, piola, piola_inverse
from .fields import BrokenField
from .mesh import (
    build_mesh,
    cube_freudenthal,
    extract_star,
    generate,
    geometry,
    read_mesh,
    reference_tet,
    stretched_cube,
    vertex_star_synthetic,
    write_mesh,
)
from .poincare import (
    constant,
    constrained_min,
    inf_sup,
    minimizing_projection,
    potential_norm,
    oracle_min_ratio,
    piola_transport,
    stability_sup,
)
from .solvers import solve_saddle, sym_gen_eig

__all__ = [
    "BrokenField",
    "assemble_diff",
    "assemble_mass",
    "build_mesh",
    "build_space",
    "commuting_projection_hdiv",
    "complex_report",
    "constant",
    "constrained_min",
    "cube_freudenthal",
    "eval_basis",
    "extract_star",
    "generate",
    "geometry",
    "inf_sup",
    "kernel_orthogonal_projector",
    "minimizing_projection",
    "piola",
    "piola_inverse",
    "potential_norm",
    "read_mesh",
    "reference_tet",
    "oracle_min_ratio",
    "piola_transport",
    "solve_saddle",
    "stability_sup",
    "stretched_cube",
    "sym_gen_eig",
    "vertex_star_synthetic",
    "write_mesh",
]
