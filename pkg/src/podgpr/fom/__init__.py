"""Nonlinear elastodynamics full-order model of a clamped hyperelastic beam."""

from .assembly import FomConfig, assemble_system, internal_force, mass_matrix, pressure_load
from .material import (
    PARAMETER_NAMES,
    MaterialParams,
    SingularDeformationError,
    piola_stress,
    piola_stress_and_tangent,
    strain_energy,
    volumetric_energy,
)
from .mesh import DIRICHLET, NEUMANN, PRESSURE, Mesh, box_mesh
from .solver import NewtonDivergenceError, Trajectory, extract_qoi, newton_step, solve_fom

__all__ = [
    "FomConfig",
    "MaterialParams",
    "Mesh",
    "NewtonDivergenceError",
    "PARAMETER_NAMES",
    "SingularDeformationError",
    "Trajectory",
    "DIRICHLET",
    "NEUMANN",
    "PRESSURE",
    "assemble_system",
    "box_mesh",
    "extract_qoi",
    "internal_force",
    "mass_matrix",
    "newton_step",
    "piola_stress",
    "piola_stress_and_tangent",
    "pressure_load",
    "solve_fom",
    "strain_energy",
    "volumetric_energy",
]
