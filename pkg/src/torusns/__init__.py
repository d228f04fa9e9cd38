"""Differential forms, Hodge potentials and incompressible Navier-Stokes on the flat torus."""
from .derham_complex import codifferential, differential, laplacian
from .hodge_theory import hodge_decompose, leray_projection
from .ns_solver import SolverConfig, solve
from .spectral_field import FormField, Grid, SpaceTimeField

__version__ = "0.1.0"

__all__ = [
    "FormField",
    "Grid",
    "SolverConfig",
    "SpaceTimeField",
    "codifferential",
    "differential",
    "hodge_decompose",
    "laplacian",
    "leray_projection",
    "solve",
]
