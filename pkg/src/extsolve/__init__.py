"""Exterior extension solvers for second-order strongly elliptic operators.

The package covers fundamental solutions (``kernels``), boundaries and
layouts (``geometry``), layer potentials and their traces
(``potentials``), regularised dense solves (``reglinalg``), the
extension-problem solvers (``problems``) and an experiment harness with a
command-line front end (``config``, ``experiment``, ``cli``).
"""

import logging

from .geometry import Boundary, DomainLayout, build_boundary, circle, sphere
from .kernels import OperatorSpec, laplace
from .manufactured import manufactured_solution
from .potentials import LayerDensity, density
from .problems import (CauchyData, ExtensionSolution, continue_solution, dirichlet_by_extension,
                       solve_cauchy, solve_inner_dirichlet_mfs, solve_inner_dirichlet_single_layer)
from .reglinalg import RegConfig, RegularizedSystem, SolveReport, solve

logging.getLogger(__name__).addHandler(logging.NullHandler())

__version__ = "0.1.0"

__all__ = [
    "Boundary", "CauchyData", "DomainLayout", "ExtensionSolution", "LayerDensity", "OperatorSpec",
    "RegConfig", "RegularizedSystem", "SolveReport", "build_boundary", "circle", "continue_solution",
    "density", "dirichlet_by_extension", "laplace", "manufactured_solution", "solve",
    "solve_cauchy", "solve_inner_dirichlet_mfs", "solve_inner_dirichlet_single_layer", "sphere",
]
