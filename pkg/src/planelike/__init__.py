"""Lattice experiments for planelike minimizers of nonlocal perimeters with
periodic forcing.

Modules
-------
kernel       admissible kernels, validation, moments and half-space oracles
lattice      grids, pair stencils, boxes and rotated squares
energy       discrete perimeters, functionals and cell energies
cellsolver   periodic cell problem, calibration and certificates
plateau      exact Dirichlet problems via min cut
geometry     level sets, planelike bounds, density and coarea checks
stablenorm   stable norm estimates and scaling experiments
cli          command line entry point
"""
__version__ = "0.1.0"

from .errors import PlanelikeError  # noqa: E402
from .kernel import KernelSpec, validate_assumptions  # noqa: E402
from .lattice import TorusGrid, WindowGrid, build_stencil  # noqa: E402
from .cellsolver import SolverOptions, solve_cell_problem  # noqa: E402
from .plateau import solve_plateau  # noqa: E402
from .geometry import extract_level_sets, planelike_report  # noqa: E402
from .stablenorm import stable_norm_estimate  # noqa: E402

__all__ = ["__version__", "PlanelikeError", "KernelSpec", "validate_assumptions", "TorusGrid", "WindowGrid",
           "build_stencil", "SolverOptions", "solve_cell_problem", "solve_plateau", "extract_level_sets",
           "planelike_report", "stable_norm_estimate"]
