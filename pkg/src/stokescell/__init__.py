"""Boundary-integral toolkit for Stokes flow in periodically perforated cells.

Subpackages cover the free-space kernels, Nystrom discretization of the
layer operators, the capacity/permeability matrices, periodic (Ewald)
Green functions, the two-scale cell correctors and their rescaled
regime studies, plus a file-driven CLI.
"""

from .geometry import BoundaryMesh, ShapeSpec, build_mesh, containment_check

__all__ = [
    "BoundaryMesh",
    "ShapeSpec",
    "build_mesh",
    "containment_check",
]

__version__ = "0.1.0"
