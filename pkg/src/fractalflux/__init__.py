"""Numerical laboratory for heat transmission across irregular interfaces.

A rectangular box is split in two by a polyline chain (flat, prefractal, or
custom). The package builds double-node triangulations that keep the two
sides topologically separate, couples them through a resistive interface
term weighted by a boundary measure, time-steps the resulting parabolic
problem, and evaluates the energy functionals used for interface-shape
comparison and optimization.
"""

from fractalflux.geometry import (
    Box,
    InterfaceFamily,
    PolylineInterface,
    TwoSidedDomain,
    build_two_sided_domain,
    flat_interface,
    koch_prefractal,
    minkowski_prefractal,
)

__version__ = "0.1.0"

__all__ = [
    "Box",
    "InterfaceFamily",
    "PolylineInterface",
    "TwoSidedDomain",
    "build_two_sided_domain",
    "flat_interface",
    "koch_prefractal",
    "minkowski_prefractal",
    "__version__",
]
