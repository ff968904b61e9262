"""Simulation and verification toolkit for driven conformal evolution
in the unit disk.

The package is organised in four layers:

* :mod:`loewnerkit.herglotz` - admissible driving-function specs,
* :mod:`loewnerkit.deterministic` - rotating-frame flows, closed-form
  references, phase-portrait classification,
* :mod:`loewnerkit.stochastic` - Brownian frames, pathwise and Ito
  simulation, moment and generator machinery,
* :mod:`loewnerkit.cli` - command line front end.
"""

from .herglotz import (
    Automorphism,
    Cayley,
    CayleyLinear,
    ConstantImaginary,
    DomainError,
    Error,
    Exponential,
    HerglotzSpec,
    SingularPointError,
    Taylor,
    parse_spec,
)

__version__ = "0.1.0"

__all__ = [
    "Automorphism",
    "Cayley",
    "CayleyLinear",
    "ConstantImaginary",
    "DomainError",
    "Error",
    "Exponential",
    "HerglotzSpec",
    "SingularPointError",
    "Taylor",
    "parse_spec",
    "__version__",
]
