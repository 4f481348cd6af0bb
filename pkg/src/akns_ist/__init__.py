"""Direct and inverse scattering for the singular AKNS system.

The package implements the spectral problem

    v_x = (ik Sigma + Q(x)) v,    Sigma = diag(I_{m+}, 0, -I_{m-}),

for potentials Q with L1 entries that anticommute with Sigma in block
structure, together with the machinery needed to run the full inverse
scattering transform for the coupled long-wave/short-wave system:

- ``blocks``      block partition, grids, selectors, entrywise phase algebra
- ``wedge``       exterior-algebra lifts (cofactor machinery on Lambda^{n-1})
- ``potential``   potential fields, focusing symmetry, Lax pair, generators
- ``faddeev``     Volterra/ODE solver for the Faddeev functions and duals
- ``scattering``  transition matrices, asymptotic limits, scattering matrices
- ``wiener_hopf`` winding numbers and scalar Wiener-Hopf factorization
- ``spectrum``    discrete eigenvalues, residues, norming constants
- ``marchenko``   Marchenko kernels, coupled integral equations, reconstruction
- ``evolution``   time evolution of scattering data, PDE oracle, IST pipeline
- ``cli``         the ``akns-ist`` command-line driver
"""

__version__ = "0.1.0"

from .blocks import BlockPartition, Grid
from .errors import (
    AdmissibilityError,
    AknsError,
    AssumptionViolation,
    ConfigError,
    NonSimpleZeroError,
    SpectralSingularityError,
    ToleranceError,
    WindingError,
)

__all__ = [
    "BlockPartition",
    "Grid",
    "AknsError",
    "AssumptionViolation",
    "AdmissibilityError",
    "ConfigError",
    "NonSimpleZeroError",
    "SpectralSingularityError",
    "ToleranceError",
    "WindingError",
    "__version__",
]
