"""Numerics for sedimenting-droplet patches in slow viscous flow.

Subpackages cover the exact traveling-wave patches and their separation
certificates, the nonlocal hyperbolic model of the droplet surface, the
linearized operator and its Galerkin spectrum, the Oseen-coupled particle
cloud, and the quadrature/basis machinery underneath them all.
"""

__version__ = "0.1.0"

from . import (  # noqa: F401
    kernels,
    linear_stability,
    micro_sim,
    patch_waves,
    quadrature,
    surface_evolution,
)
