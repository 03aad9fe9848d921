"""laplab: graph Laplace operators on closed surfaces and their inverse problem.

The package assembles weighted-graph approximations of Laplace-type operators
on constant-metric tori and round spheres, in two flavors: kernels driven by
geodesic distance (intrinsic) and kernels driven by chord distance of an
embedding (extrinsic).  The identify module inverts an assembled operator back
into its ingredients: node masses, kernel values, pairwise distances, the
metric tensor, and the sampling density.  The verify module packages the
standard experiments (S1..S6) behind one entry point, and cli exposes
everything as a command line tool.
"""

__version__ = "0.1.0"

from . import errors, geometry, rng, discretization, operators, identify, verify

__all__ = [
    "__version__",
    "errors",
    "geometry",
    "rng",
    "discretization",
    "operators",
    "identify",
    "verify",
]
