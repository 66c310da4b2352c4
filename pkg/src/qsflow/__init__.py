"""qsflow: a finite-dimensional lab for quantum stochastic CP flows.

Subpackages cover the quadruple Ito *-algebra and its extended-matrix
form, exact coherent-sector Weyl calculus, the germ-matrix structure
theory of CP-flow generators with Choi/Kraus dilations, deterministic
flow propagation with independent Picard oracles, and Monte Carlo
trajectory unravelings of the filtering wave equations.
"""

__version__ = "0.1.0"
