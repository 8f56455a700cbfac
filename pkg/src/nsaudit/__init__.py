"""Numerical audits of the 2D periodic Navier-Stokes decomposition u = w + v.

The heat part w solves the linear Stokes problem with the data of u; the
perturbation v carries the nonlinear response.  Modules:

``grid``
    Fourier grid, spectral vector fields, projections and norms.
``semigroup``
    Exact Stokes semigroup and its decay audits.
``solver``
    Pseudo-spectral IF-RK4 solver with energy-identity and oracle checks.
``duality``
    The decomposition, its duality representation and the perturbation audits.
``toolkit``
    Hardy-Littlewood-Sobolev, Gagliardo-Nirenberg and quadrature utilities.
``cli``
    Configuration loading, ensemble runs and the ``audit`` command.
"""

__version__ = "0.1.0"
