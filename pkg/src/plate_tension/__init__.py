"""Numerical toolkit for the clamped plate under tension.

Modules:
    specfn      Bessel primitives: J, I, stable ratios, zeros, gamma_nu
    ball        closed-form ball quantities (eigenvalue, torsion, buckling)
    twoball     completed two-ball torsional energy and its sweeps
    gridsolver  triangulated plate element and raster Laplacian on 2D shapes
    rearrange   Schwarz symmetrization, concentration order, Talenti checks
    cli         command-line front end
"""

__version__ = "0.1.0"
