"""vpblab: spectral laboratory for a scaled two-species kinetic plasma model.

The package discretizes velocity space with a Maxwellian-weighted Hermite
system, assembles the hard-sphere collision operators exactly on that system,
integrates the stiff two-species kinetic equations with IMEX schemes on a
periodic torus, and compares their moments against a reference two-fluid
incompressible Navier-Stokes-Fourier-Poisson solver with Ohm's law.
"""

__version__ = "0.1.0"
