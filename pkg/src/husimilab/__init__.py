"""Desk-scale laboratory for fermionic phase-space dynamics.

The package propagates small antisymmetric N-body wavefunctions on a
periodic grid, transforms them to Husimi/Wigner phase-space densities,
integrates the Hartree-Fock and Vlasov effective equations, and measures
the kinetic, semiclassical, and mean-field residues by which the exact
phase-space evolution differs from the Vlasov form.  A finite-mode
fermionic Fock space provides machine-precision cross checks of the
operator inequalities the estimates rest on.
"""

from husimilab.grid import GridSpec, Potential, TestFunction, make_grid

__all__ = ["GridSpec", "Potential", "TestFunction", "make_grid"]
__version__ = "0.1.0"
