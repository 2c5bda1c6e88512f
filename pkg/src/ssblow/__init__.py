"""Numerical construction and verification of the leading-order self-similar
Boussinesq blow-up profile: the angular eigenvalue 130, the conserved
invariant, the factorized profile, the good-unknowns algebra, the nonlocal
elliptic estimates, and the kernel of the linearized operator."""

__version__ = "0.1.0"
