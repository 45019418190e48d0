"""Bloch-wave analysis of periodic Schrodinger operators and their eps -> 0 limits.

Modules:
    potential   periodic potentials as finite Fourier series
    hill1d      Hill discriminant, band edges and band functions in one dimension
    galerkin    plane-wave fiber eigenproblems in any dimension
    landscape   critical sets, band crossings and hypothesis audits on band grids
    modespace   eps-scaled fields, dual fibers and Bloch mode decomposition
    propagate   full time-dependent solvers and Wigner diagnostics
    effmass     limiting models at critical points and crossings
    cli         command line interface
"""
__version__ = "0.1.0"
