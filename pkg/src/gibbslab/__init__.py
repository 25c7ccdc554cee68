"""Numerical laboratory for Gibbs states of trapped Bose gases.

Builds the one-body Schroedinger operator on a grid, samples the Gaussian
free-field measure with covariance h^-1, evaluates bare and Wick-renormalized
interaction functionals, constructs grand-canonical Gibbs states on a
truncated Fock space, and runs the self-consistent reduced-Hartree
counterterm scheme.  Everything is deterministic given a seed.
"""

import os

# Pin BLAS to one thread unless the user says otherwise: results must be
# bit-identical regardless of how many scheduler threads the CLI uses, and
# the desk-scale matrices here rarely benefit from threaded BLAS anyway.
for _var in ("OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "OMP_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

__version__ = "0.1.0"
