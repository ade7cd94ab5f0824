"""Unadjusted Langevin sampling for weakly smooth mixture potentials.

Subpackages and modules:

* ``potentials``: potential specs, regularity metadata and certifiers
* ``gengauss``: the p-generalized Gaussian and Gaussian smoothing
* ``sampler``: ULA chains, ensembles, step-size planning, moment tracking
* ``metrics``: KL, TV and Wasserstein estimates against reference densities
* ``harness``: config files, experiments, reports and the command line
"""

__version__ = "0.1.0"
