"""kdelab: a numerical laboratory for multivariate kernel density estimation
with general SPD bandwidth matrices.

Core modules: bandwidth (SPD matrices and balance diagnostics), kernels
(kernel zoo including the slow-decay spike-train kernel), densities
(mixtures with analytic derivative tensors, far-mass witnesses), estimator
(deterministic KDE sums), quadrature (adaptive Gauss-Legendre engine),
bias_analysis (bias series, remainder bounds, rate studies), blowup
(bandwidth-shrink explosion experiments).  The service subpackage wraps it
all behind a FastAPI app; the CLI is a thin client of that service.
"""

__version__ = "0.1.0"
