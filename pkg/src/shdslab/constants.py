"""Numeric tolerances and defaults shared across the toolkit."""

# Membership slack for set predicates: a point is inside a set iff the
# signed membership value is <= DELTA_SET.
DELTA_SET = 1e-9

# Inequality slack for certificate verification residuals.
TOL_INEQ = 1e-8

# Definiteness margin: a symmetric matrix counts as negative definite iff
# its largest eigenvalue is < -TOL_PD.
TOL_PD = 1e-10

# Monotonicity slack per flow step is TOL_MONO_COEFF * step_h.
TOL_MONO_COEFF = 1e-6

# Bisection target width for event localisation (units of flow time).
EVENT_TOL_DEFAULT = 1e-10

# Relative step for finite-difference gradients: h = FD_REL_STEP * (1 + |y|).
FD_REL_STEP = 1e-6

# Default node count for Gauss-Legendre quadrature of expectations.
QUAD_NODES_DEFAULT = 64

# Default sample count for Monte Carlo expectations.
MC_N_DEFAULT = 100_000

# Two-sided 95% normal quantile used by Wilson score intervals.
WILSON_Z = 1.959963984540054

# Environment variable capping worker processes for Monte Carlo batches.
THREADS_ENV_VAR = "SHDS_LAB_THREADS"
