"""Numerical tolerances used across the package, in one place."""

#: primal / dual feasibility of an LP solution
FEAS_TOL = 1e-7
#: |primal - dual| objective gap accepted as strong duality (relative to 1+|obj|)
DUALITY_GAP_TOL = 1e-6
#: binary values within this distance of 0/1 count as integral
INT_TOL = 1e-6
#: residual tolerance for post-solve identity checks (relative to a scale)
CHECK_TOL = 1e-6
#: agreement between a MILP lower level and an independent re-clearing
RECLEAR_TOL = 1e-5

# simplex internals
PIVOT_TOL = 1e-9
OPT_TOL = 1e-9
PRIMAL_TOL = 1e-9
REFACTOR_EVERY = 64
BLAND_AFTER = 40
