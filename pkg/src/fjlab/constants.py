"""Numerical tolerances shared across the package.

These are contract values: tests pin behavior against them, so changing
one is an interface change, not a tuning knob.
"""

# Simplex membership tolerance for belief vectors and weight rows.
TAU_SIMPLEX = 1e-9

# Entries below this are treated as exact zeros inside entropy sums.
ENTROPY_EPS = 1e-15

# Probability floor used inside logarithms (log loss, KL fitting).
LOG_FLOOR = 1e-12

# Row-sum tolerance accepted when ingesting trajectory files; rows are
# renormalized after passing this check.
INGEST_TOL = 1e-6

# Row-stochasticity tolerance for the long-run influence matrix.
STOCHASTIC_TOL = 1e-8

# Spectral-radius margin below 1 required to treat dynamics as contractive.
CONTRACTION_MARGIN = 1e-6

# Default disagreement threshold under which a final snapshot with a
# unanimous argmax counts as consensus.
CONSENSUS_THRESHOLD = 0.05
