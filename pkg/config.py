"""
Configuration settings for the refinet analyzer.

Values may be overridden through environment variables (a local .env file is
honoured via python-dotenv).
"""

import os
from fractions import Fraction

from dotenv import load_dotenv

load_dotenv()

# Numerical tolerances (exact rational checks never use these)
TOLERANCES = {
    'float': 1e-9,         # float integrands, DPI and optimality comparisons
    'hinge': 1e-6,         # quadrature-based hinge reconstruction
    'oracle': 1e-6,        # descent oracle stopping tolerance
    'attainment': 1e-8,    # closed-form epsilon family check
}

# Instance caps for the brute-force reference oracles
SOLVER_LIMITS = {
    'lp_max_edges': 64,
    'enumeration_max_edges': 12,
    'cross_grid_max_pairs': 256,
}

# Projected-gradient descent oracle
ORACLE_CONFIG = {
    'max_iter': 60_000,
    'initial_step': 1.0,
    'min_step': 1e-14,
    'stall_patience': 200,
    'max_denominator': 10**9,
}

# Quadrature grids
QUADRATURE = {
    'hinge_points': 10_000,
    'attainment_points': 4096,
    'attainment_min_points': 64,
}

# Universal closestness audit
AUDIT_CONFIG = {
    'n_competitors': 100,
    'gamma_grid': [Fraction(2 ** k, 8) for k in range(9)],
}

# Random instance generator used by the property suites
RANDOM_INSTANCE = {
    'max_atoms': 6,
    'max_edges': 20,
    'max_denominator': 16,
    'zero_weight_prob': 0.15,
}

# Command line
EXIT_CODES = {
    'ok': 0,
    'verification_failed': 1,
    'malformed_input': 2,
}
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

DEFAULT_SEED = 0


def get_seed(default=DEFAULT_SEED):
    """Seed for randomized sweeps; REFINET_SEED overrides the default."""
    raw = os.getenv('REFINET_SEED')
    if raw is None or raw.strip() == '':
        return default
    return int(raw)
