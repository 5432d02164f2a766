"""
Hypothesis settings tiers shared by the property tests.

Import these instead of writing inline ``@settings(max_examples=...)``.
"""

from hypothesis import HealthCheck, settings

# Zone command sequences against the whole device
STATE_MACHINE_SETTINGS = settings(
    max_examples=100,
    stateful_step_count=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)

# Allocator instances against the exhaustive oracle
STANDARD_SETTINGS = settings(max_examples=200, deadline=None)

# Configuration rejection
QUICK_SETTINGS = settings(max_examples=30, deadline=None)
