"""Price-based demand response for a multi-zone HVAC system.

The pipeline: simulate a six-zone building to produce operating data,
train per-zone temperature networks, replicate the trained networks as
mixed-integer linear constraints, solve the 24-hour scheduling problem
with the built-in branch-and-bound solver, and finally train a
meta-predictor that emits near-optimal schedules directly.
"""

__version__ = "0.1.0"
