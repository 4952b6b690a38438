"""Central numeric tolerances and caps.

Every default threshold used across the package lives here so that runs
can be reproduced from a single record.
"""
from __future__ import annotations

import os
from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    row_sum: float = 1e-9          # stochastic rows of nominal matrices
    simplex: float = 1e-9          # lambda weights
    solve_residual: float = 1e-9   # relative residual of steady-state solves
    feasible_hit: float = 1e-6     # target considered inside the feasible set
    grid_strict: float = 1e-9      # strict-decrease margin of the grid oracle
    grid_invariance: float = 1e-9  # slack on the level in the grid oracle
    milp_eps: float = 1e-6         # strictness margin inside MILP encodings
    policy_cap: int = 4096
    corner_cap: int = 1024


DEFAULT = Tolerances()


def seed_override(seed: int) -> int:
    """Return ``IMDP_PLF_SEED`` when set, otherwise ``seed``."""
    env = os.environ.get("IMDP_PLF_SEED")
    if env is None or env == "":
        return seed
    return int(env)
