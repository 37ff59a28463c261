"""Benchmark parameter sets shipped with the package.

All three share kappa=2, rho=mu=1 and differ only in gamma, so the branching
constant theta = 2*(1 - exp(-gamma)) lands below, at, and above 1.
"""

import math

from .params import ModelParams

SUB = ModelParams(mu=1.0, gamma=0.2, kappa=2, rho=1.0)
CRIT = ModelParams(mu=1.0, gamma=math.log(2.0), kappa=2, rho=1.0)
SUPER = ModelParams(mu=1.0, gamma=1.0, kappa=2, rho=1.0)

BENCHMARKS = {"sub": SUB, "crit": CRIT, "super": SUPER}
