"""Model parameters, derived criticality constants, and the bounded metric.

The model: ``n`` neurons with nonnegative potentials decaying at rate ``mu``;
a neuron with potential ``x`` fires at rate ``gamma * x``, resets to zero, and
bumps ``kappa`` uniformly chosen other neurons by ``rho``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import NonPositiveValue


class Regime(str, Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


@dataclass(frozen=True)
class ModelParams:
    """Immutable parameter set with eagerly computed criticality constants.

    ``theta = kappa * (1 - exp(-rho * gamma / mu))`` is the mean number of
    firings directly triggered by one firing; ``theta_c = kappa * rho * gamma / mu``
    is its small-jump bound. ``theta <= theta_c`` always.
    """

    mu: float
    gamma: float
    kappa: int
    rho: float
    theta: float = field(init=False, repr=False)
    theta_c: float = field(init=False, repr=False)

    def __post_init__(self):
        if not (self.mu > 0 and math.isfinite(self.mu)):
            raise NonPositiveValue(f"mu must be positive and finite, got {self.mu}")
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise NonPositiveValue(f"gamma must be positive and finite, got {self.gamma}")
        if not (self.rho > 0 and math.isfinite(self.rho)):
            raise NonPositiveValue(f"rho must be positive and finite, got {self.rho}")
        if not (isinstance(self.kappa, (int, np.integer)) and self.kappa >= 1):
            raise NonPositiveValue(f"kappa must be an integer >= 1, got {self.kappa}")
        object.__setattr__(self, "kappa", int(self.kappa))
        # expm1 keeps full relative precision for small rho*gamma/mu
        object.__setattr__(self, "theta", self.kappa * -math.expm1(-self.rho * self.gamma / self.mu))
        object.__setattr__(self, "theta_c", self.kappa * self.rho * self.gamma / self.mu)

    def as_dict(self) -> dict:
        return {"mu": self.mu, "gamma": self.gamma, "kappa": self.kappa, "rho": self.rho}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        missing = [k for k in ("mu", "gamma", "kappa", "rho") if k not in d]
        if missing:
            raise NonPositiveValue(f"missing parameter keys: {missing}")
        return cls(mu=float(d["mu"]), gamma=float(d["gamma"]), kappa=int(d["kappa"]), rho=float(d["rho"]))


def reproduction_number(params: ModelParams) -> float:
    return params.theta


def chaos_threshold(params: ModelParams) -> float:
    return params.theta_c


def classify_regime(params: ModelParams, tol: float = 1e-9) -> Regime:
    """Classify by theta against 1 with a symmetric tolerance band."""
    if tol < 0:
        raise NonPositiveValue(f"tol must be >= 0, got {tol}")
    if params.theta < 1.0 - tol:
        return Regime.SUBCRITICAL
    if params.theta > 1.0 + tol:
        return Regime.SUPERCRITICAL
    return Regime.CRITICAL


def omega_distance(x, y, params: ModelParams):
    """Bounded metric ``1 - exp(-(gamma/mu) * |x - y|)``; broadcasts over arrays."""
    d = np.abs(np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64))
    out = -np.expm1(-(params.gamma / params.mu) * d)
    if np.ndim(out) == 0:
        return float(out)
    return out
