"""Detector parameter algebra: thermal occupation, detailed balance, damping.

Natural units throughout (hbar = k_B = 1), so temperatures and rates are
angular frequencies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ParameterError


def nbar_of_temperature(omega: float, T: float, nbar_cap: Optional[float] = None) -> float:
    """Bose-Einstein occupation ``1 / (exp(omega/T) - 1)``.

    ``T = inf`` has no finite answer; the caller must supply ``nbar_cap``.
    """
    if not omega > 0:
        raise ParameterError(f"omega must be positive, got {omega!r}")
    if T < 0 or math.isnan(T):
        raise ParameterError(f"temperature must be nonnegative, got {T!r}")
    if T == 0:
        return 0.0
    if math.isinf(T):
        if nbar_cap is None:
            raise ParameterError("T = inf requires an explicit nbar_cap")
        return float(nbar_cap)
    x = omega / T
    if x > 700.0:
        return math.exp(-x)
    return 1.0 / math.expm1(x)


def gamma_up_from_detailed_balance(gamma_down: float, omega: float, T: float) -> float:
    """Excitation rate fixed by detailed balance, ``gamma_down * exp(-omega/T)``."""
    if gamma_down < 0:
        raise ParameterError(f"gamma_down must be nonnegative, got {gamma_down!r}")
    if not omega > 0:
        raise ParameterError(f"omega must be positive, got {omega!r}")
    if T < 0:
        raise ParameterError(f"temperature must be nonnegative, got {T!r}")
    if T == 0:
        return 0.0
    return gamma_down * math.exp(-omega / T)


def gamma_up_from_nbar(gamma_down: float, nbar: float) -> float:
    # same detailed-balance ratio written through the occupation
    return gamma_down * nbar / (nbar + 1.0)


def gamma_eff(gamma_phase: float, gamma_down: float, gamma_up: float) -> float:
    """Coherence damping rate of the detector, ``(gamma + gamma_down - gamma_up) / 2``."""
    for name, value in (("gamma_phase", gamma_phase), ("gamma_down", gamma_down), ("gamma_up", gamma_up)):
        if value < 0:
            raise ParameterError(f"{name} must be nonnegative, got {value!r}")
    g = 0.5 * (gamma_phase + gamma_down - gamma_up)
    if not g > 0:
        raise ParameterError(
            f"gamma_eff = {g!r} <= 0: the closed-form layer needs a damped detector"
        )
    return g


def thermal_char(xi: complex, nbar: float) -> complex:
    """Normally ordered characteristic function of the thermal state."""
    return complex(np.exp(-abs(xi) ** 2 * nbar))


@dataclass(frozen=True)
class DetectorParams:
    """Oscillator detector. ``nbar`` is canonical; ``gamma_up`` follows from it."""

    omega: float
    gamma_phase: float
    gamma_down: float
    nbar: float

    def __post_init__(self):
        if not self.omega > 0:
            raise ParameterError(f"omega must be positive, got {self.omega!r}")
        for name in ("gamma_phase", "gamma_down", "nbar"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ParameterError(f"{name} must be finite and nonnegative, got {value!r}")
        gamma_eff(self.gamma_phase, self.gamma_down, self.gamma_up)

    @classmethod
    def from_temperature(cls, omega, T, gamma_phase, gamma_down, nbar_cap=None):
        return cls(omega, gamma_phase, gamma_down, nbar_of_temperature(omega, T, nbar_cap))

    @property
    def gamma_up(self) -> float:
        return gamma_up_from_nbar(self.gamma_down, self.nbar)

    @property
    def gamma_eff(self) -> float:
        return gamma_eff(self.gamma_phase, self.gamma_down, self.gamma_up)

    @property
    def relaxation_rate(self) -> float:
        """Energy relaxation rate ``gamma_down - gamma_up``."""
        return self.gamma_down - self.gamma_up
