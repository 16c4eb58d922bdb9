"""Quantum Zeno effect with an irreversible, thermally damped oscillator detector."""
from ._backend import BACKEND
from .detector import (
    DetectorParams,
    gamma_eff,
    gamma_up_from_detailed_balance,
    nbar_of_temperature,
    thermal_char,
)
from .system import MeasuredSystemSpec

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DetectorParams",
    "MeasuredSystemSpec",
    "gamma_eff",
    "gamma_up_from_detailed_balance",
    "nbar_of_temperature",
    "thermal_char",
]
