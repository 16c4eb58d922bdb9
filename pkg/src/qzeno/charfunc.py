"""Closed-form evolution of the exponential-ansatz characteristic function.

``chi(xi, xi*) = exp(sum_{j,k} C[j,k] xi^j (-xi*)^k)``. Two evolutions are
provided: free detector relaxation, and the measurement-coupled evolution of
a reduced system element ``rho_{m,n}`` from a thermal detector.

The coefficient equations behind both are linear in ``C``. Phase damping
(``gamma_phase > 0``) adds a term quadratic in ``C`` whenever the state is
not phase invariant, so with ``gamma_phase > 0`` these forms are exact only
for phase-invariant states; use ``fock`` to quantify the difference.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from .detector import DetectorParams
from .errors import ParameterError


@dataclass(frozen=True)
class CharCoeffs:
    coeffs: Dict[Tuple[int, int], complex] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for (j, k), v in dict(self.coeffs).items():
            if j < 0 or k < 0:
                raise ParameterError(f"coefficient indices must be nonnegative, got {(j, k)}")
            clean[(int(j), int(k))] = complex(v)
        clean.setdefault((0, 0), 0j)
        object.__setattr__(self, "coeffs", clean)

    @classmethod
    def thermal(cls, nbar: float) -> "CharCoeffs":
        return cls({(1, 1): nbar})

    @classmethod
    def coherent(cls, alpha: complex, nbar: float = 0.0) -> "CharCoeffs":
        """Displaced thermal state ``D(alpha) rho_T D(alpha)^dag``."""
        alpha = complex(alpha)
        return cls({(1, 0): np.conj(alpha), (0, 1): alpha, (1, 1): nbar})

    def __getitem__(self, jk) -> complex:
        return self.coeffs.get(tuple(jk), 0j)

    def items(self):
        return self.coeffs.items()

    def conjugation_defect(self) -> float:
        """max |C[k,j] - conj(C[j,k])|; zero for Hermitian detector states."""
        keys = set(self.coeffs) | {(k, j) for j, k in self.coeffs}
        return max(abs(self[(k, j)] - np.conj(self[(j, k)])) for j, k in keys)


@dataclass(frozen=True)
class LevelPair:
    m: int
    n: int
    omega_m: float
    omega_n: float

    @property
    def omega_mn(self) -> float:
        return self.omega_m - self.omega_n


def eval_char(coeffs: CharCoeffs, xi: complex) -> complex:
    xi = complex(xi)
    mxs = -np.conj(xi)
    total = sum(c * xi ** j * mxs ** k for (j, k), c in coeffs.items())
    return complex(np.exp(total))


def free_coeffs(c0: CharCoeffs, t: float, det: DetectorParams) -> CharCoeffs:
    """Coefficients after free detector evolution for time ``t``."""
    if t < 0:
        raise ParameterError("t must be nonnegative")
    relax = det.gamma_down - det.gamma_up
    out = {}
    for (j, k), c in c0.items():
        if (j, k) == (1, 1):
            decay = np.exp(-relax * t)
            out[(j, k)] = c * decay - det.nbar * np.expm1(-relax * t)
        else:
            d = j - k
            rate = 1j * det.omega * d - 0.5 * det.gamma_phase * d * d - 0.5 * relax * (j + k)
            out[(j, k)] = c * np.exp(rate * t)
    if (1, 1) not in out:
        out[(1, 1)] = -det.nbar * np.expm1(-relax * t)
    return CharCoeffs(out)


def _rates(det: DetectorParams):
    g = det.gamma_eff
    return g - 1j * det.omega, g + 1j * det.omega


def _ramp(z, t):
    """``(1 - exp(-z t)) / z``, accurate for small ``z t``."""
    return -np.expm1(-z * t) / z


def measurement_coeffs(pair: LevelPair, lam: float, t, det: DetectorParams) -> CharCoeffs:
    """C00, C10, C01, C11 of ``rho_{m,n}`` at time ``t``, thermal detector at t = 0."""
    if np.any(np.asarray(t) < 0):
        raise ParameterError("t must be nonnegative")
    zm, zp = _rates(det)
    nb = det.nbar
    wm, wn, wmn = pair.omega_m, pair.omega_n, pair.omega_mn
    a = wn - wmn * nb
    b = wm + wmn * nb
    c10 = 1j * lam * a / zm * (-np.expm1(-zm * t))
    c01 = -1j * lam * b / zp * (-np.expm1(-zp * t))
    c00 = (
        -1j * wmn * t
        + lam ** 2 * wmn * a / zm * (t - _ramp(zm, t))
        - lam ** 2 * wmn * b / zp * (t - _ramp(zp, t))
    )
    return CharCoeffs({(0, 0): c00, (1, 0): c10, (0, 1): c01, (1, 1): nb})


def c00_measurement(pair: LevelPair, lam: float, t, det: DetectorParams):
    """Vectorized C00 of ``measurement_coeffs`` over an array of times."""
    t = np.asarray(t, dtype=float)
    zm, zp = _rates(det)
    nb = det.nbar
    wm, wn, wmn = pair.omega_m, pair.omega_n, pair.omega_mn
    return (
        -1j * wmn * t
        + lam ** 2 * wmn * (wn - wmn * nb) / zm * (t - _ramp(zm, t))
        - lam ** 2 * wmn * (wm + wmn * nb) / zp * (t - _ramp(zp, t))
    )


def offdiag_suppression(pair: LevelPair, lam: float, t, det: DetectorParams):
    """``|chi_mn(0,0;t) / chi_mn(0,0;0)| = exp(Re C00(t))``."""
    if pair.m == pair.n:
        raise ParameterError("offdiag_suppression needs m != n")
    return np.exp(np.real(c00_measurement(pair, lam, t, det)))


def decoherence_rate(pair: LevelPair, lam: float, det: DetectorParams) -> float:
    """Long-time decay rate of ``|chi_mn(0,0;t)|``:
    ``lam^2 omega_mn^2 (1 + 2 nbar) gamma_eff / (gamma_eff^2 + Omega^2)``."""
    g = det.gamma_eff
    return lam ** 2 * pair.omega_mn ** 2 * (1 + 2 * det.nbar) * g / (g ** 2 + det.omega ** 2)
