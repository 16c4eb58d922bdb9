"""Closed forms against the truncated-Fock oracle at user-chosen parameter points."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np

from . import charfunc, fock, zeno
from .detector import DetectorParams
from .system import MeasuredSystemSpec

DEFAULT_TOL = 1e-6
VERIFY_CONTROLS = fock.IntegratorControls(rtol=1e-11, atol=1e-16)


@dataclass(frozen=True)
class Check:
    name: str
    analytic: complex
    oracle: complex
    rel_error: float
    tolerance: float
    dimension: Optional[int] = None

    @property
    def passed(self) -> bool:
        return bool(self.rel_error <= self.tolerance)


def rel_error(analytic: complex, oracle: complex) -> float:
    denom = abs(oracle)
    if denom == 0.0:
        return 0.0 if analytic == 0 else float("inf")
    return float(abs(analytic - oracle) / denom)


def _check(name, a, o, tol, dim=None):
    return Check(name, complex(a), complex(o), rel_error(a, o), tol, dim)


def relaxation_checks(det: DetectorParams, nbar0: float, times: Sequence[float], N: Optional[int] = None,
                      tol: float = DEFAULT_TOL, controls=VERIFY_CONTROLS) -> List[Check]:
    """Mean occupation from a thermal ``nbar0`` start versus the exponential law."""
    N = N or max(fock.thermal_tail_dimension(nbar0), fock.thermal_tail_dimension(det.nbar))
    spec = fock.LindbladSpec.detector_only(det, N)
    ops = fock.build_mode_ops(N)
    states = fock.evolve(fock.thermal_state(nbar0, N), spec, times, controls)
    relax = det.gamma_down - det.gamma_up
    out = []
    for t, m in zip(times, states):
        law = det.nbar + (nbar0 - det.nbar) * np.exp(-relax * t)
        out.append(_check(f"relaxation t={t:g}", law, np.trace(ops.number @ m).real, tol, N))
    return out


def decoherence_checks(det: DetectorParams, lam: float, omega_m: float, omega_n: float, times: Sequence[float],
                       xis: Iterable[complex] = (0.0,), N: Optional[int] = None, tol: float = DEFAULT_TOL,
                       controls=VERIFY_CONTROLS) -> List[Check]:
    """``chi_mn(xi; t)`` from the closed-form coefficients versus the sector flow."""
    if N is None:
        N, _ = fock.choose_dimension(det, lam, [omega_m, omega_n], max(times), controls)
    pair = charfunc.LevelPair(0, 1, omega_m, omega_n)
    states = fock.sector_evolution(det, lam, omega_m, omega_n, times, N, controls)
    out = []
    for t, m in zip(times, states):
        coeffs = charfunc.measurement_coeffs(pair, lam, t, det)
        for xi in xis:
            out.append(_check(f"decoherence t={t:g} xi={complex(xi):g}", charfunc.eval_char(coeffs, xi),
                              fock.char_function(m, xi), tol, N))
    return out


def two_time_checks(det: DetectorParams, lam: float, omega_i: float, omega_f: float, pairs, N: Optional[int] = None,
                    tol: float = DEFAULT_TOL, controls=VERIFY_CONTROLS) -> List[Check]:
    """Closed-form ``chi(0, 0; t1, t2)`` versus two composed sector flows."""
    if N is None:
        N, _ = fock.choose_dimension(det, lam, [omega_i, omega_f], max(t1 for t1, _ in pairs), controls)
    out = []
    for t1, t2 in pairs:
        a = zeno.chi_two_time(omega_i, omega_f, t1, t2, lam, det, omega_i - omega_f)
        o = fock.two_time_trace(det, lam, omega_i, omega_f, t1, t2, N, controls)
        out.append(_check(f"two-time t1={t1:g} t2={t2:g}", a, o, tol, N))
    return out


def jump_checks(spec: MeasuredSystemSpec, det: DetectorParams, i_state, f_state, times: Sequence[float],
                N: Optional[int] = None, tol: float = DEFAULT_TOL, q: Optional[zeno.QuadratureControls] = None,
                controls=VERIFY_CONTROLS) -> List[Check]:
    """Triangle quadrature of the closed-form integrand versus the second-order oracle."""
    if N is None:
        N, _ = fock.choose_dimension(det, spec.lam, spec.h0_diagonal(), max(times), controls)
    q = q or zeno.QuadratureControls(rtol=1e-10)
    out = []
    for t in times:
        a = zeno.jump_probability_general(spec, det, i_state, f_state, t, q)
        o = fock.jump_probability_second_order(spec, det, i_state, f_state, t, controls, dim=N)
        out.append(_check(f"jump t={t:g}", a, o, tol, N))
    return out
