"""Jump probabilities of a continuously measured system.

Second order in the perturbation V, with the detector treated exactly
through its characteristic function. Natural units (hbar = 1), so the
``1/hbar^2`` and ``2 pi t / hbar^2`` prefactors are numerically 1 and 2 pi t.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import integrate, optimize

from . import _backend
from .detector import DetectorParams
from .errors import GateError, ParameterError, QuadratureBudgetError, SpectralOverlapError
from .system import MeasuredSystemSpec

FAST_GATE = 0.1


@dataclass(frozen=True)
class QuadratureControls:
    rtol: float = 1e-8
    limit: int = 200
    omega_points: int = 400

    def __post_init__(self):
        if not 0 < self.rtol < 1:
            raise ParameterError("rtol must lie in (0, 1)")
        if self.limit < 1 or self.omega_points < 3:
            raise ParameterError("limit must be >= 1 and omega_points >= 3")


def _quad(f, a, b, q: QuadratureControls, what: str, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            return integrate.quad(f, a, b, epsrel=q.rtol, epsabs=0.0, limit=q.limit, **kw)
        except integrate.IntegrationWarning as exc:
            raise QuadratureBudgetError(f"{what}: {exc}") from None


# --- two-time characteristic function ---------------------------------------

def _chi_sector(omega_m, omega_n, omega_k, phase_freq, t1, t2, lam, det):
    """``Tr{S_mn(t1 - t2) S_kk(t2) rho_T}`` for a thermal detector.

    The S_kk stretch leaves a displaced detector whose first-order
    coefficients feed the memory terms of the second stretch.
    """
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    tau = t1 - t2
    g = det.gamma_eff
    zm, zp = g - 1j * det.omega, g + 1j * det.omega
    nb = det.nbar
    wmn = omega_m - omega_n
    a = omega_n - wmn * nb
    b = omega_m + wmn * nb
    em_tau, ep_tau = np.expm1(-zm * tau), np.expm1(-zp * tau)
    em_t2, ep_t2 = np.expm1(-zm * t2), np.expm1(-zp * t2)
    expo = (
        -1j * phase_freq * tau
        + lam ** 2 * wmn * a / zm * (tau + em_tau / zm)
        - lam ** 2 * wmn * b / zp * (tau + ep_tau / zp)
        + lam ** 2 * wmn * omega_k / zm ** 2 * em_t2 * em_tau
        - lam ** 2 * wmn * omega_k / zp ** 2 * ep_t2 * ep_tau
    )
    return np.exp(expo)


def chi_two_time(omega_i: float, omega_f: float, t1, t2, lam: float, det: DetectorParams,
                 omega_iafa1: float):
    """``chi_{i alpha, f alpha1}(0, 0; t1, t2)``: detector trace of the (i, f)
    sector after ``t2`` in level i and ``t1 - t2`` in the coherence."""
    if np.any(np.asarray(t2) < 0) or np.any(np.asarray(t1) < np.asarray(t2)):
        raise ParameterError("need 0 <= t2 <= t1")
    return _chi_sector(omega_i, omega_f, omega_i, omega_iafa1, t1, t2, lam, det)


def chi_two_time_reverse(omega_i: float, omega_f: float, t1, t2, lam: float, det: DetectorParams,
                         omega_iafa1: float):
    """The (f, i) counterpart, still starting from level i."""
    if np.any(np.asarray(t2) < 0) or np.any(np.asarray(t1) < np.asarray(t2)):
        raise ParameterError("need 0 <= t2 <= t1")
    return _chi_sector(omega_f, omega_i, omega_i, -omega_iafa1, t1, t2, lam, det)


def _levels(spec: MeasuredSystemSpec, i_state, f_state):
    i_state, f_state = tuple(i_state), tuple(f_state)
    spec.index(i_state)
    spec.index(f_state)
    if i_state[0] == f_state[0]:
        raise ParameterError("initial and final states must belong to different H0 levels")
    return spec.omega(i_state), spec.omega(f_state), spec.transition_frequency(i_state, f_state), \
        abs(spec.v(i_state, f_state)) ** 2


def jump_probability_general(spec: MeasuredSystemSpec, det: DetectorParams, i_state, f_state, t: float,
                             q: Optional[QuadratureControls] = None, full_output: bool = False):
    """Jump probability by adaptive quadrature over ``0 <= t2 <= t1 <= t``.

    Outer adaptive rule in t1, inner in t2, tolerance split between them. No
    reduction to one dimension: with Omega > 0 the integrand depends on t2,
    not only on t1 - t2.
    """
    if not t > 0:
        raise ParameterError("t must be positive")
    q = q or QuadratureControls()
    wi, wf, wtr, v2 = _levels(spec, i_state, f_state)
    if v2 == 0:
        return (0.0, {"imag_residue": 0.0, "error": 0.0}) if full_output else 0.0
    lam = spec.lam

    def integrand(t1, t2):
        s = (chi_two_time(wi, wf, t1, t2, lam, det, wtr)
             + chi_two_time_reverse(wi, wf, t1, t2, lam, det, wtr))
        return np.array([s.real, s.imag])

    budget = {"inner_evaluations": 0}

    def inner(t1):
        if t1 == 0:
            return np.zeros(2)
        res, err, info = integrate.quad_vec(lambda s: integrand(t1, s), 0.0, t1, epsrel=0.1 * q.rtol,
                                            epsabs=1e-300, limit=q.limit, norm="max", full_output=True)
        budget["inner_evaluations"] += info.neval
        if info.status == 1:
            raise QuadratureBudgetError(f"inner t2 quadrature at t1={t1:.6g} exceeded {q.limit} subdivisions")
        return res

    res, err, info = integrate.quad_vec(inner, 0.0, t, epsrel=0.5 * q.rtol, epsabs=1e-300, limit=q.limit,
                                        norm="max", full_output=True)
    if info.status == 1:
        raise QuadratureBudgetError(f"outer t1 quadrature exceeded {q.limit} subdivisions")
    value = v2 * float(res[0])
    if not full_output:
        return value
    return value, {"imag_residue": v2 * float(res[1]), "error": v2 * float(err),
                   "outer_evaluations": info.neval, **budget}


# --- fast-dissipation reduction ------------------------------------------------

def envelope_exponent(u, kappa: float, gamma_eff: float):
    """``kappa (u + (exp(-gamma_eff u) - 1) / gamma_eff)``."""
    u = np.asarray(u, dtype=float)
    return kappa * (u + np.expm1(-gamma_eff * u) / gamma_eff)


def measurement_kappa(lam: float, omega_if: float, det: DetectorParams) -> float:
    """``(1 + 2 nbar) lam^2 omega_if^2 / gamma_eff``."""
    return (1 + 2 * det.nbar) * lam ** 2 * omega_if ** 2 / det.gamma_eff


def _check_gate(det: DetectorParams, gate: float):
    if det.omega > gate * det.gamma_eff:
        raise GateError(
            f"fast-dissipation path needs Omega <= {gate} gamma_eff "
            f"(Omega={det.omega:.6g}, gamma_eff={det.gamma_eff:.6g}); use jump_probability_general"
        )


def jump_probability_fast_dissipation(spec: MeasuredSystemSpec, det: DetectorParams, i_state, f_state, t: float,
                                      q: Optional[QuadratureControls] = None, gate: float = FAST_GATE):
    if not t > 0:
        raise ParameterError("t must be positive")
    _check_gate(det, gate)
    q = q or QuadratureControls()
    wi, wf, wtr, v2 = _levels(spec, i_state, f_state)
    if v2 == 0:
        return 0.0
    kappa = measurement_kappa(spec.lam, wi - wf, det)
    g = det.gamma_eff
    detuning = -wtr  # omega_{f alpha1, i alpha}

    def f(u):
        return (1 - u / t) * math.cos(detuning * u) * math.exp(-envelope_exponent(u, kappa, g))

    val, _ = _quad(f, 0.0, t, q, "fast-dissipation jump integral")
    return 2 * t * v2 * val


# --- line shape ------------------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
MAX_U_NODES = 400_000


def _u_nodes(t, kappa, g, delta_max):
    """Composite Gauss-Legendre nodes on [0, u_end], u_end cutting off where
    the envelope has underflowed."""
    u_end = t
    if kappa > 0 and envelope_exponent(t, kappa, g) > 800:
        u_end = optimize.brentq(lambda u: envelope_exponent(u, kappa, g) - 800, 0.0, t)
    sigma = math.sqrt(kappa * g)
    scales = [u_end, 2.0 / g]
    if delta_max > 0:
        scales.append(4.0 / delta_max)
    if sigma > 0:
        scales.append(1.0 / sigma)
    if kappa > 0:
        scales.append(2.0 / kappa)
    panels = max(1, math.ceil(u_end / min(scales)))
    if panels * len(_GL_X) > MAX_U_NODES:
        raise QuadratureBudgetError(f"line-shape quadrature needs {panels} panels; reduce the frequency span")
    edges = np.linspace(0.0, u_end, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    u = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    return u, w


def line_shape_values(omega, omega_if: float, kappa: float, gamma_eff: float, t: float):
    """``P(omega) = (1/pi) Re int_0^t (1 - u/t) e^{i(omega - omega_if)u} e^{-phi(u)} du``."""
    delta = np.ascontiguousarray(np.atleast_1d(np.asarray(omega, dtype=float)) - omega_if)
    u, w = _u_nodes(t, kappa, gamma_eff, float(np.max(np.abs(delta), initial=0.0)))
    wh = np.ascontiguousarray(w * (1 - u / t) * np.exp(-envelope_exponent(u, kappa, gamma_eff)))
    return _backend.cosine_transform(np.ascontiguousarray(u), wh, delta) / math.pi


@dataclass
class LineShape:
    omega_grid: np.ndarray
    p_values: np.ndarray
    t: float
    metadata: dict = field(default_factory=dict)

    def mass(self) -> float:
        return float(np.trapezoid(self.p_values, self.omega_grid))

    def at(self, omega):
        """Exact P at arbitrary frequencies (not interpolated)."""
        m = self.metadata
        return line_shape_values(omega, m["omega_if"], m["kappa"], m["gamma_eff"], self.t)


def _support(t, kappa, g, level=40.0):
    # u beyond which the envelope is below exp(-level)
    if kappa == 0 or envelope_exponent(t, kappa, g) <= level:
        return t
    return optimize.brentq(lambda u: envelope_exponent(u, kappa, g) - level, 0.0, t)


def _auto_grid_line(omega_if, kappa, g, t, sigma, q, target=0.999, max_doublings=12):
    # P has no structure finer than 1 / (support of the u-integrand)
    width = max(1.0 / t, min(sigma, kappa))
    h = min(width / 8.0, 0.25 / _support(t, kappa, g))
    half = max(6.0 * sigma, 20.0 / t)
    k_max = max(math.ceil(half / h), (q.omega_points - 1) // 2)
    ks = np.arange(-k_max, k_max + 1)
    vals = line_shape_values(omega_if + ks * h, omega_if, kappa, g, t)
    warning = None
    for _ in range(max_doublings):
        mass = float(np.trapezoid(vals, dx=h))
        if mass >= target:
            break
        new_k = np.arange(k_max + 1, 2 * k_max + 1)
        right = line_shape_values(omega_if + new_k * h, omega_if, kappa, g, t)
        left = line_shape_values(omega_if - new_k[::-1] * h, omega_if, kappa, g, t)
        vals = np.concatenate([left, vals, right])
        k_max *= 2
    else:
        warning = f"captured mass {float(np.trapezoid(vals, dx=h)):.6f} < {target} after {max_doublings} widenings"
    ks = np.arange(-k_max, k_max + 1)
    return omega_if + ks * h, vals, warning


def line_shape(omega_i: float, omega_f: float, det: DetectorParams, lam: float, t: float,
               omega_grid=None, q: Optional[QuadratureControls] = None, gate: float = FAST_GATE) -> LineShape:
    """Measurement-modified line shape on ``omega_grid`` (auto-sized when None)."""
    if not t > 0:
        raise ParameterError("t must be positive")
    _check_gate(det, gate)
    q = q or QuadratureControls()
    omega_if = omega_i - omega_f
    g = det.gamma_eff
    kappa = measurement_kappa(lam, omega_if, det)
    sigma = math.sqrt(kappa * g)
    warning = None
    if omega_grid is None:
        grid, vals, warning = _auto_grid_line(omega_if, kappa, g, t, sigma, q)
    else:
        grid = np.asarray(omega_grid, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
            raise ParameterError("omega_grid must be strictly increasing with at least two points")
        vals = line_shape_values(grid, omega_if, kappa, g, t)
    mass = float(np.trapezoid(vals, grid))
    if omega_grid is not None and mass < 0.99:
        warning = f"grid captures only {mass:.6f} of the line-shape mass"
    meta = {
        "lam": lam, "gamma_eff": g, "nbar": det.nbar, "omega_if": omega_if, "kappa": kappa,
        "sigma": sigma, "captured_mass": mass, "min_p": float(vals.min()),
        "negative_flag": bool(vals.min() < -1e-3), "grid_warning": warning,
        "auto_grid": omega_grid is None,
    }
    return LineShape(grid, vals, float(t), meta)


# --- spectral convolution ------------------------------------------------------

@dataclass(frozen=True)
class SpectralDensity:
    """Reservoir spectrum: discrete lines ``(omega_k, |V_k|^2)`` or samples on a grid."""

    frequencies: np.ndarray
    values: np.ndarray
    discrete: bool

    def __post_init__(self):
        f = np.atleast_1d(np.asarray(self.frequencies, dtype=float))
        v = np.atleast_1d(np.asarray(self.values, dtype=float))
        if f.shape != v.shape:
            raise ParameterError("frequencies and values must have equal length")
        if np.any(v < 0):
            raise ParameterError("spectral weights must be nonnegative")
        if not self.discrete and (f.size < 2 or np.any(np.diff(f) <= 0)):
            raise ParameterError("sampled spectral grid must be strictly increasing")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "values", v)

    @classmethod
    def lines(cls, frequencies, weights):
        return cls(frequencies, weights, True)

    @classmethod
    def sampled(cls, grid, values):
        return cls(grid, values, False)

    @classmethod
    def from_system(cls, spec: MeasuredSystemSpec, i_state, f_alpha_states):
        """Discrete lines at ``E1(f, alpha1) - E1(i, alpha)`` with weights ``|V|^2``."""
        freqs = [spec.sublevel_energy(f) - spec.sublevel_energy(i_state) for f in f_alpha_states]
        weights = [abs(spec.v(i_state, f)) ** 2 for f in f_alpha_states]
        return cls(freqs, weights, True)


def convolve_spectrum(G: SpectralDensity, line: LineShape, t: Optional[float] = None,
                      full_output: bool = False):
    """``W = 2 pi t int G(omega) P(omega) d omega``."""
    t = line.t if t is None else t
    if G.discrete:
        p = line.at(G.frequencies)
        value = 2 * math.pi * t * float(np.sum(G.values * p))
        info = {"captured_mass": None}
    else:
        grid = G.frequencies
        p = line.at(grid)
        prod = G.values * p
        captured = float(np.trapezoid(p, grid))
        peak = float(np.max(np.abs(prod), initial=0.0))
        if peak == 0.0:
            raise SpectralOverlapError(f"G and P do not overlap (captured line mass {captured:.3e})")
        edge = max(abs(prod[0]), abs(prod[-1]))
        if edge > 1e-3 * peak:
            raise SpectralOverlapError(
                f"G * P is still {edge / peak:.3e} of its peak at the grid edge "
                f"(captured line mass {captured:.6f}); extend the G grid"
            )
        value = 2 * math.pi * t * float(np.trapezoid(prod, grid))
        info = {"captured_mass": captured}
    return (value, info) if full_output else value


# --- asymptotic rate ------------------------------------------------------------

def asymptotic_rate(spec: MeasuredSystemSpec, det: DetectorParams, i_state, f_state, full_output: bool = False):
    """Large-coupling jump rate ``2|V|^2 / (lam |omega_if|) sqrt(pi / (2 (1 + 2 nbar)))``."""
    wi, wf, wtr, v2 = _levels(spec, i_state, f_state)
    w_if = wi - wf
    if w_if == 0:
        raise ParameterError("asymptotic rate is singular for degenerate H0 levels (omega_if = 0)")
    if spec.lam == 0:
        raise ParameterError("asymptotic rate needs lambda > 0")
    rate = 2 * v2 / (spec.lam * abs(w_if)) * math.sqrt(math.pi / (2 * (1 + 2 * det.nbar)))
    if not full_output:
        return rate
    strength = spec.lam * abs(w_if)
    audit = {
        "lambda_omega_over_gamma_eff": strength / det.gamma_eff,
        "lambda_omega_over_detuning": math.inf if wtr == 0 else strength / abs(wtr),
    }
    audit["valid"] = audit["lambda_omega_over_gamma_eff"] >= 10 and audit["lambda_omega_over_detuning"] >= 10
    return rate, audit


def kernel_rate(spec: MeasuredSystemSpec, det: DetectorParams, i_state, f_state, kernel: str = "gaussian",
                q: Optional[QuadratureControls] = None) -> float:
    """``2|V|^2 Re int_0^inf e^{i omega_{f a1, i a} u} K(u) du`` by quadrature.

    ``kernel="gaussian"``: ``K = exp(-(1 + 2 nbar) lam^2 omega_if^2 u^2 / 2)``
    (short-time expansion); ``kernel="fast"``: the full fast-dissipation envelope.
    """
    q = q or QuadratureControls()
    wi, wf, wtr, v2 = _levels(spec, i_state, f_state)
    kappa = measurement_kappa(spec.lam, wi - wf, det)
    g = det.gamma_eff
    detuning = -wtr
    if kernel == "gaussian":
        s2 = kappa * g

        def env(u):
            return math.exp(-0.5 * s2 * u * u)
    elif kernel == "fast":
        def env(u):
            return math.exp(-float(envelope_exponent(u, kappa, g)))
    else:
        raise ParameterError(f"unknown kernel {kernel!r}")
    val, _ = _quad(lambda u: math.cos(detuning * u) * env(u), 0.0, math.inf, q, f"{kernel} kernel rate")
    return 2 * v2 * val


def rate_temperature_scan(spec: MeasuredSystemSpec, det: DetectorParams, i_state, f_state, nbar_list):
    """Rows ``(nbar, R, R lam sqrt(1 + 2 nbar))``."""
    if len(nbar_list) == 0:
        raise ParameterError("nbar_list must be nonempty")
    rows = []
    for nb in nbar_list:
        r = asymptotic_rate(spec, replace(det, nbar=float(nb)), i_state, f_state)
        rows.append((float(nb), r, r * spec.lam * math.sqrt(1 + 2 * nb)))
    return np.array(rows)


def rate_lambda_scan(spec: MeasuredSystemSpec, det: DetectorParams, i_state, f_state, lambda_list):
    """Rows ``(lam, R, R lam sqrt(1 + 2 nbar))``."""
    if len(lambda_list) == 0:
        raise ParameterError("lambda_list must be nonempty")
    rows = []
    for lam in lambda_list:
        r = asymptotic_rate(replace(spec, lam=float(lam)), det, i_state, f_state)
        rows.append((float(lam), r, r * lam * math.sqrt(1 + 2 * det.nbar)))
    return np.array(rows)
