"""Brute-force reference: truncated-Fock Lindblad integration of the detector.

Everything here is independent of the closed forms in ``charfunc`` and
``zeno``; the two layers only meet in tests and in ``verification``.

States are dense matrices on ``system (x) detector`` with the detector
index running fastest, so a matrix of side ``S*N`` reshapes to
``rho[a, j, b, k]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from . import _backend
from .detector import DetectorParams
from .errors import IntegrationError, ParameterError, TruncationError
from .system import MeasuredSystemSpec

THERMAL_TAIL_TOL = 1e-10
AUDIT_TOP_LEVELS = 4
AUDIT_TOL = 1e-8
DIRECT_TAIL_TOL = 1e-6
TRACE_DRIFT_TOL = 1e-8


@dataclass(frozen=True)
class ModeOperators:
    annihilate: np.ndarray
    create: np.ndarray
    number: np.ndarray
    coordinate: np.ndarray

    @property
    def dim(self) -> int:
        return self.annihilate.shape[0]


def build_mode_ops(N: int) -> ModeOperators:
    """Ladder operators on the first ``N`` Fock levels."""
    if int(N) != N or N < 2:
        raise ParameterError(f"Fock dimension must be an integer >= 2, got {N!r}")
    N = int(N)
    b = np.diag(np.sqrt(np.arange(1, N, dtype=float)), 1).astype(complex)
    bd = b.conj().T.copy()
    return ModeOperators(b, bd, bd @ b, b + bd)


@dataclass
class FockDensityMatrix:
    data: np.ndarray
    dim_detector: int
    dim_system: int = 1

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        side = self.dim_system * self.dim_detector
        if self.data.shape != (side, side):
            raise ParameterError(
                f"data has shape {self.data.shape}, expected {(side, side)} "
                f"for dim_system={self.dim_system}, dim_detector={self.dim_detector}"
            )

    def trace(self) -> complex:
        return complex(np.trace(self.data))

    def as_tensor(self) -> np.ndarray:
        S, N = self.dim_system, self.dim_detector
        return self.data.reshape(S, N, S, N)

    def block(self, a: int, b: int) -> np.ndarray:
        """Detector operator ``<a| rho |b>`` for system indices a, b."""
        return self.as_tensor()[a, :, b, :].copy()

    def detector_reduced(self) -> np.ndarray:
        return np.einsum("ajak->jk", self.as_tensor())

    def fock_populations(self) -> np.ndarray:
        return np.real(np.einsum("ajaj->j", self.as_tensor()))

    def expect(self, op: np.ndarray) -> complex:
        return complex(np.trace(self.data @ op))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.data - self.data.conj().T)))


def thermal_tail_dimension(nbar: float, tol: float = THERMAL_TAIL_TOL) -> int:
    """Smallest N whose discarded thermal population is below ``tol``."""
    if nbar <= 0:
        return 2
    r = nbar / (nbar + 1.0)
    return max(2, math.ceil(math.log(tol) / math.log(r)))


def thermal_state(nbar: float, N: int) -> FockDensityMatrix:
    """Thermal detector state, renormalized on the truncated space."""
    if nbar < 0:
        raise ParameterError(f"nbar must be nonnegative, got {nbar!r}")
    build_mode_ops(N)  # validates N
    if nbar == 0:
        p = np.zeros(N)
        p[0] = 1.0
    else:
        r = nbar / (nbar + 1.0)
        tail = r ** N
        if tail >= THERMAL_TAIL_TOL:
            need = thermal_tail_dimension(nbar)
            raise TruncationError(
                f"thermal state with nbar={nbar} loses {tail:.3e} of its mass at N={N}; "
                f"need N >= {need}",
                required_dim=need,
            )
        p = r ** np.arange(N)
        p /= p.sum()
    return FockDensityMatrix(np.diag(p).astype(complex), N)


def product_state(system_dim: int, index: int, detector: FockDensityMatrix) -> FockDensityMatrix:
    """``|index><index| (x) rho_D``."""
    proj = np.zeros((system_dim, system_dim), dtype=complex)
    proj[index, index] = 1.0
    return FockDensityMatrix(np.kron(proj, detector.data), detector.dim_detector, system_dim)


@dataclass(frozen=True)
class LindbladSpec:
    """Generator ``d rho/dt = -i (H_L rho - rho H_R) + dissipators``.

    ``H_L = system_left (x) 1 + omega 1 (x) n + diag(coupling_left) (x) q``,
    likewise ``H_R``. When the right-hand pieces are omitted the flow is an
    ordinary Lindblad equation; otherwise it is the evolution of one system
    sector ``rho_{m,n}`` (left and right system labels differ).
    """

    dim_detector: int
    omega: float
    gamma_phase: float
    gamma_up: float
    gamma_down: float
    system_left: np.ndarray
    coupling_left: np.ndarray
    system_right: Optional[np.ndarray] = None
    coupling_right: Optional[np.ndarray] = None

    def __post_init__(self):
        build_mode_ops(self.dim_detector)
        sl = np.ascontiguousarray(np.atleast_2d(np.asarray(self.system_left, dtype=complex)))
        cl = np.ascontiguousarray(np.atleast_1d(np.asarray(self.coupling_left, dtype=float)))
        object.__setattr__(self, "system_left", sl)
        object.__setattr__(self, "coupling_left", cl)
        if sl.shape != (cl.shape[0], cl.shape[0]):
            raise ParameterError("system_left and coupling_left disagree on the system dimension")
        for name in ("gamma_phase", "gamma_up", "gamma_down"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be nonnegative")
        if (self.system_right is None) != (self.coupling_right is None):
            raise ParameterError("give both system_right and coupling_right, or neither")
        if self.system_right is None:
            if np.max(np.abs(sl - sl.conj().T), initial=0.0) > 1e-12:
                raise ParameterError("hamiltonian is not Hermitian to 1e-12")
        else:
            sr = np.ascontiguousarray(np.atleast_2d(np.asarray(self.system_right, dtype=complex)))
            cr = np.ascontiguousarray(np.atleast_1d(np.asarray(self.coupling_right, dtype=float)))
            if sr.shape != sl.shape or cr.shape != cl.shape:
                raise ParameterError("left and right generators disagree in shape")
            object.__setattr__(self, "system_right", sr)
            object.__setattr__(self, "coupling_right", cr)

    @classmethod
    def detector_only(cls, det: DetectorParams, N: int) -> "LindbladSpec":
        return cls(N, det.omega, det.gamma_phase, det.gamma_up, det.gamma_down, [[0.0]], [0.0])

    @classmethod
    def coupled(cls, system: MeasuredSystemSpec, det: DetectorParams, N: int, include_v=True):
        """Full ``H_S + H_D + lam q H0`` on system (x) detector."""
        return cls(
            N, det.omega, det.gamma_phase, det.gamma_up, det.gamma_down,
            system.hamiltonian(include_v=include_v), system.lam * system.h0_diagonal(),
        )

    @classmethod
    def sector(cls, det: DetectorParams, N: int, lam: float, omega_m: float, omega_n: float,
               energy_m: Optional[float] = None, energy_n: Optional[float] = None):
        """Flow of the detector operator ``rho_{m,n}`` with V = 0.

        ``energy_*`` default to ``omega_*``; pass the full ``H0 + H1`` energies
        when sublevels shift the phase.
        """
        em = omega_m if energy_m is None else energy_m
        en = omega_n if energy_n is None else energy_n
        return cls(
            N, det.omega, det.gamma_phase, det.gamma_up, det.gamma_down,
            [[em]], [lam * omega_m], [[en]], [lam * omega_n],
        )

    @property
    def dim_system(self) -> int:
        return self.system_left.shape[0]

    @property
    def hermitian_flow(self) -> bool:
        return self.system_right is None

    def _right(self):
        if self.system_right is None:
            return self.system_left, self.coupling_left
        return self.system_right, self.coupling_right

    def _dense(self, system, coupling):
        ops = build_mode_ops(self.dim_detector)
        eye_d = np.eye(self.dim_detector)
        return (
            np.kron(system, eye_d)
            + self.omega * np.kron(np.eye(self.dim_system), ops.number)
            + np.kron(np.diag(coupling), ops.coordinate)
        )

    @property
    def hamiltonian(self) -> np.ndarray:
        return self._dense(self.system_left, self.coupling_left)

    @property
    def hamiltonian_right(self) -> np.ndarray:
        return self._dense(*self._right())

    def kernel_args(self):
        sr, cr = self._right()
        return (self.system_left, sr, float(self.omega), self.coupling_left, cr,
                float(self.gamma_phase), float(self.gamma_up), float(self.gamma_down))


@dataclass(frozen=True)
class IntegratorControls:
    """Adaptive 8th-order Dormand-Prince (DOP853) on the complex state."""

    rtol: float = 1e-10
    atol: float = 1e-12
    max_step: float = math.inf

    def __post_init__(self):
        for name in ("rtol", "atol"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ParameterError(f"{name} must lie in (0, 1), got {v!r}")
        if not self.max_step > 0:
            raise ParameterError("max_step must be positive")


def lindblad_rhs(rho, spec: LindbladSpec) -> np.ndarray:
    """Dense matrix-product form of the generator (reference implementation).

    The ``(n + 1)`` of the excitation channel is realized as ``b b^dag`` so that
    the truncated generator stays trace-preserving.
    """
    data = rho.data if isinstance(rho, FockDensityMatrix) else np.asarray(rho, dtype=complex)
    side = spec.dim_system * spec.dim_detector
    if data.shape != (side, side):
        raise ParameterError(f"state shape {data.shape} does not match generator side {side}")
    ops = build_mode_ops(spec.dim_detector)
    eye_s = np.eye(spec.dim_system)
    b = np.kron(eye_s, ops.annihilate)
    bd = np.kron(eye_s, ops.create)
    n = np.kron(eye_s, ops.number)
    bbd = b @ bd
    hl, hr = spec.hamiltonian, spec.hamiltonian_right
    out = -1j * (hl @ data - data @ hr)
    out += 0.5 * spec.gamma_phase * (2 * n @ data @ n - n @ n @ data - data @ n @ n)
    out += 0.5 * spec.gamma_up * (2 * bd @ data @ b - bbd @ data - data @ bbd)
    out += 0.5 * spec.gamma_down * (2 * b @ data @ bd - n @ data - data @ n)
    return out


def structured_rhs(rho, spec: LindbladSpec, backend=None) -> np.ndarray:
    """Same generator evaluated by the ladder-structured kernel."""
    kern = (backend or _backend.active).lindblad_rhs
    S, N = spec.dim_system, spec.dim_detector
    data = np.ascontiguousarray(rho.data if isinstance(rho, FockDensityMatrix) else rho, dtype=complex)
    return kern(data.reshape(S, N, S, N), *spec.kernel_args()).reshape(S * N, S * N)


def _integrate(fun, y0, times, controls: IntegratorControls, post_step=None):
    """Step DOP853 over ``[0, max(times)]``; return states at ``times``.

    ``post_step(t, y)`` may return a replacement state (used for
    Hermitian projection) and may raise to abort.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ParameterError("propagation times must be nonnegative")
    order = np.argsort(times, kind="stable")
    out = [None] * len(times)
    y0 = np.array(y0, dtype=complex)
    pending = list(order)
    while pending and times[pending[0]] == 0.0:
        out[pending.pop(0)] = y0.copy()
    if not pending:
        return out
    t_end = float(times[order[-1]])
    solver = integrate.DOP853(fun, 0.0, y0, t_end, rtol=controls.rtol, atol=controls.atol,
                              max_step=controls.max_step)
    while pending:
        solver.step()
        if solver.status == "failed":
            raise IntegrationError(
                f"integration failed at t={solver.t:.6g} of {t_end:.6g} (step size underflow)",
                t_reached=solver.t,
            )
        interp = None
        while pending and times[pending[0]] < solver.t:
            if interp is None:
                interp = solver.dense_output()
            idx = pending.pop(0)
            out[idx] = interp(times[idx])
        if post_step is not None:
            replaced = post_step(solver.t, solver.y)
            if replaced is not None:
                solver.y = replaced
        while pending and times[pending[0]] == solver.t:
            out[pending.pop(0)] = solver.y.copy()
        if solver.status == "finished" and pending:
            for idx in pending:
                out[idx] = solver.y.copy()
            pending = []
    return out


def _hermitize(side):
    def project(t, y):
        m = y.reshape(side, side)
        return (0.5 * (m + m.conj().T)).reshape(-1)
    return project


def evolve(rho0, spec: LindbladSpec, times: Sequence[float], controls: Optional[IntegratorControls] = None,
           monitor: Optional[Callable[[float, np.ndarray], None]] = None, hermitian: Optional[bool] = None):
    """States at each of ``times``. Accepts a FockDensityMatrix or a raw operator.

    ``hermitian`` defaults to ``spec.hermitian_flow``; when set, the state is
    replaced by ``(rho + rho^dag)/2`` after each accepted step.
    ``monitor(t, matrix)`` is called after each accepted step.
    """
    controls = controls or IntegratorControls()
    data = rho0.data if isinstance(rho0, FockDensityMatrix) else np.asarray(rho0, dtype=complex)
    S, N = spec.dim_system, spec.dim_detector
    side = S * N
    if data.shape != (side, side):
        raise ParameterError(f"state shape {data.shape} does not match generator side {side}")
    if hermitian is None:
        hermitian = spec.hermitian_flow
    args = spec.kernel_args()
    kern = _backend.active.lindblad_rhs
    shape4 = (S, N, S, N)

    def fun(t, y):
        return kern(y.reshape(shape4), *args).reshape(-1)

    project = _hermitize(side) if hermitian else None

    def post(t, y):
        y2 = project(t, y) if project else None
        if monitor is not None:
            monitor(t, (y2 if y2 is not None else y).reshape(side, side))
        return y2

    states = _integrate(fun, data.reshape(-1), times, controls, post)
    mats = [s.reshape(side, side) for s in states]
    if spec.hermitian_flow:
        tr0 = np.trace(data)
        for t, m in zip(times, mats):
            drift = abs(np.trace(m) - tr0)
            if drift > TRACE_DRIFT_TOL:
                raise IntegrationError(f"trace drifted by {drift:.3e} at t={t:.6g}; tighten tolerances",
                                       t_reached=t)
    return mats


def propagate(rho0: FockDensityMatrix, spec: LindbladSpec, t: float,
              controls: Optional[IntegratorControls] = None) -> FockDensityMatrix:
    if t < 0:
        raise ParameterError("t must be nonnegative")
    if t == 0:
        return FockDensityMatrix(rho0.data.copy(), rho0.dim_detector, rho0.dim_system)
    (m,) = evolve(rho0, spec, [t], controls)
    return FockDensityMatrix(m, spec.dim_detector, spec.dim_system)


def char_function(rho, xi: complex, tol: float = 1e-14) -> complex:
    """``Tr{rho exp(xi b^dag) exp(-xi^* b)}`` by summing both exponential series."""
    data = rho.detector_reduced() if isinstance(rho, FockDensityMatrix) else np.asarray(rho, dtype=complex)
    N = data.shape[0]
    xi = complex(xi)
    if abs(xi) ** 2 * N > 400.0:
        raise ParameterError(
            f"|xi|^2 N = {abs(xi) ** 2 * N:.1f} is too large for double-precision series; "
            "use a smaller |xi| or a higher-precision evaluation"
        )
    ops = build_mode_ops(N)

    def series(gen):
        total = np.eye(N, dtype=complex)
        term = np.eye(N, dtype=complex)
        for k in range(1, N + 1):
            term = term @ gen / k
            size = np.max(np.abs(term))
            total += term
            if size == 0.0 or size < tol * np.max(np.abs(total)):
                break
        return total

    left = series(xi * ops.create)
    right = series(-np.conj(xi) * ops.annihilate)
    return complex(np.trace(data @ left @ right))


def displacement(alpha: complex, N: int) -> np.ndarray:
    from scipy.linalg import expm

    ops = build_mode_ops(N)
    return expm(alpha * ops.create - np.conj(alpha) * ops.annihilate)


# --- truncation audit ----------------------------------------------------

def initial_dimension(det: DetectorParams, lam: float, omegas) -> int:
    w = max((abs(x) for x in omegas), default=0.0)
    n0 = math.ceil(8 * (det.nbar + 1) + 4 * lam * w / det.gamma_eff)
    return max(n0, thermal_tail_dimension(det.nbar), 2)


def top_population(matrix: np.ndarray, S: int, N: int, levels: int = AUDIT_TOP_LEVELS) -> float:
    pops = np.real(np.einsum("ajaj->j", matrix.reshape(S, N, S, N)))
    return float(np.sum(pops[-levels:]))


def choose_dimension(det: DetectorParams, lam: float, omegas, t: float,
                     controls: Optional[IntegratorControls] = None, n_max: int = 512):
    """Fock dimension for which no diagonal sector pushes population into
    the top levels over ``[0, t]``. Returns ``(N, audit)``.

    Starts at ``ceil(8(nbar+1) + 4 lam max|omega| / gamma_eff)`` and doubles.
    """
    N = initial_dimension(det, lam, omegas)
    history = []
    while True:
        worst = 0.0
        for w in sorted(set(float(x) for x in omegas)):
            spec = LindbladSpec.sector(det, N, lam, w, w)
            peak = [top_population(thermal_state(det.nbar, N).data, 1, N)]
            evolve(thermal_state(det.nbar, N), spec, [t], controls,
                   monitor=lambda _t, m: peak.append(top_population(m, 1, N)))
            worst = max(worst, max(peak))
        history.append({"N": N, "top_population": worst})
        if worst < AUDIT_TOL:
            return N, {"dimension": N, "history": history}
        if 2 * N > n_max:
            raise TruncationError(
                f"truncation audit failed: top-level population {worst:.3e} at N={N}, "
                f"next candidate {2 * N} exceeds n_max={n_max}",
                required_dim=2 * N,
            )
        N *= 2


# --- measurement-sector oracles -----------------------------------------

def sector_evolution(det: DetectorParams, lam: float, omega_m: float, omega_n: float, times,
                     N: int, controls: Optional[IntegratorControls] = None,
                     energy_m=None, energy_n=None):
    """Detector operators ``rho_{m,n}(t)`` from a thermal start, with unit
    initial system element (so the trace is ``chi_{mn}(0,0;t)``)."""
    spec = LindbladSpec.sector(det, N, lam, omega_m, omega_n, energy_m, energy_n)
    return evolve(thermal_state(det.nbar, N), spec, times, controls)


def two_time_trace(det: DetectorParams, lam: float, omega_i: float, omega_f: float, t1: float, t2: float,
                   N: int, controls: Optional[IntegratorControls] = None, energy_i=None, energy_f=None):
    """``Tr{S_{if}(t1 - t2) S_{ii}(t2) rho_T}`` by composing two sector flows."""
    if not 0 <= t2 <= t1:
        raise ParameterError("need 0 <= t2 <= t1")
    ei = omega_i if energy_i is None else energy_i
    ef = omega_f if energy_f is None else energy_f
    spec_ii = LindbladSpec.sector(det, N, lam, omega_i, omega_i, ei, ei)
    (x,) = evolve(thermal_state(det.nbar, N), spec_ii, [t2], controls)
    spec_if = LindbladSpec.sector(det, N, lam, omega_i, omega_f, ei, ef)
    (y,) = evolve(x, spec_if, [t1 - t2], controls)
    return complex(np.trace(y))


# --- jump probabilities --------------------------------------------------

def _resolve_dimension(system, det, t, controls, dim):
    if dim is not None:
        return int(dim), {"dimension": int(dim), "history": []}
    return choose_dimension(det, system.lam, system.h0_diagonal(), t, controls)


def _tail_guard(S, N):
    peak = [0.0]

    def monitor(t, m):
        p = top_population(m, S, N)
        peak[0] = max(peak[0], p)
        if p > DIRECT_TAIL_TOL:
            raise TruncationError(
                f"detector population {p:.3e} reached the top {AUDIT_TOP_LEVELS} Fock levels "
                f"at t={t:.6g} with N={N}; need N >= {2 * N}",
                required_dim=2 * N,
            )
    return monitor, peak


def jump_probability_direct(system: MeasuredSystemSpec, det: DetectorParams, i_state, f_state, t: float,
                            controls: Optional[IntegratorControls] = None, dim: Optional[int] = None,
                            full_output: bool = False):
    """``Tr{|f><f| rho(t)}`` from the full coupled master equation, V included."""
    controls = controls or IntegratorControls()
    N, audit = _resolve_dimension(system, det, t, controls, dim)
    S = len(system.states())
    spec = LindbladSpec.coupled(system, det, N, include_v=True)
    rho0 = product_state(S, system.index(i_state), thermal_state(det.nbar, N))
    monitor, peak = _tail_guard(S, N)
    (m,) = evolve(rho0, spec, [t], controls, monitor=monitor)
    k = system.index(f_state)
    value = float(np.real(np.trace(m.reshape(S, N, S, N)[k, :, k, :])))
    if not full_output:
        return value
    return value, {"dimension": N, "audit": audit, "peak_top_population": peak[0],
                   "trace": complex(np.trace(m))}


def jump_probability_second_order(system: MeasuredSystemSpec, det: DetectorParams, i_state, f_state, t: float,
                                  controls: Optional[IntegratorControls] = None, dim: Optional[int] = None,
                                  full_output: bool = False):
    """Second-order term ``int_0^t dt1 int_0^t1 dt2 Tr{P_f L_V S0(t1-t2) L_V S0(t2) rho0}``.

    Both time integrals are carried by the ODE (Duhamel form)::

        X' = L0 X,   Z' = L0 Z + L_V X,   A' = Tr{P_f L_V Z},

    with ``X(0) = rho0`` and ``Z(0) = A(0) = 0``, so ``A(t)`` is the double
    integral. L0 (V = 0) is block diagonal in the system labels, so only the
    ``(i, i)`` block of X and the ``(f, i)`` block of Z are needed; the
    ``(i, f)`` block is its adjoint. The trailing ``S0(t - t1)`` is dropped
    because it acts inside the trace-preserving ``(f, f)`` sector.
    """
    controls = controls or IntegratorControls()
    i_state, f_state = tuple(i_state), tuple(f_state)
    N, audit = _resolve_dimension(system, det, t, controls, dim)
    v_fi = complex(system.v(f_state, i_state))
    if v_fi == 0:
        return (0.0, {"dimension": N, "audit": audit}) if full_output else 0.0
    e_i = system.omega(i_state) + system.sublevel_energy(i_state)
    e_f = system.omega(f_state) + system.sublevel_energy(f_state)
    lam = system.lam
    args_ii = LindbladSpec.sector(det, N, lam, system.omega(i_state), system.omega(i_state), e_i, e_i).kernel_args()
    args_fi = LindbladSpec.sector(det, N, lam, system.omega(f_state), system.omega(i_state), e_f, e_i).kernel_args()
    kern = _backend.active.lindblad_rhs
    nn = N * N
    shape4 = (1, N, 1, N)
    phase = v_fi / abs(v_fi)
    monitor, peak = _tail_guard(1, N)

    def fun(tau, y):
        x = y[:nn].reshape(shape4)
        z = y[nn:2 * nn].reshape(shape4)
        dy = np.empty_like(y)
        dy[:nn] = kern(x, *args_ii).reshape(-1)
        dy[nn:2 * nn] = kern(z, *args_fi).reshape(-1) - 1j * phase * y[:nn]
        dy[2 * nn] = -2.0 * np.imag(np.conj(phase) * np.trace(z.reshape(N, N)))
        return dy

    def post(tau, y):
        x = y[:nn].reshape(N, N)
        x = 0.5 * (x + x.conj().T)
        monitor(tau, x)
        y = y.copy()
        y[:nn] = x.reshape(-1)
        return y

    y0 = np.zeros(2 * nn + 1, dtype=complex)
    y0[:nn] = thermal_state(det.nbar, N).data.reshape(-1)
    (y,) = _integrate(fun, y0, [t], controls, post)
    value = abs(v_fi) ** 2 * float(np.real(y[2 * nn]))
    if not full_output:
        return value
    return value, {"dimension": N, "audit": audit, "peak_top_population": peak[0],
                   "imag_residue": abs(v_fi) ** 2 * float(np.imag(y[2 * nn]))}


def second_order_terms(system: MeasuredSystemSpec, det: DetectorParams, i_state, f_state,
                       t1: float, t2: float, t: float, dim: int,
                       controls: Optional[IntegratorControls] = None) -> dict:
    """The four pieces of ``Tr{P_f S0(t-t1) L_V S0(t1-t2) L_V S0(t2) rho0}`` at one (t1, t2).

    ``L_V S0 L_V X = -V S0[V X] + V S0[X V] + S0[V X] V - S0[X V] V``; the
    first and last leave the system on the initial level and must vanish
    under the final-state projection. Includes ``S0(t - t1)``.
    """
    if not 0 <= t2 <= t1 <= t:
        raise ParameterError("need 0 <= t2 <= t1 <= t")
    controls = controls or IntegratorControls()
    N = dim
    S = len(system.states())
    spec0 = LindbladSpec.coupled(system, det, N, include_v=False)
    v = np.kron(system.v_matrix(), np.eye(N))
    rho0 = product_state(S, system.index(i_state), thermal_state(det.nbar, N))
    fidx = system.index(f_state)

    def flow(m, dt):
        (out,) = evolve(m, spec0, [dt], controls, hermitian=False)
        return out

    def proj_trace(m):
        return complex(np.trace(m.reshape(S, N, S, N)[fidx, :, fidx, :]))

    x = flow(rho0.data, t2)
    vx = flow(v @ x, t1 - t2)
    xv = flow(x @ v, t1 - t2)
    pieces = {
        "discarded_left": -(v @ vx),
        "kept_left": v @ xv,
        "kept_right": vx @ v,
        "discarded_right": -(xv @ v),
    }
    out = {}
    for name, m in pieces.items():
        out[name] = proj_trace(flow(m, t - t1))
        out[name + "_no_tail"] = proj_trace(m)
    return out
