import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qzeno import DetectorParams, charfunc, fock
from qzeno.charfunc import CharCoeffs, LevelPair
from qzeno.errors import ParameterError

DET = DetectorParams(omega=0.3, gamma_phase=0.8, gamma_down=1.5, nbar=0.7)


def test_eval_char_basics():
    c = CharCoeffs({(0, 0): 0.3 - 0.2j})
    assert charfunc.eval_char(c, 0) == pytest.approx(np.exp(0.3 - 0.2j))
    assert charfunc.eval_char(CharCoeffs.thermal(1.5), 1.0) == pytest.approx(math.exp(-1.5))


def test_coeffs_reject_negative_index():
    with pytest.raises(ParameterError):
        CharCoeffs({(-1, 0): 1.0})


def test_free_zero_time_is_identity():
    c0 = CharCoeffs({(1, 0): 0.2 + 0.1j, (0, 1): 0.2 - 0.1j, (1, 1): 0.4, (2, 0): 0.05j})
    c = charfunc.free_coeffs(c0, 0.0, DET)
    for key, v in c0.items():
        assert c[key] == v


def test_free_long_time_is_thermal():
    c0 = CharCoeffs({(1, 0): 0.5, (0, 1): 0.5, (1, 1): 2.0, (2, 1): 0.1, (3, 0): 0.2})
    c = charfunc.free_coeffs(c0, 200.0, DET)
    assert c[(1, 1)] == pytest.approx(DET.nbar, abs=1e-12)
    for key in [(1, 0), (0, 1), (2, 1), (3, 0)]:
        assert abs(c[key]) < 1e-12
    assert charfunc.eval_char(c, 0.7) == pytest.approx(math.exp(-0.49 * DET.nbar), rel=1e-12)


def test_free_c20_decay_rate():
    t = 0.9
    c = charfunc.free_coeffs(CharCoeffs({(2, 0): 1.0}), t, DET)
    expected = math.exp(-(2 * DET.gamma_phase + DET.relaxation_rate) * t)
    assert abs(c[(2, 0)]) == pytest.approx(expected, rel=1e-14)


def test_free_thermal_fixed_point():
    c0 = CharCoeffs.thermal(DET.nbar)
    c = charfunc.free_coeffs(c0, 3.7, DET)
    assert c[(1, 1)] == pytest.approx(DET.nbar, rel=1e-15)


coeff_values = st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(c10=coeff_values, c21=coeff_values, c11=st.floats(0, 3), t1=st.floats(0, 5), t2=st.floats(0, 5))
def test_free_semigroup(c10, c21, c11, t1, t2):
    c0 = CharCoeffs({(1, 0): c10, (0, 1): np.conj(c10), (1, 1): c11, (2, 1): c21})
    a = charfunc.free_coeffs(charfunc.free_coeffs(c0, t1, DET), t2, DET)
    b = charfunc.free_coeffs(c0, t1 + t2, DET)
    for key in b.coeffs:
        assert abs(a[key] - b[key]) <= 1e-12 * max(1.0, abs(b[key]))


@settings(max_examples=40, deadline=None)
@given(alpha=coeff_values, nbar=st.floats(0, 3), xi=coeff_values)
def test_conjugation_symmetry_physical_states(alpha, nbar, xi):
    c = CharCoeffs.coherent(alpha, nbar)
    assert c.conjugation_defect() == 0
    # C_kj = conj(C_jk)  <=>  chi(xi)^* = chi(-xi)
    assert abs(np.conj(charfunc.eval_char(c, xi)) - charfunc.eval_char(c, -xi)) <= 1e-12 * max(
        1.0, abs(charfunc.eval_char(c, xi)))


def test_conjugation_symmetry_oracle_states():
    rng = np.random.default_rng(5)
    N = 12
    a = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N))
    rho = a @ a.conj().T
    rho /= np.trace(rho)
    for xi in (0.3, 0.2 - 0.4j, 0.5j):
        assert abs(np.conj(fock.char_function(rho, xi)) - fock.char_function(rho, -xi)) < 1e-13


def test_measurement_no_coupling():
    pair = LevelPair(0, 1, 1.0, -1.0)
    c = charfunc.measurement_coeffs(pair, 0.0, 1.3, DET)
    assert c[(1, 0)] == 0 and c[(0, 1)] == 0
    assert c[(0, 0)] == pytest.approx(-2j * 1.3)
    assert c[(1, 1)] == DET.nbar


@pytest.mark.parametrize("t", [0.0, 0.1, 2.0, 30.0])
def test_measurement_diagonal_untouched(t):
    c = charfunc.measurement_coeffs(LevelPair(1, 1, 0.7, 0.7), 5.0, t, DET)
    assert c[(0, 0)] == 0


def test_measurement_rejects_negative_time():
    with pytest.raises(ParameterError):
        charfunc.measurement_coeffs(LevelPair(0, 1, 1.0, -1.0), 1.0, -0.1, DET)


def test_c00_vectorized_matches_scalar():
    pair = LevelPair(0, 1, 1.0, -0.4)
    ts = np.linspace(0, 3, 7)
    vec = charfunc.c00_measurement(pair, 2.5, ts, DET)
    for t, v in zip(ts, vec):
        assert v == pytest.approx(charfunc.measurement_coeffs(pair, 2.5, t, DET)[(0, 0)], rel=1e-14, abs=1e-15)


# Oracle equivalence. The coefficient equations are exact when the phase-damping
# rate is zero; the grid below covers the remaining parameters.
GRID = [
    # lam, omega, gamma_down, nbar, omega_m, omega_n
    (5.0, 0.3, 12.0, 1.0, 1.0, -1.0),
    (1.0, 0.2, 3.0, 0.0, 0.5, -0.5),
    (2.0, 2.5, 2.0, 0.5, 1.0, 0.2),
    (0.5, 0.1, 1.0, 2.0, -0.3, 1.2),
]


def _times_for(pair, lam, det):
    # keep |chi| above ~1e-4 so relative errors are meaningful
    rate = charfunc.decoherence_rate(pair, lam, det)
    t_end = min(2.0, 9.0 / rate ** 0.5 if rate > 0 else 2.0, 9.0 / rate if rate > 0 else 2.0)
    return list(np.linspace(t_end / 5, t_end, 5))


@pytest.mark.parametrize("lam, omega, gamma_down, nbar, wm, wn", GRID)
def test_measurement_matches_oracle(lam, omega, gamma_down, nbar, wm, wn):
    det = DetectorParams(omega, 0.0, gamma_down, nbar)
    pair = LevelPair(0, 1, wm, wn)
    times = _times_for(pair, lam, det)
    N, _ = fock.choose_dimension(det, lam, [wm, wn], max(times))
    ctl = fock.IntegratorControls(rtol=1e-11, atol=1e-16)
    states = fock.sector_evolution(det, lam, wm, wn, times, N, ctl)
    xis = [0.0, 0.25, -0.2j, 0.15 + 0.15j, -0.3]
    for t, m in zip(times, states):
        c = charfunc.measurement_coeffs(pair, lam, t, det)
        for xi in xis:
            a, o = charfunc.eval_char(c, xi), fock.char_function(m, xi)
            assert abs(a - o) <= 1e-6 * abs(o), (t, xi)


def test_measurement_generic_point_absolute():
    # lam=5, omega_m=1, omega_n=-1, Omega=0.3, gamma_eff=3, nbar=1, t=2: chi ~ 1e-72,
    # so only an absolute comparison is meaningful there
    det = DetectorParams(0.3, 0.0, 12.0, 1.0)
    assert det.gamma_eff == 3.0
    pair = LevelPair(0, 1, 1.0, -1.0)
    (m,) = fock.sector_evolution(det, 5.0, 1.0, -1.0, [2.0], 68)
    a = charfunc.eval_char(charfunc.measurement_coeffs(pair, 5.0, 2.0, det), 0.0)
    assert abs(a - np.trace(m)) < 1e-6
    assert abs(a) < 1e-60


def test_phase_damping_breaks_linear_coefficients():
    # Pure phase damping conserves <n>; the linear coefficient solution shrinks
    # |C01|^2 = |<b>|^2 without feeding C11, so it predicts <n> decays.
    d = DetectorParams(omega=1.0, gamma_phase=2.0, gamma_down=0.0, nbar=0.0)
    N = 40
    alpha = 1.5
    D = fock.displacement(alpha, N)
    vac = np.zeros((N, N), dtype=complex)
    vac[0, 0] = 1
    rho0 = D @ vac @ D.conj().T
    ops = fock.build_mode_ops(N)
    t = 0.5
    (m,) = fock.evolve(rho0, fock.LindbladSpec.detector_only(d, N), [t])
    c = charfunc.free_coeffs(CharCoeffs.coherent(alpha), t, d)
    n_oracle = np.trace(ops.number @ m).real
    n_linear = c[(1, 1)].real + abs(c[(0, 1)]) ** 2
    assert n_oracle == pytest.approx(alpha ** 2, rel=1e-8)
    assert n_linear == pytest.approx(alpha ** 2 * math.exp(-d.gamma_phase * t), rel=1e-12)
    # first moment still follows the linear law
    assert np.trace(ops.annihilate @ m) == pytest.approx(c[(0, 1)], rel=1e-8)


def test_phase_damping_measurement_discrepancy_is_visible():
    det = DetectorParams(0.2, 6.0, 2.0, 1.0)
    pair = LevelPair(0, 1, 1.0, -1.0)
    times = [0.05, 0.2]
    states = fock.sector_evolution(det, 5.0, 1.0, -1.0, times, 68,
                                   fock.IntegratorControls(rtol=1e-11, atol=1e-16))
    errs = [abs(charfunc.eval_char(charfunc.measurement_coeffs(pair, 5.0, t, det), 0) / np.trace(m) - 1)
            for t, m in zip(times, states)]
    # grows with time, far above integration error
    assert 1e-5 < errs[0] < errs[1]
    assert errs[1] > 0.1


def test_offdiag_suppression_limits():
    pair = LevelPair(0, 1, 1.0, -1.0)
    assert charfunc.offdiag_suppression(pair, 3.0, 0.0, DET) == 1.0
    np.testing.assert_array_equal(charfunc.offdiag_suppression(pair, 0.0, np.linspace(0, 5, 6), DET), 1.0)
    s = charfunc.offdiag_suppression(pair, 3.0, np.linspace(0.01, 5, 50), DET)
    assert np.all((s > 0) & (s <= 1))
    with pytest.raises(ParameterError):
        charfunc.offdiag_suppression(LevelPair(1, 1, 0.5, 0.5), 1.0, 1.0, DET)


def test_decoherence_slope_matches_oracle_fit():
    det = DetectorParams(omega=0.4, gamma_phase=0.0, gamma_down=4.0, nbar=0.5)
    pair = LevelPair(0, 1, 0.5, -0.5)
    lam = 0.6
    g = det.gamma_eff
    times = np.linspace(5 / g, 20 / g, 16)
    N, _ = fock.choose_dimension(det, lam, [0.5, -0.5], times[-1])
    states = fock.sector_evolution(det, lam, 0.5, -0.5, times, N, fock.IntegratorControls(rtol=1e-11, atol=1e-16))
    y = -np.log(np.abs([np.trace(m) for m in states]))
    slope = np.polyfit(times, y, 1)[0]
    assert slope == pytest.approx(charfunc.decoherence_rate(pair, lam, det), rel=1e-3)
