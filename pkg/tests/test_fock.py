import math

import numpy as np
import pytest

from qzeno import DetectorParams, MeasuredSystemSpec, _backend, fock
from qzeno.errors import ParameterError, TruncationError


def random_hermitian(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return a + a.conj().T


def test_mode_ops_small():
    ops = fock.build_mode_ops(2)
    expected = np.zeros((2, 2))
    expected[0, 1] = 1
    np.testing.assert_array_equal(ops.annihilate, expected)
    ops = fock.build_mode_ops(4)
    assert ops.annihilate[2, 3] == math.sqrt(3)
    np.testing.assert_array_equal(ops.create, ops.annihilate.conj().T)
    np.testing.assert_array_equal(ops.number, ops.create @ ops.annihilate)
    np.testing.assert_array_equal(ops.coordinate, ops.create + ops.annihilate)


def test_mode_ops_commutator_truncation():
    N = 7
    ops = fock.build_mode_ops(N)
    comm = ops.annihilate @ ops.create - ops.create @ ops.annihilate
    expected = np.diag([1.0] * (N - 1) + [-(N - 1.0)])
    assert np.max(np.abs(comm - expected)) < 1e-13


def test_mode_ops_reject():
    with pytest.raises(ParameterError):
        fock.build_mode_ops(1)


def test_thermal_state_examples():
    rho = fock.thermal_state(0.0, 5)
    assert rho.data[0, 0] == 1 and abs(rho.trace() - 1) == 0
    rho = fock.thermal_state(1.0, 40)
    p = rho.fock_populations()
    np.testing.assert_allclose(p[:10], 0.5 ** np.arange(1, 11), rtol=1e-10)
    ops = fock.build_mode_ops(80)
    assert fock.thermal_state(2.0, 80).expect(ops.number).real == pytest.approx(2.0, abs=1e-9)


def test_thermal_state_names_required_dimension():
    with pytest.raises(TruncationError) as info:
        fock.thermal_state(3.0, 40)
    need = info.value.required_dim
    assert str(need) in str(info.value)
    fock.thermal_state(3.0, need)
    with pytest.raises(TruncationError):
        fock.thermal_state(3.0, need - 1)


@pytest.fixture
def det():
    return DetectorParams(omega=0.7, gamma_phase=0.4, gamma_down=1.3, nbar=0.8)


def test_thermal_is_stationary_rhs(det):
    N = 50
    spec = fock.LindbladSpec.detector_only(det, N)
    rho = fock.thermal_state(det.nbar, N)
    assert np.max(np.abs(fock.lindblad_rhs(rho, spec))) < 1e-12
    assert np.max(np.abs(fock.structured_rhs(rho, spec))) < 1e-12


def test_rhs_zero_rates_is_commutator():
    rng = np.random.default_rng(1)
    N = 6
    spec = fock.LindbladSpec(N, 0.9, 0.0, 0.0, 0.0, [[0.0]], [0.3])
    rho = random_hermitian(rng, N)
    h = spec.hamiltonian
    np.testing.assert_allclose(fock.lindblad_rhs(rho, spec), -1j * (h @ rho - rho @ h), atol=1e-13)


def test_rhs_traceless(det):
    rng = np.random.default_rng(2)
    system = MeasuredSystemSpec.two_level(0.6, -0.4, 0.2 + 0.1j, 1.5, e1_f=0.3)
    spec = fock.LindbladSpec.coupled(system, det, 9)
    rho = random_hermitian(rng, 18)
    assert abs(np.trace(fock.lindblad_rhs(rho, spec))) < 1e-12
    assert abs(np.trace(fock.structured_rhs(rho, spec))) < 1e-12


@pytest.mark.parametrize("backend", ["fallback", "compiled"])
def test_kernels_match_dense_reference(backend, det):
    mod = getattr(_backend, backend)
    if mod is None:
        pytest.skip("compiled kernels not built")
    rng = np.random.default_rng(3)
    system = MeasuredSystemSpec(levels={0: 0.4, 1: -0.3, 2: 1.1},
                                v_elements={((0, 0), (1, 0)): 0.2, ((1, 0), (2, 0)): -0.1j}, lam=0.8)
    for spec in (fock.LindbladSpec.coupled(system, det, 11),
                 fock.LindbladSpec.sector(det, 11, 2.0, 1.0, -1.0, 1.3, -0.2)):
        side = spec.dim_system * spec.dim_detector
        rho = rng.normal(size=(side, side)) + 1j * rng.normal(size=(side, side))
        ref = fock.lindblad_rhs(rho, spec)
        got = fock.structured_rhs(rho, spec, backend=mod)
        assert np.max(np.abs(got - ref)) <= 1e-12 * np.max(np.abs(ref))


def test_propagate_zero_time_exact(det):
    rho = fock.thermal_state(det.nbar, 40)
    out = fock.propagate(rho, fock.LindbladSpec.detector_only(det, 40), 0.0)
    np.testing.assert_array_equal(out.data, rho.data)


def test_thermal_stationary_flow(det):
    N = 40
    spec = fock.LindbladSpec.detector_only(det, N)
    rho = fock.thermal_state(det.nbar, N)
    times = np.linspace(0, 10 / det.gamma_eff, 6)
    for m in fock.evolve(rho, spec, times):
        assert np.max(np.abs(m - rho.data)) < 1e-8


def test_single_excitation_decay():
    d = DetectorParams(omega=1.0, gamma_phase=0.5, gamma_down=0.8, nbar=0.0)
    N = 6
    rho = np.zeros((N, N), dtype=complex)
    rho[1, 1] = 1
    ops = fock.build_mode_ops(N)
    times = [0.5, 1.0, 3.0]
    for t, m in zip(times, fock.evolve(rho, fock.LindbladSpec.detector_only(d, N), times)):
        assert np.trace(ops.number @ m).real == pytest.approx(math.exp(-0.8 * t), abs=1e-6)


@pytest.mark.parametrize("alpha", [0.8, 1.2 - 0.5j])
def test_relaxation_law_gaussian_states(det, alpha):
    N = 50
    ops = fock.build_mode_ops(N)
    D = fock.displacement(alpha, N)
    rho0 = D @ fock.thermal_state(0.5, N).data @ D.conj().T
    n0 = np.trace(ops.number @ rho0).real
    times = [0.3, 1.0, 2.5]
    states = fock.evolve(rho0, fock.LindbladSpec.detector_only(det, N), times)
    for t, m in zip(times, states):
        law = det.nbar + (n0 - det.nbar) * math.exp(-det.relaxation_rate * t)
        assert np.trace(ops.number @ m).real == pytest.approx(law, abs=1e-6)
        assert abs(np.trace(m) - 1) < 1e-8
        assert np.max(np.abs(m - m.conj().T)) < 1e-10
        assert np.linalg.eigvalsh(m).min() > -1e-8


def test_char_function_examples():
    rho = fock.thermal_state(1.0, 60)
    assert fock.char_function(rho, 0.0) == pytest.approx(rho.trace(), abs=1e-15)
    assert fock.char_function(rho, 1.0) == pytest.approx(math.exp(-1), abs=1e-9)


def test_char_function_displaced_vacuum():
    N = 60
    alpha = 0.7 + 0.4j
    vac = np.zeros((N, N), dtype=complex)
    vac[0, 0] = 1
    D = fock.displacement(alpha, N)
    rho = D @ vac @ D.conj().T
    for xi in (0.3, -0.2 + 0.5j, 1.1j):
        expected = np.exp(xi * np.conj(alpha) - np.conj(xi) * alpha)
        got = fock.char_function(rho, xi)
        assert abs(got - expected) < 1e-10
        assert abs(got) == pytest.approx(1.0, abs=1e-10)


def test_char_function_guard():
    with pytest.raises(ParameterError, match="smaller"):
        fock.char_function(fock.thermal_state(0.0, 100), 3.0)


def extract_coeffs(m, h=1e-3):
    """C10, C01, C11 and C20 of log chi by central differences in xi."""
    lc = {}
    for a in (-1, 0, 1):
        for b in (-1, 0, 1):
            lc[a, b] = np.log(fock.char_function(m, h * (a + 1j * b)))
    # log chi = C00 + C10 xi - C01 xi* - C11 |xi|^2 + C20 xi^2 + C02 xi*^2 + ...
    d_re = (lc[1, 0] - lc[-1, 0]) / (2 * h)      # C10 - C01
    d_im = (lc[0, 1] - lc[0, -1]) / (2 * h)      # i (C10 + C01)
    c10 = 0.5 * (d_re - 1j * d_im)
    c01 = 0.5 * (-d_re - 1j * d_im)
    s_re = (lc[1, 0] + lc[-1, 0] - 2 * lc[0, 0]) / h ** 2   # 2(-C11 + C20 + C02)
    s_im = (lc[0, 1] + lc[0, -1] - 2 * lc[0, 0]) / h ** 2   # 2(-C11 - C20 - C02)
    mixed = (lc[1, 1] - lc[1, -1] - lc[-1, 1] + lc[-1, -1]) / (4 * h * h)  # 2i (C20 - C02)
    c11 = -(s_re + s_im) / 4
    c20 = 0.5 * ((s_re - s_im) / 4 + mixed / 2j)
    return c10, c01, c11, c20


def test_coefficients_decouple_without_phase_damping():
    from qzeno import charfunc

    d = DetectorParams(omega=0.9, gamma_phase=0.0, gamma_down=1.1, nbar=0.5)
    N = 50
    alpha = 0.6 - 0.3j
    D = fock.displacement(alpha, N)
    rho0 = D @ fock.thermal_state(0.2, N).data @ D.conj().T
    c0 = charfunc.CharCoeffs.coherent(alpha, 0.2)
    times = [0.4, 1.0, 2.0]
    for t, m in zip(times, fock.evolve(rho0, fock.LindbladSpec.detector_only(d, N), times)):
        c = charfunc.free_coeffs(c0, t, d)
        got = extract_coeffs(m)
        for g, key in zip(got, [(1, 0), (0, 1), (1, 1), (2, 0)]):
            assert abs(g - c[key]) < 1e-5, key


def test_direct_v_zero():
    d = DetectorParams(omega=0.3, gamma_phase=0.0, gamma_down=2.0, nbar=0.0)
    system = MeasuredSystemSpec.two_level(0.5, -0.5, 0.0, 2.0)
    assert abs(fock.jump_probability_direct(system, d, (0, 0), (1, 0), 1.0)) < 1e-10
    assert fock.jump_probability_second_order(system, d, (0, 0), (1, 0), 1.0) == 0.0


def test_direct_rabi_without_measurement():
    d = DetectorParams(omega=0.3, gamma_phase=0.0, gamma_down=2.0, nbar=0.0)
    v = 0.4
    system = MeasuredSystemSpec.two_level(0.5, -0.5, v, 0.0, e1_f=1.0)  # resonant
    for t in (0.5, 2.0, 4.0):
        got = fock.jump_probability_direct(system, d, (0, 0), (1, 0), t, dim=8)
        assert got == pytest.approx(math.sin(v * t) ** 2, abs=1e-6)


def test_direct_truncation_guard():
    d = DetectorParams(omega=0.3, gamma_phase=0.0, gamma_down=2.0, nbar=0.0)
    system = MeasuredSystemSpec.two_level(1.0, -1.0, 0.01, 6.0)
    with pytest.raises(TruncationError, match="need N"):
        fock.jump_probability_direct(system, d, (0, 0), (1, 0), 2.0, dim=6)


def test_dimension_audit_doubles():
    d = DetectorParams(omega=0.3, gamma_phase=0.0, gamma_down=10.0, nbar=0.0)
    N, audit = fock.choose_dimension(d, 8.0, [0.5, -0.5], 1.0)
    hist = audit["history"]
    assert hist[0]["N"] == fock.initial_dimension(d, 8.0, [0.5, -0.5])
    assert all(b["N"] == 2 * a["N"] for a, b in zip(hist, hist[1:]))
    assert hist[-1]["top_population"] < fock.AUDIT_TOL and N == hist[-1]["N"]


def test_second_order_is_small_v_limit_of_direct():
    d = DetectorParams(omega=0.3, gamma_phase=0.0, gamma_down=10.0, nbar=0.0)
    devs = []
    for v in (0.2, 0.1, 0.05):
        system = MeasuredSystemSpec.two_level(0.5, -0.5, v, 8.0, e1_f=1.0)
        direct = fock.jump_probability_direct(system, d, (0, 0), (1, 0), 1.0, dim=24)
        second = fock.jump_probability_second_order(system, d, (0, 0), (1, 0), 1.0, dim=24)
        devs.append(abs(direct / second - 1))
    # leading correction is O(V^2): halving V quarters the deviation
    assert devs[0] > devs[1] > devs[2]
    assert devs[1] / devs[2] == pytest.approx(4, rel=0.1)


def test_integrator_controls_validation():
    with pytest.raises(ParameterError):
        fock.IntegratorControls(rtol=0)
    with pytest.raises(ParameterError):
        fock.IntegratorControls(atol=2)
    with pytest.raises(ParameterError):
        fock.IntegratorControls(max_step=0)
